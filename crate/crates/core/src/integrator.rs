//! Dormand–Prince 8(5,3) with 7th-order dense output.
//!
//! Stage layout and step-size control follow Hairer's `DOP853`. Each accepted
//! step stores eight continuous-output coefficient vectors so the solution can
//! be evaluated anywhere inside the integration span.

// the tableau is kept digit for digit as published
#![allow(clippy::excessive_precision)]

use crate::error::{HamError, Result};

/// Step-size and tolerance controls.
#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on |h|. `f64::INFINITY` disables it.
    pub h_max: f64,
    pub max_steps: usize,
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { rtol: tol, atol: tol, ..Self::default() }
    }

    pub fn h_max(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self
    }
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-12, atol: 1e-12, h_max: f64::INFINITY, max_steps: 500_000 }
    }
}

/// What the step hook asks the driver to do after an accepted step.
pub enum StepAction {
    Continue,
    /// Replace the current state (chart switch, re-orthogonalisation).
    Replace(Vec<f64>),
    Stop,
}

/// Continuous output on one accepted step `[t0, t0 + h]`.
#[derive(Debug, Clone)]
pub struct DenseStep {
    pub t0: f64,
    pub h: f64,
    cont: [Vec<f64>; 8],
    /// Opaque tag supplied by the caller, e.g. the active chart.
    pub tag: usize,
}

impl DenseStep {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn contains(&self, t: f64) -> bool {
        let (a, b) = if self.h >= 0.0 { (self.t0, self.t1()) } else { (self.t1(), self.t0) };
        t >= a && t <= b
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        let c = &self.cont;
        for i in 0..out.len() {
            let conpar = c[4][i] + s * (c[5][i] + s1 * (c[6][i] + s * c[7][i]));
            out[i] = c[0][i] + s * (c[1][i] + s1 * (c[2][i] + s * (c[3][i] + s1 * conpar)));
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.cont[0].len()];
        self.eval_into(t, &mut out);
        out
    }
}

/// Piecewise dense solution produced by [`integrate`].
#[derive(Debug, Clone)]
pub struct DenseSolution {
    pub t_start: f64,
    pub t_end: f64,
    pub y_start: Vec<f64>,
    pub y_end: Vec<f64>,
    pub steps: Vec<DenseStep>,
    pub n_eval: usize,
    pub n_reject: usize,
    /// True when the hook stopped the integration before the requested end.
    pub stopped: bool,
}

impl DenseSolution {
    fn forward(&self) -> bool {
        self.t_end >= self.t_start
    }

    /// Index of the step covering `t`, clamped to the span.
    pub fn step_index(&self, t: f64) -> usize {
        if self.steps.is_empty() {
            return 0;
        }
        let fwd = self.forward();
        // first step whose far end reaches t
        let idx = self.steps.partition_point(|s| if fwd { s.t1() < t } else { s.t1() > t });
        idx.min(self.steps.len() - 1)
    }

    pub fn covers(&self, t: f64) -> bool {
        let (a, b) = if self.forward() { (self.t_start, self.t_end) } else { (self.t_end, self.t_start) };
        t >= a - 1e-14 * (1.0 + a.abs()) && t <= b + 1e-14 * (1.0 + b.abs())
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        if self.steps.is_empty() {
            out.copy_from_slice(&self.y_start);
            return;
        }
        self.steps[self.step_index(t)].eval_into(t, out);
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.y_start.len()];
        self.eval_into(t, &mut out);
        out
    }

    pub fn tag_at(&self, t: f64) -> usize {
        if self.steps.is_empty() {
            return 0;
        }
        self.steps[self.step_index(t)].tag
    }
}

fn weighted_rms(v: &[f64], sk: &[f64]) -> f64 {
    let n = v.len().max(1) as f64;
    (v.iter().zip(sk).map(|(a, s)| (a / s) * (a / s)).sum::<f64>() / n).sqrt()
}

/// Integrates `y' = f(t, y)` from `t0` to `t1` (either direction).
///
/// `hook(step, y)` runs after every accepted step; `tag` is stamped on the
/// stored step and may be updated by the hook through the `&mut usize`.
pub fn integrate<F, H>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    t1: f64,
    opts: &OdeOptions,
    tag0: usize,
    mut hook: H,
) -> Result<DenseSolution>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    H: FnMut(&DenseStep, &[f64], &mut usize) -> StepAction,
{
    let n = y0.len();
    let mut sol = DenseSolution {
        t_start: t0,
        t_end: t1,
        y_start: y0.to_vec(),
        y_end: y0.to_vec(),
        steps: Vec::new(),
        n_eval: 0,
        n_reject: 0,
        stopped: false,
    };
    if t1 == t0 {
        return Ok(sol);
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(HamError::OutOfDomain("non-finite initial state".into()));
    }
    let dir = if t1 > t0 { 1.0 } else { -1.0 };
    let mut tag = tag0;
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 17];
    let mut ytmp = vec![0.0; n];
    let mut sk = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut e1 = vec![0.0; n];
    let mut e2 = vec![0.0; n];

    f(t, &y, &mut k[1]);
    sol.n_eval += 1;

    // initial step guess
    let mut h = {
        for i in 0..n {
            sk[i] = opts.atol + opts.rtol * y[i].abs();
        }
        let d0 = weighted_rms(&y, &sk);
        let d1 = weighted_rms(&k[1], &sk);
        let mut h0 = if d0 < 1e-10 || d1 < 1e-10 { 1e-6 } else { 0.01 * d0 / d1 };
        h0 = h0.min(opts.h_max).min((t1 - t0).abs());
        for i in 0..n {
            ytmp[i] = y[i] + dir * h0 * k[1][i];
        }
        f(t + dir * h0, &ytmp, &mut k[2]);
        sol.n_eval += 1;
        let diff: Vec<f64> = (0..n).map(|i| k[2][i] - k[1][i]).collect();
        let d2 = weighted_rms(&diff, &sk) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(1.0 / 8.0)
        };
        dir * (100.0 * h0).min(h1).min(opts.h_max).min((t1 - t0).abs())
    };
    if !h.is_finite() || h == 0.0 {
        h = dir * 1e-6;
    }

    let mut last_rejected = false;
    let mut nstep = 0usize;
    let safe = 0.9;
    let (facc1, facc2) = (1.0 / 0.333, 1.0 / 6.0);

    loop {
        if nstep >= opts.max_steps {
            return Err(HamError::StepUnderflow { t, reason: "maximum step count reached".into() });
        }
        let mut last = false;
        if (t + 1.01 * h - t1) * dir >= 0.0 {
            h = t1 - t;
            last = true;
        }
        if h.abs() <= 1e-14 * t.abs().max(1.0) {
            return Err(HamError::StepUnderflow { t, reason: format!("step size {h:e} below resolution") });
        }
        nstep += 1;

        macro_rules! stage {
            ($dst:expr, $c:expr, [$(($a:expr, $j:expr)),*]) => {{
                for i in 0..n {
                    ytmp[i] = y[i] + h * (0.0 $(+ $a * k[$j][i])*);
                }
                f(t + $c * h, &ytmp, &mut k[$dst]);
            }};
        }
        stage!(2, C2, [(A21, 1)]);
        stage!(3, C3, [(A31, 1), (A32, 2)]);
        stage!(4, C4, [(A41, 1), (A43, 3)]);
        stage!(5, C5, [(A51, 1), (A53, 3), (A54, 4)]);
        stage!(6, C6, [(A61, 1), (A64, 4), (A65, 5)]);
        stage!(7, C7, [(A71, 1), (A74, 4), (A75, 5), (A76, 6)]);
        stage!(8, C8, [(A81, 1), (A84, 4), (A85, 5), (A86, 6), (A87, 7)]);
        stage!(9, C9, [(A91, 1), (A94, 4), (A95, 5), (A96, 6), (A97, 7), (A98, 8)]);
        stage!(10, C10, [(A101, 1), (A104, 4), (A105, 5), (A106, 6), (A107, 7), (A108, 8), (A109, 9)]);
        stage!(11, C11, [(A111, 1), (A114, 4), (A115, 5), (A116, 6), (A117, 7), (A118, 8), (A119, 9), (A1110, 10)]);
        stage!(12, 1.0, [(A121, 1), (A124, 4), (A125, 5), (A126, 6), (A127, 7), (A128, 8), (A129, 9), (A1210, 10), (A1211, 11)]);
        sol.n_eval += 11;

        for i in 0..n {
            let incr = B1 * k[1][i] + B6 * k[6][i] + B7 * k[7][i] + B8 * k[8][i] + B9 * k[9][i]
                + B10 * k[10][i] + B11 * k[11][i] + B12 * k[12][i];
            ynew[i] = y[i] + h * incr;
            sk[i] = opts.atol + opts.rtol * y[i].abs().max(ynew[i].abs());
            e2[i] = incr - BHH1 * k[1][i] - BHH2 * k[9][i] - BHH3 * k[12][i];
            e1[i] = ER1 * k[1][i] + ER6 * k[6][i] + ER7 * k[7][i] + ER8 * k[8][i] + ER9 * k[9][i]
                + ER10 * k[10][i] + ER11 * k[11][i] + ER12 * k[12][i];
        }
        let mut err = 0.0;
        let mut err2 = 0.0;
        for i in 0..n {
            err += (e1[i] / sk[i]).powi(2);
            err2 += (e2[i] / sk[i]).powi(2);
        }
        let mut deno = err + 0.01 * err2;
        if deno <= 0.0 {
            deno = 1.0;
        }
        let err = h.abs() * err * (1.0 / (n as f64 * deno)).sqrt();

        if !err.is_finite() {
            // stage left the domain of f
            h *= 0.25;
            last_rejected = true;
            sol.n_reject += 1;
            continue;
        }

        let fac11 = err.powf(1.0 / 8.0);
        let fac = (fac11 / safe).clamp(facc2, facc1);
        let mut hnew = h / fac;

        if err <= 1.0 {
            // derivative at the new point (stage 13)
            f(t + h, &ynew, &mut k[13]);
            sol.n_eval += 1;

            let mut cont: [Vec<f64>; 8] = Default::default();
            for c in cont.iter_mut() {
                *c = vec![0.0; n];
            }
            for i in 0..n {
                let ydiff = ynew[i] - y[i];
                let bspl = h * k[1][i] - ydiff;
                cont[0][i] = y[i];
                cont[1][i] = ydiff;
                cont[2][i] = bspl;
                cont[3][i] = ydiff - h * k[13][i] - bspl;
                cont[4][i] = D41 * k[1][i] + D46 * k[6][i] + D47 * k[7][i] + D48 * k[8][i] + D49 * k[9][i]
                    + D410 * k[10][i] + D411 * k[11][i] + D412 * k[12][i];
                cont[5][i] = D51 * k[1][i] + D56 * k[6][i] + D57 * k[7][i] + D58 * k[8][i] + D59 * k[9][i]
                    + D510 * k[10][i] + D511 * k[11][i] + D512 * k[12][i];
                cont[6][i] = D61 * k[1][i] + D66 * k[6][i] + D67 * k[7][i] + D68 * k[8][i] + D69 * k[9][i]
                    + D610 * k[10][i] + D611 * k[11][i] + D612 * k[12][i];
                cont[7][i] = D71 * k[1][i] + D76 * k[6][i] + D77 * k[7][i] + D78 * k[8][i] + D79 * k[9][i]
                    + D710 * k[10][i] + D711 * k[11][i] + D712 * k[12][i];
            }
            stage!(14, C14, [(A141, 1), (A147, 7), (A148, 8), (A149, 9), (A1410, 10), (A1411, 11), (A1412, 12), (A1413, 13)]);
            stage!(15, C15, [(A151, 1), (A156, 6), (A157, 7), (A158, 8), (A1511, 11), (A1512, 12), (A1513, 13), (A1514, 14)]);
            stage!(16, C16, [(A161, 1), (A166, 6), (A167, 7), (A168, 8), (A169, 9), (A1613, 13), (A1614, 14), (A1615, 15)]);
            sol.n_eval += 3;
            for i in 0..n {
                cont[4][i] = h * (cont[4][i] + D413 * k[13][i] + D414 * k[14][i] + D415 * k[15][i] + D416 * k[16][i]);
                cont[5][i] = h * (cont[5][i] + D513 * k[13][i] + D514 * k[14][i] + D515 * k[15][i] + D516 * k[16][i]);
                cont[6][i] = h * (cont[6][i] + D613 * k[13][i] + D614 * k[14][i] + D615 * k[15][i] + D616 * k[16][i]);
                cont[7][i] = h * (cont[7][i] + D713 * k[13][i] + D714 * k[14][i] + D715 * k[15][i] + D716 * k[16][i]);
            }
            let step = DenseStep { t0: t, h, cont, tag };
            t += h;
            y.copy_from_slice(&ynew);
            let fsal = std::mem::take(&mut k[13]);
            k[1] = fsal;
            k[13] = vec![0.0; n];

            let action = hook(&step, &y, &mut tag);
            sol.steps.push(step);
            match action {
                StepAction::Continue => {}
                StepAction::Replace(ny) => {
                    y = ny;
                    f(t, &y, &mut k[1]);
                    sol.n_eval += 1;
                }
                StepAction::Stop => {
                    sol.stopped = true;
                    sol.t_end = t;
                    sol.y_end = y;
                    return Ok(sol);
                }
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(HamError::OutOfDomain(format!("state became non-finite at t = {t}")));
            }
            if last {
                sol.t_end = t1;
                sol.y_end = y;
                return Ok(sol);
            }
            if hnew.abs() > opts.h_max {
                hnew = dir * opts.h_max;
            }
            if last_rejected {
                hnew = dir * hnew.abs().min(h.abs());
            }
            last_rejected = false;
            h = hnew;
        } else {
            hnew = h / facc1.min(fac11 / safe);
            last_rejected = true;
            sol.n_reject += 1;
            h = hnew;
        }
    }
}

/// Convenience wrapper without a hook.
pub fn integrate_plain<F>(f: F, t0: f64, y0: &[f64], t1: f64, opts: &OdeOptions) -> Result<DenseSolution>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    integrate(f, t0, y0, t1, opts, 0, |_, _, _| StepAction::Continue)
}

/// Two dense solutions sharing the initial point, covering `[t_lo, t_hi]`.
#[derive(Debug, Clone)]
pub struct TwoSided {
    pub backward: DenseSolution,
    pub forward: DenseSolution,
}

impl TwoSided {
    pub fn t_lo(&self) -> f64 {
        self.backward.t_end
    }
    pub fn t_hi(&self) -> f64 {
        self.forward.t_end
    }
    pub fn origin(&self) -> f64 {
        self.forward.t_start
    }
    pub fn side(&self, t: f64) -> &DenseSolution {
        if t >= self.origin() { &self.forward } else { &self.backward }
    }
    pub fn eval(&self, t: f64) -> Vec<f64> {
        self.side(t).eval(t)
    }
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        self.side(t).eval_into(t, out)
    }
    pub fn tag_at(&self, t: f64) -> usize {
        self.side(t).tag_at(t)
    }
}

pub fn integrate_two_sided<F>(mut f: F, t0: f64, y0: &[f64], t_lo: f64, t_hi: f64, opts: &OdeOptions) -> Result<TwoSided>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let forward = integrate_plain(&mut f, t0, y0, t_hi, opts)?;
    let backward = integrate_plain(&mut f, t0, y0, t_lo, opts)?;
    Ok(TwoSided { backward, forward })
}

// DOP853 tableau (Hairer & Wanner)
const A21: f64 = 5.26001519587677318785587544488E-2;
const A31: f64 = 1.97250569845378994544595329183E-2;
const A32: f64 = 5.91751709536136983633785987549E-2;
const A41: f64 = 2.95875854768068491816892993775E-2;
const A43: f64 = 8.87627564304205475450678981324E-2;
const A51: f64 = 2.41365134159266685502369798665E-1;
const A53: f64 = -8.84549479328286085344864962717E-1;
const A54: f64 = 9.24834003261792003115737966543E-1;
const A61: f64 = 3.7037037037037037037037037037E-2;
const A64: f64 = 1.70828608729473871279604482173E-1;
const A65: f64 = 1.25467687566822425016691814123E-1;
const A71: f64 = 3.7109375E-2;
const A74: f64 = 1.70252211019544039314978060272E-1;
const A75: f64 = 6.02165389804559606850219397283E-2;
const A76: f64 = -1.7578125E-2;
const A81: f64 = 3.70920001185047927108779319836E-2;
const A84: f64 = 1.70383925712239993810214054705E-1;
const A85: f64 = 1.07262030446373284651809199168E-1;
const A86: f64 = -1.53194377486244017527936158236E-2;
const A87: f64 = 8.27378916381402288758473766002E-3;
const A91: f64 = 6.24110958716075717114429577812E-1;
const A94: f64 = -3.36089262944694129406857109825E0;
const A95: f64 = -8.68219346841726006818189891453E-1;
const A96: f64 = 2.75920996994467083049415600797E1;
const A97: f64 = 2.01540675504778934086186788979E1;
const A98: f64 = -4.34898841810699588477366255144E1;
const A101: f64 = 4.77662536438264365890433908527E-1;
const A104: f64 = -2.48811461997166764192642586468E0;
const A105: f64 = -5.90290826836842996371446475743E-1;
const A106: f64 = 2.12300514481811942347288949897E1;
const A107: f64 = 1.52792336328824235832596922938E1;
const A108: f64 = -3.32882109689848629194453265587E1;
const A109: f64 = -2.03312017085086261358222928593E-2;
const A111: f64 = -9.3714243008598732571704021658E-1;
const A114: f64 = 5.18637242884406370830023853209E0;
const A115: f64 = 1.09143734899672957818500254654E0;
const A116: f64 = -8.14978701074692612513997267357E0;
const A117: f64 = -1.85200656599969598641566180701E1;
const A118: f64 = 2.27394870993505042818970056734E1;
const A119: f64 = 2.49360555267965238987089396762E0;
const A1110: f64 = -3.0467644718982195003823669022E0;
const A121: f64 = 2.27331014751653820792359768449E0;
const A124: f64 = -1.05344954667372501984066689879E1;
const A125: f64 = -2.00087205822486249909675718444E0;
const A126: f64 = -1.79589318631187989172765950534E1;
const A127: f64 = 2.79488845294199600508499808837E1;
const A128: f64 = -2.85899827713502369474065508674E0;
const A129: f64 = -8.87285693353062954433549289258E0;
const A1210: f64 = 1.23605671757943030647266201528E1;
const A1211: f64 = 6.43392746015763530355970484046E-1;
const A141: f64 = 5.61675022830479523392909219681E-2;
const A147: f64 = 2.53500210216624811088794765333E-1;
const A148: f64 = -2.46239037470802489917441475441E-1;
const A149: f64 = -1.24191423263816360469010140626E-1;
const A1410: f64 = 1.5329179827876569731206322685E-1;
const A1411: f64 = 8.20105229563468988491666602057E-3;
const A1412: f64 = 7.56789766054569976138603589584E-3;
const A1413: f64 = -8.298E-3;
const A151: f64 = 3.18346481635021405060768473261E-2;
const A156: f64 = 2.83009096723667755288322961402E-2;
const A157: f64 = 5.35419883074385676223797384372E-2;
const A158: f64 = -5.49237485713909884646569340306E-2;
const A1511: f64 = -1.08347328697249322858509316994E-4;
const A1512: f64 = 3.82571090835658412954920192323E-4;
const A1513: f64 = -3.40465008687404560802977114492E-4;
const A1514: f64 = 1.41312443674632500278074618366E-1;
const A161: f64 = -4.28896301583791923408573538692E-1;
const A166: f64 = -4.69762141536116384314449447206E0;
const A167: f64 = 7.68342119606259904184240953878E0;
const A168: f64 = 4.06898981839711007970213554331E0;
const A169: f64 = 3.56727187455281109270669543021E-1;
const A1613: f64 = -1.39902416515901462129418009734E-3;
const A1614: f64 = 2.9475147891527723389556272149E0;
const A1615: f64 = -9.15095847217987001081870187138E0;

const B1: f64 = 5.42937341165687622380535766363E-2;
const B6: f64 = 4.45031289275240888144113950566E0;
const B7: f64 = 1.89151789931450038304281599044E0;
const B8: f64 = -5.8012039600105847814672114227E0;
const B9: f64 = 3.1116436695781989440891606237E-1;
const B10: f64 = -1.52160949662516078556178806805E-1;
const B11: f64 = 2.01365400804030348374776537501E-1;
const B12: f64 = 4.47106157277725905176885569043E-2;

const BHH1: f64 = 0.244094488188976377952755905512E+00;
const BHH2: f64 = 0.733846688281611857341361741547E+00;
const BHH3: f64 = 0.220588235294117647058823529412E-01;

const C2: f64 = 0.526001519587677318785587544488E-01;
const C3: f64 = 0.789002279381515978178381316732E-01;
const C4: f64 = 0.118350341907227396726757197510E+00;
const C5: f64 = 0.281649658092772603273242802490E+00;
const C6: f64 = 0.333333333333333333333333333333E+00;
const C7: f64 = 0.25E+00;
const C8: f64 = 0.307692307692307692307692307692E+00;
const C9: f64 = 0.651282051282051282051282051282E+00;
const C10: f64 = 0.6E+00;
const C11: f64 = 0.857142857142857142857142857142E+00;
const C14: f64 = 0.1E+00;
const C15: f64 = 0.2E+00;
const C16: f64 = 0.777777777777777777777777777778E+00;

const ER1: f64 = 0.1312004499419488073250102996E-01;
const ER6: f64 = -0.1225156446376204440720569753E+01;
const ER7: f64 = -0.4957589496572501915214079952E+00;
const ER8: f64 = 0.1664377182454986536961530415E+01;
const ER9: f64 = -0.3503288487499736816886487290E+00;
const ER10: f64 = 0.3341791187130174790297318841E+00;
const ER11: f64 = 0.8192320648511571246570742613E-01;
const ER12: f64 = -0.2235530786388629525884427845E-01;

const D41: f64 = -0.84289382761090128651353491142E+01;
const D46: f64 = 0.56671495351937776962531783590E+00;
const D47: f64 = -0.30689499459498916912797304727E+01;
const D48: f64 = 0.23846676565120698287728149680E+01;
const D49: f64 = 0.21170345824450282767155149946E+01;
const D410: f64 = -0.87139158377797299206789907490E+00;
const D411: f64 = 0.22404374302607882758541771650E+01;
const D412: f64 = 0.63157877876946881815570249290E+00;
const D413: f64 = -0.88990336451333310820698117400E-01;
const D414: f64 = 0.18148505520854727256656404962E+02;
const D415: f64 = -0.91946323924783554000451984436E+01;
const D416: f64 = -0.44360363875948939664310572000E+01;
const D51: f64 = 0.10427508642579134603413151009E+02;
const D56: f64 = 0.24228349177525818288430175319E+03;
const D57: f64 = 0.16520045171727028198505394887E+03;
const D58: f64 = -0.37454675472269020279518312152E+03;
const D59: f64 = -0.22113666853125306036270938578E+02;
const D510: f64 = 0.77334326684722638389603898808E+01;
const D511: f64 = -0.30674084731089398182061213626E+02;
const D512: f64 = -0.93321305264302278729567221706E+01;
const D513: f64 = 0.15697238121770843886131091075E+02;
const D514: f64 = -0.31139403219565177677282850411E+02;
const D515: f64 = -0.93529243588444783865713862664E+01;
const D516: f64 = 0.35816841486394083752465898540E+02;
const D61: f64 = 0.19985053242002433820987653617E+02;
const D66: f64 = -0.38703730874935176555105901742E+03;
const D67: f64 = -0.18917813819516756882830838328E+03;
const D68: f64 = 0.52780815920542364900561016686E+03;
const D69: f64 = -0.11573902539959630126141871134E+02;
const D610: f64 = 0.68812326946963000169666922661E+01;
const D611: f64 = -0.10006050966910838403183860980E+01;
const D612: f64 = 0.77771377980534432092869265740E+00;
const D613: f64 = -0.27782057523535084065932004339E+01;
const D614: f64 = -0.60196695231264120758267380846E+02;
const D615: f64 = 0.84320405506677161018159903784E+02;
const D616: f64 = 0.11992291136182789328035130030E+02;
const D71: f64 = -0.25693933462703749003312586129E+02;
const D76: f64 = -0.15418974869023643374053993627E+03;
const D77: f64 = -0.23152937917604549567536039109E+03;
const D78: f64 = 0.35763911791061412378285349910E+03;
const D79: f64 = 0.93405324183624310003907691704E+02;
const D710: f64 = -0.37458323136451633156875139351E+02;
const D711: f64 = 0.10409964950896230045147246184E+03;
const D712: f64 = 0.29840293426660503123344363579E+02;
const D713: f64 = -0.43533456590011143754432175058E+02;
const D714: f64 = 0.96324553959188282948394950600E+02;
const D715: f64 = -0.39177261675615439165231486172E+02;
const D716: f64 = -0.14972683625798562581422125276E+03;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_and_dense_output() {
        let opts = OdeOptions::with_tol(1e-12);
        let sol = integrate_plain(|_, y, dy| dy[0] = y[0], 0.0, &[1.0], 3.0, &opts).unwrap();
        assert!((sol.y_end[0] - 3f64.exp()).abs() < 1e-10 * 3f64.exp());
        for i in 0..=60 {
            let t = 0.05 * i as f64;
            assert!((sol.eval(t)[0] - t.exp()).abs() < 1e-10 * t.exp(), "t = {t}");
        }
    }

    #[test]
    fn backward_harmonic() {
        let opts = OdeOptions::with_tol(1e-12);
        let sol = integrate_plain(|_, y, dy| { dy[0] = y[1]; dy[1] = -y[0]; }, 0.0, &[0.0, 1.0], -5.0, &opts).unwrap();
        for i in 0..=50 {
            let t = -0.1 * i as f64;
            let y = sol.eval(t);
            assert!((y[0] - t.sin()).abs() < 1e-10 && (y[1] - t.cos()).abs() < 1e-10);
        }
    }

    #[test]
    fn hook_stop_truncates() {
        let opts = OdeOptions::with_tol(1e-10).h_max(0.1);
        let sol = integrate(|_, _, dy| dy[0] = 1.0, 0.0, &[0.0], 10.0, &opts, 0, |_, y, _| {
            if y[0] > 2.0 { StepAction::Stop } else { StepAction::Continue }
        }).unwrap();
        assert!(sol.stopped && sol.t_end > 2.0 && sol.t_end < 2.2);
    }
}
