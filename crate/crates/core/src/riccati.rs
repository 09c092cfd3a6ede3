//! Second-order matrix equations `B̈ + 𝓡B = 0` and their Riccati solutions.
//!
//! `S = ḂB⁻¹` for the fundamental solution `B(0) = 0, Ḃ(0) = I`; two-point
//! solutions `D(s, t)` with `D(s, 0) = I, D(s, s) = 0`; the horizon limits
//! `U± = lim_{s → ±∞} Ḋ D⁻¹`.

use std::fmt;
use std::sync::Arc;

use crate::error::{HamError, Result};
use crate::integrator::{integrate, DenseSolution, OdeOptions, StepAction};
use crate::linalg::{asymmetry, inverse, max_abs, min_eig, singular_values, sym, Mat};

/// Symmetric curvature `t ↦ 𝓡(t)`.
pub type CurvatureFn<'a> = Arc<dyn Fn(f64) -> Result<Mat> + Send + Sync + 'a>;

/// Tolerance of every linear solve in this module.
pub const LINEAR_TOL: f64 = 1e-13;
/// Horizon schedule of the limits: `10 · 2^k`, `k = 0..=6`.
pub const FIRST_HORIZON: f64 = 10.0;
pub const MAX_HORIZON: f64 = 640.0;
/// Allowed violation of monotonicity in the horizon.
pub const MONOTONE_SLACK: f64 = 1e-7;
/// `B` is singular when `σ_min(B) / max(σ_max(B), σ_max(Ḃ))` is below its inverse.
pub const SINGULAR_COND: f64 = 1e12;
/// Extra span solved past the grid ends.
const SPAN_MARGIN: f64 = 0.1;
/// Relative singular value marking a degenerate conjugate point.
pub const TANGENCY_THRESHOLD: f64 = 1e-9;

/// Declared curvature bounds.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CurvatureBounds {
    /// `𝓡 ⪰ −k²I`.
    pub k: Option<f64>,
    /// `(K₁, K₂)` with `−K₂²I ⪰ 𝓡 ⪰ −K₁²I`.
    pub pinching: Option<(f64, f64)>,
}

impl CurvatureBounds {
    /// Effective lower bound `k`, from either declaration.
    pub fn lower(&self) -> Option<f64> {
        self.k.or(self.pinching.map(|p| p.0))
    }
}

#[derive(Clone)]
pub struct RiccatiProblem<'a> {
    pub size: usize,
    curvature: CurvatureFn<'a>,
    pub bounds: CurvatureBounds,
}

impl fmt::Debug for RiccatiProblem<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RiccatiProblem").field("size", &self.size).field("bounds", &self.bounds).finish()
    }
}

impl<'a> RiccatiProblem<'a> {
    pub fn new(size: usize, curvature: CurvatureFn<'a>) -> Self {
        Self { size, curvature, bounds: CurvatureBounds::default() }
    }

    pub fn from_fn<F>(size: usize, f: F) -> Self
    where
        F: Fn(f64) -> Result<Mat> + Send + Sync + 'a,
    {
        Self::new(size, Arc::new(f))
    }

    pub fn constant(r: Mat) -> Self {
        let m = r.nrows();
        let r = sym(&r);
        Self::from_fn(m, move |_| Ok(r.clone()))
    }

    pub fn scalar(r: f64) -> Self {
        Self::constant(Mat::from_element(1, 1, r))
    }

    pub fn with_lower_bound(mut self, k: f64) -> Self {
        self.bounds.k = Some(k);
        self
    }

    pub fn with_pinching(mut self, k1: f64, k2: f64) -> Self {
        self.bounds.pinching = Some((k1, k2));
        self
    }

    /// `t ↦ 𝓡(t + dt)`.
    pub fn shifted(&self, dt: f64) -> Self {
        let f = self.curvature.clone();
        Self { size: self.size, curvature: Arc::new(move |t| f(t + dt)), bounds: self.bounds }
    }

    /// Symmetrized curvature at `t`.
    pub fn curvature(&self, t: f64) -> Result<Mat> {
        let r = (self.curvature)(t)?;
        if r.shape() != (self.size, self.size) {
            return Err(HamError::InvalidArgument(format!(
                "curvature callback returned {:?}, expected {m}×{m}",
                r.shape(),
                m = self.size
            )));
        }
        Ok(sym(&r))
    }

    /// Checks declared bounds at the given times; returns the sampled
    /// extreme eigenvalues.
    pub fn verify_bounds(&self, times: &[f64]) -> Result<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &t in times {
            let (ev, _) = crate::linalg::sym_eigen(&self.curvature(t)?);
            lo = lo.min(ev[0]);
            hi = hi.max(*ev.last().unwrap());
        }
        let slack = 1e-10;
        if let Some(k) = self.bounds.lower() {
            if lo < -k * k - slack {
                return Err(HamError::Hypothesis(format!("curvature {lo} below the declared bound −{}", k * k)));
            }
        }
        if let Some((_, k2)) = self.bounds.pinching {
            if hi > -k2 * k2 + slack {
                return Err(HamError::Hypothesis(format!("curvature {hi} above the declared bound −{}", k2 * k2)));
            }
        }
        Ok((lo, hi))
    }
}

/// `[B; Ḃ]` as a column-major `2m × m` state.
fn stack(b: &Mat, bd: &Mat) -> Vec<f64> {
    let m = b.ncols();
    let mut y = Mat::zeros(2 * b.nrows(), m);
    y.view_mut((0, 0), (b.nrows(), m)).copy_from(b);
    y.view_mut((b.nrows(), 0), (b.nrows(), m)).copy_from(bd);
    y.as_slice().to_vec()
}

fn unstack(y: &[f64], m: usize) -> (Mat, Mat) {
    let s = Mat::from_column_slice(2 * m, m, y);
    (s.rows(0, m).into_owned(), s.rows(m, m).into_owned())
}

/// Solves the linear equation from `t0` to `t1`; the hook sees `(t, B, Ḃ)`.
fn propagate<H>(problem: &RiccatiProblem, t0: f64, b0: &Mat, bd0: &Mat, t1: f64, mut hook: H) -> Result<DenseSolution>
where
    H: FnMut(f64, &Mat, &Mat) -> StepAction,
{
    let m = problem.size;
    let mut err: Option<HamError> = None;
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| match problem.curvature(t) {
        Ok(r) => {
            let (b, bd) = unstack(y, m);
            dy.copy_from_slice(&stack(&bd, &(-(r * b))));
        }
        Err(e) => {
            err.get_or_insert(e);
            dy.iter_mut().for_each(|v| *v = f64::NAN);
        }
    };
    let sol = integrate(
        rhs,
        t0,
        &stack(b0, bd0),
        t1,
        &OdeOptions::with_tol(LINEAR_TOL).h_max(0.5),
        0,
        |step, y, _| {
            let (b, bd) = unstack(y, m);
            hook(step.t1(), &b, &bd)
        },
    );
    if let Some(e) = err {
        return Err(e);
    }
    sol
}

/// A zero of `det B` located on the dense output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularTime {
    pub t: f64,
    /// Number of singular values of `B(t)` below threshold.
    pub multiplicity: usize,
    /// Even-order zero found as a tangency rather than a sign change.
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct FundamentalSolution<'a> {
    pub size: usize,
    pub times: Vec<f64>,
    pub b: Vec<Mat>,
    pub b_dot: Vec<Mat>,
    pub det_b: Vec<f64>,
    /// Smallest positive singular time, if any.
    pub first_singular_time: Option<f64>,
    pub singular_times: Vec<SingularTime>,
    /// Relative drift of `ḂᵀB − BᵀḂ` over the grid.
    pub wronskian_drift: f64,
    forward: Option<DenseSolution>,
    backward: Option<DenseSolution>,
    initial: (Mat, Mat),
    problem: RiccatiProblem<'a>,
}

impl<'a> FundamentalSolution<'a> {
    /// `(B(t), Ḃ(t))` from the dense output.
    pub fn eval(&self, t: f64) -> Result<(Mat, Mat)> {
        if t == 0.0 {
            return Ok(self.initial.clone());
        }
        let side = if t >= 0.0 { self.forward.as_ref() } else { self.backward.as_ref() };
        match side {
            Some(s) if s.covers(t) => Ok(unstack(&s.eval(t), self.size)),
            _ => Err(HamError::InvalidArgument(format!("t = {t} outside the solved span"))),
        }
    }

    pub fn problem(&self) -> &RiccatiProblem<'a> {
        &self.problem
    }

    fn det_at(&self, t: f64) -> Result<f64> {
        Ok(self.eval(t)?.0.determinant())
    }

    fn relative_smin(&self, t: f64) -> Result<f64> {
        let (b, bd) = self.eval(t)?;
        let s = singular_values(&b);
        let scale = singular_values(&bd)[0].max(s[0]).max(1e-300);
        Ok(*s.last().unwrap() / scale)
    }

    fn multiplicity(&self, t: f64) -> Result<usize> {
        let (b, bd) = self.eval(t)?;
        let scale = singular_values(&bd)[0].max(1.0);
        Ok(singular_values(&b).iter().filter(|&&v| v < 1e-7 * scale).count().max(1))
    }

    /// Zeros of `det B` on one side, by sign changes between accepted steps
    /// (bisection to 1e-10) and local minima of the relative smallest singular
    /// value (tangencies).
    fn scan_side(&self, sol: &DenseSolution, t_lo: f64, t_hi: f64) -> Result<Vec<SingularTime>> {
        let mut out: Vec<SingularTime> = Vec::new();
        let mut nodes: Vec<f64> = Vec::with_capacity(2 * sol.steps.len() + 1);
        for st in &sol.steps {
            nodes.push(st.t0 + 0.5 * st.h);
            nodes.push(st.t1());
        }
        nodes.push(t_lo);
        nodes.push(t_hi);
        nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let nodes: Vec<f64> = nodes.into_iter().filter(|&t| t.abs() > 1e-9 && t >= t_lo && t <= t_hi).collect();
        let dets: Vec<f64> = nodes.iter().map(|&t| self.det_at(t)).collect::<Result<_>>()?;
        let smin: Vec<f64> = nodes.iter().map(|&t| self.relative_smin(t)).collect::<Result<_>>()?;
        for i in 0..nodes.len().saturating_sub(1) {
            let (a, b) = (nodes[i], nodes[i + 1]);
            if dets[i] == 0.0 || dets[i].signum() != dets[i + 1].signum() {
                let t = self.bisect(a, b, dets[i])?;
                out.push(SingularTime { t, multiplicity: self.multiplicity(t)?, degenerate: false });
            } else if i > 0 && smin[i] < smin[i - 1] && smin[i] <= smin[i + 1] {
                // even-order zero: refine the minimum
                let t = self.golden_min(nodes[i - 1], b)?;
                let seen = out.iter().any(|s| (s.t - t).abs() < 1e-6);
                let crossing = dets[i - 1].signum() != dets[i].signum();
                if !seen && !crossing && self.relative_smin(t)? < TANGENCY_THRESHOLD {
                    out.push(SingularTime { t, multiplicity: self.multiplicity(t)?, degenerate: true });
                }
            }
        }
        Ok(out)
    }

    fn bisect(&self, mut a: f64, mut b: f64, da: f64) -> Result<f64> {
        let sa = da.signum();
        while (b - a).abs() > 1e-10 {
            let c = 0.5 * (a + b);
            let dc = self.det_at(c)?;
            if dc == 0.0 {
                return Ok(c);
            }
            if dc.signum() == sa {
                a = c;
            } else {
                b = c;
            }
        }
        Ok(0.5 * (a + b))
    }

    fn golden_min(&self, mut a: f64, mut b: f64) -> Result<f64> {
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        let (mut fc, mut fd) = (self.relative_smin(c)?, self.relative_smin(d)?);
        while (b - a).abs() > 1e-10 {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - g * (b - a);
                fc = self.relative_smin(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + g * (b - a);
                fd = self.relative_smin(d)?;
            }
        }
        Ok(0.5 * (a + b))
    }
}

/// Solves `B̈ + 𝓡B = 0` with `B(0) = B0, Ḃ(0) = Ḃ0` over the span of `grid ∪ {0}`.
pub fn solve_linear<'a>(problem: &RiccatiProblem<'a>, b0: &Mat, bd0: &Mat, grid: &[f64]) -> Result<FundamentalSolution<'a>> {
    let m = problem.size;
    if b0.shape() != (m, m) || bd0.shape() != (m, m) {
        return Err(HamError::InvalidArgument("initial data must be m × m".into()));
    }
    let t_hi = grid.iter().copied().fold(0.0, f64::max);
    let t_lo = grid.iter().copied().fold(0.0, f64::min);
    // margin keeps difference stencils at the grid ends inside the dense output
    let forward = if t_hi > 0.0 { Some(propagate(problem, 0.0, b0, bd0, t_hi + SPAN_MARGIN, |_, _, _| StepAction::Continue)?) } else { None };
    let backward = if t_lo < 0.0 { Some(propagate(problem, 0.0, b0, bd0, t_lo - SPAN_MARGIN, |_, _, _| StepAction::Continue)?) } else { None };
    let mut fund = FundamentalSolution {
        size: m,
        times: grid.to_vec(),
        b: Vec::new(),
        b_dot: Vec::new(),
        det_b: Vec::new(),
        first_singular_time: None,
        singular_times: Vec::new(),
        wronskian_drift: 0.0,
        forward,
        backward,
        initial: (b0.clone(), bd0.clone()),
        problem: problem.clone(),
    };
    let w0 = bd0.transpose() * b0 - b0.transpose() * bd0;
    let mut drift: f64 = 0.0;
    for &t in grid {
        let (b, bd) = fund.eval(t)?;
        let w = bd.transpose() * &b - b.transpose() * &bd;
        let scale = 1f64.max(b.norm() * bd.norm());
        drift = drift.max(max_abs(&(w - &w0)) / scale);
        fund.det_b.push(b.determinant());
        fund.b.push(b);
        fund.b_dot.push(bd);
    }
    if drift > 1e-6 {
        return Err(HamError::residual("Wronskian drift", drift, 1e-6));
    }
    fund.wronskian_drift = drift;
    let mut singular = Vec::new();
    if let Some(side) = fund.backward.as_ref() {
        singular.extend(fund.scan_side(side, t_lo, 0.0)?);
    }
    if let Some(side) = fund.forward.as_ref() {
        singular.extend(fund.scan_side(side, 0.0, t_hi)?);
    }
    singular.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap());
    fund.first_singular_time = singular.iter().map(|s| s.t).find(|&t| t > 0.0);
    fund.singular_times = singular;
    Ok(fund)
}

/// `B(0) = 0, Ḃ(0) = I`.
pub fn fundamental<'a>(problem: &RiccatiProblem<'a>, grid: &[f64]) -> Result<FundamentalSolution<'a>> {
    let m = problem.size;
    solve_linear(problem, &Mat::zeros(m, m), &Mat::identity(m, m), grid)
}

#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub times: Vec<f64>,
    pub s: Vec<Mat>,
    /// `max ‖Ṡ + S² + 𝓡‖∞ / max(1, ‖S‖²)` with `Ṡ` differenced in time.
    pub residual: f64,
    pub asymmetry: f64,
}

/// `S = ḂB⁻¹` at `t`, or a domain error near a singular time.
pub fn riccati_at(fund: &FundamentalSolution, t: f64) -> Result<Mat> {
    let (b, bd) = fund.eval(t)?;
    let rel = fund.relative_smin(t)?;
    if !(rel * SINGULAR_COND > 1.0) {
        return Err(HamError::OutOfDomain(format!("B(t) is singular at t = {t} (relative σ_min {rel:e})")));
    }
    Ok(bd * inverse(&b)?)
}

/// Riccati solution on the grid of `fund`, skipping `t = 0`.
pub fn riccati_from_fundamental(fund: &FundamentalSolution) -> Result<RiccatiSolution> {
    let mut times = Vec::new();
    let mut s_all = Vec::new();
    let mut residual: f64 = 0.0;
    let mut asym: f64 = 0.0;
    let singular: Vec<f64> = std::iter::once(0.0).chain(fund.singular_times.iter().map(|s| s.t)).collect();
    for &t in &fund.times {
        if t == 0.0 {
            continue;
        }
        let s = riccati_at(fund, t)?;
        let dist = singular.iter().map(|&u| (t - u).abs()).fold(f64::INFINITY, f64::min);
        let h = 1e-2 * dist.min(1.0);
        let sd = crate::linalg::cd4_mat(|u| riccati_at(fund, u), t, h)?;
        let r = fund.problem.curvature(t)?;
        let scale = 1f64.max(max_abs(&s).powi(2));
        residual = residual.max(max_abs(&(sd + &s * &s + r)) / scale);
        asym = asym.max(asymmetry(&s) / max_abs(&s).max(1.0));
        times.push(t);
        s_all.push(sym(&s));
    }
    if residual > 1e-6 {
        return Err(HamError::residual("Riccati residual", residual, 1e-6));
    }
    Ok(RiccatiSolution { times, s: s_all, residual, asymmetry: asym })
}

/// Gauss–Legendre 5-point rule on `[−1, 1]`.
fn gauss_legendre5() -> [(f64, f64); 5] {
    let a = (5.0 - 2.0 * (10.0f64 / 7.0).sqrt()).sqrt() / 3.0;
    let b = (5.0 + 2.0 * (10.0f64 / 7.0).sqrt()).sqrt() / 3.0;
    let wa = (322.0 + 13.0 * 70f64.sqrt()) / 900.0;
    let wb = (322.0 - 13.0 * 70f64.sqrt()) / 900.0;
    [(-b, wb), (-a, wa), (0.0, 128.0 / 225.0), (a, wa), (b, wb)]
}

/// `M(t) = ∫_t^s B⁻¹B⁻ᵀ dτ` with the `τ⁻²I` singularity subtracted.
fn gram_integral(fund: &FundamentalSolution, t: f64, s: f64) -> Result<Mat> {
    let m = fund.size;
    let rule = gauss_legendre5();
    let panel = |a: f64, b: f64, panels: usize| -> Result<Mat> {
        let mut acc = Mat::zeros(m, m);
        let w = (b - a) / panels as f64;
        for k in 0..panels {
            let (lo, hi) = (a + k as f64 * w, a + (k + 1) as f64 * w);
            for (x, wt) in rule {
                let tau = 0.5 * (lo + hi) + 0.5 * (hi - lo) * x;
                let bi = inverse(&fund.eval(tau)?.0)?;
                let f = &bi * bi.transpose() - Mat::identity(m, m) / (tau * tau);
                acc += f * (0.5 * (hi - lo) * wt);
            }
        }
        Ok(acc)
    };
    let mut panels = 16usize;
    let mut prev = panel(t, s, panels)?;
    loop {
        panels *= 2;
        let next = panel(t, s, panels)?;
        let change = max_abs(&(&next - &prev));
        prev = next;
        if change < 1e-13 * (1.0 + max_abs(&prev)) || panels >= 1 << 14 {
            break;
        }
    }
    Ok(prev + Mat::identity(m, m) * (1.0 / t - 1.0 / s))
}

#[derive(Debug, Clone)]
pub struct TwoPointSolution {
    pub s: f64,
    pub times: Vec<f64>,
    pub d: Vec<Mat>,
    pub d_dot: Vec<Mat>,
    /// `U(s, t) = Ḋ D⁻¹`, `None` where `D` is singular.
    pub u: Vec<Option<Mat>>,
    /// `M(t)` where defined (`t` strictly between 0 and `s`).
    pub m: Vec<Option<Mat>>,
    /// Residuals of `D(s,0) = I`, `D(s,s) = 0`, `Ḋ(s,s) = −B(s)⁻ᵀ`.
    pub boundary_residuals: [f64; 3],
    /// `max |D − B M| / max(1, |D|)` over nodes where `M` is defined.
    pub definition_residual: f64,
}

/// `D(s, t)` from the Wronskian closed form `D = Y(t) − B(t)B(s)⁻¹Y(s)`
/// with `Y(0) = I, Ẏ(0) = 0`, cross-checked against `B(t) M(t)`.
pub fn two_point(problem: &RiccatiProblem, s: f64, grid: &[f64]) -> Result<TwoPointSolution> {
    if s == 0.0 {
        return Err(HamError::InvalidArgument("horizon must be nonzero".into()));
    }
    let m = problem.size;
    let mut span: Vec<f64> = grid.to_vec();
    span.push(s);
    let fb = fundamental(problem, &span)?;
    if let Some(c) = fb.singular_times.iter().find(|c| c.t.abs() > 1e-9 && c.t.signum() == s.signum() && c.t.abs() <= s.abs()) {
        return Err(HamError::ConjugatePoint { t: c.t });
    }
    let fy = solve_linear(problem, &Mat::identity(m, m), &Mat::zeros(m, m), &span)?;
    let one = Mat::identity(m, m);
    let (bs, _) = fb.eval(s)?;
    let (ys, _) = fy.eval(s)?;
    let c = inverse(&bs)? * &ys;
    let d_of = |t: f64| -> Result<(Mat, Mat)> {
        let (b, bd) = fb.eval(t)?;
        let (y, yd) = fy.eval(t)?;
        Ok((y - b * &c, yd - bd * &c))
    };
    let mut out = TwoPointSolution {
        s,
        times: grid.to_vec(),
        d: Vec::new(),
        d_dot: Vec::new(),
        u: Vec::new(),
        m: Vec::new(),
        boundary_residuals: [0.0; 3],
        definition_residual: 0.0,
    };
    for &t in grid {
        let (d, dd) = d_of(t)?;
        let u = if (t - s).abs() > 1e-12 && crate::linalg::condition_number(&d) < SINGULAR_COND {
            Some(&dd * inverse(&d)?)
        } else {
            None
        };
        let inside = t != 0.0 && t.signum() == s.signum() && t.abs() < s.abs() && t.abs() > 1e-3;
        let mm = if inside { Some(gram_integral(&fb, t, s)?) } else { None };
        if let Some(mm) = &mm {
            let (b, _) = fb.eval(t)?;
            let r = max_abs(&(&d - b * mm)) / max_abs(&d).max(1.0);
            out.definition_residual = out.definition_residual.max(r);
        }
        out.d.push(d);
        out.d_dot.push(dd);
        out.u.push(u);
        out.m.push(mm);
    }
    let (d0, _) = d_of(0.0)?;
    let (dss, ddss) = d_of(s)?;
    out.boundary_residuals = [
        max_abs(&(d0 - &one)),
        max_abs(&dss) / max_abs(&ys).max(1.0),
        max_abs(&(ddss + inverse(&bs)?.transpose())) / max_abs(&inverse(&bs)?).max(1e-300),
    ];
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Direction {
    /// `s → +∞`, the stable construction.
    Plus,
    /// `s → −∞`, the unstable construction.
    Minus,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Plus => 1.0,
            Direction::Minus => -1.0,
        }
    }
}

/// `U(s, ·)` on a span, from a solution with `Z(s) = 0` that is renormalized
/// to `[I; U]` after every accepted step.
pub struct HorizonSolution {
    pub s: f64,
    size: usize,
    sol: DenseSolution,
}

impl HorizonSolution {
    pub fn solve(problem: &RiccatiProblem, s: f64, t_lo: f64, t_hi: f64) -> Result<Self> {
        let m = problem.size;
        let (target, zd) = if s > t_hi { (t_lo, -1.0) } else if s < t_lo { (t_hi, 1.0) } else {
            return Err(HamError::InvalidArgument(format!("horizon {s} inside the span [{t_lo}, {t_hi}]")));
        };
        let mut conjugate: Option<f64> = None;
        let mut last_t = s;
        let sol = propagate(problem, s, &Mat::zeros(m, m), &(Mat::identity(m, m) * zd), target, |t, z, zdot| {
            // every step starts from det Z = 1, or from Z = 0 with det Z > 0 just after
            let det = z.determinant();
            if !(det > 0.0) {
                conjugate.get_or_insert(0.5 * (t + last_t));
                return StepAction::Stop;
            }
            last_t = t;
            match inverse(z) {
                Ok(zi) => StepAction::Replace(stack(&Mat::identity(m, m), &(zdot * zi))),
                Err(_) => {
                    conjugate.get_or_insert(t);
                    StepAction::Stop
                }
            }
        })?;
        if let Some(t) = conjugate {
            return Err(HamError::ConjugatePoint { t });
        }
        Ok(Self { s, size: m, sol })
    }

    /// `U(s, t)`.
    pub fn u(&self, t: f64) -> Result<Mat> {
        if !self.sol.covers(t) {
            return Err(HamError::InvalidArgument(format!("t = {t} outside the horizon solution")));
        }
        let (z, zd) = unstack(&self.sol.eval(t), self.size);
        Ok(zd * inverse(&z)?)
    }
}

/// `D(t)` with `Ḋ = U(t) D`, `D(0) = I`, at the grid times.
fn transport(size: usize, u: &dyn Fn(f64) -> Result<Mat>, grid: &[f64]) -> Result<Vec<Mat>> {
    let t_hi = grid.iter().copied().fold(0.0, f64::max);
    let t_lo = grid.iter().copied().fold(0.0, f64::min);
    let mut err: Option<HamError> = None;
    let mut rhs = |t: f64, y: &[f64], dy: &mut [f64]| match u(t) {
        Ok(uu) => dy.copy_from_slice((uu * Mat::from_column_slice(size, size, y)).as_slice()),
        Err(e) => {
            err.get_or_insert(e);
            dy.iter_mut().for_each(|v| *v = f64::NAN);
        }
    };
    let id = Mat::identity(size, size);
    let opts = OdeOptions::with_tol(1e-12).h_max(0.5);
    let fwd = if t_hi > 0.0 { Some(crate::integrator::integrate_plain(&mut rhs, 0.0, id.as_slice(), t_hi, &opts)?) } else { None };
    let bwd = if t_lo < 0.0 { Some(crate::integrator::integrate_plain(&mut rhs, 0.0, id.as_slice(), t_lo, &opts)?) } else { None };
    if let Some(e) = err {
        return Err(e);
    }
    Ok(grid
        .iter()
        .map(|&t| match (t > 0.0, t < 0.0) {
            (true, _) => Mat::from_column_slice(size, size, &fwd.as_ref().unwrap().eval(t)),
            (_, true) => Mat::from_column_slice(size, size, &bwd.as_ref().unwrap().eval(t)),
            _ => id.clone(),
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct LimitSolution {
    pub direction: Direction,
    pub times: Vec<f64>,
    /// Extrapolated `U±` at the grid times.
    pub u: Vec<Mat>,
    /// `D±` with `Ḋ± = U± D±`, `D±(0) = I`, extrapolated like `U±`.
    pub d: Vec<Mat>,
    /// Horizon offsets `|s − span end|` used, in order.
    pub horizon_sequence: Vec<f64>,
    /// `‖U_k − U_{k−1}‖∞` per doubling, of the sequence that was accepted.
    pub gaps: Vec<f64>,
    pub convergence_gap: f64,
    pub converged: bool,
    /// Most negative eigenvalue of `±(U(s_{k+1}) − U(s_k))` seen; monotone if ≥ −slack.
    pub monotonicity: f64,
}

impl LimitSolution {
    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(HamError::NoConvergence(format!(
                "gap {:e} at horizon {}",
                self.convergence_gap,
                self.horizon_sequence.last().copied().unwrap_or(0.0)
            )))
        }
    }

    /// `U±` at a grid time.
    pub fn at(&self, t: f64) -> Option<&Mat> {
        self.times.iter().position(|&u| u == t).map(|i| &self.u[i])
    }

    /// Worst relative violation of the pinching envelope of `U±` and `D±`.
    pub fn envelope_violation(&self, k1: f64, k2: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for (t, (u, d)) in self.times.iter().zip(self.u.iter().zip(&self.d)) {
            let (ev, _) = crate::linalg::sym_eigen(u);
            let (lo, hi) = (ev[0], *ev.last().unwrap());
            let (ulo, uhi) = match self.direction {
                Direction::Plus => (-k1, -k2),
                Direction::Minus => (k2, k1),
            };
            worst = worst.max(ulo - lo).max(hi - uhi);
            if *t > 0.0 {
                let sv = singular_values(d);
                let (smax, smin) = (sv[0], *sv.last().unwrap());
                let (elo, ehi) = match self.direction {
                    Direction::Plus => ((-k1 * t).exp(), (-k2 * t).exp()),
                    Direction::Minus => ((k2 * t).exp(), (k1 * t).exp()),
                };
                worst = worst.max((elo - smin) / elo).max((smax - ehi) / ehi);
            }
        }
        worst
    }
}

/// Polynomial extrapolation to `ε = 0` in `ε = 1/|s − t|`, per grid node,
/// over the last `MAX_LEVEL + 1` horizons.
struct Extrapolator {
    eps: Vec<Vec<f64>>,
    values: Vec<Vec<Mat>>,
}

impl Extrapolator {
    const MAX_LEVEL: usize = 4;

    fn push(&mut self, eps: Vec<f64>, values: Vec<Mat>) -> Vec<Mat> {
        self.eps.push(eps);
        self.values.push(values);
        let k = self.values.len();
        let first = k.saturating_sub(Self::MAX_LEVEL + 1);
        (0..self.values[0].len())
            .map(|node| {
                let x: Vec<f64> = (first..k).map(|i| self.eps[i][node]).collect();
                let mut p: Vec<Mat> = (first..k).map(|i| self.values[i][node].clone()).collect();
                // Neville at 0
                for lvl in 1..p.len() {
                    for i in 0..p.len() - lvl {
                        let (xi, xj) = (x[i], x[i + lvl]);
                        p[i] = (&p[i] * xj - &p[i + 1] * xi) / (xj - xi);
                    }
                }
                p.swap_remove(0)
            })
            .collect()
    }
}

/// `U± = lim U(s, ·)` on `grid` by horizon doubling.
///
/// Converged when two successive gaps of either the raw or the extrapolated
/// values are below `tol`. An unconverged result is returned with `converged = false`.
pub fn limit_riccati(problem: &RiccatiProblem, direction: Direction, grid: &[f64], tol: f64) -> Result<LimitSolution> {
    if grid.is_empty() {
        return Err(HamError::InvalidArgument("empty grid".into()));
    }
    let m = problem.size;
    let t_hi = grid.iter().copied().fold(0.0, f64::max);
    let t_lo = grid.iter().copied().fold(0.0, f64::min);
    let sign = direction.sign();
    let mut ext_u = Extrapolator { eps: Vec::new(), values: Vec::new() };
    let mut ext_d = Extrapolator { eps: Vec::new(), values: Vec::new() };
    let mut horizons = Vec::new();
    let mut gaps = Vec::new();
    let mut monotonicity = f64::INFINITY;
    let mut prev_raw: Option<Vec<Mat>> = None;
    let gap_of = |a: &[Mat], b: &[Mat]| a.iter().zip(b).map(|(x, y)| max_abs(&(x - y))).fold(0.0, f64::max);
    let settled = |g: &[f64]| g.len() >= 2 && g[g.len() - 1] < tol && g[g.len() - 2] < tol;
    // raw values settle first under exponential convergence, extrapolated ones under algebraic
    let mut raw_gaps = Vec::new();
    let mut prev_ext: Option<Vec<Mat>> = None;
    let mut best_u = Vec::new();
    let mut best_d = Vec::new();
    let mut converged = false;
    let mut h = FIRST_HORIZON;
    while h <= MAX_HORIZON * (1.0 + 1e-12) {
        let s = if sign > 0.0 { t_hi + h } else { t_lo - h };
        let hs = HorizonSolution::solve(problem, s, t_lo, t_hi)?;
        let raw: Vec<Mat> = grid.iter().map(|&t| hs.u(t)).collect::<Result<_>>()?;
        let d = transport(m, &|t| hs.u(t), grid)?;
        if let Some(prev) = &prev_raw {
            // U(s, t) increases as s → +∞ and decreases as s → −∞
            for (a, b) in raw.iter().zip(prev) {
                let diff = sym(&(a - b)) * sign;
                monotonicity = monotonicity.min(min_eig(&diff));
            }
            if monotonicity < -MONOTONE_SLACK {
                return Err(HamError::residual("horizon monotonicity of U(s, t)", -monotonicity, MONOTONE_SLACK));
            }
            raw_gaps.push(gap_of(&raw, prev));
        }
        // U(s, t) expands in 1/|s − t|, D(s, t) in 1/|s|
        let eps_u: Vec<f64> = grid.iter().map(|&t| 1.0 / (s - t).abs()).collect();
        let eps_d = vec![1.0 / s.abs(); grid.len()];
        let ext = ext_u.push(eps_u, raw.clone());
        let ext_dv = ext_d.push(eps_d, d.clone());
        horizons.push(h);
        if let Some(pe) = &prev_ext {
            gaps.push(gap_of(&ext, pe));
        }
        if settled(&raw_gaps) {
            best_u = raw;
            best_d = d;
            gaps = raw_gaps;
            converged = true;
            break;
        }
        best_u = ext.clone();
        best_d = ext_dv;
        if settled(&gaps) {
            converged = true;
            break;
        }
        prev_ext = Some(ext);
        prev_raw = Some(raw);
        h *= 2.0;
    }
    let u: Vec<Mat> = best_u.iter().map(sym).collect();
    Ok(LimitSolution {
        direction,
        times: grid.to_vec(),
        u,
        d: best_d,
        horizon_sequence: horizons,
        convergence_gap: gaps.last().copied().unwrap_or(f64::INFINITY),
        gaps,
        converged,
        monotonicity: if monotonicity.is_finite() { monotonicity } else { 0.0 },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum ComparisonStatus {
    Holds,
    Violated,
    /// Preconditions failed; not a failure of the theorem.
    Rejected(String),
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub status: ComparisonStatus,
    /// `min_t λ_min(S₂(t) − S₁(t))`.
    pub min_gap: f64,
    pub worst_time: f64,
}

/// Riccati solution through `(t0, S0)` via `B(t0) = I, Ḃ(t0) = S0`.
fn riccati_through(problem: &RiccatiProblem, t0: f64, s0: &Mat, grid: &[f64]) -> Result<Vec<Mat>> {
    let shifted = problem.shifted(t0);
    let rel: Vec<f64> = grid.iter().map(|t| t - t0).collect();
    let m = problem.size;
    let fund = solve_linear(&shifted, &Mat::identity(m, m), s0, &rel)?;
    if let Some(c) = fund.singular_times.first() {
        return Err(HamError::OutOfDomain(format!("S blows up at t = {}", c.t + t0)));
    }
    rel.iter()
        .map(|&t| if t == 0.0 { Ok(s0.clone()) } else { riccati_at(&fund, t).map(|s| sym(&s)) })
        .collect()
}

/// Ordering of two Riccati solutions from ordered data.
///
/// Grid times after `t0` use `𝓡₁ ⪰ 𝓡₂`; times before `t0` use `𝓡₂ ⪰ 𝓡₁`.
pub fn comparison_check(
    p1: &RiccatiProblem,
    p2: &RiccatiProblem,
    s1_0: &Mat,
    s2_0: &Mat,
    t0: f64,
    grid: &[f64],
) -> Result<ComparisonReport> {
    let forward = grid.iter().all(|&t| t >= t0);
    let backward = grid.iter().all(|&t| t <= t0);
    if !forward && !backward {
        return Err(HamError::InvalidArgument("grid must lie on one side of t0".into()));
    }
    let reject = |why: String| Ok(ComparisonReport { status: ComparisonStatus::Rejected(why), min_gap: f64::NAN, worst_time: t0 });
    if min_eig(&sym(&(s2_0 - s1_0))) < -1e-12 {
        return reject("S₂(t₀) ⪰ S₁(t₀) fails".into());
    }
    let mut probe: Vec<f64> = grid.to_vec();
    for w in grid.windows(2) {
        probe.push(0.5 * (w[0] + w[1]));
    }
    for &t in &probe {
        let d = sym(&(p1.curvature(t)? - p2.curvature(t)?));
        let d = if forward { d } else { -d };
        if min_eig(&d) < -1e-12 {
            return reject(format!("curvature ordering fails at t = {t}"));
        }
    }
    let s1 = match riccati_through(p1, t0, s1_0, grid) {
        Ok(s) => s,
        Err(HamError::OutOfDomain(w)) => return reject(format!("S₁ leaves its domain: {w}")),
        Err(e) => return Err(e),
    };
    let s2 = match riccati_through(p2, t0, s2_0, grid) {
        Ok(s) => s,
        Err(HamError::OutOfDomain(w)) => return reject(format!("S₂ leaves its domain: {w}")),
        Err(e) => return Err(e),
    };
    let mut min_gap = f64::INFINITY;
    let mut worst_time = t0;
    for ((&t, a), b) in grid.iter().zip(&s1).zip(&s2) {
        let g = min_eig(&sym(&(b - a)));
        if g < min_gap {
            min_gap = g;
            worst_time = t;
        }
    }
    let status = if min_gap >= -1e-8 { ComparisonStatus::Holds } else { ComparisonStatus::Violated };
    Ok(ComparisonReport { status, min_gap, worst_time })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlowupCertificate {
    /// Smallest grid time from which `σ_min(B) ≥ K` on the rest of the grid.
    pub time: Option<f64>,
    /// Largest `σ_min(B)` seen on the positive grid.
    pub achieved: f64,
}

/// First time after which `|B(t)v| ≥ K|v|` on the sampled positive grid.
pub fn blowup_certificate(fund: &FundamentalSolution, k: f64) -> BlowupCertificate {
    let mut pts: Vec<(f64, f64)> = fund
        .times
        .iter()
        .zip(&fund.b)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, b)| (*t, *singular_values(b).last().unwrap()))
        .collect();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let achieved = pts.iter().map(|p| p.1).fold(0.0, f64::max);
    let mut time = None;
    for &(t, s) in pts.iter().rev() {
        if s >= k {
            time = Some(t);
        } else {
            break;
        }
    }
    BlowupCertificate { time, achieved }
}
