use hamlab_core::entropy::{entropy_bounds, total_curvature_check, MeasureSampler, TotalCurvatureStatus};
use hamlab_core::hyperbolicity::{
    anosov_diagnose, build_invariant_distribution, conjugate_scan, horizontal_growth_profile, invariance_residuals,
    nonpositive_criterion, InvariantDistribution, OrbitCurvature,
};
use hamlab_core::jacobi::{curvature_operator, jacobi_frame, CurvatureMethod, FrameOptions};
use hamlab_core::linalg::{asymmetry, max_abs, principal_angles, sym_eigen, Mat};
use hamlab_core::models::level_point;
use hamlab_core::reduction::{local_reduced_curvature, reduced_curvature_direct, reduced_curvature_via_formula};
use hamlab_core::riccati::{
    fundamental, limit_riccati, riccati_at, riccati_from_fundamental, Direction, RiccatiProblem,
};
use hamlab_core::symplectic::{linearized_flow, uniform_grid};
use hamlab_core::{HamError, Model, PhasePoint, PhaseSystem, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{Command, RunConfig};
use crate::report::Series;

/// Output step of the time series.
const SERIES_STEP: f64 = 0.05;
/// Step of the `det B̃` scan, fine enough to show the zeros.
const DET_STEP: f64 = 0.01;
/// Samples of the growth profile.
const GROWTH_SAMPLES: usize = 201;
/// Shifts of the invariance check.
const INVARIANCE_SHIFTS: usize = 13;
/// Bound on the isotropy, level and field checks of `Δ̃±`.
const DISTRIBUTION_CHECK: f64 = 1e-8;
/// Route agreement of conjugate times.
const CONJUGATE_AGREEMENT: f64 = 1e-4;
/// Lower bound on the gap `⟨𝔑̃w,w⟩ − ⟨𝔑w,w⟩`.
const GAP_FLOOR: f64 = -1e-9;
/// Darboux residual of canonical frames.
const DARBOUX_LIMIT: f64 = 1e-8;
/// Quadratic-form samples in `validate`.
const FORM_SAMPLES: usize = 8;

/// What a command produced.
#[derive(Debug, Default)]
pub struct Outcome {
    pub status: String,
    pub result: Value,
    pub series: Vec<Series>,
    pub notes: Vec<String>,
    pub hypothesis_violation: bool,
    pub failed: bool,
}

pub struct Context<'a> {
    pub cfg: &'a RunConfig,
    pub model: &'a Model,
    pub base: PhasePoint,
}

impl<'a> Context<'a> {
    pub fn new(cfg: &'a RunConfig, model: &'a Model) -> Result<Self> {
        let base = match &cfg.point {
            Some(p) => {
                let c = cfg.energy.unwrap_or_else(|| cfg.model.default_energy());
                PhasePoint::new(level_point(model, &p.x, &p.direction, c)?.as_slice())
            }
            None => on_level(cfg, model, model.reference_point())?,
        };
        Ok(Self { cfg, model, base })
    }

    fn sys(&self) -> &dyn PhaseSystem {
        self.model
    }

    fn tol(&self) -> f64 {
        self.cfg.tolerances.integrator
    }
}

/// Moves `p` onto the configured level along its momentum ray; unchanged
/// without an explicit energy.
fn on_level(cfg: &RunConfig, model: &Model, p: PhasePoint) -> Result<PhasePoint> {
    let Some(c) = cfg.energy else { return Ok(p) };
    let n = model.dof();
    let z = level_point(model, &p.z.as_slice()[..n], &p.z.as_slice()[n..], c)?;
    Ok(PhasePoint::in_chart(p.chart, z.as_slice()))
}

pub fn run(cmd: Command, ctx: &Context) -> Result<Outcome> {
    match cmd {
        Command::Curvature => curvature(ctx),
        Command::Conjugate => conjugate(ctx),
        Command::Distributions => distributions(ctx),
        Command::Anosov => anosov(ctx),
        Command::Entropy => entropy(ctx),
        Command::RiccatiLab => riccati_lab(ctx),
        Command::Validate => validate(ctx),
    }
}

fn rows(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn entry_columns(prefix: &str, m: &Mat) -> Vec<String> {
    (0..m.nrows()).flat_map(|r| (0..m.ncols()).map(move |c| format!("{prefix}_{r}_{c}"))).collect()
}

fn entries(m: &Mat) -> impl Iterator<Item = f64> + '_ {
    (0..m.nrows()).flat_map(move |r| (0..m.ncols()).map(move |c| m[(r, c)]))
}

fn grid(t1: f64, step: f64) -> Vec<f64> {
    uniform_grid(0.0, t1, (t1 / step).round().max(1.0) as usize + 1)
}

fn curvature(ctx: &Context) -> Result<Outcome> {
    let (sys, base, tol) = (ctx.sys(), &ctx.base, ctx.tol());
    let frame = curvature_operator(sys, base, CurvatureMethod::Frame, tol)?;
    let bracket = curvature_operator(sys, base, CurvatureMethod::Bracket, tol)?;
    let mut result = json!({
        "base": base.z.as_slice(),
        "chart": base.chart,
        "curvature_frame": rows(&frame.matrix),
        "curvature_bracket": rows(&bracket.matrix),
        "eigenvalues": frame.eigenvalues,
        "method_mismatch": max_abs(&(&frame.matrix - &bracket.matrix)),
        "full_oracle": ctx.model.full_curvature_oracle(base.z.as_slice()),
    });
    let reduced = sys.dof() >= 2;
    if reduced {
        let direct = reduced_curvature_direct(sys, base, tol)?;
        let local = local_reduced_curvature(sys, base.z.as_slice(), None)?;
        result["reduced"] = json!({
            "curvature_direct": rows(&direct),
            "curvature_local": rows(&local.curvature),
            "omega_bar": local.omega_bar.as_slice(),
            "eigenvalues": sym_eigen(&direct).0,
            "oracle": ctx.model.reduced_curvature_oracle(base.z.as_slice()),
        });
    }

    let times = grid(ctx.cfg.horizons.curvature, SERIES_STEP);
    let fr = jacobi_frame(sys, base, &times, tol, FrameOptions::default())?;
    let table = if reduced { Some(OrbitCurvature::new(sys, base)?) } else { None };
    let mut columns: Vec<String> = ["t", "trace", "min_eig", "max_eig"].map(String::from).to_vec();
    if reduced {
        columns.extend(["reduced_trace", "reduced_min_eig", "reduced_max_eig"].map(String::from));
    }
    let mut trace = Series::new("curvature.csv", columns);
    for (i, &t) in times.iter().enumerate() {
        let (ev, _) = sym_eigen(&fr.curvature[i]);
        let mut row = vec![t, ev.iter().sum(), ev[0], ev[ev.len() - 1]];
        if let Some(table) = &table {
            let (rv, _) = sym_eigen(&table.at(t)?);
            row.extend([rv.iter().sum(), rv[0], rv[rv.len() - 1]]);
        }
        trace.push(row);
    }
    let mut columns = vec!["t".to_string()];
    columns.extend(entry_columns("e", &fr.e[0]));
    columns.extend(entry_columns("f", &fr.f[0]));
    let mut frames = Series::new("frames.csv", columns);
    for (i, &t) in times.iter().enumerate() {
        frames.push(std::iter::once(t).chain(entries(&fr.e[i])).chain(entries(&fr.f[i])).collect());
    }
    result["frame_darboux_residual"] = json!(fr.darboux_residual);
    result["frame_gauge"] = json!(fr.frame_gauge);
    Ok(Outcome { status: "complete".into(), result, series: vec![trace, frames], ..Outcome::default() })
}

fn conjugate(ctx: &Context) -> Result<Outcome> {
    let (sys, base) = (ctx.sys(), &ctx.base);
    let horizon = ctx.cfg.horizons.conjugate;
    let reduced = conjugate_scan(sys, base, horizon, true)?;
    let full = conjugate_scan(sys, base, horizon, false)?;
    let mut notes = Vec::new();
    let n = sys.dof();
    // the reduced curve of a 1-dof system is a point; only the full scan applies
    let agree = n == 1
        || (reduced.conjugate_times.len() == full.conjugate_times.len()
            && reduced.conjugate_times.iter().zip(&full.conjugate_times).all(|(a, b)| (a.t - b.t).abs() < CONJUGATE_AGREEMENT));
    if !agree {
        notes.push("reduced and full scans disagree".to_string());
    }
    let times = grid(horizon, DET_STEP);
    let series = if n >= 2 {
        let table = OrbitCurvature::new(sys, base)?;
        let fund = fundamental(&table.problem(), &times)?;
        let mut s = Series::new("conjugate.csv", vec!["t".into(), "det_b_reduced".into()]);
        for (t, d) in fund.times.iter().zip(&fund.det_b) {
            s.push(vec![*t, *d]);
        }
        s
    } else {
        let traj = linearized_flow(sys, base, 0.0, horizon, ctx.tol())?;
        if traj.truncated {
            return Err(HamError::OutOfDomain(format!("orbit leaves the chart before t = {horizon}")));
        }
        let mut s = Series::new("conjugate.csv", vec!["t".into(), "det_dx_dp".into()]);
        for &t in &times {
            let (_, mon) = traj.state_and_monodromy(t)?;
            s.push(vec![t, mon.view((0, n), (n, n)).determinant()]);
        }
        s
    };
    let status = if reduced.conjugate_times.is_empty() && (n >= 2 || full.conjugate_times.is_empty()) {
        "no_conjugate_points"
    } else {
        "conjugate_points"
    };
    Ok(Outcome {
        status: status.into(),
        result: json!({ "reduced": reduced, "full": full, "routes_agree": agree }),
        series: vec![series],
        notes,
        failed: !agree,
        ..Outcome::default()
    })
}

fn distribution_json(d: &InvariantDistribution, residuals: &[(f64, f64)]) -> Value {
    json!({
        "u": rows(&d.u),
        "frame_coordinates": rows(&d.frame_coordinates),
        "reduced_basis": rows(&d.reduced_basis),
        "lifted_basis": rows(&d.lifted_basis),
        "converged": d.converged(),
        "convergence_gap": d.limit.convergence_gap,
        "gaps": d.limit.gaps,
        "monotonicity": d.limit.monotonicity,
        "construction_horizon": d.construction_horizon,
        "checks": d.checks,
        "invariance_residual": residuals.iter().map(|r| r.1).fold(0.0, f64::max),
    })
}

fn distributions(ctx: &Context) -> Result<Outcome> {
    let (sys, base) = (ctx.sys(), &ctx.base);
    let (tol, limit) = (ctx.cfg.tolerances.limit, ctx.cfg.tolerances.residual);
    let h = ctx.cfg.horizons.distributions;
    let shifts = uniform_grid(-h, h, INVARIANCE_SHIFTS);
    let plus = build_invariant_distribution(sys, base, Direction::Plus, &[0.0], tol)?;
    let minus = build_invariant_distribution(sys, base, Direction::Minus, &[0.0], tol)?;
    let rp = invariance_residuals(sys, &plus, &shifts, tol)?;
    let rm = invariance_residuals(sys, &minus, &shifts, tol)?;
    let mut series = Series::new("invariance.csv", vec!["s".into(), "plus".into(), "minus".into()]);
    for (a, b) in rp.iter().zip(&rm) {
        series.push(vec![a.0, a.1, b.1]);
    }
    let angles = principal_angles(&plus.reduced_basis, &minus.reduced_basis);
    let mut notes = Vec::new();
    let converged = plus.converged() && minus.converged();
    if !converged {
        notes.push(format!("limit gap above {tol:e}"));
    }
    let worst = rp.iter().chain(&rm).map(|r| r.1).fold(0.0, f64::max);
    if worst >= limit {
        notes.push(format!("invariance residual {worst:e} exceeds {limit:e}"));
    }
    let checks_ok = [&plus, &minus]
        .iter()
        .all(|d| d.checks.isotropy < DISTRIBUTION_CHECK && d.checks.energy < DISTRIBUTION_CHECK && d.checks.field_residual < DISTRIBUTION_CHECK);
    if !checks_ok {
        notes.push(format!("isotropy, level or field check above {DISTRIBUTION_CHECK:e}"));
    }
    let ok = converged && worst < limit && checks_ok;
    Ok(Outcome {
        status: if ok { "invariant" } else { "unverified" }.into(),
        result: json!({
            "plus": distribution_json(&plus, &rp),
            "minus": distribution_json(&minus, &rm),
            "angles_plus_minus": angles,
            "shifts": shifts,
        }),
        series: vec![series],
        notes,
        failed: !ok,
        ..Outcome::default()
    })
}

fn anosov(ctx: &Context) -> Result<Outcome> {
    let (sys, cfg) = (ctx.sys(), ctx.cfg);
    let samples: Vec<PhasePoint> = if cfg.point.is_some() {
        vec![ctx.base.clone()]
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seeds.sampling);
        (0..cfg.sampling.anosov_samples)
            .map(|_| on_level(cfg, ctx.model, ctx.model.sample_point(&mut rng)?))
            .collect::<Result<_>>()?
    };
    let verdict = anosov_diagnose(sys, &samples, cfg.horizons.anosov, cfg.tolerances.limit, cfg.model.is_compact())?;
    let nonpositive: Vec<_> =
        samples.iter().map(|s| nonpositive_criterion(sys, s, cfg.horizons.nonpositive)).collect::<Result<_>>()?;
    let m = sys.dof() - 1;
    let mut b = vec![0.0; m];
    b[0] = 1.0;
    let growth = horizontal_growth_profile(sys, &samples[0], &vec![0.0; m], &b, cfg.horizons.anosov, GROWTH_SAMPLES)?;
    let mut series = Series::new("growth.csv", vec!["t".into(), "horizontal".into(), "total".into()]);
    for i in 0..growth.times.len() {
        series.push(vec![growth.times[i], growth.horizontal[i], growth.total[i]]);
    }
    let status = serde_json::to_value(verdict.status).expect("status serializes");
    let hypothesis_violations = verdict.hypothesis_violations;
    Ok(Outcome {
        status: status.as_str().unwrap_or_default().to_string(),
        result: json!({
            "c1": verdict.c1,
            "c2": verdict.c2,
            "verdict": verdict,
            "nonpositive": nonpositive,
            "growth": { "monotone": growth.monotone, "hypothesis_violation": growth.hypothesis_violation },
        }),
        series: vec![series],
        hypothesis_violation: hypothesis_violations > 0,
        ..Outcome::default()
    })
}

fn entropy(ctx: &Context) -> Result<Outcome> {
    let (sys, cfg) = (ctx.sys(), ctx.cfg);
    let mut sampler = MeasureSampler::for_model(ctx.model, cfg.sampling.mode, cfg.sampling.entropy_samples, cfg.seeds.sampling);
    if let Some(c) = cfg.energy {
        sampler.energy = c;
    }
    sampler.horizon = cfg.horizons.entropy;
    sampler.burn_in = cfg.sampling.burn_in;
    let report = entropy_bounds(sys, &sampler)?;
    let total = total_curvature_check(sys, &sampler, cfg.horizons.conjugate)?;
    let holds = report.bound1_holds != Some(false) && report.bound2_holds != Some(false);
    let (status, hypothesis_violation) = match total.status {
        TotalCurvatureStatus::HypothesisViolation => ("hypothesis_violation", true),
        TotalCurvatureStatus::Fail => ("total_curvature_positive", false),
        TotalCurvatureStatus::Pass if holds => ("bounds_hold", false),
        TotalCurvatureStatus::Pass => ("bound_violated", false),
    };
    Ok(Outcome {
        status: status.into(),
        result: json!({ "sampler": sampler, "bounds": report, "total_curvature": total }),
        hypothesis_violation,
        ..Outcome::default()
    })
}

fn riccati_lab(ctx: &Context) -> Result<Outcome> {
    let cfg = ctx.cfg;
    let table;
    let problem = match &cfg.riccati.curvature {
        Some(r) => {
            let m = r.len();
            let mat = Mat::from_row_iterator(m, m, r.iter().flatten().copied());
            if asymmetry(&mat) > 0.0 {
                return Err(HamError::InvalidArgument("riccati.curvature must be symmetric".into()));
            }
            RiccatiProblem::constant(mat)
        }
        None => {
            table = OrbitCurvature::new(ctx.sys(), &ctx.base)?;
            table.problem()
        }
    };
    let times = grid(cfg.horizons.riccati, cfg.riccati.step.unwrap_or(SERIES_STEP));
    let fund = fundamental(&problem, &times)?;
    let m = fund.size;
    let mut notes = Vec::new();
    let residual = match riccati_from_fundamental(&fund) {
        Ok(s) => Some(s.residual),
        Err(e) => {
            notes.push(format!("S(t) residual unavailable: {e}"));
            None
        }
    };
    let mut columns = vec!["t".to_string(), "det_b".into(), "trace_s".into()];
    columns.extend(entry_columns("s", &Mat::zeros(m, m)));
    let mut series = Series::new("riccati.csv", columns);
    for (i, &t) in fund.times.iter().enumerate() {
        let mut row = vec![t, fund.det_b[i]];
        match riccati_at(&fund, t).ok().filter(|_| t != 0.0) {
            Some(s) => row.extend(std::iter::once(s.trace()).chain(entries(&s))),
            None => row.extend(std::iter::repeat_n(f64::NAN, m * m + 1)),
        }
        series.push(row);
    }
    let mut limits = serde_json::Map::new();
    for (key, dir) in [("plus", Direction::Plus), ("minus", Direction::Minus)] {
        match limit_riccati(&problem, dir, &[0.0], cfg.tolerances.limit) {
            Ok(l) => {
                limits.insert(
                    key.into(),
                    json!({
                        "u0": l.at(0.0).map(rows),
                        "converged": l.converged,
                        "convergence_gap": l.convergence_gap,
                        "monotonicity": l.monotonicity,
                    }),
                );
            }
            Err(e) => notes.push(format!("limit {key} unavailable: {e}")),
        }
    }
    let singular: Vec<Value> = fund
        .singular_times
        .iter()
        .map(|s| json!({ "t": s.t, "multiplicity": s.multiplicity, "degenerate": s.degenerate }))
        .collect();
    Ok(Outcome {
        status: "complete".into(),
        result: json!({
            "size": m,
            "source": if cfg.riccati.curvature.is_some() { "constant" } else { "reduced_orbit" },
            "singular_times": singular,
            "wronskian_drift": fund.wronskian_drift,
            "riccati_residual": residual,
            "limits": limits,
        }),
        series: vec![series],
        notes,
        ..Outcome::default()
    })
}

struct Check {
    name: String,
    value: f64,
    limit: f64,
    /// `value ≥ limit` passes instead of `value < limit`.
    lower: bool,
}

impl Check {
    fn below(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, limit, lower: false }
    }

    fn above(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, limit, lower: true }
    }

    fn pass(&self) -> bool {
        if self.lower {
            self.value >= self.limit
        } else {
            self.value < self.limit
        }
    }
}

/// Closed forms of `Ṡ + S² + K = 0`, `S ~ 1/t`, on `[0.1, 3]`.
fn riccati_closed_forms() -> Result<f64> {
    let times = uniform_grid(0.1, 3.0, 30);
    let mut worst: f64 = 0.0;
    for k in [-1.0f64, 0.0, 1.0] {
        let problem = RiccatiProblem::scalar(k);
        let fund = fundamental(&problem, &times)?;
        for &t in &times {
            let exact = match k {
                k if k < 0.0 => 1.0 / t.tanh(),
                k if k > 0.0 => 1.0 / t.tan(),
                _ => 1.0 / t,
            };
            worst = worst.max((riccati_at(&fund, t)?[(0, 0)] - exact).abs());
        }
    }
    Ok(worst)
}

fn validate(ctx: &Context) -> Result<Outcome> {
    let (sys, base, tol) = (ctx.sys(), &ctx.base, ctx.tol());
    let agreement = ctx.cfg.tolerances.agreement;
    let z = base.z.as_slice();
    let mut checks = Vec::new();
    let frame = curvature_operator(sys, base, CurvatureMethod::Frame, tol)?;
    let bracket = curvature_operator(sys, base, CurvatureMethod::Bracket, tol)?;
    checks.push(Check::below("frame_vs_bracket", max_abs(&(&frame.matrix - &bracket.matrix)), agreement));
    if let Some(k) = ctx.model.full_curvature_oracle(z) {
        checks.push(Check::below("frame_vs_oracle", (frame.matrix[(0, 0)] - k).abs(), agreement));
    }
    let fr = jacobi_frame(sys, base, &uniform_grid(-1.0, 1.0, 5), tol, FrameOptions::default())?;
    checks.push(Check::below("frame_darboux", fr.darboux_residual, DARBOUX_LIMIT));
    if sys.dof() >= 2 {
        let direct = reduced_curvature_direct(sys, base, tol)?;
        if let Some(k) = ctx.model.reduced_curvature_oracle(z) {
            checks.push(Check::below("reduced_vs_oracle", (direct[(0, 0)] - k).abs(), agreement));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seeds.sampling);
        let (_, d) = reduced_curvature_via_formula(sys, base, tol, FORM_SAMPLES, &mut rng)?;
        checks.push(Check::below("reduced_formula_vs_direct", d.mismatch, agreement));
        let gap = d.quadratic_forms.iter().map(|q| q.gap).fold(f64::INFINITY, f64::min);
        checks.push(Check::above("reduced_form_gap", gap, GAP_FLOOR));
        let local = local_reduced_curvature(sys, z, None)?;
        let (el, _) = sym_eigen(&local.curvature);
        let (ed, _) = sym_eigen(&direct);
        let spread = el.iter().zip(&ed).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        checks.push(Check::below("local_vs_direct", spread, agreement));
    }
    checks.push(Check::below("riccati_closed_forms", riccati_closed_forms()?, agreement));
    let ok = checks.iter().all(Check::pass);
    let notes = checks.iter().filter(|c| !c.pass()).map(|c| format!("{} failed: {:e} against {:e}", c.name, c.value, c.limit)).collect();
    let list: Vec<Value> = checks
        .iter()
        .map(|c| json!({ "name": c.name, "value": c.value, "limit": c.limit, "pass": c.pass() }))
        .collect();
    Ok(Outcome {
        status: if ok { "pass" } else { "fail" }.into(),
        result: json!({ "base": z, "checks": list }),
        notes,
        failed: !ok,
        ..Outcome::default()
    })
}
