//! Invariant-measure sampling, Birkhoff averages, Lyapunov sums, the
//! total-curvature sign check and the two entropy upper bounds.
//!
//! Every sample draws from its own ChaCha8 stream (`set_stream(i)`) and
//! results are collected in sample order, so reports do not depend on the
//! thread schedule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HamError, Result};
use crate::hyperbolicity::{conjugate_scan, OrbitCurvature, TABLE_STEP};
use crate::linalg::{orthonormal_columns, sym_eigen, Kahan, Mat};
use crate::models::{level_point, Model};
use crate::reduction::local_reduced_curvature;
use crate::riccati::{limit_riccati, solve_linear, Direction};
use crate::symplectic::{PhasePoint, PhaseSystem};

/// Largest accepted `|H − c|` of a sample.
pub const LEVEL_TOL: f64 = 1e-9;
/// Tolerance of the `U⁻` limits.
pub const LIMIT_TOL: f64 = 1e-8;
/// Numerical error allowed on top of the statistical one when two routes
/// compute the same average.
pub const ROUTE_FLOOR: f64 = 1e-3;
/// Size below which an average reduced trace counts as zero; the pointwise
/// reduced curvature is accurate to about 1e-9.
pub const TRACE_FLOOR: f64 = 1e-9;
/// Numerical error of an entropy estimate against a bound, on top of the
/// statistical error; equality cases meet at this level.
pub const BOUND_SLACK: f64 = 1e-6;
/// Number of batches for batch-means standard errors.
const BATCHES: usize = 10;
/// Draws used to bound the rejection weight.
const PILOT_DRAWS: usize = 512;
/// Spacing of the `U⁻` grid along trajectories.
const LIMIT_GRID_STEP: f64 = 0.1;
/// Renormalization interval of the QR Lyapunov sum.
const QR_WINDOW: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    /// Time averages along trajectories started from level-set samples.
    TrajectoryBirkhoff,
    /// Independent Liouville samples of the energy level.
    LevelSetRejection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasureSampler {
    pub mode: SamplingMode,
    pub energy: f64,
    /// Box of base points in chart `chart`.
    pub x_box: Vec<(f64, f64)>,
    pub chart: usize,
    pub burn_in: f64,
    pub horizon: f64,
    pub sample_count: usize,
    pub seed: u64,
    /// Whether Liouville measure restricted to the box is flow-invariant.
    pub invariant_box: bool,
}

impl MeasureSampler {
    /// Sampler on the model's default energy level and sampling box.
    pub fn for_model(model: &Model, mode: SamplingMode, sample_count: usize, seed: u64) -> Self {
        Self {
            mode,
            energy: model.spec.default_energy(),
            x_box: model.sampling_box(),
            chart: 0,
            burn_in: 5.0,
            horizon: 50.0,
            sample_count,
            seed,
            invariant_box: model.sampling_box_is_invariant(),
        }
    }

    fn validate(&self, sys: &dyn PhaseSystem) -> Result<()> {
        let n = sys.dof();
        if n < 2 {
            return Err(HamError::InvalidArgument("reduced curvature needs at least two degrees of freedom".into()));
        }
        if self.x_box.len() != n || self.x_box.iter().any(|(a, b)| !(a < b)) {
            return Err(HamError::InvalidArgument(format!("sampling box needs {n} non-empty intervals")));
        }
        if self.sample_count == 0 || !(self.horizon > 0.0) || !(self.burn_in >= 0.0) {
            return Err(HamError::InvalidArgument("need samples, a positive horizon and a non-negative burn-in".into()));
        }
        Ok(())
    }

    /// One proposal: base point uniform in the box, momentum direction
    /// uniform on the sphere, and its Liouville weight `ρⁿ⁻¹ / (H_p·u)`.
    fn propose(&self, sys: &dyn PhaseSystem, rng: &mut ChaCha8Rng) -> Option<(PhasePoint, f64)> {
        let n = sys.dof();
        let x: Vec<f64> = self.x_box.iter().map(|&(a, b)| rng.gen_range(a..b)).collect();
        let dir: Vec<f64> = (0..n).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        let z = level_point(sys, &x, &dir, self.energy).ok()?;
        let p = z.rows(n, n);
        let rho = p.norm();
        let hp_u = sys.gradient(z.as_slice()).rows(n, n).dot(&p) / rho;
        if !(hp_u > 0.0) {
            return None;
        }
        let point = PhasePoint::in_chart(self.chart, z.as_slice());
        Some((point, rho.powi(n as i32 - 1) / hp_u))
    }

    /// Upper bound of the rejection weight from a pilot run.
    fn weight_bound(&self, sys: &dyn PhaseSystem) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(u64::MAX);
        let max = (0..PILOT_DRAWS).filter_map(|_| self.propose(sys, &mut rng)).map(|(_, w)| w).fold(0.0, f64::max);
        2.0 * max
    }

    /// Liouville sample `i` of the energy level.
    pub fn sample(&self, sys: &dyn PhaseSystem, i: usize, bound: f64) -> Result<(PhasePoint, bool)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(i as u64);
        for _ in 0..100_000 {
            if let Some((z, w)) = self.propose(sys, &mut rng) {
                if rng.gen::<f64>() * bound < w {
                    let off = (sys.hamiltonian(z.z.as_slice()) - self.energy).abs();
                    if !(off < LEVEL_TOL) {
                        return Err(HamError::InvalidArgument(format!("sample off the level set by {off:e}")));
                    }
                    return Ok((z, w > bound));
                }
            }
        }
        Err(HamError::InvalidArgument("rejection sampler found no point in the box".into()))
    }

    /// All sample points, in order, with the number whose weight exceeded
    /// the pilot bound.
    pub fn points(&self, sys: &dyn PhaseSystem) -> Result<(Vec<PhasePoint>, usize)> {
        self.validate(sys)?;
        let bound = self.weight_bound(sys);
        if !(bound > 0.0) {
            return Err(HamError::InvalidArgument("energy level does not meet the sampling box".into()));
        }
        let drawn: Vec<(PhasePoint, bool)> =
            (0..self.sample_count).into_par_iter().map(|i| self.sample(sys, i, bound)).collect::<Result<_>>()?;
        let exceeded = drawn.iter().filter(|d| d.1).count();
        Ok((drawn.into_iter().map(|d| d.0).collect(), exceeded))
    }
}

fn mean(values: &[f64]) -> f64 {
    let mut s = Kahan::default();
    values.iter().for_each(|&v| s.add(v));
    s.value() / values.len() as f64
}

/// Mean and batch-means standard error of equally weighted values.
fn batch_means(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let m = mean(values);
    let b = BATCHES.min(n);
    if b < 2 {
        return (m, 0.0);
    }
    let size = n / b;
    let batches: Vec<f64> = (0..b).map(|k| mean(&values[k * size..(k + 1) * size])).collect();
    let bm = mean(&batches);
    let mut var = Kahan::default();
    batches.iter().for_each(|&v| var.add((v - bm) * (v - bm)));
    (m, (var.value() / ((b - 1) * b) as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Observable {
    Constant(f64),
    /// `𝔯̃ = tr 𝓡̃`.
    ReducedTrace,
    /// `tr U⁻(0)`.
    TraceUMinus,
    /// `Σ |1 − λᵢ|` over the eigenvalues of `𝓡̃`.
    EigenDefect,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Average {
    pub mean: f64,
    pub stderr: f64,
    pub used: usize,
    pub discarded: usize,
}

/// Per-sample results; trajectory mode contributes batch means of its
/// time series, level-set mode single values.
#[derive(Debug, Clone, Default)]
struct SampleValues {
    trace: Vec<f64>,
    defect: Vec<f64>,
    eigen_min: f64,
    eigen_max: f64,
    trace_max_abs: f64,
    trace_u_minus: Option<Vec<f64>>,
    qr: Option<f64>,
    /// Why `U⁻` or the QR sum is missing.
    lyapunov_error: Option<String>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Wants {
    curvature: bool,
    u_minus: bool,
    qr: bool,
}

fn split_means(series: &[f64]) -> Vec<f64> {
    let b = BATCHES.min(series.len());
    let size = series.len() / b;
    (0..b).map(|k| mean(&series[k * size..(k + 1) * size])).collect()
}

fn node_times(t0: f64, horizon: f64) -> Vec<f64> {
    let n = (horizon / TABLE_STEP).round() as usize;
    (0..=n).map(|k| t0 + k as f64 * TABLE_STEP).collect()
}

fn curvature_stats(r: &Mat) -> (f64, f64, f64, f64) {
    let (ev, _) = sym_eigen(r);
    let defect = ev.iter().map(|l| (1.0 - l).abs()).sum();
    let lo = ev.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (r.trace(), defect, lo, hi)
}

fn evaluate(sys: &dyn PhaseSystem, sampler: &MeasureSampler, point: &PhasePoint, wants: Wants) -> Result<SampleValues> {
    let mut out = SampleValues { eigen_min: f64::INFINITY, eigen_max: f64::NEG_INFINITY, ..Default::default() };
    let trajectory = sampler.mode == SamplingMode::TrajectoryBirkhoff;
    let table = OrbitCurvature::new(sys, point)?;
    let t0 = if trajectory { sampler.burn_in } else { 0.0 };
    if wants.curvature {
        if trajectory {
            let mut trace = Vec::new();
            let mut defect = Vec::new();
            for t in node_times(t0, sampler.horizon) {
                let (tr, d, lo, hi) = curvature_stats(&table.at(t)?);
                trace.push(tr);
                defect.push(d);
                out.trace_max_abs = out.trace_max_abs.max(tr.abs());
                out.eigen_min = out.eigen_min.min(lo);
                out.eigen_max = out.eigen_max.max(hi);
            }
            out.trace = split_means(&trace);
            out.defect = split_means(&defect);
        } else {
            let local = local_reduced_curvature(sys, point.z.as_slice(), None)?;
            let (tr, d, lo, hi) = curvature_stats(&local.curvature);
            out = SampleValues { trace: vec![tr], defect: vec![d], eigen_min: lo, eigen_max: hi, trace_max_abs: tr.abs(), ..out };
        }
    }
    if wants.u_minus || wants.qr {
        let lyap = || -> Result<(Option<Vec<f64>>, Option<f64>)> {
            let u = if wants.u_minus {
                let grid: Vec<f64> = if trajectory {
                    let n = (sampler.horizon / LIMIT_GRID_STEP).round() as usize;
                    (0..=n).map(|k| t0 + k as f64 * LIMIT_GRID_STEP).collect()
                } else {
                    vec![0.0]
                };
                let lim = limit_riccati(&table.problem(), Direction::Minus, &grid, LIMIT_TOL)?.require_converged()?;
                let traces: Vec<f64> = lim.u.iter().map(|u| u.trace()).collect();
                Some(if trajectory { split_means(&traces) } else { traces })
            } else {
                None
            };
            let qr = if wants.qr { Some(qr_lyapunov_sum(&table, t0, sampler.horizon)?) } else { None };
            Ok((u, qr))
        };
        match lyap() {
            Ok((u, qr)) => {
                out.trace_u_minus = u;
                out.qr = qr;
            }
            Err(e) => out.lyapunov_error = Some(e.to_string()),
        }
    }
    Ok(out)
}

/// Sum of the `m` largest Lyapunov exponents of `ÿ = −𝓡̃y` in the frame
/// metric, by repeated QR of `[y; ẏ]`. The first quarter of the window
/// aligns the frame and is not counted.
fn qr_lyapunov_sum(table: &OrbitCurvature<'_>, t0: f64, horizon: f64) -> Result<f64> {
    let m = table.dim;
    let problem = table.problem();
    let windows = (horizon / QR_WINDOW).round().max(4.0) as usize;
    let skip = windows / 4;
    // generic start: all coordinates mixed
    let mut frame = orthonormal_columns(&Mat::from_fn(2 * m, m, |i, j| 1.0 + ((i * 7 + j * 3) % 5) as f64 / 5.0), 1e-12);
    let mut log_volume = Kahan::default();
    for w in 0..windows {
        let start = t0 + w as f64 * QR_WINDOW;
        let shifted = problem.shifted(start);
        let y0 = frame.rows(0, m).into_owned();
        let yd0 = frame.rows(m, m).into_owned();
        let sol = solve_linear(&shifted, &y0, &yd0, &[0.0, QR_WINDOW])?;
        let mut next = Mat::zeros(2 * m, m);
        next.view_mut((0, 0), (m, m)).copy_from(&sol.b[1]);
        next.view_mut((m, 0), (m, m)).copy_from(&sol.b_dot[1]);
        let qr = next.qr();
        let r = qr.r();
        if w >= skip {
            (0..m).for_each(|i| log_volume.add(r[(i, i)].abs().ln()));
        }
        frame = qr.q();
    }
    Ok(log_volume.value() / ((windows - skip) as f64 * QR_WINDOW))
}

struct Collected {
    values: Vec<SampleValues>,
    discarded: usize,
    notes: Vec<String>,
}

fn collect(sys: &dyn PhaseSystem, sampler: &MeasureSampler, wants: Wants) -> Result<Collected> {
    let (points, exceeded) = sampler.points(sys)?;
    let mut notes = Vec::new();
    if exceeded > 0 {
        notes.push(format!("{exceeded} samples exceeded the pilot weight bound"));
    }
    match sampler.mode {
        SamplingMode::TrajectoryBirkhoff => notes.push("trajectory averages equal Liouville averages only for ergodic flows".into()),
        SamplingMode::LevelSetRejection if !sampler.invariant_box => notes.push(
            "sampling box is not flow-invariant; averages are not over an invariant measure and the bounds are not implied".into(),
        ),
        _ => {}
    }
    let results: Vec<std::result::Result<SampleValues, String>> =
        points.par_iter().map(|p| evaluate(sys, sampler, p, wants).map_err(|e| e.to_string())).collect();
    let mut values = Vec::new();
    let mut discarded = 0;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => {
                if let Some(why) = &v.lyapunov_error {
                    notes.push(format!("sample {i} excluded from the Lyapunov average: {why}"));
                }
                values.push(v)
            }
            Err(why) => {
                discarded += 1;
                notes.push(format!("sample {i} discarded: {why}"));
            }
        }
    }
    Ok(Collected { values, discarded, notes })
}

fn average_of(values: &[Vec<f64>], discarded: usize) -> Option<Average> {
    let flat: Vec<f64> = values.iter().flatten().copied().collect();
    if flat.is_empty() {
        return None;
    }
    let (m, se) = batch_means(&flat);
    Some(Average { mean: m, stderr: se, used: values.len(), discarded })
}

/// Birkhoff average of `observable` over the sampler's measure.
pub fn birkhoff_average(sys: &dyn PhaseSystem, sampler: &MeasureSampler, observable: Observable) -> Result<(Average, Vec<String>)> {
    if let Observable::Constant(c) = observable {
        sampler.validate(sys)?;
        return Ok((Average { mean: c, stderr: 0.0, used: sampler.sample_count, discarded: 0 }, Vec::new()));
    }
    let wants = match observable {
        Observable::TraceUMinus => Wants { u_minus: true, ..Wants::default() },
        _ => Wants { curvature: true, ..Wants::default() },
    };
    let c = collect(sys, sampler, wants)?;
    let total = c.values.len() + c.discarded;
    let series: Vec<Vec<f64>> = c
        .values
        .into_iter()
        .filter_map(|v| match observable {
            Observable::ReducedTrace => Some(v.trace),
            Observable::EigenDefect => Some(v.defect),
            _ => v.trace_u_minus,
        })
        .collect();
    let avg = average_of(&series, total - series.len()).ok_or_else(|| HamError::InvalidArgument("every sample was discarded".into()))?;
    Ok((avg, c.notes))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LyapunovReport {
    /// Average of `tr U⁻(0)`, the Pesin-side entropy estimate.
    pub riccati: Average,
    /// Average of the QR Lyapunov sum over the same samples.
    pub qr: Average,
    pub difference: f64,
    /// `|difference| < 3·max(combined stderr, ROUTE_FLOOR)`.
    pub consistent: bool,
    pub notes: Vec<String>,
}

fn lyapunov_from(c: &Collected) -> Option<LyapunovReport> {
    let kept: Vec<&SampleValues> = c.values.iter().filter(|v| v.trace_u_minus.is_some() && v.qr.is_some()).collect();
    if kept.is_empty() {
        return None;
    }
    let excluded = c.values.len() - kept.len() + c.discarded;
    let riccati = average_of(&kept.iter().map(|v| v.trace_u_minus.clone().unwrap()).collect::<Vec<_>>(), excluded)?;
    let qr = average_of(&kept.iter().map(|v| vec![v.qr.unwrap()]).collect::<Vec<_>>(), excluded)?;
    let difference = riccati.mean - qr.mean;
    let combined = (riccati.stderr.powi(2) + qr.stderr.powi(2)).sqrt();
    let consistent = difference.abs() < 3.0 * combined.max(ROUTE_FLOOR);
    Some(LyapunovReport { riccati, qr, difference, consistent, notes: c.notes.clone() })
}

/// Entropy estimate `∫ tr U⁻(0) dμ`, cross-checked by a QR Lyapunov sum.
pub fn lyapunov_via_riccati(sys: &dyn PhaseSystem, sampler: &MeasureSampler) -> Result<LyapunovReport> {
    let c = collect(sys, sampler, Wants { u_minus: true, qr: true, ..Wants::default() })?;
    lyapunov_from(&c).ok_or_else(|| HamError::Hypothesis("no sample has a convergent U⁻ limit".into()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Bound {
    pub value: f64,
    pub stderr: f64,
    pub valid: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenSummary {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErgodicReport {
    pub mode: SamplingMode,
    pub mean_reduced_trace: Average,
    pub lyapunov: Option<LyapunovReport>,
    /// Pesin-side estimate, when the `U⁻` limits exist.
    pub entropy_estimate: Option<f64>,
    pub entropy_stderr: Option<f64>,
    /// `√(n−1)·√(−mean tr 𝓡̃)`; invalid when the mean is positive.
    pub bound1: Bound,
    /// `½·mean Σ|1 − λᵢ|`.
    pub bound2: Bound,
    pub eigenvalues: EigenSummary,
    /// `estimate ≤ bound + 2·stderr + BOUND_SLACK` for each valid bound.
    pub bound1_holds: Option<bool>,
    pub bound2_holds: Option<bool>,
    pub notes: Vec<String>,
}

/// Both entropy bounds with the Pesin-side estimate they bound.
pub fn entropy_bounds(sys: &dyn PhaseSystem, sampler: &MeasureSampler) -> Result<ErgodicReport> {
    let c = collect(sys, sampler, Wants { curvature: true, u_minus: true, qr: true })?;
    let with_curvature: Vec<&SampleValues> = c.values.iter().filter(|v| !v.trace.is_empty()).collect();
    let trace = average_of(&with_curvature.iter().map(|v| v.trace.clone()).collect::<Vec<_>>(), c.discarded)
        .ok_or_else(|| HamError::InvalidArgument("every sample was discarded".into()))?;
    let defect = average_of(&with_curvature.iter().map(|v| v.defect.clone()).collect::<Vec<_>>(), c.discarded).unwrap();
    let n = sys.dof() as f64;
    let mut notes = c.notes.clone();
    let bound1 = if trace.mean <= TRACE_FLOOR {
        let value = (n - 1.0).sqrt() * (-trace.mean).max(0.0).sqrt();
        // first-order propagation of the trace error
        let stderr = if value > 0.0 { (n - 1.0) * trace.stderr / (2.0 * value) } else { ((n - 1.0) * trace.stderr).sqrt() };
        Bound { value, stderr, valid: true }
    } else {
        notes.push(format!("mean reduced trace {} > 0: first bound undefined", trace.mean));
        Bound { value: f64::NAN, stderr: f64::NAN, valid: false }
    };
    let bound2 = Bound { value: 0.5 * defect.mean, stderr: 0.5 * defect.stderr, valid: true };
    let lyapunov = lyapunov_from(&c);
    if lyapunov.is_none() {
        notes.push("no sample has a convergent U⁻ limit; entropy estimate unavailable".into());
    }
    let entropy_estimate = lyapunov.as_ref().map(|l| l.riccati.mean);
    let entropy_stderr = lyapunov.as_ref().map(|l| l.riccati.stderr);
    let holds = |b: &Bound| match (entropy_estimate, entropy_stderr) {
        (Some(h), Some(se)) if b.valid => Some(h <= b.value + 2.0 * se.max(b.stderr) + BOUND_SLACK),
        _ => None,
    };
    let eigenvalues = EigenSummary {
        min: with_curvature.iter().map(|v| v.eigen_min).fold(f64::INFINITY, f64::min),
        max: with_curvature.iter().map(|v| v.eigen_max).fold(f64::NEG_INFINITY, f64::max),
    };
    Ok(ErgodicReport {
        mode: sampler.mode,
        mean_reduced_trace: trace,
        bound1_holds: holds(&bound1),
        bound2_holds: holds(&bound2),
        lyapunov,
        entropy_estimate,
        entropy_stderr,
        bound1,
        bound2,
        eigenvalues,
        notes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TotalCurvatureStatus {
    Pass,
    Fail,
    /// Conjugate points on a sampled orbit; the sign statement does not apply.
    HypothesisViolation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TotalCurvatureReport {
    pub status: TotalCurvatureStatus,
    pub mean: Option<Average>,
    /// `max |𝔯̃|` over the samples, reported when the mean is within
    /// `2·stderr + TRACE_FLOOR` of 0.
    pub max_abs_trace: Option<f64>,
    pub conjugate_horizon: f64,
    pub notes: Vec<String>,
}

/// Sign of `∫ 𝔯̃ dμ` on systems without conjugate points.
pub fn total_curvature_check(sys: &dyn PhaseSystem, sampler: &MeasureSampler, conjugate_horizon: f64) -> Result<TotalCurvatureReport> {
    let (points, _) = sampler.points(sys)?;
    let span = if sampler.mode == SamplingMode::TrajectoryBirkhoff { sampler.burn_in + sampler.horizon } else { 0.0 };
    let horizon = conjugate_horizon.max(span);
    let hits: Vec<Option<(usize, f64)>> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            conjugate_scan(sys, p, horizon, true).ok().and_then(|r| r.conjugate_times.first().map(|c| (i, c.t)))
        })
        .collect();
    if let Some((i, t)) = hits.into_iter().flatten().next() {
        return Ok(TotalCurvatureReport {
            status: TotalCurvatureStatus::HypothesisViolation,
            mean: None,
            max_abs_trace: None,
            conjugate_horizon: horizon,
            notes: vec![format!("sample {i} has a conjugate point at t = {t}")],
        });
    }
    let c = collect(sys, sampler, Wants { curvature: true, ..Wants::default() })?;
    let series: Vec<Vec<f64>> = c.values.iter().map(|v| v.trace.clone()).collect();
    let mean = average_of(&series, c.discarded).ok_or_else(|| HamError::InvalidArgument("every sample was discarded".into()))?;
    let slack = 2.0 * mean.stderr + TRACE_FLOOR;
    let status = if mean.mean <= slack { TotalCurvatureStatus::Pass } else { TotalCurvatureStatus::Fail };
    let max_abs_trace = (mean.mean.abs() <= slack)
        .then(|| c.values.iter().map(|v| v.trace_max_abs).fold(0.0, f64::max));
    Ok(TotalCurvatureReport { status, mean: Some(mean), max_abs_trace, conjugate_horizon: horizon, notes: c.notes })
}
