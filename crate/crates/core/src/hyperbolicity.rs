//! Conjugate points, the invariant distributions `Δ±`, and hyperbolicity
//! diagnostics built on the reduced curvature along an orbit.
//!
//! Vectors of the reduced space are written in the canonical frame at the
//! base point, `w̃ = Ẽ(0)a + F̃(0)b`, and the frame metric makes `Ẽ(0), F̃(0)`
//! orthonormal. Along the orbit `d̃φ_t w̃ = Ẽ(t)x(t) + F̃(t)y(t)` with
//! `ÿ = −𝓡̃(t)y`, `x = −ẏ`; `y` is the horizontal part.

use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HamError, Result};
use crate::jacobi::FrameOptions;
use crate::linalg::{inverse, max_abs, max_eig, min_eig, orthonormal_columns, polar_orthogonal, principal_angles, singular_values, sym, Mat};
use crate::reduction::{local_reduced_curvature, LocalReduced, reduce_space, reduced_jacobi_frame, ReducedSpace};
use crate::riccati::{fundamental, limit_riccati, solve_linear, Direction, LimitSolution, RiccatiProblem, TANGENCY_THRESHOLD};
use crate::symplectic::{flow, linearized_flow, uniform_grid, PhasePoint, PhaseSystem, Trajectory};

/// Smallest principal angle (rad) for two subspaces to count as transversal.
pub const TRANSVERSAL_ANGLE: f64 = 1e-3;
/// Node spacing of the along-orbit curvature table.
pub const TABLE_STEP: f64 = 0.02;
/// Decay rates must be below `−RATE_MARGIN` to count as exponential contraction.
pub const RATE_MARGIN: f64 = 0.05;
/// Eigenvalue below which the reduced curvature counts as negative.
pub const NEGATIVE_THRESHOLD: f64 = 1e-6;
/// Eigenvalue above which the reduced curvature counts as positive.
pub const POSITIVE_SLACK: f64 = 1e-8;
/// Relative drift of `J̃°(0)` out of `J̃°(t)` that counts as leaving.
pub const DRIFT_THRESHOLD: f64 = 1e-8;
/// Node spacing of the full conjugate-point scan.
const SCAN_STEP: f64 = 0.05;
const FIRST_CHUNK: f64 = 20.0;
/// Conditioning of the projected kernel reference below which it is re-anchored.
const REFERENCE_QUALITY: f64 = 0.5;
const FLOW_TOL: f64 = 1e-12;

/// Node values of one side of the table, at `±k·TABLE_STEP`.
struct Side {
    curvature: Vec<Mat>,
    /// State at the last node.
    end: PhasePoint,
    /// Gauge at the last node (`m > 1` only).
    gauge: Mat,
    /// Chart of the starting point; `m > 1` tables cannot follow chart switches.
    chart: usize,
    /// Kernel reference of the adapted basis family in use.
    k_ref: Mat,
}

/// Reduced curvature `𝓡̃_α(t)` along the orbit of `α`, from the pointwise
/// reduced curvature at `φ_t(α)`, sampled lazily and interpolated by
/// four-point Lagrange polynomials.
///
/// The basis is the adapted vertical basis at `α` carried by the gauge
/// `Q̇ = −½Ω̃Q`, so the table is the curvature of a canonical frame with
/// `Ẽ(0) = initial_basis`. The adapted family projects a fixed kernel
/// reference; when the projection degenerates the reference is re-anchored
/// to the adapted kernel at the last good node, where both families agree.
pub struct OrbitCurvature<'s> {
    sys: &'s dyn PhaseSystem,
    pub alpha: PhasePoint,
    pub dim: usize,
    /// `Ẽ(0)` in the reduced coordinates of `reduce_space(α)`.
    pub initial_basis: Mat,
    sides: Mutex<[Side; 2]>,
}

impl<'s> OrbitCurvature<'s> {
    pub fn new(sys: &'s dyn PhaseSystem, alpha: &PhasePoint) -> Result<Self> {
        let n = sys.dof();
        if n < 2 {
            return Err(HamError::InvalidArgument("reduced curvature needs at least two degrees of freedom".into()));
        }
        let m = n - 1;
        let local = local_reduced_curvature(sys, alpha.z.as_slice(), None)?;
        let space = reduce_space(sys, alpha)?.space()?;
        let mut vertical = Mat::zeros(2 * n, m);
        vertical.view_mut((n, 0), (n, m)).copy_from(&local.kernel);
        let initial_basis = space.project(&vertical);
        let side = |_| Side {
            curvature: vec![sym(&local.curvature)],
            end: alpha.clone(),
            gauge: Mat::identity(m, m),
            chart: alpha.chart,
            k_ref: local.kernel.clone(),
        };
        Ok(Self { sys, alpha: alpha.clone(), dim: m, initial_basis, sides: Mutex::new([side(0), side(1)]) })
    }

    fn local(&self, z: &[f64], k_ref: &Mat) -> Result<LocalReduced> {
        local_reduced_curvature(self.sys, z, Some(k_ref))
    }

    /// Smallest singular value of the reference projected off `H_p`,
    /// relative to that of the reference itself.
    fn reference_quality(&self, z: &[f64], k_ref: &Mat) -> f64 {
        let n = self.sys.dof();
        let hp = self.sys.gradient(z).rows(n, n).into_owned();
        let u = &hp / hp.norm();
        let k = k_ref - &u * (u.transpose() * k_ref);
        let (own, proj) = (singular_values(k_ref), singular_values(&k));
        proj.iter().cloned().fold(f64::INFINITY, f64::min) / own.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Appends nodes to one side until it holds `count` of them.
    fn extend(&self, side: &mut Side, forward: bool, count: usize) -> Result<()> {
        let have = side.curvature.len();
        if have >= count {
            return Ok(());
        }
        let sign = if forward { 1.0 } else { -1.0 };
        let new_nodes = (count - have).max((FIRST_CHUNK / TABLE_STEP) as usize).max(have);
        let span = new_nodes as f64 * TABLE_STEP;
        let traj = if forward {
            flow(self.sys, &side.end, 0.0, span, FLOW_TOL)?
        } else {
            flow(self.sys, &side.end, -span, 0.0, FLOW_TOL)?
        };
        if traj.truncated {
            return Err(HamError::OutOfDomain(format!(
                "orbit of the table leaves the chart domain near t = {}",
                sign * (have as f64 - 1.0) * TABLE_STEP + if forward { traj.t_hi } else { traj.t_lo }
            )));
        }
        let m = self.dim;
        // m > 1 needs Ω̃ at half steps for the gauge
        let sub = if m > 1 { 2 } else { 1 };
        let offsets: Vec<f64> = (1..=new_nodes * sub).map(|j| sign * j as f64 * TABLE_STEP / sub as f64).collect();
        let states: Vec<PhasePoint> = offsets.iter().map(|&t| traj.state(t)).collect::<Result<_>>()?;
        if m > 1 && states.iter().any(|s| s.chart != side.chart) {
            return Err(HamError::OutOfDomain("reduced curvature table crosses a chart switch".into()));
        }
        let h = sign * TABLE_STEP;
        let rhs = |om: &Mat, q: &Mat| -(om * q) * 0.5;
        let mut om0 = if m > 1 { self.local(side.end.z.as_slice(), &side.k_ref)?.omega } else { Mat::zeros(1, 1) };
        let mut q = side.gauge.clone();
        let mut k = 0;
        while k < new_nodes {
            // nodes whose samples all see a well-conditioned reference
            let mut stop = k;
            while stop < new_nodes
                && (0..sub).all(|j| self.reference_quality(states[sub * stop + j].z.as_slice(), &side.k_ref) >= REFERENCE_QUALITY)
            {
                stop += 1;
            }
            if stop == k {
                if k == 0 {
                    // re-anchor at the chunk start
                    side.k_ref = self.local(side.end.z.as_slice(), &side.k_ref)?.kernel;
                } else {
                    side.k_ref = self.local(states[sub * k - 1].z.as_slice(), &side.k_ref)?.kernel;
                }
                if m > 1 {
                    let z0 = if k == 0 { &side.end } else { &states[sub * k - 1] };
                    om0 = self.local(z0.z.as_slice(), &side.k_ref)?.omega;
                }
                stop = k + 1;
            }
            let k_ref = side.k_ref.clone();
            let samples: Vec<LocalReduced> =
                states[sub * k..sub * stop].par_iter().map(|s| self.local(s.z.as_slice(), &k_ref)).collect::<Result<_>>()?;
            if m == 1 {
                side.curvature.extend(samples.iter().map(|l| l.curvature.clone()));
            } else {
                for pair in samples.chunks(2) {
                    let (om_half, full) = (&pair[0].omega, &pair[1]);
                    let k1 = rhs(&om0, &q);
                    let k2 = rhs(om_half, &(&q + &k1 * (0.5 * h)));
                    let k3 = rhs(om_half, &(&q + &k2 * (0.5 * h)));
                    let k4 = rhs(&full.omega, &(&q + &k3 * h));
                    q = polar_orthogonal(&(&q + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)));
                    side.curvature.push(sym(&(q.transpose() * &full.curvature * &q)));
                    om0 = full.omega.clone();
                }
            }
            k = stop;
        }
        side.gauge = q;
        side.end = states.last().unwrap().clone();
        Ok(())
    }

    /// Node value at signed index `i`.
    fn node(sides: &[Side; 2], i: i64) -> &Mat {
        if i >= 0 {
            &sides[0].curvature[i as usize]
        } else {
            &sides[1].curvature[(-i) as usize]
        }
    }

    /// `𝓡̃_α(t)`, extending the table as needed.
    pub fn at(&self, t: f64) -> Result<Mat> {
        if !t.is_finite() {
            return Err(HamError::InvalidArgument(format!("non-finite time {t}")));
        }
        let u = t / TABLE_STEP;
        let i = u.floor() as i64;
        let (lo, hi) = (i - 1, i + 2);
        let mut sides = self.sides.lock().map_err(|_| HamError::InvalidArgument("curvature table poisoned".into()))?;
        let [fwd, bwd] = &mut *sides;
        if hi >= 0 {
            self.extend(fwd, true, hi as usize + 1)?;
        }
        if lo < 0 {
            self.extend(bwd, false, (-lo) as usize + 1)?;
        }
        let x = u - i as f64;
        // Lagrange weights on nodes −1, 0, 1, 2
        let w = [
            -x * (x - 1.0) * (x - 2.0) / 6.0,
            (x + 1.0) * (x - 1.0) * (x - 2.0) / 2.0,
            -(x + 1.0) * x * (x - 2.0) / 2.0,
            (x + 1.0) * x * (x - 1.0) / 6.0,
        ];
        let mut out = Mat::zeros(self.dim, self.dim);
        for (k, wk) in w.iter().enumerate() {
            out += Self::node(&sides, lo + k as i64) * *wk;
        }
        Ok(out)
    }

    /// Riccati problem `B̈ + 𝓡̃_α(t)B = 0` backed by this table.
    pub fn problem(&self) -> RiccatiProblem<'_> {
        RiccatiProblem::from_fn(self.dim, move |t| self.at(t))
    }

    /// Largest and smallest eigenvalues over the nodes in `[t_lo, t_hi]`.
    pub fn eigen_range(&self, t_lo: f64, t_hi: f64) -> Result<Vec<(f64, f64, f64)>> {
        let k_lo = (t_lo / TABLE_STEP).ceil() as i64;
        let k_hi = (t_hi / TABLE_STEP).floor() as i64;
        (k_lo..=k_hi)
            .map(|k| {
                let t = k as f64 * TABLE_STEP;
                let r = self.at(t)?;
                Ok((t, min_eig(&r), max_eig(&r)))
            })
            .collect()
    }

    /// Canonical frame at `α` with `Ẽ(0) = initial_basis`, and the residual
    /// of the orthogonal alignment with the reference frame.
    pub fn frame_at_base(&self) -> Result<(Mat, Mat, f64)> {
        let frame = reduced_jacobi_frame(self.sys, &self.alpha, &[0.0], FLOW_TOL, FrameOptions::default())?;
        let (e_ref, f_ref) = (&frame.e[0], &frame.f[0]);
        // initial_basis = E_ref O with O orthogonal
        let o = inverse(&(e_ref.transpose() * e_ref))? * e_ref.transpose() * &self.initial_basis;
        let o_orth = polar_orthogonal(&o);
        let residual = max_abs(&(e_ref * &o_orth - &self.initial_basis)).max(max_abs(&(&o - &o_orth)));
        Ok((e_ref * &o_orth, f_ref * &o_orth, residual))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConjugateTime {
    pub t: f64,
    pub multiplicity: usize,
    /// Even-order zero found as a tangency.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanMethod {
    /// `det B` of the reduced Jacobi equation along the orbit.
    ReducedRiccati,
    /// `det ∂x/∂p` of the monodromy.
    FullMonodromy,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConjugateReport {
    pub base: Vec<f64>,
    pub horizon: f64,
    pub conjugate_times: Vec<ConjugateTime>,
    pub method: ScanMethod,
}

/// Conjugate points of `α` on `(0, T]`.
pub fn conjugate_scan(sys: &dyn PhaseSystem, alpha: &PhasePoint, horizon: f64, reduced: bool) -> Result<ConjugateReport> {
    if !(horizon > 0.0) {
        return Err(HamError::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    let times = if reduced && sys.dof() >= 2 {
        let table = OrbitCurvature::new(sys, alpha)?;
        let fund = fundamental(&table.problem(), &[horizon])?;
        fund.singular_times
            .iter()
            .filter(|s| s.t > 0.0)
            .map(|s| ConjugateTime { t: s.t, multiplicity: s.multiplicity, degenerate: s.degenerate })
            .collect()
    } else if reduced {
        // the reduced curve of a one-degree system is a point
        Vec::new()
    } else {
        full_conjugate_times(sys, alpha, horizon)?
    };
    Ok(ConjugateReport {
        base: alpha.z.as_slice().to_vec(),
        horizon,
        conjugate_times: times,
        method: if reduced { ScanMethod::ReducedRiccati } else { ScanMethod::FullMonodromy },
    })
}

/// `∂x/∂p` block of the monodromy with its chart orientation, and the scale
/// of the image of the vertical.
fn vertical_image(traj: &Trajectory, n: usize, t: f64) -> Result<(Mat, f64, f64)> {
    let (_, mon) = traj.state_and_monodromy(t)?;
    let xp = mon.view((0, n), (n, n)).into_owned();
    let img = mon.view((0, n), (2 * n, n)).into_owned();
    let orient = traj.segment(t)?.vertical.determinant().signum();
    let scale = singular_values(&img)[0];
    Ok((xp, orient, scale))
}

fn full_conjugate_times(sys: &dyn PhaseSystem, alpha: &PhasePoint, horizon: f64) -> Result<Vec<ConjugateTime>> {
    let n = sys.dof();
    let traj = linearized_flow(sys, alpha, 0.0, horizon, FLOW_TOL)?;
    if traj.truncated {
        return Err(HamError::OutOfDomain(format!("orbit leaves the chart domain at t = {}", traj.t_hi)));
    }
    let det = |t: f64| -> Result<f64> {
        let (xp, orient, _) = vertical_image(&traj, n, t)?;
        Ok(xp.determinant() * orient)
    };
    let rel_smin = |t: f64| -> Result<f64> {
        let (xp, _, scale) = vertical_image(&traj, n, t)?;
        Ok(*singular_values(&xp).last().unwrap() / scale)
    };
    let multiplicity = |t: f64| -> Result<usize> {
        let (xp, _, scale) = vertical_image(&traj, n, t)?;
        Ok(singular_values(&xp).iter().filter(|&&v| v < 1e-7 * scale).count().max(1))
    };
    let count = (horizon / SCAN_STEP).ceil() as usize;
    let nodes: Vec<f64> = (1..=count).map(|k| (k as f64 * SCAN_STEP).min(horizon)).collect();
    let d: Vec<f64> = nodes.iter().map(|&t| det(t)).collect::<Result<_>>()?;
    let s: Vec<f64> = nodes.iter().map(|&t| rel_smin(t)).collect::<Result<_>>()?;
    let mut out: Vec<ConjugateTime> = Vec::new();
    for i in 0..nodes.len().saturating_sub(1) {
        if d[i] == 0.0 || d[i].signum() != d[i + 1].signum() {
            let (mut a, mut b) = (nodes[i], nodes[i + 1]);
            let sa = d[i].signum();
            while b - a > 1e-10 {
                let c = 0.5 * (a + b);
                if det(c)?.signum() == sa {
                    a = c;
                } else {
                    b = c;
                }
            }
            let t = 0.5 * (a + b);
            out.push(ConjugateTime { t, multiplicity: multiplicity(t)?, degenerate: false });
        } else if i > 0 && s[i] < s[i - 1] && s[i] <= s[i + 1] && d[i - 1].signum() == d[i].signum() {
            let t = golden_min(&rel_smin, nodes[i - 1], nodes[i + 1])?;
            if rel_smin(t)? < TANGENCY_THRESHOLD && !out.iter().any(|c| (c.t - t).abs() < 1e-6) {
                out.push(ConjugateTime { t, multiplicity: multiplicity(t)?, degenerate: true });
            }
        }
    }
    out.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap());
    Ok(out)
}

fn golden_min(f: &dyn Fn(f64) -> Result<f64>, mut a: f64, mut b: f64) -> Result<f64> {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > 1e-10 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d)?;
        }
    }
    Ok(0.5 * (a + b))
}

/// Checks of the invariant distribution at its base point.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DistributionChecks {
    /// `max |ω(u, v)|` over the lifted basis.
    pub isotropy: f64,
    /// `max |dH(v)| / |∇H|` over the lifted basis.
    pub energy: f64,
    /// Distance of `X / |X|` from the lifted span.
    pub field_residual: f64,
    /// Smallest principal angle between `Δ̃` and `Λ̃` in the frame metric.
    pub vertical_angle: f64,
    /// Alignment residual of the frame with the table basis.
    pub frame_alignment: f64,
}

#[derive(Debug, Clone)]
pub struct InvariantDistribution {
    pub base: PhasePoint,
    pub direction: Direction,
    /// `U±(0)` in the canonical frame at the base.
    pub u: Mat,
    /// `Ẽ(0), F̃(0)` in reduced coordinates.
    pub frame_e: Mat,
    pub frame_f: Mat,
    /// Coefficients `[−U; I]` of `Δ̃` on `(Ẽ(0), F̃(0))`.
    pub frame_coordinates: Mat,
    /// `F̃(0) − Ẽ(0)U` in reduced coordinates.
    pub reduced_basis: Mat,
    /// Representatives of `Δ̃` in `T_α` followed by `X(α)`, orthonormalized.
    pub lifted_basis: Mat,
    pub limit: LimitSolution,
    pub construction_horizon: f64,
    pub checks: DistributionChecks,
}

impl InvariantDistribution {
    pub fn converged(&self) -> bool {
        self.limit.converged
    }
}

/// Builds `Δ̃±` at `α` from the limit of the reduced Riccati equation.
///
/// `grid` sets where `U±` and `D±` are reported; it always contains 0.
pub fn build_invariant_distribution(
    sys: &dyn PhaseSystem,
    alpha: &PhasePoint,
    direction: Direction,
    grid: &[f64],
    tol: f64,
) -> Result<InvariantDistribution> {
    let table = OrbitCurvature::new(sys, alpha)?;
    build_with_table(sys, &table, direction, grid, tol)
}

fn build_with_table(
    sys: &dyn PhaseSystem,
    table: &OrbitCurvature<'_>,
    direction: Direction,
    grid: &[f64],
    tol: f64,
) -> Result<InvariantDistribution> {
    let mut times: Vec<f64> = grid.to_vec();
    if !times.contains(&0.0) {
        times.push(0.0);
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let limit = limit_riccati(&table.problem(), direction, &times, tol)?;
    let u = limit.at(0.0).cloned().expect("grid contains 0");
    let (e, f, frame_alignment) = table.frame_at_base()?;
    let m = table.dim;
    let alpha = &table.alpha;
    let space = reduce_space(sys, alpha)?.space()?;
    let mut coords = Mat::zeros(2 * m, m);
    coords.view_mut((0, 0), (m, m)).copy_from(&(-&u));
    coords.view_mut((m, 0), (m, m)).copy_from(&Mat::identity(m, m));
    let reduced_basis = &f - &e * &u;
    let lifted_basis = lift_with_field(&space, &reduced_basis);
    let checks = distribution_checks(&space, &lifted_basis, &coords, frame_alignment);
    Ok(InvariantDistribution {
        base: alpha.clone(),
        direction,
        u,
        frame_e: e,
        frame_f: f,
        frame_coordinates: coords,
        reduced_basis,
        construction_horizon: limit.horizon_sequence.last().copied().unwrap_or(0.0),
        limit,
        lifted_basis,
        checks,
    })
}

/// `span{lift(v)} ⊕ ℝX`, orthonormalized.
fn lift_with_field(space: &ReducedSpace, reduced: &Mat) -> Mat {
    let lifted = space.lift(reduced);
    let mut all = Mat::zeros(lifted.nrows(), lifted.ncols() + 1);
    all.view_mut((0, 0), (lifted.nrows(), lifted.ncols())).copy_from(&lifted);
    all.set_column(lifted.ncols(), &space.field);
    orthonormal_columns(&all, 1e-10)
}

fn distribution_checks(space: &ReducedSpace, lifted: &Mat, coords: &Mat, frame_alignment: f64) -> DistributionChecks {
    let isotropy = max_abs(&(lifted.transpose() * &space.omega * lifted));
    let energy = (space.gradient.transpose() * lifted).amax() / space.gradient.norm();
    let x = &space.field / space.field.norm();
    let field_residual = (&x - lifted * (lifted.transpose() * &x)).norm();
    let m = coords.ncols();
    let mut vertical = Mat::zeros(2 * m, m);
    vertical.view_mut((0, 0), (m, m)).copy_from(&Mat::identity(m, m));
    let vertical_angle = principal_angles(coords, &vertical).into_iter().fold(f64::INFINITY, f64::min);
    DistributionChecks { isotropy, energy, field_residual, vertical_angle, frame_alignment }
}

/// Largest principal angle between `dφ_s(Δ_α)` and `Δ_{φ_s(α)}` built
/// independently at `φ_s(α)`, for each `s`.
pub fn invariance_residuals(sys: &dyn PhaseSystem, dist: &InvariantDistribution, shifts: &[f64], tol: f64) -> Result<Vec<(f64, f64)>> {
    let lo = shifts.iter().copied().fold(0.0, f64::min);
    let hi = shifts.iter().copied().fold(0.0, f64::max);
    let traj = linearized_flow(sys, &dist.base, lo, hi, FLOW_TOL)?;
    if traj.truncated {
        return Err(HamError::OutOfDomain("orbit leaves the chart domain inside the shift window".into()));
    }
    shifts
        .par_iter()
        .map(|&s| {
            let (beta, mon) = traj.state_and_monodromy(s)?;
            let pushed = &mon * &dist.lifted_basis;
            let there = build_invariant_distribution(sys, &beta, dist.direction, &[0.0], tol)?;
            if beta.chart != dist.base.chart {
                return Err(HamError::OutOfDomain("invariance check across a chart switch".into()));
            }
            let angle = principal_angles(&orthonormal_columns(&pushed, 1e-10), &there.lifted_basis)
                .into_iter()
                .fold(0.0, f64::max);
            Ok((s, angle))
        })
        .collect()
}

/// Exponential fit of `|d̃φ_{±t} w̃|` for the basis of `Δ̃±`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateFit {
    /// Least-squares slopes of `log |d̃φ_{±t}w̃|` against `t`, one per basis vector.
    pub slopes: Vec<f64>,
    /// `c₂ = −max slope`.
    pub c2: f64,
    /// Smallest `c₁` with `|d̃φ_{±t}w̃| ≤ c₁ e^{−c₂t}|w̃|` on the window.
    pub c1: f64,
    /// `sup_t |d̃φ_{±t}(w̃)^h| / |w̃^h|` over the basis.
    pub bounded_ratio: f64,
}

/// Fits the decay of `Δ̃` along `lim.times` (all of one sign).
fn fit_rates(lim: &LimitSolution) -> RateFit {
    let m = lim.u[0].nrows();
    let t_abs: Vec<f64> = lim.times.iter().map(|t| t.abs()).collect();
    let t_max = t_abs.iter().copied().fold(0.0, f64::max);
    let mut slopes = Vec::with_capacity(m);
    let mut curves = Vec::with_capacity(m);
    let mut bounded: f64 = 0.0;
    for j in 0..m {
        // w̃ = F̃b − ẼUb with b = e_j; |w̃|² = 1 + |Ub|²
        let w0 = (1.0 + lim.at(0.0).unwrap().column(j).norm_squared()).sqrt();
        let norms: Vec<f64> = lim
            .u
            .iter()
            .zip(&lim.d)
            .map(|(u, d)| {
                let y = d.column(j).into_owned();
                let x = u * &y;
                bounded = bounded.max(y.norm());
                (x.norm_squared() + y.norm_squared()).sqrt() / w0
            })
            .collect();
        // second half of the window
        let pts: Vec<(f64, f64)> =
            t_abs.iter().zip(&norms).filter(|(t, _)| **t >= 0.5 * t_max).map(|(t, v)| (*t, v.ln())).collect();
        slopes.push(least_squares_slope(&pts));
        curves.push(t_abs.iter().copied().zip(norms).collect::<Vec<_>>());
    }
    let c2 = -slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let c1 = curves.iter().flatten().map(|(t, v)| v * (c2 * t).exp()).fold(0.0, f64::max);
    RateFit { slopes, c2, c1, bounded_ratio: bounded }
}

fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnosovStatus {
    Anosov,
    NotAnosov,
    Inconclusive,
}

/// Evidence at one sample point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleEvidence {
    pub base: Vec<f64>,
    /// Principal angles between `Δ̃⁺` and `Δ̃⁻` in the frame metric.
    pub transversality_angles: Vec<f64>,
    /// Principal angles between the lifted `Δ⁺` and `Δ⁻`.
    pub lifted_angles: Vec<f64>,
    /// Number of lifted angles below the threshold; `span{X}` alone gives 1.
    pub intersection_dim: usize,
    pub plus: RateFit,
    pub minus: RateFit,
    /// `|d̃φ_T ẽ| / |ẽ|` for the vertical basis vector of largest growth.
    pub vertical_growth: f64,
    /// `sup_t |d̃φ_t(f̃)^h|` for `f̃ = F̃(0)` columns, the bounded-orbit witness.
    pub horizontal_sup: f64,
    pub limit_gaps: [f64; 2],
    pub converged: bool,
    /// (a) trivial reduced intersection, (b) lifted intersection is `span{X}`,
    /// (c) exponential contraction on both sides.
    pub criteria: [bool; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnosovVerdict {
    pub status: AnosovStatus,
    pub samples: Vec<SampleEvidence>,
    /// Worst constants over the samples.
    pub c1: f64,
    pub c2: f64,
    pub criteria_used: Vec<String>,
    pub fit_window: f64,
    /// Samples rejected for a conjugate point or another broken hypothesis.
    pub hypothesis_violations: usize,
    pub notes: Vec<String>,
}

/// Evidence for the Anosov property at each sample, evaluated pointwise.
pub fn anosov_diagnose(sys: &dyn PhaseSystem, samples: &[PhasePoint], t_fit: f64, tol: f64, compact: bool) -> Result<AnosovVerdict> {
    if samples.is_empty() || !(t_fit > 0.0) {
        return Err(HamError::InvalidArgument("need at least one sample and a positive fit window".into()));
    }
    let mut notes = Vec::new();
    if !compact {
        notes.push("criteria evaluated pointwise, compactness hypothesis not checked".to_string());
    }
    let evidence: Vec<Result<SampleEvidence>> = samples.par_iter().map(|a| sample_evidence(sys, a, t_fit, tol)).collect();
    let mut ok = Vec::new();
    let mut hypothesis_violations = 0;
    for (a, e) in samples.iter().zip(evidence) {
        match e {
            Ok(s) => ok.push(s),
            Err(why) => {
                hypothesis_violations += why.is_hypothesis_violation() as usize;
                notes.push(format!("sample {:?}: {why}", a.z.as_slice()));
            }
        }
    }
    let agree_all = |k: bool| ok.iter().all(|s| s.criteria.iter().all(|&c| c == k));
    let status = if ok.len() != samples.len() || ok.iter().any(|s| !s.converged) {
        AnosovStatus::Inconclusive
    } else if agree_all(true) {
        AnosovStatus::Anosov
    } else if ok.iter().any(|s| s.criteria.iter().all(|&c| !c)) {
        AnosovStatus::NotAnosov
    } else {
        notes.push("criteria disagree".to_string());
        AnosovStatus::Inconclusive
    };
    let c2 = ok.iter().map(|s| s.plus.c2.min(s.minus.c2)).fold(f64::INFINITY, f64::min);
    let c1 = ok.iter().map(|s| s.plus.c1.max(s.minus.c1)).fold(0.0, f64::max);
    Ok(AnosovVerdict {
        status,
        samples: ok,
        c1,
        c2,
        criteria_used: vec![
            "reduced_intersection_trivial".into(),
            "lifted_intersection_is_field".into(),
            "exponential_contraction".into(),
        ],
        fit_window: t_fit,
        hypothesis_violations,
        notes,
    })
}

fn sample_evidence(sys: &dyn PhaseSystem, alpha: &PhasePoint, t_fit: f64, tol: f64) -> Result<SampleEvidence> {
    let table = OrbitCurvature::new(sys, alpha)?;
    let steps = ((t_fit / 0.1).ceil() as usize).max(20);
    let fwd = uniform_grid(0.0, t_fit, steps + 1);
    let bwd = uniform_grid(-t_fit, 0.0, steps + 1);
    let plus = build_with_table(sys, &table, Direction::Plus, &fwd, tol)?;
    let minus = build_with_table(sys, &table, Direction::Minus, &bwd, tol)?;
    let transversality_angles = principal_angles(&plus.frame_coordinates, &minus.frame_coordinates);
    let lifted_angles = principal_angles(&plus.lifted_basis, &minus.lifted_basis);
    let intersection_dim = lifted_angles.iter().filter(|&&a| a < TRANSVERSAL_ANGLE).count();
    let plus_fit = fit_rates(&plus.limit);
    let minus_fit = fit_rates(&minus.limit);
    let m = table.dim;
    // vertical and horizontal witnesses from the fundamental pair on [0, T]
    let problem = table.problem();
    let b = fundamental(&problem, &fwd)?;
    let y = solve_linear(&problem, &Mat::identity(m, m), &Mat::zeros(m, m), &fwd)?;
    let last = fwd.len() - 1;
    let vertical_growth = (0..m)
        .map(|j| (b.b[last].column(j).norm_squared() + b.b_dot[last].column(j).norm_squared()).sqrt())
        .fold(0.0, f64::max);
    let horizontal_sup = y.b.iter().flat_map(|yy| (0..m).map(move |j| yy.column(j).norm())).fold(0.0, f64::max);
    let a = transversality_angles.iter().copied().fold(f64::INFINITY, f64::min) > TRANSVERSAL_ANGLE;
    let bb = intersection_dim == 1;
    let c = plus_fit.c2 > RATE_MARGIN && minus_fit.c2 > RATE_MARGIN;
    Ok(SampleEvidence {
        base: alpha.z.as_slice().to_vec(),
        transversality_angles,
        lifted_angles,
        intersection_dim,
        plus: plus_fit,
        minus: minus_fit,
        vertical_growth,
        horizontal_sup,
        limit_gaps: [plus.limit.convergence_gap, minus.limit.convergence_gap],
        converged: plus.converged() && minus.converged(),
        criteria: [a, bb, c],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonpositiveStatus {
    Anosov,
    NotAnosov,
    Inconclusive,
    /// Positive reduced curvature was found; the criterion does not apply.
    PreconditionViolated,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NonpositiveReport {
    pub status: NonpositiveStatus,
    pub window: f64,
    /// Time of smallest `|t|` with `λ_min(𝓡̃) < −threshold`.
    pub negative_time: Option<f64>,
    /// Most negative eigenvalue seen, with its time.
    pub min_curvature: (f64, f64),
    /// Largest eigenvalue seen, with its time.
    pub max_curvature: (f64, f64),
    /// Smallest `τ` at which `J̃°(0)` has left `J̃°(t)` on `[−τ, τ]`.
    pub drift_onset: Option<f64>,
    /// `λ_min(∫Ẏᵀ Ẏ) / ∫|Y|²` over the whole window.
    pub relative_drift: f64,
    pub notes: Vec<String>,
}

/// Non-positive-curvature criterion on `[−T, T]`, by the sign of `𝓡̃` and by
/// the drift of the horizontal space `J̃°(0)` out of `J̃°(t)`.
pub fn nonpositive_criterion(sys: &dyn PhaseSystem, alpha: &PhasePoint, window: f64) -> Result<NonpositiveReport> {
    if !(window > 0.0) {
        return Err(HamError::InvalidArgument(format!("window must be positive, got {window}")));
    }
    let table = OrbitCurvature::new(sys, alpha)?;
    let range = table.eigen_range(-window, window)?;
    let min_curvature = range.iter().map(|r| (r.1, r.0)).fold((f64::INFINITY, 0.0), |a, b| if b.0 < a.0 { b } else { a });
    let max_curvature = range.iter().map(|r| (r.2, r.0)).fold((f64::NEG_INFINITY, 0.0), |a, b| if b.0 > a.0 { b } else { a });
    let mut notes = Vec::new();
    if max_curvature.0 > POSITIVE_SLACK {
        notes.push(format!("reduced curvature {:e} > 0 at t = {}", max_curvature.0, max_curvature.1));
        return Ok(NonpositiveReport {
            status: NonpositiveStatus::PreconditionViolated,
            window,
            negative_time: None,
            min_curvature,
            max_curvature,
            drift_onset: None,
            relative_drift: f64::NAN,
            notes,
        });
    }
    let negative_time = range
        .iter()
        .filter(|r| r.1 < -NEGATIVE_THRESHOLD)
        .map(|r| r.0)
        .min_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap());
    // Y(0) = I, Ẏ(0) = 0: F̃(0)b stays in J̃°(t) iff Ẏ(t)b = 0
    let m = table.dim;
    let grid = uniform_grid(-window, window, (2.0 * window / TABLE_STEP).round() as usize + 1);
    let y = solve_linear(&table.problem(), &Mat::identity(m, m), &Mat::zeros(m, m), &grid)?;
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[a].abs().partial_cmp(&grid[b].abs()).unwrap());
    let mut drift = Mat::zeros(m, m);
    let mut mass = 0.0;
    let mut drift_onset = None;
    for &i in &order {
        let (yy, yd) = (&y.b[i], &y.b_dot[i]);
        drift += yd.transpose() * yd * TABLE_STEP;
        mass += yy.norm_squared() * TABLE_STEP;
        if drift_onset.is_none() && min_eig(&drift) > DRIFT_THRESHOLD * mass.max(1.0) {
            drift_onset = Some(grid[i].abs());
        }
    }
    let relative_drift = min_eig(&drift) / mass.max(1e-300);
    let status = match (negative_time.is_some(), drift_onset.is_some()) {
        (true, true) => NonpositiveStatus::Anosov,
        (false, false) => NonpositiveStatus::NotAnosov,
        _ => {
            notes.push("curvature sign and horizontal drift disagree".into());
            NonpositiveStatus::Inconclusive
        }
    };
    if status == NonpositiveStatus::NotAnosov {
        notes.push(format!("no negative curvature on [−{window}, {window}]; J̃° has a common direction on the window"));
    }
    Ok(NonpositiveReport { status, window, negative_time, min_curvature, max_curvature, drift_onset, relative_drift, notes })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrowthProfile {
    pub times: Vec<f64>,
    /// `|d̃φ_t(w̃)^h|` in the frame metric.
    pub horizontal: Vec<f64>,
    /// `|d̃φ_t(w̃)|` in the frame metric.
    pub total: Vec<f64>,
    /// Non-decreasing on `t > 0` within relative slack 1e-9.
    pub monotone: bool,
    /// Set when positive reduced curvature is seen on the window.
    pub hypothesis_violation: Option<String>,
}

/// Horizontal growth of `w̃ = Ẽ(0)a + F̃(0)b` on `[0, T]`.
pub fn horizontal_growth_profile(sys: &dyn PhaseSystem, alpha: &PhasePoint, a: &[f64], b: &[f64], horizon: f64, samples: usize) -> Result<GrowthProfile> {
    let table = OrbitCurvature::new(sys, alpha)?;
    let m = table.dim;
    if a.len() != m || b.len() != m {
        return Err(HamError::InvalidArgument(format!("w̃ needs {m} + {m} frame coefficients")));
    }
    if !(horizon > 0.0) || samples < 2 {
        return Err(HamError::InvalidArgument("need a positive horizon and at least two samples".into()));
    }
    let times = uniform_grid(0.0, horizon, samples);
    let problem = table.problem();
    let fb = fundamental(&problem, &times)?;
    let fy = solve_linear(&problem, &Mat::identity(m, m), &Mat::zeros(m, m), &times)?;
    let av = crate::linalg::Vector::from_column_slice(a);
    let bv = crate::linalg::Vector::from_column_slice(b);
    let mut horizontal = Vec::with_capacity(samples);
    let mut total = Vec::with_capacity(samples);
    for i in 0..times.len() {
        // y = Y b − B a, x = −ẏ
        let y = &fy.b[i] * &bv - &fb.b[i] * &av;
        let yd = &fy.b_dot[i] * &bv - &fb.b_dot[i] * &av;
        horizontal.push(y.norm());
        total.push((y.norm_squared() + yd.norm_squared()).sqrt());
    }
    let monotone = horizontal.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].max(1.0));
    let hi = table.eigen_range(0.0, horizon)?.iter().map(|r| r.2).fold(f64::NEG_INFINITY, f64::max);
    let hypothesis_violation = (hi > POSITIVE_SLACK).then(|| format!("reduced curvature reaches {hi:e} > 0"));
    Ok(GrowthProfile { times, horizontal, total, monotone, hypothesis_violation })
}
