//! Phase systems on cotangent charts: symplectic form, Hamiltonian vector
//! field, flow with its linearisation, and the monotone form.
//!
//! Coordinates are ordered `z = (x, p)`. The form is
//! `ω(u, v) = uᵀ Ω v` with `Ω = [[B(x), −I], [I, 0]]`, i.e. `dp∧dx` plus an
//! optional magnetic twist `B`. The Hamiltonian vector field solves
//! `ω(X, ·) = −dH`, which gives `X = Ω⁻¹ ∇H`.

use nalgebra::LU;

use crate::error::{HamError, Result};
use crate::integrator::{integrate, DenseSolution, DenseStep, OdeOptions, StepAction};
use crate::linalg::{fd_step, max_abs, Mat, Vector};

/// A point in a specific chart of the phase space.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub chart: usize,
    pub z: Vector,
}

impl PhasePoint {
    pub fn new(z: &[f64]) -> Self {
        Self { chart: 0, z: Vector::from_column_slice(z) }
    }

    pub fn in_chart(chart: usize, z: &[f64]) -> Self {
        Self { chart, z: Vector::from_column_slice(z) }
    }
}

/// Hamiltonian system on (a chart of) `T*M` with a possibly twisted form.
///
/// Only `dof` and `hamiltonian` are mandatory; derivatives fall back to
/// fourth-order central differences.
pub trait PhaseSystem: Send + Sync {
    fn name(&self) -> &str;

    fn dof(&self) -> usize;

    fn hamiltonian(&self, z: &[f64]) -> f64;

    fn gradient(&self, z: &[f64]) -> Vector {
        fd_gradient(|w| self.hamiltonian(w), z)
    }

    fn hessian(&self, z: &[f64]) -> Mat {
        fd_hessian(|w| self.hamiltonian(w), z)
    }

    /// Magnetic term `B(x)` (antisymmetric `n × n`), `None` for `dp∧dx`.
    fn twist(&self, _x: &[f64]) -> Option<Mat> {
        None
    }

    /// `∂B/∂x_k`.
    fn twist_derivative(&self, x: &[f64], k: usize) -> Mat {
        let n = self.dof();
        let h = fd_step(x[k]);
        let eval = |d: f64| {
            let mut w = x.to_vec();
            w[k] += d;
            self.twist(&w).unwrap_or_else(|| Mat::zeros(n, n))
        };
        (eval(-2.0 * h) - eval(2.0 * h)) / (12.0 * h) + (eval(h) - eval(-h)) * (8.0 / (12.0 * h))
    }

    fn in_domain(&self, _z: &[f64]) -> bool {
        true
    }

    /// Chart to continue in after reaching `z` in `chart`.
    fn preferred_chart(&self, chart: usize, _z: &[f64]) -> usize {
        chart
    }

    /// Transition `from → to`: new coordinates and the Jacobian of the map.
    fn chart_map(&self, from: usize, to: usize, z: &[f64]) -> Result<(Vector, Mat)> {
        if from == to {
            Ok((Vector::from_column_slice(z), Mat::identity(z.len(), z.len())))
        } else {
            Err(HamError::OutOfDomain(format!("{} has a single chart", self.name())))
        }
    }
}

/// Gradient by fourth-order central differences, `h = ε^{1/3} max(1, |z_i|)`.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: F, z: &[f64]) -> Vector {
    let mut g = Vector::zeros(z.len());
    let mut w = z.to_vec();
    for i in 0..z.len() {
        let h = fd_step(z[i]);
        let mut acc = 0.0;
        for (o, c) in crate::linalg::CD4 {
            w[i] = z[i] + o * h;
            acc += c * f(&w);
        }
        w[i] = z[i];
        g[i] = acc / h;
    }
    g
}

/// Hessian by fourth-order stencils on the function itself, `h = ε^{1/6} max(1, |z_i|)`.
pub fn fd_hessian<F: Fn(&[f64]) -> f64>(f: F, z: &[f64]) -> Mat {
    let m = z.len();
    let step = |v: f64| f64::EPSILON.powf(1.0 / 6.0) * v.abs().max(1.0);
    let mut hess = Mat::zeros(m, m);
    let mut w = z.to_vec();
    let f0 = f(z);
    for i in 0..m {
        let h = step(z[i]);
        let mut acc = -30.0 * f0;
        for (o, c) in [(-2.0, -1.0), (-1.0, 16.0), (1.0, 16.0), (2.0, -1.0)] {
            w[i] = z[i] + o * h;
            acc += c * f(&w);
        }
        w[i] = z[i];
        hess[(i, i)] = acc / (12.0 * h * h);
        for j in 0..i {
            let hj = step(z[j]);
            let mut acc = 0.0;
            for (oi, ci) in crate::linalg::CD4 {
                for (oj, cj) in crate::linalg::CD4 {
                    w[i] = z[i] + oi * h;
                    w[j] = z[j] + oj * hj;
                    acc += ci * cj * f(&w);
                }
            }
            w[i] = z[i];
            w[j] = z[j];
            hess[(i, j)] = acc / (h * hj);
            hess[(j, i)] = hess[(i, j)];
        }
    }
    hess
}

/// Jacobian of a vector function by fourth-order central differences.
pub fn fd_jacobian<F: Fn(&[f64]) -> Vector>(f: F, z: &[f64]) -> Mat {
    let m = f(z).len();
    let mut jac = Mat::zeros(m, z.len());
    let mut w = z.to_vec();
    for i in 0..z.len() {
        let h = fd_step(z[i]);
        let mut acc = Vector::zeros(m);
        for (o, c) in crate::linalg::CD4 {
            w[i] = z[i] + o * h;
            acc += f(&w) * c;
        }
        w[i] = z[i];
        jac.set_column(i, &(acc / h));
    }
    jac
}

/// `Ω(z)` in `(x, p)` coordinates.
pub fn symplectic_matrix(sys: &dyn PhaseSystem, z: &[f64]) -> Mat {
    let n = sys.dof();
    let mut om = Mat::zeros(2 * n, 2 * n);
    for i in 0..n {
        om[(i, n + i)] = -1.0;
        om[(n + i, i)] = 1.0;
    }
    if let Some(b) = sys.twist(&z[..n]) {
        om.view_mut((0, 0), (n, n)).copy_from(&b);
    }
    om
}

/// `∂Ω/∂z_k`; only the `x`-block depends on the base point.
pub fn symplectic_matrix_derivative(sys: &dyn PhaseSystem, z: &[f64], k: usize) -> Mat {
    let n = sys.dof();
    let mut d = Mat::zeros(2 * n, 2 * n);
    if k < n && sys.twist(&z[..n]).is_some() {
        d.view_mut((0, 0), (n, n)).copy_from(&sys.twist_derivative(&z[..n], k));
    }
    d
}

fn lu_of(om: &Mat) -> Result<LU<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    let lu = LU::new(om.clone());
    let det = lu.determinant();
    if !(det.abs() > 1e-14) || !det.is_finite() {
        return Err(HamError::SingularForm(format!("det Ω = {det:e}")));
    }
    Ok(lu)
}

/// `X_H(z) = Ω⁻¹ ∇H`.
pub fn hamiltonian_vector_field(sys: &dyn PhaseSystem, z: &[f64]) -> Result<Vector> {
    let om = symplectic_matrix(sys, z);
    let lu = lu_of(&om)?;
    lu.solve(&sys.gradient(z)).ok_or_else(|| HamError::SingularForm("solve failed".into()))
}

/// Fast path for the cotangent form: `X = (H_p, −H_x + B H_p)`.
fn vector_field_fast(sys: &dyn PhaseSystem, z: &[f64], out: &mut [f64]) {
    let n = sys.dof();
    let g = sys.gradient(z);
    for i in 0..n {
        out[i] = g[n + i];
        out[n + i] = -g[i];
    }
    if let Some(b) = sys.twist(&z[..n]) {
        for i in 0..n {
            for j in 0..n {
                out[n + i] += b[(i, j)] * g[n + j];
            }
        }
    }
}

/// `DX = Ω⁻¹ (∇²H − [(∂_k Ω) X]_k)`.
pub fn vector_field_jacobian(sys: &dyn PhaseSystem, z: &[f64]) -> Result<Mat> {
    let m = z.len();
    let om = symplectic_matrix(sys, z);
    let lu = lu_of(&om)?;
    let x = lu.solve(&sys.gradient(z)).ok_or_else(|| HamError::SingularForm("solve failed".into()))?;
    let mut rhs = sys.hessian(z);
    if sys.twist(&z[..sys.dof()]).is_some() {
        for k in 0..m {
            let dk = symplectic_matrix_derivative(sys, z, k) * &x;
            let mut col = rhs.column_mut(k);
            col -= dk;
        }
    }
    lu.solve(&rhs).ok_or_else(|| HamError::SingularForm("solve failed".into()))
}

/// Monotone form on the vertical distribution at `z`:
/// `⟨∂p_i, ∂p_j⟩ = ω([X, ∂p_i], ∂p_j)`. Returns the matrix and whether it is
/// positive definite.
pub fn monotone_form(sys: &dyn PhaseSystem, z: &[f64]) -> Result<(Mat, bool)> {
    let n = sys.dof();
    let a = vector_field_jacobian(sys, z)?;
    let om = symplectic_matrix(sys, z);
    let v = vertical_basis(n);
    // [X, ∂p] = −DX ∂p for constant fields
    let bracket = -(&a * &v);
    let g = crate::linalg::sym(&(bracket.transpose() * om * v));
    let pd = nalgebra::Cholesky::new(g.clone()).is_some();
    Ok((g, pd))
}

/// `[0; I]`, the coordinate vertical frame.
pub fn vertical_basis(n: usize) -> Mat {
    let mut v = Mat::zeros(2 * n, n);
    for i in 0..n {
        v[(n + i, i)] = 1.0;
    }
    v
}

/// `ω(u, v)` at `z`.
pub fn omega(sys: &dyn PhaseSystem, z: &[f64], u: &Vector, v: &Vector) -> f64 {
    (u.transpose() * symplectic_matrix(sys, z) * v)[(0, 0)]
}

/// Stretch of a trajectory spent in one chart.
///
/// `vertical` maps the vertical coordinates of the starting chart to those of
/// `chart` along the chart transitions taken so far.
#[derive(Debug, Clone)]
pub struct ChartSegment {
    pub chart: usize,
    pub entered_at: f64,
    pub vertical: Mat,
}

/// Dense trajectory, optionally carrying the monodromy `M(t) = dφ_t`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub dof: usize,
    pub start: PhasePoint,
    pub variational: bool,
    forward: Option<DenseSolution>,
    backward: Option<DenseSolution>,
    forward_segments: Vec<ChartSegment>,
    backward_segments: Vec<ChartSegment>,
    pub t_lo: f64,
    pub t_hi: f64,
    /// True when the requested span was cut at a chart boundary.
    pub truncated: bool,
    pub tol: f64,
}

impl Trajectory {
    fn side(&self, t: f64) -> Result<&DenseSolution> {
        let s = if t >= 0.0 { self.forward.as_ref() } else { self.backward.as_ref() };
        let s = s.or(self.forward.as_ref()).or(self.backward.as_ref());
        let s = s.ok_or_else(|| HamError::InvalidArgument("empty trajectory".into()))?;
        let slack = 1e-12 * (1.0 + t.abs());
        if t < self.t_lo - slack || t > self.t_hi + slack {
            return Err(HamError::OutOfDomain(format!(
                "t = {t} outside the integrated span [{}, {}]",
                self.t_lo, self.t_hi
            )));
        }
        Ok(s)
    }

    fn segments(&self, t: f64) -> &[ChartSegment] {
        if t >= 0.0 && self.forward.is_some() || self.backward.is_none() {
            &self.forward_segments
        } else {
            &self.backward_segments
        }
    }

    fn segment_index(&self, t: f64) -> Result<usize> {
        if t == 0.0 {
            return Ok(0);
        }
        let s = self.side(t)?;
        Ok(if s.steps.is_empty() { 0 } else { s.tag_at(t) })
    }

    /// Chart segment in use at time `t`.
    pub fn segment(&self, t: f64) -> Result<&ChartSegment> {
        let i = self.segment_index(t)?;
        Ok(&self.segments(t)[i])
    }

    /// All chart segments on the side of `t = 0` that contains `t`.
    pub fn chart_segments(&self, forward: bool) -> &[ChartSegment] {
        if forward {
            &self.forward_segments
        } else {
            &self.backward_segments
        }
    }

    fn raw(&self, t: f64) -> Result<(usize, Vec<f64>)> {
        if t == 0.0 {
            let mut y = self.start.z.as_slice().to_vec();
            if self.variational {
                let m = 2 * self.dof;
                y.extend(Mat::identity(m, m).as_slice());
            }
            return Ok((self.start.chart, y));
        }
        let s = self.side(t)?;
        if s.steps.is_empty() {
            return Ok((self.start.chart, s.y_start.clone()));
        }
        let seg = &self.segments(t)[s.tag_at(t)];
        Ok((seg.chart, s.eval(t)))
    }

    pub fn state(&self, t: f64) -> Result<PhasePoint> {
        let (chart, y) = self.raw(t)?;
        Ok(PhasePoint { chart, z: Vector::from_column_slice(&y[..2 * self.dof]) })
    }

    /// State and monodromy `dφ_t : T_α → T_{φ_t α}` in the chart active at `t`.
    pub fn state_and_monodromy(&self, t: f64) -> Result<(PhasePoint, Mat)> {
        if !self.variational {
            return Err(HamError::InvalidArgument("trajectory was integrated without the variational equation".into()));
        }
        let m = 2 * self.dof;
        let (chart, y) = self.raw(t)?;
        Ok((
            PhasePoint { chart, z: Vector::from_column_slice(&y[..m]) },
            Mat::from_column_slice(m, m, &y[m..]),
        ))
    }

    pub fn end_state(&self) -> Result<PhasePoint> {
        self.state(self.t_hi)
    }
}

fn augmented_rhs<'a>(sys: &'a dyn PhaseSystem, variational: bool) -> impl FnMut(f64, &[f64], &mut [f64]) + 'a {
    let m = 2 * sys.dof();
    move |_t, y, dy| {
        let z = &y[..m];
        vector_field_fast(sys, z, &mut dy[..m]);
        if variational {
            match vector_field_jacobian(sys, z) {
                Ok(a) => {
                    let mm = Mat::from_column_slice(m, m, &y[m..]);
                    dy[m..].copy_from_slice((a * mm).as_slice());
                }
                Err(_) => dy[m..].iter_mut().for_each(|v| *v = f64::NAN),
            }
        }
    }
}

/// Bisection on a dense step for the first time the state leaves the domain.
fn boundary_time(sys: &dyn PhaseSystem, step: &DenseStep, m: usize) -> f64 {
    let (mut a, mut b) = (step.t0, step.t1());
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        let y = step.eval(mid);
        if sys.in_domain(&y[..m]) {
            a = mid;
        } else {
            b = mid;
        }
        if (b - a).abs() < 1e-13 * (1.0 + a.abs()) {
            break;
        }
    }
    a
}

fn integrate_side(
    sys: &dyn PhaseSystem,
    start: &PhasePoint,
    t_end: f64,
    variational: bool,
    opts: &OdeOptions,
) -> Result<(DenseSolution, Vec<ChartSegment>, bool)> {
    let n = sys.dof();
    let m = 2 * n;
    let mut y0 = start.z.as_slice().to_vec();
    if variational {
        y0.extend(Mat::identity(m, m).as_slice());
    }
    let mut exit: Option<f64> = None;
    let mut switch_err: Option<HamError> = None;
    let mut segments =
        vec![ChartSegment { chart: start.chart, entered_at: 0.0, vertical: Mat::identity(n, n) }];
    let hook = |step: &DenseStep, y: &[f64], seg: &mut usize| {
        if !sys.in_domain(&y[..m]) {
            exit = Some(boundary_time(sys, step, m));
            return StepAction::Stop;
        }
        let chart = segments[*seg].chart;
        let next = sys.preferred_chart(chart, &y[..m]);
        if next != chart {
            match sys.chart_map(chart, next, &y[..m]) {
                Ok((nz, jac)) => {
                    let mut ny = nz.as_slice().to_vec();
                    // cotangent lifts preserve the vertical, so the p-block carries it
                    let vertical = jac.view((n, n), (n, n)) * &segments[*seg].vertical;
                    if variational {
                        let mm = Mat::from_column_slice(m, m, &y[m..]);
                        ny.extend((jac * mm).as_slice());
                    }
                    segments.push(ChartSegment { chart: next, entered_at: step.t1(), vertical });
                    *seg = segments.len() - 1;
                    return StepAction::Replace(ny);
                }
                Err(e) => {
                    switch_err = Some(e);
                    return StepAction::Stop;
                }
            }
        }
        StepAction::Continue
    };
    let mut sol = integrate(augmented_rhs(sys, variational), 0.0, &y0, t_end, opts, 0, hook)?;
    if let Some(e) = switch_err {
        return Err(e);
    }
    if let Some(tb) = exit {
        sol.t_end = tb;
        if let Some(last) = sol.steps.last() {
            sol.y_end = last.eval(tb);
        }
        return Ok((sol, segments, true));
    }
    Ok((sol, segments, false))
}

fn build_trajectory(
    sys: &dyn PhaseSystem,
    start: &PhasePoint,
    t_lo: f64,
    t_hi: f64,
    tol: f64,
    variational: bool,
) -> Result<Trajectory> {
    if start.z.len() != 2 * sys.dof() {
        return Err(HamError::InvalidArgument(format!(
            "state has length {}, expected {}",
            start.z.len(),
            2 * sys.dof()
        )));
    }
    if !sys.in_domain(start.z.as_slice()) {
        return Err(HamError::OutOfDomain(format!("initial state {:?}", start.z.as_slice())));
    }
    if t_lo > 0.0 || t_hi < 0.0 {
        return Err(HamError::InvalidArgument("time span must contain 0".into()));
    }
    let opts = OdeOptions::with_tol(tol);
    let mut truncated = false;
    let initial = || vec![ChartSegment { chart: start.chart, entered_at: 0.0, vertical: Mat::identity(sys.dof(), sys.dof()) }];
    let (forward, forward_segments, hi) = if t_hi > 0.0 {
        let (s, seg, tr) = integrate_side(sys, start, t_hi, variational, &opts)?;
        truncated |= tr;
        let e = s.t_end;
        (Some(s), seg, e)
    } else {
        (None, initial(), 0.0)
    };
    let (backward, backward_segments, lo) = if t_lo < 0.0 {
        let (s, seg, tr) = integrate_side(sys, start, t_lo, variational, &opts)?;
        truncated |= tr;
        let e = s.t_end;
        (Some(s), seg, e)
    } else {
        (None, initial(), 0.0)
    };
    Ok(Trajectory {
        dof: sys.dof(),
        start: start.clone(),
        variational,
        forward,
        backward,
        forward_segments,
        backward_segments,
        t_lo: lo,
        t_hi: hi,
        truncated,
        tol,
    })
}

/// Integrates the flow on `[t_lo, t_hi] ∋ 0` with dense output.
pub fn flow(sys: &dyn PhaseSystem, start: &PhasePoint, t_lo: f64, t_hi: f64, tol: f64) -> Result<Trajectory> {
    build_trajectory(sys, start, t_lo, t_hi, tol, false)
}

/// Flow together with the variational equation `Ṁ = DX(φ_t α) M`, `M(0) = I`.
pub fn linearized_flow(sys: &dyn PhaseSystem, start: &PhasePoint, t_lo: f64, t_hi: f64, tol: f64) -> Result<Trajectory> {
    build_trajectory(sys, start, t_lo, t_hi, tol, true)
}

/// Sampled flow on a time grid with conservation diagnostics.
#[derive(Debug, Clone)]
pub struct FlowSegment {
    pub base: PhasePoint,
    pub times: Vec<f64>,
    pub states: Vec<PhasePoint>,
    pub monodromies: Option<Vec<Mat>>,
    /// `max |H(φ_t α) − H(α)|` on the grid.
    pub energy_drift: f64,
    /// `max |MᵀΩM − Ω| / max(1, |M|²)` on the grid.
    pub symplectic_drift: f64,
    pub truncated: bool,
}

pub fn sample(sys: &dyn PhaseSystem, traj: &Trajectory, times: &[f64]) -> Result<FlowSegment> {
    let h0 = sys.hamiltonian(traj.start.z.as_slice());
    let om0 = symplectic_matrix(sys, traj.start.z.as_slice());
    let mut states = Vec::with_capacity(times.len());
    let mut monos = Vec::new();
    let mut energy_drift: f64 = 0.0;
    let mut symplectic_drift: f64 = 0.0;
    for &t in times {
        if traj.variational {
            let (p, m) = traj.state_and_monodromy(t)?;
            let om = symplectic_matrix(sys, p.z.as_slice());
            let defect = max_abs(&(m.transpose() * om * &m - &om0));
            symplectic_drift = symplectic_drift.max(defect / max_abs(&m).powi(2).max(1.0));
            energy_drift = energy_drift.max((sys.hamiltonian(p.z.as_slice()) - h0).abs());
            states.push(p);
            monos.push(m);
        } else {
            let p = traj.state(t)?;
            energy_drift = energy_drift.max((sys.hamiltonian(p.z.as_slice()) - h0).abs());
            states.push(p);
        }
    }
    Ok(FlowSegment {
        base: traj.start.clone(),
        times: times.to_vec(),
        states,
        monodromies: if traj.variational { Some(monos) } else { None },
        energy_drift,
        symplectic_drift,
        truncated: traj.truncated,
    })
}

/// Uniform grid `t0, t0 + dt, …` ending exactly at `t1`.
pub fn uniform_grid(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![t0];
    }
    (0..n).map(|i| t0 + (t1 - t0) * i as f64 / (n - 1) as f64).collect()
}
