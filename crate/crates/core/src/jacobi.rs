//! Jacobi curves of a monotone Hamiltonian field, their canonical frames and
//! the curvature operator.
//!
//! Matrices of vectors are stored column-wise: a basis of an `m`-dimensional
//! Lagrangian subspace of a `2m`-dimensional symplectic space is a `2m × m`
//! matrix. The canonical form of a curve with basis `V(t)` is
//! `G = V̇ᵀ Ω V`. A canonical frame satisfies `Fᵀ Ω E = I`,
//! `Eᵀ Ω E = Fᵀ Ω F = 0`, `Ė = F` and `Ḟ = −E 𝓡`.
//!
//! Two routes to `𝓡` are provided: differentiating the canonical frame of the
//! Jacobi curve in time, and the pointwise bracket formula
//! `𝔑 V = −[X, [X, V]ʰ]ᵛ` evaluated with Lie derivatives along `X`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{HamError, Result};
use crate::integrator::{integrate, DenseSolution, OdeOptions, StepAction};
use crate::linalg::{
    antisym, asymmetry, cd4_mat, cholesky_lower, condition_number, inverse, max_abs, polar_orthogonal, principal_angles,
    sym, Mat, Vector,
};
use crate::symplectic::{
    hamiltonian_vector_field, linearized_flow, monotone_form, symplectic_matrix, vector_field_jacobian, vertical_basis,
    PhasePoint, PhaseSystem, Trajectory,
};

type VectorField<'a> = dyn FnMut(f64, &[f64], &mut [f64]) + 'a;

/// Lie-derivative step along `X` (time units) for single derivatives.
pub const LIE_STEP: f64 = 2e-3;
/// Step for the outer derivative of a nested bracket.
pub const LIE_STEP_OUTER: f64 = 5e-3;
/// Default time step for differentiating canonical frames.
pub const FRAME_STEP: f64 = 2e-3;
/// Minimal normalized determinant `|det G| / |G|∞^m` of a regular curve.
pub const GRAM_DET_MIN: f64 = 1e-12;

/// `|det G| / |G|∞^m`; invariant under rescaling of the chart.
pub fn normalized_det(g: &Mat) -> f64 {
    let scale = max_abs(g);
    if scale == 0.0 {
        return 0.0;
    }
    (g / scale).determinant().abs()
}

/// A smooth curve of Lagrangian subspaces of a fixed symplectic space.
pub trait LagrangianCurve: Sync {
    /// Dimension of the Lagrangian subspaces.
    fn dim(&self) -> usize;

    /// Constant form `Ω` of the ambient space.
    fn form(&self) -> &Mat;

    /// Closed time interval on which the curve is defined.
    fn span(&self) -> (f64, f64);

    /// Basis `V(t)` and its derivative `V̇(t)`.
    fn basis(&self, t: f64) -> Result<(Mat, Mat)>;

    /// Canonical form `G(t) = V̇ᵀ Ω V`.
    fn gram(&self, t: f64) -> Result<Mat> {
        let (v, vd) = self.basis(t)?;
        Ok(sym(&(vd.transpose() * self.form() * v)))
    }

    /// `Ġ(t)`.
    fn gram_rate(&self, t: f64) -> Result<Mat> {
        cd4_mat(|s| self.gram(s), t, 1e-3)
    }

    /// Optional push-forward `Φ(t)` with `Φ̇ = AΦ` that keeps the curve bounded,
    /// expressed in the coordinates used at `frame_t`.
    fn pushed(&self, _t: f64, _frame_t: f64) -> Option<Result<Pushed>> {
        None
    }
}

/// A curve seen through a push-forward `Φ(t)`: `Ŷ = ΦV`, `ΦV̇`, the generator
/// `A` of `Φ` and the form `Ω̂` at the image.
#[derive(Debug, Clone)]
pub struct Pushed {
    pub y: Mat,
    pub y_rate: Mat,
    pub generator: Mat,
    pub form: Mat,
}

/// `J_α(t) = dφ_t⁻¹ Λ_{φ_t α}` realized in `T_α` coordinates.
///
/// The vertical basis of each chart segment is the one transported from the
/// starting chart, so `V(t)` is continuous across chart switches.
pub struct JacobiCurve<'a> {
    pub sys: &'a dyn PhaseSystem,
    pub traj: Trajectory,
    omega0: Mat,
    omega0_inv: Mat,
}

impl<'a> JacobiCurve<'a> {
    /// Integrates the linearized flow over `[t_lo, t_hi] ∋ 0`.
    pub fn new(sys: &'a dyn PhaseSystem, alpha: &PhasePoint, t_lo: f64, t_hi: f64, tol: f64) -> Result<Self> {
        let traj = linearized_flow(sys, alpha, t_lo.min(0.0), t_hi.max(0.0), tol)?;
        Self::from_trajectory(sys, traj)
    }

    pub fn from_trajectory(sys: &'a dyn PhaseSystem, traj: Trajectory) -> Result<Self> {
        if !traj.variational {
            return Err(HamError::InvalidArgument("Jacobi curves need the variational equation".into()));
        }
        let omega0 = symplectic_matrix(sys, traj.start.z.as_slice());
        let omega0_inv = inverse(&omega0)?;
        Ok(Self { sys, traj, omega0, omega0_inv })
    }

    pub fn base(&self) -> &PhasePoint {
        &self.traj.start
    }

    /// `dφ_t⁻¹ = Ω_α⁻¹ Mᵀ Ω_{φ_t α}`; exact for symplectic `M` and stable for large `|M|`.
    pub fn inverse_monodromy(&self, t: f64) -> Result<(PhasePoint, Mat, Mat)> {
        let (p, m) = self.traj.state_and_monodromy(t)?;
        let om = symplectic_matrix(self.sys, p.z.as_slice());
        let minv = &self.omega0_inv * m.transpose() * om;
        Ok((p, m, minv))
    }

    /// Vertical basis at `φ_t α` in the chart active at `t`.
    fn vertical_at(&self, t: f64) -> Result<Mat> {
        let n = self.sys.dof();
        let seg = self.traj.segment(t)?;
        let mut y = Mat::zeros(2 * n, n);
        y.view_mut((n, 0), (n, n)).copy_from(&seg.vertical);
        Ok(y)
    }
}

impl LagrangianCurve for JacobiCurve<'_> {
    fn dim(&self) -> usize {
        self.sys.dof()
    }

    fn form(&self) -> &Mat {
        &self.omega0
    }

    fn span(&self) -> (f64, f64) {
        (self.traj.t_lo, self.traj.t_hi)
    }

    fn basis(&self, t: f64) -> Result<(Mat, Mat)> {
        let (p, _, minv) = self.inverse_monodromy(t)?;
        let y = self.vertical_at(t)?;
        let a = vector_field_jacobian(self.sys, p.z.as_slice())?;
        let v = &minv * &y;
        let vd = -(&minv * a * y);
        Ok((v, vd))
    }

    fn gram(&self, t: f64) -> Result<Mat> {
        let p = self.traj.state(t)?;
        let seg = self.traj.segment(t)?;
        let (g, _) = monotone_form(self.sys, p.z.as_slice())?;
        Ok(sym(&(seg.vertical.transpose() * g * &seg.vertical)))
    }

    fn gram_rate(&self, t: f64) -> Result<Mat> {
        let p = self.traj.state(t)?;
        let seg = self.traj.segment(t)?;
        let gd = monotone_form_rate(self.sys, p.z.as_slice())?;
        Ok(sym(&(seg.vertical.transpose() * gd * &seg.vertical)))
    }

    fn pushed(&self, t: f64, frame_t: f64) -> Option<Result<Pushed>> {
        Some((|| {
            let p = self.traj.state(t)?;
            let z = p.z.as_slice();
            let generator = vector_field_jacobian(self.sys, z)?;
            let form = symplectic_matrix(self.sys, z);
            let mut y = self.vertical_at(t)?;
            let mut y_rate = -(&generator * &y);
            let target = self.traj.segment(frame_t)?.chart;
            if target != p.chart {
                let (_, jac) = self.sys.chart_map(p.chart, target, z)?;
                y = &jac * y;
                y_rate = &jac * y_rate;
            }
            Ok(Pushed { y, y_rate, generator, form })
        })())
    }
}

/// `x + s·d` as a plain vector.
fn shifted(z: &[f64], d: &Vector, s: f64) -> Vec<f64> {
    z.iter().zip(d.iter()).map(|(a, b)| a + s * b).collect()
}

/// Lie derivative along `X` of a matrix field, by central differences along
/// the straight line `z + sX(z)`.
pub fn lie_derivative<F>(sys: &dyn PhaseSystem, z: &[f64], step: f64, mut field: F) -> Result<Mat>
where
    F: FnMut(&[f64]) -> Result<Mat>,
{
    let x = hamiltonian_vector_field(sys, z)?;
    cd4_mat(|s| field(&shifted(z, &x, s)), 0.0, step)
}

/// Derivative of the monotone form along the flow.
pub fn monotone_form_rate(sys: &dyn PhaseSystem, z: &[f64]) -> Result<Mat> {
    lie_derivative(sys, z, LIE_STEP, |w| Ok(monotone_form(sys, w)?.0))
}

/// `L = C⁻ᵀ` and `L̇` for `G = C Cᵀ`, from `G` and `Ġ`.
///
/// `LᵀGL = I`; the derivative follows from the Cholesky derivative
/// `Ċ = C Φ(C⁻¹ Ġ C⁻ᵀ)`, `Φ` taking the lower triangle with halved diagonal.
pub fn gram_normalizer(g: &Mat, gd: &Mat, t: f64) -> Result<(Mat, Mat)> {
    let det = normalized_det(g);
    if !(det >= GRAM_DET_MIN) {
        return Err(HamError::DegenerateGram { t, det });
    }
    let c = cholesky_lower(g).ok_or_else(|| {
        HamError::Hypothesis(format!("canonical form is not positive definite at t = {t} (curve is not monotone)"))
    })?;
    let cinv = c.clone().solve_lower_triangular(&Mat::identity(g.nrows(), g.nrows())).ok_or({
        HamError::DegenerateGram { t, det }
    })?;
    let mut phi = &cinv * gd * cinv.transpose();
    let m = phi.nrows();
    for i in 0..m {
        for j in i + 1..m {
            phi[(i, j)] = 0.0;
        }
        phi[(i, i)] *= 0.5;
    }
    let cd = &c * phi;
    let l = cinv.transpose();
    let ld = -(&l * cd.transpose() * &l);
    Ok((l, ld))
}

/// Orthonormalization class of the normalized family a frame is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gauge {
    /// Cholesky normalization in coordinate order.
    Cholesky,
    /// Cholesky normalization followed by a seeded time-dependent rotation.
    Twisted { seed: u64 },
}

impl Gauge {
    pub fn label(&self) -> String {
        match self {
            Gauge::Cholesky => "cholesky".into(),
            Gauge::Twisted { seed } => format!("twisted:{seed}"),
        }
    }

    /// Rotation `R(t)` and `Ṙ(t)` applied on the right of the normalizer.
    fn rotation(&self, m: usize, t: f64) -> (Mat, Mat) {
        let seed = match self {
            Gauge::Cholesky => return (Mat::identity(m, m), Mat::zeros(m, m)),
            Gauge::Twisted { seed } => *seed,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if m == 1 {
            let s = if rng.gen::<bool>() { -1.0 } else { 1.0 };
            return (Mat::from_element(1, 1, s), Mat::zeros(1, 1));
        }
        // product of Givens rotations with angles a + b sin(w t) + c t
        let mut factors: Vec<(Mat, Mat)> = Vec::new();
        for i in 0..m {
            for j in i + 1..m {
                let (a, b, w, c) = (
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(0.5..2.0),
                    rng.gen_range(-0.5..0.5),
                );
                let th = a + b * (w * t).sin() + c * t;
                let thd = b * w * (w * t).cos() + c;
                let mut g = Mat::identity(m, m);
                let mut gd = Mat::zeros(m, m);
                let (s, co) = th.sin_cos();
                g[(i, i)] = co;
                g[(j, j)] = co;
                g[(i, j)] = -s;
                g[(j, i)] = s;
                gd[(i, i)] = -s * thd;
                gd[(j, j)] = -s * thd;
                gd[(i, j)] = -co * thd;
                gd[(j, i)] = co * thd;
                factors.push((g, gd));
            }
        }
        let mut r = Mat::identity(m, m);
        let mut rd = Mat::zeros(m, m);
        for (g, gd) in factors {
            rd = &rd * &g + &r * gd;
            r = &r * g;
        }
        (r, rd)
    }
}

/// Normalized (orthonormal for the canonical form) family `Ē`, `Ē̇` and
/// `Ω̃ = Ē̇ᵀ Ω Ē̇` of a curve at `t`.
#[derive(Debug, Clone)]
pub struct NormalizedFamily {
    pub e: Mat,
    pub e_dot: Mat,
    pub omega: Mat,
}

/// Normalizer `L(t)`, `L̇(t)` with the gauge rotation applied.
pub fn normalizer(curve: &dyn LagrangianCurve, t: f64, gauge: Gauge) -> Result<(Mat, Mat)> {
    let (l, ld) = gram_normalizer(&curve.gram(t)?, &curve.gram_rate(t)?, t)?;
    if gauge == Gauge::Cholesky {
        return Ok((l, ld));
    }
    let (r, rd) = gauge.rotation(curve.dim(), t);
    Ok((&l * &r, ld * &r + &l * rd))
}

pub fn normalized_family(curve: &dyn LagrangianCurve, t: f64, gauge: Gauge) -> Result<NormalizedFamily> {
    let (v, vd) = curve.basis(t)?;
    let (l, ld) = normalizer(curve, t, gauge)?;
    let e = &v * &l;
    let e_dot = vd * &l + v * &ld;
    // Ω̃ is bounded even when the basis is not; evaluate it where it is
    let omega = match curve.pushed(t, t) {
        Some(p) => {
            let p = p?;
            let ed = p.y_rate * &l + p.y * ld;
            antisym(&(ed.transpose() * p.form * ed))
        }
        None => antisym(&(e_dot.transpose() * curve.form() * &e_dot)),
    };
    Ok(NormalizedFamily { e, e_dot, omega })
}

/// Options for canonical frame construction.
#[derive(Debug, Clone, Copy)]
pub struct FrameOptions {
    /// Time step of the central difference for `Ḟ`.
    pub fd_step: f64,
    /// Tolerance of the gauge ODE.
    pub tol: f64,
    /// Polar re-orthogonalization period in accepted steps.
    pub reorth_every: usize,
    pub gauge: Gauge,
}

impl Default for FrameOptions {
    fn default() -> Self {
        Self { fd_step: FRAME_STEP, tol: 1e-13, reorth_every: 50, gauge: Gauge::Cholesky }
    }
}

impl FrameOptions {
    /// Extra time needed on both sides of a grid by the difference stencils.
    pub fn margin(&self) -> f64 {
        2.0 * self.fd_step + 1e-9
    }
}

/// Solution `Q(t)` of the gauge equation `Q̇ = −½ Ω̃ Q`, `Q(0) = I`.
pub struct GaugeTransport {
    m: usize,
    forward: Option<DenseSolution>,
    backward: Option<DenseSolution>,
}

impl GaugeTransport {
    pub fn solve(curve: &dyn LagrangianCurve, t_lo: f64, t_hi: f64, opts: &FrameOptions) -> Result<Self> {
        let m = curve.dim();
        if m == 1 {
            // Ω̃ is a 1 × 1 antisymmetric matrix
            return Ok(Self { m, forward: None, backward: None });
        }
        let q0 = Mat::identity(m, m);
        let mut err: Option<HamError> = None;
        let mut rhs = |t: f64, y: &[f64], dy: &mut [f64]| match normalized_family(curve, t, opts.gauge) {
            Ok(fam) => {
                let q = Mat::from_column_slice(m, m, y);
                dy.copy_from_slice((fam.omega * q * -0.5).as_slice());
            }
            Err(e) => {
                err.get_or_insert(e);
                dy.iter_mut().for_each(|v| *v = f64::NAN);
            }
        };
        let ode = OdeOptions::with_tol(opts.tol);
        let every = opts.reorth_every.max(1);
        let side = |t_end: f64, rhs: &mut VectorField| -> Result<Option<DenseSolution>> {
            if t_end == 0.0 {
                return Ok(None);
            }
            let mut count = 0usize;
            let hook = |_: &crate::integrator::DenseStep, y: &[f64], _: &mut usize| {
                count += 1;
                if count.is_multiple_of(every) {
                    StepAction::Replace(polar_orthogonal(&Mat::from_column_slice(m, m, y)).as_slice().to_vec())
                } else {
                    StepAction::Continue
                }
            };
            Ok(Some(integrate(|t, y, dy| rhs(t, y, dy), 0.0, q0.as_slice(), t_end, &ode, 0, hook)?))
        };
        let forward = side(t_hi, &mut rhs);
        let backward = side(t_lo, &mut rhs);
        if let Some(e) = err {
            return Err(e);
        }
        Ok(Self { m, forward: forward?, backward: backward? })
    }

    pub fn eval(&self, t: f64) -> Mat {
        let sol = if t >= 0.0 { self.forward.as_ref().or(self.backward.as_ref()) } else { self.backward.as_ref().or(self.forward.as_ref()) };
        match sol {
            Some(s) if t != 0.0 => Mat::from_column_slice(self.m, self.m, &s.eval(t)),
            _ => Mat::identity(self.m, self.m),
        }
    }
}

/// Canonical frame sampled on a grid.
#[derive(Debug, Clone)]
pub struct CanonicalFrame {
    pub times: Vec<f64>,
    pub e: Vec<Mat>,
    pub f: Vec<Mat>,
    pub curvature: Vec<Mat>,
    /// `Ω̃(t)` of the normalized family the frame was built from.
    pub omega_tilde: Vec<Mat>,
    /// Asymmetry of `𝓡` before symmetrization, per node.
    pub asymmetry: Vec<f64>,
    /// Largest Darboux residual, relative to the product of column norms.
    pub darboux_residual: f64,
    pub frame_gauge: String,
}

/// Largest Darboux residual of `(E, F)` relative to `max(1, |E|)·max(1, |F|)`.
pub fn darboux_residual(omega: &Mat, e: &Mat, f: &Mat) -> f64 {
    let m = e.ncols();
    let ne = max_abs(e).max(1.0);
    let nf = max_abs(f).max(1.0);
    let ee = max_abs(&(e.transpose() * omega * e)) / (ne * ne);
    let ff = max_abs(&(f.transpose() * omega * f)) / (nf * nf);
    let fe = max_abs(&(f.transpose() * omega * e - Mat::identity(m, m))) / (ne * nf);
    ee.max(ff).max(fe)
}

/// Frame evaluator bound to a curve and a solved gauge.
pub struct FrameEvaluator<'c> {
    pub curve: &'c dyn LagrangianCurve,
    pub opts: FrameOptions,
    pub q: GaugeTransport,
}

impl<'c> FrameEvaluator<'c> {
    /// Prepares frames for times in `[t_lo, t_hi]`; the curve must cover the stencil margin.
    pub fn new(curve: &'c dyn LagrangianCurve, t_lo: f64, t_hi: f64, opts: FrameOptions) -> Result<Self> {
        let (a, b) = curve.span();
        let (lo, hi) = (t_lo.min(0.0) - opts.margin(), t_hi.max(0.0) + opts.margin());
        if lo < a - 1e-12 || hi > b + 1e-12 {
            return Err(HamError::InvalidArgument(format!(
                "frame on [{t_lo}, {t_hi}] needs the curve on [{lo}, {hi}], available [{a}, {b}]"
            )));
        }
        let q = GaugeTransport::solve(curve, lo.max(a), hi.min(b), &opts)?;
        Ok(Self { curve, opts, q })
    }

    /// `(E, F, Ω̃)` at `t`.
    pub fn frame(&self, t: f64) -> Result<(Mat, Mat, Mat)> {
        let fam = normalized_family(self.curve, t, self.opts.gauge)?;
        let q = self.q.eval(t);
        let e = &fam.e * &q;
        let f = (&fam.e_dot - &fam.e * &fam.omega * 0.5) * &q;
        Ok((e, f, fam.omega))
    }

    /// `F̂ = ΦF` at `s` in the coordinates used at `center`.
    fn pushed_f(&self, s: f64, center: f64) -> Result<Option<(Mat, Pushed)>> {
        let Some(p) = self.curve.pushed(s, center) else {
            return Ok(None);
        };
        let p = p?;
        let (l, ld) = normalizer(self.curve, s, self.opts.gauge)?;
        let ed = &p.y_rate * &l + &p.y * ld;
        let om = antisym(&(ed.transpose() * &p.form * &ed));
        let f = (ed - &p.y * l * om * 0.5) * self.q.eval(s);
        Ok(Some((f, p)))
    }

    /// Unsymmetrized curvature `−Fᵀ Ω Ḟ` at `t`.
    ///
    /// With a push-forward available this is `−F̂ᵀ Ω̂ (dF̂/dt − A F̂)`, which
    /// avoids the cancellation in `Fᵀ Ω Ḟ` when the frame grows.
    pub fn raw_curvature(&self, t: f64) -> Result<(Mat, Mat, Mat, Mat)> {
        let (e, f, om) = self.frame(t)?;
        let h = self.opts.fd_step;
        let r = match self.pushed_f(t, t)? {
            Some((fh, p)) => {
                let fhd = cd4_mat(|s| Ok(self.pushed_f(s, t)?.expect("push-forward available").0), t, h)?;
                -(fh.transpose() * &p.form * (fhd - &p.generator * &fh))
            }
            None => {
                let fd = cd4_mat(|s| Ok(self.frame(s)?.1), t, h)?;
                -(f.transpose() * self.curve.form() * fd)
            }
        };
        Ok((e, f, om, r))
    }

    pub fn sample(&self, times: &[f64]) -> Result<CanonicalFrame> {
        let mut out = CanonicalFrame {
            times: times.to_vec(),
            e: Vec::with_capacity(times.len()),
            f: Vec::with_capacity(times.len()),
            curvature: Vec::with_capacity(times.len()),
            omega_tilde: Vec::with_capacity(times.len()),
            asymmetry: Vec::with_capacity(times.len()),
            darboux_residual: 0.0,
            frame_gauge: self.opts.gauge.label(),
        };
        for &t in times {
            let (e, f, om, r) = self.raw_curvature(t)?;
            let res = darboux_residual(self.curve.form(), &e, &f);
            out.darboux_residual = out.darboux_residual.max(res);
            out.asymmetry.push(asymmetry(&r));
            out.curvature.push(sym(&r));
            out.e.push(e);
            out.f.push(f);
            out.omega_tilde.push(om);
        }
        if out.darboux_residual > 1e-6 {
            return Err(HamError::residual("canonical frame Darboux relations (refine the grid)", out.darboux_residual, 1e-6));
        }
        Ok(out)
    }
}

/// Canonical frame of `curve` on `times`.
pub fn canonical_frame(curve: &dyn LagrangianCurve, times: &[f64], opts: FrameOptions) -> Result<CanonicalFrame> {
    let (lo, hi) = grid_bounds(times);
    FrameEvaluator::new(curve, lo, hi, opts)?.sample(times)
}

fn grid_bounds(times: &[f64]) -> (f64, f64) {
    times.iter().fold((0.0_f64, 0.0_f64), |(a, b), &t| (a.min(t), b.max(t)))
}

/// Pulled-back vertical frames and canonical forms on a grid.
#[derive(Debug, Clone)]
pub struct JacobiCurveSample {
    pub base: PhasePoint,
    pub times: Vec<f64>,
    pub frames: Vec<Mat>,
    pub gram: Vec<Mat>,
    /// Largest `|Vᵀ Ω V|` relative to `|V|²`.
    pub isotropy_residual: f64,
    /// Whether every Gram matrix is positive definite.
    pub monotone: bool,
}

pub fn jacobi_curve(sys: &dyn PhaseSystem, alpha: &PhasePoint, times: &[f64], tol: f64) -> Result<JacobiCurveSample> {
    let (lo, hi) = grid_bounds(times);
    let curve = JacobiCurve::new(sys, alpha, lo, hi, tol)?;
    let mut out = JacobiCurveSample {
        base: alpha.clone(),
        times: times.to_vec(),
        frames: Vec::new(),
        gram: Vec::new(),
        isotropy_residual: 0.0,
        monotone: true,
    };
    for &t in times {
        let (v, _) = curve.basis(t)?;
        let g = curve.gram(t)?;
        let det = normalized_det(&g);
        if !(det >= GRAM_DET_MIN) {
            return Err(HamError::DegenerateGram { t, det });
        }
        out.monotone &= cholesky_lower(&g).is_some();
        let iso = max_abs(&(v.transpose() * curve.form() * &v)) / max_abs(&v).powi(2).max(1e-300);
        out.isotropy_residual = out.isotropy_residual.max(iso);
        out.frames.push(v);
        out.gram.push(g);
    }
    Ok(out)
}

/// Canonical frame of the Jacobi curve at `α` on `times`.
pub fn jacobi_frame(
    sys: &dyn PhaseSystem,
    alpha: &PhasePoint,
    times: &[f64],
    tol: f64,
    opts: FrameOptions,
) -> Result<CanonicalFrame> {
    let (lo, hi) = grid_bounds(times);
    let curve = JacobiCurve::new(sys, alpha, lo - opts.margin(), hi + opts.margin(), tol)?;
    canonical_frame(&curve, times, opts)
}

/// Pointwise data at `z` of the normalized vertical frame `ε = [0; I] L(z)`
/// and its Lie derivative along `X`.
#[derive(Debug, Clone)]
pub struct LocalFrame {
    pub omega: Mat,
    /// `DX(z)`.
    pub a: Mat,
    pub x: Vector,
    pub gram: Mat,
    pub l: Mat,
    pub l_dot: Mat,
    /// `ε(z)`.
    pub e: Mat,
    /// `[X, ε](z)`.
    pub e_dot: Mat,
    /// `Ω̃ = [X, ε]ᵀ Ω [X, ε]`.
    pub omega_tilde: Mat,
    /// Horizontal frame `[X, ε] − ½ ε Ω̃`, a basis of the derivative line `Λ°`.
    pub f: Mat,
}

impl LocalFrame {
    pub fn at(sys: &dyn PhaseSystem, z: &[f64]) -> Result<Self> {
        let n = sys.dof();
        let omega = symplectic_matrix(sys, z);
        let a = vector_field_jacobian(sys, z)?;
        let x = hamiltonian_vector_field(sys, z)?;
        let (gram, _) = monotone_form(sys, z)?;
        let gd = monotone_form_rate(sys, z)?;
        let (l, l_dot) = gram_normalizer(&gram, &gd, 0.0)?;
        let v0 = vertical_basis(n);
        let e = &v0 * &l;
        // [X, V0 L] = V0 L̇ − DX V0 L
        let e_dot = &v0 * &l_dot - &a * &e;
        let omega_tilde = antisym(&(e_dot.transpose() * &omega * &e_dot));
        let f = &e_dot - &e * &omega_tilde * 0.5;
        Ok(Self { omega, a, x, gram, l, l_dot, e, e_dot, omega_tilde, f })
    }

    /// Projector onto `Λ°` along `Λ`: `w ↦ −F εᵀ Ω w`.
    pub fn projector_h(&self) -> Mat {
        -(&self.f * self.e.transpose() * &self.omega)
    }

    pub fn projector_v(&self) -> Mat {
        let m = self.omega.nrows();
        Mat::identity(m, m) - self.projector_h()
    }
}

/// Curvature `𝓡` at `z` in the basis `ε(z)` by the bracket formula.
/// Returns the symmetrized matrix and its asymmetry.
pub fn bracket_curvature(sys: &dyn PhaseSystem, z: &[f64]) -> Result<(Mat, f64)> {
    let n = sys.dof();
    let here = LocalFrame::at(sys, z)?;
    let v0 = vertical_basis(n);
    // W = [X, V0]ʰ as a field near z
    let w_field = |w: &[f64]| -> Result<Mat> {
        let lf = LocalFrame::at(sys, w)?;
        Ok(-(lf.projector_h() * &lf.a * &v0))
    };
    let w0 = w_field(z)?;
    let dw = lie_derivative(sys, z, LIE_STEP_OUTER, w_field)?;
    let bracket = dw - &here.a * w0;
    let nv = -(here.projector_v() * bracket);
    let nmat = nv.view((n, 0), (n, n)).into_owned();
    let linv = inverse(&here.l)?;
    let r = linv * nmat * &here.l;
    Ok((sym(&r), asymmetry(&r)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurvatureMethod {
    Frame,
    Bracket,
}

/// Curvature operator at `α` in the canonical basis `E(0) = ε(α)`.
#[derive(Debug, Clone)]
pub struct CurvatureOperator {
    pub method: CurvatureMethod,
    pub matrix: Mat,
    pub eigenvalues: Vec<f64>,
    pub asymmetry: f64,
}

pub fn curvature_operator(
    sys: &dyn PhaseSystem,
    alpha: &PhasePoint,
    method: CurvatureMethod,
    tol: f64,
) -> Result<CurvatureOperator> {
    let (matrix, asym) = match method {
        CurvatureMethod::Bracket => bracket_curvature(sys, alpha.z.as_slice())?,
        CurvatureMethod::Frame => {
            let opts = FrameOptions::default();
            let frame = jacobi_frame(sys, alpha, &[0.0], tol, opts)?;
            (frame.curvature[0].clone(), frame.asymmetry[0])
        }
    };
    if asym > 1e-5 {
        return Err(HamError::residual("curvature operator asymmetry", asym, 1e-5));
    }
    let eigenvalues = crate::linalg::sym_eigen(&matrix).0;
    Ok(CurvatureOperator { method, matrix, eigenvalues, asymmetry: asym })
}

/// Vertical/horizontal splitting `T_α = Λ_α ⊕ Λ°_α`.
#[derive(Debug, Clone)]
pub struct Splitting {
    pub base: PhasePoint,
    pub vertical: Mat,
    pub horizontal: Mat,
    pub projector_v: Mat,
    pub projector_h: Mat,
    pub condition: f64,
}

pub fn splitting(sys: &dyn PhaseSystem, alpha: &PhasePoint) -> Result<Splitting> {
    let lf = LocalFrame::at(sys, alpha.z.as_slice())?;
    let mut both = Mat::zeros(lf.e.nrows(), 2 * lf.e.ncols());
    both.view_mut((0, 0), lf.e.shape()).copy_from(&lf.e);
    both.view_mut((0, lf.e.ncols()), lf.f.shape()).copy_from(&lf.f);
    let condition = condition_number(&both);
    if condition > 1e8 {
        return Err(HamError::IllConditioned { what: "vertical/horizontal direct sum".into(), cond: condition });
    }
    Ok(Splitting {
        base: alpha.clone(),
        vertical: lf.e.clone(),
        horizontal: lf.f.clone(),
        projector_v: lf.projector_v(),
        projector_h: lf.projector_h(),
        condition,
    })
}

/// Result of comparing `dφ_s J_α(t)` with `J_{φ_s α}(t − s)`.
#[derive(Debug, Clone)]
pub struct EquivarianceReport {
    pub s: f64,
    pub t: f64,
    /// Largest principal angle between the two subspaces.
    pub max_angle: f64,
    /// `|𝓡_α(t) − Oᵀ 𝓡_{φ_t α}(0) O|∞` with `O` relating the two canonical bases.
    pub curvature_residual: f64,
}

pub fn equivariance_check(sys: &dyn PhaseSystem, alpha: &PhasePoint, s: f64, t: f64, tol: f64) -> Result<EquivarianceReport> {
    let opts = FrameOptions::default();
    let lo = s.min(t).min(0.0) - opts.margin();
    let hi = s.max(t).max(0.0) + opts.margin();
    let curve = JacobiCurve::new(sys, alpha, lo, hi, tol)?;
    let (v_t, _) = curve.basis(t)?;
    let (beta, m_s) = curve.traj.state_and_monodromy(s)?;
    let pushed = &m_s * v_t;
    let other = JacobiCurve::new(sys, &beta, (t - s).min(0.0) - 1e-9, (t - s).max(0.0) + 1e-9, tol)?;
    let (v_other, _) = other.basis(t - s)?;
    let max_angle = principal_angles(&pushed, &v_other).into_iter().fold(0.0, f64::max);

    // 𝓡_α(t) against the curvature at φ_t α pulled back along the flow
    let frame = FrameEvaluator::new(&curve, t, t, opts)?;
    let (_, f_t, _, r_raw) = frame.raw_curvature(t)?;
    let r_t = sym(&r_raw);
    let (gamma, _, minv) = curve.inverse_monodromy(t)?;
    let zg = gamma.z.as_slice();
    let lf = LocalFrame::at(sys, zg)?;
    // monotone-orthonormal vertical basis at φ_t α in the transported coordinates
    let p = &curve.traj.segment(t)?.vertical;
    let gt = sym(&(p.transpose() * &lf.gram * p));
    let gd = sym(&(p.transpose() * monotone_form_rate(sys, zg)? * p));
    let k = p * gram_normalizer(&gt, &gd, t)?.0;
    let n = sys.dof();
    let mut eps = Mat::zeros(2 * n, n);
    eps.view_mut((n, 0), (n, n)).copy_from(&k);
    let o = f_t.transpose() * curve.form() * minv * eps;
    let (r_gamma, _) = bracket_curvature_in_basis(sys, zg, &lf, &k)?;
    let curvature_residual = max_abs(&(r_t - &o * r_gamma * o.transpose()));
    Ok(EquivarianceReport { s, t, max_angle, curvature_residual })
}

/// Bracket curvature at `z` expressed in the vertical basis `[0; K]`, with
/// `K` orthonormal for the monotone form.
pub fn bracket_curvature_in_basis(sys: &dyn PhaseSystem, z: &[f64], lf: &LocalFrame, k: &Mat) -> Result<(Mat, f64)> {
    let (r, asym) = bracket_curvature(sys, z)?;
    // K = L O with O orthogonal
    let o = inverse(&lf.l)? * k;
    Ok((o.transpose() * r * o, asym))
}
