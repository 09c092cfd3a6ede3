//! Symplectic reduction by the Hamiltonian field.
//!
//! At a regular point `α` the reduced space is `𝔙 = ker dH_α / ℝX`. It is
//! represented by an orthonormal basis `R` of `ker dH_α ∩ X^⊥` (Euclidean),
//! so that `project(w) = Rᵀw` for `w ∈ ker dH_α` and `lift(y) = Ry`. The
//! reduced form is `ω̃ = RᵀΩR`.
//!
//! The reduced Jacobi curve is spanned by `Rᵀ V(t) k(t)` where the columns of
//! `k(t)` span the kernel of `r(t) = dH_α V(t)`. The kernel basis is
//! transported by `k̇ = −rᵀ(ṙ k)/|r|²`, which keeps it orthonormal.

use rand::Rng;

use crate::error::{HamError, Result};
use crate::integrator::{integrate_two_sided, OdeOptions, TwoSided};
use crate::jacobi::{
    bracket_curvature, canonical_frame, darboux_residual, gram_normalizer, lie_derivative, normalized_family, normalizer,
    FrameEvaluator, FrameOptions, JacobiCurve, LagrangianCurve, LocalFrame, LIE_STEP, LIE_STEP_OUTER,
};
use crate::linalg::{antisym, asymmetry, cd4_mat, cd4_second_mat, inverse, max_abs, orthonormal_columns, sym, Mat, Vector};
use crate::symplectic::{
    hamiltonian_vector_field, monotone_form, symplectic_matrix, vector_field_jacobian, PhasePoint,
    PhaseSystem,
};

/// `|dH|` below which a point is treated as critical.
pub const CRITICAL_GRADIENT: f64 = 1e-12;
/// `|c|` below which the field is treated as tangent to the Jacobi curve.
pub const TRANSVERSALITY_MIN: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct ReducedSpace {
    pub base: PhasePoint,
    /// `X(α)`.
    pub field: Vector,
    /// `∇H(α)`.
    pub gradient: Vector,
    /// `2n × (2n − 2)` representatives, orthonormal and orthogonal to `X` and `∇H`.
    pub representative_basis: Mat,
    pub reduced_omega: Mat,
    pub omega: Mat,
}

impl ReducedSpace {
    pub fn dim(&self) -> usize {
        self.representative_basis.ncols()
    }

    /// Class of `w ∈ ker dH_α` in reduced coordinates.
    pub fn project(&self, w: &Mat) -> Mat {
        self.representative_basis.transpose() * w
    }

    /// Representative of a reduced vector.
    pub fn lift(&self, y: &Mat) -> Mat {
        &self.representative_basis * y
    }

    /// Largest `|ω(r_i, X)|` over representatives.
    pub fn orthogonality_residual(&self) -> f64 {
        (self.representative_basis.transpose() * &self.omega * &self.field).amax()
    }
}

/// Result of reducing at a point; one-degree-of-freedom systems reduce to a point.
#[derive(Debug, Clone)]
pub enum Reduction {
    Trivial { base: PhasePoint },
    Space(ReducedSpace),
}

impl Reduction {
    pub fn space(self) -> Result<ReducedSpace> {
        match self {
            Reduction::Space(s) => Ok(s),
            Reduction::Trivial { .. } => {
                Err(HamError::InvalidArgument("reduction of a one-degree-of-freedom system is trivial".into()))
            }
        }
    }

    pub fn is_trivial(&self) -> bool {
        matches!(self, Reduction::Trivial { .. })
    }
}

/// Checks regularity and transversality at `z`, returning `(∇H, X)`.
fn regular_point(sys: &dyn PhaseSystem, z: &[f64]) -> Result<(Vector, Vector)> {
    let n = sys.dof();
    let grad = sys.gradient(z);
    let norm = grad.norm();
    if !(norm >= CRITICAL_GRADIENT) {
        return Err(HamError::CriticalPoint(norm));
    }
    let x = hamiltonian_vector_field(sys, z)?;
    // X ∈ Λ iff H_p vanishes; measured by H_pᵀG⁻¹H_p, which is invariant under cotangent lifts
    let hp = grad.rows(n, n).into_owned();
    let (g, pd) = crate::symplectic::monotone_form(sys, z)?;
    let q = match pd.then(|| nalgebra::Cholesky::new(g)).flatten() {
        Some(ch) => hp.dot(&ch.solve(&hp)).sqrt(),
        None => hp.norm() / norm,
    };
    if !(q >= TRANSVERSALITY_MIN) {
        return Err(HamError::Hypothesis(format!("Hamiltonian field is tangent to the vertical (|H_p|_G = {q:e})")));
    }
    Ok((grad, x))
}

pub fn reduce_space(sys: &dyn PhaseSystem, alpha: &PhasePoint) -> Result<Reduction> {
    let z = alpha.z.as_slice();
    let (gradient, field) = regular_point(sys, z)?;
    let n = sys.dof();
    if n == 1 {
        return Ok(Reduction::Trivial { base: alpha.clone() });
    }
    let m = 2 * n;
    let mut c = Mat::zeros(m, 2);
    c.set_column(0, &gradient);
    c.set_column(1, &field);
    let ctc = c.transpose() * &c;
    let proj = Mat::identity(m, m) - &c * inverse(&ctc)? * c.transpose();
    let representative_basis = orthonormal_columns(&proj, 1e-8);
    if representative_basis.ncols() != m - 2 {
        return Err(HamError::IllConditioned { what: "reduced space basis".into(), cond: f64::INFINITY });
    }
    let omega = symplectic_matrix(sys, z);
    let reduced_omega = antisym(&(representative_basis.transpose() * &omega * &representative_basis));
    Ok(Reduction::Space(ReducedSpace { base: alpha.clone(), field, gradient, representative_basis, reduced_omega, omega }))
}

/// Orthonormal basis of `h^⊥ ⊂ ℝⁿ`, deterministic in `h`.
pub fn kernel_basis(h: &Vector) -> Mat {
    let n = h.len();
    if n == 2 {
        let u = h / h.norm();
        return Mat::from_column_slice(2, 1, &[-u[1], u[0]]);
    }
    let u = h / h.norm();
    orthonormal_columns(&(Mat::identity(n, n) - &u * u.transpose()), 1e-8)
}

/// Reduced Jacobi curve `J̃_α(t)` in `𝔙_α`.
pub struct ReducedCurve<'a> {
    pub full: JacobiCurve<'a>,
    pub space: ReducedSpace,
    kernel: TwoSided,
    span: (f64, f64),
}

impl<'a> ReducedCurve<'a> {
    pub fn new(sys: &'a dyn PhaseSystem, alpha: &PhasePoint, t_lo: f64, t_hi: f64, tol: f64) -> Result<Self> {
        let space = reduce_space(sys, alpha)?.space()?;
        let full = JacobiCurve::new(sys, alpha, t_lo, t_hi, tol)?;
        Self::from_curve(full, space)
    }

    pub fn from_curve(full: JacobiCurve<'a>, space: ReducedSpace) -> Result<Self> {
        let n = full.dim();
        let (lo, hi) = full.span();
        let grad = space.gradient.clone();
        let k0 = kernel_basis(&grad.rows(n, n).into_owned());
        let m = k0.ncols();
        let mut err: Option<HamError> = None;
        let rhs = |t: f64, y: &[f64], dy: &mut [f64]| match full.basis(t) {
            Ok((v, vd)) => {
                let r = grad.transpose() * v;
                let rd = grad.transpose() * vd;
                let k = Mat::from_column_slice(n, m, y);
                let kd = -(r.transpose() * (rd * k)) / r.norm_squared();
                dy.copy_from_slice(kd.as_slice());
            }
            Err(e) => {
                err.get_or_insert(e);
                dy.iter_mut().for_each(|v| *v = f64::NAN);
            }
        };
        let kernel = integrate_two_sided(rhs, 0.0, k0.as_slice(), lo, hi, &OdeOptions::with_tol(1e-13));
        if let Some(e) = err {
            return Err(e);
        }
        Ok(Self { full, space, kernel: kernel?, span: (lo, hi) })
    }

    pub fn reduced_dim(&self) -> usize {
        self.full.dim() - 1
    }

    /// Kernel basis `k(t)` and its derivative.
    pub fn kernel(&self, t: f64) -> Result<(Mat, Mat)> {
        let n = self.full.dim();
        let m = n - 1;
        let k = Mat::from_column_slice(n, m, &self.kernel.eval(t));
        let (v, vd) = self.full.basis(t)?;
        let r = self.space.gradient.transpose() * v;
        let rd = self.space.gradient.transpose() * vd;
        let kd = -(r.transpose() * (rd * &k)) / r.norm_squared();
        Ok((k, kd))
    }

    /// `|r(t) k(t)| / |r(t)|`; stays at integration accuracy.
    pub fn kernel_residual(&self, t: f64) -> Result<f64> {
        let (v, _) = self.full.basis(t)?;
        let r = self.space.gradient.transpose() * v;
        let (k, _) = self.kernel(t)?;
        Ok((r.clone() * k).amax() / r.norm())
    }
}

impl LagrangianCurve for ReducedCurve<'_> {
    fn dim(&self) -> usize {
        self.reduced_dim()
    }

    fn form(&self) -> &Mat {
        &self.space.reduced_omega
    }

    fn span(&self) -> (f64, f64) {
        self.span
    }

    fn basis(&self, t: f64) -> Result<(Mat, Mat)> {
        let (v, vd) = self.full.basis(t)?;
        let (k, kd) = self.kernel(t)?;
        let rt = self.space.representative_basis.transpose();
        Ok((&rt * &v * &k, rt * (vd * &k + v * kd)))
    }

    fn gram(&self, t: f64) -> Result<Mat> {
        let g = self.full.gram(t)?;
        let (k, _) = self.kernel(t)?;
        Ok(sym(&(k.transpose() * g * k)))
    }

    fn gram_rate(&self, t: f64) -> Result<Mat> {
        let g = self.full.gram(t)?;
        let gd = self.full.gram_rate(t)?;
        let (k, kd) = self.kernel(t)?;
        let a = kd.transpose() * &g * &k;
        Ok(sym(&(&a + a.transpose() + k.transpose() * gd * k)))
    }
}

/// Adapted frame of the full curve: the first `n − 1` vectors descend to the
/// reduced canonical frame, the last one is the unit normal to `J ∩ ker dH`.
pub struct AdaptedFamily<'r, 'a> {
    pub reduced: &'r ReducedCurve<'a>,
    pub frame: FrameEvaluator<'r>,
}

/// Adapted family sampled at one time.
#[derive(Debug, Clone)]
pub struct AdaptedSample {
    pub e: Mat,
    pub e_dot: Mat,
    /// `Ω_ij = ω(ē̇ⁱ, ē̇ʲ)`.
    pub omega: Mat,
    /// `Ω̄_i = Ω_{ni}`.
    pub omega_bar: Vector,
    /// `c(t) = ω(X_α, ēⁿ(t))`.
    pub c: f64,
}

impl<'r, 'a> AdaptedFamily<'r, 'a> {
    pub fn new(reduced: &'r ReducedCurve<'a>, t_lo: f64, t_hi: f64, opts: FrameOptions) -> Result<Self> {
        let frame = FrameEvaluator::new(reduced, t_lo, t_hi, opts)?;
        Ok(Self { reduced, frame })
    }

    /// Unit normal `μ = G⁻¹rᵀ / √(r G⁻¹ rᵀ)` and its derivative.
    fn normal(&self, t: f64) -> Result<(Mat, Mat)> {
        let full = &self.reduced.full;
        let (v, vd) = full.basis(t)?;
        let g = full.gram(t)?;
        let gd = full.gram_rate(t)?;
        let grad = &self.reduced.space.gradient;
        let r = (grad.transpose() * v).transpose();
        let rd = (grad.transpose() * vd).transpose();
        let ginv = inverse(&g)?;
        let u = &ginv * &r;
        let ud = &ginv * (rd.clone() - &gd * &u);
        let s = r.dot(&u);
        let sd = rd.dot(&u) + r.dot(&ud);
        let mu = &u / s.sqrt();
        let mud = &ud / s.sqrt() - &u * (0.5 * sd / s.powf(1.5));
        Ok((Mat::from_column_slice(u.len(), 1, mu.as_slice()), Mat::from_column_slice(u.len(), 1, mud.as_slice())))
    }

    pub fn sample(&self, t: f64) -> Result<AdaptedSample> {
        let red = self.reduced;
        let full = &red.full;
        let n = full.dim();
        let m = n - 1;
        let (v, vd) = full.basis(t)?;
        let (k, kd) = red.kernel(t)?;
        let (lk, lkd) = normalizer(red, t, self.frame.opts.gauge)?;
        let q = self.frame.q.eval(t);
        let fam = normalized_family(red, t, self.frame.opts.gauge)?;
        let qd = -(&fam.omega * &q) * 0.5;
        let ka = &k * &lk * &q;
        let kad = &kd * &lk * &q + &k * &lkd * &q + &k * &lk * qd;
        let (mu, mud) = self.normal(t)?;
        let mut kk = Mat::zeros(n, n);
        let mut kkd = Mat::zeros(n, n);
        kk.view_mut((0, 0), (n, m)).copy_from(&ka);
        kk.view_mut((0, m), (n, 1)).copy_from(&mu);
        kkd.view_mut((0, 0), (n, m)).copy_from(&kad);
        kkd.view_mut((0, m), (n, 1)).copy_from(&mud);
        let e = &v * &kk;
        let e_dot = vd * &kk + v * kkd;
        let omega = antisym(&(e_dot.transpose() * full.form() * &e_dot));
        let omega_bar = Vector::from_fn(m, |i, _| omega[(m, i)]);
        let c = (red.space.field.transpose() * full.form() * e.column(m))[(0, 0)];
        Ok(AdaptedSample { e, e_dot, omega, omega_bar, c })
    }
}

/// Reduced canonical frame with the adapted-family data `Ω̄(t)` and `c(t)`.
#[derive(Debug, Clone)]
pub struct ReducedFrame {
    pub times: Vec<f64>,
    pub e: Vec<Mat>,
    pub f: Vec<Mat>,
    pub reduced_curvature: Vec<Mat>,
    pub omega_bar: Vec<Vector>,
    pub c: Vec<f64>,
    pub darboux_residual: f64,
    pub asymmetry: f64,
}

pub fn reduced_jacobi_frame(
    sys: &dyn PhaseSystem,
    alpha: &PhasePoint,
    times: &[f64],
    tol: f64,
    opts: FrameOptions,
) -> Result<ReducedFrame> {
    let (lo, hi) = times.iter().fold((0.0_f64, 0.0_f64), |(a, b), &t| (a.min(t), b.max(t)));
    let red = ReducedCurve::new(sys, alpha, lo - opts.margin(), hi + opts.margin(), tol)?;
    let frame = canonical_frame(&red, times, opts)?;
    let adapted = AdaptedFamily::new(&red, lo, hi, opts)?;
    let mut omega_bar = Vec::with_capacity(times.len());
    let mut c = Vec::with_capacity(times.len());
    for &t in times {
        let s = adapted.sample(t)?;
        if s.c.abs() < TRANSVERSALITY_MIN {
            return Err(HamError::Hypothesis(format!("Hamiltonian field nearly tangent to J(t) at t = {t} (c = {:e})", s.c)));
        }
        omega_bar.push(s.omega_bar);
        c.push(s.c);
    }
    let mut darboux: f64 = 0.0;
    for (e, f) in frame.e.iter().zip(&frame.f) {
        darboux = darboux.max(darboux_residual(red.form(), e, f));
    }
    Ok(ReducedFrame {
        times: times.to_vec(),
        e: frame.e,
        f: frame.f,
        reduced_curvature: frame.curvature,
        omega_bar,
        c,
        darboux_residual: darboux,
        asymmetry: frame.asymmetry.iter().fold(0.0, |a: f64, b| a.max(*b)),
    })
}

/// Diagnostics of the block identity relating full and reduced curvature.
#[derive(Debug, Clone)]
pub struct FormulaDiagnostics {
    /// Full curvature in the adapted basis at `t = 0`.
    pub adapted_curvature: Mat,
    pub omega_bar: Vector,
    pub c: f64,
    pub c_dot: f64,
    pub c_ddot: f64,
    /// `|predicted − actual|∞` of the off-diagonal column.
    pub off_diagonal_mismatch: f64,
    /// `|predicted − actual|` of the corner entry.
    pub corner_mismatch: f64,
    /// `𝓡̃` from the reduced canonical frame.
    pub direct: Mat,
    /// `|𝓡̃_formula − 𝓡̃_direct|∞`.
    pub mismatch: f64,
    pub quadratic_forms: Vec<QuadraticFormCheck>,
}

/// One sample of `⟨𝔑̃w,w⟩ = ⟨𝔑w,w⟩ + ¾ ω([X,[X,ξ]], w)²`.
#[derive(Debug, Clone)]
pub struct QuadraticFormCheck {
    /// Coefficients of `w` in the adapted basis of `Λ ∩ ker dH`.
    pub w: Vector,
    pub reduced: f64,
    pub full: f64,
    pub correction: f64,
    /// `reduced − full`, both from frames; nonnegative in theory.
    pub gap: f64,
    /// `|reduced − full − correction|`.
    pub residual: f64,
}

/// Reduced curvature at `α` from the block identity, cross-checked against the
/// reduced canonical frame and the bracket form of the correction term.
pub fn reduced_curvature_via_formula<R: Rng>(
    sys: &dyn PhaseSystem,
    alpha: &PhasePoint,
    tol: f64,
    samples: usize,
    rng: &mut R,
) -> Result<(Mat, FormulaDiagnostics)> {
    let opts = FrameOptions::default();
    let h = 5e-3;
    let reach = 2.0 * h + opts.margin() + 1e-9;
    let red = ReducedCurve::new(sys, alpha, -reach - opts.margin(), reach + opts.margin(), tol)?;
    let n = red.full.dim();
    let m = n - 1;
    let full_frame = FrameEvaluator::new(&red.full, 0.0, 0.0, opts)?;
    let (_, f0, _, r_raw) = full_frame.raw_curvature(0.0)?;
    let r_full = sym(&r_raw);
    let adapted = AdaptedFamily::new(&red, -reach, reach, opts)?;
    let s0 = adapted.sample(0.0)?;
    if s0.c.abs() < TRANSVERSALITY_MIN {
        return Err(HamError::Hypothesis(format!("Hamiltonian field nearly tangent to Λ (c = {:e})", s0.c)));
    }
    let o = f0.transpose() * red.full.form() * &s0.e;
    let ra = o.transpose() * &r_full * &o;
    let ob = &s0.omega_bar;
    let formula = sym(&(ra.view((0, 0), (m, m)).into_owned() + ob * ob.transpose() * 0.75));

    let c_of = |t: f64| -> Result<Mat> { Ok(Mat::from_element(1, 1, adapted.sample(t)?.c)) };
    let c_dot = cd4_mat(c_of, 0.0, h)?[(0, 0)];
    let c_ddot = cd4_second_mat(c_of, 0.0, h)?[(0, 0)];
    let ob_dot = cd4_mat(|t| Ok(Mat::from_column_slice(m, 1, adapted.sample(t)?.omega_bar.as_slice())), 0.0, h)?;
    let c = s0.c;
    let off_pred = ob * (c_dot / c) + ob_dot.column(0) * 0.5;
    let off_actual = ra.view((0, m), (m, 1)).into_owned();
    let off_diagonal_mismatch = (Mat::from_column_slice(m, 1, off_pred.as_slice()) - off_actual).amax();
    let corner_pred = 0.25 * ob.norm_squared() - c_ddot / c;
    let corner_mismatch = (corner_pred - ra[(m, m)]).abs();

    let direct_frame = canonical_frame(&red, &[0.0], opts)?;
    let direct = direct_frame.curvature[0].clone();
    let mismatch = max_abs(&(&formula - &direct));

    // ⟨𝔑̃w,w⟩ against ⟨𝔑w,w⟩ + ¾ ω([X,[X,ξ]], w)²
    let xi2 = double_bracket_normal(sys, alpha.z.as_slice())?;
    let omega_a = &red.space.omega;
    let mut quadratic_forms = Vec::with_capacity(samples);
    for _ in 0..samples {
        let w = Vector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
        let wv = s0.e.view((0, 0), (2 * n, m)) * &w;
        let reduced = w.dot(&(&direct * &w));
        let full = w.dot(&(ra.view((0, 0), (m, m)) * &w));
        let correction = 0.75 * (xi2.transpose() * omega_a * wv)[(0, 0)].powi(2);
        quadratic_forms.push(QuadraticFormCheck {
            reduced,
            full,
            correction,
            gap: reduced - full,
            residual: (reduced - full - correction).abs(),
            w,
        });
    }
    Ok((
        formula,
        FormulaDiagnostics {
            adapted_curvature: ra,
            omega_bar: ob.clone(),
            c,
            c_dot,
            c_ddot,
            off_diagonal_mismatch,
            corner_mismatch,
            direct,
            mismatch,
            quadratic_forms,
        },
    ))
}

/// Unit normal field `ξ = [0; μ]` to `Λ ∩ ker dH` for the monotone form.
pub fn normal_field(sys: &dyn PhaseSystem, z: &[f64]) -> Result<Mat> {
    let n = sys.dof();
    let (g, _) = monotone_form(sys, z)?;
    let hp = sys.gradient(z).rows(n, n).into_owned();
    let u = inverse(&g)? * &hp;
    let mu = &u / hp.dot(&u).sqrt();
    let mut xi = Mat::zeros(2 * n, 1);
    xi.view_mut((n, 0), (n, 1)).copy_from(&mu);
    Ok(xi)
}

/// `[X, Y] = DY·X − DX·Y` for a vector field given pointwise.
fn bracket_with_field<F>(sys: &dyn PhaseSystem, z: &[f64], step: f64, field: F) -> Result<Mat>
where
    F: Fn(&[f64]) -> Result<Mat>,
{
    let y = field(z)?;
    let dy = lie_derivative(sys, z, step, &field)?;
    Ok(dy - vector_field_jacobian(sys, z)? * y)
}

/// `[X, [X, ξ]]` at `z` with `ξ` the pointwise unit normal field.
pub fn double_bracket_normal(sys: &dyn PhaseSystem, z: &[f64]) -> Result<Mat> {
    let inner = |w: &[f64]| bracket_with_field(sys, w, LIE_STEP, |u| normal_field(sys, u));
    bracket_with_field(sys, z, LIE_STEP_OUTER, inner)
}

/// Pointwise reduced data at `z`.
#[derive(Debug, Clone)]
pub struct LocalReduced {
    /// Reduced curvature in the basis given by the kernel columns.
    pub curvature: Mat,
    /// `Ω̃` of the kernel part of the adapted family.
    pub omega: Mat,
    pub omega_bar: Vector,
    /// Kernel basis of `H_p` at `z` used for the adapted frame.
    pub kernel: Mat,
    pub asymmetry: f64,
}

/// Adapted vertical frame `[0; K_a]` at `z`, with the kernel part obtained by
/// projecting `k_ref` onto `H_p^⊥` and normalizing for the monotone form.
fn adapted_vertical(sys: &dyn PhaseSystem, z: &[f64], k_ref: &Mat) -> Result<Mat> {
    let n = sys.dof();
    let m = n - 1;
    let (g, _) = monotone_form(sys, z)?;
    let hp = sys.gradient(z).rows(n, n).into_owned();
    let u = &hp / hp.norm();
    let k = k_ref - &u * (u.transpose() * k_ref);
    let gk = sym(&(k.transpose() * &g * &k));
    let (lk, _) = gram_normalizer(&gk, &Mat::zeros(m, m), 0.0)?;
    let ka = k * lk;
    let xi = normal_field(sys, z)?;
    let mut out = Mat::zeros(2 * n, n);
    out.view_mut((n, 0), (n, m)).copy_from(&ka);
    out.view_mut((0, m), (2 * n, 1)).copy_from(&xi);
    Ok(out)
}

/// Reduced curvature at `z` from the bracket curvature and `Ω̄` of the
/// pointwise adapted frame.
///
/// `k_ref` fixes the kernel basis; `None` picks the deterministic one at `z`.
pub fn local_reduced_curvature(sys: &dyn PhaseSystem, z: &[f64], k_ref: Option<&Mat>) -> Result<LocalReduced> {
    let n = sys.dof();
    if n < 2 {
        return Err(HamError::InvalidArgument("reduced curvature needs at least two degrees of freedom".into()));
    }
    let m = n - 1;
    regular_point(sys, z)?;
    let kernel = match k_ref {
        Some(k) => k.clone(),
        None => kernel_basis(&sys.gradient(z).rows(n, n).into_owned()),
    };
    let lf = LocalFrame::at(sys, z)?;
    let ea = adapted_vertical(sys, z, &kernel)?;
    let ead = bracket_with_field(sys, z, LIE_STEP, |w| adapted_vertical(sys, w, &kernel))?;
    let omega_a = antisym(&(ead.transpose() * &lf.omega * &ead));
    let omega_bar = Vector::from_fn(m, |i, _| omega_a[(m, i)]);
    let (r, asym) = bracket_curvature(sys, z)?;
    // ε_a = ε O with ε = [0; I] L
    let o = inverse(&lf.l)? * ea.view((n, 0), (n, n));
    let ra = o.transpose() * r * &o;
    let curvature = sym(&(ra.view((0, 0), (m, m)) + &omega_bar * omega_bar.transpose() * 0.75));
    let omega = omega_a.view((0, 0), (m, m)).into_owned();
    let kernel = ea.view((n, 0), (n, m)).into_owned();
    Ok(LocalReduced { curvature, omega, omega_bar, kernel, asymmetry: asym.max(asymmetry(&ra)) })
}

/// `𝓡̃(0)` at `α` read off the reduced canonical frame.
pub fn reduced_curvature_direct(sys: &dyn PhaseSystem, alpha: &PhasePoint, tol: f64) -> Result<Mat> {
    let opts = FrameOptions::default();
    let red = ReducedCurve::new(sys, alpha, -opts.margin() - 1e-6, opts.margin() + 1e-6, tol)?;
    Ok(canonical_frame(&red, &[0.0], opts)?.curvature[0].clone())
}
