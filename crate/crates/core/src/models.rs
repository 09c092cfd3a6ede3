//! Reference systems with analytic derivatives.
//!
//! All two-degree-of-freedom models are kinetic Hamiltonians
//! `H = ½ Σ a_i(x) p_i²` on a chart of `T*ℝ²`, optionally with a magnetic
//! twist. The default energy is `½`, i.e. unit speed on geodesic models.
//! The flat torus is integrated on its universal cover.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HamError, Result};
use crate::linalg::{Mat, Vector};
use crate::symplectic::{PhasePoint, PhaseSystem};

/// Energy level used by geodesic and magnetic models.
pub const UNIT_SPEED_ENERGY: f64 = 0.5;

/// Chart switch threshold on the sphere: `K|x|² > SPHERE_SWITCH`.
const SPHERE_SWITCH: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    FreeParticle,
    HarmonicOscillator { #[serde(default = "one")] omega: f64 },
    Pendulum { #[serde(default = "one")] g: f64 },
    FlatTorusGeodesic,
    SphereGeodesic { #[serde(default = "one")] k: f64 },
    HyperbolicPlaneGeodesic { #[serde(default = "minus_one")] k: f64 },
    PerturbedHyperbolic { #[serde(default = "default_eps")] eps: f64 },
    FlatMagnetic { #[serde(default = "one")] b: f64 },
    HyperbolicMagnetic { #[serde(default = "half")] b: f64 },
    CurvatureBump { #[serde(default = "default_beta")] beta: f64 },
}

fn one() -> f64 {
    1.0
}
fn minus_one() -> f64 {
    -1.0
}
fn half() -> f64 {
    0.5
}
fn default_eps() -> f64 {
    0.1
}
fn default_beta() -> f64 {
    2.0
}

pub const MODEL_NAMES: [&str; 10] = [
    "free_particle",
    "harmonic_oscillator",
    "pendulum",
    "flat_torus_geodesic",
    "sphere_geodesic",
    "hyperbolic_plane_geodesic",
    "perturbed_hyperbolic",
    "flat_magnetic",
    "hyperbolic_magnetic",
    "curvature_bump",
];

impl ModelSpec {
    /// Model with default parameters.
    pub fn by_name(name: &str) -> Result<Self> {
        Ok(match name {
            "free_particle" => ModelSpec::FreeParticle,
            "harmonic_oscillator" => ModelSpec::HarmonicOscillator { omega: 1.0 },
            "pendulum" => ModelSpec::Pendulum { g: 1.0 },
            "flat_torus_geodesic" => ModelSpec::FlatTorusGeodesic,
            "sphere_geodesic" => ModelSpec::SphereGeodesic { k: 1.0 },
            "hyperbolic_plane_geodesic" => ModelSpec::HyperbolicPlaneGeodesic { k: -1.0 },
            "perturbed_hyperbolic" => ModelSpec::PerturbedHyperbolic { eps: 0.1 },
            "flat_magnetic" => ModelSpec::FlatMagnetic { b: 1.0 },
            "hyperbolic_magnetic" => ModelSpec::HyperbolicMagnetic { b: 0.5 },
            "curvature_bump" => ModelSpec::CurvatureBump { beta: 2.0 },
            other => return Err(HamError::UnknownModel(other.to_string())),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::FreeParticle => "free_particle",
            ModelSpec::HarmonicOscillator { .. } => "harmonic_oscillator",
            ModelSpec::Pendulum { .. } => "pendulum",
            ModelSpec::FlatTorusGeodesic => "flat_torus_geodesic",
            ModelSpec::SphereGeodesic { .. } => "sphere_geodesic",
            ModelSpec::HyperbolicPlaneGeodesic { .. } => "hyperbolic_plane_geodesic",
            ModelSpec::PerturbedHyperbolic { .. } => "perturbed_hyperbolic",
            ModelSpec::FlatMagnetic { .. } => "flat_magnetic",
            ModelSpec::HyperbolicMagnetic { .. } => "hyperbolic_magnetic",
            ModelSpec::CurvatureBump { .. } => "curvature_bump",
        }
    }

    pub fn dof(&self) -> usize {
        match self {
            ModelSpec::FreeParticle | ModelSpec::HarmonicOscillator { .. } | ModelSpec::Pendulum { .. } => 1,
            _ => 2,
        }
    }

    /// Non-compact models only admit pointwise verdicts.
    pub fn is_compact(&self) -> bool {
        matches!(self, ModelSpec::FlatTorusGeodesic | ModelSpec::SphereGeodesic { .. })
    }

    pub fn build(&self) -> Result<Model> {
        let bad = |what: &str| Err(HamError::InvalidArgument(what.to_string()));
        match *self {
            ModelSpec::HarmonicOscillator { omega } if !(omega > 0.0) => return bad("omega must be positive"),
            ModelSpec::Pendulum { g } if !(g > 0.0) => return bad("g must be positive"),
            ModelSpec::SphereGeodesic { k } if !(k > 0.0) => return bad("sphere curvature must be positive"),
            ModelSpec::HyperbolicPlaneGeodesic { k } if !(k < 0.0) => return bad("hyperbolic curvature must be negative"),
            ModelSpec::PerturbedHyperbolic { eps } if !(eps.abs() <= 0.25) => return bad("|eps| must not exceed 0.25"),
            ModelSpec::FlatMagnetic { b } | ModelSpec::HyperbolicMagnetic { b } if !(b >= 0.0) => {
                return bad("magnetic field strength b must be non-negative")
            }
            ModelSpec::CurvatureBump { beta } if !(beta > 0.0) => return bad("bump strength must be positive"),
            _ => {}
        }
        let band = match *self {
            ModelSpec::CurvatureBump { beta } => Some(BandProfile::new(beta)),
            _ => None,
        };
        Ok(Model { spec: *self, band })
    }

    pub fn default_energy(&self) -> f64 {
        UNIT_SPEED_ENERGY
    }
}

/// Warping function of the band metric `dx² + G(x)² dy²`.
///
/// `G'' = β (1 − x²)⁶` on `|x| < 1`, `G ≡ 1` for `x ≤ −1`, affine for `x ≥ 1`.
#[derive(Debug, Clone, Copy)]
pub struct BandProfile {
    beta: f64,
    /// Coefficients of `(1 − s²)⁶` in powers of `s` (even powers only).
    p: [f64; 13],
    p1: [f64; 14],
    p2: [f64; 15],
}

impl BandProfile {
    pub fn new(beta: f64) -> Self {
        let binom = [1.0, 6.0, 15.0, 20.0, 15.0, 6.0, 1.0];
        let mut p = [0.0; 13];
        for (k, c) in binom.iter().enumerate() {
            p[2 * k] = if k % 2 == 0 { *c } else { -*c };
        }
        let mut p1 = [0.0; 14];
        for i in 0..13 {
            p1[i + 1] = p[i] / (i + 1) as f64;
        }
        let mut p2 = [0.0; 15];
        for i in 0..14 {
            p2[i + 1] = p1[i] / (i + 1) as f64;
        }
        Self { beta, p, p1, p2 }
    }

    fn poly(c: &[f64], x: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
    }

    /// `(G, G', G'')`.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        let xc = x.clamp(-1.0, 1.0);
        let q1m = Self::poly(&self.p1, -1.0);
        let q2m = Self::poly(&self.p2, -1.0);
        let g1 = self.beta * (Self::poly(&self.p1, xc) - q1m);
        let g0 = 1.0 + self.beta * (Self::poly(&self.p2, xc) - q2m - q1m * (xc + 1.0));
        let g2 = self.beta * Self::poly(&self.p, xc);
        if x <= -1.0 {
            (1.0, 0.0, 0.0)
        } else if x >= 1.0 {
            (g0 + g1 * (x - 1.0), g1, 0.0)
        } else {
            (g0, g1, g2)
        }
    }

    /// Gaussian curvature `−G''/G`.
    pub fn curvature(&self, x: f64) -> f64 {
        let (g, _, g2) = self.eval(x);
        -g2 / g
    }
}

/// A concrete reference system.
#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ModelSpec,
    band: Option<BandProfile>,
}

/// One metric coefficient with its gradient and Hessian in `x`.
struct Coef {
    a: f64,
    g: [f64; 2],
    h: [[f64; 2]; 2],
}

impl Coef {
    fn constant(a: f64) -> Self {
        Self { a, g: [0.0; 2], h: [[0.0; 2]; 2] }
    }

    /// From `log a = ℓ` with gradient `dℓ` and Hessian `hℓ`.
    fn from_log(a: f64, dl: [f64; 2], hl: [[f64; 2]; 2]) -> Self {
        let g = [a * dl[0], a * dl[1]];
        let mut h = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                h[i][j] = a * (dl[i] * dl[j] + hl[i][j]);
            }
        }
        Self { a, g, h }
    }
}

impl Model {
    pub fn from_name(name: &str) -> Result<Self> {
        ModelSpec::by_name(name)?.build()
    }

    pub fn band(&self) -> Option<&BandProfile> {
        self.band.as_ref()
    }

    /// Metric coefficients `a_1, a_2` of the kinetic term.
    fn coefs(&self, x: &[f64]) -> [Coef; 2] {
        match self.spec {
            ModelSpec::FlatTorusGeodesic | ModelSpec::FlatMagnetic { .. } => [Coef::constant(1.0), Coef::constant(1.0)],
            ModelSpec::SphereGeodesic { k } => {
                let r2 = x[0] * x[0] + x[1] * x[1];
                let s = 1.0 + k * r2;
                let a = 0.25 * s * s;
                let g = [s * k * x[0], s * k * x[1]];
                let mut h = [[0.0; 2]; 2];
                for i in 0..2 {
                    for j in 0..2 {
                        h[i][j] = 2.0 * k * k * x[i] * x[j] + if i == j { k * s } else { 0.0 };
                    }
                }
                let c = Coef { a, g, h };
                let c2 = Coef { a, g, h };
                [c, c2]
            }
            ModelSpec::HyperbolicPlaneGeodesic { .. } | ModelSpec::HyperbolicMagnetic { .. } => {
                let kk = match self.spec {
                    ModelSpec::HyperbolicPlaneGeodesic { k } => k.abs(),
                    _ => 1.0,
                };
                let y = x[1];
                let a = kk * y * y;
                let c = || Coef { a, g: [0.0, 2.0 * kk * y], h: [[0.0, 0.0], [0.0, 2.0 * kk]] };
                [c(), c()]
            }
            ModelSpec::PerturbedHyperbolic { eps } => {
                let (phi, dphi, hphi) = bump_phi(x[0], x[1]);
                let y = x[1];
                let a = (-2.0 * eps * phi).exp() * y * y;
                let dl = [-2.0 * eps * dphi[0], -2.0 * eps * dphi[1] + 2.0 / y];
                let mut hl = [[0.0; 2]; 2];
                for i in 0..2 {
                    for j in 0..2 {
                        hl[i][j] = -2.0 * eps * hphi[i][j];
                    }
                }
                hl[1][1] -= 2.0 / (y * y);
                let c = || Coef::from_log(a, dl, hl);
                [c(), c()]
            }
            ModelSpec::CurvatureBump { .. } => {
                let (g, g1, g2) = self.band.as_ref().expect("band profile").eval(x[0]);
                let a = 1.0 / (g * g);
                let da = -2.0 * g1 / (g * g * g);
                let dda = 6.0 * g1 * g1 / (g * g * g * g) - 2.0 * g2 / (g * g * g);
                [Coef::constant(1.0), Coef { a, g: [da, 0.0], h: [[dda, 0.0], [0.0, 0.0]] }]
            }
            _ => [Coef::constant(1.0), Coef::constant(1.0)],
        }
    }

    /// Potential `V(x)` with `V'` and `V''` for the one-degree models.
    fn potential(&self, x: f64) -> (f64, f64, f64) {
        match self.spec {
            ModelSpec::HarmonicOscillator { omega } => (0.5 * omega * omega * x * x, omega * omega * x, omega * omega),
            ModelSpec::Pendulum { g } => (g * (1.0 - x.cos()), g * x.sin(), g * x.cos()),
            _ => (0.0, 0.0, 0.0),
        }
    }

    fn magnetic(&self, x: &[f64]) -> Option<(f64, [f64; 2])> {
        match self.spec {
            ModelSpec::FlatMagnetic { b } => Some((b, [0.0, 0.0])),
            ModelSpec::HyperbolicMagnetic { b } => {
                let y = x[1];
                Some((b / (y * y), [0.0, -2.0 * b / (y * y * y)]))
            }
            _ => None,
        }
    }

    /// Closed-form reduced curvature at unit speed where available.
    pub fn reduced_curvature_oracle(&self, z: &[f64]) -> Option<f64> {
        let speed2 = 2.0 * self.hamiltonian(z);
        match self.spec {
            ModelSpec::FlatTorusGeodesic => Some(0.0),
            ModelSpec::SphereGeodesic { k } => Some(k * speed2),
            ModelSpec::HyperbolicPlaneGeodesic { k } => Some(k * speed2),
            ModelSpec::PerturbedHyperbolic { eps } => Some(perturbed_curvature(eps, z[0], z[1]) * speed2),
            ModelSpec::CurvatureBump { .. } => Some(self.band.as_ref()?.curvature(z[0]) * speed2),
            ModelSpec::FlatMagnetic { b } => Some(b * b),
            ModelSpec::HyperbolicMagnetic { b } => Some(-speed2 + b * b),
            _ => None,
        }
    }

    /// Closed-form full curvature for `H = p²/2 + V(x)`: `V''(x)`.
    pub fn full_curvature_oracle(&self, z: &[f64]) -> Option<f64> {
        match self.spec {
            ModelSpec::FreeParticle | ModelSpec::HarmonicOscillator { .. } | ModelSpec::Pendulum { .. } => {
                Some(self.potential(z[0]).2)
            }
            _ => None,
        }
    }

    /// Point on `{H = c}` over `x` with momentum along `dir`.
    pub fn point_on_level(&self, x: &[f64], dir: &[f64], c: f64) -> Result<Vector> {
        level_point(self, x, dir, c)
    }

    /// The flat torus box is a fundamental domain; every other box cuts
    /// orbits, so Liouville measure restricted to it is not invariant.
    pub fn sampling_box_is_invariant(&self) -> bool {
        matches!(self.spec, ModelSpec::FlatTorusGeodesic)
    }

    /// Coordinate box of base points used by the samplers, in chart 0.
    pub fn sampling_box(&self) -> Vec<(f64, f64)> {
        match self.spec {
            ModelSpec::FreeParticle | ModelSpec::HarmonicOscillator { .. } | ModelSpec::Pendulum { .. } => vec![(-1.5, 1.5)],
            ModelSpec::SphereGeodesic { k } => vec![(-1.0 / k.sqrt(), 1.0 / k.sqrt()); 2],
            ModelSpec::FlatTorusGeodesic => vec![(0.0, 1.0); 2],
            ModelSpec::CurvatureBump { .. } => vec![(-2.0, 2.0), (0.0, 1.0)],
            ModelSpec::FlatMagnetic { .. } => vec![(-1.0, 1.0); 2],
            _ => vec![(-1.0, 1.0), (0.5, 2.0)],
        }
    }

    /// Random state on the default energy level inside the model's box.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<PhasePoint> {
        let c = self.spec.default_energy();
        let angle = rng.gen_range(0.0..2.0 * PI);
        let dir = [angle.cos(), angle.sin()];
        match self.spec {
            ModelSpec::FreeParticle => Ok(PhasePoint::new(&[rng.gen_range(-1.0..1.0), rng.gen_range(-2.0..2.0)])),
            ModelSpec::HarmonicOscillator { .. } => {
                Ok(PhasePoint::new(&[rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)]))
            }
            ModelSpec::Pendulum { g } => {
                // libration below the separatrix
                let x: f64 = rng.gen_range(-1.5..1.5);
                let vmax = (2.0 * g * (1.0 + x.cos()) * 0.9).sqrt();
                Ok(PhasePoint::new(&[x, rng.gen_range(-vmax..vmax)]))
            }
            ModelSpec::SphereGeodesic { k } => {
                // uniform on the sphere, projected to the nearer chart
                let zc: f64 = rng.gen_range(-1.0..1.0);
                let phi = rng.gen_range(0.0..2.0 * PI);
                let rr = (1.0 - zc * zc).sqrt();
                let (sx, sy) = (rr * phi.cos(), rr * phi.sin());
                let scale = 1.0 / (k.sqrt() * (1.0 + zc.abs()));
                let x = [sx * scale, sy * scale];
                let z = self.point_on_level(&x, &dir, c)?;
                Ok(PhasePoint::in_chart(if zc >= 0.0 { 0 } else { 1 }, z.as_slice()))
            }
            _ => {
                let x = match self.spec {
                    ModelSpec::FlatTorusGeodesic => [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)],
                    ModelSpec::CurvatureBump { .. } => [rng.gen_range(-2.0..2.0), rng.gen_range(0.0..1.0)],
                    ModelSpec::FlatMagnetic { .. } => [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                    _ => [rng.gen_range(-1.0..1.0), rng.gen_range(0.5..2.0)],
                };
                Ok(PhasePoint::new(self.point_on_level(&x, &dir, c)?.as_slice()))
            }
        }
    }

    /// A fixed, generic starting state used by examples and tests.
    pub fn reference_point(&self) -> PhasePoint {
        let c = self.spec.default_energy();
        let level = |x: [f64; 2], d: [f64; 2]| PhasePoint::new(self.point_on_level(&x, &d, c).unwrap().as_slice());
        match self.spec {
            ModelSpec::FreeParticle => PhasePoint::new(&[0.0, 1.0]),
            ModelSpec::HarmonicOscillator { .. } => PhasePoint::new(&[1.0, 0.0]),
            ModelSpec::Pendulum { .. } => PhasePoint::new(&[0.5, 0.3]),
            ModelSpec::FlatTorusGeodesic => level([0.2, 0.3], [0.8, 0.6]),
            ModelSpec::SphereGeodesic { .. } => level([0.3, -0.2], [0.6, 0.8]),
            ModelSpec::HyperbolicPlaneGeodesic { .. } => level([0.1, 1.0], [0.6, 0.8]),
            ModelSpec::PerturbedHyperbolic { .. } => level([0.2, 1.1], [0.8, 0.6]),
            ModelSpec::FlatMagnetic { .. } => level([0.0, 0.0], [1.0, 0.0]),
            ModelSpec::HyperbolicMagnetic { .. } => level([0.0, 1.0], [1.0, 0.0]),
            ModelSpec::CurvatureBump { .. } => level([-2.0, 0.0], [1.0, 0.3]),
        }
    }
}

/// Point on `{H = c}` over `x` with momentum `ρ·dir/|dir|`, `ρ > 0`, for
/// systems whose energy grows along momentum rays.
pub fn level_point(sys: &dyn PhaseSystem, x: &[f64], dir: &[f64], c: f64) -> Result<Vector> {
    let n = sys.dof();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(HamError::InvalidArgument("zero momentum direction".into()));
    }
    let u: Vec<f64> = dir.iter().map(|v| v / norm).collect();
    let h_at = |rho: f64| {
        let mut z = x.to_vec();
        z.extend(u.iter().map(|v| rho * v));
        sys.hamiltonian(&z)
    };
    let h0 = h_at(0.0);
    if h0 > c {
        return Err(HamError::InvalidArgument(format!("potential {h0} exceeds the energy {c}")));
    }
    let mut hi = 1.0;
    while h_at(hi) < c {
        hi *= 2.0;
        if hi > 1e150 {
            return Err(HamError::InvalidArgument("energy level not reached along the ray".into()));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h_at(mid) < c {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let rho = 0.5 * (lo + hi);
    let mut z = x.to_vec();
    z.extend(u.iter().map(|v| rho * v));
    debug_assert_eq!(z.len(), 2 * n);
    Ok(Vector::from_vec(z))
}

/// `φ = exp(1 − cosh d)` with `d` the hyperbolic distance to `(0, 1)`,
/// returned with its gradient and Hessian.
fn bump_phi(x: f64, y: f64) -> (f64, [f64; 2], [[f64; 2]; 2]) {
    // s = cosh d − 1 = (x² + (y − 1)²) / (2y)
    let s = (x * x + 1.0) / (2.0 * y) + 0.5 * y - 1.0;
    let ds = [x / y, -(x * x + 1.0) / (2.0 * y * y) + 0.5];
    let hs = [[1.0 / y, -x / (y * y)], [-x / (y * y), (x * x + 1.0) / (y * y * y)]];
    let phi = (-s).exp();
    let dphi = [-ds[0] * phi, -ds[1] * phi];
    let mut h = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            h[i][j] = (ds[i] * ds[j] - hs[i][j]) * phi;
        }
    }
    (phi, dphi, h)
}

/// Gaussian curvature of `e^{2εφ} (dx² + dy²) / y²`.
pub fn perturbed_curvature(eps: f64, x: f64, y: f64) -> f64 {
    let (phi, _, h) = bump_phi(x, y);
    let lap = y * y * (h[0][0] + h[1][1]);
    (-2.0 * eps * phi).exp() * (-1.0 - eps * lap)
}

impl PhaseSystem for Model {
    fn name(&self) -> &str {
        self.spec.name()
    }

    fn dof(&self) -> usize {
        self.spec.dof()
    }

    fn hamiltonian(&self, z: &[f64]) -> f64 {
        if self.dof() == 1 {
            return 0.5 * z[1] * z[1] + self.potential(z[0]).0;
        }
        let c = self.coefs(&z[..2]);
        0.5 * (c[0].a * z[2] * z[2] + c[1].a * z[3] * z[3])
    }

    fn gradient(&self, z: &[f64]) -> Vector {
        if self.dof() == 1 {
            return Vector::from_vec(vec![self.potential(z[0]).1, z[1]]);
        }
        let c = self.coefs(&z[..2]);
        let p = [z[2], z[3]];
        let mut g = Vector::zeros(4);
        for i in 0..2 {
            g[i] = 0.5 * (c[0].g[i] * p[0] * p[0] + c[1].g[i] * p[1] * p[1]);
            g[2 + i] = c[i].a * p[i];
        }
        g
    }

    fn hessian(&self, z: &[f64]) -> Mat {
        if self.dof() == 1 {
            return Mat::from_row_slice(2, 2, &[self.potential(z[0]).2, 0.0, 0.0, 1.0]);
        }
        let c = self.coefs(&z[..2]);
        let p = [z[2], z[3]];
        let mut h = Mat::zeros(4, 4);
        for i in 0..2 {
            for j in 0..2 {
                h[(i, j)] = 0.5 * (c[0].h[i][j] * p[0] * p[0] + c[1].h[i][j] * p[1] * p[1]);
                // ∂²H/∂x_i∂p_j = ∂_i a_j p_j
                h[(i, 2 + j)] = c[j].g[i] * p[j];
                h[(2 + j, i)] = h[(i, 2 + j)];
            }
            h[(2 + i, 2 + i)] = c[i].a;
        }
        h
    }

    fn twist(&self, x: &[f64]) -> Option<Mat> {
        self.magnetic(x).map(|(b, _)| Mat::from_row_slice(2, 2, &[0.0, b, -b, 0.0]))
    }

    fn twist_derivative(&self, x: &[f64], k: usize) -> Mat {
        match self.magnetic(x) {
            Some((_, db)) => Mat::from_row_slice(2, 2, &[0.0, db[k], -db[k], 0.0]),
            None => Mat::zeros(self.dof(), self.dof()),
        }
    }

    fn in_domain(&self, z: &[f64]) -> bool {
        if !z.iter().all(|v| v.is_finite()) {
            return false;
        }
        match self.spec {
            ModelSpec::HyperbolicPlaneGeodesic { .. }
            | ModelSpec::PerturbedHyperbolic { .. }
            | ModelSpec::HyperbolicMagnetic { .. } => z[1] > 0.0,
            _ => true,
        }
    }

    fn preferred_chart(&self, chart: usize, z: &[f64]) -> usize {
        match self.spec {
            ModelSpec::SphereGeodesic { k } if k * (z[0] * z[0] + z[1] * z[1]) > SPHERE_SWITCH => 1 - chart,
            _ => chart,
        }
    }

    fn chart_map(&self, from: usize, to: usize, z: &[f64]) -> Result<(Vector, Mat)> {
        if from == to {
            return Ok((Vector::from_column_slice(z), Mat::identity(z.len(), z.len())));
        }
        let k = match self.spec {
            ModelSpec::SphereGeodesic { k } => k,
            _ => return Err(HamError::OutOfDomain(format!("{} has a single chart", self.name()))),
        };
        sphere_inversion(k, z)
    }
}

/// Cotangent lift of the inversion `x ↦ x / (K|x|²)` between the two
/// stereographic charts.
fn sphere_inversion(k: f64, z: &[f64]) -> Result<(Vector, Mat)> {
    let x = [z[0], z[1]];
    let p = [z[2], z[3]];
    let r2 = x[0] * x[0] + x[1] * x[1];
    if r2 < 1e-300 {
        return Err(HamError::OutOfDomain("chart switch at the pole".into()));
    }
    let xp = x[0] * p[0] + x[1] * p[1];
    let mut out = Vector::zeros(4);
    let mut jac = Mat::zeros(4, 4);
    for i in 0..2 {
        out[i] = x[i] / (k * r2);
        out[2 + i] = k * (r2 * p[i] - 2.0 * xp * x[i]);
        for j in 0..2 {
            let d = if i == j { 1.0 } else { 0.0 };
            jac[(i, j)] = (d - 2.0 * x[i] * x[j] / r2) / (k * r2);
            jac[(2 + i, j)] = k * (2.0 * p[i] * x[j] - 2.0 * x[i] * p[j] - 2.0 * xp * d);
            jac[(2 + i, 2 + j)] = k * (r2 * d - 2.0 * x[i] * x[j]);
        }
    }
    Ok((out, jac))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symplectic::fd_jacobian;

    fn check_derivatives(m: &Model, z: &[f64]) {
        let g = m.gradient(z);
        let gfd = crate::symplectic::fd_gradient(|w| m.hamiltonian(w), z);
        assert!((&g - &gfd).amax() < 1e-8 * (1.0 + g.amax()), "{}: gradient {g} vs {gfd}", m.name());
        let h = m.hessian(z);
        let hfd = fd_jacobian(|w| m.gradient(w), z);
        assert!((&h - &hfd).amax() < 1e-6 * (1.0 + h.amax()), "{}: hessian {h} vs {hfd}", m.name());
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        for name in MODEL_NAMES {
            let m = Model::from_name(name).unwrap();
            let z = m.reference_point();
            check_derivatives(&m, z.z.as_slice());
        }
        let band = Model::from_name("curvature_bump").unwrap();
        check_derivatives(&band, &[0.3, 0.2, 0.5, 0.7]);
        check_derivatives(&band, &[1.7, 0.2, 0.5, 0.7]);
    }

    #[test]
    fn band_profile_is_c1_and_flat_outside() {
        let b = BandProfile::new(2.0);
        let (g, g1, g2) = b.eval(-1.0);
        assert!((g - 1.0).abs() < 1e-14 && g1.abs() < 1e-14 && g2.abs() < 1e-14);
        let (ga, g1a, _) = b.eval(1.0 - 1e-9);
        let (gb, g1b, _) = b.eval(1.0 + 1e-9);
        assert!((ga - gb).abs() < 1e-8 && (g1a - g1b).abs() < 1e-8);
        assert!(b.curvature(0.0) < 0.0 && b.curvature(3.0) == 0.0 && b.curvature(-3.0) == 0.0);
    }

    #[test]
    fn sphere_inversion_is_symplectic_involution() {
        let m = Model::from_name("sphere_geodesic").unwrap();
        let z = [1.7, -0.9, 0.3, 0.4];
        let (w, jac) = m.chart_map(0, 1, &z).unwrap();
        let (back, _) = m.chart_map(1, 0, w.as_slice()).unwrap();
        assert!((back - Vector::from_column_slice(&z)).amax() < 1e-13);
        assert!((m.hamiltonian(&z) - m.hamiltonian(w.as_slice())).abs() < 1e-13);
        let om = crate::symplectic::symplectic_matrix(&m, &z);
        assert!((jac.transpose() * &om * &jac - om).amax() < 1e-12);
    }

    #[test]
    fn negative_field_and_unknown_name_rejected() {
        assert!(ModelSpec::FlatMagnetic { b: -1.0 }.build().is_err());
        assert!(matches!(Model::from_name("klein_bottle"), Err(HamError::UnknownModel(_))));
    }
}
