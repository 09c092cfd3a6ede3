//! Shared generators for integration tests.
#![allow(dead_code)]

use hamlab_core::linalg::{sym, Mat, Vector};
use hamlab_core::symplectic::{PhasePoint, PhaseSystem};
use hamlab_core::riccati::RiccatiProblem;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_sym<R: Rng>(rng: &mut R, m: usize, scale: f64) -> Mat {
    let a = Mat::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
    sym(&a) * scale
}

pub fn random_psd<R: Rng>(rng: &mut R, m: usize, scale: f64) -> Mat {
    let a = Mat::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
    &a * a.transpose() * scale
}

/// `𝓡(t) = C₀ + C₁ sin(ωt)`.
pub fn oscillating(c0: Mat, c1: Mat, w: f64) -> RiccatiProblem<'static> {
    let m = c0.nrows();
    RiccatiProblem::from_fn(m, move |t| Ok(&c0 + &c1 * (w * t).sin()))
}

/// `𝓡(t) = −P₀ − P₁ (1 + sin ωt) / 2 ⪯ 0`.
fn nonpositive(p0: Mat, p1: Mat, w: f64) -> RiccatiProblem<'static> {
    let m = p0.nrows();
    RiccatiProblem::from_fn(m, move |t| Ok(-(&p0 + &p1 * (0.5 * (1.0 + (w * t).sin())))))
}

/// A comparison pair `(p₁, p₂, S₁(0), S₂(0))` with `S₂(0) ⪰ S₁(0)`, of size
/// `m ≤ 4`. Forward pairs have `𝓡₁ ⪰ 𝓡₂`, backward pairs `𝓡₂ ⪰ 𝓡₁`.
/// Nonpositive curvature with data of the right sign keeps both solutions
/// finite on the side being checked.
pub fn comparison_pair(seed: u64, forward: bool) -> (RiccatiProblem<'static>, RiccatiProblem<'static>, Mat, Mat) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.gen_range(1..=4);
    let p0 = random_psd(&mut rng, m, 0.5);
    let p1 = random_psd(&mut rng, m, 0.3);
    let q = random_psd(&mut rng, m, 0.4);
    let w = rng.gen_range(0.5..2.0);
    let upper = nonpositive(p0.clone(), p1.clone(), w);
    let lower = nonpositive(&p0 + &q, p1, w);
    let a = random_psd(&mut rng, m, 0.5);
    let b = random_psd(&mut rng, m, 0.3);
    if forward {
        (upper, lower, a.clone(), &a + b)
    } else {
        (lower, upper, -(&a + b), -a)
    }
}

/// `H = ½|p|² + ½ Σ kᵢ xᵢ²` in ℝ³ with a constant magnetic term.
pub struct Anisotropic3 {
    pub k: [f64; 3],
    pub b: f64,
}

impl PhaseSystem for Anisotropic3 {
    fn name(&self) -> &str {
        "anisotropic3"
    }
    fn dof(&self) -> usize {
        3
    }
    fn hamiltonian(&self, z: &[f64]) -> f64 {
        (0..3).map(|i| 0.5 * z[3 + i] * z[3 + i] + 0.5 * self.k[i] * z[i] * z[i]).sum()
    }
    fn gradient(&self, z: &[f64]) -> Vector {
        Vector::from_fn(6, |i, _| if i < 3 { self.k[i] * z[i] } else { z[i] })
    }
    fn hessian(&self, _z: &[f64]) -> Mat {
        Mat::from_fn(6, 6, |i, j| match (i == j, i < 3) {
            (true, true) => self.k[i],
            (true, false) => 1.0,
            _ => 0.0,
        })
    }
    fn twist(&self, _x: &[f64]) -> Option<Mat> {
        let b = self.b;
        Some(Mat::from_row_slice(3, 3, &[0.0, b, 0.0, -b, 0.0, 0.5 * b, 0.0, -0.5 * b, 0.0]))
    }
}

pub fn anisotropic() -> Anisotropic3 {
    Anisotropic3 { k: [0.5, -0.3, 1.2], b: 0.7 }
}

pub fn anisotropic_point() -> PhasePoint {
    PhasePoint::new(&[0.3, -0.2, 0.1, 0.6, 0.5, -0.4])
}
