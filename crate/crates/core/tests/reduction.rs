mod common;

use common::{anisotropic, anisotropic_point};
use hamlab_core::jacobi::{FrameOptions, Gauge, LagrangianCurve};
use hamlab_core::linalg::{max_abs, sym_eigen, Mat};
use hamlab_core::models::{Model, MODEL_NAMES};
use hamlab_core::reduction::*;
use hamlab_core::symplectic::{uniform_grid, PhasePoint, PhaseSystem};
use hamlab_core::HamError;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-12;

fn model(name: &str) -> Model {
    Model::from_name(name).unwrap()
}

fn two_dof() -> impl Iterator<Item = Model> {
    MODEL_NAMES.iter().map(|n| model(n)).filter(|m| m.dof() == 2)
}

#[test]
fn one_degree_of_freedom_reduces_to_a_point() {
    let m = model("pendulum");
    assert!(reduce_space(&m, &m.reference_point()).unwrap().is_trivial());
}

#[test]
fn critical_point_is_rejected() {
    let sys = anisotropic();
    let err = reduce_space(&sys, &PhasePoint::new(&[0.0; 6])).unwrap_err();
    assert!(matches!(err, HamError::CriticalPoint(_)), "{err}");
}

#[test]
fn lift_and_project_are_inverse_modulo_the_field() {
    for m in two_dof() {
        let a = m.reference_point();
        let s = reduce_space(&m, &a).unwrap().space().unwrap();
        assert_eq!(s.dim(), 2);
        assert!(s.orthogonality_residual() < 1e-12);
        let y = Mat::from_column_slice(2, 1, &[0.4, -1.3]);
        assert!(max_abs(&(s.project(&s.lift(&y)) - &y)) < 1e-14, "{}", m.name());
        // w ∈ ker dH: lift(project(w)) − w ∈ ℝX
        let mut w = Mat::from_column_slice(4, 1, &[0.2, 1.0, -0.5, 0.3]);
        let g = &s.gradient;
        w -= Mat::from_column_slice(4, 1, (g * (g.dot(&w.column(0)) / g.norm_squared())).as_slice());
        let d = s.lift(&s.project(&w)) - &w;
        let x = &s.field;
        let along = x * (x.dot(&d.column(0)) / x.norm_squared());
        assert!((d.column(0) - along).norm() < 1e-12, "{}", m.name());
        // the reduced form is nondegenerate
        assert!(s.reduced_omega.determinant().abs() > 1e-6, "{}", m.name());
    }
}

#[test]
fn reduced_curvature_matches_oracles() {
    for m in two_dof() {
        {
            let z = m.reference_point();
            let oracle = m.reduced_curvature_oracle(z.z.as_slice()).unwrap();
            let k = reduced_curvature_direct(&m, &z, TOL).unwrap();
            assert!((k[(0, 0)] - oracle).abs() < 1e-6, "{}: {} vs {oracle}", m.name(), k[(0, 0)]);
        }
    }
}

#[test]
fn reduced_curvature_inside_the_bump() {
    let m = model("curvature_bump");
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5 {
        let z = m.sample_point(&mut rng).unwrap();
        let x = z.z[0];
        let z = m.point_on_level(&[x.clamp(-0.9, 0.9) * 0.5, z.z[1]], &[0.6, 0.8], 0.5).unwrap();
        let z = PhasePoint::new(z.as_slice());
        let oracle = m.reduced_curvature_oracle(z.z.as_slice()).unwrap();
        assert!(oracle < -1e-3);
        let k = reduced_curvature_direct(&m, &z, TOL).unwrap()[(0, 0)];
        assert!((k - oracle).abs() < 1e-6, "{k} vs {oracle}");
    }
}

#[test]
fn formula_agrees_with_direct_route() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for m in two_dof() {
        let a = m.reference_point();
        let (formula, d) = reduced_curvature_via_formula(&m, &a, TOL, 8, &mut rng).unwrap();
        assert!(d.mismatch < 1e-5, "{}: {:e}", m.name(), d.mismatch);
        assert!(max_abs(&(&formula - &d.direct)) < 1e-5);
        assert!(d.off_diagonal_mismatch < 1e-6, "{}: {:e}", m.name(), d.off_diagonal_mismatch);
        assert!(d.corner_mismatch < 1e-6, "{}: {:e}", m.name(), d.corner_mismatch);
        for q in &d.quadratic_forms {
            assert!(q.gap >= -1e-9, "{}: {:e}", m.name(), q.gap);
            assert!(q.residual < 1e-6 * (1.0 + q.correction), "{}: {:e}", m.name(), q.residual);
        }
    }
}

#[test]
fn magnetic_correction_is_visible() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let m = model("flat_magnetic");
    let (_, d) = reduced_curvature_via_formula(&m, &m.reference_point(), TOL, 4, &mut rng).unwrap();
    // b = 1: full curvature b²/4 on the kernel, |Ω̄| = b, reduced b²
    assert!((d.adapted_curvature[(0, 0)] - 0.25).abs() < 1e-8);
    assert!((d.omega_bar.norm() - 1.0).abs() < 1e-6);
}

#[test]
fn local_engine_agrees_with_direct_route() {
    for m in two_dof() {
        let a = m.reference_point();
        let direct = reduced_curvature_direct(&m, &a, TOL).unwrap();
        let local = local_reduced_curvature(&m, a.z.as_slice(), None).unwrap();
        assert!(max_abs(&(&local.curvature - &direct)) < 1e-6, "{}", m.name());
    }
}

#[test]
fn reduced_frame_darboux_and_transport() {
    let grid = uniform_grid(-2.0, 5.0, 29);
    for m in two_dof() {
        let a = m.reference_point();
        let fr = reduced_jacobi_frame(&m, &a, &grid, TOL, FrameOptions::default()).unwrap();
        assert!(fr.darboux_residual < 1e-8, "{}: {:e}", m.name(), fr.darboux_residual);
        assert!(fr.asymmetry < 1e-7);
        assert!(fr.c.iter().all(|c| c.abs() > TRANSVERSALITY_MIN));
    }
}

#[test]
fn reduced_curvature_is_equivariant() {
    // 𝓡̃_α(t) equals 𝓡̃ at φ_t(α)
    for m in two_dof() {
        let a = m.reference_point();
        let times = [-1.0, 0.5, 2.0, 4.0];
        let fr = reduced_jacobi_frame(&m, &a, &times, TOL, FrameOptions::default()).unwrap();
        let curve = ReducedCurve::new(&m, &a, -1.01, 4.01, TOL).unwrap();
        for (i, &t) in times.iter().enumerate() {
            let z = curve.full.traj.state(t).unwrap();
            let at = reduced_curvature_direct(&m, &z, TOL).unwrap();
            let diff = (fr.reduced_curvature[i][(0, 0)] - at[(0, 0)]).abs();
            assert!(diff < 1e-6, "{} t = {t}: {diff:e}", m.name());
        }
    }
}

#[test]
fn kernel_transport_stays_in_the_kernel() {
    let m = model("hyperbolic_plane_geodesic");
    let curve = ReducedCurve::new(&m, &m.reference_point(), -3.0, 6.0, TOL).unwrap();
    for t in uniform_grid(-3.0, 6.0, 19) {
        assert!(curve.kernel_residual(t).unwrap() < 1e-9, "t = {t}");
        let (k, _) = curve.kernel(t).unwrap();
        assert!((k.norm() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn three_degrees_of_freedom_routes_agree() {
    let sys = anisotropic();
    let a = anisotropic_point();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (formula, d) = reduced_curvature_via_formula(&sys, &a, TOL, 8, &mut rng).unwrap();
    assert_eq!(formula.shape(), (2, 2));
    assert!(d.mismatch < 1e-5, "{:e}", d.mismatch);
    assert!(d.off_diagonal_mismatch < 1e-6, "{:e}", d.off_diagonal_mismatch);
    assert!(d.corner_mismatch < 1e-6, "{:e}", d.corner_mismatch);
    assert!(d.omega_bar.norm() > 1e-3);
    for q in &d.quadratic_forms {
        assert!(q.gap >= -1e-9, "{:e}", q.gap);
        assert!(q.residual < 1e-6, "{:e}", q.residual);
    }
    // the local engine works in its own kernel basis: compare spectra
    let local = local_reduced_curvature(&sys, a.z.as_slice(), None).unwrap();
    let (ev_l, _) = sym_eigen(&local.curvature);
    let (ev_d, _) = sym_eigen(&d.direct);
    for (l, r) in ev_l.iter().zip(&ev_d) {
        assert!((l - r).abs() < 1e-6, "{l} vs {r}");
    }
}

#[test]
fn three_degrees_of_freedom_frame() {
    let sys = anisotropic();
    let a = anisotropic_point();
    let grid = uniform_grid(-1.0, 3.0, 9);
    for gauge in [Gauge::Cholesky, Gauge::Twisted { seed: 4 }] {
        let opts = FrameOptions { gauge, ..FrameOptions::default() };
        let fr = reduced_jacobi_frame(&sys, &a, &grid, TOL, opts).unwrap();
        assert!(fr.darboux_residual < 1e-8, "{:e}", fr.darboux_residual);
        assert!(fr.asymmetry < 1e-7, "{:e}", fr.asymmetry);
        if let Gauge::Cholesky = gauge {
            continue;
        }
        let base = reduced_jacobi_frame(&sys, &a, &grid, TOL, FrameOptions::default()).unwrap();
        for (r1, r2) in fr.reduced_curvature.iter().zip(&base.reduced_curvature) {
            let (e1, _) = sym_eigen(r1);
            let (e2, _) = sym_eigen(r2);
            for (x, y) in e1.iter().zip(&e2) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }
    let curve = ReducedCurve::new(&sys, &a, -1.0, 3.0, TOL).unwrap();
    assert_eq!(curve.dim(), 2);
    assert!(curve.kernel_residual(3.0).unwrap() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn reduced_gap_is_nonnegative(seed in 0u64..1000, idx in 0usize..6) {
        let models: Vec<Model> = two_dof().collect();
        let m = &models[idx % models.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = m.sample_point(&mut rng).unwrap();
        let (_, d) = reduced_curvature_via_formula(m, &z, TOL, 4, &mut rng).unwrap();
        prop_assert!(d.mismatch < 1e-5);
        for q in &d.quadratic_forms {
            prop_assert!(q.gap >= -1e-9, "{}: {:e}", m.name(), q.gap);
        }
    }
}
