use std::f64::consts::PI;

use hamlab_core::jacobi::*;
use hamlab_core::linalg::{max_abs, principal_angles, Mat};
use hamlab_core::models::{Model, MODEL_NAMES};
use hamlab_core::symplectic::{symplectic_matrix, uniform_grid, PhasePoint, PhaseSystem};
use hamlab_core::HamError;
use proptest::prelude::*;
use rand::SeedableRng;

const TOL: f64 = 1e-12;

fn model(name: &str) -> Model {
    Model::from_name(name).unwrap()
}

/// `H = x²/2 + p³/3`: the monotone form `2p` degenerates at `p = 0`.
struct CubicKinetic;

impl PhaseSystem for CubicKinetic {
    fn name(&self) -> &str {
        "cubic_kinetic"
    }
    fn dof(&self) -> usize {
        1
    }
    fn hamiltonian(&self, z: &[f64]) -> f64 {
        0.5 * z[0] * z[0] + z[1].powi(3) / 3.0
    }
    fn hessian(&self, z: &[f64]) -> Mat {
        Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0 * z[1]])
    }
}

/// `H = −p²/2 + x²/2`: regular but not monotone.
struct NegativeKinetic;

impl PhaseSystem for NegativeKinetic {
    fn name(&self) -> &str {
        "negative_kinetic"
    }
    fn dof(&self) -> usize {
        1
    }
    fn hamiltonian(&self, z: &[f64]) -> f64 {
        0.5 * z[0] * z[0] - 0.5 * z[1] * z[1]
    }
}

fn same_line(v: &Mat, w: &[f64]) -> f64 {
    let w = Mat::from_column_slice(w.len(), 1, w);
    principal_angles(v, &w)[0]
}

#[test]
fn curve_at_zero_is_the_vertical() {
    let m = model("sphere_geodesic");
    let s = jacobi_curve(&m, &m.reference_point(), &[0.0], TOL).unwrap();
    let v = &s.frames[0];
    assert_eq!(v.view((0, 0), (2, 2)).into_owned(), Mat::zeros(2, 2));
    assert_eq!(v.view((2, 0), (2, 2)).into_owned(), Mat::identity(2, 2));
}

#[test]
fn free_particle_curve_is_shear() {
    let m = model("free_particle");
    let times = [0.0, 0.5, 2.0, -1.5];
    let s = jacobi_curve(&m, &PhasePoint::new(&[0.3, 1.0]), &times, TOL).unwrap();
    for (t, v) in times.iter().zip(&s.frames) {
        assert!(same_line(v, &[-t, 1.0]) < 1e-12, "t = {t}");
    }
    assert!(s.monotone && s.isotropy_residual < 1e-12);
}

#[test]
fn harmonic_oscillator_curve_and_frame() {
    let m = model("harmonic_oscillator");
    let alpha = PhasePoint::new(&[1.0, 0.0]);
    let times = uniform_grid(0.0, 2.0 * PI, 13);
    let s = jacobi_curve(&m, &alpha, &times, TOL).unwrap();
    for (t, v) in times.iter().zip(&s.frames) {
        assert!(same_line(v, &[-t.sin(), t.cos()]) < 1e-11, "t = {t}");
    }
    let fr = jacobi_frame(&m, &alpha, &times, TOL, FrameOptions::default()).unwrap();
    for (i, t) in times.iter().enumerate() {
        let (e, f) = (&fr.e[i], &fr.f[i]);
        assert!((e[(0, 0)] + t.sin()).abs() < 1e-10 && (e[(1, 0)] - t.cos()).abs() < 1e-10);
        assert!((f[(0, 0)] + t.cos()).abs() < 1e-10 && (f[(1, 0)] + t.sin()).abs() < 1e-10);
        assert!((fr.curvature[i][(0, 0)] - 1.0).abs() < 1e-8, "R = {}", fr.curvature[i][(0, 0)]);
    }
}

#[test]
fn flat_torus_frame_is_constant() {
    let m = model("flat_torus_geodesic");
    let times = uniform_grid(0.0, 5.0, 11);
    let fr = jacobi_frame(&m, &m.reference_point(), &times, TOL, FrameOptions::default()).unwrap();
    for i in 0..times.len() {
        assert!(max_abs(&fr.omega_tilde[i]) < 1e-12);
        assert!(max_abs(&(&fr.f[i] - &fr.f[0])) < 1e-10);
        assert!(max_abs(&fr.curvature[i]) < 1e-8);
    }
}

#[test]
fn pendulum_curvature_is_second_derivative_of_potential() {
    let m = model("pendulum");
    let z = [0.7, 0.2];
    let (r, asym) = bracket_curvature(&m, &z).unwrap();
    assert!((r[(0, 0)] - 0.7f64.cos()).abs() < 1e-9 && asym == 0.0);
    let fr = curvature_operator(&m, &PhasePoint::new(&z), CurvatureMethod::Frame, TOL).unwrap();
    assert!((fr.matrix[(0, 0)] - 0.7f64.cos()).abs() < 1e-7);
}

#[test]
fn degenerate_gram_names_the_time() {
    match jacobi_curve(&CubicKinetic, &PhasePoint::new(&[1.0, 0.0]), &[0.0], TOL) {
        Err(HamError::DegenerateGram { t, .. }) => assert_eq!(t, 0.0),
        other => panic!("expected a degenerate Gram error, got {other:?}"),
    }
}

#[test]
fn regularity_matches_monotonicity() {
    let s = jacobi_curve(&NegativeKinetic, &PhasePoint::new(&[0.5, 0.5]), &[0.0, 1.0], TOL).unwrap();
    assert!(!s.monotone);
    let err = jacobi_frame(&NegativeKinetic, &PhasePoint::new(&[0.5, 0.5]), &[0.0], TOL, FrameOptions::default());
    assert!(matches!(err, Err(HamError::Hypothesis(_))));
}

#[test]
fn gram_matches_direct_bilinear_form() {
    // the monotone-form route against ω(V̇, V) from the pulled-back basis
    for name in ["sphere_geodesic", "hyperbolic_magnetic", "curvature_bump"] {
        let m = model(name);
        let curve = JacobiCurve::new(&m, &m.reference_point(), 0.0, 3.0, TOL).unwrap();
        for t in [0.0, 1.3, 3.0] {
            let (v, vd) = curve.basis(t).unwrap();
            let direct = hamlab_core::linalg::sym(&(vd.transpose() * curve.form() * v));
            let g = curve.gram(t).unwrap();
            assert!(max_abs(&(direct - g)) < 1e-9, "{name} at t = {t}");
        }
    }
}

#[test]
fn gram_rate_matches_time_difference() {
    let m = model("perturbed_hyperbolic");
    let curve = JacobiCurve::new(&m, &m.reference_point(), -1.0, 1.0, TOL).unwrap();
    let fd = hamlab_core::linalg::cd4_mat(|t| curve.gram(t), 0.4, 1e-3).unwrap();
    assert!(max_abs(&(fd - curve.gram_rate(0.4).unwrap())) < 1e-8);
}

#[test]
fn darboux_relations_on_all_models() {
    for name in MODEL_NAMES {
        let m = model(name);
        let times = uniform_grid(0.0, 10.0, 21);
        let fr = jacobi_frame(&m, &m.reference_point(), &times, TOL, FrameOptions::default()).unwrap();
        assert!(fr.darboux_residual < 1e-8, "{name}: {:e}", fr.darboux_residual);
        let worst = fr.asymmetry.iter().fold(0.0_f64, |a, b| a.max(*b));
        assert!(worst < 1e-7, "{name}: asymmetry {worst:e}");
    }
}

#[test]
fn frame_satisfies_structural_equations() {
    let m = model("hyperbolic_magnetic");
    let opts = FrameOptions::default();
    let curve = JacobiCurve::new(&m, &m.reference_point(), -0.5, 2.5, TOL).unwrap();
    let ev = FrameEvaluator::new(&curve, 0.0, 2.0, opts).unwrap();
    for t in [0.0, 0.9, 2.0] {
        let (e, f, _) = ev.frame(t).unwrap();
        let ed = hamlab_core::linalg::cd4_mat(|s| Ok(ev.frame(s)?.0), t, 5e-3).unwrap();
        assert!(max_abs(&(ed - &f)) < 1e-8, "Ė = F fails at {t}");
        let fd = hamlab_core::linalg::cd4_mat(|s| Ok(ev.frame(s)?.1), t, 5e-3).unwrap();
        // Ḟ has no F-component
        assert!(max_abs(&(e.transpose() * curve.form() * fd)) < 1e-8);
    }
}

#[test]
fn frame_gauge_is_a_constant_rotation() {
    for name in ["sphere_geodesic", "hyperbolic_magnetic", "perturbed_hyperbolic"] {
        let m = model(name);
        let times = uniform_grid(0.0, 6.0, 13);
        let a = jacobi_frame(&m, &m.reference_point(), &times, TOL, FrameOptions::default()).unwrap();
        let opts = FrameOptions { gauge: Gauge::Twisted { seed: 11 }, ..FrameOptions::default() };
        let b = jacobi_frame(&m, &m.reference_point(), &times, TOL, opts).unwrap();
        let form = symplectic_matrix(&m, m.reference_point().z.as_slice());
        // E_b = E_a C with C = F_aᵀ Ω E_b
        let c0 = a.f[0].transpose() * &form * &b.e[0];
        assert!(max_abs(&(&c0 - Mat::identity(2, 2))) > 1e-3, "{name}: the twist did nothing");
        for i in 0..times.len() {
            let c = a.f[i].transpose() * &form * &b.e[i];
            assert!(max_abs(&(&c - &c0)) < 1e-6, "{name} at t = {}", times[i]);
            let rb = c.transpose() * &a.curvature[i] * &c;
            assert!(max_abs(&(rb - &b.curvature[i])) < 1e-6);
        }
    }
}

#[test]
fn methods_agree_on_reference_points() {
    for name in MODEL_NAMES {
        let m = model(name);
        let p = m.reference_point();
        let fr = curvature_operator(&m, &p, CurvatureMethod::Frame, TOL).unwrap();
        let br = curvature_operator(&m, &p, CurvatureMethod::Bracket, TOL).unwrap();
        let d = max_abs(&(&fr.matrix - &br.matrix));
        assert!(d < 1e-6, "{name}: {d:e}\n{}{}", fr.matrix, br.matrix);
        if let Some(k) = m.full_curvature_oracle(p.z.as_slice()) {
            assert!((br.matrix[(0, 0)] - k).abs() < 1e-8, "{name}");
        }
    }
}

#[test]
fn splitting_of_free_particle() {
    let m = model("free_particle");
    let sp = splitting(&m, &PhasePoint::new(&[0.0, 1.0])).unwrap();
    assert!(same_line(&sp.horizontal, &[1.0, 0.0]) < 1e-12);
    let v = Mat::from_column_slice(2, 1, &[0.0, 3.0]);
    assert!(max_abs(&(&sp.projector_v * &v - &v)) < 1e-12);
}

#[test]
fn equivariance_examples() {
    let ho = model("harmonic_oscillator");
    let a = PhasePoint::new(&[1.0, 0.3]);
    let r0 = equivariance_check(&ho, &a, 0.0, 1.1, TOL).unwrap();
    assert!(r0.max_angle < 1e-12);
    let r = equivariance_check(&ho, &a, 0.3, 1.1, TOL).unwrap();
    assert!(r.max_angle < 1e-7 && r.curvature_residual < 1e-6, "{r:?}");

    let hyp = model("hyperbolic_plane_geodesic");
    let r = equivariance_check(&hyp, &hyp.reference_point(), 0.5, 2.0, TOL).unwrap();
    assert!(r.max_angle < 1e-6 && r.curvature_residual < 1e-6, "{r:?}");
}

#[test]
fn sphere_frame_survives_chart_switch() {
    let m = model("sphere_geodesic");
    let start = PhasePoint::new(m.point_on_level(&[0.05, 0.0], &[1.0, 0.2], 0.5).unwrap().as_slice());
    let times = uniform_grid(0.0, 2.0 * PI, 25);
    let fr = jacobi_frame(&m, &start, &times, TOL, FrameOptions::default()).unwrap();
    assert!(fr.darboux_residual < 1e-8);
    let curve = JacobiCurve::new(&m, &start, 0.0, 2.0 * PI, TOL).unwrap();
    assert!(curve.traj.chart_segments(true).len() > 1, "no chart switch");
    for r in &fr.curvature {
        // reduced eigenvalue K = 1 and the flow direction with eigenvalue 0
        let ev = hamlab_core::linalg::sym_eigen(r).0;
        assert!(ev[0].abs() < 1e-6 && (ev[1] - 1.0).abs() < 1e-6, "{ev:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bracket_and_frame_agree(seed in 0u64..100_000, which in 0usize..10) {
        let m = model(MODEL_NAMES[which]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let p = m.sample_point(&mut rng).unwrap();
        let fr = curvature_operator(&m, &p, CurvatureMethod::Frame, TOL).unwrap();
        let br = curvature_operator(&m, &p, CurvatureMethod::Bracket, TOL).unwrap();
        prop_assert!(max_abs(&(&fr.matrix - &br.matrix)) < 1e-5);
        prop_assert!(fr.asymmetry < 1e-7 && br.asymmetry < 1e-7);
    }

    #[test]
    fn splitting_projectors_are_complementary(seed in 0u64..100_000, which in 0usize..10) {
        let m = model(MODEL_NAMES[which]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let p = m.sample_point(&mut rng).unwrap();
        let sp = splitting(&m, &p).unwrap();
        let dim = 2 * m.dof();
        let id = Mat::identity(dim, dim);
        prop_assert!(max_abs(&(&sp.projector_v + &sp.projector_h - &id)) < 1e-12);
        prop_assert!(max_abs(&(&sp.projector_h * &sp.projector_h - &sp.projector_h)) < 1e-9);
        prop_assert!(max_abs(&(&sp.projector_h * &sp.projector_v)) < 1e-9);
        let om = symplectic_matrix(&m, p.z.as_slice());
        prop_assert!(max_abs(&(sp.horizontal.transpose() * &om * &sp.horizontal)) < 1e-9);
        prop_assert!(max_abs(&(sp.vertical.transpose() * &om * &sp.vertical)) < 1e-12);
    }

    #[test]
    fn equivariance_on_random_states(seed in 0u64..100_000, which in 0usize..10, s in -1.0f64..1.0, t in -2.0f64..2.0) {
        let m = model(MODEL_NAMES[which]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let p = m.sample_point(&mut rng).unwrap();
        let r = equivariance_check(&m, &p, s, t, TOL).unwrap();
        prop_assert!(r.max_angle < 1e-6, "{:?}", r);
        prop_assert!(r.curvature_residual < 1e-5, "{:?}", r);
    }
}
