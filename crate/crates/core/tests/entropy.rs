use hamlab_core::entropy::*;
use hamlab_core::models::Model;
use hamlab_core::symplectic::PhaseSystem;
use proptest::prelude::*;

fn model(name: &str) -> Model {
    Model::from_name(name).unwrap()
}

fn sampler(m: &Model, mode: SamplingMode, count: usize, seed: u64) -> MeasureSampler {
    MeasureSampler { horizon: 20.0, ..MeasureSampler::for_model(m, mode, count, seed) }
}

#[test]
fn samples_lie_on_the_level_and_are_reproducible() {
    for name in ["hyperbolic_plane_geodesic", "sphere_geodesic", "curvature_bump", "hyperbolic_magnetic"] {
        let m = model(name);
        let s = sampler(&m, SamplingMode::LevelSetRejection, 40, 3);
        let (a, _) = s.points(&m).unwrap();
        let (b, _) = s.points(&m).unwrap();
        assert_eq!(a.len(), 40);
        for (p, q) in a.iter().zip(&b) {
            assert!((m.hamiltonian(p.z.as_slice()) - s.energy).abs() < LEVEL_TOL);
            assert_eq!(p.z, q.z);
        }
        let (c, _) = MeasureSampler { seed: 4, ..s.clone() }.points(&m).unwrap();
        assert_ne!(a[0].z, c[0].z);
    }
}

#[test]
fn level_sampling_follows_the_hyperbolic_area() {
    // Liouville marginal on the base is dx dy / y² on the box y ∈ [1/2, 2],
    // with a uniform direction: E[y] = ln 4 / (3/2), E[cos²θ] = 1/2
    let m = model("hyperbolic_plane_geodesic");
    let s = sampler(&m, SamplingMode::LevelSetRejection, 4000, 11);
    let (pts, exceeded) = s.points(&m).unwrap();
    assert_eq!(exceeded, 0);
    let n = pts.len() as f64;
    let ys: Vec<f64> = pts.iter().map(|p| p.z[1]).collect();
    let mean_y = ys.iter().sum::<f64>() / n;
    let sd_y = (ys.iter().map(|y| (y - mean_y).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let expected = 4f64.ln() / 1.5;
    assert!((mean_y - expected).abs() < 4.0 * sd_y / n.sqrt(), "{mean_y} vs {expected}");
    let cos2: Vec<f64> = pts.iter().map(|p| p.z[2].powi(2) / (p.z[2].powi(2) + p.z[3].powi(2))).collect();
    let mean_c = cos2.iter().sum::<f64>() / n;
    assert!((mean_c - 0.5).abs() < 4.0 * 0.3536 / n.sqrt(), "{mean_c}");
}

#[test]
fn birkhoff_averages_of_simple_observables() {
    let hyp = model("hyperbolic_plane_geodesic");
    let flat = model("flat_torus_geodesic");
    for mode in [SamplingMode::LevelSetRejection, SamplingMode::TrajectoryBirkhoff] {
        let (c, _) = birkhoff_average(&hyp, &sampler(&hyp, mode, 6, 1), Observable::Constant(1.0)).unwrap();
        assert_eq!((c.mean, c.stderr), (1.0, 0.0));
        let (r, _) = birkhoff_average(&hyp, &sampler(&hyp, mode, 6, 1), Observable::ReducedTrace).unwrap();
        assert!((r.mean + 1.0).abs() < 1e-8 && r.stderr < 1e-6, "{r:?}");
        let (f, _) = birkhoff_average(&flat, &sampler(&flat, mode, 6, 1), Observable::ReducedTrace).unwrap();
        assert!(f.mean.abs() < 1e-12 && f.stderr < 1e-12, "{f:?}");
        let (d, _) = birkhoff_average(&flat, &sampler(&flat, mode, 6, 1), Observable::EigenDefect).unwrap();
        assert!((d.mean - 1.0).abs() < 1e-12);
    }
}

#[test]
fn one_degree_of_freedom_is_rejected() {
    let m = model("pendulum");
    let s = sampler(&m, SamplingMode::LevelSetRejection, 4, 0);
    assert!(birkhoff_average(&m, &s, Observable::ReducedTrace).is_err());
}

#[test]
fn hyperbolic_entropy_is_one_and_both_bounds_are_sharp() {
    let m = model("hyperbolic_plane_geodesic");
    for mode in [SamplingMode::LevelSetRejection, SamplingMode::TrajectoryBirkhoff] {
        let r = entropy_bounds(&m, &sampler(&m, mode, 8, 2)).unwrap();
        let h = r.entropy_estimate.unwrap();
        assert!((h - 1.0).abs() < 0.01, "{h}");
        assert!((r.bound1.value - 1.0).abs() < 0.02 && r.bound1.valid);
        assert!((r.bound2.value - 1.0).abs() < 0.02);
        assert_eq!((r.bound1_holds, r.bound2_holds), (Some(true), Some(true)));
        let l = r.lyapunov.unwrap();
        assert!(l.consistent, "{l:?}");
        assert!((l.qr.mean - 1.0).abs() < 0.01);
    }
}

#[test]
fn flat_torus_entropy_vanishes_and_the_second_bound_is_slack() {
    let m = model("flat_torus_geodesic");
    let r = entropy_bounds(&m, &sampler(&m, SamplingMode::LevelSetRejection, 8, 2)).unwrap();
    assert!(r.entropy_estimate.unwrap().abs() < 1e-6);
    assert!(r.bound1.valid && r.bound1.value.abs() < 1e-6);
    assert!((r.bound2.value - 0.5).abs() < 1e-9);
    assert_eq!(r.bound2_holds, Some(true));
    assert!(r.notes.iter().all(|n| !n.contains("not flow-invariant")));
}

#[test]
fn sphere_entropy_report_flags_its_hypotheses() {
    let m = model("sphere_geodesic");
    let r = entropy_bounds(&m, &sampler(&m, SamplingMode::LevelSetRejection, 6, 2)).unwrap();
    assert!(r.bound2.value.abs() < 1e-8);
    assert!(!r.bound1.valid);
    assert!(r.entropy_estimate.is_none());
    assert!(r.notes.iter().any(|n| n.contains("first bound undefined")));
    assert!(r.notes.iter().any(|n| n.contains("conjugate point")));
}

#[test]
fn pesin_cross_check_on_pinched_models() {
    for name in ["hyperbolic_magnetic", "perturbed_hyperbolic"] {
        let m = model(name);
        let l = lyapunov_via_riccati(&m, &sampler(&m, SamplingMode::TrajectoryBirkhoff, 6, 5)).unwrap();
        assert!(l.consistent, "{name}: {l:?}");
        assert!(l.riccati.mean > 0.5 && l.riccati.mean < 1.5, "{name}: {}", l.riccati.mean);
    }
    let m = model("hyperbolic_magnetic");
    let l = lyapunov_via_riccati(&m, &sampler(&m, SamplingMode::TrajectoryBirkhoff, 4, 5)).unwrap();
    assert!((l.riccati.mean - 0.75f64.sqrt()).abs() < 1e-6);
}

#[test]
fn entropy_bounds_hold_on_orbits_without_conjugate_points() {
    for name in ["hyperbolic_magnetic", "perturbed_hyperbolic", "curvature_bump", "flat_torus_geodesic"] {
        let m = model(name);
        let r = entropy_bounds(&m, &sampler(&m, SamplingMode::TrajectoryBirkhoff, 6, 9)).unwrap();
        assert_eq!(r.bound1_holds, Some(true), "{name}: {r:?}");
        assert_eq!(r.bound2_holds, Some(true), "{name}: {r:?}");
    }
}

#[test]
fn total_curvature_sign() {
    let flat = model("flat_torus_geodesic");
    let r = total_curvature_check(&flat, &sampler(&flat, SamplingMode::LevelSetRejection, 8, 1), 10.0).unwrap();
    assert_eq!(r.status, TotalCurvatureStatus::Pass);
    assert!(r.mean.unwrap().mean.abs() < 1e-12);
    assert!(r.max_abs_trace.unwrap() < 1e-12);

    let hyp = model("hyperbolic_plane_geodesic");
    let r = total_curvature_check(&hyp, &sampler(&hyp, SamplingMode::LevelSetRejection, 8, 1), 10.0).unwrap();
    assert_eq!(r.status, TotalCurvatureStatus::Pass);
    assert!((r.mean.unwrap().mean + 1.0).abs() < 1e-8);
    assert!(r.max_abs_trace.is_none());

    let sphere = model("sphere_geodesic");
    let r = total_curvature_check(&sphere, &sampler(&sphere, SamplingMode::LevelSetRejection, 4, 1), 10.0).unwrap();
    assert_eq!(r.status, TotalCurvatureStatus::HypothesisViolation);
    assert!(r.mean.is_none());
}

#[test]
fn reports_are_bitwise_reproducible_across_thread_counts() {
    let m = model("perturbed_hyperbolic");
    let s = sampler(&m, SamplingMode::LevelSetRejection, 8, 21);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| serde_json::to_string(&entropy_bounds(&m, &s).unwrap()).unwrap())
    };
    assert_eq!(run(1), run(4));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn total_curvature_is_nonpositive(seed in 0u64..1000, idx in 0usize..4) {
        let name = ["hyperbolic_plane_geodesic", "perturbed_hyperbolic", "hyperbolic_magnetic", "curvature_bump"][idx];
        let m = model(name);
        let r = total_curvature_check(&m, &sampler(&m, SamplingMode::LevelSetRejection, 6, seed), 10.0).unwrap();
        prop_assert_eq!(r.status, TotalCurvatureStatus::Pass);
    }
}
