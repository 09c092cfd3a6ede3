//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;

use common::{anisotropic, anisotropic_point, oscillating, random_psd};
use hamlab_core::entropy::{entropy_bounds, total_curvature_check, MeasureSampler, SamplingMode, TotalCurvatureStatus};
use hamlab_core::hyperbolicity::{
    anosov_diagnose, build_invariant_distribution, conjugate_scan, invariance_residuals, nonpositive_criterion,
    AnosovStatus, NonpositiveStatus, OrbitCurvature,
};
use hamlab_core::jacobi::{curvature_operator, jacobi_frame, CurvatureMethod, FrameOptions, Gauge};
use hamlab_core::linalg::{max_abs, orthogonality_defect, Mat};
use hamlab_core::models::MODEL_NAMES;
use hamlab_core::reduction::reduced_curvature_via_formula;
use hamlab_core::riccati::{comparison_check, fundamental, riccati_at, ComparisonStatus, Direction, RiccatiProblem};
use hamlab_core::symplectic::{symplectic_matrix, uniform_grid, PhaseSystem};
use hamlab_core::{Model, PhasePoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

const TOL: f64 = 1e-12;

fn model(name: &str) -> Model {
    Model::from_name(name).unwrap()
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fail(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// `S(t)` for `𝓡 ∈ {−1, 0, +1}` against `coth t`, `1/t`, `cot t`.
fn riccati_closed_forms() -> Verdict {
    let grid = uniform_grid(0.1, 5.0, 50);
    let mut worst: f64 = 0.0;
    for k in [-1.0f64, 0.0, 1.0] {
        let fund = fundamental(&RiccatiProblem::scalar(k), &grid).map_err(fail)?;
        for &t in &grid {
            // cot has a pole at π; its neighbourhood is skipped
            if k > 0.0 && (t - PI).abs() < 0.05 {
                continue;
            }
            let exact = if k < 0.0 { 1.0 / t.tanh() } else if k > 0.0 { 1.0 / t.tan() } else { 1.0 / t };
            let s = riccati_at(&fund, t).map_err(fail)?[(0, 0)];
            worst = worst.max((s - exact).abs() / exact.abs().max(1.0));
        }
    }
    check(worst < 1e-6, format!("max deviation {worst:.2e} (limit 1e-6)"))
}

/// Nonpositive curvatures `−P₀ − P₁(1 + sin ωt)/2` with `𝓡₁ ⪰ 𝓡₂`; every
/// other pair starts from identical data, the rest from `S₂(t₀) ⪰ S₁(t₀)`.
fn comparison_pair(seed: u64, forward: bool) -> (RiccatiProblem<'static>, RiccatiProblem<'static>, Mat, Mat, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.gen_range(1..=4);
    let t0 = rng.gen_range(-2.0..2.0);
    let p0 = random_psd(&mut rng, m, 0.5);
    let p1 = random_psd(&mut rng, m, 0.3);
    let q = random_psd(&mut rng, m, 0.4);
    let w = rng.gen_range(0.5..2.0);
    let bump = -&p1 * 0.5;
    let upper = oscillating(-&p0 + &bump, bump.clone(), w);
    let lower = oscillating(-(&p0 + &q) + &bump, bump, w);
    let a = random_psd(&mut rng, m, 0.5);
    let b = if seed.is_multiple_of(2) { Mat::zeros(m, m) } else { random_psd(&mut rng, m, 0.3) };
    if forward {
        (upper, lower, a.clone(), &a + b, t0)
    } else {
        (lower, upper, -(&a + b), -a, t0)
    }
}

fn comparison() -> Verdict {
    let mut worst = f64::INFINITY;
    let mut bad = Vec::new();
    for forward in [true, false] {
        for seed in 0..200u64 {
            let (p1, p2, s1, s2, t0) = comparison_pair(seed, forward);
            let grid = if forward { uniform_grid(t0, t0 + 5.0, 51) } else { uniform_grid(t0 - 5.0, t0, 51) };
            let r = comparison_check(&p1, &p2, &s1, &s2, t0, &grid).map_err(fail)?;
            if r.status != ComparisonStatus::Holds {
                bad.push(format!("seed {seed} forward {forward}: {:?}", r.status));
            }
            worst = worst.min(r.min_gap);
        }
    }
    check(bad.is_empty(), format!("400 pairs (200 each direction), min eig(S₂ − S₁) = {worst:.2e}, failures {bad:?}"))
}

fn frames() -> Verdict {
    let times = uniform_grid(0.0, 6.0, 13);
    let twisted = FrameOptions { gauge: Gauge::Twisted { seed: 11 }, ..FrameOptions::default() };
    let (mut darboux, mut asym, mut drift, mut defect): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for name in MODEL_NAMES {
        let m = model(name);
        let a = m.reference_point();
        let fa = jacobi_frame(&m, &a, &times, TOL, FrameOptions::default()).map_err(|e| format!("{name}: {e}"))?;
        let fb = jacobi_frame(&m, &a, &times, TOL, twisted).map_err(|e| format!("{name}: {e}"))?;
        darboux = darboux.max(fa.darboux_residual).max(fb.darboux_residual);
        asym = asym.max(fa.asymmetry.iter().chain(&fb.asymmetry).copied().fold(0.0, f64::max));
        let form = symplectic_matrix(&m, a.z.as_slice());
        // E_b = E_a C with C = F_aᵀ Ω E_b constant and orthogonal
        let c0 = fa.f[0].transpose() * &form * &fb.e[0];
        defect = defect.max(orthogonality_defect(&c0));
        for i in 0..times.len() {
            let c = fa.f[i].transpose() * &form * &fb.e[i];
            drift = drift.max(max_abs(&(&c - &c0)));
            drift = drift.max(max_abs(&(c.transpose() * &fa.curvature[i] * &c - &fb.curvature[i])));
        }
    }
    check(
        darboux < 1e-8 && asym < 1e-8 && drift < 1e-6 && defect < 1e-6,
        format!(
            "10 models: Darboux {darboux:.2e}, asymmetry {asym:.2e} (limit 1e-8); gauge drift {drift:.2e}, orthogonality {defect:.2e} (limit 1e-6)"
        ),
    )
}

fn curvature_methods() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut at = String::new();
    for (k, name) in MODEL_NAMES.iter().enumerate() {
        let m = model(name);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + k as u64);
        for _ in 0..20 {
            let p = m.sample_point(&mut rng).map_err(fail)?;
            let fr = curvature_operator(&m, &p, CurvatureMethod::Frame, TOL).map_err(|e| format!("{name}: {e}"))?;
            let br = curvature_operator(&m, &p, CurvatureMethod::Bracket, TOL).map_err(|e| format!("{name}: {e}"))?;
            let d = max_abs(&(&fr.matrix - &br.matrix));
            if d > worst {
                worst = d;
                at = name.to_string();
            }
        }
    }
    check(worst < 1e-5, format!("200 points, max ‖𝓡_frame − 𝓡_bracket‖∞ = {worst:.2e} on {at} (limit 1e-5)"))
}

fn reduction() -> Verdict {
    let mut mismatch: f64 = 0.0;
    let mut gap = f64::INFINITY;
    let mut magnetic_omega_bar: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut cases: Vec<(String, Box<dyn PhaseSystem>, PhasePoint)> = Vec::new();
    for name in MODEL_NAMES.iter().filter(|n| model(n).dof() == 2) {
        let m = model(name);
        cases.push((name.to_string(), Box::new(m.clone()), m.reference_point()));
        for _ in 0..3 {
            cases.push((name.to_string(), Box::new(m.clone()), m.sample_point(&mut rng).map_err(fail)?));
        }
    }
    cases.push(("anisotropic3".into(), Box::new(anisotropic()), anisotropic_point()));
    for (name, sys, p) in &cases {
        let (_, d) = reduced_curvature_via_formula(sys.as_ref(), p, TOL, 8, &mut rng).map_err(|e| format!("{name}: {e}"))?;
        mismatch = mismatch.max(d.mismatch);
        gap = d.quadratic_forms.iter().map(|q| q.gap).fold(gap, f64::min);
        if name == "flat_magnetic" {
            magnetic_omega_bar = magnetic_omega_bar.max(d.omega_bar.norm());
        }
    }
    check(
        mismatch < 1e-5 && gap >= -1e-9 && magnetic_omega_bar > 0.5,
        format!(
            "{} points: direct vs formula {mismatch:.2e} (limit 1e-5), min gap {gap:.2e} (floor −1e-9), flat_magnetic |Ω̄| = {magnetic_omega_bar:.3}",
            cases.len()
        ),
    )
}

fn conjugate_points() -> Verdict {
    let sphere = model("sphere_geodesic");
    let r = conjugate_scan(&sphere, &sphere.reference_point(), 10.0, true).map_err(fail)?;
    let times: Vec<f64> = r.conjugate_times.iter().map(|c| c.t).collect();
    let err = times.iter().enumerate().map(|(k, t)| (t - (k + 1) as f64 * PI).abs()).fold(0.0, f64::max);
    let mut none = Vec::new();
    for name in ["flat_torus_geodesic", "hyperbolic_plane_geodesic"] {
        let m = model(name);
        for reduced in [true, false] {
            let r = conjugate_scan(&m, &m.reference_point(), 50.0, reduced).map_err(|e| format!("{name}: {e}"))?;
            none.push(r.conjugate_times.is_empty());
        }
    }
    check(
        times.len() == 3 && err < 1e-4 && none.iter().all(|&x| x),
        format!("sphere times {times:.6?}, max |t − kπ| = {err:.2e}; flat and hyperbolic empty to T = 50: {}", none.iter().all(|&x| x)),
    )
}

fn distributions() -> Verdict {
    let shifts = uniform_grid(-3.0, 3.0, 13);
    let (mut gap, mut residual, mut props): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for name in ["hyperbolic_plane_geodesic", "flat_torus_geodesic"] {
        let m = model(name);
        for dir in [Direction::Plus, Direction::Minus] {
            let d = build_invariant_distribution(&m, &m.reference_point(), dir, &[0.0], 1e-8).map_err(|e| format!("{name}: {e}"))?;
            gap = gap.max(d.limit.convergence_gap);
            props = props.max(d.checks.isotropy).max(d.checks.energy).max(d.checks.field_residual);
            for (_, a) in invariance_residuals(&m, &d, &shifts, 1e-8).map_err(|e| format!("{name}: {e}"))? {
                residual = residual.max(a);
            }
        }
    }
    check(
        gap < 1e-6 && residual < 1e-4 && props < 1e-8,
        format!("limit gap {gap:.2e} (limit 1e-6), invariance {residual:.2e} on [−3, 3] (limit 1e-4), isotropy/level/field {props:.2e} (limit 1e-8)"),
    )
}

fn anosov() -> Verdict {
    let hyp = model("hyperbolic_plane_geodesic");
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let samples: Vec<_> = (0..3).map(|_| hyp.sample_point(&mut rng).unwrap()).collect();
    let v = anosov_diagnose(&hyp, &samples, 10.0, 1e-8, hyp.spec.is_compact()).map_err(fail)?;
    let agree = v.samples.iter().all(|s| s.criteria == [true; 3]);
    let hyp_ok = v.status == AnosovStatus::Anosov && (v.c2 - 1.0).abs() <= 0.02 && agree;

    let flat = model("flat_torus_geodesic");
    let f = anosov_diagnose(&flat, &[flat.reference_point()], 10.0, 1e-8, flat.spec.is_compact()).map_err(fail)?;
    let angle = f.samples.first().map(|s| s.transversality_angles[0]).unwrap_or(f64::NAN);
    let flat_ok = f.status == AnosovStatus::NotAnosov && angle < 1e-8;

    let pert = model("perturbed_hyperbolic");
    let mut pts = vec![pert.reference_point()];
    pts.extend((0..2).map(|_| pert.sample_point(&mut rng).unwrap()));
    let mut range = (f64::INFINITY, f64::NEG_INFINITY);
    for p in &pts {
        for (_, lo, hi) in OrbitCurvature::new(&pert, p).map_err(fail)?.eigen_range(-10.0, 10.0).map_err(fail)? {
            range = (range.0.min(lo), range.1.max(hi));
        }
    }
    let pv = anosov_diagnose(&pert, &pts, 10.0, 1e-8, pert.spec.is_compact()).map_err(fail)?;
    let pert_ok = pv.status == AnosovStatus::Anosov && pv.c2 >= 0.45 && range.0 >= -1.5 && range.1 <= -0.5;
    check(
        hyp_ok && flat_ok && pert_ok,
        format!(
            "hyperbolic {:?} c₂ = {:.4}, criteria agree {agree}; flat {:?} with angle(Δ̃⁺, Δ̃⁻) = {angle:.1e}; perturbed {:?} c₂ = {:.4}, 𝓡̃ in [{:.3}, {:.3}]",
            v.status, v.c2, f.status, pv.status, pv.c2, range.0, range.1
        ),
    )
}

fn nonpositive() -> Verdict {
    let bump = model("curvature_bump");
    let mut fired = Vec::new();
    for dir in [[1.0, 0.3], [1.0, -0.5], [0.6, 0.8]] {
        let p = PhasePoint::new(bump.point_on_level(&[-2.0, 0.0], &dir, 0.5).map_err(fail)?.as_slice());
        let r = nonpositive_criterion(&bump, &p, 10.0).map_err(fail)?;
        fired.push(r.status == NonpositiveStatus::Anosov && r.negative_time.is_some());
    }
    // the line x = −2 runs parallel to the band and stays flat
    let miss = PhasePoint::new(bump.point_on_level(&[-2.0, 0.0], &[0.0, 1.0], 0.5).map_err(fail)?.as_slice());
    let r = nonpositive_criterion(&bump, &miss, 10.0).map_err(fail)?;
    let abstains = r.negative_time.is_none() && r.drift_onset.is_none() && r.status != NonpositiveStatus::Anosov;
    let flat = model("flat_torus_geodesic");
    let f = nonpositive_criterion(&flat, &flat.reference_point(), 10.0).map_err(fail)?;
    let flat_ok = f.status == NonpositiveStatus::NotAnosov && f.drift_onset.is_none();
    check(
        fired.iter().all(|&x| x) && abstains && flat_ok,
        format!("bump crossings fire {fired:?}; parallel orbit abstains {abstains}; flat torus {:?} with J̃° drift {:.1e}", f.status, f.relative_drift),
    )
}

fn sampler(m: &Model, count: usize, seed: u64) -> MeasureSampler {
    MeasureSampler { horizon: 20.0, ..MeasureSampler::for_model(m, SamplingMode::LevelSetRejection, count, seed) }
}

fn entropy() -> Verdict {
    let hyp = model("hyperbolic_plane_geodesic");
    let h = entropy_bounds(&hyp, &sampler(&hyp, 8, 2)).map_err(fail)?;
    let he = h.entropy_estimate.unwrap_or(f64::NAN);
    let hyp_ok = (he - 1.0).abs() <= 0.02 && (h.bound1.value - 1.0).abs() <= 0.01 && (h.bound2.value - 1.0).abs() <= 0.01;
    let flat = model("flat_torus_geodesic");
    let f = entropy_bounds(&flat, &sampler(&flat, 8, 2)).map_err(fail)?;
    let fe = f.entropy_estimate.unwrap_or(f64::NAN);
    let flat_ok = fe.abs() < 1e-6 && f.bound1.value.abs() < 1e-6 && (f.bound2.value - 0.5).abs() < 1e-6;
    let mut totals = Vec::new();
    for name in ["flat_torus_geodesic", "hyperbolic_plane_geodesic", "perturbed_hyperbolic", "hyperbolic_magnetic", "curvature_bump"] {
        let m = model(name);
        let t = total_curvature_check(&m, &sampler(&m, 8, 1), 10.0).map_err(|e| format!("{name}: {e}"))?;
        let ok = t.status == TotalCurvatureStatus::Pass && t.mean.as_ref().is_some_and(|a| a.mean <= 2.0 * a.stderr + 1e-12);
        totals.push((name, ok));
    }
    check(
        hyp_ok && flat_ok && totals.iter().all(|t| t.1),
        format!(
            "hyperbolic h = {he:.4}, b₁ = {:.4}, b₂ = {:.4}; flat h = {fe:.1e}, b₁ = {:.1e}, b₂ = {:.4}; total curvature sign {totals:?}",
            h.bound1.value, h.bound2.value, f.bound1.value, f.bound2.value
        ),
    )
}

fn hamlab(dir: &Path, command: &str, config: &Path, out: &str) -> Result<Value, String> {
    let out = dir.join(out);
    let o = Command::new(env!("CARGO_BIN_EXE_hamlab"))
        .args([command, "--config"])
        .arg(config)
        .arg("--out")
        .arg(&out)
        .output()
        .map_err(fail)?;
    let text = std::fs::read_to_string(out.join("report.json")).map_err(|e| format!("{command}: {e} (exit {:?})", o.status.code()))?;
    let mut v: Value = serde_json::from_str(&text).map_err(fail)?;
    v.as_object_mut().ok_or("report is not an object")?.remove("timestamp").ok_or("no timestamp")?;
    Ok(v)
}

fn determinism() -> Verdict {
    let dir = tempfile::TempDir::new().map_err(fail)?;
    let cfg = dir.path().join("run.toml");
    let body = "[model]\nname = \"perturbed_hyperbolic\"\n[seeds]\nsampling = 3\n[sampling]\nentropy_samples = 6\n";
    std::fs::write(&cfg, body).map_err(fail)?;
    let mut same = Vec::new();
    for command in ["curvature", "conjugate", "distributions", "anosov", "entropy", "riccati-lab", "validate"] {
        let a = hamlab(dir.path(), command, &cfg, &format!("{command}-a"))?;
        let b = hamlab(dir.path(), command, &cfg, &format!("{command}-b"))?;
        same.push((command, a == b));
    }
    check(same.iter().all(|s| s.1), format!("repeated runs identical modulo timestamp: {same:?}"))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("Riccati closed forms", riccati_closed_forms),
        ("comparison", comparison),
        ("Darboux and gauge", frames),
        ("curvature methods", curvature_methods),
        ("reduction", reduction),
        ("conjugate points", conjugate_points),
        ("invariant distributions", distributions),
        ("Anosov verdicts", anosov),
        ("non-positive criterion", nonpositive),
        ("entropy", entropy),
        ("determinism", determinism),
    ];
    let results: Vec<Verdict> = std::thread::scope(|s| {
        let handles: Vec<_> = criteria.iter().map(|(_, f)| s.spawn(*f)).collect();
        handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err("panicked".into()))).collect()
    });
    let mut failed = 0;
    for (i, ((name, _), r)) in criteria.iter().zip(&results).enumerate() {
        match r {
            Ok(d) => println!("criterion {:>2} {name}: PASS ({d})", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({d})", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
