//! Fixed inputs shared by the benchmarks.

use hamlab_core::linalg::Mat;
use hamlab_core::{Model, PhasePoint};

/// Two-degree-of-freedom models with their reference points.
pub fn surfaces() -> Vec<(Model, PhasePoint)> {
    ["hyperbolic_plane_geodesic", "perturbed_hyperbolic", "hyperbolic_magnetic"]
        .iter()
        .map(|n| {
            let m = Model::from_name(n).expect("known model");
            let a = m.reference_point();
            (m, a)
        })
        .collect()
}

/// Constant negative-definite curvature `−diag(1, …, m²)`.
pub fn negative_curvature(m: usize) -> Mat {
    Mat::from_diagonal(&nalgebra::DVector::from_iterator(m, (1..=m).map(|k| -((k * k) as f64))))
}
