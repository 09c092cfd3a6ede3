//! Curvature invariants of monotone Hamiltonian systems.
//!
//! Jacobi curves, canonical frames and their curvature operator; symplectic
//! reduction by the Hamiltonian field; the matrix Riccati toolkit; invariant
//! distributions and hyperbolicity verdicts; entropy estimates.

pub mod entropy;
pub mod error;
pub mod hyperbolicity;
pub mod integrator;
pub mod jacobi;
pub mod linalg;
pub mod models;
pub mod reduction;
pub mod riccati;
pub mod symplectic;

pub use error::{HamError, Result};
pub use linalg::{Mat, Vector};
pub use models::{Model, ModelSpec};
pub use symplectic::{PhasePoint, PhaseSystem, Trajectory};
