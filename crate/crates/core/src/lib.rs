//! Numerical Finsler geometry and geometric control.
//!
//! The crate is organised bottom-up:
//!
//! - [`minkowski`]: pointwise Randers norms built from Zermelo data `(h, w)`,
//!   with the fundamental tensor, Cartan tensor and Legendre map.
//! - [`scene`]: chart-based manifolds carrying metric and wind fields, plus a
//!   registry of named scenarios.
//! - [`geodesic`]: Euler–Lagrange geodesic integration, the Zermelo fast path
//!   for Killing winds, Jacobi-operator and flag-curvature estimators and a
//!   Liouville volume check.
//! - [`submersion`]: horizontal/vertical splitting, horizontal lifts and the
//!   unit-ball projection test for Finsler submersions.
//! - [`control`]: flows of horizontal unit geodesic fields, sampled attainable
//!   sets and orbits on occupancy grids, Lie-bracket rank.
//! - [`jacobi`]: Jacobi triples, symplectic form, isotropic and Lagrangian
//!   subspaces, transverse triples, Riccati operators and Wilking's splitting.
//! - [`formats`]: the CSV and JSON file formats.
//! - [`suite`]: the reproduction checks run by `finsler check`.

pub mod control;
pub mod error;
pub mod formats;
pub mod geodesic;
pub mod jacobi;
mod linalg;
pub mod minkowski;
pub mod scene;
pub mod submersion;
pub mod suite;

pub use error::{GeomError, Result};
pub use geodesic::{PhaseState, Trajectory};
pub use minkowski::RandersDatum;
pub use scene::Scene;

/// Dense column vector used for points, tangent vectors and covectors.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix.
pub type Matrix = nalgebra::DMatrix<f64>;
