//! Model energies with their local solvers.

pub mod dualtv;
mod fem;
pub mod obstacle;
pub mod quadratic;
pub mod slap;

pub use dualtv::{make_dualtv, DualTvModel, DualTvSpec};
pub use fem::FemLayout;
pub use obstacle::{make_obstacle, ObstacleModel, ObstacleSpec};
pub use quadratic::{toy_instance, QuadraticModel};
pub use slap::{make_slap, SLaplaceModel, SLaplaceSpec};

use sha2::{Digest, Sha256};

/// Hex SHA-256 of a canonical parameter string.
pub fn fingerprint(canonical: &str) -> String {
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

/// Local solver tolerance on the (projected) gradient norm, relative to its
/// initial value.
pub const LOCAL_TOL: f64 = 1e-8;
/// Absolute floor added to the relative tolerance, just above rounding level.
pub const LOCAL_ABS_TOL: f64 = 1e-14;

/// Stopping threshold for a local solve whose initial residual is `r0`.
///
/// Stricter than `LOCAL_TOL * (1 + r0)`: a floor of order `LOCAL_TOL` would
/// stop every local solve once the outer iteration is within about `1e-10`
/// of the minimum in energy.
pub fn local_tolerance(r0: f64) -> f64 {
    LOCAL_TOL * r0 + LOCAL_ABS_TOL
}

/// Iteration cap for the inner local solvers.
pub const LOCAL_MAX_ITER: usize = 10_000;
