//! Plain, backtracking and momentum additive Schwarz drivers.

mod config;
mod drivers;
mod step;
mod trace;

pub use config::{Algorithm, SolverConfig, StopTarget};
pub use drivers::{
    momentum_update, restart_test, run, run_backtracking, run_momentum, run_momentum_observed, run_plain, MomentumStep,
};
pub use step::{
    apply_step, backtracking_search, compute_local_corrections, stop_criterion, sum_corrections, BacktrackOutcome,
    LocalCorrection, Trial,
};
pub use trace::{IterationRecord, Trace};
