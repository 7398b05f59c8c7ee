//! Experiment plumbing: configuration, problem construction, reference
//! energies, trace output and algorithm comparisons.

mod config;
mod output;
mod reference;
mod run;

pub use config::{ConfigOverrides, ExperimentConfig, ProblemKind};
pub use output::{
    summarize, summarize_comparison, trace_csv, write_summary, write_trace, ComparisonReport, ComparisonRow, Summary,
    CSV_HEADER, THRESHOLDS,
};
pub use reference::{compute_reference, reference_for, ReferenceCache, ReferenceRecord};
pub use run::{
    build_problem, run_experiment, run_prepared, solver_config, thread_count, with_thread_pool, ExperimentOutput,
    REFERENCE_BUDGET_FACTOR,
};
