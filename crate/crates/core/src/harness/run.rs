use std::path::PathBuf;

use crate::algorithms::{run, SolverConfig, Trace};
use crate::error::{Error, Result};
use crate::framework::ProblemInstance;
use crate::harness::output::{summarize, write_summary, write_trace, Summary};
use crate::harness::reference::{reference_for, ReferenceRecord};
use crate::harness::{ExperimentConfig, ProblemKind};
use crate::problems::{
    make_dualtv, make_obstacle, make_slap, toy_instance, DualTvSpec, FemLayout, ObstacleSpec, SLaplaceSpec,
};

/// Reference runs get this many times the benchmark budget.
pub const REFERENCE_BUDGET_FACTOR: usize = 10;

pub fn build_problem(cfg: &ExperimentConfig) -> Result<ProblemInstance> {
    let layout = FemLayout::new(cfg.m, cfg.coarse_m, cfg.delta_layers);
    match cfg.problem {
        ProblemKind::Slap => make_slap(&SLaplaceSpec::new(layout)),
        ProblemKind::Obstacle => make_obstacle(&ObstacleSpec::new(layout)),
        ProblemKind::DualTv => {
            let mut spec = DualTvSpec::from_mesh_size(cfg.m, cfg.coarse_m, cfg.delta_layers);
            spec.noise = cfg.noise;
            spec.seed = cfg.seed;
            make_dualtv(&spec)
        }
        ProblemKind::Quadratic => toy_instance(),
    }
}

pub fn solver_config(cfg: &ExperimentConfig, problem: &ProblemInstance) -> SolverConfig {
    let mut s = SolverConfig::new(problem.decomposition.tau0(), cfg.rho, cfg.max_outer);
    s.omega = cfg.omega;
    s
}

#[derive(Debug)]
pub struct ExperimentOutput {
    pub fingerprint: String,
    pub trace: Trace,
    pub summary: Summary,
    pub reference: ReferenceRecord,
    pub csv_path: Option<PathBuf>,
    pub summary_path: Option<PathBuf>,
}

/// Builds the problem, obtains `E*`, runs the configured driver and writes
/// `<problem>_<algorithm>_rho<rho>.{csv,json}` into the output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let problem = build_problem(cfg)?;
    let reference = reference_for(
        &problem,
        REFERENCE_BUDGET_FACTOR * cfg.max_outer,
        cfg.reference_cache.as_deref(),
    )?;
    run_prepared(cfg, &problem, reference)
}

/// [`run_experiment`] on an already built problem with a known reference.
pub fn run_prepared(
    cfg: &ExperimentConfig,
    problem: &ProblemInstance,
    reference: ReferenceRecord,
) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let trace = run(problem, &solver_config(cfg, problem), cfg.algorithm)?;
    let summary = summarize(cfg.problem.as_str(), &trace, reference.e_star);
    let (mut csv_path, mut summary_path) = (None, None);
    if let Some(dir) = &cfg.out_dir {
        let stem = format!("{}_{}_rho{}", cfg.problem, cfg.algorithm, cfg.rho);
        let csv = dir.join(format!("{stem}.csv"));
        let json = dir.join(format!("{stem}.json"));
        write_trace(&trace, reference.e_star, &csv, cfg.timing)?;
        write_summary(&summary, &json)?;
        csv_path = Some(csv);
        summary_path = Some(json);
    }
    Ok(ExperimentOutput {
        fingerprint: problem.fingerprint.clone(),
        trace,
        summary,
        reference,
        csv_path,
        summary_path,
    })
}

/// Worker count requested through `SCHWARZ_THREADS`, if any.
pub fn thread_count() -> Result<Option<usize>> {
    match std::env::var("SCHWARZ_THREADS") {
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(Error::config(format!("SCHWARZ_THREADS: {e}"))),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::config(format!(
                "SCHWARZ_THREADS must be a positive integer, got `{s}`"
            ))),
        },
    }
}

/// Runs `f` inside a worker pool sized by `SCHWARZ_THREADS`.
pub fn with_thread_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count()? {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}
