use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use schwarz_core::algorithms::{Algorithm, Trace};
use schwarz_core::harness::{
    build_problem, reference_for, run_prepared, summarize_comparison, with_thread_pool, ConfigOverrides,
    ExperimentConfig, ExperimentOutput, REFERENCE_BUDGET_FACTOR,
};
use schwarz_core::{Error, Result};

/// Additive Schwarz experiments: traces, reference energies and comparisons.
#[derive(Parser)]
#[command(name = "schwarz", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one algorithm and write its trace and summary.
    Run(Common),
    /// Compute (or look up) the reference energy E*.
    Reference(Common),
    /// Run plain, backtracking and momentum on the same problem.
    Compare(Common),
    /// Run plain and backtracking with rho in {0.5, 0.7, 0.9}.
    SweepRho(Common),
}

#[derive(Args)]
struct Common {
    /// Flat TOML file with the same keys as the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    algorithm: Option<String>,
    /// Fine nodes per side.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    coarse_m: Option<usize>,
    /// Overlap in fine node layers.
    #[arg(long)]
    overlap: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    omega: Option<f64>,
    /// Outer iterations.
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Gaussian noise level of the dual-TV datum.
    #[arg(long)]
    noise: Option<f64>,
    /// Output directory for CSV traces and JSON summaries.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    reference_cache: Option<PathBuf>,
    /// Record wall-clock time in the elapsed_ms column.
    #[arg(long)]
    timing: bool,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let o = ConfigOverrides {
            problem: self.problem.clone(),
            algorithm: self.algorithm.clone(),
            m: self.m,
            coarse_m: self.coarse_m,
            overlap: self.overlap,
            rho: self.rho,
            omega: self.omega,
            iters: self.iters,
            seed: self.seed,
            noise: self.noise,
            out: self.out.clone(),
            reference_cache: self.reference_cache.clone(),
            timing: self.timing.then_some(true),
        };
        ExperimentConfig::resolve(self.config.as_deref(), &o)
    }
}

fn print_output(out: &ExperimentOutput) {
    println!(
        "{}",
        serde_json::to_string_pretty(&out.summary).expect("summary serializes")
    );
}

fn run_variants(cfg: &ExperimentConfig, variants: &[(Algorithm, f64)]) -> Result<()> {
    let problem = build_problem(cfg)?;
    let reference = reference_for(
        &problem,
        REFERENCE_BUDGET_FACTOR * cfg.max_outer,
        cfg.reference_cache.as_deref(),
    )?;
    let mut outputs = Vec::new();
    for &(algorithm, rho) in variants {
        let mut c = cfg.clone();
        c.algorithm = algorithm;
        c.rho = rho;
        let out = run_prepared(&c, &problem, reference.clone())?;
        print_output(&out);
        outputs.push(out);
    }
    let entries: Vec<(&str, &Trace)> = outputs.iter().map(|o| (o.fingerprint.as_str(), &o.trace)).collect();
    let report = summarize_comparison(&entries, reference.e_star)?;
    print!("{}", report.render());
    if let Some(dir) = &cfg.out_dir {
        let path = dir.join(format!("{}_comparison.json", cfg.problem));
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        std::fs::write(&path, text + "\n").map_err(|e| Error::Io { path, source: e })?;
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(c) => {
            let cfg = c.resolve()?;
            let problem = build_problem(&cfg)?;
            let reference = reference_for(
                &problem,
                REFERENCE_BUDGET_FACTOR * cfg.max_outer,
                cfg.reference_cache.as_deref(),
            )?;
            print_output(&run_prepared(&cfg, &problem, reference)?);
        }
        Command::Reference(c) => {
            let cfg = c.resolve()?;
            let problem = build_problem(&cfg)?;
            let r = reference_for(
                &problem,
                REFERENCE_BUDGET_FACTOR * cfg.max_outer,
                cfg.reference_cache.as_deref(),
            )?;
            println!("{}", serde_json::to_string_pretty(&r).expect("record serializes"));
        }
        Command::Compare(c) => {
            let cfg = c.resolve()?;
            let variants: Vec<_> = Algorithm::ALL.iter().map(|&a| (a, cfg.rho)).collect();
            run_variants(&cfg, &variants)?;
        }
        Command::SweepRho(c) => {
            let cfg = c.resolve()?;
            let mut variants = vec![(Algorithm::Plain, cfg.rho)];
            variants.extend([0.5, 0.7, 0.9].map(|r| (Algorithm::Backtracking, r)));
            run_variants(&cfg, &variants)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match with_thread_pool(|| execute(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) | Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
