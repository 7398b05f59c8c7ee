use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::algorithms::{Algorithm, Trace};
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "n,energy,energy_error,tau,backtrack_trials,restarted,elapsed_ms";

/// Relative energy error levels reported in summaries.
pub const THRESHOLDS: [f64; 3] = [1e-2, 1e-4, 1e-6];

/// One row per outer iteration. `energy_error` is `E - E*` clipped at zero;
/// `elapsed_ms` is left empty unless `timing` is set.
pub fn trace_csv(trace: &Trace, e_star: f64, timing: bool) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER.split(',')).expect("in-memory write");
    for r in &trace.records {
        let elapsed = if timing {
            format!("{:.3}", r.elapsed_ms)
        } else {
            String::new()
        };
        w.write_record([
            r.n.to_string(),
            r.energy.to_string(),
            (r.energy - e_star).max(0.0).to_string(),
            r.tau.to_string(),
            r.backtrack_trials.to_string(),
            u8::from(r.restarted).to_string(),
            elapsed,
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

pub fn write_trace(trace: &Trace, e_star: f64, path: &Path, timing: bool) -> Result<()> {
    write_file(path, &trace_csv(trace, e_star, timing))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub problem: String,
    pub algorithm: String,
    pub rho: f64,
    pub tau0: f64,
    #[serde(rename = "E_star")]
    pub e_star: f64,
    pub iters_to_1e2: Option<usize>,
    pub iters_to_1e4: Option<usize>,
    pub iters_to_1e6: Option<usize>,
    pub total_backtrack_trials: usize,
    pub restart_count: usize,
}

pub fn summarize(problem: &str, trace: &Trace, e_star: f64) -> Summary {
    let [a, b, c] = THRESHOLDS.map(|t| trace.iterations_to(e_star, t));
    Summary {
        problem: problem.to_string(),
        algorithm: trace.algorithm.to_string(),
        rho: trace.rho,
        tau0: trace.tau0,
        e_star,
        iters_to_1e2: a,
        iters_to_1e4: b,
        iters_to_1e6: c,
        total_backtrack_trials: trace.total_backtrack_trials(),
        restart_count: trace.restart_count(),
    }
}

pub fn write_summary(summary: &Summary, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(summary).expect("summary serializes");
    write_file(path, &(text + "\n"))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub algorithm: String,
    pub rho: f64,
    /// Iterations to each of [`THRESHOLDS`]; `None` if never reached.
    pub iterations: [Option<usize>; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub fingerprint: String,
    pub e_star: f64,
    pub rows: Vec<ComparisonRow>,
    pub violations: Vec<String>,
}

impl ComparisonReport {
    pub fn render(&self) -> String {
        let mut out = format!("E* = {}\n{:<14}{:>6}", self.e_star, "algorithm", "rho");
        for t in THRESHOLDS {
            out += &format!("{:>10}", format!("{t:e}"));
        }
        out.push('\n');
        for r in &self.rows {
            out += &format!("{:<14}{:>6}", r.algorithm, r.rho);
            for it in r.iterations {
                out += &format!("{:>10}", it.map_or("-".to_string(), |n| n.to_string()));
            }
            out.push('\n');
        }
        if self.violations.is_empty() {
            out += "ordering: ok\n";
        }
        for v in &self.violations {
            out += &format!("ordering violation: {v}\n");
        }
        out
    }
}

/// Tabulates iterations per threshold and flags momentum slower than
/// backtracking, or backtracking slower than plain by more than 5%.
/// An unreached threshold counts as more iterations than any run performed.
pub fn summarize_comparison(entries: &[(&str, &Trace)], e_star: f64) -> Result<ComparisonReport> {
    let Some((fingerprint, _)) = entries.first() else {
        return Err(Error::config("nothing to compare"));
    };
    if entries.iter().any(|(f, _)| f != fingerprint) {
        return Err(Error::config("traces come from different problem instances"));
    }
    let never = entries.iter().map(|(_, t)| t.records.len()).max().unwrap_or(0) + 1;
    let rows: Vec<ComparisonRow> = entries
        .iter()
        .map(|(_, t)| ComparisonRow {
            algorithm: t.algorithm.to_string(),
            rho: t.rho,
            iterations: THRESHOLDS.map(|th| t.iterations_to(e_star, th)),
        })
        .collect();
    let count = |r: &ComparisonRow, i: usize| r.iterations[i].unwrap_or(never) as f64;
    let find = |a: Algorithm| rows.iter().filter(move |r| r.algorithm == a.as_str());
    let mut violations = Vec::new();
    for (i, th) in THRESHOLDS.iter().enumerate() {
        for bt in find(Algorithm::Backtracking) {
            for pl in find(Algorithm::Plain) {
                if count(bt, i) > 1.05 * count(pl, i) {
                    violations.push(format!("at {th:e}: backtracking (rho {}) slower than plain", bt.rho));
                }
            }
            for mo in find(Algorithm::Momentum).filter(|m| m.rho == bt.rho) {
                if count(mo, i) > count(bt, i) {
                    violations.push(format!("at {th:e}: momentum slower than backtracking (rho {})", bt.rho));
                }
            }
        }
    }
    Ok(ComparisonReport {
        fingerprint: fingerprint.to_string(),
        e_star,
        rows,
        violations,
    })
}
