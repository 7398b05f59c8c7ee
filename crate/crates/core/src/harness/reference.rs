use std::collections::BTreeMap;
use std::ops::ControlFlow;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::algorithms::{run_momentum_observed, SolverConfig};
use crate::error::{Error, Result};
use crate::framework::ProblemInstance;

/// A run is considered stalled when its best energy improves by no more than
/// `STALL_TOL (1 + |E|)` over `STALL_WINDOW` iterations.
const STALL_WINDOW: usize = 100;
const STALL_TOL: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRecord {
    pub fingerprint: String,
    pub e_star: f64,
    pub iterations: usize,
    /// Best-energy improvement over the last stall window (0 when stalled).
    pub tolerance: f64,
}

/// Minimum energy seen by a momentum run (`rho = 0.5`, exact local solves) of
/// at most `budget` iterations. Stops early once the run stalls.
pub fn compute_reference(problem: &ProblemInstance, budget: usize) -> Result<ReferenceRecord> {
    let cfg = SolverConfig::new(problem.decomposition.tau0(), 0.5, budget);
    let e0 = problem.energy(&problem.initial_iterate)?;
    let mut best = e0;
    let mut history = vec![e0];
    let mut iterations = 0;
    let mut stalled = false;
    run_momentum_observed(problem, &cfg, |s| {
        best = best.min(s.energy);
        history.push(best);
        iterations = s.n;
        if s.n >= STALL_WINDOW && history[s.n - STALL_WINDOW] - best <= STALL_TOL * (1.0 + best.abs()) {
            stalled = true;
            return ControlFlow::Break(());
        }
        ControlFlow::Continue(())
    })?;
    let n = history.len() - 1;
    let tolerance = if stalled {
        0.0
    } else {
        history[n.saturating_sub(STALL_WINDOW)] - best
    };
    Ok(ReferenceRecord {
        fingerprint: problem.fingerprint.clone(),
        e_star: best,
        iterations,
        tolerance,
    })
}

/// JSON file mapping fingerprints to reference records.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ReferenceCache {
    pub records: BTreeMap<String, ReferenceRecord>,
}

impl ReferenceCache {
    pub fn load(path: &Path) -> Result<Self> {
        match std::fs::read_to_string(path) {
            Ok(text) => serde_json::from_str(&text)
                .map_err(|e| Error::config(format!("corrupt reference cache {}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let text = serde_json::to_string_pretty(self).expect("records serialize");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Cached reference for `problem`, computed and stored on a miss.
pub fn reference_for(problem: &ProblemInstance, budget: usize, cache: Option<&Path>) -> Result<ReferenceRecord> {
    let Some(path) = cache else {
        return compute_reference(problem, budget);
    };
    let mut store = ReferenceCache::load(path)?;
    if let Some(r) = store.records.get(&problem.fingerprint) {
        return Ok(r.clone());
    }
    let r = compute_reference(problem, budget)?;
    store.records.insert(r.fingerprint.clone(), r.clone());
    store.save(path)?;
    Ok(r)
}
