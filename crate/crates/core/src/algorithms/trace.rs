use crate::algorithms::Algorithm;
use crate::framework::Coefficients;

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub n: usize,
    /// `E(u^(n))`
    pub energy: f64,
    /// Accepted step size.
    pub tau: f64,
    pub backtrack_trials: usize,
    /// Gradient restart of the momentum driver.
    pub restarted: bool,
    /// Momentum dropped because the extrapolated point left `dom G`.
    pub feasibility_reset: bool,
    /// Momentum parameter `t_n` after the step (1 for the other drivers).
    pub t: f64,
    pub beta: f64,
    pub elapsed_ms: f64,
}

#[derive(Clone, Debug)]
pub struct Trace {
    pub algorithm: Algorithm,
    pub tau0: f64,
    pub rho: f64,
    pub initial_energy: f64,
    pub records: Vec<IterationRecord>,
    pub final_iterate: Coefficients,
}

impl Trace {
    pub fn energies(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.energy).collect()
    }

    pub fn taus(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.tau).collect()
    }

    pub fn final_energy(&self) -> f64 {
        self.records.last().map_or(self.initial_energy, |r| r.energy)
    }

    pub fn min_energy(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.energy)
            .fold(self.initial_energy, f64::min)
    }

    pub fn total_backtrack_trials(&self) -> usize {
        self.records.iter().map(|r| r.backtrack_trials).sum()
    }

    pub fn restart_count(&self) -> usize {
        self.records.iter().filter(|r| r.restarted).count()
    }

    /// First `n` with `(E_n - e_star) / (E_0 - e_star) <= threshold`.
    pub fn iterations_to(&self, e_star: f64, threshold: f64) -> Option<usize> {
        let scale = self.initial_energy - e_star;
        if scale <= 0.0 {
            return Some(0);
        }
        self.records
            .iter()
            .find(|r| (r.energy - e_star) / scale <= threshold)
            .map(|r| r.n)
    }
}
