use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Plain,
    Backtracking,
    Momentum,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Plain, Algorithm::Backtracking, Algorithm::Momentum];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Plain => "plain",
            Algorithm::Backtracking => "backtracking",
            Algorithm::Momentum => "momentum",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown algorithm `{s}` (plain, backtracking, momentum)")))
    }
}

/// Stop once `(E - e_star) / (E_0 - e_star) <= rel_error`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StopTarget {
    pub e_star: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub tau0: f64,
    pub omega: f64,
    pub rho: f64,
    pub max_outer: usize,
    pub max_backtrack_trials: usize,
    pub energy_slack: f64,
    pub target: Option<StopTarget>,
}

impl SolverConfig {
    pub fn new(tau0: f64, rho: f64, max_outer: usize) -> Self {
        SolverConfig {
            tau0,
            omega: 1.0,
            rho,
            max_outer,
            max_backtrack_trials: 60,
            energy_slack: 1e-12,
            target: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau0 > 0.0 && self.tau0 <= 1.0) {
            return Err(Error::config(format!("tau0 = {} outside (0, 1]", self.tau0)));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::config(format!("rho = {} outside (0, 1)", self.rho)));
        }
        if !(self.omega >= 1.0 && self.omega.is_finite()) {
            return Err(Error::config(format!("omega = {} must be at least 1", self.omega)));
        }
        if self.max_backtrack_trials == 0 {
            return Err(Error::config("max_backtrack_trials must be positive"));
        }
        if !(self.energy_slack >= 0.0 && self.energy_slack.is_finite()) {
            return Err(Error::config("energy_slack must be a nonnegative number"));
        }
        if let Some(t) = self.target {
            if !t.e_star.is_finite() || !(t.rel_error > 0.0) {
                return Err(Error::config("stop target needs a finite E* and a positive tolerance"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(SolverConfig::new(0.2, 0.5, 10).validate().is_ok());
        assert!(SolverConfig::new(0.2, 1.2, 10).validate().is_err());
        assert!(SolverConfig::new(0.2, 1.0, 10).validate().is_err());
        assert!(SolverConfig::new(1.5, 0.5, 10).validate().is_err());
        let mut c = SolverConfig::new(0.2, 0.5, 10);
        c.omega = 0.5;
        assert!(c.validate().is_err());
        c.omega = 1.0;
        c.max_backtrack_trials = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.as_str().parse::<Algorithm>().unwrap(), a);
        }
        assert!("fista".parse::<Algorithm>().is_err());
    }
}
