use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use crate::algorithms::Algorithm;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProblemKind {
    Slap,
    Obstacle,
    DualTv,
    /// The two-dimensional quadratic toy.
    Quadratic,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 4] = [
        ProblemKind::Slap,
        ProblemKind::Obstacle,
        ProblemKind::DualTv,
        ProblemKind::Quadratic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProblemKind::Slap => "slap",
            ProblemKind::Obstacle => "obstacle",
            ProblemKind::DualTv => "dualtv",
            ProblemKind::Quadratic => "quadratic",
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProblemKind::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown problem `{s}` (slap, obstacle, dualtv, quadratic)")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    pub algorithm: Algorithm,
    pub m: usize,
    pub coarse_m: usize,
    pub delta_layers: usize,
    pub rho: f64,
    pub omega: f64,
    pub max_outer: usize,
    pub seed: u64,
    /// Noise level of the dual-TV datum.
    pub noise: f64,
    pub out_dir: Option<PathBuf>,
    pub reference_cache: Option<PathBuf>,
    /// Fill the `elapsed_ms` column; off by default so traces are reproducible.
    pub timing: bool,
}

impl ExperimentConfig {
    /// Full-size defaults for `problem`.
    pub fn new(problem: ProblemKind) -> Self {
        ExperimentConfig {
            problem,
            algorithm: Algorithm::Backtracking,
            m: 65,
            coarse_m: 9,
            delta_layers: 4,
            rho: 0.5,
            omega: 1.0,
            max_outer: 300,
            seed: 0,
            noise: 0.0,
            out_dir: None,
            reference_cache: None,
            timing: false,
        }
    }

    /// Defaults, then the file's values, then `overrides`.
    pub fn resolve(file: Option<&Path>, overrides: &ConfigOverrides) -> Result<Self> {
        let from_file = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::config(format!("config file {}: {e}", path.display())))?;
                ConfigOverrides::from_toml(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?
            }
            None => ConfigOverrides::default(),
        };
        let merged = from_file.overlay(overrides);
        let problem = merged
            .problem
            .as_deref()
            .ok_or_else(|| Error::config("missing required key `problem`"))?
            .parse()?;
        let mut cfg = ExperimentConfig::new(problem);
        if let Some(a) = &merged.algorithm {
            cfg.algorithm = a.parse()?;
        }
        macro_rules! take {
            ($($field:ident => $target:ident),*) => {
                $(if let Some(v) = merged.$field.clone() { cfg.$target = v; })*
            };
        }
        take!(m => m, coarse_m => coarse_m, overlap => delta_layers, rho => rho, omega => omega,
              iters => max_outer, seed => seed, noise => noise, timing => timing);
        if let Some(p) = &merged.out {
            cfg.out_dir = Some(p.clone());
        }
        if let Some(p) = &merged.reference_cache {
            cfg.reference_cache = Some(p.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, why: String| Err(Error::config(format!("`{key}`: {why}")));
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad("rho", format!("{} is outside (0, 1)", self.rho));
        }
        if !(self.omega >= 1.0 && self.omega.is_finite()) {
            return bad("omega", format!("{} must be at least 1", self.omega));
        }
        if self.max_outer == 0 {
            return bad("iters", "must be positive".into());
        }
        if self.m < 3 {
            return bad("m", format!("{} is below 3", self.m));
        }
        if self.coarse_m < 3 || self.coarse_m >= self.m || !(self.m - 1).is_multiple_of(self.coarse_m - 1) {
            return bad(
                "coarse_m",
                format!(
                    "{} must satisfy 3 <= coarse_m < m with (m-1) divisible by (coarse_m-1)",
                    self.coarse_m
                ),
            );
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise", format!("{} must be nonnegative", self.noise));
        }
        Ok(())
    }
}

/// Optional values from a config file or the command line. Config files use
/// the same key names as the long flags, with `-` written as `_`.
#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub problem: Option<String>,
    pub algorithm: Option<String>,
    pub m: Option<usize>,
    pub coarse_m: Option<usize>,
    pub overlap: Option<usize>,
    pub rho: Option<f64>,
    pub omega: Option<f64>,
    pub iters: Option<usize>,
    pub seed: Option<u64>,
    pub noise: Option<f64>,
    pub out: Option<PathBuf>,
    pub reference_cache: Option<PathBuf>,
    pub timing: Option<bool>,
}

impl ConfigOverrides {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.message().to_string()))
    }

    /// Values of `top` win where present.
    pub fn overlay(&self, top: &ConfigOverrides) -> ConfigOverrides {
        macro_rules! pick {
            ($($f:ident),*) => { ConfigOverrides { $($f: top.$f.clone().or_else(|| self.$f.clone()),)* } };
        }
        pick!(
            problem,
            algorithm,
            m,
            coarse_m,
            overlap,
            rho,
            omega,
            iters,
            seed,
            noise,
            out,
            reference_cache,
            timing
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cli(problem: &str) -> ConfigOverrides {
        ConfigOverrides {
            problem: Some(problem.into()),
            ..Default::default()
        }
    }

    #[test]
    fn full_scale_from_flags() {
        let o = ConfigOverrides {
            problem: Some("slap".into()),
            algorithm: Some("backtracking".into()),
            m: Some(65),
            coarse_m: Some(9),
            overlap: Some(4),
            rho: Some(0.5),
            ..Default::default()
        };
        let c = ExperimentConfig::resolve(None, &o).unwrap();
        assert_eq!(c.problem, ProblemKind::Slap);
        assert_eq!(c.algorithm, Algorithm::Backtracking);
        assert_eq!((c.m, c.coarse_m, c.delta_layers, c.rho), (65, 9, 4, 0.5));
    }

    #[test]
    fn missing_problem() {
        let e = ExperimentConfig::resolve(None, &ConfigOverrides::default()).unwrap_err();
        assert!(matches!(e, Error::Config(ref s) if s.contains("problem")));
    }

    #[test]
    fn bad_rho_names_the_key() {
        let mut o = cli("obstacle");
        o.rho = Some(1.2);
        let e = ExperimentConfig::resolve(None, &o).unwrap_err();
        assert!(matches!(e, Error::Config(ref s) if s.contains("rho")));
    }

    #[test]
    fn file_values_overridden_by_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.toml");
        std::fs::write(&path, "problem = \"obstacle\"\nm = 33\ncoarse_m = 5\nrho = 0.7\n").unwrap();
        let o = ConfigOverrides {
            rho: Some(0.9),
            ..Default::default()
        };
        let c = ExperimentConfig::resolve(Some(&path), &o).unwrap();
        assert_eq!(c.problem, ProblemKind::Obstacle);
        assert_eq!(c.m, 33);
        assert_eq!(c.rho, 0.9);
    }

    #[test]
    fn unknown_file_key_rejected() {
        let e = ConfigOverrides::from_toml("problem = \"slap\"\nmesh_size = 3\n").unwrap_err();
        assert!(matches!(e, Error::Config(ref s) if s.contains("mesh_size")));
    }

    #[test]
    fn incompatible_coarse_mesh() {
        let mut o = cli("slap");
        o.m = Some(33);
        o.coarse_m = Some(7);
        assert!(ExperimentConfig::resolve(None, &o).is_err());
    }

    #[test]
    fn unknown_names() {
        assert!(ExperimentConfig::resolve(None, &cli("heat")).is_err());
        let mut o = cli("slap");
        o.algorithm = Some("newton".into());
        assert!(ExperimentConfig::resolve(None, &o).is_err());
    }
}
