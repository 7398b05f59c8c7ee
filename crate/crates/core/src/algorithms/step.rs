//! One outer iteration's building blocks: local corrections, the combined
//! update and the backtracking loop on the step size.

use rayon::prelude::*;

use crate::algorithms::SolverConfig;
use crate::decomposition::Decomposition;
use crate::error::{check_len, Error, Result};
use crate::framework::{eval_energy, Coefficients, ProblemInstance};

#[derive(Clone, Debug)]
pub struct LocalCorrection {
    pub w: Coefficients,
    /// `E(base + R_k^* w_k)`
    pub energy: f64,
}

/// Solves every local problem at `base`. The solves may run concurrently;
/// results are returned in subspace order.
pub fn compute_local_corrections(problem: &ProblemInstance, base: &[f64], omega: f64) -> Result<Vec<LocalCorrection>> {
    check_len(problem.n_dof(), base.len())?;
    let model = problem.model.as_ref();
    let decomp = problem.decomposition.as_ref();
    (0..decomp.len())
        .into_par_iter()
        .map(|k| {
            let w = model.local_solve(k, base, omega)?;
            let sub = decomp.subspace(k);
            if w.len() != sub.dim() || !w.is_finite() {
                return Err(Error::LocalSolve {
                    k,
                    reason: "correction has the wrong length or non-finite entries".into(),
                });
            }
            let mut trial = base.to_vec();
            sub.prolong_add(&w, 1.0, &mut trial)?;
            let energy = eval_energy(model, &trial)?;
            Ok(LocalCorrection { w, energy })
        })
        .collect()
}

/// `sum_k R_k^* w_k`, accumulated in ascending `k`.
pub fn sum_corrections(decomp: &Decomposition, corrections: &[LocalCorrection]) -> Result<Coefficients> {
    check_len(decomp.len(), corrections.len())?;
    let mut s = Coefficients::zeros(decomp.n_global());
    for (sub, c) in decomp.subspaces().iter().zip(corrections) {
        sub.prolong_add(&c.w, 1.0, &mut s)?;
    }
    Ok(s)
}

/// `base + tau * sum_k R_k^* w_k`.
pub fn apply_step(
    decomp: &Decomposition,
    base: &[f64],
    corrections: &[LocalCorrection],
    tau: f64,
) -> Result<Coefficients> {
    let s = sum_corrections(decomp, corrections)?;
    base_plus(base, tau, &s)
}

fn base_plus(base: &[f64], tau: f64, s: &[f64]) -> Result<Coefficients> {
    check_len(base.len(), s.len())?;
    Ok(base.iter().zip(s).map(|(b, d)| b + tau * d).collect())
}

/// `E_next <= (1 - tau N) E_base + tau sum_k E_k + slack (1 + |E_base|)`.
///
/// A non-finite `E_next` is always rejected. A right-hand side that is not a
/// finite number (an infeasible base) accepts any finite `E_next`.
pub fn stop_criterion(e_next: f64, e_base: f64, subspace_energies: &[f64], tau: f64, slack: f64) -> bool {
    if !e_next.is_finite() {
        return false;
    }
    let n = subspace_energies.len() as f64;
    let sum: f64 = subspace_energies.iter().sum();
    let rhs = (1.0 - tau * n) * e_base + tau * sum + slack * (1.0 + e_base.abs());
    if rhs.is_nan() || rhs == f64::INFINITY {
        return true;
    }
    e_next <= rhs
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Trial {
    pub tau: f64,
    pub energy: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug)]
pub struct BacktrackOutcome {
    pub u_next: Coefficients,
    pub energy: f64,
    pub tau: f64,
    /// `tau = tau0 * rho^rung`.
    pub rung: i32,
    pub trials: Vec<Trial>,
}

/// Step sizes live on the ladder `tau0 * rho^k`; `rung_prev` is the rung of the
/// previously accepted step. The first trial is one rung up (`tau_prev / rho`),
/// each rejection moves one rung down.
pub fn backtracking_search(
    problem: &ProblemInstance,
    base: &[f64],
    e_base: f64,
    corrections: &[LocalCorrection],
    rung_prev: i32,
    cfg: &SolverConfig,
) -> Result<BacktrackOutcome> {
    let decomp = problem.decomposition.as_ref();
    let s = sum_corrections(decomp, corrections)?;
    let energies: Vec<f64> = corrections.iter().map(|c| c.energy).collect();
    let mut trials = Vec::new();
    let mut rung = rung_prev - 1;
    loop {
        if trials.len() >= cfg.max_backtrack_trials {
            return Err(Error::BacktrackDiverged {
                trials: trials.len(),
                ladder: trials.iter().map(|t: &Trial| t.tau).collect(),
            });
        }
        let tau = cfg.tau0 * cfg.rho.powi(rung);
        let u_next = base_plus(base, tau, &s)?;
        let energy = problem.energy(&u_next)?;
        let accepted = stop_criterion(energy, e_base, &energies, tau, cfg.energy_slack);
        trials.push(Trial { tau, energy, accepted });
        if accepted {
            return Ok(BacktrackOutcome {
                u_next,
                energy,
                tau,
                rung,
                trials,
            });
        }
        rung += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::quadratic::toy_instance;

    #[test]
    fn toy_corrections_from_origin() {
        let p = toy_instance().unwrap();
        let c = compute_local_corrections(&p, &[0.0, 0.0], 1.0).unwrap();
        assert_eq!(c.len(), 2);
        for ck in &c {
            assert!((ck.w[0] - 0.5).abs() < 1e-15);
            assert!((ck.energy + 0.25).abs() < 1e-15);
        }
        let u = apply_step(&p.decomposition, &[0.0, 0.0], &c, 0.5).unwrap();
        assert_eq!(&u[..], &[0.25, 0.25]);
        let zeros: Vec<LocalCorrection> = c
            .iter()
            .map(|ck| LocalCorrection {
                w: Coefficients::zeros(1),
                energy: ck.energy,
            })
            .collect();
        let same = apply_step(&p.decomposition, &[0.3, -0.1], &zeros, 7.0).unwrap();
        assert_eq!(&same[..], &[0.3, -0.1]);
    }

    #[test]
    fn corrections_vanish_at_minimizer() {
        let p = toy_instance().unwrap();
        let u = [1.0 / 3.0, 1.0 / 3.0];
        for c in compute_local_corrections(&p, &u, 1.0).unwrap() {
            assert!(c.w[0].abs() < 1e-15);
            assert!((c.energy + 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn criterion_on_the_toy() {
        assert!(!stop_criterion(-0.25, 0.0, &[-0.25, -0.25], 1.0, 1e-12));
        assert!(stop_criterion(-0.3125, 0.0, &[-0.25, -0.25], 0.5, 1e-12));
        // tau -> 0 limit
        assert!(stop_criterion(1.0, 1.0, &[0.5, 0.5], 0.0, 1e-12));
        assert!(!stop_criterion(f64::INFINITY, 0.0, &[0.0], 0.1, 1e-12));
        assert!(!stop_criterion(f64::NAN, 0.0, &[0.0], 0.1, 1e-12));
        assert!(stop_criterion(5.0, f64::INFINITY, &[1.0], 0.5, 1e-12));
    }

    #[test]
    fn toy_ladders() {
        let p = toy_instance().unwrap();
        let base = [0.0, 0.0];
        let c = compute_local_corrections(&p, &base, 1.0).unwrap();
        for (rho, first) in [(0.5, 1.0), (0.7, 0.5 / 0.7)] {
            let cfg = SolverConfig::new(0.5, rho, 10);
            let out = backtracking_search(&p, &base, 0.0, &c, 0, &cfg).unwrap();
            let taus: Vec<f64> = out.trials.iter().map(|t| t.tau).collect();
            assert_eq!(taus, vec![first, 0.5]);
            assert_eq!(
                out.trials.iter().map(|t| t.accepted).collect::<Vec<_>>(),
                vec![false, true]
            );
            assert_eq!(out.tau, 0.5);
            assert_eq!(out.rung, 0);
            assert_eq!(&out.u_next[..], &[0.25, 0.25]);
        }
    }

    #[test]
    fn zero_corrections_accept_first_trial() {
        let p = toy_instance().unwrap();
        let u = [1.0 / 3.0, 1.0 / 3.0];
        let e = p.energy(&u).unwrap();
        let c = compute_local_corrections(&p, &u, 1.0).unwrap();
        let out = backtracking_search(&p, &u, e, &c, 0, &SolverConfig::new(0.5, 0.5, 1)).unwrap();
        assert_eq!(out.trials.len(), 1);
        assert_eq!(out.rung, -1);
    }

    #[test]
    fn trial_cap_reports_ladder() {
        let p = toy_instance().unwrap();
        let c = compute_local_corrections(&p, &[0.0, 0.0], 1.0).unwrap();
        let mut cfg = SolverConfig::new(0.5, 0.5, 1);
        cfg.max_backtrack_trials = 1;
        match backtracking_search(&p, &[0.0, 0.0], 0.0, &c, 0, &cfg) {
            Err(Error::BacktrackDiverged { trials, ladder }) => {
                assert_eq!(trials, 1);
                assert_eq!(ladder, vec![1.0]);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
