use std::ops::ControlFlow;
use std::time::Instant;

use crate::algorithms::step::{apply_step, backtracking_search, compute_local_corrections};
use crate::algorithms::{Algorithm, IterationRecord, SolverConfig, Trace};
use crate::error::{check_len, Error, Result};
use crate::framework::{Coefficients, ProblemInstance};

/// Steps beyond this are never tried. Without a ceiling the ladder would climb
/// to overflow once the corrections vanish at a fixed point.
const MAX_TAU: f64 = 1e100;

pub fn run(problem: &ProblemInstance, cfg: &SolverConfig, algorithm: Algorithm) -> Result<Trace> {
    match algorithm {
        Algorithm::Plain => run_plain(problem, cfg, cfg.tau0),
        Algorithm::Backtracking => run_backtracking(problem, cfg),
        Algorithm::Momentum => run_momentum(problem, cfg),
    }
}

struct Recorder {
    start: Instant,
    initial_energy: f64,
    records: Vec<IterationRecord>,
}

impl Recorder {
    fn new(initial_energy: f64) -> Self {
        Recorder {
            start: Instant::now(),
            initial_energy,
            records: Vec::new(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        n: usize,
        energy: f64,
        tau: f64,
        trials: usize,
        restarted: bool,
        reset: bool,
        t: f64,
        beta: f64,
    ) {
        self.records.push(IterationRecord {
            n,
            energy,
            tau,
            backtrack_trials: trials,
            restarted,
            feasibility_reset: reset,
            t,
            beta,
            elapsed_ms: self.start.elapsed().as_secs_f64() * 1e3,
        });
    }

    fn reached(&self, cfg: &SolverConfig, energy: f64) -> bool {
        cfg.target.is_some_and(|t| {
            let scale = self.initial_energy - t.e_star;
            scale <= 0.0 || (energy - t.e_star) / scale <= t.rel_error
        })
    }

    fn finish(self, algorithm: Algorithm, cfg: &SolverConfig, u: Coefficients) -> Trace {
        Trace {
            algorithm,
            tau0: cfg.tau0,
            rho: cfg.rho,
            initial_energy: self.initial_energy,
            records: self.records,
            final_iterate: u,
        }
    }
}

fn initial_state(problem: &ProblemInstance, cfg: &SolverConfig) -> Result<(Coefficients, f64)> {
    cfg.validate()?;
    let u = problem.initial_iterate.clone();
    let e = problem.energy(&u)?;
    if !e.is_finite() {
        return Err(Error::config("initial iterate has infinite energy"));
    }
    Ok((u, e))
}

fn lowest_rung(cfg: &SolverConfig) -> i32 {
    ((MAX_TAU / cfg.tau0).ln() / cfg.rho.ln()).ceil() as i32
}

/// Constant step size `tau <= tau0`.
pub fn run_plain(problem: &ProblemInstance, cfg: &SolverConfig, tau: f64) -> Result<Trace> {
    let (mut u, e0) = initial_state(problem, cfg)?;
    if !(tau > 0.0 && tau <= cfg.tau0) {
        return Err(Error::config(format!(
            "plain step {tau} outside (0, tau0 = {}]",
            cfg.tau0
        )));
    }
    let mut rec = Recorder::new(e0);
    for n in 1..=cfg.max_outer {
        if rec.reached(cfg, rec.records.last().map_or(e0, |r| r.energy)) {
            break;
        }
        let corrections = compute_local_corrections(problem, &u, cfg.omega)?;
        u = apply_step(&problem.decomposition, &u, &corrections, tau)?;
        let e = problem.energy(&u)?;
        if !e.is_finite() {
            return Err(Error::Numerical(format!("plain step left dom G at iteration {n}")));
        }
        rec.push(n, e, tau, 0, false, false, 1.0, 0.0);
    }
    Ok(rec.finish(Algorithm::Plain, cfg, u))
}

pub fn run_backtracking(problem: &ProblemInstance, cfg: &SolverConfig) -> Result<Trace> {
    let (mut u, mut e) = initial_state(problem, cfg)?;
    let floor = lowest_rung(cfg);
    let mut rung = 0;
    let mut rec = Recorder::new(e);
    for n in 1..=cfg.max_outer {
        if rec.reached(cfg, e) {
            break;
        }
        let corrections = compute_local_corrections(problem, &u, cfg.omega)?;
        let out = backtracking_search(problem, &u, e, &corrections, rung.max(floor + 1), cfg)?;
        rung = out.rung;
        u = out.u_next;
        e = out.energy;
        rec.push(n, e, out.tau, out.trials.len(), false, false, 1.0, 0.0);
    }
    Ok(rec.finish(Algorithm::Backtracking, cfg, u))
}

/// `t_{n+1} = (1 + sqrt(1 + 4 t^2)) / 2` and `beta = (t - 1) / t_{n+1}`.
pub fn momentum_update(t: f64) -> (f64, f64) {
    let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
    (t_next, (t - 1.0) / t_next)
}

/// Strict test `<v - u_next, u_next - u_prev> > 0`.
pub fn restart_test(v: &[f64], u_next: &[f64], u_prev: &[f64]) -> Result<bool> {
    check_len(v.len(), u_next.len())?;
    check_len(v.len(), u_prev.len())?;
    let s: f64 = v
        .iter()
        .zip(u_next.iter().zip(u_prev))
        .map(|(a, (b, c))| (a - b) * (b - c))
        .sum();
    Ok(s > 0.0)
}

/// State handed to a momentum observer after each outer iteration.
#[derive(Debug)]
pub struct MomentumStep<'a> {
    pub n: usize,
    /// Extrapolated point the corrections were computed at.
    pub v: &'a [f64],
    pub u_next: &'a [f64],
    /// `E(u_next)`
    pub energy: f64,
    pub u_prev: &'a [f64],
    pub v_next: &'a [f64],
    pub t_next: f64,
    pub beta: f64,
    pub restarted: bool,
    pub feasibility_reset: bool,
}

pub fn run_momentum(problem: &ProblemInstance, cfg: &SolverConfig) -> Result<Trace> {
    run_momentum_observed(problem, cfg, |_| ControlFlow::Continue(()))
}

/// Momentum driver with gradient restart. If the extrapolated point has
/// infinite energy the momentum is dropped for that step (`v = u`, `t = 1`),
/// which is recorded as a feasibility reset rather than a restart.
/// The observer sees every step and may end the run early.
pub fn run_momentum_observed(
    problem: &ProblemInstance,
    cfg: &SolverConfig,
    mut observer: impl FnMut(&MomentumStep<'_>) -> ControlFlow<()>,
) -> Result<Trace> {
    let (mut u, e0) = initial_state(problem, cfg)?;
    let floor = lowest_rung(cfg);
    let mut v = u.clone();
    let mut e_v = e0;
    let mut e_u = e0;
    let mut t = 1.0;
    let mut rung = 0;
    let mut rec = Recorder::new(e0);
    for n in 1..=cfg.max_outer {
        if rec.reached(cfg, e_u) {
            break;
        }
        let corrections = compute_local_corrections(problem, &v, cfg.omega)?;
        let out = backtracking_search(problem, &v, e_v, &corrections, rung.max(floor + 1), cfg)?;
        rung = out.rung;
        let u_next = out.u_next;
        let restarted = restart_test(&v, &u_next, &u)?;
        let (mut t_next, mut beta) = if restarted { (1.0, 0.0) } else { momentum_update(t) };
        let mut v_next: Coefficients = u_next.iter().zip(u.iter()).map(|(a, b)| a + beta * (a - b)).collect();
        let mut e_v_next = if beta == 0.0 {
            out.energy
        } else {
            problem.energy(&v_next)?
        };
        let mut reset = false;
        if !e_v_next.is_finite() {
            v_next = u_next.clone();
            e_v_next = out.energy;
            t_next = 1.0;
            beta = 0.0;
            reset = true;
        }
        let flow = observer(&MomentumStep {
            n,
            v: &v,
            u_next: &u_next,
            energy: out.energy,
            u_prev: &u,
            v_next: &v_next,
            t_next,
            beta,
            restarted,
            feasibility_reset: reset,
        });
        rec.push(n, out.energy, out.tau, out.trials.len(), restarted, reset, t_next, beta);
        u = u_next;
        v = v_next;
        e_u = out.energy;
        e_v = e_v_next;
        t = t_next;
        if flow.is_break() {
            break;
        }
    }
    Ok(rec.finish(Algorithm::Momentum, cfg, u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::{Decomposition, Subspace};
    use crate::problems::quadratic::{toy_instance, QuadraticModel};
    use std::sync::Arc;

    #[test]
    fn fista_values() {
        let (t1, b1) = momentum_update(1.0);
        assert!((t1 - 1.618034).abs() < 1e-6);
        assert_eq!(b1, 0.0);
        let (t2, b2) = momentum_update(1.618034);
        assert!((t2 - 2.193527).abs() < 1e-6);
        assert!((b2 - 0.281754).abs() < 1e-6);
        let (t3, b3) = momentum_update(10.0);
        assert!((t3 - 10.512492).abs() < 1e-6);
        assert!((b3 - 0.856124).abs() < 1e-6);
    }

    #[test]
    fn restart_examples() {
        assert!(restart_test(&[2.0, 0.0], &[1.0, 0.0], &[0.0, 0.0]).unwrap());
        assert!(!restart_test(&[2.0, 0.0], &[1.0, 0.0], &[2.0, 0.0]).unwrap());
        assert!(!restart_test(&[1.0, 3.0], &[1.0, 3.0], &[0.0, 0.0]).unwrap());
        assert!(restart_test(&[1.0], &[1.0, 0.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn plain_toy_sequence() {
        let p = toy_instance().unwrap();
        let tr = run_plain(&p, &SolverConfig::new(0.5, 0.5, 60), 0.5).unwrap();
        let e = tr.energies();
        assert_eq!(tr.initial_energy, 0.0);
        assert!((e[0] + 0.3125).abs() < 1e-15);
        assert!(e.windows(2).all(|w| w[1] <= w[0]));
        assert!((tr.final_energy() + 1.0 / 3.0).abs() < 1e-12);
        assert!(tr.taus().iter().all(|&t| t == 0.5));
    }

    #[test]
    fn plain_rejects_oversized_step() {
        let p = toy_instance().unwrap();
        assert!(run_plain(&p, &SolverConfig::new(0.5, 0.5, 5), 0.6).is_err());
    }

    #[test]
    fn start_at_minimizer_gives_constant_trace() {
        let m = QuadraticModel::new(vec![2.0, 1.0, 1.0, 2.0], vec![1.0, 1.0], vec![vec![0], vec![1]]).unwrap();
        let d = Arc::new(m.decomposition().unwrap());
        let p = ProblemInstance::new(Box::new(m), d, vec![1.0 / 3.0; 2].into(), "toy", "x").unwrap();
        for alg in Algorithm::ALL {
            let tr = run(&p, &SolverConfig::new(0.5, 0.5, 200), alg).unwrap();
            assert!(tr.energies().iter().all(|&e| (e + 1.0 / 3.0).abs() < 1e-15), "{alg}");
        }
    }

    #[test]
    fn decoupled_problem_solved_in_one_step() {
        let m = QuadraticModel::new(vec![2.0, 0.0, 0.0, 4.0], vec![1.0, 1.0], vec![vec![0], vec![1]]).unwrap();
        let d = m.decomposition().unwrap();
        assert_eq!(d.tau0(), 1.0);
        let p = ProblemInstance::new(Box::new(m), Arc::new(d), vec![0.0; 2].into(), "diag", "x").unwrap();
        let tr = run_plain(&p, &SolverConfig::new(1.0, 0.5, 1), 1.0).unwrap();
        assert_eq!(&tr.final_iterate[..], &[0.5, 0.25]);
    }

    #[test]
    fn backtracking_toy_converges_with_floor() {
        let p = toy_instance().unwrap();
        for rho in [0.5, 0.7, 0.9] {
            let tr = run_backtracking(&p, &SolverConfig::new(0.5, rho, 50)).unwrap();
            assert!(tr.taus().iter().all(|&t| t >= 0.5));
            assert!((tr.final_energy() + 1.0 / 3.0).abs() < 1e-10);
            let e = tr.energies();
            assert!(e.windows(2).all(|w| w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs())));
        }
    }

    #[test]
    fn momentum_first_step_matches_backtracking() {
        let p = toy_instance().unwrap();
        let cfg = SolverConfig::new(0.5, 0.5, 1);
        let a = run_backtracking(&p, &cfg).unwrap();
        let b = run_momentum(&p, &cfg).unwrap();
        assert_eq!(a.records[0].energy, b.records[0].energy);
        assert_eq!(a.records[0].tau, b.records[0].tau);
        assert_eq!(b.records[0].beta, 0.0);
    }

    #[test]
    fn momentum_reaches_small_error_no_later_than_backtracking() {
        let p = toy_instance().unwrap();
        let cfg = SolverConfig::new(0.5, 0.5, 40);
        let first = |tr: &Trace| {
            tr.records
                .iter()
                .find(|r| r.energy + 1.0 / 3.0 <= 1e-10)
                .map(|r| r.n)
                .unwrap()
        };
        let m = first(&run_momentum(&p, &cfg).unwrap());
        let b = first(&run_backtracking(&p, &cfg).unwrap());
        assert!(m <= b, "momentum {m}, backtracking {b}");
    }

    #[test]
    fn restart_resets_state() {
        let p = toy_instance().unwrap();
        run_momentum_observed(&p, &SolverConfig::new(0.5, 0.5, 40), |s| {
            if s.restarted {
                assert_eq!(s.t_next, 1.0);
                assert_eq!(s.beta, 0.0);
                assert_eq!(s.v_next, s.u_next);
            }
            ControlFlow::Continue(())
        })
        .unwrap();
    }

    #[test]
    fn target_stops_early() {
        let p = toy_instance().unwrap();
        let mut cfg = SolverConfig::new(0.5, 0.5, 500);
        cfg.target = Some(crate::algorithms::StopTarget {
            e_star: -1.0 / 3.0,
            rel_error: 1e-6,
        });
        let tr = run_backtracking(&p, &cfg).unwrap();
        assert!(tr.records.len() < 500);
        assert_eq!(tr.iterations_to(-1.0 / 3.0, 1e-6), Some(tr.records.len()));
    }

    #[test]
    fn single_subspace_problem() {
        let m = QuadraticModel::new(vec![2.0, 1.0, 1.0, 2.0], vec![1.0, 1.0], vec![vec![0, 1]]).unwrap();
        let d = Decomposition::new(vec![Subspace::injection(vec![0, 1], 2).unwrap()]).unwrap();
        let p = ProblemInstance::new(Box::new(m), Arc::new(d), vec![0.0; 2].into(), "one", "x").unwrap();
        let tr = run_backtracking(&p, &SolverConfig::new(1.0, 0.5, 3)).unwrap();
        assert!((tr.records[0].energy + 1.0 / 3.0).abs() < 1e-15);
    }
}
