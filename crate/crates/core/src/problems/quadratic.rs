//! Dense quadratic `F(u) = u^T A u / 2 - b^T u` with block subspaces and exact
//! local solves. Small enough for closed-form checks of the drivers.

use std::sync::Arc;

use crate::decomposition::{coupling_graph, greedy_coloring_graph, Decomposition, Subspace};
use crate::error::{check_len, Error, Result};
use crate::framework::{dot, Coefficients, EnergyModel, ProblemInstance};
use crate::linalg::{dense_spd_solve, SparseMatrix};

#[derive(Clone, Debug)]
pub struct QuadraticModel {
    n: usize,
    /// Row-major.
    a: Vec<f64>,
    b: Vec<f64>,
    blocks: Vec<Vec<usize>>,
}

impl QuadraticModel {
    pub fn new(a: Vec<f64>, b: Vec<f64>, blocks: Vec<Vec<usize>>) -> Result<Self> {
        let n = b.len();
        check_len(n * n, a.len())?;
        for i in 0..n {
            for j in 0..i {
                if a[i * n + j] != a[j * n + i] {
                    return Err(Error::config("quadratic matrix is not symmetric"));
                }
            }
        }
        if blocks.is_empty() {
            return Err(Error::config("quadratic model needs at least one block"));
        }
        for blk in &blocks {
            // validated again by the subspace constructor; checked here so
            // local solves can index without bounds surprises
            Subspace::injection(blk.clone(), n)?;
        }
        Ok(QuadraticModel { n, a, b, blocks })
    }

    pub fn matrix(&self) -> &[f64] {
        &self.a
    }

    pub fn rhs(&self) -> &[f64] {
        &self.b
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    fn apply(&self, u: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| dot(&self.a[i * self.n..(i + 1) * self.n], u))
            .collect()
    }

    /// The block subspaces, coloured by the coupling graph of `A` so that
    /// same-coloured blocks are decoupled in the energy.
    pub fn decomposition(&self) -> Result<Decomposition> {
        let subs = self
            .blocks
            .iter()
            .map(|b| Subspace::injection(b.clone(), self.n))
            .collect::<Result<Vec<_>>>()?;
        let trips = (0..self.n)
            .flat_map(|i| (0..self.n).map(move |j| (i, j)))
            .map(|(i, j)| (i, j, self.a[i * self.n + j]));
        let pattern = SparseMatrix::from_triplets(self.n, self.n, trips)?;
        let colors = greedy_coloring_graph(&coupling_graph(&subs, &pattern));
        Decomposition::with_colors(subs, colors)
    }

    /// The exact minimiser `A^{-1} b`.
    pub fn minimizer(&self) -> Result<Vec<f64>> {
        dense_spd_solve(&self.a, &self.b)
    }
}

impl EnergyModel for QuadraticModel {
    fn n_dof(&self) -> usize {
        self.n
    }

    fn eval_f(&self, u: &[f64]) -> f64 {
        0.5 * dot(u, &self.apply(u)) - dot(&self.b, u)
    }

    fn grad_f(&self, u: &[f64]) -> Vec<f64> {
        self.apply(u).iter().zip(&self.b).map(|(au, b)| au - b).collect()
    }

    fn eval_g(&self, _u: &[f64]) -> f64 {
        0.0
    }

    fn local_solve(&self, k: usize, v: &[f64], omega: f64) -> Result<Coefficients> {
        let blk = self.blocks.get(k).ok_or(Error::LocalSolve {
            k,
            reason: "no such block".into(),
        })?;
        check_len(self.n, v.len())?;
        let g = self.grad_f(v);
        let d = blk.len();
        let mut akk = vec![0.0; d * d];
        for (r, &i) in blk.iter().enumerate() {
            for (c, &j) in blk.iter().enumerate() {
                akk[r * d + c] = omega * self.a[i * self.n + j];
            }
        }
        let rhs: Vec<f64> = blk.iter().map(|&i| -g[i]).collect();
        dense_spd_solve(&akk, &rhs)
            .map(Coefficients::from)
            .map_err(|e| Error::LocalSolve {
                k,
                reason: e.to_string(),
            })
    }
}

/// `A = [[2, 1], [1, 2]]`, `b = (1, 1)`, coordinate subspaces, `u0 = 0`.
pub fn toy_model() -> QuadraticModel {
    QuadraticModel::new(vec![2.0, 1.0, 1.0, 2.0], vec![1.0, 1.0], vec![vec![0], vec![1]]).expect("toy data is valid")
}

pub fn toy_instance() -> Result<ProblemInstance> {
    let m = toy_model();
    let d = Arc::new(m.decomposition()?);
    ProblemInstance::new(Box::new(m), d, Coefficients::zeros(2), "quadratic", "quadratic-toy")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_facts() {
        let m = toy_model();
        assert_eq!(m.eval_f(&[0.0, 0.0]), 0.0);
        let x = m.minimizer().unwrap();
        assert!((x[0] - 1.0 / 3.0).abs() < 1e-15 && (x[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.eval_f(&x) + 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.decomposition().unwrap().tau0(), 0.5);
    }

    #[test]
    fn local_solve_with_omega() {
        let m = toy_model();
        // omega scales the local curvature only
        let w = m.local_solve(0, &[0.0, 0.0], 2.0).unwrap();
        assert!((w[0] - 0.25).abs() < 1e-15);
        assert!(m.local_solve(5, &[0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(QuadraticModel::new(vec![1.0, 2.0, 0.0, 1.0], vec![0.0; 2], vec![vec![0]]).is_err());
        assert!(QuadraticModel::new(vec![1.0; 3], vec![0.0; 2], vec![vec![0]]).is_err());
        assert!(QuadraticModel::new(vec![1.0; 4], vec![0.0; 2], vec![vec![2]]).is_err());
    }
}
