//! Energy contracts shared by every model and driver.
//!
//! Extended reals are plain `f64` with `+inf` standing for "outside dom G".

use std::ops::{Deref, DerefMut};
use std::sync::Arc;

use crate::decomposition::Decomposition;
use crate::error::{check_len, Error, Result};

/// Dense coefficient vector of an element of the discrete space
/// (a primal iterate, a dual field, or a local correction).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Coefficients(Vec<f64>);

impl Coefficients {
    pub fn zeros(n: usize) -> Self {
        Coefficients(vec![0.0; n])
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &[f64]) -> Result<Coefficients> {
        check_len(self.len(), other.len())?;
        Ok(self.0.iter().zip(other).map(|(a, b)| a + alpha * b).collect())
    }
}

impl Deref for Coefficients {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Coefficients {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for Coefficients {
    fn from(v: Vec<f64>) -> Self {
        Coefficients(v)
    }
}

impl FromIterator<f64> for Coefficients {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        Coefficients(iter.into_iter().collect())
    }
}

/// A composite energy `E = F + G` together with its local solvers.
///
/// `F` is smooth and convex, `G` is convex and may take the value `+inf`.
/// `local_solve(k, v, omega)` returns a correction `w_k` in the coordinates
/// of subspace `k` of the model's decomposition that (approximately) minimizes
///
/// ```text
/// F(v) + <F'(v), R_k^* w> + omega * D_F(v + R_k^* w, v) + G(v + R_k^* w)
/// ```
///
/// which for `omega = 1` is the exact local problem `min_w E(v + R_k^* w)`.
/// Implementations must be safe to call concurrently on distinct inputs.
pub trait EnergyModel: Send + Sync {
    fn n_dof(&self) -> usize;

    fn eval_f(&self, u: &[f64]) -> f64;

    fn grad_f(&self, u: &[f64]) -> Vec<f64>;

    fn eval_g(&self, u: &[f64]) -> f64;

    fn local_solve(&self, k: usize, v: &[f64], omega: f64) -> Result<Coefficients>;

    /// Degrees of freedom pinned by a Dirichlet condition. They never move and
    /// `grad_f` reports zero there.
    fn is_fixed(&self, _dof: usize) -> bool {
        false
    }
}

/// A model bundled with its space decomposition and starting point.
pub struct ProblemInstance {
    pub model: Box<dyn EnergyModel>,
    pub decomposition: Arc<Decomposition>,
    pub initial_iterate: Coefficients,
    pub label: String,
    /// Stable hash of every parameter that defines the instance.
    pub fingerprint: String,
}

impl ProblemInstance {
    pub fn new(
        model: Box<dyn EnergyModel>,
        decomposition: Arc<Decomposition>,
        initial_iterate: Coefficients,
        label: impl Into<String>,
        fingerprint: impl Into<String>,
    ) -> Result<Self> {
        let n = model.n_dof();
        check_len(n, initial_iterate.len())?;
        check_len(n, decomposition.n_global())?;
        if !initial_iterate.is_finite() {
            return Err(Error::config("initial iterate has non-finite entries"));
        }
        if !model.eval_g(&initial_iterate).is_finite() {
            return Err(Error::config("initial iterate lies outside dom G"));
        }
        Ok(ProblemInstance {
            model,
            decomposition,
            initial_iterate,
            label: label.into(),
            fingerprint: fingerprint.into(),
        })
    }

    pub fn n_dof(&self) -> usize {
        self.model.n_dof()
    }

    pub fn num_subspaces(&self) -> usize {
        self.decomposition.len()
    }

    pub fn energy(&self, u: &[f64]) -> Result<f64> {
        eval_energy(self.model.as_ref(), u)
    }
}

impl std::fmt::Debug for ProblemInstance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemInstance")
            .field("label", &self.label)
            .field("n_dof", &self.n_dof())
            .field("subspaces", &self.num_subspaces())
            .field("fingerprint", &self.fingerprint)
            .finish()
    }
}

/// `E(u) = F(u) + G(u)`; `+inf` exactly when `G(u) = +inf`.
pub fn eval_energy(model: &dyn EnergyModel, u: &[f64]) -> Result<f64> {
    check_len(model.n_dof(), u.len())?;
    let g = model.eval_g(u);
    if g == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    Ok(model.eval_f(u) + g)
}

/// `D_F(u, v) = F(u) - F(v) - <F'(v), u - v>`.
pub fn bregman_distance(model: &dyn EnergyModel, u: &[f64], v: &[f64]) -> Result<f64> {
    check_len(model.n_dof(), u.len())?;
    check_len(model.n_dof(), v.len())?;
    let grad = model.grad_f(v);
    let lin: f64 = grad.iter().zip(u.iter().zip(v)).map(|(g, (a, b))| g * (a - b)).sum();
    Ok(model.eval_f(u) - model.eval_f(v) - lin)
}

/// Euclidean dot product of coefficient vectors.
pub fn inner_product(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a.len(), b.len())?;
    Ok(dot(a, b))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Largest relative error between central differences of `F` and `grad_f`
/// over a fixed, evenly spaced sample of (at most 48) free coordinates.
///
/// Errors are measured against `max(|g_i|, |fd_i|, ||g||_inf)`, so a
/// coordinate with a vanishing derivative is judged on the gradient's scale.
pub fn gradient_check(model: &dyn EnergyModel, u: &[f64], h: f64) -> f64 {
    const SAMPLES: usize = 48;
    let n = model.n_dof();
    let free: Vec<usize> = (0..n).filter(|&i| !model.is_fixed(i)).collect();
    if free.is_empty() {
        return 0.0;
    }
    let stride = free.len().div_ceil(SAMPLES).max(1);
    let grad = model.grad_f(u);
    let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let mut probe = u.to_vec();
    let mut worst = 0.0f64;
    for &i in free.iter().step_by(stride) {
        let x = probe[i];
        probe[i] = x + h;
        let fp = model.eval_f(&probe);
        probe[i] = x - h;
        let fm = model.eval_f(&probe);
        probe[i] = x;
        let fd = (fp - fm) / (2.0 * h);
        let diff = (fd - grad[i]).abs();
        if diff == 0.0 {
            continue;
        }
        let denom = grad[i].abs().max(fd.abs()).max(scale).max(f64::MIN_POSITIVE);
        worst = worst.max(diff / denom);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::quadratic::QuadraticModel;

    fn toy() -> QuadraticModel {
        QuadraticModel::new(vec![2.0, 1.0, 1.0, 2.0], vec![1.0, 1.0], vec![vec![0], vec![1]]).unwrap()
    }

    #[test]
    fn energy_of_quadratic_toy() {
        let m = toy();
        assert_eq!(eval_energy(&m, &[0.0, 0.0]).unwrap(), 0.0);
        let e = eval_energy(&m, &[1.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert!((e + 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn energy_rejects_wrong_length() {
        let m = toy();
        assert!(matches!(
            eval_energy(&m, &[0.0]),
            Err(Error::Dimension { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn bregman_of_quadratic_is_half_a_norm() {
        let m = toy();
        let d = bregman_distance(&m, &[1.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!((d - 1.0).abs() < 1e-15);
        assert_eq!(bregman_distance(&m, &[0.3, -0.2], &[0.3, -0.2]).unwrap(), 0.0);
    }

    #[test]
    fn bregman_of_affine_vanishes() {
        let m = QuadraticModel::new(vec![0.0; 4], vec![1.5, -2.0], vec![vec![0, 1]]).unwrap();
        let d = bregman_distance(&m, &[3.0, 1.0], &[-1.0, 0.5]).unwrap();
        assert!(d.abs() < 1e-14);
    }

    #[test]
    fn inner_products() {
        assert_eq!(inner_product(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(inner_product(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
        assert!(inner_product(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn gradient_check_on_quadratic_and_affine() {
        let m = toy();
        assert!(gradient_check(&m, &[0.7, -1.3], 1e-5) <= 1e-6);
        let affine = QuadraticModel::new(vec![0.0; 4], vec![1.5, -2.0], vec![vec![0, 1]]).unwrap();
        assert!(gradient_check(&affine, &[0.7, -1.3], 1e-5) <= 1e-10);
    }
}
