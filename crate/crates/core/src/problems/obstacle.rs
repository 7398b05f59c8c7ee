//! `F(u) = u^T K u / 2 - b^T u` with `G` the indicator of `u >= psi` at the
//! interior nodes. Local problems are bound-constrained QPs solved by projected
//! SOR; the coarse space uses box constraints from the monotone restriction of
//! the obstacle.

use std::sync::Arc;

use crate::decomposition::Subspace;
use crate::error::{check_len, Error, Result};
use crate::framework::{dot, Coefficients, EnergyModel, ProblemInstance};
use crate::grid::{assemble_load, assemble_p1_stiffness, StructuredMesh};
use crate::linalg::SparseMatrix;
use crate::problems::fem::FemLayout;
use crate::problems::{fingerprint, local_tolerance, LOCAL_MAX_ITER};

/// Violations of the obstacle up to this size are treated as roundoff.
pub const FEASIBILITY_TOL: f64 = 1e-13;

#[derive(Clone, Debug, PartialEq)]
pub struct ObstacleSpec {
    pub layout: FemLayout,
    pub forcing: f64,
    /// Constant obstacle `psi`.
    pub obstacle: f64,
}

impl ObstacleSpec {
    pub fn new(layout: FemLayout) -> Self {
        ObstacleSpec {
            layout,
            forcing: -10.0,
            obstacle: -0.2,
        }
    }
}

struct LocalQp {
    /// `R K R^T`
    a: SparseMatrix,
    sor: f64,
    /// For the coarse space: the fine nodes in each basis function's support.
    supports: Option<Vec<Vec<usize>>>,
}

pub struct ObstacleModel {
    mesh: StructuredMesh,
    k: SparseMatrix,
    load: Vec<f64>,
    psi: Vec<f64>,
    subspaces: Vec<Subspace>,
    local: Vec<LocalQp>,
}

impl ObstacleModel {
    pub fn mesh(&self) -> &StructuredMesh {
        &self.mesh
    }

    pub fn stiffness(&self) -> &SparseMatrix {
        &self.k
    }

    pub fn load(&self) -> &[f64] {
        &self.load
    }

    pub fn obstacle(&self) -> &[f64] {
        &self.psi
    }
}

/// Over-relaxation factor that is optimal for a Dirichlet Laplacian on a
/// square with `dim` unknowns.
fn sor_factor(dim: usize) -> f64 {
    let side = (dim as f64).sqrt();
    2.0 / (1.0 + (std::f64::consts::PI / (side + 1.0)).sin())
}

/// Minimises `omega w^T A w / 2 + g^T w` subject to `w >= lb` by projected
/// SOR, until the natural residual `|w - max(lb, w - (g + omega A w))|` drops
/// below `tol (1 + initial)`.
pub(crate) fn projected_sor(a: &SparseMatrix, g: &[f64], lb: &[f64], omega: f64, sor: f64) -> Result<Vec<f64>> {
    let n = g.len();
    check_len(n, a.nrows())?;
    check_len(n, lb.len())?;
    let diag: Vec<f64> = (0..n).map(|i| omega * a.get(i, i)).collect();
    if diag.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::Numerical("local QP has a non-positive diagonal".into()));
    }
    let residual = |w: &[f64]| -> f64 {
        (0..n)
            .map(|i| {
                let s = g[i] + omega * a.row_dot(i, w);
                let r = w[i] - lb[i].max(w[i] - s);
                r * r
            })
            .sum::<f64>()
            .sqrt()
    };
    let mut w = vec![0.0; n];
    let tol = local_tolerance(residual(&w));
    for i in 0..n {
        w[i] = w[i].max(lb[i]);
    }
    for _ in 0..LOCAL_MAX_ITER {
        if residual(&w) <= tol {
            return Ok(w);
        }
        for i in 0..n {
            let s = g[i] + omega * a.row_dot(i, &w);
            w[i] = lb[i].max(w[i] - sor * s / diag[i]);
        }
    }
    if residual(&w) <= tol {
        return Ok(w);
    }
    Err(Error::Numerical(format!(
        "projected SOR did not converge in {LOCAL_MAX_ITER} sweeps"
    )))
}

impl EnergyModel for ObstacleModel {
    fn n_dof(&self) -> usize {
        self.mesh.n_nodes()
    }

    fn eval_f(&self, u: &[f64]) -> f64 {
        let ku = self.k.matvec(u).expect("length checked by caller");
        0.5 * dot(u, &ku) - dot(&self.load, u)
    }

    fn grad_f(&self, u: &[f64]) -> Vec<f64> {
        let ku = self.k.matvec(u).expect("length checked by caller");
        ku.iter()
            .zip(&self.load)
            .enumerate()
            .map(|(i, (a, b))| if self.mesh.is_boundary(i) { 0.0 } else { a - b })
            .collect()
    }

    fn eval_g(&self, u: &[f64]) -> f64 {
        let violated = u
            .iter()
            .zip(&self.psi)
            .enumerate()
            .any(|(i, (x, p))| !self.mesh.is_boundary(i) && !(*x >= p - FEASIBILITY_TOL));
        if violated {
            f64::INFINITY
        } else {
            0.0
        }
    }

    fn is_fixed(&self, dof: usize) -> bool {
        self.mesh.is_boundary(dof)
    }

    fn local_solve(&self, k: usize, v: &[f64], omega: f64) -> Result<Coefficients> {
        check_len(self.n_dof(), v.len())?;
        let (sub, qp) = match (self.subspaces.get(k), self.local.get(k)) {
            (Some(s), Some(q)) => (s, q),
            _ => {
                return Err(Error::LocalSolve {
                    k,
                    reason: "no such subspace".into(),
                })
            }
        };
        // Capped at zero so that w = 0 stays admissible: an iterate sitting
        // inside the feasibility tolerance below psi is not pushed back up,
        // which could raise the energy.
        let (g, lb): (Vec<f64>, Vec<f64>) = match &qp.supports {
            None => {
                let g: Vec<f64> = sub
                    .support()
                    .iter()
                    .map(|&i| self.k.row_dot(i, v) - self.load[i])
                    .collect();
                let lb = sub.support().iter().map(|&i| (self.psi[i] - v[i]).min(0.0)).collect();
                (g, lb)
            }
            Some(supports) => {
                let g = sub.restrict_grad(&self.grad_f(v))?.into_vec();
                let lb = supports
                    .iter()
                    .map(|s| {
                        s.iter()
                            .map(|&i| self.psi[i] - v[i])
                            .fold(f64::NEG_INFINITY, f64::max)
                            .min(0.0)
                    })
                    .collect();
                (g, lb)
            }
        };
        projected_sor(&qp.a, &g, &lb, omega, qp.sor)
            .map(Coefficients::from)
            .map_err(|e| Error::LocalSolve {
                k,
                reason: e.to_string(),
            })
    }
}

pub fn make_obstacle(spec: &ObstacleSpec) -> Result<ProblemInstance> {
    if !spec.forcing.is_finite() || !spec.obstacle.is_finite() {
        return Err(Error::config("forcing and obstacle must be finite"));
    }
    if spec.obstacle > 0.0 {
        return Err(Error::config(format!(
            "obstacle {} is above the zero boundary data, so u = 0 is infeasible",
            spec.obstacle
        )));
    }
    let (mesh, decomp) = spec.layout.build()?;
    let k = assemble_p1_stiffness(&mesh);
    let load = assemble_load(&mesh, |_, _| spec.forcing);
    let psi = vec![spec.obstacle; mesh.n_nodes()];
    let mut local = Vec::with_capacity(decomp.len());
    for sub in decomp.subspaces() {
        let qp = match sub.interpolation() {
            None => LocalQp {
                a: k.principal_submatrix(sub.support()),
                sor: sor_factor(sub.dim()),
                supports: None,
            },
            Some(p) => LocalQp {
                a: k.galerkin(p)?,
                sor: sor_factor(sub.dim()),
                supports: Some(
                    (0..sub.dim())
                        .map(|c| {
                            sub.basis_vector(c)
                                .into_iter()
                                .filter(|&(_, w)| w > 0.0)
                                .map(|(i, _)| i)
                                .collect()
                        })
                        .collect(),
                ),
            },
        };
        local.push(qp);
    }
    let n = mesh.n_nodes();
    let model = ObstacleModel {
        mesh,
        k,
        load,
        psi,
        subspaces: decomp.subspaces().to_vec(),
        local,
    };
    let canonical = format!(
        "obstacle;{};f={:e};psi={:e}",
        spec.layout.canonical(),
        spec.forcing,
        spec.obstacle
    );
    ProblemInstance::new(
        Box::new(model),
        Arc::new(decomp),
        Coefficients::zeros(n),
        "obstacle",
        fingerprint(&canonical),
    )
}
