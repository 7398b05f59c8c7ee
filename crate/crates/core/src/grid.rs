//! Uniform P1 meshes of the unit square and the operators assembled on them.
//!
//! Nodes are numbered lexicographically, `node = j * m + i` for the node at
//! `(i h, j h)`. Every cell is split along its `(i+1, j)`-`(i, j+1)` diagonal
//! into a lower and an upper right triangle.

use crate::error::{check_len, Error, Result};
use crate::linalg::SparseMatrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Triangle {
    pub nodes: [usize; 3],
    /// Constant gradients of the three nodal basis functions.
    pub basis_grads: [[f64; 2]; 3],
}

impl Triangle {
    /// Gradient of the P1 interpolant of `vals` (values at `nodes`).
    #[inline]
    pub fn gradient(&self, vals: [f64; 3]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for (v, d) in vals.iter().zip(&self.basis_grads) {
            g[0] += v * d[0];
            g[1] += v * d[1];
        }
        g
    }
}

#[derive(Clone, Debug)]
pub struct StructuredMesh {
    m: usize,
    h: f64,
    boundary: Vec<bool>,
    triangles: Vec<Triangle>,
}

impl StructuredMesh {
    /// Nodes per side.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn n_nodes(&self) -> usize {
        self.m * self.m
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        j * self.m + i
    }

    /// Grid position `(i, j)` of a node.
    pub fn position(&self, node: usize) -> (usize, usize) {
        (node % self.m, node / self.m)
    }

    pub fn coords(&self, node: usize) -> (f64, f64) {
        let (i, j) = self.position(node);
        (i as f64 * self.h, j as f64 * self.h)
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.boundary[node]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn triangle_area(&self) -> f64 {
        0.5 * self.h * self.h
    }

    /// Triangles of cell `(i, j)`: `2 * (j * (m - 1) + i)` and the next one.
    pub fn cell_triangles(&self, i: usize, j: usize) -> [usize; 2] {
        let c = 2 * (j * (self.m - 1) + i);
        [c, c + 1]
    }
}

pub fn build_mesh(m: usize) -> Result<StructuredMesh> {
    if m < 3 {
        return Err(Error::config(format!("mesh needs at least 3 nodes per side, got {m}")));
    }
    let h = 1.0 / (m - 1) as f64;
    let inv = 1.0 / h;
    let node = |i: usize, j: usize| j * m + i;
    let boundary = (0..m * m)
        .map(|n| {
            let (i, j) = (n % m, n / m);
            i == 0 || j == 0 || i == m - 1 || j == m - 1
        })
        .collect();
    let mut triangles = Vec::with_capacity(2 * (m - 1) * (m - 1));
    for j in 0..m - 1 {
        for i in 0..m - 1 {
            let (n00, n10, n01, n11) = (node(i, j), node(i + 1, j), node(i, j + 1), node(i + 1, j + 1));
            triangles.push(Triangle {
                nodes: [n00, n10, n01],
                basis_grads: [[-inv, -inv], [inv, 0.0], [0.0, inv]],
            });
            triangles.push(Triangle {
                nodes: [n10, n11, n01],
                basis_grads: [[0.0, -inv], [inv, inv], [-inv, 0.0]],
            });
        }
    }
    Ok(StructuredMesh {
        m,
        h,
        boundary,
        triangles,
    })
}

/// P1 stiffness matrix of `1/2 int |grad u|^2`, with Dirichlet rows and
/// columns replaced by the identity.
pub fn assemble_p1_stiffness(mesh: &StructuredMesh) -> SparseMatrix {
    let area = mesh.triangle_area();
    let mut trips = Vec::with_capacity(9 * mesh.triangles.len() + mesh.n_nodes());
    for t in &mesh.triangles {
        for a in 0..3 {
            let na = t.nodes[a];
            if mesh.boundary[na] {
                continue;
            }
            for b in 0..3 {
                let nb = t.nodes[b];
                if mesh.boundary[nb] {
                    continue;
                }
                let (ga, gb) = (t.basis_grads[a], t.basis_grads[b]);
                trips.push((na, nb, area * (ga[0] * gb[0] + ga[1] * gb[1])));
            }
        }
    }
    for n in 0..mesh.n_nodes() {
        if mesh.boundary[n] {
            trips.push((n, n, 1.0));
        }
    }
    SparseMatrix::from_triplets(mesh.n_nodes(), mesh.n_nodes(), trips)
        .expect("stiffness entries are finite and in range")
}

/// Lumped-mass load vector: `h^2 f(x_i)` at interior nodes, zero on the boundary.
pub fn assemble_load(mesh: &StructuredMesh, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let h2 = mesh.h * mesh.h;
    (0..mesh.n_nodes())
        .map(|n| {
            if mesh.boundary[n] {
                0.0
            } else {
                let (x, y) = mesh.coords(n);
                h2 * f(x, y)
            }
        })
        .collect()
}

/// Energy `(area/s) |grad u|^s` of one triangle and its derivative with
/// respect to the three vertex values.
#[inline]
pub(crate) fn slap_element(t: &Triangle, vals: [f64; 3], s: f64, area: f64) -> (f64, [f64; 3]) {
    let g = t.gradient(vals);
    let r2 = g[0] * g[0] + g[1] * g[1];
    if r2 == 0.0 {
        return (0.0, [0.0; 3]);
    }
    let r = r2.sqrt();
    let rs2 = r.powf(s - 2.0);
    let energy = area / s * rs2 * r2;
    let mut grad = [0.0; 3];
    for (out, d) in grad.iter_mut().zip(&t.basis_grads) {
        *out = area * rs2 * (g[0] * d[0] + g[1] * d[1]);
    }
    (energy, grad)
}

/// `sum_T (area_T / s) |grad u|_T^s` and its gradient (zero at boundary nodes).
/// The load term is handled by the caller.
pub fn slap_energy_grad(mesh: &StructuredMesh, s: f64, u: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_len(mesh.n_nodes(), u.len())?;
    if !(s > 1.0) {
        return Err(Error::config(format!("s-Laplace exponent must exceed 1, got {s}")));
    }
    let area = mesh.triangle_area();
    let mut energy = 0.0;
    let mut grad = vec![0.0; u.len()];
    for t in &mesh.triangles {
        let vals = t.nodes.map(|n| u[n]);
        let (e, g) = slap_element(t, vals, s, area);
        energy += e;
        for (n, gi) in t.nodes.iter().zip(g) {
            grad[*n] += gi;
        }
    }
    for (g, &b) in grad.iter_mut().zip(&mesh.boundary) {
        if b {
            *g = 0.0;
        }
    }
    if !energy.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical("non-finite s-Laplace energy or gradient".into()));
    }
    Ok((energy, grad))
}

/// P1 interpolation from a coarse mesh onto a nested fine mesh.
#[derive(Clone, Debug)]
pub struct InterpolationOperator {
    /// `fine nodes x coarse nodes`; rows of fine boundary nodes are zero.
    pub matrix: SparseMatrix,
    pub coarse_boundary: Vec<bool>,
}

impl InterpolationOperator {
    /// Coarse nodes not on the boundary, in lexicographic order.
    pub fn coarse_interior(&self) -> Vec<usize> {
        (0..self.coarse_boundary.len())
            .filter(|&c| !self.coarse_boundary[c])
            .collect()
    }

    /// The interpolation restricted to interior coarse nodes.
    pub fn interior_columns(&self) -> SparseMatrix {
        self.matrix.select_columns(&self.coarse_interior())
    }
}

pub fn build_coarse_interpolation(fine: &StructuredMesh, coarse: &StructuredMesh) -> Result<InterpolationOperator> {
    let (fc, cc) = (fine.m - 1, coarse.m - 1);
    if fc % cc != 0 || fc == cc {
        return Err(Error::config(format!(
            "meshes are not nested: {} fine cells per side vs {} coarse",
            fc, cc
        )));
    }
    let r = fc / cc;
    let mut trips = Vec::new();
    for n in 0..fine.n_nodes() {
        if fine.boundary[n] {
            continue;
        }
        let (i, j) = fine.position(n);
        // interior fine nodes never sit on the last coarse line, so ci, cj < cc
        let (ci, cj) = (i / r, j / r);
        let (a, b) = (i % r, j % r);
        let (xi, eta) = (a as f64 / r as f64, b as f64 / r as f64);
        let c = |di: usize, dj: usize| coarse.node(ci + di, cj + dj);
        let weights: [(usize, f64); 3] = if a + b <= r {
            [(c(0, 0), 1.0 - xi - eta), (c(1, 0), xi), (c(0, 1), eta)]
        } else {
            [(c(1, 1), xi + eta - 1.0), (c(1, 0), 1.0 - eta), (c(0, 1), 1.0 - xi)]
        };
        for (cn, w) in weights {
            if w != 0.0 {
                trips.push((n, cn, w));
            }
        }
    }
    Ok(InterpolationOperator {
        matrix: SparseMatrix::from_triplets(fine.n_nodes(), coarse.n_nodes(), trips)?,
        coarse_boundary: coarse.boundary.clone(),
    })
}
