use crate::decomposition::{add_coarse_space, build_overlapping_subdomains, Decomposition, Subspace};
use crate::error::{Error, Result};
use crate::grid::{build_coarse_interpolation, build_mesh, StructuredMesh};

/// Mesh and decomposition parameters shared by the finite element models.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FemLayout {
    /// Fine nodes per side.
    pub m: usize,
    /// Coarse nodes per side; fixes `H = 1 / (coarse_m - 1)`.
    pub coarse_m: usize,
    /// Overlap in fine node layers.
    pub delta_layers: usize,
    /// Adds the coarse space as subspace 0.
    pub two_level: bool,
}

impl FemLayout {
    pub fn new(m: usize, coarse_m: usize, delta_layers: usize) -> Self {
        FemLayout {
            m,
            coarse_m,
            delta_layers,
            two_level: true,
        }
    }

    pub fn canonical(&self) -> String {
        format!(
            "m={};coarse_m={};delta={};two_level={}",
            self.m, self.coarse_m, self.delta_layers, self.two_level
        )
    }

    pub(crate) fn build(&self) -> Result<(StructuredMesh, Decomposition)> {
        if self.coarse_m < 2 {
            return Err(Error::config("coarse mesh needs at least 2 nodes per side"));
        }
        let mesh = build_mesh(self.m)?;
        let h_coarse = 1.0 / (self.coarse_m - 1) as f64;
        let mut subs = build_overlapping_subdomains(&mesh, h_coarse, self.delta_layers)?;
        if self.two_level {
            if self.coarse_m < 3 {
                return Err(Error::config("a coarse space needs at least one interior coarse node"));
            }
            let coarse = build_mesh(self.coarse_m)?;
            subs = add_coarse_space(subs, &build_coarse_interpolation(&mesh, &coarse)?)?;
        }
        Ok((mesh, Decomposition::new(subs)?))
    }
}

/// The triangles a subspace correction can change, with each touched node's
/// expansion in subspace coordinates.
#[derive(Clone, Debug)]
pub(crate) struct FemPatch {
    pub nodes: Vec<usize>,
    /// `(local index, weight)` pairs per patch node; empty for nodes outside
    /// the support.
    pub terms: Vec<Vec<(usize, f64)>>,
    /// Triangle index and its vertices as patch-node positions.
    pub tris: Vec<(usize, [usize; 3])>,
    pub dim: usize,
    pub bandwidth: usize,
}

impl FemPatch {
    pub fn new(mesh: &StructuredMesh, sub: &Subspace) -> Self {
        let rows = sub.row_map();
        let mut slot = vec![usize::MAX; mesh.n_nodes()];
        let mut nodes = Vec::new();
        let mut terms = Vec::new();
        let mut tris = Vec::new();
        let mut bandwidth = 0;
        for (ti, t) in mesh.triangles().iter().enumerate() {
            if t.nodes.iter().all(|&n| rows[n].is_empty()) {
                continue;
            }
            let local = t.nodes.map(|n| {
                if slot[n] == usize::MAX {
                    slot[n] = nodes.len();
                    nodes.push(n);
                    terms.push(rows[n].clone());
                }
                slot[n]
            });
            let ls: Vec<usize> = t.nodes.iter().flat_map(|&n| rows[n].iter().map(|&(l, _)| l)).collect();
            if let (Some(lo), Some(hi)) = (ls.iter().min(), ls.iter().max()) {
                bandwidth = bandwidth.max(hi - lo);
            }
            tris.push((ti, local));
        }
        FemPatch {
            nodes,
            terms,
            tris,
            dim: sub.dim(),
            bandwidth,
        }
    }

    /// Nodal values of `v + R^* w` on the patch.
    pub fn values(&self, v: &[f64], w: &[f64]) -> Vec<f64> {
        self.nodes
            .iter()
            .zip(&self.terms)
            .map(|(&n, t)| v[n] + t.iter().map(|&(l, c)| c * w[l]).sum::<f64>())
            .collect()
    }

    /// Adds `R` applied to a nodal vector given on the patch.
    pub fn restrict_add(&self, nodal: &[f64], out: &mut [f64]) {
        for (t, &x) in self.terms.iter().zip(nodal) {
            for &(l, c) in t {
                out[l] += c * x;
            }
        }
    }
}
