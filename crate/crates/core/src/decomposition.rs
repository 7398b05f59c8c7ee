//! Space decompositions `V = sum_k R_k^* V_k` on structured grids.
//!
//! Subdomain spaces are zero-extension injections on an index set; the coarse
//! space of a two-level method is the P1 interpolation from a coarse mesh.
//! The coarse space, when present, is always subspace 0.

use std::collections::BTreeSet;

use crate::error::{check_len, Error, Result};
use crate::framework::Coefficients;
use crate::grid::{InterpolationOperator, StructuredMesh};
use crate::linalg::SparseMatrix;
use crate::tv::PixelGrid;

#[derive(Clone, Debug)]
enum Prolongation {
    Injection,
    Interpolation {
        /// `n_global x dim`
        matrix: SparseMatrix,
        transpose: SparseMatrix,
    },
}

#[derive(Clone, Debug)]
pub struct Subspace {
    /// Sorted global dofs reached by the prolongation. For an injection this
    /// is the index set itself, in local order.
    support: Vec<usize>,
    dim: usize,
    n_global: usize,
    prolongation: Prolongation,
}

impl Subspace {
    pub fn injection(indices: Vec<usize>, n_global: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::config("subspace index set is empty"));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("subspace index set must be strictly increasing"));
        }
        if let Some(&last) = indices.last() {
            if last >= n_global {
                return Err(Error::Dimension {
                    expected: n_global,
                    found: last + 1,
                });
            }
        }
        Ok(Subspace {
            dim: indices.len(),
            support: indices,
            n_global,
            prolongation: Prolongation::Injection,
        })
    }

    /// A subspace whose prolongation is an explicit `n_global x dim` matrix.
    pub fn interpolated(matrix: SparseMatrix) -> Result<Self> {
        let support: Vec<usize> = (0..matrix.nrows())
            .filter(|&i| matrix.row(i).next().is_some())
            .collect();
        if support.is_empty() || matrix.ncols() == 0 {
            return Err(Error::config("interpolated subspace is empty"));
        }
        let transpose = matrix.transpose();
        if (0..transpose.nrows()).any(|c| transpose.row(c).next().is_none()) {
            return Err(Error::config("prolongation has a zero column"));
        }
        Ok(Subspace {
            dim: matrix.ncols(),
            n_global: matrix.nrows(),
            support,
            prolongation: Prolongation::Interpolation { matrix, transpose },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_global(&self) -> usize {
        self.n_global
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn is_injection(&self) -> bool {
        matches!(self.prolongation, Prolongation::Injection)
    }

    /// The prolongation matrix of an interpolated subspace.
    pub fn interpolation(&self) -> Option<&SparseMatrix> {
        match &self.prolongation {
            Prolongation::Injection => None,
            Prolongation::Interpolation { matrix, .. } => Some(matrix),
        }
    }

    /// Column `c` of the prolongation as `(global dof, weight)` pairs.
    pub fn basis_vector(&self, c: usize) -> Vec<(usize, f64)> {
        match &self.prolongation {
            Prolongation::Injection => vec![(self.support[c], 1.0)],
            Prolongation::Interpolation { transpose, .. } => transpose.row(c).collect(),
        }
    }

    /// For every global dof, its expansion `(local index, weight)` in terms of
    /// the subspace coordinates.
    pub fn row_map(&self) -> Vec<Vec<(usize, f64)>> {
        let mut rows = vec![Vec::new(); self.n_global];
        match &self.prolongation {
            Prolongation::Injection => {
                for (l, &g) in self.support.iter().enumerate() {
                    rows[g].push((l, 1.0));
                }
            }
            Prolongation::Interpolation { matrix, .. } => {
                for &g in &self.support {
                    rows[g] = matrix.row(g).collect();
                }
            }
        }
        rows
    }

    /// `R^* w` as a global vector.
    pub fn prolong(&self, w: &[f64]) -> Result<Coefficients> {
        let mut out = Coefficients::zeros(self.n_global);
        self.prolong_add(w, 1.0, &mut out)?;
        Ok(out)
    }

    /// `out += scale * R^* w`.
    pub fn prolong_add(&self, w: &[f64], scale: f64, out: &mut [f64]) -> Result<()> {
        check_len(self.dim, w.len())?;
        check_len(self.n_global, out.len())?;
        match &self.prolongation {
            Prolongation::Injection => {
                for (&g, &x) in self.support.iter().zip(w) {
                    out[g] += scale * x;
                }
            }
            Prolongation::Interpolation { matrix, .. } => {
                for &g in &self.support {
                    out[g] += scale * matrix.row_dot(g, w);
                }
            }
        }
        Ok(())
    }

    /// `R g`, the transpose of [`Subspace::prolong`].
    pub fn restrict_grad(&self, g: &[f64]) -> Result<Coefficients> {
        check_len(self.n_global, g.len())?;
        Ok(match &self.prolongation {
            Prolongation::Injection => self.support.iter().map(|&i| g[i]).collect(),
            Prolongation::Interpolation { transpose, .. } => (0..self.dim).map(|c| transpose.row_dot(c, g)).collect(),
        })
    }

    /// Gathers the subspace-local entries of a global vector (injections only).
    pub fn gather(&self, g: &[f64]) -> Vec<f64> {
        self.support.iter().map(|&i| g[i]).collect()
    }

    fn intersects(&self, other: &Subspace) -> bool {
        let (mut a, mut b) = (self.support.iter().peekable(), other.support.iter().peekable());
        while let (Some(&&x), Some(&&y)) = (a.peek(), b.peek()) {
            match x.cmp(&y) {
                std::cmp::Ordering::Less => {
                    a.next();
                }
                std::cmp::Ordering::Greater => {
                    b.next();
                }
                std::cmp::Ordering::Equal => return true,
            }
        }
        false
    }
}

#[derive(Clone, Debug)]
pub struct Decomposition {
    subspaces: Vec<Subspace>,
    colors: Vec<usize>,
    tau0: f64,
    n_global: usize,
}

impl Decomposition {
    /// Colours the subspaces greedily by index-set intersection.
    pub fn new(subspaces: Vec<Subspace>) -> Result<Self> {
        let colors = greedy_coloring(&subspaces);
        Self::with_colors(subspaces, colors)
    }

    /// Uses a caller-supplied colouring, which must at least separate
    /// intersecting subspaces.
    pub fn with_colors(subspaces: Vec<Subspace>, colors: Vec<usize>) -> Result<Self> {
        let first = subspaces
            .first()
            .ok_or_else(|| Error::config("decomposition has no subspaces"))?;
        let n_global = first.n_global;
        check_len(subspaces.len(), colors.len())?;
        for s in &subspaces {
            check_len(n_global, s.n_global)?;
        }
        let graph = overlap_graph(&subspaces);
        for (a, nbrs) in graph.iter().enumerate() {
            if nbrs.iter().any(|&b| colors[a] == colors[b]) {
                return Err(Error::config(format!(
                    "subspace {a} shares a colour with an overlapping subspace"
                )));
            }
        }
        let tau0 = tau0_from_coloring(&colors)?;
        Ok(Decomposition {
            subspaces,
            colors,
            tau0,
            n_global,
        })
    }

    pub fn len(&self) -> usize {
        self.subspaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subspaces.is_empty()
    }

    pub fn n_global(&self) -> usize {
        self.n_global
    }

    pub fn subspaces(&self) -> &[Subspace] {
        &self.subspaces
    }

    pub fn subspace(&self, k: usize) -> &Subspace {
        &self.subspaces[k]
    }

    pub fn colors(&self) -> &[usize] {
        &self.colors
    }

    pub fn num_colors(&self) -> usize {
        self.colors.iter().collect::<BTreeSet<_>>().len()
    }

    pub fn tau0(&self) -> f64 {
        self.tau0
    }

    pub fn has_coarse_space(&self) -> bool {
        self.subspaces.first().is_some_and(|s| !s.is_injection())
    }

    /// True when every dof accepted by `is_free` lies in some subspace.
    pub fn covers(&self, is_free: impl Fn(usize) -> bool) -> bool {
        let mut covered = vec![false; self.n_global];
        for s in &self.subspaces {
            for &i in &s.support {
                covered[i] = true;
            }
        }
        (0..self.n_global).all(|i| covered[i] || !is_free(i))
    }
}

/// Half-open ownership ranges of `blocks` equal blocks over `n` grid lines,
/// grown by `delta` lines and clipped to `[0, n)`. With `closed_end` the last
/// block also owns line `n - 1` (node grids have one more line than cells).
fn block_ranges(cells: usize, blocks: usize, delta: usize, closed_end: bool) -> Vec<(usize, usize)> {
    let bs = cells / blocks;
    let n = if closed_end { cells + 1 } else { cells };
    (0..blocks)
        .map(|b| {
            let start = b * bs;
            let end = if b + 1 == blocks { n } else { (b + 1) * bs };
            (start.saturating_sub(delta), (end + delta).min(n))
        })
        .collect()
}

fn blocks_per_side(cells: usize, h_coarse: f64) -> Result<usize> {
    if !(h_coarse > 0.0 && h_coarse <= 1.0) {
        return Err(Error::config(format!("coarse size H = {h_coarse} outside (0, 1]")));
    }
    let inv = 1.0 / h_coarse;
    let blocks = inv.round() as usize;
    if blocks == 0 || (inv - blocks as f64).abs() > 1e-9 * inv {
        return Err(Error::config(format!("1/H = {inv} is not an integer")));
    }
    if !cells.is_multiple_of(blocks) || blocks >= cells {
        return Err(Error::config(format!(
            "H = 1/{blocks} incompatible with {cells} cells per side (need H > h and nested blocks)"
        )));
    }
    Ok(blocks)
}

/// `(1/H)^2` square node blocks grown by `delta_layers` node layers, with
/// Dirichlet nodes removed.
pub fn build_overlapping_subdomains(
    mesh: &StructuredMesh,
    h_coarse: f64,
    delta_layers: usize,
) -> Result<Vec<Subspace>> {
    let cells = mesh.m() - 1;
    let blocks = blocks_per_side(cells, h_coarse)?;
    let ranges = block_ranges(cells, blocks, delta_layers, true);
    let mut subs = Vec::with_capacity(blocks * blocks);
    for &(y0, y1) in &ranges {
        for &(x0, x1) in &ranges {
            let idx: Vec<usize> = (y0..y1)
                .flat_map(|j| (x0..x1).map(move |i| (i, j)))
                .map(|(i, j)| mesh.node(i, j))
                .filter(|&n| !mesh.is_boundary(n))
                .collect();
            subs.push(Subspace::injection(idx, mesh.n_nodes())?);
        }
    }
    Ok(subs)
}

/// Pixel blocks for a field with `dofs_per_pixel` interleaved components;
/// all components of a pixel belong to the same subspace.
pub fn build_pixel_subdomains(
    grid: &PixelGrid,
    h_coarse: f64,
    delta_layers: usize,
    dofs_per_pixel: usize,
) -> Result<Vec<Subspace>> {
    if grid.nx != grid.ny {
        return Err(Error::config("pixel decompositions need a square grid"));
    }
    let blocks = blocks_per_side(grid.nx, h_coarse)?;
    let ranges = block_ranges(grid.nx, blocks, delta_layers, false);
    let n_global = dofs_per_pixel * grid.n_pixels();
    let mut subs = Vec::with_capacity(blocks * blocks);
    for &(y0, y1) in &ranges {
        for &(x0, x1) in &ranges {
            let idx: Vec<usize> = (y0..y1)
                .flat_map(|j| (x0..x1).map(move |i| grid.pixel(i, j)))
                .flat_map(|p| (0..dofs_per_pixel).map(move |c| dofs_per_pixel * p + c))
                .collect();
            subs.push(Subspace::injection(idx, n_global)?);
        }
    }
    Ok(subs)
}

/// Prepends the coarse space spanned by the interior coarse basis functions.
pub fn add_coarse_space(mut subspaces: Vec<Subspace>, interp: &InterpolationOperator) -> Result<Vec<Subspace>> {
    let p = interp.interior_columns();
    if let Some(first) = subspaces.first() {
        check_len(first.n_global, p.nrows())?;
    }
    subspaces.insert(0, Subspace::interpolated(p)?);
    Ok(subspaces)
}

/// Adjacency lists of the graph joining subspaces whose supports intersect.
pub fn overlap_graph(subspaces: &[Subspace]) -> Vec<Vec<usize>> {
    let n = subspaces.len();
    let mut adj = vec![Vec::new(); n];
    for a in 0..n {
        for b in (a + 1)..n {
            if subspaces[a].intersects(&subspaces[b]) {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
    }
    adj
}

/// Adjacency lists joining subspaces that share a dof or are coupled by a
/// nonzero of `pattern` (e.g. the Hessian sparsity of a quadratic energy).
pub fn coupling_graph(subspaces: &[Subspace], pattern: &SparseMatrix) -> Vec<Vec<usize>> {
    let reach: Vec<BTreeSet<usize>> = subspaces
        .iter()
        .map(|s| {
            s.support
                .iter()
                .flat_map(|&i| std::iter::once(i).chain(pattern.row(i).map(|(j, _)| j)))
                .collect()
        })
        .collect();
    let n = subspaces.len();
    let mut adj = vec![Vec::new(); n];
    for a in 0..n {
        for b in (a + 1)..n {
            if subspaces[b].support.iter().any(|i| reach[a].contains(i)) {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
    }
    adj
}

/// Greedy colouring of an adjacency graph in vertex order: each vertex takes
/// the smallest colour unused by its earlier neighbours.
pub fn greedy_coloring_graph(adj: &[Vec<usize>]) -> Vec<usize> {
    let mut colors = vec![usize::MAX; adj.len()];
    for v in 0..adj.len() {
        let used: BTreeSet<usize> = adj[v].iter().map(|&u| colors[u]).filter(|&c| c != usize::MAX).collect();
        colors[v] = (0..).find(|c| !used.contains(c)).expect("a free colour always exists");
    }
    colors
}

/// Greedy colouring of the intersection graph, in subspace order.
pub fn greedy_coloring(subspaces: &[Subspace]) -> Vec<usize> {
    greedy_coloring_graph(&overlap_graph(subspaces))
}

/// `1 / (number of distinct colours)`.
pub fn tau0_from_coloring(colors: &[usize]) -> Result<f64> {
    if colors.is_empty() {
        return Err(Error::config("cannot derive tau0 from an empty colouring"));
    }
    Ok(1.0 / colors.iter().collect::<BTreeSet<_>>().len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_coarse_interpolation, build_mesh};
    use proptest::prelude::*;

    fn full_layout() -> (StructuredMesh, Vec<Subspace>) {
        let mesh = build_mesh(65).unwrap();
        let coarse = build_mesh(9).unwrap();
        let subs = build_overlapping_subdomains(&mesh, 1.0 / 8.0, 4).unwrap();
        let interp = build_coarse_interpolation(&mesh, &coarse).unwrap();
        (mesh, add_coarse_space(subs, &interp).unwrap())
    }

    /// Minimal colouring by trying every assignment with `k` colours.
    fn brute_force_chromatic(adj: &[Vec<usize>]) -> usize {
        let n = adj.len();
        for k in 1..=n {
            let total = k.pow(n as u32);
            for code in 0..total {
                let c: Vec<usize> = (0..n).map(|v| code / k.pow(v as u32) % k).collect();
                if (0..n).all(|v| adj[v].iter().all(|&u| c[u] != c[v])) {
                    return k;
                }
            }
        }
        n
    }

    #[test]
    fn full_scale_subdomains_and_colours() {
        let (mesh, subs) = full_layout();
        assert_eq!(subs.len(), 65);
        assert_eq!(subs[0].dim(), 49);
        let d = Decomposition::new(subs).unwrap();
        assert_eq!(d.num_colors(), 5);
        assert_eq!(d.tau0(), 0.2);
        assert!(d.has_coarse_space());
        assert!(d.covers(|i| !mesh.is_boundary(i)));
        // coarse is adjacent to everything and owns its own colour
        assert!(d.colors()[1..].iter().all(|&c| c != d.colors()[0]));
    }

    #[test]
    fn hand_enumerated_small_layout() {
        let mesh = build_mesh(9).unwrap();
        let subs = build_overlapping_subdomains(&mesh, 0.5, 1).unwrap();
        assert_eq!(subs.len(), 4);
        // block (0,0) owns nodes 0..4 per direction, grows to 0..=4, drops the boundary line
        let expect: Vec<usize> = (1..=4).flat_map(|j| (1..=4).map(move |i| j * 9 + i)).collect();
        assert_eq!(subs[0].support(), &expect[..]);
        // block (1,1) owns 4..=8, grows to 3..=8, drops line 8
        let expect: Vec<usize> = (3..=7).flat_map(|j| (3..=7).map(move |i| j * 9 + i)).collect();
        assert_eq!(subs[3].support(), &expect[..]);
        assert_eq!(subs[1].support().len(), 20);
    }

    #[test]
    fn zero_overlap_partitions() {
        let mesh = build_mesh(17).unwrap();
        let subs = build_overlapping_subdomains(&mesh, 0.25, 0).unwrap();
        let adj = overlap_graph(&subs);
        assert!(adj.iter().all(|a| a.is_empty()));
        assert!(greedy_coloring(&subs).iter().all(|&c| c == 0));
        let total: usize = subs.iter().map(|s| s.dim()).sum();
        assert_eq!(total, 15 * 15);
    }

    #[test]
    fn incompatible_coarse_size() {
        let mesh = build_mesh(17).unwrap();
        assert!(matches!(
            build_overlapping_subdomains(&mesh, 1.0 / 3.0, 1),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            build_overlapping_subdomains(&mesh, 0.3, 1),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            build_overlapping_subdomains(&mesh, 1.0 / 16.0, 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn two_by_two_edge_overlaps_need_two_colours() {
        // the cycle 0-1-2-3-0
        let n = 5;
        let subs = vec![
            Subspace::injection(vec![0, 1], n).unwrap(),
            Subspace::injection(vec![1, 2, 3], n).unwrap(),
            Subspace::injection(vec![3, 4], n).unwrap(),
            Subspace::injection(vec![0, 4], n).unwrap(),
        ];
        let adj = overlap_graph(&subs);
        assert_eq!(adj, vec![vec![1, 3], vec![0, 2], vec![1, 3], vec![0, 2]]);
        let colors = greedy_coloring(&subs);
        let k = colors.iter().collect::<BTreeSet<_>>().len();
        assert_eq!(k, brute_force_chromatic(&adj));
        assert_eq!(k, 2);
    }

    #[test]
    fn disjoint_subspaces_need_one_colour() {
        let subs: Vec<_> = (0..5).map(|i| Subspace::injection(vec![i], 5).unwrap()).collect();
        assert_eq!(tau0_from_coloring(&greedy_coloring(&subs)).unwrap(), 1.0);
    }

    #[test]
    fn tau0_values() {
        assert_eq!(tau0_from_coloring(&[0, 0, 0]).unwrap(), 1.0);
        assert_eq!(tau0_from_coloring(&[0, 1, 2, 3, 4, 1]).unwrap(), 0.2);
        assert!(tau0_from_coloring(&[]).is_err());
    }

    #[test]
    fn coupled_coordinate_toy_gets_two_colours() {
        let a = SparseMatrix::from_triplets(2, 2, [(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 2.0)]).unwrap();
        let subs = vec![
            Subspace::injection(vec![0], 2).unwrap(),
            Subspace::injection(vec![1], 2).unwrap(),
        ];
        let colors = greedy_coloring_graph(&coupling_graph(&subs, &a));
        assert_eq!(tau0_from_coloring(&colors).unwrap(), 0.5);
    }

    #[test]
    fn two_level_coarse_dimension_and_basis() {
        let (mesh, subs) = full_layout();
        let coarse = build_mesh(9).unwrap();
        // column for coarse node (3, 2), interior index (3-1) + 7 * (2-1)
        let col = subs[0].basis_vector(7 + 2);
        let (cx, cy) = coarse.coords(coarse.node(3, 2));
        let hat = |x: f64, y: f64| {
            // P1 hat on the coarse triangulation, evaluated directly
            let (dx, dy) = ((x - cx) * 8.0, (y - cy) * 8.0);
            let v = if dx >= 0.0 && dy >= 0.0 {
                1.0 - dx - dy
            } else if dx <= 0.0 && dy <= 0.0 {
                1.0 + dx + dy
            } else if dx >= 0.0 {
                // dy < 0
                (1.0 - dx).min(1.0 + dy)
            } else {
                (1.0 + dx).min(1.0 - dy)
            };
            v.max(0.0)
        };
        let mut dense = vec![0.0; mesh.n_nodes()];
        for (g, w) in col {
            dense[g] = w;
        }
        for n in 0..mesh.n_nodes() {
            let (x, y) = mesh.coords(n);
            let expect = if mesh.is_boundary(n) { 0.0 } else { hat(x, y) };
            assert!((dense[n] - expect).abs() < 1e-14, "node {n}");
        }
    }

    #[test]
    fn one_level_list_unchanged_without_coarse() {
        let mesh = build_mesh(17).unwrap();
        let subs = build_overlapping_subdomains(&mesh, 0.25, 2).unwrap();
        let d = Decomposition::new(subs.clone()).unwrap();
        assert_eq!(d.len(), subs.len());
        assert!(!d.has_coarse_space());
    }

    #[test]
    fn injection_prolong_and_restrict() {
        let s = Subspace::injection(vec![1, 4, 5], 7).unwrap();
        let p = s.prolong(&[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(&p[..], &[0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let w = [2.0, -1.0, 3.5];
        assert_eq!(&s.restrict_grad(&s.prolong(&w).unwrap()).unwrap()[..], &w);
        assert!(s.prolong(&[1.0]).is_err());
        assert!(Subspace::injection(vec![2, 2], 4).is_err());
        assert!(Subspace::injection(vec![1, 4], 4).is_err());
    }

    #[test]
    fn more_overlap_never_raises_tau0() {
        let mesh = build_mesh(33).unwrap();
        let mut last = f64::INFINITY;
        for delta in 0..6 {
            let d = Decomposition::new(build_overlapping_subdomains(&mesh, 0.125, delta).unwrap()).unwrap();
            assert!(d.tau0() <= last);
            last = d.tau0();
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn coarse_prolongation_is_adjoint(seed in 0u64..1000) {
            let fine = build_mesh(17).unwrap();
            let coarse = build_mesh(5).unwrap();
            let interp = build_coarse_interpolation(&fine, &coarse).unwrap();
            let subs = add_coarse_space(build_overlapping_subdomains(&fine, 0.25, 1).unwrap(), &interp).unwrap();
            let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            let mut next = || { state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5 };
            for s in &subs {
                let w: Vec<f64> = (0..s.dim()).map(|_| next()).collect();
                let g: Vec<f64> = (0..s.n_global()).map(|_| next()).collect();
                let pw = s.prolong(&w).unwrap();
                let rg = s.restrict_grad(&g).unwrap();
                // direct summation on both sides
                let lhs: f64 = pw.iter().zip(&g).map(|(a, b)| a * b).sum();
                let rhs: f64 = w.iter().zip(rg.iter()).map(|(a, b)| a * b).sum();
                prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
            }
        }
    }
}
