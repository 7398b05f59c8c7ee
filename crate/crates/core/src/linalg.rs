//! Compressed sparse rows and small banded/dense SPD factorizations.

use crate::error::{check_len, Error, Result};

/// Row-compressed sparse matrix. Column indices are strictly increasing
/// within each row.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from `(row, col, value)` triplets; duplicates are
    /// summed and exact zeros dropped.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nrows];
        for (i, j, v) in triplets {
            if i >= nrows || j >= ncols {
                return Err(Error::Dimension {
                    expected: nrows.max(ncols),
                    found: i.max(j),
                });
            }
            if !v.is_finite() {
                return Err(Error::Numerical(format!("non-finite entry at ({i}, {j})")));
            }
            rows[i].push((j, v));
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            let mut iter = row.into_iter().peekable();
            while let Some((j, mut v)) = iter.next() {
                while let Some(&(j2, v2)) = iter.peek() {
                    if j2 != j {
                        break;
                    }
                    v += v2;
                    iter.next();
                }
                if v != 0.0 {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(SparseMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(column, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(pos) => self.values[r.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.ncols, x.len())?;
        Ok((0..self.nrows).map(|i| self.row_dot(i, x)).collect())
    }

    pub(crate) fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        self.row(i).map(|(j, v)| v * x[j]).sum()
    }

    /// `A^T x`.
    pub fn matvec_transpose(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.nrows, x.len())?;
        let mut y = vec![0.0; self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (j, v) in self.row(i) {
                y[j] += v * xi;
            }
        }
        Ok(y)
    }

    pub fn transpose(&self) -> SparseMatrix {
        let trips = (0..self.nrows).flat_map(|i| self.row(i).map(move |(j, v)| (j, i, v)));
        SparseMatrix::from_triplets(self.ncols, self.nrows, trips).expect("transpose of a valid matrix is valid")
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }

    /// Keeps only the listed columns, renumbered in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> SparseMatrix {
        let mut map = vec![usize::MAX; self.ncols];
        for (new, &old) in cols.iter().enumerate() {
            map[old] = new;
        }
        let trips = (0..self.nrows).flat_map(|i| {
            let map = &map;
            self.row(i)
                .filter(move |&(j, _)| map[j] != usize::MAX)
                .map(move |(j, v)| (i, map[j], v))
        });
        SparseMatrix::from_triplets(self.nrows, cols.len(), trips).expect("column selection of a valid matrix is valid")
    }

    /// Principal submatrix on the given (sorted) index set.
    pub fn principal_submatrix(&self, idx: &[usize]) -> SparseMatrix {
        let mut map = vec![usize::MAX; self.ncols];
        for (new, &old) in idx.iter().enumerate() {
            map[old] = new;
        }
        let trips = idx.iter().enumerate().flat_map(|(li, &gi)| {
            let map = &map;
            self.row(gi)
                .filter(move |&(j, _)| map[j] != usize::MAX)
                .map(move |(j, v)| (li, map[j], v))
        });
        SparseMatrix::from_triplets(idx.len(), idx.len(), trips)
            .expect("principal submatrix of a valid matrix is valid")
    }

    /// `P^T A P` for a sparse `P` with `A` square.
    pub fn galerkin(&self, p: &SparseMatrix) -> Result<SparseMatrix> {
        check_len(self.ncols, p.nrows)?;
        let pt = p.transpose();
        let mut trips = Vec::new();
        // (A P) column by column through rows of A
        let mut ap_rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(self.nrows);
        for i in 0..self.nrows {
            let mut acc: std::collections::BTreeMap<usize, f64> = Default::default();
            for (k, a) in self.row(i) {
                for (c, pv) in p.row(k) {
                    *acc.entry(c).or_default() += a * pv;
                }
            }
            ap_rows.push(acc.into_iter().collect());
        }
        for r in 0..pt.nrows {
            for (i, pv) in pt.row(r) {
                for &(c, v) in &ap_rows[i] {
                    trips.push((r, c, pv * v));
                }
            }
        }
        SparseMatrix::from_triplets(p.ncols, p.ncols, trips)
    }
}

/// Symmetric matrix stored by its lower band, for local Hessians whose
/// lexicographic ordering keeps couplings within `bandwidth` of the diagonal.
#[derive(Clone, Debug)]
pub struct BandedSym {
    n: usize,
    bw: usize,
    // row i holds entries (i, i - bw ..= i) at offsets 0..=bw
    data: Vec<f64>,
}

impl BandedSym {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        BandedSym {
            n,
            bw: bandwidth,
            data: vec![0.0; n * (bandwidth + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        // requires j <= i and i - j <= bw
        i * (self.bw + 1) + (self.bw + j - i)
    }

    /// Adds `v` to entries `(i, j)` and `(j, i)`.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(r - c <= self.bw, "entry ({r}, {c}) outside band {}", self.bw);
        let s = self.slot(r, c);
        self.data[s] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if r - c > self.bw {
            0.0
        } else {
            self.data[self.slot(r, c)]
        }
    }

    pub fn max_diag(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).fold(0.0, f64::max)
    }

    pub fn shift_diag(&mut self, shift: f64) {
        for i in 0..self.n {
            let s = self.slot(i, i);
            self.data[s] += shift;
        }
    }

    /// In-place banded Cholesky `A = L L^T`. Fails on a non-positive pivot.
    pub fn cholesky(mut self) -> Result<BandedCholesky> {
        let (n, bw) = (self.n, self.bw);
        for j in 0..n {
            let lo = j.saturating_sub(bw);
            let mut d = self.data[self.slot(j, j)];
            for k in lo..j {
                let l = self.data[self.slot(j, k)];
                d -= l * l;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Numerical(format!("non-positive pivot {d:e} at row {j}")));
            }
            let d = d.sqrt();
            let sj = self.slot(j, j);
            self.data[sj] = d;
            for i in (j + 1)..(j + bw + 1).min(n) {
                let lo_i = i.saturating_sub(bw).max(lo);
                let mut s = self.data[self.slot(i, j)];
                for k in lo_i..j {
                    s -= self.data[self.slot(i, k)] * self.data[self.slot(j, k)];
                }
                let sij = self.slot(i, j);
                self.data[sij] = s / d;
            }
        }
        Ok(BandedCholesky { l: self })
    }
}

#[derive(Clone, Debug)]
pub struct BandedCholesky {
    l: BandedSym,
}

impl BandedCholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let l = &self.l;
        let (n, bw) = (l.n, l.bw);
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in i.saturating_sub(bw)..i {
                s -= l.data[l.slot(i, k)] * y[k];
            }
            y[i] = s / l.data[l.slot(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..(i + bw + 1).min(n) {
                s -= l.data[l.slot(k, i)] * y[k];
            }
            y[i] = s / l.data[l.slot(i, i)];
        }
        y
    }
}

/// Solves a small dense SPD system `A x = b` (`A` row-major) by a square-root
/// free `L D L^T` factorisation, which is exact on diagonal systems.
pub fn dense_spd_solve(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    check_len(n * n, a.len())?;
    let mut l = vec![0.0; n * n];
    let mut d = vec![0.0; n];
    for j in 0..n {
        let mut dj = a[j * n + j];
        for k in 0..j {
            dj -= l[j * n + k] * l[j * n + k] * d[k];
        }
        if !(dj > 0.0) || !dj.is_finite() {
            return Err(Error::Numerical(format!("non-positive pivot {dj:e} at row {j}")));
        }
        d[j] = dj;
        l[j * n + j] = 1.0;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k] * d[k];
            }
            l[i * n + j] = s / dj;
        }
    }
    let mut x = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            x[i] -= l[i * n + k] * x[k];
        }
    }
    for i in 0..n {
        x[i] /= d[i];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            x[i] -= l[k * n + i] * x[k];
        }
    }
    Ok(x)
}
