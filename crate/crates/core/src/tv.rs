//! Forward-difference gradient and its negative adjoint on a pixel grid.
//!
//! Pixel `(i, j)` (column `i`, row `j`) has index `j * nx + i`. Edge fields
//! store two components per pixel, interleaved: `p[2 * pix]` is the
//! horizontal difference, `p[2 * pix + 1]` the vertical one. Differences that
//! would leave the grid are zero.

use crate::error::{check_len, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PixelGrid {
    pub nx: usize,
    pub ny: usize,
}

impl PixelGrid {
    pub fn new(nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::config("pixel grid must be nonempty"));
        }
        Ok(PixelGrid { nx, ny })
    }

    pub fn square(n: usize) -> Result<Self> {
        Self::new(n, n)
    }

    pub fn n_pixels(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn pixel(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }
}

pub fn tv_grad(grid: &PixelGrid, u: &[f64]) -> Result<Vec<f64>> {
    check_len(grid.n_pixels(), u.len())?;
    let (nx, ny) = (grid.nx, grid.ny);
    let mut p = vec![0.0; 2 * u.len()];
    for j in 0..ny {
        for i in 0..nx {
            let k = grid.pixel(i, j);
            if i + 1 < nx {
                p[2 * k] = u[k + 1] - u[k];
            }
            if j + 1 < ny {
                p[2 * k + 1] = u[k + nx] - u[k];
            }
        }
    }
    Ok(p)
}

/// `div = -tv_grad^T`.
pub fn tv_div(grid: &PixelGrid, p: &[f64]) -> Result<Vec<f64>> {
    check_len(2 * grid.n_pixels(), p.len())?;
    let (nx, ny) = (grid.nx, grid.ny);
    let mut d = vec![0.0; grid.n_pixels()];
    for j in 0..ny {
        for i in 0..nx {
            let k = grid.pixel(i, j);
            let mut v = 0.0;
            if i + 1 < nx {
                v += p[2 * k];
            }
            if i > 0 {
                v -= p[2 * (k - 1)];
            }
            if j + 1 < ny {
                v += p[2 * k + 1];
            }
            if j > 0 {
                v -= p[2 * (k - nx) + 1];
            }
            d[k] = v;
        }
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_image_has_zero_gradient() {
        let g = PixelGrid::square(6).unwrap();
        assert!(tv_grad(&g, &vec![3.5; 36]).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn two_pixel_row() {
        let g = PixelGrid::new(2, 1).unwrap();
        let p = tv_grad(&g, &[0.0, 1.0]).unwrap();
        assert_eq!(p, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn div_is_negative_transpose_entrywise() {
        let g = PixelGrid::new(4, 3).unwrap();
        let n = g.n_pixels();
        // densify both maps column by column
        let mut grad_cols = vec![vec![0.0; 2 * n]; n];
        for (k, col) in grad_cols.iter_mut().enumerate() {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            *col = tv_grad(&g, &e).unwrap();
        }
        for r in 0..2 * n {
            let mut e = vec![0.0; 2 * n];
            e[r] = 1.0;
            let div_col = tv_div(&g, &e).unwrap();
            for k in 0..n {
                assert_eq!(div_col[k], -grad_cols[k][r]);
            }
        }
    }

    proptest! {
        #[test]
        fn adjointness_on_8x8(u in prop::collection::vec(-10.0f64..10.0, 64),
                              p in prop::collection::vec(-10.0f64..10.0, 128)) {
            let g = PixelGrid::square(8).unwrap();
            let gu = tv_grad(&g, &u).unwrap();
            let dp = tv_div(&g, &p).unwrap();
            let lhs: f64 = gu.iter().zip(&p).map(|(a, b)| a * b).sum();
            let rhs: f64 = u.iter().zip(&dp).map(|(a, b)| a * b).sum();
            let scale: f64 = 1.0 + gu.iter().zip(&p).map(|(a, b)| (a * b).abs()).sum::<f64>();
            prop_assert!((lhs + rhs).abs() <= 1e-12 * scale);
        }
    }
}
