//! Dual total variation denoising: `F(p) = |div p + f / lambda|^2 / 2` with
//! `G` the indicator of `|p_ij| <= 1` at every pixel. One-level
//! decomposition into overlapping pixel blocks; local problems are solved by
//! FISTA with gradient restart.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::decomposition::{build_pixel_subdomains, Decomposition};
use crate::error::{check_len, Error, Result};
use crate::framework::{dot, Coefficients, EnergyModel, ProblemInstance};
use crate::problems::{fingerprint, local_tolerance, LOCAL_MAX_ITER};
use crate::tv::{tv_div, tv_grad, PixelGrid};

/// Pixel vectors longer than `1 + FEASIBILITY_TOL` are infeasible.
pub const FEASIBILITY_TOL: f64 = 1e-13;

#[derive(Clone, Debug, PartialEq)]
pub struct DualTvSpec {
    /// Pixels per side.
    pub pixels: usize,
    /// Blocks per side are `coarse_m - 1`.
    pub coarse_m: usize,
    pub delta_layers: usize,
    pub lambda: f64,
    /// Standard deviation of Gaussian noise added to the disk datum.
    pub noise: f64,
    pub seed: u64,
}

impl DualTvSpec {
    /// Matches a finite element layout with `m` nodes per side: one pixel per cell.
    pub fn from_mesh_size(m: usize, coarse_m: usize, delta_layers: usize) -> Self {
        DualTvSpec {
            pixels: m.saturating_sub(1),
            coarse_m,
            delta_layers,
            lambda: 0.1,
            noise: 0.0,
            seed: 0,
        }
    }
}

/// Indicator of the disk of radius 0.25 centred in the unit square, sampled at
/// pixel centres.
pub fn disk_image(grid: &PixelGrid) -> Vec<f64> {
    let mut f = vec![0.0; grid.n_pixels()];
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let x = (i as f64 + 0.5) / grid.nx as f64 - 0.5;
            let y = (j as f64 + 0.5) / grid.ny as f64 - 0.5;
            if x * x + y * y <= 0.0625 {
                f[grid.pixel(i, j)] = 1.0;
            }
        }
    }
    f
}

#[derive(Clone, Copy, Debug)]
struct Block {
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
}

pub struct DualTvModel {
    grid: PixelGrid,
    lambda: f64,
    image: Vec<f64>,
    /// `f / lambda`
    shift: Vec<f64>,
    blocks: Vec<Block>,
}

impl DualTvModel {
    pub fn grid(&self) -> &PixelGrid {
        &self.grid
    }

    pub fn image(&self) -> &[f64] {
        &self.image
    }

    /// The primal image `f + lambda div p`.
    pub fn primal(&self, p: &[f64]) -> Result<Vec<f64>> {
        let d = tv_div(&self.grid, p)?;
        Ok(self.image.iter().zip(&d).map(|(f, d)| f + self.lambda * d).collect())
    }

    fn residual(&self, p: &[f64]) -> Vec<f64> {
        let d = tv_div(&self.grid, p).expect("length checked by caller");
        d.iter().zip(&self.shift).map(|(a, b)| a + b).collect()
    }
}

/// Scales `(a, b)` into the unit disk.
#[inline]
pub fn project_disk(a: f64, b: f64) -> (f64, f64) {
    let r = (a * a + b * b).sqrt();
    if r > 1.0 {
        (a / r, b / r)
    } else {
        (a, b)
    }
}

/// Work arrays for one block solve. The window is the block grown by one
/// pixel right and up, which holds every divergence value the block touches.
struct Window<'a> {
    grid: &'a PixelGrid,
    b: Block,
    wx1: usize,
    wy1: usize,
}

impl Window<'_> {
    fn bw(&self) -> usize {
        self.b.x1 - self.b.x0
    }

    fn ww(&self) -> usize {
        self.wx1 - self.b.x0
    }

    fn n_window(&self) -> usize {
        self.ww() * (self.wy1 - self.b.y0)
    }

    /// `z + div(R^* w)` on the window.
    fn residual(&self, z: &[f64], w: &[f64], out: &mut [f64]) {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let (bw, ww) = (self.bw(), self.ww());
        for j in self.b.y0..self.wy1 {
            for i in self.b.x0..self.wx1 {
                let mut d = 0.0;
                let inb = |ii: usize, jj: usize| ii >= self.b.x0 && ii < self.b.x1 && jj >= self.b.y0 && jj < self.b.y1;
                let loc = |ii: usize, jj: usize| 2 * ((jj - self.b.y0) * bw + (ii - self.b.x0));
                if inb(i, j) {
                    if i + 1 < nx {
                        d += w[loc(i, j)];
                    }
                    if j + 1 < ny {
                        d += w[loc(i, j) + 1];
                    }
                }
                if i > 0 && inb(i - 1, j) {
                    d -= w[loc(i - 1, j)];
                }
                if j > 0 && inb(i, j - 1) {
                    d -= w[loc(i, j - 1) + 1];
                }
                out[(j - self.b.y0) * ww + (i - self.b.x0)] = z[self.grid.pixel(i, j)] + d;
            }
        }
    }

    /// `-tv_grad` of a window field, restricted to the block dofs, scaled and
    /// accumulated: `out += scale * grad`.
    fn neg_grad_add(&self, r: &[f64], scale: f64, out: &mut [f64]) {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let (bw, ww) = (self.bw(), self.ww());
        for j in self.b.y0..self.b.y1 {
            for i in self.b.x0..self.b.x1 {
                let wi = (j - self.b.y0) * ww + (i - self.b.x0);
                let l = 2 * ((j - self.b.y0) * bw + (i - self.b.x0));
                if i + 1 < nx {
                    out[l] += scale * (r[wi] - r[wi + 1]);
                }
                if j + 1 < ny {
                    out[l + 1] += scale * (r[wi] - r[wi + ww]);
                }
            }
        }
    }

    /// Same as [`Window::neg_grad_add`] for a global field.
    fn neg_grad_global(&self, z: &[f64], out: &mut [f64]) {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let bw = self.bw();
        for j in self.b.y0..self.b.y1 {
            for i in self.b.x0..self.b.x1 {
                let k = self.grid.pixel(i, j);
                let l = 2 * ((j - self.b.y0) * bw + (i - self.b.x0));
                out[l] = if i + 1 < nx { z[k] - z[k + 1] } else { 0.0 };
                out[l + 1] = if j + 1 < ny { z[k] - z[k + nx] } else { 0.0 };
            }
        }
    }
}

impl EnergyModel for DualTvModel {
    fn n_dof(&self) -> usize {
        2 * self.grid.n_pixels()
    }

    fn eval_f(&self, p: &[f64]) -> f64 {
        let r = self.residual(p);
        0.5 * dot(&r, &r)
    }

    fn grad_f(&self, p: &[f64]) -> Vec<f64> {
        let r = self.residual(p);
        tv_grad(&self.grid, &r)
            .expect("length checked by caller")
            .iter()
            .map(|x| -x)
            .collect()
    }

    fn eval_g(&self, p: &[f64]) -> f64 {
        let bound = (1.0 + FEASIBILITY_TOL) * (1.0 + FEASIBILITY_TOL);
        if p.chunks_exact(2).all(|c| c[0] * c[0] + c[1] * c[1] <= bound) {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn local_solve(&self, k: usize, v: &[f64], omega: f64) -> Result<Coefficients> {
        check_len(self.n_dof(), v.len())?;
        let b = *self.blocks.get(k).ok_or(Error::LocalSolve {
            k,
            reason: "no such subspace".into(),
        })?;
        let win = Window {
            grid: &self.grid,
            b,
            wx1: (b.x1 + 1).min(self.grid.nx),
            wy1: (b.y1 + 1).min(self.grid.ny),
        };
        let dim = 2 * (b.x1 - b.x0) * (b.y1 - b.y0);
        let z = self.residual(v);
        let base: Vec<f64> = (b.y0..b.y1)
            .flat_map(|j| (b.x0..b.x1).map(move |i| (i, j)))
            .flat_map(|(i, j)| {
                let q = self.grid.pixel(i, j);
                [v[2 * q], v[2 * q + 1]]
            })
            .collect();
        // linear part (1 - omega) R F'(v)
        let mut lin = vec![0.0; dim];
        win.neg_grad_global(&z, &mut lin);
        lin.iter_mut().for_each(|x| *x *= 1.0 - omega);

        let mut r = vec![0.0; win.n_window()];
        let objective = |w: &[f64], r: &mut [f64]| {
            win.residual(&z, w, r);
            0.5 * omega * dot(r, r) + dot(&lin, w)
        };
        let gradient = |w: &[f64], r: &mut [f64], out: &mut [f64]| {
            win.residual(&z, w, r);
            out.copy_from_slice(&lin);
            win.neg_grad_add(r, omega, out);
        };
        // projected step from y, written to out; returns the squared step length
        let step = |y: &[f64], g: &[f64], inv_l: f64, out: &mut [f64]| {
            let mut s2 = 0.0;
            for c in 0..dim / 2 {
                let (a, bb) = (
                    base[2 * c] + y[2 * c] - inv_l * g[2 * c],
                    base[2 * c + 1] + y[2 * c + 1] - inv_l * g[2 * c + 1],
                );
                let (pa, pb) = project_disk(a, bb);
                out[2 * c] = pa - base[2 * c];
                out[2 * c + 1] = pb - base[2 * c + 1];
                s2 += (out[2 * c] - y[2 * c]).powi(2) + (out[2 * c + 1] - y[2 * c + 1]).powi(2);
            }
            s2
        };

        let lip = 8.0 * omega;
        let inv_l = 1.0 / lip;
        let mut w = vec![0.0; dim];
        let mut y = vec![0.0; dim];
        let mut w_next = vec![0.0; dim];
        let mut g = vec![0.0; dim];
        let phi0 = objective(&w, &mut r);
        let mut t = 1.0f64;
        let mut tol = None;
        let gap_tol = GAP_TOL * (1.0 + 0.5 * omega * dot(&z, &z));
        let mut gw = vec![0.0; dim];
        for it in 0..LOCAL_MAX_ITER {
            gradient(&y, &mut r, &mut g);
            let gm = lip * step(&y, &g, inv_l, &mut w_next).sqrt();
            let tol = *tol.get_or_insert_with(|| local_tolerance(gm));
            if gm <= tol {
                w.copy_from_slice(&w_next);
                break;
            }
            if it % GAP_EVERY == GAP_EVERY - 1 {
                gradient(&w_next, &mut r, &mut gw);
                if frank_wolfe_gap(&base, &w_next, &gw) <= gap_tol {
                    w.copy_from_slice(&w_next);
                    break;
                }
            }
            let restart: f64 = (0..dim).map(|i| (y[i] - w_next[i]) * (w_next[i] - w[i])).sum();
            if restart > 0.0 {
                t = 1.0;
                y.copy_from_slice(&w_next);
            } else {
                let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
                let beta = (t - 1.0) / t_next;
                for i in 0..dim {
                    y[i] = w_next[i] + beta * (w_next[i] - w[i]);
                }
                t = t_next;
            }
            std::mem::swap(&mut w, &mut w_next);
        }
        // an unfinished solve still returns its iterate when it descends
        if objective(&w, &mut r) > phi0 {
            return Ok(Coefficients::zeros(dim));
        }
        Ok(w.into())
    }
}

const GAP_EVERY: usize = 10;
/// Duality gap tolerance relative to the energy at the base point.
const GAP_TOL: f64 = 1e-10;

/// Largest first-order decrease available over the product of unit disks:
/// an upper bound on the suboptimality of `w` for a convex objective.
fn frank_wolfe_gap(base: &[f64], w: &[f64], g: &[f64]) -> f64 {
    (0..w.len() / 2)
        .map(|c| {
            let (gx, gy) = (g[2 * c], g[2 * c + 1]);
            gx * (base[2 * c] + w[2 * c]) + gy * (base[2 * c + 1] + w[2 * c + 1]) + gx.hypot(gy)
        })
        .sum()
}

pub fn make_dualtv(spec: &DualTvSpec) -> Result<ProblemInstance> {
    if !(spec.lambda > 0.0 && spec.lambda.is_finite()) {
        return Err(Error::config(format!("lambda must be positive, got {}", spec.lambda)));
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(Error::config("noise level must be nonnegative"));
    }
    if spec.coarse_m < 2 {
        return Err(Error::config("coarse_m must be at least 2"));
    }
    let grid = PixelGrid::square(spec.pixels)?;
    let mut image = disk_image(&grid);
    if spec.noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let normal = Normal::new(0.0, spec.noise).map_err(|e| Error::config(e.to_string()))?;
        for x in image.iter_mut() {
            *x += normal.sample(&mut rng);
        }
    }
    let h_coarse = 1.0 / (spec.coarse_m - 1) as f64;
    let subs = build_pixel_subdomains(&grid, h_coarse, spec.delta_layers, 2)?;
    let blocks = subs
        .iter()
        .map(|s| {
            let pix: Vec<usize> = s.support().iter().step_by(2).map(|d| d / 2).collect();
            let (xs, ys): (Vec<usize>, Vec<usize>) = pix.iter().map(|&q| (q % grid.nx, q / grid.nx)).unzip();
            Block {
                x0: *xs.iter().min().expect("nonempty"),
                x1: xs.iter().max().expect("nonempty") + 1,
                y0: *ys.iter().min().expect("nonempty"),
                y1: ys.iter().max().expect("nonempty") + 1,
            }
        })
        .collect();
    let decomp = Decomposition::new(subs)?;
    let shift = image.iter().map(|f| f / spec.lambda).collect();
    let n = 2 * grid.n_pixels();
    let model = DualTvModel {
        grid,
        lambda: spec.lambda,
        image,
        shift,
        blocks,
    };
    let canonical = format!(
        "dualtv;pixels={};coarse_m={};delta={};lambda={:e};noise={:e};seed={}",
        spec.pixels, spec.coarse_m, spec.delta_layers, spec.lambda, spec.noise, spec.seed
    );
    ProblemInstance::new(
        Box::new(model),
        Arc::new(decomp),
        Coefficients::zeros(n),
        "dualtv",
        fingerprint(&canonical),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::framework::{eval_energy, gradient_check};
    use rand::Rng;

    fn small() -> ProblemInstance {
        make_dualtv(&DualTvSpec::from_mesh_size(17, 5, 1)).unwrap()
    }

    fn random_feasible(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut p: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        for c in p.chunks_exact_mut(2) {
            let (a, b) = project_disk(c[0], c[1]);
            c[0] = a;
            c[1] = b;
        }
        p
    }

    #[test]
    fn projection_of_long_vector() {
        let (a, b) = project_disk(1.2, -1.6);
        assert!((a - 0.6).abs() < 1e-15 && (b + 0.8).abs() < 1e-15);
        assert_eq!(project_disk(0.3, 0.4), (0.3, 0.4));
    }

    #[test]
    fn initial_energy_counts_disk_pixels() {
        let p = small();
        let count = (0..16 * 16)
            .filter(|q| {
                let (i, j) = (q % 16, q / 16);
                let (x, y) = ((i as f64 + 0.5) / 16.0, (j as f64 + 0.5) / 16.0);
                (x - 0.5).powi(2) + (y - 0.5).powi(2) <= 0.0625
            })
            .count();
        assert!(count > 0);
        let e = p.energy(&p.initial_iterate).unwrap();
        assert!((e - 0.5 * count as f64 * 100.0).abs() < 1e-9);
    }

    #[test]
    fn zero_datum_has_zero_minimum() {
        let mut spec = DualTvSpec::from_mesh_size(17, 5, 1);
        spec.lambda = 1e300;
        let p = make_dualtv(&spec).unwrap();
        // f / lambda underflows to zero, so p = 0 is optimal
        assert_eq!(p.energy(&p.initial_iterate).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v = random_feasible(p.n_dof(), &mut rng);
        let ev = p.energy(&v).unwrap();
        for k in 0..p.num_subspaces() {
            let w = p.model.local_solve(k, &v, 1.0).unwrap();
            let mut u = v.clone();
            p.decomposition.subspace(k).prolong_add(&w, 1.0, &mut u).unwrap();
            assert!(p.energy(&u).unwrap() <= ev + 1e-10 * (1.0 + ev));
        }
    }

    #[test]
    fn gradient_check_at_feasible_points() {
        let p = small();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let v = random_feasible(p.n_dof(), &mut rng);
            assert!(gradient_check(p.model.as_ref(), &v, 1e-6) < 1e-6);
        }
    }

    #[test]
    fn local_solves_are_feasible_descent_steps() {
        let p = small();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let v: Vec<f64> = random_feasible(p.n_dof(), &mut rng).iter().map(|x| 0.5 * x).collect();
        let ev = eval_energy(p.model.as_ref(), &v).unwrap();
        for k in 0..p.num_subspaces() {
            let w = p.model.local_solve(k, &v, 1.0).unwrap();
            let mut u = v.clone();
            p.decomposition.subspace(k).prolong_add(&w, 1.0, &mut u).unwrap();
            let eu = p.energy(&u).unwrap();
            assert!(eu.is_finite());
            assert!(eu <= ev + 1e-10 * (1.0 + ev));
            // local gradient residual matches the dense formula after the step
            let g = p.model.grad_f(&u);
            let sub = p.decomposition.subspace(k);
            let rg = sub.restrict_grad(&g).unwrap();
            let ul = sub.gather(&u);
            let mut worst = 0.0f64;
            for c in 0..ul.len() / 2 {
                let (a, b) = project_disk(ul[2 * c] - rg[2 * c] / 8.0, ul[2 * c + 1] - rg[2 * c + 1] / 8.0);
                worst = worst.max((a - ul[2 * c]).abs()).max((b - ul[2 * c + 1]).abs());
            }
            assert!(worst < 1e-6, "subspace {k}: {worst:e}");
        }
    }

    /// A block of one pixel whose window holds only itself reduces to a
    /// projected scalar least-squares problem with a closed form.
    #[test]
    fn single_pixel_closed_form() {
        // 2x1 grid: the left pixel's horizontal dof enters div at both pixels
        // and its vertical dof enters nothing, so the local problem is
        // min (px + c0)^2 + (c1 - px)^2 over the unit disk
        for (c0, c1, expect) in [(0.5, 1.5, 0.5), (-2.0, 3.0, 1.0), (2.0, -3.0, -1.0)] {
            let m = DualTvModel {
                grid: PixelGrid::new(2, 1).unwrap(),
                lambda: 1.0,
                image: vec![c0, c1],
                shift: vec![c0, c1],
                blocks: vec![Block {
                    x0: 0,
                    x1: 1,
                    y0: 0,
                    y1: 1,
                }],
            };
            let w = m.local_solve(0, &[0.0; 4], 1.0).unwrap();
            assert!((w[0] - expect).abs() < 1e-8, "{c0} {c1}: {}", w[0]);
            assert_eq!(w[1], 0.0);
        }
    }
}
