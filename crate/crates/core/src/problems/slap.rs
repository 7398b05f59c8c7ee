//! `F(u) = (1/s) int |grad u|^s - int f u` with homogeneous Dirichlet data,
//! `G = 0`. Local problems are solved by damped Newton.

use std::sync::Arc;

use crate::error::{check_len, Error, Result};
use crate::framework::{dot, norm, Coefficients, EnergyModel, ProblemInstance};
use crate::grid::{assemble_load, slap_element, StructuredMesh};
use crate::linalg::BandedSym;
use crate::problems::fem::{FemLayout, FemPatch};
use crate::problems::{fingerprint, local_tolerance, LOCAL_MAX_ITER};

const HESSIAN_EPS: f64 = 1e-12;
const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 80;

#[derive(Clone, Debug, PartialEq)]
pub struct SLaplaceSpec {
    pub layout: FemLayout,
    pub s: f64,
    /// Constant right-hand side `f`.
    pub forcing: f64,
}

impl SLaplaceSpec {
    pub fn new(layout: FemLayout) -> Self {
        SLaplaceSpec {
            layout,
            s: 4.0,
            forcing: 1.0,
        }
    }
}

pub struct SLaplaceModel {
    mesh: StructuredMesh,
    s: f64,
    load: Vec<f64>,
    patches: Vec<FemPatch>,
}

impl SLaplaceModel {
    pub fn mesh(&self) -> &StructuredMesh {
        &self.mesh
    }

    pub fn load(&self) -> &[f64] {
        &self.load
    }

    /// Local objective `omega (F_T(v + R^* w) - <R b, w>) + (1 - omega) <R F'(v), w>`
    /// over the patch triangles, up to a constant, and optionally its gradient.
    fn local_objective(&self, p: &FemPatch, v: &[f64], w: &[f64], lin: &[f64], omega: f64) -> (f64, Vec<f64>) {
        let vals = p.values(v, w);
        let area = self.mesh.triangle_area();
        let tris = self.mesh.triangles();
        let mut e = 0.0;
        let mut nodal = vec![0.0; p.nodes.len()];
        for &(ti, loc) in &p.tris {
            let (et, gt) = slap_element(&tris[ti], loc.map(|a| vals[a]), self.s, area);
            e += et;
            for (a, g) in loc.iter().zip(gt) {
                nodal[*a] += g;
            }
        }
        let mut grad = vec![0.0; p.dim];
        p.restrict_add(&nodal, &mut grad);
        let mut f = omega * e;
        for l in 0..p.dim {
            f += lin[l] * w[l];
            grad[l] = omega * grad[l] + lin[l];
        }
        (f, grad)
    }

    fn local_hessian(&self, p: &FemPatch, v: &[f64], w: &[f64], omega: f64) -> BandedSym {
        let vals = p.values(v, w);
        let area = self.mesh.triangle_area();
        let tris = self.mesh.triangles();
        let mut h = BandedSym::zeros(p.dim, p.bandwidth);
        for &(ti, loc) in &p.tris {
            let t = &tris[ti];
            let g = t.gradient(loc.map(|a| vals[a]));
            let r = g[0] * g[0] + g[1] * g[1] + HESSIAN_EPS;
            let c0 = r.powf((self.s - 2.0) / 2.0);
            let c1 = (self.s - 2.0) * r.powf((self.s - 4.0) / 2.0);
            let d = &t.basis_grads;
            for a in 0..3 {
                if p.terms[loc[a]].is_empty() {
                    continue;
                }
                let da = d[a];
                let ga = g[0] * da[0] + g[1] * da[1];
                for b in 0..3 {
                    let db = d[b];
                    let gb = g[0] * db[0] + g[1] * db[1];
                    let hab = omega * area * (c0 * (da[0] * db[0] + da[1] * db[1]) + c1 * ga * gb);
                    for &(l1, w1) in &p.terms[loc[a]] {
                        for &(l2, w2) in &p.terms[loc[b]] {
                            if l1 >= l2 {
                                h.add(l1, l2, w1 * w2 * hab);
                            }
                        }
                    }
                }
            }
        }
        h
    }

    fn newton_direction(&self, p: &FemPatch, v: &[f64], w: &[f64], g: &[f64], omega: f64) -> Vec<f64> {
        let rhs: Vec<f64> = g.iter().map(|x| -x).collect();
        let h = self.local_hessian(p, v, w, omega);
        let scale = h.max_diag().max(f64::MIN_POSITIVE);
        let mut shift = 0.0;
        for _ in 0..6 {
            let mut hs = h.clone();
            hs.shift_diag(shift);
            if let Ok(ch) = hs.cholesky() {
                let d = ch.solve(&rhs);
                if d.iter().all(|x| x.is_finite()) {
                    return d;
                }
            }
            shift = if shift == 0.0 { 1e-12 * scale } else { shift * 100.0 };
        }
        rhs
    }
}

impl EnergyModel for SLaplaceModel {
    fn n_dof(&self) -> usize {
        self.mesh.n_nodes()
    }

    fn eval_f(&self, u: &[f64]) -> f64 {
        let area = self.mesh.triangle_area();
        let e: f64 = self
            .mesh
            .triangles()
            .iter()
            .map(|t| slap_element(t, t.nodes.map(|n| u[n]), self.s, area).0)
            .sum();
        e - dot(&self.load, u)
    }

    fn grad_f(&self, u: &[f64]) -> Vec<f64> {
        match crate::grid::slap_energy_grad(&self.mesh, self.s, u) {
            Ok((_, g)) => g.iter().zip(&self.load).map(|(a, b)| a - b).collect(),
            Err(_) => vec![f64::NAN; u.len()],
        }
    }

    fn eval_g(&self, _u: &[f64]) -> f64 {
        0.0
    }

    fn is_fixed(&self, dof: usize) -> bool {
        self.mesh.is_boundary(dof)
    }

    fn local_solve(&self, k: usize, v: &[f64], omega: f64) -> Result<Coefficients> {
        check_len(self.n_dof(), v.len())?;
        let p = self.patches.get(k).ok_or(Error::LocalSolve {
            k,
            reason: "no such subspace".into(),
        })?;
        let fail = |reason: String| Error::LocalSolve { k, reason };
        // R F'(v) over the patch, which contains every triangle touching the support
        let zeros = vec![0.0; p.dim];
        let mut load_k = vec![0.0; p.dim];
        let nodal_load: Vec<f64> = p.nodes.iter().map(|&n| self.load[n]).collect();
        p.restrict_add(&nodal_load, &mut load_k);
        let minus_load: Vec<f64> = load_k.iter().map(|x| -x).collect();
        let (_, grad_v) = self.local_objective(p, v, &zeros, &minus_load, 1.0);
        let lin: Vec<f64> = grad_v
            .iter()
            .zip(&load_k)
            .map(|(gv, b)| (1.0 - omega) * gv - omega * b)
            .collect();

        let mut w = zeros;
        let (mut phi, mut g) = self.local_objective(p, v, &w, &lin, omega);
        let tol = local_tolerance(norm(&g));
        for _ in 0..LOCAL_MAX_ITER {
            if !phi.is_finite() {
                return Err(fail("non-finite local energy".into()));
            }
            if norm(&g) <= tol {
                return Ok(w.into());
            }
            let mut d = self.newton_direction(p, v, &w, &g, omega);
            let mut slope = dot(&g, &d);
            if !(slope < 0.0) {
                d = g.iter().map(|x| -x).collect();
                slope = -dot(&g, &g);
            }
            // the predicted decrease is below the resolution of phi
            if -slope <= 4.0 * f64::EPSILON * phi.abs() {
                return Ok(w.into());
            }
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..MAX_HALVINGS {
                let trial: Vec<f64> = w.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
                let (pt, gt) = self.local_objective(p, v, &trial, &lin, omega);
                if pt < phi && pt <= phi + ARMIJO_C * alpha * slope {
                    accepted = Some((trial, pt, gt));
                    break;
                }
                alpha *= 0.5;
            }
            match accepted {
                Some((trial, pt, gt)) => {
                    w = trial;
                    phi = pt;
                    g = gt;
                }
                // no representable decrease left: w is as good as roundoff allows
                None => return Ok(w.into()),
            }
        }
        Err(fail(format!("Newton did not converge in {LOCAL_MAX_ITER} iterations")))
    }
}

pub fn make_slap(spec: &SLaplaceSpec) -> Result<ProblemInstance> {
    if !(spec.s > 1.0 && spec.s.is_finite()) {
        return Err(Error::config(format!(
            "s-Laplace exponent must exceed 1, got {}",
            spec.s
        )));
    }
    if !spec.forcing.is_finite() {
        return Err(Error::config("forcing must be finite"));
    }
    let (mesh, decomp) = spec.layout.build()?;
    let load = assemble_load(&mesh, |_, _| spec.forcing);
    let patches = decomp.subspaces().iter().map(|s| FemPatch::new(&mesh, s)).collect();
    let n = mesh.n_nodes();
    let model = SLaplaceModel {
        mesh,
        s: spec.s,
        load,
        patches,
    };
    let canonical = format!("slap;{};s={:e};f={:e}", spec.layout.canonical(), spec.s, spec.forcing);
    ProblemInstance::new(
        Box::new(model),
        Arc::new(decomp),
        Coefficients::zeros(n),
        "slap",
        fingerprint(&canonical),
    )
}
