//! Euler-Lagrange residuals of a converged configuration.
//!
//! The Airy potential is recovered from the strain by weighted least squares on its
//! second derivatives, and its misfit measures how far the stress is from equilibrium.
//! All residuals are weighted L2 norms.

use serde::{Deserialize, Serialize};

use crate::domain::{pairwise_sum, Configuration};
use crate::energy::{nodal_fields, Sym2};
use crate::ops::{DiffOperators, DXX, DXY, DYY};
use crate::sparse::GramPlan;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElDiagnostics {
    /// `Delta^2 Phi / (2(1+nu)) + det D^2 eta + 1` on interior nodes.
    pub first_fvk: f64,
    /// `tau^2 Delta^2 eta / (4(1-nu)) - [Phi, eta]` on interior nodes.
    pub second_fvk: f64,
    /// Traction `sigma n` on both edges.
    pub stress_bc: f64,
    /// Moment condition `eta_nn + nu eta_tt` on both edges.
    pub moment_bc: f64,
    /// Shear condition `d_n Delta eta / (1-nu) + d_t (n^T D^2 eta t)` on both edges.
    pub shear_bc: f64,
    /// Interior misfit of the recovered potential's Hessian against the stress,
    /// relative to the stress.
    pub phi_fit: f64,
    pub phi_error: Option<String>,
}

/// Stress from strain: `nu/(1-nu) tr(gamma) I + gamma`.
pub fn stress_of(g: &Sym2, nu: f64) -> Sym2 {
    let t = nu / (1.0 - nu) * g.trace();
    Sym2::new(g.a11 + t, g.a12, g.a22 + t)
}

/// `[f, g] = (f_xx g_yy + f_yy g_xx - 2 f_xy g_xy) / 2`.
pub fn bracket(f: &Sym2, g: &Sym2) -> f64 {
    0.5 * (f.a11 * g.a22 + f.a22 * g.a11 - 2.0 * f.a12 * g.a12)
}

/// Least-squares potential whose Hessian matches `cof(sigma)`, or an error message.
pub fn reconstruct_phi(stress: &[Sym2], ops: &DiffOperators) -> Result<Vec<f64>, String> {
    let grid = ops.grid();
    let n = grid.len();
    let mut row_ptr = vec![0];
    let mut cols = Vec::new();
    let mut jv = Vec::new();
    let mut rhs = Vec::new();
    let s2 = std::f64::consts::SQRT_2;
    for p in 0..n {
        let sw = grid.weights()[p].sqrt();
        let c = ops.second.cols(p);
        let s = &stress[p];
        for (set, scale, target) in [(DXX, 1.0, s.a22), (DXY, s2, -s.a12), (DYY, 1.0, s.a11)] {
            cols.extend_from_slice(c);
            jv.extend(ops.second.coeffs(set, p).iter().map(|v| sw * scale * v));
            rhs.push(sw * scale * target);
            row_ptr.push(cols.len());
        }
    }
    let plan = GramPlan::new(n, &row_ptr, &cols).map_err(|e| e.to_string())?;
    let mut h = vec![0.0; plan.nnz()];
    plan.assemble(&row_ptr, &cols, &jv, &mut h);
    let mut b = vec![0.0; n];
    for (row, &t) in rhs.iter().enumerate() {
        for e in row_ptr[row]..row_ptr[row + 1] {
            b[cols[e]] += jv[e] * t;
        }
    }
    let d = plan.diagonal(&h);
    let floor = 1e-12 * d.iter().fold(0.0f64, |m, v| m.max(*v));
    plan.solve_damped(&h, 1e-13, floor, &mut b).map_err(|e| e.to_string())?;
    Ok(b)
}

fn weighted_norm(vals: impl Iterator<Item = (f64, f64)>) -> f64 {
    let v: Vec<f64> = vals.map(|(w, r)| w * r * r).collect();
    pairwise_sum(&v).sqrt()
}

pub fn el_diagnostics(config: &Configuration, ops: &DiffOperators) -> ElDiagnostics {
    let grid = ops.grid();
    let (nu, tau) = (config.params().nu(), config.params().tau());
    let nf = nodal_fields(config.eta.values(), config.chi1.values(), config.chi2.values(), ops);
    let stress: Vec<Sym2> = nf.gamma.iter().map(|g| stress_of(g, nu)).collect();
    let interior: Vec<bool> = (0..grid.len())
        .map(|p| {
            let (i, _) = grid.ij(p);
            i >= 4 && i + 5 <= grid.nr()
        })
        .collect();
    let w = grid.weights();

    let lap_eta = &nf.lap;
    let bilap_eta = ops.laplacian(lap_eta);

    // Delta Phi = tr(sigma) and [Phi, eta] = sigma : D^2 eta / 2 hold for any potential
    // with cof(D^2 Phi) = sigma, so both equations are evaluated from the stress.
    let tr_sigma: Vec<f64> = stress.iter().map(|s| s.trace()).collect();
    let bilap_phi = ops.laplacian(&tr_sigma);
    let first_fvk = weighted_norm((0..grid.len()).filter(|&p| interior[p]).map(|p| {
        (w[p], bilap_phi[p] / (2.0 * (1.0 + nu)) + nf.hess[p].det() + 1.0)
    }));
    let second_fvk = weighted_norm((0..grid.len()).filter(|&p| interior[p]).map(|p| {
        let s = &stress[p];
        let h = &nf.hess[p];
        let br = 0.5 * (s.a11 * h.a11 + 2.0 * s.a12 * h.a12 + s.a22 * h.a22);
        (w[p], tau * tau * bilap_eta[p] / (4.0 * (1.0 - nu)) - br)
    }));
    let (phi_fit, phi_error) = match reconstruct_phi(&stress, ops) {
        Ok(phi) => {
            let (pxx, pxy, pyy) = ops.hessian(&phi);
            let mis = weighted_norm((0..grid.len()).filter(|&p| interior[p]).map(|p| {
                let s = &stress[p];
                let d = Sym2::new(pxx[p] - s.a22, pxy[p] + s.a12, pyy[p] - s.a11);
                (w[p], d.norm2().sqrt())
            }));
            let scale = weighted_norm((0..grid.len()).map(|p| (w[p], stress[p].norm2().sqrt())));
            (mis / scale.max(f64::MIN_POSITIVE), None)
        }
        Err(e) => (f64::NAN, Some(e)),
    };

    let dr_lap = ops.dr.apply(lap_eta);
    let mixed: Vec<f64> = (0..grid.len())
        .map(|p| {
            let (s, c) = grid.theta(p).sin_cos();
            let h = &nf.hess[p];
            // e_r^T H e_theta with e_r = (c, s), e_theta = (-s, c)
            -c * s * h.a11 + (c * c - s * s) * h.a12 + s * c * h.a22
        })
        .collect();
    let dt_mixed = ops.dt.apply(&mixed);
    let edge: Vec<usize> = (0..grid.ntheta())
        .flat_map(|j| [grid.node(0, j), grid.node(grid.nr() - 1, j)])
        .collect();
    let ds = grid.dtheta();
    let stress_bc = weighted_norm(edge.iter().map(|&p| {
        let (s, c) = grid.theta(p).sin_cos();
        let t = &stress[p];
        let (tx, ty) = (t.a11 * c + t.a12 * s, t.a12 * c + t.a22 * s);
        (grid.r(p) * ds, (tx * tx + ty * ty).sqrt())
    }));
    let moment_bc = weighted_norm(edge.iter().map(|&p| {
        let (s, c) = grid.theta(p).sin_cos();
        let h = &nf.hess[p];
        let nn = c * c * h.a11 + 2.0 * s * c * h.a12 + s * s * h.a22;
        let tt = s * s * h.a11 - 2.0 * s * c * h.a12 + c * c * h.a22;
        (grid.r(p) * ds, nn + nu * tt)
    }));
    let shear_bc = weighted_norm(edge.iter().map(|&p| {
        (grid.r(p) * ds, dr_lap[p] / (1.0 - nu) + dt_mixed[p] / grid.r(p))
    }));
    ElDiagnostics { first_fvk, second_fvk, stress_bc, moment_bc, shear_bc, phi_fit, phi_error }
}
