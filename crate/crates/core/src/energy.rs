//! Strain, the discrete energy `S + tau^2 B` and its least-squares form.
//!
//! Every node emits eight weighted residuals whose squares sum to the total energy:
//! four stretching terms built from the strain and four bending terms built from the
//! Hessian of `eta`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::{pairwise_sum, Configuration, Grid, ScalarField};
use crate::ops::{DiffOperators, DX, DXX, DXY, DY, DYY, LAP};

/// Residual rows emitted per node.
pub const ROWS_PER_NODE: usize = 8;

/// Symmetric 2x2 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Sym2 {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
}

impl Sym2 {
    pub fn new(a11: f64, a12: f64, a22: f64) -> Self {
        Self { a11, a12, a22 }
    }
    pub fn identity() -> Self {
        Self::new(1.0, 0.0, 1.0)
    }
    pub fn trace(&self) -> f64 {
        self.a11 + self.a22
    }
    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a12
    }
    /// Frobenius norm squared.
    pub fn norm2(&self) -> f64 {
        self.a11 * self.a11 + 2.0 * self.a12 * self.a12 + self.a22 * self.a22
    }
}

/// `tr(A)^2 / (1 - nu) - 2 det(A)`.
pub fn quadratic_form_q(a: &Sym2, nu: f64) -> f64 {
    a.trace().powi(2) / (1.0 - nu) - 2.0 * a.det()
}

/// The expanded form `nu/(1-nu) tr^2 + |A|^2` used by the discretization.
pub fn quadratic_form_expanded(a: &Sym2, nu: f64) -> f64 {
    nu / (1.0 - nu) * a.trace().powi(2) + a.norm2()
}

/// Cartesian in-plane strain.
#[derive(Debug, Clone, PartialEq)]
pub struct StrainField {
    pub gamma11: ScalarField,
    pub gamma12: ScalarField,
    pub gamma22: ScalarField,
}

impl StrainField {
    pub fn at(&self, p: usize) -> Sym2 {
        Sym2::new(self.gamma11.values()[p], self.gamma12.values()[p], self.gamma22.values()[p])
    }
}

/// Nodal derivatives needed by the energy.
#[derive(Debug, Clone)]
pub(crate) struct NodalFields {
    pub eta_x: Vec<f64>,
    pub eta_y: Vec<f64>,
    pub gamma: Vec<Sym2>,
    pub hess: Vec<Sym2>,
    pub lap: Vec<f64>,
}

pub(crate) fn nodal_fields(eta: &[f64], chi1: &[f64], chi2: &[f64], ops: &DiffOperators) -> NodalFields {
    let g = ops.grid();
    let n = g.len();
    let mut out = NodalFields {
        eta_x: Vec::with_capacity(n),
        eta_y: Vec::with_capacity(n),
        gamma: Vec::with_capacity(n),
        hess: Vec::with_capacity(n),
        lap: Vec::with_capacity(n),
    };
    for p in 0..n {
        let (x, y) = g.xy(p);
        let ex = ops.first.dot(DX, p, eta);
        let ey = ops.first.dot(DY, p, eta);
        let c1x = ops.first.dot(DX, p, chi1);
        let c1y = ops.first.dot(DY, p, chi1);
        let c2x = ops.first.dot(DX, p, chi2);
        let c2y = ops.first.dot(DY, p, chi2);
        out.gamma.push(Sym2::new(
            2.0 * c1x + ex * ex - y * y / 3.0,
            c1y + c2x + ex * ey + x * y / 3.0,
            2.0 * c2y + ey * ey - x * x / 3.0,
        ));
        out.eta_x.push(ex);
        out.eta_y.push(ey);
        out.hess.push(Sym2::new(
            ops.second.dot(DXX, p, eta),
            ops.second.dot(DXY, p, eta),
            ops.second.dot(DYY, p, eta),
        ));
        out.lap.push(ops.second.dot(LAP, p, eta));
    }
    out
}

fn fields_of(config: &Configuration) -> (&[f64], &[f64], &[f64]) {
    (config.eta.values(), config.chi1.values(), config.chi2.values())
}

pub fn compute_strain(config: &Configuration, ops: &DiffOperators) -> StrainField {
    let (e, c1, c2) = fields_of(config);
    let nf = nodal_fields(e, c1, c2, ops);
    let grid = ops.grid().clone();
    let field = |f: fn(&Sym2) -> f64| {
        ScalarField::new(grid.clone(), nf.gamma.iter().map(f).collect()).expect("finite strain")
    };
    StrainField { gamma11: field(|s| s.a11), gamma12: field(|s| s.a12), gamma22: field(|s| s.a22) }
}

/// Energies of one configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub stretch: f64,
    pub bend: f64,
    pub total: f64,
    pub tau: f64,
    pub residual_norm: f64,
    pub monge_ampere_median_bulk: f64,
}

impl EnergyBreakdown {
    /// Recombines stretching and bending at another thickness.
    pub fn with_tau(&self, tau: f64) -> Self {
        let total = self.stretch + tau * tau * self.bend;
        Self { tau, total, residual_norm: total.max(0.0).sqrt(), ..*self }
    }
}

/// Nodes away from both edges and all rays, where no boundary layer is expected.
pub fn bulk_mask(grid: &Grid) -> Vec<bool> {
    let margin = 0.15 * grid.wave_number().sector_angle();
    let (lo, hi) = (grid.r0() + 0.15, 0.85);
    (0..grid.len())
        .map(|p| {
            let (i, j) = grid.ij(p);
            let r = grid.r_nodes()[i];
            r >= lo - 1e-12 && r <= hi + 1e-12 && grid.ray_distance(j) >= margin - 1e-12
        })
        .collect()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

pub(crate) fn ma_median(hess: &[Sym2], grid: &Grid) -> f64 {
    let mask = bulk_mask(grid);
    median(
        hess.iter()
            .zip(&mask)
            .filter(|(_, &m)| m)
            .map(|(h, _)| (h.det() + 1.0).abs())
            .collect(),
    )
}

pub fn energy(config: &Configuration, ops: &DiffOperators) -> EnergyBreakdown {
    let (e, c1, c2) = fields_of(config);
    let nf = nodal_fields(e, c1, c2, ops);
    let grid = ops.grid();
    let nu = config.params().nu();
    let tau = config.params().tau();
    let w = grid.weights();
    let s: Vec<f64> = nf.gamma.iter().zip(w).map(|(g, w)| w * quadratic_form_expanded(g, nu)).collect();
    let b: Vec<f64> = nf
        .hess
        .iter()
        .zip(&nf.lap)
        .zip(w)
        .map(|((h, l), w)| w * (nu / (1.0 - nu) * l * l + h.norm2()))
        .collect();
    let stretch = pairwise_sum(&s);
    let bend = pairwise_sum(&b);
    let total = stretch + tau * tau * bend;
    EnergyBreakdown {
        stretch,
        bend,
        total,
        tau,
        residual_norm: total.sqrt(),
        monge_ampere_median_bulk: ma_median(&nf.hess, grid),
    }
}

/// Fills the eight residuals of every node, row `8p + k`.
pub(crate) fn fill_residuals(nf: &NodalFields, grid: &Grid, nu: f64, tau: f64, out: &mut [f64]) {
    let a = (nu / (1.0 - nu)).sqrt();
    let s2 = std::f64::consts::SQRT_2;
    for (p, w) in grid.weights().iter().enumerate() {
        let sw = w.sqrt();
        let g = &nf.gamma[p];
        let h = &nf.hess[p];
        let r = &mut out[ROWS_PER_NODE * p..ROWS_PER_NODE * (p + 1)];
        r[0] = sw * a * g.trace();
        r[1] = sw * g.a11;
        r[2] = sw * s2 * g.a12;
        r[3] = sw * g.a22;
        r[4] = sw * tau * a * nf.lap[p];
        r[5] = sw * tau * h.a11;
        r[6] = sw * tau * s2 * h.a12;
        r[7] = sw * tau * h.a22;
    }
}

pub fn residual_vector(config: &Configuration, ops: &DiffOperators) -> Vec<f64> {
    let (e, c1, c2) = fields_of(config);
    let nf = nodal_fields(e, c1, c2, ops);
    let mut out = vec![0.0; ROWS_PER_NODE * ops.grid().len()];
    fill_residuals(&nf, ops.grid(), config.params().nu(), config.params().tau(), &mut out);
    out
}

/// Gradient of the total energy, stored per field.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyGradient {
    pub eta: Vec<f64>,
    pub chi1: Vec<f64>,
    pub chi2: Vec<f64>,
}

impl EnergyGradient {
    pub fn norm(&self) -> f64 {
        self.eta.iter().chain(&self.chi1).chain(&self.chi2).map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Exact gradient; constrained ray values of `eta` carry zero.
pub fn energy_gradient(config: &Configuration, ops: &DiffOperators) -> EnergyGradient {
    let dofs = DofMap::new(ops.grid().clone(), config.is_periodic());
    let model = LsqModel::new(ops, dofs, config.params().nu(), config.params().tau());
    let x = model.dofs().gather(config);
    let mut r = vec![0.0; model.nrows()];
    let mut jv = vec![0.0; model.nnz()];
    model.evaluate(&x, &mut r, &mut jv);
    let g = model.gradient(&r, &jv);
    model.dofs().scatter_gradient(&g)
}

const NONE: usize = usize::MAX;

/// Numbering of the free unknowns, interleaved by node as `(eta, chi1, chi2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    grid: Arc<Grid>,
    eta: Vec<usize>,
    chi1: Vec<usize>,
    chi2: Vec<usize>,
    len: usize,
}

impl DofMap {
    /// With `eliminate_rays`, `eta` on the rays is fixed to zero and not an unknown.
    pub fn new(grid: Arc<Grid>, eliminate_rays: bool) -> Self {
        let n = grid.len();
        let (mut eta, mut chi1, mut chi2) = (vec![NONE; n], vec![0; n], vec![0; n]);
        let mut k = 0;
        for p in 0..n {
            if !(eliminate_rays && grid.is_ray_node(p)) {
                eta[p] = k;
                k += 1;
            }
            chi1[p] = k;
            chi2[p] = k + 1;
            k += 2;
        }
        Self { grid, eta, chi1, chi2, len: k }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn eta_dof(&self, p: usize) -> Option<usize> {
        (self.eta[p] != NONE).then_some(self.eta[p])
    }

    pub fn gather(&self, c: &Configuration) -> Vec<f64> {
        let mut x = vec![0.0; self.len];
        for p in 0..self.grid.len() {
            if let Some(k) = self.eta_dof(p) {
                x[k] = c.eta.values()[p];
            }
            x[self.chi1[p]] = c.chi1.values()[p];
            x[self.chi2[p]] = c.chi2.values()[p];
        }
        x
    }

    /// Nodal `(eta, chi1, chi2)` from an unknown vector.
    pub fn fields(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.grid.len();
        let eta = (0..n).map(|p| self.eta_dof(p).map_or(0.0, |k| x[k])).collect();
        let chi1 = (0..n).map(|p| x[self.chi1[p]]).collect();
        let chi2 = (0..n).map(|p| x[self.chi2[p]]).collect();
        (eta, chi1, chi2)
    }

    fn scatter_gradient(&self, g: &[f64]) -> EnergyGradient {
        let (eta, chi1, chi2) = self.fields(g);
        EnergyGradient { eta, chi1, chi2 }
    }
}

/// Residuals and a sparse Jacobian in compressed rows with a fixed pattern.
#[derive(Debug, Clone)]
pub struct LsqModel<'a> {
    ops: &'a DiffOperators,
    dofs: DofMap,
    nu: f64,
    tau: f64,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
}

impl<'a> LsqModel<'a> {
    pub fn new(ops: &'a DiffOperators, dofs: DofMap, nu: f64, tau: f64) -> Self {
        let grid = ops.grid();
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        for p in 0..grid.len() {
            for _ in 0..4 {
                for &q in ops.first.cols(p) {
                    if let Some(k) = dofs.eta_dof(q) {
                        cols.push(k);
                    }
                    cols.push(dofs.chi1[q]);
                    cols.push(dofs.chi2[q]);
                }
                row_ptr.push(cols.len());
            }
            for _ in 0..4 {
                for &q in ops.second.cols(p) {
                    if let Some(k) = dofs.eta_dof(q) {
                        cols.push(k);
                    }
                }
                row_ptr.push(cols.len());
            }
        }
        Self { ops, dofs, nu, tau, row_ptr, cols }
    }

    pub fn set_tau(&mut self, tau: f64) {
        self.tau = tau;
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn ops(&self) -> &DiffOperators {
        self.ops
    }

    pub fn nrows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn ncols(&self) -> usize {
        self.dofs.len()
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.cols
    }

    pub fn residuals(&self, x: &[f64], r: &mut [f64]) {
        let (e, c1, c2) = self.dofs.fields(x);
        let nf = nodal_fields(&e, &c1, &c2, self.ops);
        fill_residuals(&nf, self.ops.grid(), self.nu, self.tau, r);
    }

    /// Residuals and Jacobian values aligned with [`LsqModel::col_idx`].
    pub fn evaluate(&self, x: &[f64], r: &mut [f64], jv: &mut [f64]) {
        let (e, c1, c2) = self.dofs.fields(x);
        let nf = nodal_fields(&e, &c1, &c2, self.ops);
        let grid = self.ops.grid();
        fill_residuals(&nf, grid, self.nu, self.tau, r);
        let a = (self.nu / (1.0 - self.nu)).sqrt();
        let s2 = std::f64::consts::SQRT_2;
        let mut k = 0;
        for (p, w) in grid.weights().iter().enumerate() {
            let sw = w.sqrt();
            let (ex, ey) = (nf.eta_x[p], nf.eta_y[p]);
            let fc = self.ops.first.cols(p);
            let dx = self.ops.first.coeffs(DX, p);
            let dy = self.ops.first.coeffs(DY, p);
            for row in 0..4 {
                for (m, &q) in fc.iter().enumerate() {
                    let (gx, gy) = (dx[m], dy[m]);
                    // d gamma11, d gamma12, d gamma22 with respect to (eta, chi1, chi2) at q
                    let d11 = [2.0 * ex * gx, 2.0 * gx, 0.0];
                    let d12 = [ey * gx + ex * gy, gy, gx];
                    let d22 = [2.0 * ey * gy, 0.0, 2.0 * gy];
                    let d = |f: usize| match row {
                        0 => sw * a * (d11[f] + d22[f]),
                        1 => sw * d11[f],
                        2 => sw * s2 * d12[f],
                        _ => sw * d22[f],
                    };
                    if self.dofs.eta_dof(q).is_some() {
                        jv[k] = d(0);
                        k += 1;
                    }
                    jv[k] = d(1);
                    jv[k + 1] = d(2);
                    k += 2;
                }
            }
            let sc = self.ops.second.cols(p);
            let scale = [sw * self.tau * a, sw * self.tau, sw * self.tau * s2, sw * self.tau];
            let sets = [LAP, DXX, DXY, DYY];
            for row in 0..4 {
                let coef = self.ops.second.coeffs(sets[row], p);
                for (m, &q) in sc.iter().enumerate() {
                    if self.dofs.eta_dof(q).is_some() {
                        jv[k] = scale[row] * coef[m];
                        k += 1;
                    }
                }
            }
        }
        debug_assert_eq!(k, self.cols.len());
    }

    /// `2 J^T r`, the gradient of `|r|^2`.
    pub fn gradient(&self, r: &[f64], jv: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.ncols()];
        for (row, &rv) in r.iter().enumerate() {
            if rv == 0.0 {
                continue;
            }
            for k in self.row_ptr[row]..self.row_ptr[row + 1] {
                g[self.cols[k]] += 2.0 * jv[k] * rv;
            }
        }
        g
    }
}
