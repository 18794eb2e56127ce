//! Problem parameters, the polar grid over the annulus and n-periodic bookkeeping.
//!
//! The annulus `r0 <= r <= 1` is covered by a uniform mesh in `(r, theta)` with
//! `theta` periodic on `[0, 2pi)`. Nodes are stored row-major in `(i_r, i_theta)`.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("inner radius r0 must lie in (0, 1), got {0}")]
    InnerRadius(f64),
    #[error("Poisson ratio nu must lie in [0, 1), got {0}")]
    Poisson(f64),
    #[error("tau must be positive and finite, got {0}")]
    Tau(f64),
    #[error("wave number n must be at least 2, got {0}")]
    WaveNumber(u32),
    #[error("target curvature K0 must be negative, got {0}")]
    Curvature(f64),
    #[error("physical thickness and radius must be positive, got t = {t}, R = {radius}")]
    PhysicalLength { t: f64, radius: f64 },
    #[error("stored tau {stored} does not match tau {derived} derived from (t, R, K0)")]
    TauMismatch { stored: f64, derived: f64 },
    #[error("grid needs nr >= 8 and ntheta >= 8, got {nr} x {ntheta}")]
    GridTooSmall { nr: usize, ntheta: usize },
    #[error("ntheta must be divisible by 2n (ntheta = {ntheta}, n = {n})")]
    RayAlignment { ntheta: usize, n: u32 },
    #[error("field has {got} values but the grid has {expected} nodes")]
    FieldLength { got: usize, expected: usize },
    #[error("field value at node {0} is not finite")]
    NonFinite(usize),
    #[error("fields do not share one grid")]
    GridMismatch,
}

/// Number of waves; the profile vanishes on the `2n` rays `theta = m pi / n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct WaveNumber(u32);

impl WaveNumber {
    pub fn new(n: u32) -> Result<Self, DomainError> {
        if n < 2 {
            return Err(DomainError::WaveNumber(n));
        }
        Ok(Self(n))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    /// Opening angle `pi / n` of one sector between neighbouring rays.
    pub fn sector_angle(self) -> f64 {
        PI / self.0 as f64
    }

    /// `cot(pi / n)`, exactly zero for `n = 2`.
    pub fn cot(self) -> f64 {
        if self.0 == 2 {
            0.0
        } else {
            1.0 / self.sector_angle().tan()
        }
    }
}

impl TryFrom<u32> for WaveNumber {
    type Error = DomainError;
    fn try_from(n: u32) -> Result<Self, Self::Error> {
        Self::new(n)
    }
}

impl From<WaveNumber> for u32 {
    fn from(n: WaveNumber) -> u32 {
        n.0
    }
}

impl std::fmt::Display for WaveNumber {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Dimensional description of a sheet: thickness `t`, outer radius `R`, target curvature `K0 < 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub thickness: f64,
    pub radius: f64,
    pub k0: f64,
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<(), DomainError> {
        if !(self.thickness > 0.0 && self.radius > 0.0)
            || !self.thickness.is_finite()
            || !self.radius.is_finite()
        {
            return Err(DomainError::PhysicalLength { t: self.thickness, radius: self.radius });
        }
        if !(self.k0 < 0.0) || !self.k0.is_finite() {
            return Err(DomainError::Curvature(self.k0));
        }
        Ok(())
    }

    /// Dimensionless curvature `sqrt(|K0|) R`.
    pub fn epsilon(&self) -> f64 {
        self.k0.abs().sqrt() * self.radius
    }

    /// Dimensionless thickness `t / (sqrt(3) R epsilon)`.
    pub fn tau(&self) -> f64 {
        self.thickness / (3f64.sqrt() * self.radius * self.epsilon())
    }
}

/// Parameters of one problem instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPlateParams", into = "RawPlateParams")]
pub struct PlateParams {
    r0: f64,
    nu: f64,
    tau: f64,
    n: WaveNumber,
    physical: Option<PhysicalParams>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct RawPlateParams {
    r0: f64,
    nu: f64,
    tau: f64,
    n: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    physical: Option<PhysicalParams>,
}

impl TryFrom<RawPlateParams> for PlateParams {
    type Error = DomainError;
    fn try_from(raw: RawPlateParams) -> Result<Self, Self::Error> {
        let p = PlateParams::new(raw.r0, raw.nu, raw.tau, raw.n)?;
        match raw.physical {
            Some(phys) => p.with_physical(phys),
            None => Ok(p),
        }
    }
}

impl From<PlateParams> for RawPlateParams {
    fn from(p: PlateParams) -> Self {
        RawPlateParams { r0: p.r0, nu: p.nu, tau: p.tau, n: p.n.get(), physical: p.physical }
    }
}

impl PlateParams {
    pub fn new(r0: f64, nu: f64, tau: f64, n: u32) -> Result<Self, DomainError> {
        if !(r0 > 0.0 && r0 < 1.0) {
            return Err(DomainError::InnerRadius(r0));
        }
        if !(0.0..1.0).contains(&nu) {
            return Err(DomainError::Poisson(nu));
        }
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(DomainError::Tau(tau));
        }
        Ok(Self { r0, nu, tau, n: WaveNumber::new(n)?, physical: None })
    }

    /// Builds parameters whose `tau` is derived from the physical set.
    pub fn from_physical(r0: f64, nu: f64, n: u32, phys: PhysicalParams) -> Result<Self, DomainError> {
        phys.validate()?;
        Self::new(r0, nu, phys.tau(), n)?.with_physical(phys)
    }

    /// Attaches a physical set, checking it reproduces the stored `tau`.
    pub fn with_physical(mut self, phys: PhysicalParams) -> Result<Self, DomainError> {
        phys.validate()?;
        let derived = phys.tau();
        if ((derived - self.tau) / self.tau).abs() > 1e-12 {
            return Err(DomainError::TauMismatch { stored: self.tau, derived });
        }
        self.physical = Some(phys);
        Ok(self)
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }
    pub fn nu(&self) -> f64 {
        self.nu
    }
    pub fn tau(&self) -> f64 {
        self.tau
    }
    pub fn n(&self) -> WaveNumber {
        self.n
    }
    pub fn physical(&self) -> Option<&PhysicalParams> {
        self.physical.as_ref()
    }

    /// Same instance at another thickness. A physical set is dropped since it pins `tau`.
    pub fn with_tau(&self, tau: f64) -> Result<Self, DomainError> {
        Self::new(self.r0, self.nu, tau, self.n.get())
    }

    pub fn with_n(&self, n: u32) -> Result<Self, DomainError> {
        let mut p = Self::new(self.r0, self.nu, self.tau, n)?;
        p.physical = self.physical;
        Ok(p)
    }

    /// Annulus area `pi (1 - r0^2)`.
    pub fn area(&self) -> f64 {
        PI * (1.0 - self.r0 * self.r0)
    }
}

/// Uniform polar mesh on the annulus.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    nr: usize,
    ntheta: usize,
    n: WaveNumber,
    r0: f64,
    dr: f64,
    dtheta: f64,
    r_nodes: Vec<f64>,
    theta_nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Builds the mesh for `params`; rays `theta = m pi / n` must fall on grid lines.
pub fn build_grid(params: &PlateParams, nr: usize, ntheta: usize) -> Result<Arc<Grid>, DomainError> {
    Grid::new(params.r0(), params.n(), nr, ntheta).map(Arc::new)
}

impl Grid {
    pub fn new(r0: f64, n: WaveNumber, nr: usize, ntheta: usize) -> Result<Self, DomainError> {
        if !(r0 > 0.0 && r0 < 1.0) {
            return Err(DomainError::InnerRadius(r0));
        }
        if nr < 8 || ntheta < 8 {
            return Err(DomainError::GridTooSmall { nr, ntheta });
        }
        if ntheta % (2 * n.get() as usize) != 0 {
            return Err(DomainError::RayAlignment { ntheta, n: n.get() });
        }
        let dr = (1.0 - r0) / (nr - 1) as f64;
        let dtheta = 2.0 * PI / ntheta as f64;
        let mut r_nodes: Vec<f64> = (0..nr).map(|i| r0 + i as f64 * dr).collect();
        r_nodes[nr - 1] = 1.0;
        let theta_nodes: Vec<f64> = (0..ntheta).map(|j| j as f64 * dtheta).collect();
        let mut weights = Vec::with_capacity(nr * ntheta);
        for (i, &r) in r_nodes.iter().enumerate() {
            let wr = if i == 0 || i == nr - 1 { 0.5 * dr } else { dr };
            for _ in 0..ntheta {
                weights.push(wr * dtheta * r);
            }
        }
        Ok(Self { nr, ntheta, n, r0, dr, dtheta, r_nodes, theta_nodes, weights })
    }

    pub fn nr(&self) -> usize {
        self.nr
    }
    pub fn ntheta(&self) -> usize {
        self.ntheta
    }
    pub fn len(&self) -> usize {
        self.nr * self.ntheta
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn wave_number(&self) -> WaveNumber {
        self.n
    }
    pub fn r0(&self) -> f64 {
        self.r0
    }
    pub fn dr(&self) -> f64 {
        self.dr
    }
    pub fn dtheta(&self) -> f64 {
        self.dtheta
    }
    pub fn r_nodes(&self) -> &[f64] {
        &self.r_nodes
    }
    pub fn theta_nodes(&self) -> &[f64] {
        &self.theta_nodes
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> usize {
        i * self.ntheta + j
    }

    #[inline]
    pub fn ij(&self, p: usize) -> (usize, usize) {
        (p / self.ntheta, p % self.ntheta)
    }

    #[inline]
    pub fn r(&self, p: usize) -> f64 {
        self.r_nodes[p / self.ntheta]
    }

    #[inline]
    pub fn theta(&self, p: usize) -> f64 {
        self.theta_nodes[p % self.ntheta]
    }

    pub fn xy(&self, p: usize) -> (f64, f64) {
        let (r, t) = (self.r(p), self.theta(p));
        (r * t.cos(), r * t.sin())
    }

    /// Number of theta columns per sector.
    pub fn columns_per_sector(&self) -> usize {
        self.ntheta / (2 * self.n.get() as usize)
    }

    pub fn is_ray_column(&self, j: usize) -> bool {
        j % self.columns_per_sector() == 0
    }

    pub fn is_ray_node(&self, p: usize) -> bool {
        self.is_ray_column(p % self.ntheta)
    }

    /// Sector index `m` with `m pi/n <= theta < (m+1) pi/n`.
    pub fn sector_of_column(&self, j: usize) -> usize {
        j / self.columns_per_sector()
    }

    /// Angular distance from column `j` to the nearest ray.
    pub fn ray_distance(&self, j: usize) -> f64 {
        let k = j % self.columns_per_sector();
        let m = self.columns_per_sector() - k;
        k.min(m) as f64 * self.dtheta
    }

    /// Quadrature of nodal values (trapezoid in r, periodic trapezoid in theta, Jacobian r).
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        let prod: Vec<f64> = values.iter().zip(&self.weights).map(|(v, w)| v * w).collect();
        pairwise_sum(&prod)
    }
}

/// Index-ordered pairwise summation; the reduction tree depends only on the length.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// One real value per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self, DomainError> {
        if values.len() != grid.len() {
            return Err(DomainError::FieldLength { got: values.len(), expected: grid.len() });
        }
        if let Some(p) = values.iter().position(|v| !v.is_finite()) {
            return Err(DomainError::NonFinite(p));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        Self { grid, values: vec![0.0; n] }
    }

    /// Samples `f(r, theta)` at every node.
    pub fn from_polar(grid: Arc<Grid>, f: impl Fn(f64, f64) -> f64) -> Result<Self, DomainError> {
        let values = (0..grid.len()).map(|p| f(grid.r(p), grid.theta(p))).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access for callers that keep values finite.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn integral(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Degrees of freedom `(eta, chi1, chi2)` on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    pub eta: ScalarField,
    pub chi1: ScalarField,
    pub chi2: ScalarField,
    params: PlateParams,
    periodic: bool,
}

impl Configuration {
    pub fn new(
        params: PlateParams,
        eta: ScalarField,
        chi1: ScalarField,
        chi2: ScalarField,
    ) -> Result<Self, DomainError> {
        if !Arc::ptr_eq(eta.grid(), chi1.grid()) && eta.grid() != chi1.grid()
            || !Arc::ptr_eq(eta.grid(), chi2.grid()) && eta.grid() != chi2.grid()
        {
            return Err(DomainError::GridMismatch);
        }
        if eta.grid().wave_number() != params.n() {
            return Err(DomainError::RayAlignment { ntheta: eta.grid().ntheta(), n: params.n().get() });
        }
        Ok(Self { eta, chi1, chi2, params, periodic: false })
    }

    pub fn zeros(params: PlateParams, grid: Arc<Grid>) -> Result<Self, DomainError> {
        let z = ScalarField::zeros(grid);
        Self::new(params, z.clone(), z.clone(), z)
    }

    pub fn params(&self) -> &PlateParams {
        &self.params
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.eta.grid()
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    /// Same fields under other parameters (for example a new `tau` on a ladder).
    pub fn with_params(&self, params: PlateParams) -> Result<Self, DomainError> {
        if params.n() != self.params.n() {
            return Err(DomainError::RayAlignment { ntheta: self.grid().ntheta(), n: params.n().get() });
        }
        let mut c = self.clone();
        c.params = params;
        Ok(c)
    }

    /// Zeroes `eta` on all `2n` rays; `chi` is untouched.
    pub fn project_periodic(&self) -> Self {
        let mut out = self.clone();
        let grid = out.eta.grid.clone();
        for p in 0..grid.len() {
            if grid.is_ray_node(p) {
                out.eta.values[p] = 0.0;
            }
        }
        out.periodic = true;
        out
    }

    /// CSV dump with header `r,theta,eta,chi1,chi2`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["r", "theta", "eta", "chi1", "chi2"])?;
        let g = self.grid();
        for p in 0..g.len() {
            wr.write_record([
                fmt17(g.r(p)),
                fmt17(g.theta(p)),
                fmt17(self.eta.values[p]),
                fmt17(self.chi1.values[p]),
                fmt17(self.chi2.values[p]),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads a dump written by [`Configuration::write_csv`] back onto `grid`.
    pub fn read_csv<R: std::io::Read>(
        params: PlateParams,
        grid: Arc<Grid>,
        rd: R,
    ) -> Result<Self, FieldIoError> {
        let mut rdr = csv::Reader::from_reader(rd);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["r", "theta", "eta", "chi1", "chi2"] {
            return Err(FieldIoError::Header(headers.iter().collect::<Vec<_>>().join(",")));
        }
        let (mut eta, mut chi1, mut chi2) = (Vec::new(), Vec::new(), Vec::new());
        for (p, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |k: usize| -> Result<f64, FieldIoError> {
                rec.get(k)
                    .ok_or(FieldIoError::Row(p))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| FieldIoError::Row(p))
            };
            if p >= grid.len() {
                return Err(FieldIoError::Domain(DomainError::FieldLength {
                    got: p + 1,
                    expected: grid.len(),
                }));
            }
            let (r, t) = (parse(0)?, parse(1)?);
            if (r - grid.r(p)).abs() > 1e-12 || (t - grid.theta(p)).abs() > 1e-12 {
                return Err(FieldIoError::NodeMismatch(p));
            }
            eta.push(parse(2)?);
            chi1.push(parse(3)?);
            chi2.push(parse(4)?);
        }
        let c = Configuration::new(
            params,
            ScalarField::new(grid.clone(), eta)?,
            ScalarField::new(grid.clone(), chi1)?,
            ScalarField::new(grid, chi2)?,
        )?;
        let periodic = (0..c.grid().len())
            .all(|p| !c.grid().is_ray_node(p) || c.eta.values[p] == 0.0);
        Ok(if periodic { c.project_periodic() } else { c })
    }
}

#[derive(Debug, Error)]
pub enum FieldIoError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("unexpected field header '{0}'")]
    Header(String),
    #[error("malformed row {0}")]
    Row(usize),
    #[error("row {0} does not sit on the expected grid node")]
    NodeMismatch(usize),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// 17 significant digits, enough for an exact f64 round trip.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}
