//! Closed-form references: the radially symmetric flat minimizer, the saddle and
//! n-periodic isometric immersions, energy bounds and the `(n, tau)` crossover map.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Configuration, DomainError, Grid, PlateParams, ScalarField, WaveNumber};
use crate::energy::Sym2;
use crate::ops::{DiffOperators, DXX, DXY, DYY, LAP};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error("crossover diagram needs c_fit > 0, got {0}")]
    NonPositiveFit(f64),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Radial potential `a ln r + b r^2 + c r^2 ln r + q r^4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialPotential {
    pub log: f64,
    pub square: f64,
    pub square_log: f64,
    pub quartic: f64,
}

impl RadialPotential {
    pub fn value(&self, r: f64) -> f64 {
        let l = r.ln();
        self.log * l + self.square * r * r + self.square_log * r * r * l + self.quartic * r.powi(4)
    }

    pub fn d1(&self, r: f64) -> f64 {
        self.log / r + 2.0 * self.square * r + self.square_log * (2.0 * r * r.ln() + r) + 4.0 * self.quartic * r.powi(3)
    }

    pub fn d2(&self, r: f64) -> f64 {
        -self.log / (r * r) + 2.0 * self.square + self.square_log * (2.0 * r.ln() + 3.0) + 12.0 * self.quartic * r * r
    }

    pub fn laplacian(&self, r: f64) -> f64 {
        4.0 * self.square + self.square_log * (4.0 * r.ln() + 4.0) + 16.0 * self.quartic * r * r
    }

    /// Radial and hoop stresses `(Phi'/r, Phi'')`.
    pub fn stress(&self, r: f64) -> (f64, f64) {
        (self.d1(r) / r, self.d2(r))
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// `int_a^b f` with composite Gauss-Legendre, `panels` panels of `order` points.
pub fn gauss_integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize, order: usize) -> f64 {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut s = 0.0;
    for k in 0..panels {
        let mid = a + (k as f64 + 0.5) * h;
        s += x.iter().zip(&w).map(|(xi, wi)| wi * f(mid + 0.5 * h * xi)).sum::<f64>() * 0.5 * h;
    }
    s
}

/// Radially symmetric configuration with `eta = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatSolution {
    pub params: PlateParams,
    pub phi: RadialPotential,
    pub energy_f: f64,
}

/// Minimizer over flat configurations: the single-valued radial displacement with
/// traction-free edges.
pub fn flat_solution(params: &PlateParams) -> FlatSolution {
    let (r0, nu) = (params.r0(), params.nu());
    let phi = RadialPotential {
        log: -(1.0 + nu) * r0 * r0 / 8.0,
        square: (1.0 + nu) * (1.0 + r0 * r0) / 16.0,
        square_log: 0.0,
        quartic: -(1.0 + nu) / 32.0,
    };
    let energy_f = PI * (1.0 + nu) * (1.0 - r0 * r0).powi(3) / 48.0;
    FlatSolution { params: *params, phi, energy_f }
}

/// Potential built from `r^2`, `r^2 ln r` and `r^4` only, normalized by `ln r0`.
/// Its `r^2 ln r` part corresponds to a multivalued displacement, so it is not
/// in the admissible flat class; it is kept for comparison with [`flat_solution`].
pub fn log_square_potential(params: &PlateParams) -> RadialPotential {
    let (r0, nu) = (params.r0(), params.nu());
    let l = r0.ln();
    let k = (1.0 + nu) / (32.0 * l);
    RadialPotential {
        log: 0.0,
        square: k * (r0 * r0 - 1.0 - 2.0 * l),
        square_log: k * 2.0 * (r0 * r0 - 1.0),
        quartic: -k * l,
    }
}

/// Closed-form energy formula that accompanies [`log_square_potential`].
pub fn log_square_energy_formula(params: &PlateParams) -> f64 {
    let (r0, nu) = (params.r0(), params.nu());
    let l = r0.ln();
    let s = r0 * r0 - 1.0;
    (1.0 + nu) * PI / (32.0 * l * l)
        * (0.5 * s.powi(3) + s * s * (r0 * r0 + 1.0) * l + 2.0 / 3.0 * (1.0 - r0.powi(6)) * l * l)
}

/// `2 pi int (Delta Phi)^2 / (1 + nu) r dr` by high-order Gauss quadrature.
pub fn laplacian_energy_exact(phi: &RadialPotential, r0: f64, nu: f64) -> f64 {
    2.0 * PI / (1.0 + nu) * gauss_integrate(|r| phi.laplacian(r).powi(2) * r, r0, 1.0, 16, 20)
}

impl FlatSolution {
    /// Cartesian strain `gamma` at radius `r`, angle `theta`.
    pub fn strain(&self, r: f64, theta: f64) -> Sym2 {
        let nu = self.params.nu();
        let (srr, stt) = self.phi.stress(r);
        let grr = (srr - nu * stt) / (1.0 + nu);
        let gtt = (stt - nu * srr) / (1.0 + nu);
        let (s, c) = theta.sin_cos();
        Sym2::new(grr * c * c + gtt * s * s, (grr - gtt) * s * c, grr * s * s + gtt * c * c)
    }

    /// Radial displacement `u(r)` with `chi = u e_r`.
    pub fn radial_displacement(&self, r: f64) -> f64 {
        let nu = self.params.nu();
        let (srr, stt) = self.phi.stress(r);
        let gtt = (stt - nu * srr) / (1.0 + nu);
        0.5 * r * (gtt + r * r / 3.0)
    }

    pub fn configuration(&self, grid: Arc<Grid>) -> Result<Configuration, DomainError> {
        let u = |r: f64| self.radial_displacement(r);
        let eta = ScalarField::zeros(grid.clone());
        let chi1 = ScalarField::from_polar(grid.clone(), |r, t| u(r) * t.cos())?;
        let chi2 = ScalarField::from_polar(grid.clone(), |r, t| u(r) * t.sin())?;
        Ok(Configuration::new(self.params.with_n(grid.wave_number().get())?, eta, chi1, chi2)?.project_periodic())
    }
}

/// Grid quadrature of `(Delta Phi)^2 / (1 + nu)` with the closed-form Laplacian.
pub fn flat_stretch_via_laplacian(flat: &FlatSolution, grid: &Grid) -> f64 {
    laplacian_quadrature(&flat.phi, flat.params.nu(), grid)
}

pub fn laplacian_quadrature(phi: &RadialPotential, nu: f64, grid: &Grid) -> f64 {
    let v: Vec<f64> = (0..grid.len()).map(|p| phi.laplacian(grid.r(p)).powi(2) / (1.0 + nu)).collect();
    grid.integrate(&v)
}

/// Odd periodic extension of `y (x - cot(pi/n) y)` across the `2n` rays.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImmersionFamily {
    n: WaveNumber,
}

impl ImmersionFamily {
    pub fn new(n: WaveNumber) -> Self {
        Self { n }
    }

    pub fn n(&self) -> WaveNumber {
        self.n
    }

    /// Sector index and local coordinates `(x', y')` in that sector's frame.
    fn local(&self, r: f64, theta: f64) -> (usize, f64, f64) {
        let a = self.n.sector_angle();
        let t = theta.rem_euclid(2.0 * PI);
        let m = ((t / a).floor() as usize).min(2 * self.n.get() as usize - 1);
        let alpha = t - m as f64 * a;
        (m, r * alpha.cos(), r * alpha.sin())
    }

    fn sign(m: usize) -> f64 {
        if m % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Sector profile in local coordinates.
    pub fn sector_eta(&self, x: f64, y: f64) -> f64 {
        y * (x - self.n.cot() * y)
    }

    pub fn eta(&self, r: f64, theta: f64) -> f64 {
        let a = self.n.sector_angle();
        let (m, _, _) = self.local(r, theta);
        let alpha = theta.rem_euclid(2.0 * PI) - m as f64 * a;
        Self::sign(m) * r * r * alpha.sin() * (a - alpha).sin() / a.sin()
    }

    /// In-plane displacement making the strain vanish inside every sector.
    pub fn chi(&self, r: f64, theta: f64) -> (f64, f64) {
        let (m, x, y) = self.local(r, theta);
        let c = self.n.cot();
        let l1 = -x * y * y / 3.0 + c * y.powi(3) / 3.0;
        let l2 = -x * x * y / 3.0 + c * x * y * y - 2.0 * c * c / 3.0 * y.powi(3);
        let (s, co) = (m as f64 * self.n.sector_angle()).sin_cos();
        (co * l1 - s * l2, s * l1 + co * l2)
    }

    /// Hessian inside the sector containing `theta` (a one-sided limit on rays).
    pub fn hessian(&self, theta: f64) -> Sym2 {
        let (m, _, _) = self.local(1.0, theta);
        let c = self.n.cot();
        let (s, co) = (m as f64 * self.n.sector_angle()).sin_cos();
        // R H' R^T with H' = [[0, 1], [1, -2c]]
        let (h11, h12, h22) = (0.0, 1.0, -2.0 * c);
        let a11 = co * co * h11 - 2.0 * s * co * h12 + s * s * h22;
        let a12 = s * co * (h11 - h22) + (co * co - s * s) * h12;
        let a22 = s * s * h11 + 2.0 * s * co * h12 + co * co * h22;
        let g = Self::sign(m);
        Sym2::new(g * a11, g * a12, g * a22)
    }

    /// Sector-wise `Q(D^2 eta)` integrated over the annulus.
    pub fn bending_closed_form(&self, r0: f64, nu: f64) -> f64 {
        let c = self.n.cot();
        (4.0 * PI * c * c / (1.0 - nu) + 2.0 * PI) * (1.0 - r0 * r0)
    }
}

/// Configuration of the n-periodic isometric immersion on `grid`.
pub fn periodic_immersion(params: &PlateParams, grid: Arc<Grid>) -> Result<Configuration, DomainError> {
    let fam = ImmersionFamily::new(grid.wave_number());
    let params = params.with_n(grid.wave_number().get())?;
    let eta = ScalarField::from_polar(grid.clone(), |r, t| fam.eta(r, t))?;
    let chi1 = ScalarField::from_polar(grid.clone(), |r, t| fam.chi(r, t).0)?;
    let chi2 = ScalarField::from_polar(grid.clone(), |r, t| fam.chi(r, t).1)?;
    Ok(Configuration::new(params, eta, chi1, chi2)?.project_periodic())
}

/// Discrete bending energy of the immersion. Nodes whose azimuthal stencil crosses a
/// ray (where the curvature jumps) use the one-sided sector Hessian instead.
pub fn immersion_reference_bending(config: &Configuration, ops: &DiffOperators) -> f64 {
    let grid = ops.grid();
    let fam = ImmersionFamily::new(grid.wave_number());
    let nu = config.params().nu();
    let eta = config.eta.values();
    let smooth = grid.wave_number().get() == 2;
    let v: Vec<f64> = (0..grid.len())
        .map(|p| {
            let (_, j) = grid.ij(p);
            let k = j % grid.columns_per_sector();
            let near = k.min(grid.columns_per_sector() - k) < 2;
            let (h, lap) = if near && !smooth {
                let inside = grid.theta(p) + if k == 0 { 0.5 * grid.dtheta() } else { 0.0 };
                let h = fam.hessian(inside);
                (h, h.trace())
            } else {
                let h = Sym2::new(ops.second.dot(DXX, p, eta), ops.second.dot(DXY, p, eta), ops.second.dot(DYY, p, eta));
                (h, ops.second.dot(LAP, p, eta))
            };
            nu / (1.0 - nu) * lap * lap + h.norm2()
        })
        .collect();
    grid.integrate(&v)
}

/// `2 pi (1 - r0^2) tau^2`.
pub fn saddle_upper(params: &PlateParams) -> f64 {
    2.0 * PI * (1.0 - params.r0().powi(2)) * params.tau().powi(2)
}

/// `(4 pi cot^2(pi/n)/(1-nu) + 2 pi)(1 - r0^2) tau^2`.
pub fn periodic_upper(params: &PlateParams, n: WaveNumber) -> f64 {
    ImmersionFamily::new(n).bending_closed_form(params.r0(), params.nu()) * params.tau().powi(2)
}

/// Thickness below which buckled configurations beat the flat one.
pub fn crossover_tau_star(params: &PlateParams) -> f64 {
    (flat_solution(params).energy_f / (4.0 * PI * (1.0 - params.r0().powi(2)))).sqrt()
}

/// One minimized energy from a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepDatum {
    pub n: u32,
    pub tau: f64,
    pub energy: f64,
}

/// Relative slack on the upper bounds.
pub const SANDWICH_TOL: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundViolation {
    pub n: u32,
    pub tau: f64,
    pub energy: f64,
    pub bound: f64,
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    #[serde(rename = "F")]
    pub f: f64,
    pub saddle_upper: f64,
    pub periodic_upper: BTreeMap<u32, f64>,
    pub c_fit: Option<f64>,
    pub tau_star: f64,
    pub sandwich_ok: Option<bool>,
    pub violations: Vec<BoundViolation>,
}

impl BoundsReport {
    /// `c_fit n tau^2` if a fit exists.
    pub fn fitted_lower(&self, n: u32, tau: f64) -> Option<f64> {
        self.c_fit.map(|c| c * n as f64 * tau * tau)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Evaluates the bounds at `params.tau()` for `n = 2..=n_max` and, with sweep data,
/// fits `c` and checks every datum against the sandwich.
///
/// The fit is the minimum of `E/(n tau^2)` over data with `tau < tau_star/3`. A datum
/// is a lower-bound violation when it falls below half the fit taken over all other
/// data.
pub fn bounds_report(params: &PlateParams, n_max: u32, sweep: Option<&[SweepDatum]>) -> BoundsReport {
    let flat = flat_solution(params);
    let tau_star = crossover_tau_star(params);
    let mut periodic = BTreeMap::new();
    let mut ns: Vec<u32> = (2..=n_max.max(2)).collect();
    if let Some(data) = sweep {
        ns.extend(data.iter().map(|d| d.n));
    }
    for n in ns {
        if let Ok(w) = WaveNumber::new(n) {
            periodic.insert(n, periodic_upper(params, w));
        }
    }
    let mut report = BoundsReport {
        f: flat.energy_f,
        saddle_upper: saddle_upper(params),
        periodic_upper: periodic,
        c_fit: None,
        tau_star,
        sandwich_ok: None,
        violations: Vec::new(),
    };
    let Some(data) = sweep else { return report };
    let small: Vec<(usize, f64)> = data
        .iter()
        .enumerate()
        .filter(|(_, d)| d.tau < tau_star / 3.0 && d.energy.is_finite())
        .map(|(k, d)| (k, d.energy / (d.n as f64 * d.tau * d.tau)))
        .collect();
    report.c_fit = small.iter().map(|s| s.1).reduce(f64::min);
    for (k, d) in data.iter().enumerate() {
        let pu = WaveNumber::new(d.n)
            .ok()
            .and_then(|w| params.with_tau(d.tau).ok().map(|p| periodic_upper(&p, w)))
            .unwrap_or(f64::INFINITY);
        let upper = pu.min(flat.energy_f);
        if !(d.energy <= upper * (1.0 + SANDWICH_TOL)) {
            report.violations.push(BoundViolation { n: d.n, tau: d.tau, energy: d.energy, bound: upper, kind: "upper".into() });
        }
        if small.iter().any(|s| s.0 == k) {
            let others = small.iter().filter(|s| s.0 != k).map(|s| s.1).reduce(f64::min);
            if let Some(c) = others {
                let lower = 0.5 * c * d.n as f64 * d.tau * d.tau;
                if d.energy < lower {
                    report.violations.push(BoundViolation { n: d.n, tau: d.tau, energy: d.energy, bound: lower, kind: "lower".into() });
                }
            }
        }
    }
    report.sandwich_ok = Some(report.violations.is_empty());
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    FlatDominated,
    ImmersionScaling,
    Excluded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossoverCell {
    pub n: u32,
    pub tau: f64,
    pub regime: Regime,
}

/// `n* = 2 pi (1 - r0^2) / c`: beyond it the lower bound exceeds the saddle energy.
pub fn n_star(params: &PlateParams, c_fit: f64) -> f64 {
    2.0 * PI * (1.0 - params.r0().powi(2)) / c_fit
}

pub fn crossover_diagram(
    params: &PlateParams,
    c_fit: f64,
    n_range: std::ops::RangeInclusive<u32>,
    taus: &[f64],
) -> Result<Vec<CrossoverCell>, AnalyticError> {
    if !(c_fit > 0.0) {
        return Err(AnalyticError::NonPositiveFit(c_fit));
    }
    let f = flat_solution(params).energy_f;
    let ns = n_star(params, c_fit);
    let mut out = Vec::new();
    for n in n_range {
        for &tau in taus {
            let lower = c_fit * n as f64 * tau * tau;
            let regime = if lower >= 0.5 * f {
                Regime::FlatDominated
            } else if n as f64 > ns {
                Regime::Excluded
            } else {
                Regime::ImmersionScaling
            };
            out.push(CrossoverCell { n, tau, regime });
        }
    }
    Ok(out)
}
