//! Boundary layers of near-isometric minimizers.
//!
//! Closed-form leading-order edge and inflection-line profiles, the width laws they
//! imply, and the empirical counterpart: threshold-crossing widths measured on
//! numerical minimizers and fitted against `tau` on log-log axes.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::domain::{Configuration, DomainError, PlateParams, WaveNumber};
use crate::kelvin::{self, KelvinError, KelvinPair};
use crate::ops::DiffOperators;

pub const DEFAULT_THRESHOLD: f64 = 0.1;
/// Rays closer than this fraction of `pi/n` to an inflection ray are skipped by edge fits.
pub const EDGE_RAY_MARGIN: f64 = 0.2;
/// Radial window sampled by inflection fits.
pub const INFLECTION_RADII: (f64, f64) = (0.3, 0.85);
pub const MIN_FIT_POINTS: usize = 4;
pub const MIN_FIT_DECADES: f64 = 1.5;

#[derive(Debug, Error)]
pub enum BlayerError {
    #[error("no inflection layer for n=2")]
    NoInflectionLayer,
    #[error("need at least {MIN_FIT_POINTS} results at distinct tau, got {0}")]
    TooFewPoints(usize),
    #[error("tau values span {0:.2} decades, need at least {MIN_FIT_DECADES}")]
    NarrowRange(f64),
    #[error("results do not share one grid and wave number")]
    MixedInputs,
    #[error("no ray produced a threshold crossing at tau = {0}")]
    NoCrossing(f64),
    #[error("threshold must lie in (0, 1), got {0}")]
    Threshold(f64),
    #[error("unknown layer kind {0:?}")]
    UnknownKind(String),
    #[error(transparent)]
    Kelvin(#[from] KelvinError),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    EdgeGauss,
    EdgeMean,
    Inflection,
}

impl LayerKind {
    pub fn label(self) -> &'static str {
        match self {
            LayerKind::EdgeGauss => "edge_gauss",
            LayerKind::EdgeMean => "edge_mean",
            LayerKind::Inflection => "inflection",
        }
    }

    /// Predicted power of `tau`.
    pub fn exponent(self) -> f64 {
        match self {
            LayerKind::EdgeGauss | LayerKind::EdgeMean => 0.5,
            LayerKind::Inflection => 1.0 / 3.0,
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for LayerKind {
    type Err = BlayerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "edge_gauss" => Ok(LayerKind::EdgeGauss),
            "edge_mean" => Ok(LayerKind::EdgeMean),
            "inflection" => Ok(LayerKind::Inflection),
            _ => Err(BlayerError::UnknownKind(s.to_string())),
        }
    }
}

/// `csc(pi/n) cos(theta) cos(pi/n - theta)` on `0 <= theta <= pi/n`.
pub fn lambda_n(n: WaveNumber, theta: f64) -> f64 {
    let a = n.sector_angle();
    theta.cos() * (a - theta).cos() / a.sin()
}

/// `e^{-k s} (c cos(k s) + s_ sin(k s))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampedSinusoid {
    pub cos: f64,
    pub sin: f64,
    pub rate: f64,
}

impl DampedSinusoid {
    pub fn value(&self, s: f64) -> f64 {
        let (sn, cs) = (self.rate * s).sin_cos();
        (-self.rate * s).exp() * (self.cos * cs + self.sin * sn)
    }

    pub fn derivative(&self) -> Self {
        let k = self.rate;
        Self { cos: k * (self.sin - self.cos), sin: -k * (self.cos + self.sin), rate: k }
    }

    pub fn nth_derivative(&self, m: usize) -> Self {
        (0..m).fold(*self, |d, _| d.derivative())
    }

    fn scaled(&self, c: f64) -> Self {
        Self { cos: c * self.cos, sin: c * self.sin, rate: self.rate }
    }
}

/// Leading-order edge layer in the rescaled distance `s = |r - r_edge| / tau^{1/2}`.
///
/// `eta = a - b` and `phi = c - d`, where `a`, `c` relax the Gaussian curvature
/// and `b`, `d` the mean curvature. Both pairs decay at
/// `kappa = sqrt(2) (1-nu^2)^{1/4} lambda^{1/2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeProfile {
    pub n: WaveNumber,
    pub nu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeComponents {
    pub a: DampedSinusoid,
    pub b: DampedSinusoid,
    pub c: DampedSinusoid,
    pub d: DampedSinusoid,
}

impl EdgeComponents {
    pub fn eta(&self, s: f64) -> f64 {
        self.a.value(s) - self.b.value(s)
    }

    pub fn phi(&self, s: f64) -> f64 {
        self.c.value(s) - self.d.value(s)
    }

    fn eta_derivative(&self, m: usize) -> (DampedSinusoid, DampedSinusoid) {
        (self.a.nth_derivative(m), self.b.nth_derivative(m))
    }

    fn phi_derivative(&self, m: usize) -> (DampedSinusoid, DampedSinusoid) {
        (self.c.nth_derivative(m), self.d.nth_derivative(m))
    }
}

impl EdgeProfile {
    pub fn new(n: WaveNumber, nu: f64) -> Self {
        Self { n, nu }
    }

    pub fn lambda(&self, theta: f64) -> f64 {
        lambda_n(self.n, theta)
    }

    pub fn decay_rate(&self, theta: f64) -> f64 {
        SQRT_2 * (1.0 - self.nu * self.nu).powf(0.25) * self.lambda(theta).sqrt()
    }

    /// Boundary value of `d^2 eta / ds^2` forced by the free-edge moment condition.
    pub fn boundary_curvature(&self, theta: f64) -> f64 {
        2.0 * self.n.cot() - 2.0 * (1.0 - self.nu) * self.lambda(theta)
    }

    pub fn components(&self, theta: f64) -> EdgeComponents {
        let k = self.decay_rate(theta);
        let lam = self.lambda(theta);
        let ratio = ((1.0 + self.nu) / (1.0 - self.nu)).sqrt();
        let unit_eta = DampedSinusoid { cos: 1.0, sin: -1.0, rate: k };
        let unit_phi = DampedSinusoid { cos: 1.0, sin: 1.0, rate: k };
        let gauss = -2.0 * (1.0 - self.nu) * lam;
        let mean = 2.0 * self.n.cot();
        let h = 1.0 / (2.0 * k * k);
        EdgeComponents {
            a: unit_eta.scaled(gauss * h),
            b: unit_eta.scaled(-mean * h),
            c: unit_phi.scaled(-gauss * ratio * h),
            d: unit_phi.scaled(mean * ratio * h),
        }
    }

    pub fn eval(&self, theta: f64, s: f64) -> (f64, f64) {
        let c = self.components(theta);
        (c.eta(s), c.phi(s))
    }

    /// Residuals of the two coupled layer equations at `(theta, s)`.
    pub fn equation_residuals(&self, theta: f64, s: f64) -> (f64, f64) {
        let c = self.components(theta);
        let lam = self.lambda(theta);
        let d = |(p, q): (DampedSinusoid, DampedSinusoid)| p.value(s) - q.value(s);
        let phi4 = d(c.phi_derivative(4));
        let eta2 = d(c.eta_derivative(2));
        let eta4 = d(c.eta_derivative(4));
        let phi2 = d(c.phi_derivative(2));
        (
            phi4 - 4.0 * (1.0 + self.nu) * lam * eta2,
            eta4 + 4.0 * (1.0 - self.nu) * lam * phi2,
        )
    }

    /// `(d phi/ds, d^3 eta/ds^3, d^2 eta/ds^2)` at the edge.
    pub fn boundary_values(&self, theta: f64) -> (f64, f64, f64) {
        let c = self.components(theta);
        let d = |(p, q): (DampedSinusoid, DampedSinusoid)| p.value(0.0) - q.value(0.0);
        (d(c.phi_derivative(1)), d(c.eta_derivative(3)), d(c.eta_derivative(2)))
    }
}

/// Leading-order layer along the inflection ray `theta = 0` for `n >= 3`, in the
/// coordinates `x` along the ray and `yt = y / tau^{1/3}` across it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InflectionProfile {
    pub n: WaveNumber,
    pub nu: f64,
    /// Kelvin argument scale: `u = a sqrt(z)`, `z = yt^3 / x`.
    pub a: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    /// Finite parts of `int_0^inf z^{-3/2} (Ker, Kei)(a sqrt z) dz`.
    pub limits: KelvinPair,
    fp_unit: KelvinPair,
}

impl InflectionProfile {
    pub fn new(n: WaveNumber, nu: f64) -> Result<Self, BlayerError> {
        if n.get() == 2 {
            return Err(BlayerError::NoInflectionLayer);
        }
        let s = (1.0 - nu * nu).powf(0.25);
        let a = 4.0 * 3f64.powf(-1.5) * s;
        let s3 = 3f64.sqrt();
        let s6 = 6f64.sqrt();
        let fp_unit = kelvin::finite_part_integral();
        Ok(Self {
            n,
            nu,
            a,
            c1: -(1.0 + s3) / (s6 * s * PI),
            c2: (s3 - 1.0) / (s6 * s * PI),
            c3: 1.0,
            c4: -((1.0 + nu) / (3.0 * (1.0 - nu))).sqrt(),
            limits: KelvinPair { ker: 2.0 * a * fp_unit.ker, kei: 2.0 * a * fp_unit.kei },
            fp_unit,
        })
    }

    fn ratio(&self) -> f64 {
        ((1.0 + self.nu) / (1.0 - self.nu)).sqrt()
    }

    /// `(F1, F2)(z) = FP int_0^z t^{-3/2} (Ker, Kei)(a sqrt t) dt`.
    pub fn kelvin_integrals(&self, z: f64) -> Result<KelvinPair, BlayerError> {
        if z <= 0.0 {
            return Err(KelvinError::NonPositive(z).into());
        }
        let u = self.a * z.sqrt();
        let head = if u <= 2.0 {
            kelvin::finite_part_head(u)
        } else {
            let t = kelvin::tail_integral(u)?;
            KelvinPair { ker: self.fp_unit.ker - t.ker, kei: self.fp_unit.kei - t.kei }
        };
        Ok(KelvinPair { ker: 2.0 * self.a * head.ker, kei: 2.0 * self.a * head.kei })
    }

    pub fn f(&self, z: f64) -> Result<f64, BlayerError> {
        let k = self.kelvin_integrals(z)?;
        Ok(self.c1 * k.ker + self.c2 * k.kei + self.c3)
    }

    pub fn g(&self, z: f64) -> Result<f64, BlayerError> {
        let k = self.kelvin_integrals(z)?;
        Ok(self.ratio() * (self.c2 * k.ker - self.c1 * k.kei) + self.c4)
    }

    /// Coefficient of `x^{2/3}` in `yt^2 (f, g)` as `yt -> 0`.
    fn singular_coefficients(&self) -> (f64, f64) {
        let (p, c) = kelvin::power_series(1)[0];
        // FP integral of u^{-2} (u/2)^p over (0, u), times 2a, at u = a sqrt z
        let m = 2.0 * self.a * 2f64.powf(-p) * self.a.powf(p - 1.0) / (p - 1.0);
        let f = m * (self.c1 * c.re + self.c2 * c.im);
        let g = m * self.ratio() * (self.c2 * c.re - self.c1 * c.im);
        (f, g)
    }

    /// `psi1(x)` cancelling the singular part of `eta` on the ray.
    pub fn psi1(&self, x: f64) -> f64 {
        -self.n.cot() * self.singular_coefficients().0 * x.powf(2.0 / 3.0)
    }

    pub fn psi2(&self, x: f64) -> f64 {
        -self.n.cot() * self.singular_coefficients().1 * x.powf(2.0 / 3.0)
    }

    pub fn eval(&self, x: f64, yt: f64) -> Result<(f64, f64), BlayerError> {
        if !(x > 0.0) || yt < 0.0 {
            return Err(KelvinError::NonPositive(x.min(yt)).into());
        }
        let cot = self.n.cot();
        if yt == 0.0 {
            let (f, g) = self.singular_coefficients();
            let x23 = x.powf(2.0 / 3.0);
            return Ok((self.psi1(x) + cot * f * x23, self.psi2(x) + cot * g * x23));
        }
        let z = yt.powi(3) / x;
        let y2 = yt * yt;
        Ok((self.psi1(x) + y2 * cot * self.f(z)?, self.psi2(x) + y2 * cot * self.g(z)?))
    }

    /// `d^m/dz^m` of `f'(z) = c1 h1 + c2 h2`, `h = z^{-3/2} (Ker, Kei)(a sqrt z)`,
    /// termwise from the ascending series.
    pub fn f_prime_derivative(&self, z: f64, m: usize) -> f64 {
        let mut acc = 0.0;
        for (p, c) in kelvin::power_series(40) {
            let e = 0.5 * p - 1.5;
            let mut fall = 1.0;
            for j in 0..m {
                fall *= e - j as f64;
            }
            let w = (0.5 * self.a).powf(p) * fall * z.powf(e - m as f64);
            acc += w * (self.c1 * c.re + self.c2 * c.im);
        }
        acc
    }

    /// Residual of the fifth-order similarity equation for `f`, relative to its
    /// largest term.
    pub fn ode_residual(&self, z: f64) -> f64 {
        let d: Vec<f64> = (0..5).map(|m| self.f_prime_derivative(z, m)).collect();
        let terms = [
            4.0 * (1.0 - self.nu * self.nu) * z * d[0],
            90.0 / z * d[0],
            2430.0 * d[1],
            4455.0 * z * d[2],
            1822.5 * z * z * d[3],
            182.25 * z.powi(3) * d[4],
        ];
        let scale = terms.iter().fold(0.0f64, |m, t| m.max(t.abs()));
        terms.iter().sum::<f64>() / scale
    }
}

/// Scaling-law width as a function of `theta` (edges) or `r` (inflection lines).
/// Lengths are in units of the outer radius unless a physical set is attached,
/// in which case they carry the radius' unit. Prefactors follow the e-folding
/// length of the dominant decaying exponential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WidthLaw {
    pub kind: LayerKind,
    pub n: WaveNumber,
    pub nu: f64,
    pub tau: f64,
    pub length: f64,
}

impl WidthLaw {
    pub fn exponent(&self) -> f64 {
        self.kind.exponent()
    }

    pub fn width(&self, coord: f64) -> f64 {
        let s = (1.0 - self.nu * self.nu).powf(0.25);
        let w = match self.kind {
            LayerKind::EdgeGauss => self.tau.sqrt() * lambda_n(self.n, coord) / (SQRT_2 * s),
            LayerKind::EdgeMean => self.tau.sqrt() / (SQRT_2 * s * lambda_n(self.n, coord).sqrt()),
            LayerKind::Inflection => {
                let a = 4.0 * 3f64.powf(-1.5) * s;
                (2.0 / (a * a)).cbrt() * (self.tau * coord).cbrt()
            }
        };
        self.length * w
    }
}

pub fn predict_widths(params: &PlateParams, kind: LayerKind) -> Result<WidthLaw, BlayerError> {
    if kind == LayerKind::Inflection && params.n().get() == 2 {
        return Err(BlayerError::NoInflectionLayer);
    }
    Ok(WidthLaw {
        kind,
        n: params.n(),
        nu: params.nu(),
        tau: params.tau(),
        length: params.physical().map_or(1.0, |p| p.radius),
    })
}

/// Distance at which `dev` first drops below `threshold * dev[0]`, linearly
/// interpolated, and whether the profile rose anywhere before that.
pub fn threshold_crossing(dist: &[f64], dev: &[f64], threshold: f64) -> Option<(f64, bool)> {
    let target = threshold * *dev.first()?;
    if !(target > 0.0) {
        return None;
    }
    let mut rose = false;
    for k in 1..dev.len() {
        if dev[k] < target {
            let t = (dev[k - 1] - target) / (dev[k - 1] - dev[k]);
            return Some((dist[k - 1] + t * (dist[k] - dist[k - 1]), rose));
        }
        rose |= dev[k] > dev[k - 1];
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthSample {
    pub tau: f64,
    /// `theta` of the ray for edge layers, `r` for inflection layers.
    pub coord: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub exponent: f64,
    /// 95% confidence interval of the exponent.
    pub exponent_ci: (f64, f64),
    pub log_prefactor: f64,
}

/// Least-squares line through `(ln x, ln y)`.
pub fn fit_power_law(points: &[(f64, f64)]) -> Option<PowerFit> {
    let m = points.len();
    if m < 3 {
        return None;
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / m as f64;
    let my = ly.iter().sum::<f64>() / m as f64;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let rss: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - icpt - slope * x).powi(2)).sum();
    let dof = (m - 2) as f64;
    let se = (rss / dof / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, dof).ok()?.inverse_cdf(0.975);
    Some(PowerFit { exponent: slope, exponent_ci: (slope - t * se, slope + t * se), log_prefactor: icpt })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerMeasurement {
    pub layer_kind: LayerKind,
    pub n: u32,
    pub threshold: f64,
    /// Median width per `tau`.
    pub widths: Vec<(f64, f64)>,
    pub samples: Vec<WidthSample>,
    pub fit: PowerFit,
    /// Median of `width / tau^exponent` per coordinate.
    pub prefactor_profile: Vec<(f64, f64)>,
    /// Profiles that rose before crossing the threshold.
    pub non_monotone: usize,
}

#[derive(Serialize)]
struct Summary<'a> {
    layer_kind: LayerKind,
    n: u32,
    exponent: f64,
    exponent_ci: (f64, f64),
    threshold: f64,
    predicted_exponent: f64,
    widths: &'a [(f64, f64)],
    non_monotone: usize,
}

impl LayerMeasurement {
    pub fn exponent(&self) -> f64 {
        self.fit.exponent
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["layer_kind", "tau", "theta_or_r", "width"])?;
        for s in &self.samples {
            wr.write_record([
                self.layer_kind.label().to_string(),
                crate::domain::fmt17(s.tau),
                crate::domain::fmt17(s.coord),
                crate::domain::fmt17(s.width),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&Summary {
            layer_kind: self.layer_kind,
            n: self.n,
            exponent: self.fit.exponent,
            exponent_ci: self.fit.exponent_ci,
            threshold: self.threshold,
            predicted_exponent: self.layer_kind.exponent(),
            widths: &self.widths,
            non_monotone: self.non_monotone,
        })
        .expect("plain data serializes")
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// Widths of one configuration: one sample per usable line, plus the number of
/// non-monotone profiles.
pub fn layer_widths(
    config: &Configuration,
    ops: &DiffOperators,
    kind: LayerKind,
    threshold: f64,
) -> Result<(Vec<WidthSample>, usize), BlayerError> {
    let grid = ops.grid();
    let n = grid.wave_number();
    if kind == LayerKind::Inflection && n.get() == 2 {
        return Err(BlayerError::NoInflectionLayer);
    }
    let tau = config.params().tau();
    let eta = config.eta.values();
    let (nr, nt) = (grid.nr(), grid.ntheta());
    let mut out = Vec::new();
    let mut rising = 0;
    match kind {
        LayerKind::EdgeGauss | LayerKind::EdgeMean => {
            let dev: Vec<f64> = if kind == LayerKind::EdgeGauss {
                let (xx, xy, yy) = ops.hessian(eta);
                (0..grid.len()).map(|p| (xx[p] * yy[p] - xy[p] * xy[p] + 1.0).abs()).collect()
            } else {
                ops.laplacian(eta)
            };
            let i_mid = nr / 2;
            for j in 0..nt {
                if grid.ray_distance(j) < EDGE_RAY_MARGIN * n.sector_angle() {
                    continue;
                }
                // outer edge inward to mid radius
                let idx: Vec<usize> = (i_mid..nr).rev().map(|i| grid.node(i, j)).collect();
                let dist: Vec<f64> = idx.iter().map(|&p| 1.0 - grid.r(p)).collect();
                let prof: Vec<f64> = match kind {
                    LayerKind::EdgeGauss => idx.iter().map(|&p| dev[p]).collect(),
                    _ => {
                        let bulk = dev[grid.node(i_mid, j)];
                        idx.iter().map(|&p| (dev[p] - bulk).abs()).collect()
                    }
                };
                if let Some((w, rose)) = threshold_crossing(&dist, &prof, threshold) {
                    rising += rose as usize;
                    out.push(WidthSample { tau, coord: grid.theta_nodes()[j], width: w });
                }
            }
        }
        LayerKind::Inflection => {
            let lap = ops.laplacian(eta);
            let cps = grid.columns_per_sector();
            let half = cps / 2;
            let limit = 2.0 * n.cot();
            for i in 0..nr {
                let r = grid.r_nodes()[i];
                if r < INFLECTION_RADII.0 || r > INFLECTION_RADII.1 {
                    continue;
                }
                for ray in 0..2 * n.get() as usize {
                    let j0 = ray * cps;
                    for side in [1isize, -1] {
                        let cols: Vec<usize> =
                            (0..=half).map(|k| (j0 as isize + side * k as isize).rem_euclid(nt as isize) as usize).collect();
                        let mid = lap[grid.node(i, *cols.last().expect("nonempty"))];
                        let target = limit.copysign(mid);
                        let prof: Vec<f64> = cols.iter().map(|&j| (lap[grid.node(i, j)] - target).abs()).collect();
                        let dist: Vec<f64> = (0..=half).map(|k| r * grid.dtheta() * k as f64).collect();
                        if let Some((w, rose)) = threshold_crossing(&dist, &prof, threshold) {
                            rising += rose as usize;
                            out.push(WidthSample { tau, coord: r, width: w });
                        }
                    }
                }
            }
        }
    }
    Ok((out, rising))
}

/// Measures layer widths on minimizers at several `tau` and fits the exponent.
pub fn measure_widths(
    configs: &[&Configuration],
    kind: LayerKind,
    threshold: f64,
) -> Result<LayerMeasurement, BlayerError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(BlayerError::Threshold(threshold));
    }
    let first = configs.first().ok_or(BlayerError::TooFewPoints(0))?;
    let grid = first.grid().clone();
    if configs.iter().any(|c| **c.grid() != *grid) {
        return Err(BlayerError::MixedInputs);
    }
    let n = grid.wave_number();
    if kind == LayerKind::Inflection && n.get() == 2 {
        return Err(BlayerError::NoInflectionLayer);
    }
    let mut taus: Vec<f64> = configs.iter().map(|c| c.params().tau()).collect();
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    if taus.len() < MIN_FIT_POINTS {
        return Err(BlayerError::TooFewPoints(taus.len()));
    }
    let decades = (taus[taus.len() - 1] / taus[0]).log10();
    if decades < MIN_FIT_DECADES {
        return Err(BlayerError::NarrowRange(decades));
    }
    let ops = DiffOperators::new(grid);
    let mut samples = Vec::new();
    let mut widths = Vec::new();
    let mut non_monotone = 0;
    for c in configs {
        let (s, rose) = layer_widths(c, &ops, kind, threshold)?;
        let tau = c.params().tau();
        if s.is_empty() {
            return Err(BlayerError::NoCrossing(tau));
        }
        widths.push((tau, median(s.iter().map(|w| w.width).collect())));
        samples.extend(s);
        non_monotone += rose;
    }
    widths.sort_by(|a, b| a.0.total_cmp(&b.0));
    let fit = fit_power_law(&widths).ok_or(BlayerError::TooFewPoints(widths.len()))?;
    let mut coords: Vec<f64> = samples.iter().map(|s| s.coord).collect();
    coords.sort_by(f64::total_cmp);
    coords.dedup();
    let prefactor_profile = coords
        .into_iter()
        .map(|x| {
            let v: Vec<f64> =
                samples.iter().filter(|s| s.coord == x).map(|s| s.width / s.tau.powf(fit.exponent)).collect();
            (x, median(v))
        })
        .collect();
    Ok(LayerMeasurement {
        layer_kind: kind,
        n: n.get(),
        threshold,
        widths,
        samples,
        fit,
        prefactor_profile,
        non_monotone,
    })
}
