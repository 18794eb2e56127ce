//! Angular Poincare-type inequalities on the wedge `z <= r <= 1, 0 <= theta <= pi/n`
//! for profiles vanishing on the rays.
//!
//! Each ratio is `lhs / (constant * rhs)`, so an inequality holds when its ratio is at
//! most one (plus a mesh tolerance).

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{pairwise_sum, Grid, ScalarField};
use crate::ops::DiffOperators;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoincareError {
    #[error("wedge radius z must lie in [r0, 1), got {0}")]
    Radius(f64),
    #[error("profile is not zero on the rays (max |eta| = {0:e})")]
    NotPeriodic(f64),
    #[error("profile has no curvature on the wedge")]
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoincareRatios {
    /// `int eta_r^2 / (n^-2 int eta_rt^2)`
    pub radial: f64,
    /// `int eta^2 / (pi^4/(48 n^4) int eta_tt^2)`
    pub value: f64,
    /// `int eta_t^2 / (pi^2/(12 n^2) int eta_tt^2)`
    pub slope: f64,
}

impl PoincareRatios {
    pub fn max(&self) -> f64 {
        self.radial.max(self.value).max(self.slope)
    }
}

/// Trapezoid weights over the first sector and `r >= z`, with the Jacobian `r`.
pub fn wedge_weights(grid: &Grid, z: f64) -> Result<Vec<f64>, PoincareError> {
    if !(z >= grid.r0() && z < 1.0) {
        return Err(PoincareError::Radius(z));
    }
    let i0 = grid.r_nodes().iter().position(|&r| r >= z - 1e-12).unwrap_or(grid.nr() - 1);
    if i0 + 1 >= grid.nr() {
        return Err(PoincareError::Radius(z));
    }
    let cps = grid.columns_per_sector();
    let mut w = vec![0.0; grid.len()];
    for i in i0..grid.nr() {
        let wr = if i == i0 || i + 1 == grid.nr() { 0.5 } else { 1.0 } * grid.dr();
        for j in 0..=cps {
            let wt = if j == 0 || j == cps { 0.5 } else { 1.0 } * grid.dtheta();
            let p = grid.node(i, j % grid.ntheta());
            w[p] = wr * wt * grid.r(p);
        }
    }
    Ok(w)
}

fn wedge_integral(w: &[f64], f: &[f64]) -> f64 {
    let v: Vec<f64> = w.iter().zip(f).map(|(w, f)| w * f * f).collect();
    pairwise_sum(&v)
}

pub fn poincare_ratios(eta: &ScalarField, ops: &DiffOperators, z: f64) -> Result<PoincareRatios, PoincareError> {
    let grid = ops.grid();
    let v = eta.values();
    let on_rays = (0..grid.len()).filter(|&p| grid.is_ray_node(p)).fold(0.0f64, |m, p| m.max(v[p].abs()));
    if on_rays > 1e-14 {
        return Err(PoincareError::NotPeriodic(on_rays));
    }
    let w = wedge_weights(grid, z)?;
    let n = grid.wave_number().get() as f64;
    let tt = wedge_integral(&w, &ops.dtt.apply(v));
    let rt = wedge_integral(&w, &ops.drt.apply(v));
    if !(tt > 0.0) {
        return Err(PoincareError::Degenerate);
    }
    let r = wedge_integral(&w, &ops.dr.apply(v));
    let t = wedge_integral(&w, &ops.dt.apply(v));
    let e = wedge_integral(&w, v);
    Ok(PoincareRatios {
        radial: if rt > 0.0 { r * n * n / rt } else { 0.0 },
        value: e / (PI.powi(4) / (48.0 * n.powi(4)) * tt),
        slope: t / (PI * PI / (12.0 * n * n) * tt),
    })
}

/// Smooth random profile `sum_k a_k(r) sin(k n theta)` with cubic radial coefficients
/// decaying like `1/k^2`; it vanishes on every ray.
pub fn random_periodic_field<R: Rng>(grid: &std::sync::Arc<Grid>, modes: usize, rng: &mut R) -> ScalarField {
    let n = grid.wave_number().get() as f64;
    let coef: Vec<[f64; 4]> = (1..=modes)
        .map(|k| {
            let s = 1.0 / (k * k) as f64;
            [0; 4].map(|_| s * rng.random_range(-1.0..1.0))
        })
        .collect();
    let mut f = ScalarField::from_polar(grid.clone(), |r, t| {
        coef.iter()
            .enumerate()
            .map(|(k, c)| {
                let a = c[0] + r * (c[1] + r * (c[2] + r * c[3]));
                a * ((k + 1) as f64 * n * t).sin()
            })
            .sum()
    })
    .expect("finite profile");
    for p in 0..grid.len() {
        if grid.is_ray_node(p) {
            f.values_mut()[p] = 0.0;
        }
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_grid, PlateParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(n: u32) -> DiffOperators {
        let p = PlateParams::new(0.1, 0.5, 1e-3, n).unwrap();
        DiffOperators::new(build_grid(&p, 40, 48 * n as usize).unwrap())
    }

    #[test]
    fn fundamental_mode_breaks_the_slope_bound() {
        for n in [2, 3, 5] {
            let ops = setup(n);
            let nf = n as f64;
            let mut eta = ScalarField::from_polar(ops.grid().clone(), |r, t| r * r * (nf * t).sin()).unwrap();
            for p in 0..ops.grid().len() {
                if ops.grid().is_ray_node(p) {
                    eta.values_mut()[p] = 0.0;
                }
            }
            let q = poincare_ratios(&eta, &ops, 0.1).unwrap();
            // exact ratios: 1, 48/pi^4 and 12/pi^2
            assert!((q.radial - 1.0).abs() < 1e-3, "{q:?}");
            assert!((q.value - 48.0 / PI.powi(4)).abs() < 1e-3, "{q:?}");
            assert!((q.slope - 12.0 / (PI * PI)).abs() < 1e-3, "{q:?}");
        }
    }

    #[test]
    fn first_two_bounds_hold_on_random_profiles() {
        let ops = setup(3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let eta = random_periodic_field(ops.grid(), 4, &mut rng);
            let q = poincare_ratios(&eta, &ops, 0.5).unwrap();
            assert!(q.radial <= 1.05 && q.value <= 1.05, "{q:?}");
        }
    }

    #[test]
    fn wedge_weights_sum_to_sector_area() {
        let ops = setup(4);
        let w = wedge_weights(ops.grid(), 0.1).unwrap();
        let area = PI / 4.0 * (1.0 - 0.01) / 2.0;
        assert!((w.iter().sum::<f64>() / area - 1.0).abs() < 1e-12);
        assert!(matches!(wedge_weights(ops.grid(), 1.0), Err(PoincareError::Radius(_))));
    }

    #[test]
    fn rejects_nonzero_rays() {
        let ops = setup(2);
        let eta = ScalarField::from_polar(ops.grid().clone(), |r, _| r).unwrap();
        assert!(matches!(poincare_ratios(&eta, &ops, 0.2), Err(PoincareError::NotPeriodic(_))));
    }
}
