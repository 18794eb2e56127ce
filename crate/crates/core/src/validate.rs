//! Self-check suite run by the `validate` subcommand.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analytic::{flat_solution, flat_stretch_via_laplacian, ImmersionFamily};
use crate::domain::{build_grid, Configuration, DomainError, PlateParams, ScalarField, WaveNumber};
use crate::energy::{energy, energy_gradient, quadratic_form_expanded, quadratic_form_q, residual_vector, Sym2};
use crate::kelvin::{asymptotic, series, DEFAULT_CROSSOVER};
use crate::ops::DiffOperators;

pub type QuadraticForm = fn(&Sym2, f64) -> f64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {:<22} {:.3e} (tol {:.1e})", self.name, self.value, self.tolerance)
    }
}

fn check(name: &'static str, value: f64, tolerance: f64) -> CheckOutcome {
    CheckOutcome { name, passed: value.is_finite() && value <= tolerance, value, tolerance }
}

/// What the suite runs on; `q` is the quadratic form under test.
#[derive(Debug, Clone, Copy)]
pub struct Validation {
    pub params: PlateParams,
    pub nr: usize,
    pub ntheta: usize,
    pub q: QuadraticForm,
}

impl Validation {
    pub fn new(params: PlateParams, nr: usize, ntheta: usize) -> Self {
        Self { params, nr, ntheta, q: quadratic_form_q }
    }

    pub fn with_quadratic_form(mut self, q: QuadraticForm) -> Self {
        self.q = q;
        self
    }

    /// Runs every check; grid errors surface before any check runs.
    pub fn run(&self) -> Result<Vec<CheckOutcome>, DomainError> {
        let grid = build_grid(&self.params, self.nr, self.ntheta)?;
        Ok(vec![
            self.quadrature(&grid)?,
            self.gradient()?,
            self.quadratic_form(),
            self.sum_of_squares()?,
            self.monge_ampere(),
            self.flat_cross_check()?,
            kelvin_branches(),
        ])
    }

    fn quadrature(&self, grid: &crate::domain::Grid) -> Result<CheckOutcome, DomainError> {
        let r0 = self.params.r0();
        let area = grid.integrate(&vec![1.0; grid.len()]);
        Ok(check("quadrature_area", (area / (PI * (1.0 - r0 * r0)) - 1.0).abs(), 1e-10))
    }

    fn random_config(&self, nr: usize, ntheta: usize, seed: u64) -> Result<(Configuration, DiffOperators), DomainError> {
        let grid = build_grid(&self.params, nr, ntheta)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = || ScalarField::new(grid.clone(), (0..grid.len()).map(|_| rng.random_range(-0.3..0.3)).collect());
        let c = Configuration::new(self.params.with_tau(0.3)?, f()?, f()?, f()?)?;
        Ok((c, DiffOperators::new(grid)))
    }

    fn gradient(&self) -> Result<CheckOutcome, DomainError> {
        let nt = 2 * self.params.n().get() as usize * 2;
        let (c, ops) = self.random_config(8, nt.max(8), 7)?;
        let g = energy_gradient(&c, &ops);
        let h = 1e-6;
        let (mut diff, mut norm) = (0.0, 0.0);
        for p in 0..ops.grid().len() {
            let mut c2 = c.clone();
            c2.eta.values_mut()[p] += h;
            let up = energy(&c2, &ops).total;
            c2.eta.values_mut()[p] -= 2.0 * h;
            let down = energy(&c2, &ops).total;
            diff += ((up - down) / (2.0 * h) - g.eta[p]).powi(2);
            norm += g.eta[p].powi(2);
        }
        Ok(check("gradient_fd", (diff / norm).sqrt(), 1e-6))
    }

    fn quadratic_form(&self) -> CheckOutcome {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let a = Sym2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let nu = rng.random_range(0.0..0.95);
            let e = quadratic_form_expanded(&a, nu);
            worst = worst.max(((self.q)(&a, nu) - e).abs() / e.abs().max(1.0));
        }
        check("quadratic_form", worst, 1e-13)
    }

    fn sum_of_squares(&self) -> Result<CheckOutcome, DomainError> {
        let nt = 4 * self.params.n().get() as usize;
        let (c, ops) = self.random_config(10, nt.max(8), 11)?;
        let r = residual_vector(&c, &ops);
        let ss: f64 = r.iter().map(|v| v * v).sum();
        let e = energy(&c, &ops).total;
        Ok(check("sum_of_squares", (ss - e).abs() / e, 1e-12))
    }

    fn monge_ampere(&self) -> CheckOutcome {
        let mut worst = 0.0f64;
        for n in 2..=8 {
            let fam = ImmersionFamily::new(WaveNumber::new(n).expect("n >= 2"));
            for k in 0..200 {
                let h = fam.hessian(0.01 + 0.0314 * k as f64);
                worst = worst.max((h.det() + 1.0).abs());
                let nu = 0.5;
                // Q evaluated through the form under test; Q = tr^2/(1-nu) + 2 on immersions
                let q = (self.q)(&h, nu);
                worst = worst.max((q - (h.trace().powi(2) / (1.0 - nu) + 2.0)).abs() / q.abs().max(1.0));
            }
        }
        check("monge_ampere", worst, 1e-13)
    }

    fn flat_cross_check(&self) -> Result<CheckOutcome, DomainError> {
        let f = flat_solution(&self.params);
        let g = build_grid(&self.params.with_n(2)?, 160, 160)?;
        let q = flat_stretch_via_laplacian(&f, &g);
        Ok(check("flat_cross_check", (q / f.energy_f - 1.0).abs(), 1e-3))
    }
}

fn kelvin_branches() -> CheckOutcome {
    let (s, a) = (series(DEFAULT_CROSSOVER), asymptotic(DEFAULT_CROSSOVER));
    let d = ((s.ker - a.ker).powi(2) + (s.kei - a.kei).powi(2)).sqrt() / s.abs();
    check("kelvin_branches", d, 1e-8)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v() -> Validation {
        Validation::new(PlateParams::new(0.1, 0.5, 1e-3, 2).unwrap(), 40, 40)
    }

    #[test]
    fn clean_suite_passes() {
        let out = v().run().unwrap();
        assert!(out.iter().all(|c| c.passed), "{out:?}");
        assert_eq!(out.len(), 7);
    }

    #[test]
    fn perturbed_form_is_caught() {
        fn bad(a: &Sym2, nu: f64) -> f64 {
            quadratic_form_q(a, nu) * (1.0 + 1e-9)
        }
        let out = v().with_quadratic_form(bad).run().unwrap();
        let failed: Vec<_> = out.iter().filter(|c| !c.passed).map(|c| c.name).collect();
        assert_eq!(failed, vec!["quadratic_form", "monge_ampere"]);
    }

    #[test]
    fn misaligned_grid_is_an_error() {
        let p = PlateParams::new(0.1, 0.5, 1e-3, 4).unwrap();
        assert!(matches!(Validation::new(p, 20, 10).run(), Err(DomainError::RayAlignment { .. })));
    }
}
