use std::sync::Arc;

use fvk_annulus::energy::{energy, energy_gradient, quadratic_form_expanded, quadratic_form_q, residual_vector, Sym2};
use fvk_annulus::poincare::{poincare_ratios, random_periodic_field};
use fvk_annulus::{build_grid, Configuration, DiffOperators, Grid, PlateParams, ScalarField};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_config(params: PlateParams, grid: &Arc<Grid>, seed: u64, amp: f64) -> Configuration {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = || ScalarField::new(grid.clone(), (0..grid.len()).map(|_| rng.random_range(-amp..amp)).collect()).unwrap();
    Configuration::new(params, f(), f(), f()).unwrap()
}

#[test]
fn gradient_matches_central_differences() {
    let params = PlateParams::new(0.2, 0.4, 0.3, 2).unwrap();
    let grid = build_grid(&params, 8, 8).unwrap();
    let ops = DiffOperators::new(grid.clone());
    for seed in 0..3 {
        let c = random_config(params, &grid, seed, 0.3);
        let g = energy_gradient(&c, &ops);
        let h = 1e-6;
        let mut num = Vec::new();
        let mut ana = Vec::new();
        for field in 0..3 {
            for p in 0..grid.len() {
                let bump = |d: f64| {
                    let mut c2 = c.clone();
                    let f = match field {
                        0 => &mut c2.eta,
                        1 => &mut c2.chi1,
                        _ => &mut c2.chi2,
                    };
                    f.values_mut()[p] += d;
                    energy(&c2, &ops).total
                };
                num.push((bump(h) - bump(-h)) / (2.0 * h));
                ana.push([&g.eta, &g.chi1, &g.chi2][field][p]);
            }
        }
        let diff: f64 = num.iter().zip(&ana).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = ana.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(diff / norm < 1e-6, "seed {seed}: {}", diff / norm);
    }
}

#[test]
fn periodic_gradient_ignores_ray_values() {
    let params = PlateParams::new(0.2, 0.4, 0.3, 2).unwrap();
    let grid = build_grid(&params, 8, 8).unwrap();
    let ops = DiffOperators::new(grid.clone());
    let c = random_config(params, &grid, 5, 0.3).project_periodic();
    let g = energy_gradient(&c, &ops);
    for p in (0..grid.len()).filter(|&p| grid.is_ray_node(p)) {
        assert_eq!(g.eta[p], 0.0);
    }
}

fn sym() -> impl Strategy<Value = Sym2> {
    (-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64).prop_map(|(a, b, c)| Sym2::new(a, b, c))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, ..ProptestConfig::default() })]

    #[test]
    fn bending_integrand_identity(a in sym(), nu in 0.0..0.95f64) {
        let q = quadratic_form_q(&a, nu);
        let e = quadratic_form_expanded(&a, nu);
        prop_assert!((q - e).abs() <= 1e-13 * q.abs().max(1.0));
        prop_assert!(q >= -1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, ..ProptestConfig::default() })]

    #[test]
    fn residuals_square_to_energy(seed in any::<u64>(), nu in 0.0..0.95f64, tau in 1e-4..1.0f64, n in 2u32..5) {
        let params = PlateParams::new(0.15, nu, tau, n).unwrap();
        let grid = build_grid(&params, 8, 4 * n as usize).unwrap();
        let ops = DiffOperators::new(grid.clone());
        let c = random_config(params, &grid, seed, 1.0);
        let e = energy(&c, &ops);
        let r = residual_vector(&c, &ops);
        let ss: f64 = r.iter().map(|v| v * v).sum();
        prop_assert!((ss - e.total).abs() <= 1e-12 * e.total);
        prop_assert!(e.stretch >= 0.0 && e.bend >= 0.0);
        prop_assert_eq!(e.total, e.stretch + tau * tau * e.bend);
    }
}

#[test]
fn radial_and_value_poincare_bounds_hold() {
    for n in [2u32, 3, 5] {
        let params = PlateParams::new(0.1, 0.5, 1e-3, n).unwrap();
        let grid = build_grid(&params, 24, 24 * n as usize).unwrap();
        let ops = DiffOperators::new(grid.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        for _ in 0..100 {
            let eta = random_periodic_field(&grid, 4, &mut rng);
            let q = poincare_ratios(&eta, &ops, 0.1).unwrap();
            assert!(q.radial <= 1.05 && q.value <= 1.05, "n={n} {q:?}");
        }
    }
}
