//! Foppl-von Karman energy minimization for annular plates whose target metric has
//! constant negative Gaussian curvature.
//!
//! The crate discretizes `E = S + tau^2 B` on a polar grid, minimizes it over
//! n-periodic configurations and compares minimizers with closed-form references,
//! energy bounds and boundary-layer asymptotics.

pub mod analytic;
pub mod blayer;
pub mod diagnostics;
pub mod domain;
pub mod energy;
pub mod kelvin;
pub mod minimize;
pub mod ops;
pub mod poincare;
pub mod sparse;
pub mod validate;

pub use domain::{build_grid, Configuration, DomainError, Grid, PlateParams, ScalarField, WaveNumber};
pub use energy::{energy, EnergyBreakdown};
pub use ops::DiffOperators;
