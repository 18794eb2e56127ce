//! Levenberg-Marquardt minimization of the discrete energy over n-periodic
//! configurations, with several seeds and warm-started thickness sweeps.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::{flat_solution, periodic_immersion};
use crate::domain::{build_grid, fmt17, Configuration, DomainError, Grid, PlateParams, ScalarField};
use crate::energy::{energy, DofMap, EnergyBreakdown, LsqModel};
use crate::ops::DiffOperators;
use crate::sparse::{GramPlan, SparseError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MinimizeError {
    #[error("invalid solve options: {0}")]
    Options(String),
    #[error("every seed failed: {0}")]
    AllSeedsFailed(String),
    #[error("non-finite residuals: {0}")]
    NonFinite(String),
    #[error("tau ladder must be non-empty and strictly decreasing")]
    Ladder,
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedKind {
    Immersion,
    FlatNoise,
    WarmStart,
}

impl SeedKind {
    pub fn label(self) -> &'static str {
        match self {
            SeedKind::Immersion => "immersion",
            SeedKind::FlatNoise => "flat_noise",
            SeedKind::WarmStart => "warm_start",
        }
    }
}

impl std::fmt::Display for SeedKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub max_iterations: usize,
    /// Bound on the max-norm of the energy gradient.
    pub gradient_tol: f64,
    /// Relative step size below which iteration stops.
    pub step_tol: f64,
    pub seeds: Vec<SeedKind>,
    /// Noise on `eta` for the flat seed, in units of `tau`.
    pub noise_amplitude: f64,
    pub rng_seed: u64,
    /// Larger thicknesses visited first, each warm-starting the next.
    pub continuation: Option<Vec<f64>>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tol: 1e-9,
            step_tol: 1e-14,
            seeds: vec![SeedKind::Immersion, SeedKind::FlatNoise],
            noise_amplitude: 1e-3,
            rng_seed: 0,
            continuation: None,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<(), MinimizeError> {
        if !(self.gradient_tol > 0.0) || !(self.step_tol > 0.0) {
            return Err(MinimizeError::Options("tolerances must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(MinimizeError::Options("at least one seed is required".into()));
        }
        if self.max_iterations == 0 {
            return Err(MinimizeError::Options("max_iterations must be at least 1".into()));
        }
        if let Some(l) = &self.continuation {
            if l.iter().any(|t| !(*t > 0.0)) || l.windows(2).any(|w| w[1] >= w[0]) {
                return Err(MinimizeError::Ladder);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub config: Configuration,
    pub breakdown: EnergyBreakdown,
    pub iterations: usize,
    pub converged: bool,
    pub seed_used: SeedKind,
    pub first_order_norm: f64,
}

/// Outcome of one Levenberg-Marquardt run.
#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub x: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub first_order_norm: f64,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Sparse Levenberg-Marquardt on `|r(x)|^2` with `diag(J^T J)` scaling and
/// Nielsen's damping update.
pub fn levenberg_marquardt(
    model: &LsqModel<'_>,
    plan: &GramPlan,
    mut x: Vec<f64>,
    opts: &SolveOptions,
) -> Result<LmOutcome, MinimizeError> {
    let (m, nnz) = (model.nrows(), model.nnz());
    let mut r = vec![0.0; m];
    let mut jv = vec![0.0; nnz];
    let mut h = vec![0.0; plan.nnz()];
    let mut r_try = vec![0.0; m];
    model.evaluate(&x, &mut r, &mut jv);
    let mut cost: f64 = r.iter().map(|v| v * v).sum();
    if !cost.is_finite() {
        return Err(MinimizeError::NonFinite("at the seed".into()));
    }
    let mut lambda = 1e-3;
    let mut grow = 2.0;
    let mut iterations = 0;
    let mut g = model.gradient(&r, &jv);
    let mut fon = max_abs(&g);
    let mut converged = fon <= opts.gradient_tol;
    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        plan.assemble(model.row_ptr(), model.col_idx(), &jv, &mut h);
        let diag = plan.diagonal(&h);
        let floor = 1e-12 * max_abs(&diag).max(f64::MIN_POSITIVE);
        let mut accepted = false;
        let mut stalled = false;
        for _ in 0..60 {
            let mut step: Vec<f64> = g.iter().map(|v| -0.5 * v).collect();
            if plan.solve_damped(&h, lambda, floor, &mut step).is_err() {
                lambda *= 10.0;
                continue;
            }
            let x_try: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
            model.residuals(&x_try, &mut r_try);
            let c_try: f64 = r_try.iter().map(|v| v * v).sum();
            if c_try.is_nan() {
                return Err(MinimizeError::NonFinite("after a trial step".into()));
            }
            let small = max_abs(&step) <= opts.step_tol * max_abs(&x).max(1.0);
            if c_try < cost {
                // gain ratio against the damped quadratic model
                let predicted: f64 = step
                    .iter()
                    .zip(&g)
                    .zip(&diag)
                    .map(|((d, gi), hd)| d * (lambda * hd.max(floor) * d - 0.5 * gi))
                    .sum();
                let rho = (cost - c_try) / predicted.max(f64::MIN_POSITIVE);
                lambda = (lambda * (1.0 / 3.0f64).max(1.0 - (2.0 * rho - 1.0).powi(3))).max(1e-12);
                grow = 2.0;
                stalled = small;
                x = x_try;
                cost = c_try;
                accepted = true;
                break;
            }
            if small {
                stalled = true;
                break;
            }
            lambda *= grow;
            grow *= 2.0;
        }
        if accepted {
            model.evaluate(&x, &mut r, &mut jv);
            cost = r.iter().map(|v| v * v).sum();
            g = model.gradient(&r, &jv);
            fon = max_abs(&g);
            converged = fon <= opts.gradient_tol;
        }
        if !accepted || stalled {
            break;
        }
    }
    Ok(LmOutcome { x, cost, iterations, converged, first_order_norm: fon })
}

/// Reusable solver state for one grid and DOF layout.
pub struct Solver<'a> {
    ops: &'a DiffOperators,
    dofs: DofMap,
    plan: GramPlan,
}

impl<'a> Solver<'a> {
    pub fn new(ops: &'a DiffOperators) -> Result<Self, MinimizeError> {
        faer::set_global_parallelism(faer::Par::Seq);
        let dofs = DofMap::new(ops.grid().clone(), true);
        let model = LsqModel::new(ops, dofs.clone(), 0.5, 1.0);
        let plan = GramPlan::new(model.ncols(), model.row_ptr(), model.col_idx())?;
        Ok(Self { ops, dofs, plan })
    }

    /// Minimizes from one starting configuration.
    pub fn solve_from(
        &self,
        params: &PlateParams,
        start: &Configuration,
        opts: &SolveOptions,
        seed: SeedKind,
    ) -> Result<SolveResult, MinimizeError> {
        let start = start.with_params(*params)?.project_periodic();
        let mut x = self.dofs.gather(&start);
        let mut iterations = 0;
        if let Some(ladder) = &opts.continuation {
            for &tau in ladder.iter().filter(|&&t| t > params.tau()) {
                let model = LsqModel::new(self.ops, self.dofs.clone(), params.nu(), tau);
                let out = levenberg_marquardt(&model, &self.plan, x, opts)?;
                iterations += out.iterations;
                x = out.x;
            }
        }
        let model = LsqModel::new(self.ops, self.dofs.clone(), params.nu(), params.tau());
        let out = levenberg_marquardt(&model, &self.plan, x, opts)?;
        let config = self.configuration(params, &out.x)?;
        let breakdown = energy(&config, self.ops);
        Ok(SolveResult {
            config,
            breakdown,
            iterations: iterations + out.iterations,
            converged: out.converged,
            seed_used: seed,
            first_order_norm: out.first_order_norm,
        })
    }

    fn configuration(&self, params: &PlateParams, x: &[f64]) -> Result<Configuration, MinimizeError> {
        let grid = self.ops.grid().clone();
        let (e, c1, c2) = self.dofs.fields(x);
        Ok(Configuration::new(
            *params,
            ScalarField::new(grid.clone(), e)?,
            ScalarField::new(grid.clone(), c1)?,
            ScalarField::new(grid, c2)?,
        )?
        .project_periodic())
    }

    /// Runs every seed and keeps the best result.
    pub fn solve(
        &self,
        params: &PlateParams,
        opts: &SolveOptions,
        warm: Option<&Configuration>,
    ) -> Result<SolveResult, MinimizeError> {
        opts.validate()?;
        let grid = self.ops.grid().clone();
        let mut best: Option<SolveResult> = None;
        let mut failures = Vec::new();
        let mut seeds = opts.seeds.clone();
        if warm.is_some() && !seeds.contains(&SeedKind::WarmStart) {
            seeds.insert(0, SeedKind::WarmStart);
        }
        for seed in seeds {
            let start = match seed {
                SeedKind::Immersion => periodic_immersion(params, grid.clone())?,
                SeedKind::FlatNoise => flat_noise_seed(params, grid.clone(), opts)?,
                SeedKind::WarmStart => match warm {
                    Some(c) => c.clone(),
                    None => continue,
                },
            };
            match self.solve_from(params, &start, opts, seed) {
                Ok(res) => {
                    if better(&res, best.as_ref()) {
                        best = Some(res);
                    }
                }
                Err(e) => failures.push(format!("{seed}: {e}")),
            }
        }
        best.ok_or_else(|| MinimizeError::AllSeedsFailed(failures.join("; ")))
    }
}

/// Converged beats unconverged; then lower energy; ties keep the earlier seed.
fn better(cand: &SolveResult, best: Option<&SolveResult>) -> bool {
    match best {
        None => true,
        Some(b) => match (cand.converged, b.converged) {
            (true, false) => true,
            (false, true) => false,
            _ => cand.breakdown.total < b.breakdown.total,
        },
    }
}

/// Flat minimizer plus uniform noise of amplitude `noise_amplitude * tau` on `eta`.
pub fn flat_noise_seed(params: &PlateParams, grid: Arc<Grid>, opts: &SolveOptions) -> Result<Configuration, DomainError> {
    let mut c = flat_solution(params).configuration(grid)?;
    let amp = opts.noise_amplitude * params.tau();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.rng_seed);
    for v in c.eta.values_mut() {
        *v = amp * rng.random_range(-1.0..=1.0);
    }
    Ok(c.project_periodic())
}

pub fn minimize_energy(params: &PlateParams, grid: Arc<Grid>, opts: &SolveOptions) -> Result<SolveResult, MinimizeError> {
    let ops = DiffOperators::new(grid);
    Solver::new(&ops)?.solve(params, opts, None)
}

/// Grid resolution of a sweep, with optional per-`n` azimuthal counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nr: usize,
    pub ntheta: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub ntheta_by_n: BTreeMap<u32, usize>,
}

impl GridSpec {
    pub fn new(nr: usize, ntheta: usize) -> Self {
        Self { nr, ntheta, ntheta_by_n: BTreeMap::new() }
    }

    pub fn ntheta_for(&self, n: u32) -> usize {
        self.ntheta_by_n.get(&n).copied().unwrap_or(self.ntheta)
    }

    pub fn build(&self, params: &PlateParams) -> Result<Arc<Grid>, DomainError> {
        build_grid(params, self.nr, self.ntheta_for(params.n().get()))
    }
}

/// One `(n, tau)` point of a sweep.
#[derive(Debug, Clone)]
pub struct SweepRecord {
    pub n: u32,
    pub tau: f64,
    pub outcome: Result<SolveResult, MinimizeError>,
    pub wall_seconds: f64,
}

pub const SWEEP_HEADER: [&str; 10] = [
    "n",
    "tau",
    "energy_total",
    "energy_stretch",
    "energy_bend",
    "iterations",
    "converged",
    "first_order_norm",
    "ma_median_bulk",
    "seed_used",
];

impl SweepRecord {
    pub fn csv_row(&self) -> Vec<String> {
        match &self.outcome {
            Ok(r) => vec![
                self.n.to_string(),
                fmt17(self.tau),
                fmt17(r.breakdown.total),
                fmt17(r.breakdown.stretch),
                fmt17(r.breakdown.bend),
                r.iterations.to_string(),
                r.converged.to_string(),
                fmt17(r.first_order_norm),
                fmt17(r.breakdown.monge_ampere_median_bulk),
                r.seed_used.label().to_string(),
            ],
            Err(_) => vec![
                self.n.to_string(),
                fmt17(self.tau),
                "NaN".into(),
                "NaN".into(),
                "NaN".into(),
                "0".into(),
                "false".into(),
                "NaN".into(),
                "NaN".into(),
                "none".into(),
            ],
        }
    }
}

pub fn write_sweep_csv<W: Write>(records: &[SweepRecord], w: W) -> Result<(), csv::Error> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(SWEEP_HEADER)?;
    for r in records {
        wr.write_record(r.csv_row())?;
    }
    wr.flush()?;
    Ok(())
}

/// Walks one descending ladder for one `n`; the first point runs the configured
/// seeds, later points add a warm start from the previous minimizer.
pub fn sweep_one(
    template: &PlateParams,
    ladder: &[f64],
    n: u32,
    grid: &GridSpec,
    opts: &SolveOptions,
) -> Result<Vec<SweepRecord>, MinimizeError> {
    if ladder.is_empty() || ladder.windows(2).any(|w| w[1] >= w[0]) {
        return Err(MinimizeError::Ladder);
    }
    let base = template.with_n(n)?;
    let g = grid.build(&base)?;
    let ops = DiffOperators::new(g);
    let solver = Solver::new(&ops)?;
    let mut out = Vec::with_capacity(ladder.len());
    let mut warm: Option<Configuration> = None;
    for &tau in ladder {
        let t0 = Instant::now();
        let outcome = base.with_tau(tau).map_err(MinimizeError::from).and_then(|p| solver.solve(&p, opts, warm.as_ref()));
        if let Ok(r) = &outcome {
            warm = Some(r.config.clone());
        }
        out.push(SweepRecord { n, tau, outcome, wall_seconds: t0.elapsed().as_secs_f64() });
    }
    Ok(out)
}

/// Sweeps every `n` in `n_list`, running up to `jobs` wave numbers concurrently.
/// Records come back ordered by `n_list`, then by the ladder.
pub fn sweep(
    template: &PlateParams,
    ladder: &[f64],
    n_list: &[u32],
    grid: &GridSpec,
    opts: &SolveOptions,
    jobs: usize,
) -> Result<Vec<SweepRecord>, MinimizeError> {
    opts.validate()?;
    if ladder.is_empty() || ladder.windows(2).any(|w| w[1] >= w[0]) || ladder.iter().any(|t| !(*t > 0.0)) {
        return Err(MinimizeError::Ladder);
    }
    for &n in n_list {
        grid.build(&template.with_n(n)?)?;
    }
    let jobs = jobs.max(1);
    let mut slots: Vec<Option<Result<Vec<SweepRecord>, MinimizeError>>> = vec![None; n_list.len()];
    for chunk in (0..n_list.len()).collect::<Vec<_>>().chunks(jobs) {
        let results: Vec<_> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&k| s.spawn(move || (k, sweep_one(template, ladder, n_list[k], grid, opts))))
                .collect();
            handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
        });
        for (k, r) in results {
            slots[k] = Some(r);
        }
    }
    let mut out = Vec::new();
    for s in slots {
        out.extend(s.expect("every slot filled")?);
    }
    Ok(out)
}
