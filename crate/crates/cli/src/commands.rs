use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fvk_annulus::analytic::{bounds_report, crossover_diagram, BoundsReport, CrossoverCell, SweepDatum};
use fvk_annulus::blayer::{measure_widths, LayerKind};
use fvk_annulus::diagnostics::el_diagnostics;
use fvk_annulus::domain::fmt17;
use fvk_annulus::minimize::{minimize_energy, sweep, write_sweep_csv, SolveResult};
use fvk_annulus::validate::{QuadraticForm, Validation};
use fvk_annulus::{Configuration, DiffOperators, EnergyBreakdown};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

pub const MANIFEST: &str = "manifest.json";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const POINTS_DIR: &str = "points";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointTiming {
    pub n: u32,
    pub tau: f64,
    pub wall_seconds: f64,
}

/// Enough to re-run an experiment: the resolved config, its hash, seed and version.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config: RunConfig,
    pub config_sha256: String,
    pub rng_seed: u64,
    pub jobs: usize,
    pub wall_seconds: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<PointTiming>,
}

pub fn config_hash(config: &RunConfig) -> String {
    Sha256::digest(config.to_json().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn write_manifest(out: &Path, command: &str, config: &RunConfig, jobs: usize, start: Instant, points: Vec<PointTiming>) -> Result<(), CliError> {
    let m = Manifest {
        command: command.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: config_hash(config),
        config: config.clone(),
        rng_seed: config.rng_seed,
        jobs,
        wall_seconds: start.elapsed().as_secs_f64(),
        points,
    };
    write(out.join(MANIFEST), serde_json::to_string_pretty(&m).expect("manifest serializes"))
}

fn write(path: PathBuf, text: String) -> Result<(), CliError> {
    fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<fs::File, CliError> {
    fs::File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

pub fn point_file(n: u32, tau: f64) -> String {
    format!("fields_n{n}_tau{}.csv", fmt17(tau))
}

#[derive(Serialize)]
struct EnergyReport<'a> {
    #[serde(flatten)]
    breakdown: &'a EnergyBreakdown,
    iterations: usize,
    converged: bool,
    first_order_norm: f64,
    seed_used: String,
}

fn energy_json(r: &SolveResult) -> String {
    serde_json::to_string_pretty(&EnergyReport {
        breakdown: &r.breakdown,
        iterations: r.iterations,
        converged: r.converged,
        first_order_norm: r.first_order_norm,
        seed_used: r.seed_used.label().into(),
    })
    .expect("energy serializes")
}

pub fn minimize(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    config.validate()?;
    let start = Instant::now();
    ensure_dir(out)?;
    let grid = config.grid.build(&config.params)?;
    let r = minimize_energy(&config.params, grid.clone(), &config.solve)?;
    r.config.write_csv(create(&out.join("fields.csv"))?)?;
    write(out.join("energy.json"), energy_json(&r))?;
    let diag = el_diagnostics(&r.config, &DiffOperators::new(grid));
    write(out.join("diagnostics.json"), serde_json::to_string_pretty(&diag).expect("diagnostics serialize"))?;
    let p = &config.params;
    write_manifest(out, "minimize", config, 1, start, vec![PointTiming { n: p.n().get(), tau: p.tau(), wall_seconds: start.elapsed().as_secs_f64() }])?;
    if r.converged {
        Ok(())
    } else {
        Err(CliError::NotConverged(format!("stopped after {} iterations, first-order norm {:.3e}", r.iterations, r.first_order_norm)))
    }
}

pub fn run_sweep(config: &RunConfig, out: &Path, jobs: usize) -> Result<(), CliError> {
    config.validate_sweep()?;
    let start = Instant::now();
    ensure_dir(&out.join(POINTS_DIR))?;
    let records = sweep(&config.params, &config.sweep.taus, &config.sweep.n_list, &config.grid, &config.solve, jobs)?;
    let mut points = Vec::new();
    for rec in &records {
        if let Ok(r) = &rec.outcome {
            r.config.write_csv(create(&out.join(POINTS_DIR).join(point_file(rec.n, rec.tau)))?)?;
        }
        points.push(PointTiming { n: rec.n, tau: rec.tau, wall_seconds: rec.wall_seconds });
    }
    write_sweep_csv(&records, create(&out.join(SWEEP_CSV))?)?;
    write_manifest(out, "sweep", config, jobs, start, points)
}

/// One row of a sweep CSV, as consumed by `bounds` and `blayer`.
#[derive(Debug, Clone, Deserialize)]
pub struct SweepRow {
    pub n: u32,
    pub tau: f64,
    pub energy_total: f64,
    pub converged: bool,
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>, CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    rdr.deserialize()
        .map(|r| r.map_err(|e| CliError::Config(format!("{}: {e}", path.display()))))
        .collect()
}

#[derive(Serialize)]
struct BoundsOutput<'a> {
    #[serde(flatten)]
    report: &'a BoundsReport,
    fitted_lower: Vec<SweepDatum>,
    n_star: Option<f64>,
    crossover: Vec<CrossoverCell>,
}

pub fn bounds(config: &RunConfig, out: &Path, sweep_csv: Option<&Path>, n_max: u32) -> Result<BoundsReport, CliError> {
    config.validate()?;
    let start = Instant::now();
    ensure_dir(out)?;
    let data: Option<Vec<SweepDatum>> = match sweep_csv {
        None => None,
        Some(p) => Some(
            read_sweep_csv(p)?
                .into_iter()
                .filter(|r| r.energy_total.is_finite())
                .map(|r| SweepDatum { n: r.n, tau: r.tau, energy: r.energy_total })
                .collect(),
        ),
    };
    let report = bounds_report(&config.params, n_max, data.as_deref());
    let mut taus: Vec<f64> = data.iter().flatten().map(|d| d.tau).collect();
    taus.sort_by(|a, b| b.total_cmp(a));
    taus.dedup();
    let (crossover, n_star) = match report.c_fit {
        Some(c) if c > 0.0 => {
            let cells = crossover_diagram(&config.params, c, 2..=n_max.max(2), &taus).map_err(|e| CliError::Config(e.to_string()))?;
            (cells, Some(fvk_annulus::analytic::n_star(&config.params, c)))
        }
        _ => (Vec::new(), None),
    };
    let fitted_lower = data
        .iter()
        .flatten()
        .filter_map(|d| report.fitted_lower(d.n, d.tau).map(|e| SweepDatum { energy: e, ..*d }))
        .collect();
    let text = serde_json::to_string_pretty(&BoundsOutput { report: &report, fitted_lower, n_star, crossover }).expect("bounds serialize");
    write(out.join("bounds.json"), text)?;
    write_manifest(out, "bounds", config, 1, start, Vec::new())?;
    match report.sandwich_ok {
        Some(false) => Err(CliError::BoundViolation(report.violations.len())),
        _ => Ok(report),
    }
}

/// Loads the converged minimizers of wave number `n` from a sweep directory.
pub fn load_sweep_points(dir: &Path, config: &RunConfig, n: u32) -> Result<Vec<Configuration>, CliError> {
    let rows = read_sweep_csv(&dir.join(SWEEP_CSV))?;
    let base = config.params.with_n(n)?;
    let grid = config.grid.build(&base)?;
    let mut out = Vec::new();
    for r in rows.iter().filter(|r| r.n == n && r.converged) {
        let path = dir.join(POINTS_DIR).join(point_file(n, r.tau));
        let file = fs::File::open(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        out.push(Configuration::read_csv(base.with_tau(r.tau)?, grid.clone(), file)?);
    }
    Ok(out)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, CliError> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn blayer(config: &RunConfig, sweep_dir: &Path, out: &Path) -> Result<Vec<(LayerKind, f64)>, CliError> {
    config.validate()?;
    let start = Instant::now();
    let n = config.params.n().get();
    if n == 2 && config.blayer.kinds.contains(&LayerKind::Inflection) {
        return Err(CliError::Blayer(fvk_annulus::blayer::BlayerError::NoInflectionLayer));
    }
    let loaded = load_sweep_points(sweep_dir, config, n)?;
    let refs: Vec<&Configuration> = loaded.iter().collect();
    ensure_dir(out)?;
    let mut fits = Vec::new();
    for &kind in &config.blayer.kinds {
        let m = measure_widths(&refs, kind, config.blayer.threshold)?;
        m.write_csv(create(&out.join(format!("layer_{}_n{n}.csv", kind.label())))?)?;
        write(out.join(format!("layer_{}_n{n}.json", kind.label())), m.summary_json())?;
        fits.push((kind, m.exponent()));
    }
    write_manifest(out, "blayer", config, 1, start, Vec::new())?;
    Ok(fits)
}

/// Runs the check suite, printing one verdict per check.
pub fn validate(config: &RunConfig, q: Option<QuadraticForm>) -> Result<(), CliError> {
    let mut v = Validation::new(config.params, config.grid.nr, config.grid.ntheta_for(config.params.n().get()));
    if let Some(q) = q {
        v = v.with_quadratic_form(q);
    }
    let outcomes = v.run()?;
    for c in &outcomes {
        println!("{c}");
    }
    let failed: Vec<&str> = outcomes.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(failed.join(", ")))
    }
}
