//! `fvk-annulus`: minimize, sweep, bound and analyse annular plate energies.
//!
//! Exit codes: 0 ok, 1 invalid configuration or input, 2 non-convergence, 3 bound
//! violation, 4 validation failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fvk_annulus::blayer::{BlayerError, LayerKind};
use fvk_annulus::domain::{DomainError, FieldIoError};
use fvk_annulus::energy::{quadratic_form_q, Sym2};
use fvk_annulus::minimize::MinimizeError;
use thiserror::Error;

use config::{Overrides, RunConfig};

pub const OUT_ENV: &str = "FVK_ANNULUS_OUT";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("not converged: {0}")]
    NotConverged(String),
    #[error("{0} sandwich violation(s) found")]
    BoundViolation(usize),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error(transparent)]
    Blayer(#[from] BlayerError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) | CliError::Blayer(_) => 1,
            CliError::NotConverged(_) => 2,
            CliError::BoundViolation(_) => 3,
            CliError::Validation(_) => 4,
        }
    }
}

impl From<DomainError> for CliError {
    fn from(e: DomainError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<MinimizeError> for CliError {
    fn from(e: MinimizeError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<FieldIoError> for CliError {
    fn from(e: FieldIoError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "fvk-annulus", version, about = "Energy minimization for hyperbolic annular plates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration; defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (falls back to the config, then $FVK_ANNULUS_OUT, then ./fvk-out).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    r0: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    nr: Option<usize>,
    #[arg(long)]
    ntheta: Option<usize>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            tau: self.tau,
            n: self.n,
            r0: self.r0,
            nu: self.nu,
            nr: self.nr,
            ntheta: self.ntheta,
            seed: self.seed,
        }
    }

    fn resolve(&self) -> Result<RunConfig, CliError> {
        RunConfig::load(self.config.as_deref())?.apply(&self.overrides())
    }

    fn out_dir(&self, config: &RunConfig) -> PathBuf {
        self.out
            .clone()
            .or_else(|| config.out.clone())
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("fvk-out"))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Minimize at one thickness and write fields, energies and diagnostics.
    Minimize(Common),
    /// Walk the thickness ladder for every wave number in the config.
    Sweep(Common),
    /// Evaluate the energy bounds, optionally against sweep data.
    Bounds {
        #[command(flatten)]
        common: Common,
        /// Sweep CSV to check against the bounds.
        #[arg(long)]
        sweep: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        n_max: u32,
    },
    /// Measure boundary-layer widths on the minimizers of a sweep directory.
    Blayer {
        #[command(flatten)]
        common: Common,
        /// Directory written by `sweep`; its manifest supplies the config unless --config is given.
        #[arg(long)]
        sweep_dir: PathBuf,
        /// Layer kinds to measure (edge-gauss, edge-mean, inflection).
        #[arg(long = "kind")]
        kinds: Vec<String>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Run the self-check suite.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Scales the quadratic form by (1 + EPS) to exercise failure reporting.
        #[arg(long, hide = true, value_name = "EPS")]
        perturb_q: Option<f64>,
    },
}

static PERTURBATION: std::sync::OnceLock<f64> = std::sync::OnceLock::new();

fn perturbed_q(a: &Sym2, nu: f64) -> f64 {
    quadratic_form_q(a, nu) * (1.0 + PERTURBATION.get().copied().unwrap_or(0.0))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Minimize(c) => {
            let cfg = c.resolve()?;
            let out = c.out_dir(&cfg);
            commands::minimize(&cfg, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Sweep(c) => {
            let cfg = c.resolve()?;
            let out = c.out_dir(&cfg);
            commands::run_sweep(&cfg, &out, c.jobs)?;
            println!("wrote {}", out.display());
        }
        Command::Bounds { common, sweep, n_max } => {
            let cfg = common.resolve()?;
            let out = common.out_dir(&cfg);
            let r = commands::bounds(&cfg, &out, sweep.as_deref(), n_max)?;
            println!("F = {:.6e}, tau* = {:.6e}, sandwich_ok = {:?}", r.f, r.tau_star, r.sandwich_ok);
        }
        Command::Blayer { common, sweep_dir, kinds, threshold } => {
            let base = match &common.config {
                Some(p) => RunConfig::load(Some(p))?,
                None => commands::read_manifest(&sweep_dir)?.config,
            };
            let mut cfg = base.apply(&common.overrides())?;
            if !kinds.is_empty() {
                cfg.blayer.kinds = kinds.iter().map(|k| k.parse::<LayerKind>()).collect::<Result<_, _>>()?;
            }
            if let Some(t) = threshold {
                cfg.blayer.threshold = t;
            }
            let out = common.out_dir(&cfg);
            for (kind, exp) in commands::blayer(&cfg, &sweep_dir, &out)? {
                println!("{kind}: exponent {exp:.4} (predicted {:.4})", kind.exponent());
            }
        }
        Command::Validate { common, perturb_q } => {
            let cfg = common.resolve()?;
            let hook = perturb_q.map(|eps| {
                let _ = PERTURBATION.set(eps);
                perturbed_q as fn(&Sym2, f64) -> f64
            });
            commands::validate(&cfg, hook)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
