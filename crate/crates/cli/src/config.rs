use std::path::{Path, PathBuf};

use fvk_annulus::blayer::{LayerKind, DEFAULT_THRESHOLD};
use fvk_annulus::minimize::{GridSpec, SolveOptions};
use fvk_annulus::PlateParams;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Strictly decreasing thickness ladder.
    pub taus: Vec<f64>,
    pub n_list: Vec<u32>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { taus: vec![1.0, 0.1, 0.01, 0.001], n_list: vec![2] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlayerConfig {
    pub kinds: Vec<LayerKind>,
    pub threshold: f64,
}

impl Default for BlayerConfig {
    fn default() -> Self {
        Self { kinds: vec![LayerKind::EdgeGauss], threshold: DEFAULT_THRESHOLD }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub params: PlateParams,
    pub grid: GridSpec,
    #[serde(default)]
    pub solve: SolveOptions,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub blayer: BlayerConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub rng_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            params: PlateParams::new(0.1, 0.5, 1e-3, 2).expect("default parameters are valid"),
            grid: GridSpec::new(40, 40),
            solve: SolveOptions::default(),
            sweep: SweepConfig::default(),
            blayer: BlayerConfig::default(),
            out: None,
            rng_seed: 0,
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub tau: Option<f64>,
    pub n: Option<u32>,
    pub r0: Option<f64>,
    pub nu: Option<f64>,
    pub nr: Option<usize>,
    pub ntheta: Option<usize>,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
            }
        }
    }

    pub fn apply(mut self, o: &Overrides) -> Result<Self, CliError> {
        let p = &self.params;
        let (r0, nu, tau, n) = (o.r0.unwrap_or(p.r0()), o.nu.unwrap_or(p.nu()), o.tau.unwrap_or(p.tau()), o.n.unwrap_or(p.n().get()));
        if (r0, nu, tau, n) != (p.r0(), p.nu(), p.tau(), p.n().get()) {
            let fresh = PlateParams::new(r0, nu, tau, n)?;
            self.params = match p.physical() {
                Some(phys) if o.tau.is_none() && o.r0.is_none() && o.nu.is_none() => fresh.with_physical(*phys)?,
                _ => fresh,
            };
        }
        if let Some(v) = o.nr {
            self.grid.nr = v;
        }
        if let Some(v) = o.ntheta {
            self.grid.ntheta = v;
        }
        if let Some(s) = o.seed {
            self.rng_seed = s;
        }
        self.solve.rng_seed = self.rng_seed;
        Ok(self)
    }

    /// Checks what every subcommand needs: grid alignment for the main `n` and solver options.
    pub fn validate(&self) -> Result<(), CliError> {
        self.grid.build(&self.params)?;
        self.solve.validate()?;
        if !(self.blayer.threshold > 0.0 && self.blayer.threshold < 1.0) {
            return Err(CliError::Config(format!("blayer threshold must lie in (0, 1), got {}", self.blayer.threshold)));
        }
        Ok(())
    }

    pub fn validate_sweep(&self) -> Result<(), CliError> {
        self.validate()?;
        let t = &self.sweep.taus;
        if t.is_empty() {
            return Err(CliError::Config("sweep ladder is empty".into()));
        }
        if t.iter().any(|v| !(*v > 0.0 && v.is_finite())) || t.windows(2).any(|w| w[1] >= w[0]) {
            return Err(CliError::Config("sweep ladder must be positive and strictly decreasing".into()));
        }
        if self.sweep.n_list.is_empty() {
            return Err(CliError::Config("sweep n_list is empty".into()));
        }
        for &n in &self.sweep.n_list {
            self.grid.build(&self.params.with_n(n)?)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
