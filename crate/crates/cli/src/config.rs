//! Experiment configuration: a single JSON document with defaults.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use twofrac_core::drift::DriftSpec;
use twofrac_core::girsanov::{ModelSetup, WeakSolutionModel};
use twofrac_core::kernels::Hurst;
use twofrac_core::Grid;

pub const MIN_STEPS: usize = 1 << 5;
pub const MAX_STEPS: usize = 1 << 14;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Drift `b(t, x)`; the JSON form is tagged by `kind`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftConfig {
    Constant { c: f64 },
    Sign { c: f64 },
    LinearGrowth { c: f64 },
    Hoelder { beta: f64, gamma: f64, c: f64 },
    Cosine { c: f64 },
}

impl Default for DriftConfig {
    fn default() -> Self {
        DriftConfig::Constant { c: 1.0 }
    }
}

impl DriftConfig {
    pub fn spec(self) -> DriftSpec {
        match self {
            DriftConfig::Constant { c } => DriftSpec::Constant { c },
            DriftConfig::Sign { c } => DriftSpec::Sign { c },
            DriftConfig::LinearGrowth { c } => DriftSpec::LinearGrowth { c },
            DriftConfig::Hoelder { beta, gamma, c } => DriftSpec::Hoelder { beta, gamma, c },
            DriftConfig::Cosine { c } => DriftSpec::Cosine { c },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteSelector {
    #[default]
    All,
    Identities,
    Girsanov,
    Law,
    Krylov,
    Paths,
}

fn default_h1() -> f64 {
    0.3
}
fn default_h2() -> f64 {
    0.7
}
fn default_horizon() -> f64 {
    1.0
}
fn default_steps() -> usize {
    256
}
fn default_tol() -> f64 {
    1e-8
}
fn default_paths() -> usize {
    10_000
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}
fn default_rho() -> f64 {
    1.5
}
fn default_epsilons() -> Vec<f64> {
    vec![0.5, 0.25, 0.1, 0.05]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(rename = "H1", default = "default_h1")]
    pub h1: f64,
    #[serde(rename = "H2", default = "default_h2")]
    pub h2: f64,
    #[serde(rename = "T", default = "default_horizon")]
    pub horizon: f64,
    #[serde(rename = "N", default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub x0: f64,
    #[serde(default)]
    pub drift: DriftConfig,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(rename = "M", default = "default_paths")]
    pub paths: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub suite: SuiteSelector,
    /// Krylov exponent.
    #[serde(default = "default_rho")]
    pub rho: f64,
    /// Krylov window widths.
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_owned(), source })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        for (name, h) in [("H1", self.h1), ("H2", self.h2)] {
            if Hurst::new(h).is_err() {
                return bad(format!("{name} = {h} must lie in (0, 1)"));
            }
        }
        if self.h1 == self.h2 {
            return bad(format!("H1 = H2 = {} is not covered; the Hurst parameters must differ", self.h1));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("T = {} must be positive", self.horizon));
        }
        if !self.steps.is_power_of_two() || !(MIN_STEPS..=MAX_STEPS).contains(&self.steps) {
            return bad(format!("N = {} must be a power of two in [{MIN_STEPS}, {MAX_STEPS}]", self.steps));
        }
        if !self.x0.is_finite() {
            return bad("x0 must be finite".into());
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol = {} must be positive", self.tol));
        }
        if self.paths < 1 {
            return bad("M must be at least 1".into());
        }
        if self.epsilons.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
            return bad("Krylov window widths must be non-negative".into());
        }
        Ok(())
    }

    pub fn with_overrides(
        mut self,
        seed: Option<u64>,
        paths: Option<usize>,
        grid: Option<usize>,
        out: Option<PathBuf>,
    ) -> Result<Self, ConfigError> {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(m) = paths {
            self.paths = m;
        }
        if let Some(n) = grid {
            self.steps = n;
        }
        if let Some(o) = out {
            self.output_dir = o;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.horizon, self.steps).expect("validated grid")
    }

    pub fn hurst(&self) -> (Hurst, Hurst) {
        (Hurst::new(self.h1).expect("validated"), Hurst::new(self.h2).expect("validated"))
    }

    pub fn model_setup(&self) -> ModelSetup {
        let (h1, h2) = self.hurst();
        ModelSetup { h1, h2, grid: self.grid(), x0: self.x0, drift: self.drift.spec(), tol: self.tol }
    }

    /// Model with a tabulated decomposition, shared by all paths.
    pub fn model(&self) -> twofrac_core::Result<WeakSolutionModel> {
        WeakSolutionModel::new(self.model_setup())?.tabulated()
    }

    /// SHA-256 of the canonical JSON with the output directory cleared.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.output_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&canon).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}
