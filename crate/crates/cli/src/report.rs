//! Suite reports: per-check records plus an environment stamp.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Warn,
    Fail,
}

impl Status {
    pub fn from_bound(measured: f64, tolerance: f64) -> Status {
        if measured.is_finite() && measured <= tolerance {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub status: Status,
    /// `None` when the measurement was not finite.
    pub measured: Option<f64>,
    pub tolerance: f64,
    pub runtime_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvStamp {
    pub seed: u64,
    pub config_hash: String,
    pub version: String,
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed report: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("refusing to resume: artifact was produced by config {found}, current config is {expected}")]
    HashMismatch { expected: String, found: String },
}

pub(crate) fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub env: EnvStamp,
    checks: Vec<CheckRecord>,
}

impl SuiteReport {
    pub fn new(suite: &str, config: &ExperimentConfig) -> Self {
        SuiteReport {
            suite: suite.to_owned(),
            env: EnvStamp {
                seed: config.seed,
                config_hash: config.hash(),
                version: env!("CARGO_PKG_VERSION").to_owned(),
            },
            checks: Vec::new(),
        }
    }

    pub fn checks(&self) -> &[CheckRecord] {
        &self.checks
    }

    pub fn push(&mut self, record: CheckRecord) {
        self.checks.push(record);
    }

    /// Time `f`, which returns `(status, measured, tolerance, detail)`.
    pub fn run(&mut self, name: &str, f: impl FnOnce() -> (Status, f64, f64, Option<String>)) -> Status {
        let start = Instant::now();
        let (status, measured, tolerance, detail) = f();
        let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
        self.push(CheckRecord {
            name: name.to_owned(),
            status,
            measured: measured.is_finite().then_some(measured),
            tolerance,
            runtime_ms,
            detail,
        });
        status
    }

    /// Record an error raised while computing a check as a failure.
    pub fn fail(&mut self, name: &str, err: impl std::fmt::Display) {
        self.push(CheckRecord {
            name: name.to_owned(),
            status: Status::Fail,
            measured: None,
            tolerance: 0.0,
            runtime_ms: 0.0,
            detail: Some(err.to_string()),
        });
    }

    pub fn any_fail(&self) -> bool {
        self.checks.iter().any(|c| c.status == Status::Fail)
    }

    pub fn merge(&mut self, other: SuiteReport) {
        self.checks.extend(other.checks);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_json(&self, path: &Path) -> Result<(), ReportError> {
        fs::write(path, self.to_json() + "\n").map_err(io_error(path))
    }

    /// CSV table of the checks, one row per check.
    pub fn write_csv(&self, path: &Path) -> Result<(), ReportError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(path)
            .map_err(|e| ReportError::Io { path: path.display().to_string(), source: e.into() })?;
        let csv_err = |e: csv::Error| ReportError::Io { path: path.display().to_string(), source: e.into() };
        w.write_record(["name", "status", "measured", "tolerance", "runtime_ms"]).map_err(csv_err)?;
        for c in &self.checks {
            let status = serde_json::to_value(c.status)?.as_str().unwrap_or_default().to_owned();
            let measured = c.measured.map(|m| m.to_string()).unwrap_or_default();
            w.write_record([c.name.clone(), status, measured, c.tolerance.to_string(), c.runtime_ms.to_string()])
                .map_err(csv_err)?;
        }
        w.flush().map_err(io_error(path))
    }

    /// Load a previous report for the same config, refusing a different hash.
    pub fn resume(path: &Path, config: &ExperimentConfig) -> Result<Self, ReportError> {
        let text = fs::read_to_string(path).map_err(io_error(path))?;
        let report: SuiteReport = serde_json::from_str(&text)?;
        let expected = config.hash();
        if report.env.config_hash != expected {
            return Err(ReportError::HashMismatch { expected, found: report.env.config_hash });
        }
        Ok(report)
    }

    /// One line per check.
    pub fn summary(&self, out: &mut impl Write) -> std::io::Result<()> {
        for c in &self.checks {
            let tag = match c.status {
                Status::Pass => "PASS",
                Status::Warn => "WARN",
                Status::Fail => "FAIL",
            };
            let measured = c.measured.map(|m| format!("{m:.4e}")).unwrap_or_else(|| "n/a".into());
            write!(out, "[{tag}] {}/{}: {measured} (tol {:.3e})", self.suite, c.name, c.tolerance)?;
            if let Some(d) = &c.detail {
                write!(out, " {d}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Marker file recording which config produced an output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub config: ExperimentConfig,
}

pub const MANIFEST: &str = "manifest.json";

/// Create `dir` if needed and claim it for `config`; an existing manifest
/// from a different config is a refusal.
pub fn claim_output_dir(dir: &Path, config: &ExperimentConfig) -> Result<(), ReportError> {
    fs::create_dir_all(dir).map_err(io_error(dir))?;
    let path = dir.join(MANIFEST);
    let expected = config.hash();
    if path.exists() {
        let text = fs::read_to_string(&path).map_err(io_error(&path))?;
        let found: Manifest = serde_json::from_str(&text)?;
        if found.config_hash != expected {
            return Err(ReportError::HashMismatch { expected, found: found.config_hash });
        }
        return Ok(());
    }
    let manifest = Manifest { config_hash: expected, config: config.clone() };
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(io_error(&path))
}
