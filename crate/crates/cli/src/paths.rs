//! Per-path CSV tables and JSON sidecars.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use twofrac_core::girsanov::{PathBundle, WeakSolutionModel};

use crate::config::ExperimentConfig;
use crate::report::{claim_output_dir, io_error, ReportError};

pub const CSV_HEADER: [&str; 11] = ["t", "W", "B1", "B2", "u", "v", "psi", "X", "Wtilde", "B1tilde", "B2tilde"];

#[derive(Debug, thiserror::Error)]
pub enum PathsError {
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("path {path}: {source}")]
    Numerics { path: u64, source: twofrac_core::Error },
    #[error("CSV error on {path}: {source}")]
    Csv { path: String, source: csv::Error },
}

#[derive(Debug, Serialize)]
pub struct Residuals {
    pub decomposition: f64,
    pub sde: Option<f64>,
    pub representation: Option<[f64; 2]>,
}

#[derive(Debug, Serialize)]
pub struct Sidecar<'a> {
    pub config_hash: String,
    pub seed: u64,
    pub path: u64,
    pub case: &'static str,
    pub truncation_terms: usize,
    pub log_density: f64,
    pub residuals: Residuals,
    pub config: &'a ExperimentConfig,
}

/// Rows `t_0..t_N`; `u`, `v`, `ψ` at `t_0` repeat their `t_1` values.
pub fn csv_rows(b: &PathBundle) -> Vec<[f64; 11]> {
    let g = *b.grid();
    let n = g.steps();
    let d = &b.decomposition;
    let shifted = b.shifted.as_ref();
    let mut rows = Vec::with_capacity(n + 1);
    rows.push([0.0, 0.0, 0.0, 0.0, d.u.value(1), d.v.value(1), d.psi.value(1), b.x0, 0.0, 0.0, 0.0]);
    for i in 1..=n {
        let (wt, b1t, b2t) =
            shifted.map_or((f64::NAN, f64::NAN, f64::NAN), |s| (s.w.value(i), s.b1.value(i), s.b2.value(i)));
        rows.push([
            g.node(i),
            b.wiener.values()[i],
            b.fbm.b1.value(i),
            b.fbm.b2.value(i),
            d.u.value(i),
            d.v.value(i),
            d.psi.value(i),
            b.x.value(i),
            wt,
            b1t,
            b2t,
        ]);
    }
    rows
}

pub fn write_csv(path: &Path, b: &PathBundle) -> Result<(), PathsError> {
    let err = |source| PathsError::Csv { path: path.display().to_string(), source };
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path).map_err(err)?;
    w.write_record(CSV_HEADER).map_err(err)?;
    for row in csv_rows(b) {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(err)?;
    }
    w.flush().map_err(|e| PathsError::Report(io_error(path)(e)))
}

pub fn sidecar<'a>(config: &'a ExperimentConfig, b: &PathBundle) -> Sidecar<'a> {
    Sidecar {
        config_hash: config.hash(),
        seed: config.seed,
        path: b.wiener.path_index(),
        case: b.decomposition.case.tag.name(),
        truncation_terms: b.decomposition.truncation_terms,
        log_density: b.log_density,
        residuals: Residuals {
            decomposition: b.decomposition.residual,
            sde: b.sde_residual,
            representation: b.shifted.as_ref().map(|s| s.representation_residuals),
        },
        config,
    }
}

pub fn file_stem(path: u64) -> String {
    format!("path_{path:06}")
}

/// Write `M` CSV tables and sidecars into the configured output directory.
pub fn emit_paths(config: &ExperimentConfig) -> Result<Vec<PathBuf>, PathsError> {
    let dir = &config.output_dir;
    claim_output_dir(dir, config)?;
    let model = config.model().map_err(|source| PathsError::Numerics { path: 0, source })?;
    emit_with_model(config, &model, dir)
}

pub fn emit_with_model(
    config: &ExperimentConfig,
    model: &WeakSolutionModel,
    dir: &Path,
) -> Result<Vec<PathBuf>, PathsError> {
    let bundles: Vec<PathBundle> = (0..config.paths as u64)
        .into_par_iter()
        .map(|p| model.assemble(config.seed, p).map_err(|source| PathsError::Numerics { path: p, source }))
        .collect::<Result<_, _>>()?;
    let mut written = Vec::with_capacity(2 * bundles.len());
    for b in &bundles {
        let stem = file_stem(b.wiener.path_index());
        let csv_path = dir.join(format!("{stem}.csv"));
        write_csv(&csv_path, b)?;
        let json_path = dir.join(format!("{stem}.json"));
        let text = serde_json::to_string_pretty(&sidecar(config, b)).map_err(ReportError::from)? + "\n";
        fs::write(&json_path, text).map_err(io_error(&json_path)).map_err(PathsError::from)?;
        written.push(csv_path);
        written.push(json_path);
    }
    Ok(written)
}
