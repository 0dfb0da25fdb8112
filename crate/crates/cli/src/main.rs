use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use twofrac::config::{ConfigError, ExperimentConfig};
use twofrac::paths::{emit_paths, PathsError};
use twofrac::report::{claim_output_dir, ReportError, SuiteReport};
use twofrac::suites::{run_girsanov_suite, run_identity_suite, run_krylov_suite, run_law_suite};

#[derive(Parser)]
#[command(name = "twofrac", version, about = "Weak solutions driven by two dependent fractional Brownian motions")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// JSON experiment config; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Number of Monte Carlo paths M.
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Number of grid steps N.
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Suppress the per-check summary.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Deterministic operator and kernel identities.
    Identities,
    /// Density normalisation, shifted-noise covariances and sampler checks.
    Girsanov,
    /// Direct simulation against change of measure.
    Law,
    /// Occupation-time bounds.
    Krylov,
    /// Write per-path CSV tables and JSON sidecars.
    Paths,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Identities => "identities",
            Command::Girsanov => "girsanov",
            Command::Law => "law",
            Command::Krylov => "krylov",
            Command::Paths => "paths",
        }
    }
}

const EXIT_FAIL: u8 = 1;
const EXIT_USAGE: u8 = 2;

fn load(g: &Global) -> Result<ExperimentConfig, ConfigError> {
    let base = match &g.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    base.with_overrides(g.seed, g.paths, g.grid, g.out.clone())
}

fn write_report(report: &SuiteReport, config: &ExperimentConfig) -> Result<(), ReportError> {
    let dir = &config.output_dir;
    claim_output_dir(dir, config)?;
    report.write_json(&dir.join(format!("{}.json", report.suite)))?;
    report.write_csv(&dir.join(format!("{}.csv", report.suite)))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let config = match load(&cli.global) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let report = match cli.command {
        Command::Paths => {
            return match emit_paths(&config) {
                Ok(files) => {
                    if !cli.global.quiet {
                        println!("wrote {} files to {}", files.len(), config.output_dir.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(PathsError::Report(e @ ReportError::HashMismatch { .. })) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_USAGE)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_FAIL)
                }
            };
        }
        Command::Identities => run_identity_suite(&config),
        Command::Girsanov => run_girsanov_suite(&config),
        Command::Law => run_law_suite(&config),
        Command::Krylov => run_krylov_suite(&config),
    };
    debug_assert_eq!(report.suite, cli.command.name());
    if let Err(e) = write_report(&report, &config) {
        eprintln!("error: {e}");
        let code = if matches!(e, ReportError::HashMismatch { .. }) { EXIT_USAGE } else { EXIT_FAIL };
        return ExitCode::from(code);
    }
    if !cli.global.quiet {
        let mut out = std::io::stdout().lock();
        let _ = report.summary(&mut out);
        let _ = out.flush();
    }
    if report.any_fail() {
        ExitCode::from(EXIT_FAIL)
    } else {
        ExitCode::SUCCESS
    }
}
