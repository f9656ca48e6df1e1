//! Experiment runner for the zero range process toolkit.
//!
//! A run reads one TOML config, validates it, dispatches to the matching
//! experiment and writes CSV/JSON artifacts plus a `manifest.json` into a
//! fresh directory `<out>/run-<config hash>-<unix seconds>`.

pub mod artifacts;
pub mod config;
pub mod experiments;
pub mod validate;

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use artifacts::{sha256_hex, OutputEntry, RunDir};
use config::ExperimentConfig;
use experiments::{ExperimentError, Outcome};
use validate::{has_errors, validate, Diagnostic};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_FAILURE: i32 = 3;

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

#[derive(Debug)]
pub struct Execution {
    pub code: i32,
    pub diagnostics: Vec<Diagnostic>,
    pub run_dir: Option<PathBuf>,
    pub message: Option<String>,
}

impl Execution {
    fn stop(code: i32, diagnostics: Vec<Diagnostic>, message: impl Into<String>) -> Self {
        Execution { code, diagnostics, run_dir: None, message: Some(message.into()) }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a ExperimentConfig,
    config_hash: String,
    started_unix: u64,
    wall_time_s: f64,
    status: &'static str,
    error: Option<String>,
    outcome: Option<&'a Outcome>,
    diagnostics: &'a [Diagnostic],
    outputs: &'a [OutputEntry],
}

/// Loads, validates and (unless `validate_only`) runs one experiment.
pub fn execute(config_path: &Path, overrides: &Overrides, validate_only: bool) -> Execution {
    let text = match std::fs::read_to_string(config_path) {
        Ok(t) => t,
        Err(e) => return Execution::stop(EXIT_CONFIG, Vec::new(), format!("cannot read {}: {e}", config_path.display())),
    };
    let mut cfg = match ExperimentConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => return Execution::stop(EXIT_CONFIG, Vec::new(), format!("invalid config {}: {e}", config_path.display())),
    };
    if let Some(s) = overrides.seed {
        cfg.seed = Some(s);
    }
    if let Some(o) = &overrides.out {
        cfg.out = Some(o.clone());
    }
    let diagnostics = validate(&cfg);
    if has_errors(&diagnostics) {
        return Execution::stop(EXIT_CONFIG, diagnostics, "config validation failed");
    }
    if validate_only {
        return Execution { code: EXIT_OK, diagnostics, run_dir: None, message: None };
    }
    run_experiment(&cfg, diagnostics)
}

/// Runs a validated config and writes its manifest.
pub fn run_experiment(cfg: &ExperimentConfig, diagnostics: Vec<Diagnostic>) -> Execution {
    let config_hash = sha256_hex(cfg.canonical_json().as_bytes());
    let root = cfg.out.clone().unwrap_or_else(|| PathBuf::from("runs"));
    let mut dir = match RunDir::create(&root, &config_hash[..12]) {
        Ok(d) => d,
        Err(e) => return Execution::stop(EXIT_IO, diagnostics, format!("cannot create run directory under {}: {e}", root.display())),
    };
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let clock = Instant::now();
    let result = experiments::dispatch(cfg, &mut dir);
    let wall_time_s = clock.elapsed().as_secs_f64();

    let (code, status, error, outcome) = match &result {
        Ok(o) if o.checks_passed => (EXIT_OK, "ok", None, Some(o)),
        Ok(o) => (EXIT_FAILURE, "check-failed", Some(o.notes.join("; ")), Some(o)),
        Err(e @ ExperimentError::Module { .. }) => (EXIT_FAILURE, "failed", Some(e.to_string()), None),
        Err(e @ ExperimentError::Io(_)) => (EXIT_IO, "failed", Some(e.to_string()), None),
    };
    let manifest = Manifest {
        tool: "zrp-hydro",
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        config_hash,
        started_unix,
        wall_time_s,
        status,
        error: error.clone(),
        outcome,
        diagnostics: &diagnostics,
        outputs: dir.outputs(),
    };
    if let Err(e) = dir.write_manifest(&manifest) {
        return Execution { code: EXIT_IO, diagnostics, run_dir: Some(dir.path().to_path_buf()), message: Some(format!("cannot write manifest: {e}")) };
    }
    Execution { code, diagnostics, run_dir: Some(dir.path().to_path_buf()), message: error }
}
