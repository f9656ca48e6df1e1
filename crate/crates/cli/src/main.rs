use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use zrp_cli::{execute, Overrides};

/// Runs one zero range process experiment described by a TOML config.
#[derive(Debug, Parser)]
#[command(name = "zrp-hydro", version)]
struct Args {
    /// Experiment config file.
    config: PathBuf,
    /// Root directory for run outputs (overrides `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random seed (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Check the config and exit without running.
    #[arg(long)]
    validate_only: bool,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let run = execute(&args.config, &Overrides { out: args.out, seed: args.seed }, args.validate_only);
    for d in &run.diagnostics {
        eprintln!("{d}");
    }
    if let Some(m) = &run.message {
        eprintln!("zrp-hydro: {m}");
    }
    if let Some(dir) = &run.run_dir {
        println!("{}", dir.display());
    }
    ExitCode::from(run.code as u8)
}
