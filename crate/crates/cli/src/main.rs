use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use xxz_cli::{execute, Command};

/// Verification and evolution pipelines for the classical XXZ chain with
/// reflecting boundaries.
///
/// Exit status: 0 when every check passes, 1 when a check fails, 2 on
/// configuration or pipeline errors. `XXZ_THREADS` sets the worker count.
#[derive(Parser)]
#[command(name = "xxz", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var("XXZ_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("warning: could not set thread count: {e}");
                }
            }
            _ => {
                eprintln!("error: XXZ_THREADS must be a positive integer, got {v:?}");
                return ExitCode::from(2);
            }
        }
    }
    match execute(cli.command, &cli.config, cli.out, cli.seed) {
        Ok(ex) => {
            for c in &ex.report.checks {
                let mark = if c.passed { "PASS" } else { "FAIL" };
                let note = c.note.as_deref().map(|n| format!("  ({n})")).unwrap_or_default();
                println!("{mark}  {:<60} {:>12.3e}  tol {:.1e}{note}", c.name, c.residual, c.tolerance);
            }
            println!("report: {}", ex.dir.join("report.json").display());
            if ex.report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
