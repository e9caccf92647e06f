//! Configuration, orchestration and report emission for the `xxz` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

use std::path::{Path, PathBuf};

pub use commands::Command;
pub use config::RunConfig;
pub use error::{CliError, CliResult};
pub use report::{Check, RunReport, Timing};

/// Result of one command: the report and where it was written.
pub struct Execution {
    pub report: RunReport,
    pub dir: PathBuf,
}

/// Loads `config`, applies the overrides, runs `cmd` and writes
/// `<out>/<command>/report.json` and `timing.json`.
pub fn execute(cmd: Command, config: &Path, out: Option<PathBuf>, seed: Option<u64>) -> CliResult<Execution> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(o) = out {
        cfg.output_dir = o;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    run(cmd, &cfg)
}

pub fn run(cmd: Command, cfg: &RunConfig) -> CliResult<Execution> {
    cfg.validate()?;
    let dir = cfg.output_dir.join(cmd.name());
    std::fs::create_dir_all(&dir)?;
    let provenance = report::Provenance::of(cfg)?;
    let mut timing = Timing::start(cmd.name());
    let outcome = commands::dispatch(cmd, cfg, &dir, &mut timing)?;
    timing.finish();
    let report = RunReport::new(cmd.name(), provenance, outcome.checks, outcome.data);
    report.write(&dir.join("report.json"))?;
    timing.write(&dir.join("timing.json"))?;
    Ok(Execution { report, dir })
}
