//! Run reports. `report.json` is a pure function of the config and seed;
//! wall-clock timing goes to `timing.json`.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use xxz_core::checks::CheckOutcome;

use crate::config::RunConfig;
use crate::error::CliResult;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    /// Passes when `residual ≤ tolerance`; NaN fails.
    pub fn upper(name: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        Check { name: name.into(), residual, tolerance, passed: residual <= tolerance, note: None }
    }

    /// Passes when `value ≥ threshold`.
    pub fn lower(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check { name: name.into(), residual: value, tolerance: threshold, passed: value >= threshold, note: None }
    }

    /// A check that could not be evaluated.
    pub fn failed(name: impl Into<String>, tolerance: f64, note: impl Into<String>) -> Self {
        Check { name: name.into(), residual: f64::NAN, tolerance, passed: false, note: Some(note.into()) }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

impl From<CheckOutcome> for Check {
    fn from(o: CheckOutcome) -> Self {
        Check { name: o.name, residual: o.residual, tolerance: o.tolerance, passed: o.passed, note: None }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub seed: u64,
    pub version: &'static str,
}

impl Provenance {
    /// Hash of the effective config with `output_dir` cleared, so the same
    /// run written to another directory reports the same hash.
    pub fn of(cfg: &RunConfig) -> CliResult<Self> {
        let mut c = cfg.clone();
        c.output_dir = Default::default();
        let bytes = serde_json::to_vec(&c)?;
        let digest = Sha256::digest(&bytes);
        let config_sha256 = digest.iter().map(|b| format!("{b:02x}")).collect();
        Ok(Provenance { config_sha256, seed: cfg.seed, version: env!("CARGO_PKG_VERSION") })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: String,
    pub provenance: Provenance,
    pub passed: bool,
    pub checks: Vec<Check>,
    /// Command-specific results; object keys are sorted.
    pub data: Value,
}

impl RunReport {
    pub fn new(command: &str, provenance: Provenance, checks: Vec<Check>, data: Value) -> Self {
        let passed = !checks.is_empty() && checks.iter().all(|c| c.passed);
        RunReport { command: command.to_string(), provenance, passed, checks, data }
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StageTime {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct Timing {
    pub command: String,
    pub threads: usize,
    pub total_seconds: f64,
    pub stages: Vec<StageTime>,
    #[serde(skip)]
    start: Option<Instant>,
    #[serde(skip)]
    last: Option<Instant>,
}

impl Timing {
    pub fn start(command: &str) -> Self {
        let now = Instant::now();
        Timing {
            command: command.to_string(),
            threads: rayon::current_num_threads(),
            total_seconds: 0.0,
            stages: Vec::new(),
            start: Some(now),
            last: Some(now),
        }
    }

    /// Closes the stage that began at the previous mark.
    pub fn mark(&mut self, stage: impl Into<String>) {
        let now = Instant::now();
        let seconds = self.last.map(|l| (now - l).as_secs_f64()).unwrap_or(0.0);
        self.stages.push(StageTime { stage: stage.into(), seconds });
        self.last = Some(now);
    }

    pub fn finish(&mut self) {
        self.total_seconds = self.start.map(|s| s.elapsed().as_secs_f64()).unwrap_or(0.0);
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nan_fails_both_directions() {
        assert!(!Check::upper("x", f64::NAN, 1.0).passed);
        assert!(!Check::lower("x", f64::NAN, 1.0).passed);
        assert!(Check::upper("x", 0.5, 1.0).passed);
        assert!(!Check::lower("x", 0.5, 1.0).passed);
    }

    #[test]
    fn empty_report_does_not_pass() {
        let p = Provenance { config_sha256: String::new(), seed: 0, version: "0" };
        assert!(!RunReport::new("verify", p, vec![], Value::Null).passed);
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = RunConfig::from_toml("output_dir = \"a\"\n[model]\nN = 1\nxi = [1.0, 0.0]\n").unwrap();
        let mut b = a.clone();
        b.output_dir = "elsewhere".into();
        assert_eq!(Provenance::of(&a).unwrap().config_sha256, Provenance::of(&b).unwrap().config_sha256);
        b.seed += 1;
        assert_ne!(Provenance::of(&a).unwrap().config_sha256, Provenance::of(&b).unwrap().config_sha256);
    }
}
