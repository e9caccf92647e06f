use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn xxz(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_xxz"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("XXZ_THREADS", t),
        None => cmd.env_remove("XXZ_THREADS"),
    };
    cmd.output().expect("spawn xxz")
}

fn run_in(cmd: &str, cfg: &Path, out: &Path, extra: &[&str], threads: Option<&str>) -> Output {
    let mut args = vec![cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    xxz(&args, threads)
}

fn report(out: &Path, cmd: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join(cmd).join("report.json")).unwrap()).unwrap()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, body).unwrap();
    p
}

const SMALL: &str = r#"
seed = 3
samples = 6

[model]
N = 2
xi = [1.3, -0.2]
a = [[1.0, 0.1], [1.15, 0.03]]
"#;

#[test]
fn reports_are_byte_identical_across_runs_and_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(run_in("verify", &cfg, &a, &[], Some("1")).status.code(), Some(0));
    assert_eq!(run_in("verify", &cfg, &b, &[], Some("2")).status.code(), Some(0));
    let ra = fs::read(a.join("verify/report.json")).unwrap();
    let rb = fs::read(b.join("verify/report.json")).unwrap();
    assert_eq!(ra, rb);
    assert!(a.join("verify/timing.json").exists());
}

#[test]
fn seed_override_is_recorded_and_changes_samples() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_in("verify", &cfg, &a, &[], None);
    run_in("verify", &cfg, &b, &["--seed", "99"], None);
    let (ra, rb) = (report(&a, "verify"), report(&b, "verify"));
    assert_eq!(ra["provenance"]["seed"], 3);
    assert_eq!(rb["provenance"]["seed"], 99);
    assert_ne!(ra["provenance"]["config_sha256"], rb["provenance"]["config_sha256"]);
    assert_ne!(ra["checks"], rb["checks"]);
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("{SMALL}\n[tolerances]\nidentiy = 1e-9\n"));
    let o = run_in("verify", &cfg, &tmp.path().join("o"), &[], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("identiy"));
}

#[test]
fn invalid_thread_count_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let o = run_in("verify", &cfg, &tmp.path().join("o"), &[], Some("zero"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn linearize_needs_two_time_samples() {
    let tmp = tempfile::tempdir().unwrap();
    let body = fs::read_to_string(config("n2-point.toml"))
        .unwrap()
        .replace("times = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]", "times = [0.0]");
    let cfg = write_config(tmp.path(), &body);
    let o = run_in("linearize", &cfg, &tmp.path().join("o"), &[], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).to_lowercase().contains("insufficient"));
}

#[test]
fn trivial_chain_is_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = run_in("verify", &config("trivial-n1.toml"), &out, &[], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let r = report(&out, "verify");
    let checks = r["checks"].as_array().unwrap();
    assert!(!checks.is_empty());
    for c in checks {
        assert!(c["residual"].as_f64().unwrap() < 1e-12, "{c}");
    }
}

#[test]
fn evolve_writes_time_series() {
    let tmp = tempfile::tempdir().unwrap();
    let body = fs::read_to_string(config("n2-point.toml"))
        .unwrap()
        .replace("times = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]", "times = [0.0, 0.05, 0.1]");
    let cfg = write_config(tmp.path(), &body);
    let out = tmp.path().join("o");
    let o = run_in("evolve", &cfg, &out, &[], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let obs = fs::read_to_string(out.join("evolve/observables.csv")).unwrap();
    let mut lines = obs.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("t,re_omega1,im_omega1,re_omega2,im_omega2,re_P0,im_P0"));
    assert!(header.ends_with("re_bigP,im_bigP"));
    assert_eq!(lines.count(), 3);
    assert!(out.join("evolve/trajectory.csv").exists());
}

#[test]
fn failing_check_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = run_in("verify", &config("wrong-ordering.toml"), &out, &[], None);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(report(&out, "verify")["passed"], false);
}
