//! Acceptance suite: drives the `xxz` binary over the shipped configs and
//! prints one PASS/FAIL line per criterion. Exits nonzero if any fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use serde_json::Value;

struct Run {
    code: i32,
    report: Option<Value>,
    elapsed: Duration,
    stderr: String,
}

impl Run {
    fn checks(&self) -> Vec<&Value> {
        self.report.as_ref().and_then(|r| r["checks"].as_array()).map(|a| a.iter().collect()).unwrap_or_default()
    }

    fn check(&self, prefix: &str) -> Option<&Value> {
        self.checks().into_iter().find(|c| c["name"].as_str().is_some_and(|n| n.starts_with(prefix)))
    }

    fn passed(&self, prefix: &str) -> bool {
        self.check(prefix).is_some_and(|c| c["passed"] == true)
    }

    fn failed(&self, prefix: &str) -> bool {
        self.check(prefix).is_some_and(|c| c["passed"] == false)
    }

    fn all_passed(&self) -> bool {
        self.code == 0 && !self.checks().is_empty() && self.checks().iter().all(|c| c["passed"] == true)
    }

    /// Largest residual over checks whose name starts with `prefix`.
    fn worst(&self, prefix: &str) -> f64 {
        self.checks()
            .iter()
            .filter(|c| c["name"].as_str().is_some_and(|n| n.starts_with(prefix)))
            .map(|c| c["residual"].as_f64().unwrap_or(f64::NAN))
            .fold(0.0, |a, b| if a.is_nan() || b.is_nan() { f64::NAN } else { a.max(b) })
    }

    /// Tolerance recorded next to the check.
    fn tolerance(&self, prefix: &str) -> f64 {
        self.check(prefix).and_then(|c| c["tolerance"].as_f64()).unwrap_or(f64::NAN)
    }
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run(cmd: &str, config: &str, out: &Path) -> Run {
    let dir = out.join(config);
    let start = Instant::now();
    let o = Command::new(env!("CARGO_BIN_EXE_xxz"))
        .args([cmd, "--config"])
        .arg(configs().join(format!("{config}.toml")))
        .arg("--out")
        .arg(&dir)
        .output()
        .expect("spawn xxz");
    let elapsed = start.elapsed();
    let report = std::fs::read_to_string(dir.join(cmd).join("report.json")).ok().and_then(|t| serde_json::from_str(&t).ok());
    Run { code: o.status.code().unwrap_or(-1), report, elapsed, stderr: String::from_utf8_lossy(&o.stderr).into_owned() }
}

struct Line {
    id: usize,
    name: &'static str,
    ok: bool,
    detail: String,
}

fn main() {
    // `cargo test -- --list` and filters: behave like a single test.
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let tmp = tempfile::tempdir().expect("tempdir");
    let out = tmp.path();
    let mut lines = Vec::new();

    // 1-3: identity suite for N = 1, 2, 3.
    let verify: Vec<Run> = ["random-n1", "random-n2", "random-n3"].iter().map(|c| run("verify", c, out)).collect();
    let trivial = run("verify", "trivial-n1", out);
    let t_verify: Duration = verify.iter().map(|r| r.elapsed).sum();
    let identity_names = [
        "det L",
        "L(z)L(1/z)",
        "L(1/z)^t",
        "L(-z)",
        "T(-z)",
        "t(-z)",
        "det T",
        "RTT",
        "reflection algebra",
        "explicit brackets",
        "{t(z1), t(z2)} = 0",
    ];
    let worst1 = verify.iter().flat_map(|r| identity_names.iter().map(|n| r.worst(n))).fold(0.0, f64::max);
    let tol1 = verify.iter().map(|r| r.tolerance("RTT")).fold(0.0, f64::max);
    let all1 = verify.iter().all(|r| r.all_passed() && identity_names.iter().all(|n| r.passed(n)));
    lines.push(Line {
        id: 1,
        name: "identity suite, 50 points, N = 1, 2, 3",
        ok: all1 && tol1 <= 1e-9 && t_verify < Duration::from_secs(60),
        detail: format!("worst {worst1:.2e} (tol {tol1:.0e}), {:.1}s", t_verify.as_secs_f64()),
    });
    let sum_rule = |r: &Run| r.passed("sum rule for P_j") && r.passed("P_N/2 = P - 1/P") && r.tolerance("sum rule") <= 1e-10;
    let worst2 = verify.iter().chain([&trivial]).map(|r| r.worst("sum rule").max(r.worst("P_N/2"))).fold(0.0, f64::max);
    lines.push(Line {
        id: 2,
        name: "Hamiltonian sum rule and P_N/2 = P - 1/P",
        ok: verify.iter().chain([&trivial]).all(sum_rule),
        detail: format!("worst {worst2:.2e} (tol 1e-10)"),
    });
    let lax = &verify[1];
    lines.push(Line {
        id: 3,
        name: "Lax form at 10 z-samples, N = 2, all k",
        ok: lax.passed("Lax form") && lax.tolerance("Lax form") <= 1e-8,
        detail: format!("worst {:.2e} (tol {:.0e})", lax.worst("Lax form"), lax.tolerance("Lax form")),
    });

    // 4: conservation and commuting flows.
    let ev = run("evolve", "n2-point", out);
    lines.push(Line {
        id: 4,
        name: "conservation over [0, 1] and commuting P_1, P_2 flows, N = 2",
        ok: ev.all_passed() && ev.passed("flows of P_1 and P_2 commute") && ev.tolerance("Casimir drift") <= 1e-8,
        detail: format!(
            "drift {:.2e}, commutator {:.2e} (tol 1e-8)",
            ev.worst("Casimir").max(ev.worst("Hamiltonian")).max(ev.worst("spectral")),
            ev.worst("flows of P_1")
        ),
    });

    // 5: separated variables.
    let sov: Vec<Run> = ["sov-n2", "sov-n3"].iter().map(|c| run("sov", c, out)).collect();
    lines.push(Line {
        id: 5,
        name: "log-canonical chart at 20 points and root gradients, N = 2, 3",
        ok: sov.iter().all(|r| {
            r.passed("log-canonical")
                && r.passed("implicit root gradients")
                && r.tolerance("log-canonical") <= 1e-8
                && r.tolerance("implicit") <= 1e-6
        }),
        detail: format!(
            "brackets {:.2e}, gradients {:.2e}",
            sov.iter().map(|r| r.worst("log-canonical")).fold(0.0, f64::max),
            sov.iter().map(|r| r.worst("implicit")).fold(0.0, f64::max)
        ),
    });

    // 6-7: linearization and actions.
    let lin: Vec<Run> = ["n2-point", "n3-point"].iter().map(|c| run("linearize", c, out)).collect();
    let t_lin: Duration = lin.iter().map(|r| r.elapsed).sum();
    let lin_ok = lin.iter().zip([1e-6, 1e-4]).all(|(r, tol)| {
        let n = r.report.as_ref().and_then(|v| v["data"]["N"].as_u64()).unwrap_or(0) as usize;
        n >= 2
            && (1..=n).all(|k| {
                let a = format!("slopes of F_j under the P_{k} flow");
                let b = format!("linear fit residual, P_{k} flow");
                r.passed(&a) && r.passed(&b) && r.tolerance(&a) <= tol && r.tolerance(&b) <= tol
            })
    });
    lines.push(Line {
        id: 6,
        name: "F_j slopes = delta_jk, N = 2 (1e-6) and N = 3 (1e-4)",
        ok: lin_ok && t_lin < Duration::from_secs(300),
        detail: format!(
            "N=2 {:.2e}, N=3 {:.2e}, {:.1}s",
            lin[0].worst("slopes").max(lin[0].worst("linear fit")),
            lin[1].worst("slopes").max(lin[1].worst("linear fit")),
            t_lin.as_secs_f64()
        ),
    });
    lines.push(Line {
        id: 7,
        name: "action Jacobian vs periods, nonsingular, J_N - 2 pi i log P constant",
        ok: lin.iter().all(|r| {
            r.passed("dJ/dP")
                && r.passed("action Jacobian nonsingular")
                && r.passed("actions and J_N")
                && r.tolerance("dJ/dP") <= 1e-4
                && r.tolerance("actions and J_N") <= 1e-6
        }),
        detail: format!(
            "FD {:.2e}, constancy {:.2e}",
            lin.iter().map(|r| r.worst("dJ/dP")).fold(0.0, f64::max),
            lin.iter().map(|r| r.worst("actions and J_N")).fold(0.0, f64::max)
        ),
    });

    // 8: theta machinery and genus-one oracle.
    let curves: Vec<Run> = ["n2-point", "n3-point"].iter().map(|c| run("curve", c, out)).collect();
    lines.push(Line {
        id: 8,
        name: "theta automorphy, B symmetric with Im B > 0, AGM periods (g = 1)",
        ok: curves.iter().all(|r| {
            r.passed("theta automorphy")
                && r.passed("period matrix B is symmetric")
                && r.passed("Im B positive definite")
                && r.tolerance("theta automorphy") <= 1e-10
                && r.tolerance("period matrix") <= 1e-8
        }) && curves[0].passed("genus-one periods vs AGM lattice")
            && curves[0].tolerance("genus-one") <= 1e-7,
        detail: format!(
            "automorphy {:.2e}, symmetry {:.2e}, AGM {:.2e}",
            curves.iter().map(|r| r.worst("theta automorphy")).fold(0.0, f64::max),
            curves.iter().map(|r| r.worst("period matrix")).fold(0.0, f64::max),
            curves[0].worst("genus-one")
        ),
    });

    // 9: closed-form Q(t).
    let theta: Vec<Run> = ["n2-point", "n3-point"].iter().map(|c| run("theta-compare", c, out)).collect();
    let t_theta: Duration = theta.iter().map(|r| r.elapsed).sum();
    let q_ok = theta.iter().zip([1e-6, 1e-4]).all(|(r, tol)| {
        let qs: Vec<&Value> = r.checks().into_iter().filter(|c| c["name"].as_str().is_some_and(|n| n.starts_with("Q(t)"))).collect();
        !qs.is_empty() && qs.iter().all(|c| c["passed"] == true && c["tolerance"].as_f64().is_some_and(|t| t <= tol))
    });
    lines.push(Line {
        id: 9,
        name: "theta Q(t) vs ODE, N = 2 (1e-6) and N = 3 (1e-4)",
        ok: q_ok && theta.iter().all(|r| r.all_passed()) && t_theta < Duration::from_secs(600),
        detail: format!("N=2 {:.2e}, N=3 {:.2e}, {:.1}s", theta[0].worst("Q(t)"), theta[1].worst("Q(t)"), t_theta.as_secs_f64()),
    });

    // 10: reconstruction.
    let rec = run("reconstruct", "n2-point", out);
    let z_count = rec.report.as_ref().and_then(|v| v["data"]["z"].as_array().map(|a| a.len())).unwrap_or(0);
    lines.push(Line {
        id: 10,
        name: "theta-reconstructed T(z, t) vs ODE at 10 z, N = 2",
        ok: rec.all_passed() && z_count >= 10 && rec.tolerance("reconstructed") <= 1e-5,
        detail: format!("worst {:.2e} (tol 1e-5) at {z_count} z", rec.worst("reconstructed")),
    });

    // 11: negative controls.
    let wrong = run("verify", "wrong-ordering", out);
    let corrupt = run("theta-compare", "corrupt-normalization", out);
    lines.push(Line {
        id: 11,
        name: "negative controls: wrong ordering, corrupted normalization",
        ok: wrong.code != 0 && wrong.failed("{t(z1), t(z2)} = 0") && corrupt.code != 0 && corrupt.failed("Q(t)"),
        detail: format!(
            "commutator {:.2e} (exit {}), Q error {:.2e} (exit {})",
            wrong.worst("{t(z1)"),
            wrong.code,
            corrupt.worst("Q(t)"),
            corrupt.code
        ),
    });

    let mut failures = 0;
    println!();
    for l in &lines {
        let mark = if l.ok { "PASS" } else { "FAIL" };
        println!("[{mark}] criterion {:>2}: {}  [{}]", l.id, l.name, l.detail);
        failures += usize::from(!l.ok);
    }
    for r in verify.iter().chain([&trivial, &ev]).chain(&sov).chain(&lin).chain(&curves).chain(&theta).chain([&rec]) {
        if !r.stderr.is_empty() {
            eprintln!("{}", r.stderr.trim_end());
        }
    }
    println!("\nacceptance: {} passed, {failures} failed\n", lines.len() - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
