use std::path::Path;

use serde_json::json;
use xxz_core::dynamics::{conservation_report, integrate_flow, Flow};
use xxz_core::monodromy::reflection_monodromy;
use xxz_core::phasespace::{casimir, ModelParams, PhasePoint};
use xxz_core::C64;

use super::{base_point, resolve_params, Outcome};
use crate::config::RunConfig;
use crate::error::{stage, CliResult};
use crate::report::{Check, Timing};

pub fn run(cfg: &RunConfig, dir: &Path, timing: &mut Timing) -> CliResult<Outcome> {
    let x = base_point(cfg);
    let (params, ordering) = resolve_params(cfg, std::slice::from_ref(&x))?;
    let tol = &cfg.tolerances;
    let times = cfg.times();
    let k = cfg.hamiltonian_index;
    let traj = integrate_flow(&x, &params, k, &times, tol.ode).map_err(stage("integration"))?;
    timing.mark("integration");
    let cons = conservation_report(&traj, &params).map_err(stage("conservation"))?;
    let mut checks = vec![
        Check::upper("Casimir drift", cons.casimir_drift, tol.conservation),
        Check::upper("Hamiltonian drift", cons.hamiltonian_drift, tol.conservation),
        Check::upper("spectral polynomial coefficient drift", cons.curve_drift, tol.conservation),
    ];
    let t_end = *times.last().unwrap_or(&0.0);
    if params.n >= 2 && t_end > 0.0 {
        // Four integrations are compared; run them tighter than the trajectory.
        let r = commutator(&x, &params, 1, 2, t_end, tol.ode * 1e-2)?;
        checks.push(Check::upper("flows of P_1 and P_2 commute", r, tol.conservation));
    }
    timing.mark("checks");

    traj.write_csv(&dir.join("trajectory.csv")).map_err(stage("output"))?;
    traj.write_json(&dir.join("trajectory.json")).map_err(stage("output"))?;
    write_observables(&dir.join("observables.csv"), &traj.times, &traj.states, &params)?;
    timing.mark("output");

    let data = json!({
        "N": params.n,
        "hamiltonian_index": k,
        "ordering": ordering,
        "samples": times.len(),
        "integrator": traj.stats,
        "conservation": cons,
    });
    Ok(Outcome { checks, data })
}

/// `‖Φ_b(Φ_a(x)) − Φ_a(Φ_b(x))‖ / max(1, ‖x‖)` over time `t`.
fn commutator(x: &PhasePoint<C64>, params: &ModelParams, a: usize, b: usize, t: f64, tol: f64) -> CliResult<f64> {
    let fa = Flow::new(params, a, tol).map_err(stage("integration"))?;
    let fb = Flow::new(params, b, tol).map_err(stage("integration"))?;
    let ab = fb.advance(&fa.advance(x, 0.0, t).map_err(stage("integration"))?.0, 0.0, t).map_err(stage("integration"))?.0;
    let ba = fa.advance(&fb.advance(x, 0.0, t).map_err(stage("integration"))?.0, 0.0, t).map_err(stage("integration"))?.0;
    let scale = x.coords().iter().map(|c| c.norm()).fold(1.0, f64::max);
    let d = ab.coords().iter().zip(ba.coords()).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
    Ok(d / scale)
}

/// Columns: `t`, then real and imaginary parts of `ω_j`, `P_0..P_N`, `Q`, `P`.
fn write_observables(path: &Path, times: &[f64], states: &[PhasePoint<C64>], params: &ModelParams) -> CliResult<()> {
    let n = params.n;
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    let mut names: Vec<String> = (1..=n).map(|j| format!("omega{j}")).collect();
    names.extend((0..=n).map(|j| format!("P{j}")));
    names.push("Q".into());
    names.push("bigP".into());
    for nm in &names {
        header.push(format!("re_{nm}"));
        header.push(format!("im_{nm}"));
    }
    w.write_record(&header)?;
    for (t, x) in times.iter().zip(states) {
        let data = reflection_monodromy(x, params).map_err(stage("monodromy"))?;
        let mut vals: Vec<C64> = x.sites.iter().map(casimir).collect::<Result<_, _>>().map_err(stage("casimir"))?;
        vals.extend(data.hamiltonians.iter().copied());
        vals.push(data.big_q);
        vals.push(data.big_p);
        let mut row = vec![format!("{t:.17e}")];
        for v in vals {
            row.push(format!("{:.17e}", v.re));
            row.push(format!("{:.17e}", v.im));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
