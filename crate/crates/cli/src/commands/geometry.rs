use std::path::Path;

use rayon::prelude::*;
use serde_json::{json, Value};
use xxz_core::curve::SpectralCurve;
use xxz_core::curve::{
    abel_infinities, action_jacobian_fd, action_jacobian_predicted, action_periods, elliptic_lattice_residual, fit_line,
    min_singular_value, track_angles, ActionPeriods, AngleState,
};
use xxz_core::dynamics::integrate_flow;
use xxz_core::monodromy::reflection_monodromy;
use xxz_core::phasespace::{ModelParams, PhasePoint};
use xxz_core::quadrature::QuadOptions;
use xxz_core::sov::TrackOptions;
use xxz_core::theta::{odd_point, Theta};
use xxz_core::C64;

use super::{base_point, pair, pairs, quad_options, require_genus, resolve_params, rng_for, worst, Geometry, Outcome};
use crate::config::RunConfig;
use crate::error::{stage, CliError, CliResult};
use crate::report::{Check, Timing};

const TRACK: TrackOptions = TrackOptions { max_jump: 5e-2, max_depth: 30 };
const FD_STEP: f64 = 1e-4;

pub fn curve(cfg: &RunConfig, timing: &mut Timing) -> CliResult<Outcome> {
    require_genus(cfg, "curve")?;
    let x = base_point(cfg);
    let (params, ordering) = resolve_params(cfg, std::slice::from_ref(&x))?;
    let opts = quad_options(cfg);
    let geo = Geometry::build(cfg, &x, &params, &opts)?;
    timing.mark("periods");
    let (curve, pd) = (&geo.curve, &geo.pd);
    let tol = &cfg.tolerances;
    let n = curve.n;
    let g = pd.g();

    let mut checks = vec![
        Check::upper("period matrix B is symmetric", pd.symmetry_residual(), tol.periods),
        Check::lower("Im B positive definite (smallest eigenvalue)", pd.im_min_eigenvalue(), tol.singular_floor),
        Check::upper("normalized A-periods are the identity", pd.normalization_residual(), tol.periods),
        Check::upper("A-period in the w-chart", pd.w_chart_residual, tol.periods),
    ];
    let res = curve.residues_at_infinity(&opts).map_err(stage("residues"))?;
    let res_err = res.iter().enumerate().map(|(j, r)| (r - if j + 1 == n { 1.0 } else { 0.0 }).norm()).fold(0.0, f64::max);
    checks.push(Check::upper("residues at infinity (0 holomorphic, 1 third kind)", res_err, tol.periods));
    let inf = abel_infinities(curve, pd, &opts).map_err(stage("Abel map"))?;
    let d: Vec<C64> = inf.inf_plus.iter().zip(&inf.inf_plus_ray).map(|(a, b)| a - b).collect();
    checks.push(Check::upper("A(inf+) from V agrees with direct integration", pd.lattice_distance(&d), tol.periods));
    if g == 1 {
        let r = elliptic_lattice_residual(curve, pd).map_err(stage("AGM oracle"))?;
        checks.push(Check::upper("genus-one periods vs AGM lattice", r, tol.elliptic_oracle));
    }
    timing.mark("period checks");

    let theta = Theta::new(pd.big_b_matrix()).map_err(stage("theta"))?;
    let mut rng = rng_for(cfg.seed, 2000);
    let mut auto: f64 = 0.0;
    for _ in 0..cfg.z_samples {
        let z: Vec<C64> = (0..g).map(|_| xxz_core::checks::random_z(&mut rng) - 1.0).collect();
        for j in 0..g {
            let mut e = vec![0.0; g];
            e[j] = 1.0;
            auto = worst(auto, theta.automorphy_residual(&z, &e));
        }
        let ones = vec![1.0; g];
        auto = worst(auto, theta.automorphy_residual(&z, &ones));
    }
    checks.push(Check::upper("theta automorphy", auto, tol.automorphy));
    let (odd, odd_data) = match odd_point(&theta) {
        Ok(e) => {
            let v = theta.eval(&e.point);
            let scale = theta.value(&vec![C64::new(0.0, 0.0); g]).norm();
            let grad = v.grad.iter().map(|x| x.norm()).fold(0.0, f64::max);
            (
                vec![
                    Check::upper("theta vanishes at the odd half period", v.value.norm() / scale, 1e-8),
                    Check::lower("theta gradient at the odd half period", grad, 1e-4),
                ],
                json!({ "delta1": e.d1, "delta2": e.d2, "point": pairs(&e.point) }),
            )
        }
        Err(err) => (vec![Check::failed("odd half period", 1e-8, err.to_string())], Value::Null),
    };
    checks.extend(odd);
    timing.mark("theta checks");

    let data = json!({
        "N": n,
        "genus": g,
        "ordering": ordering,
        "big_p": pair(curve.big_p),
        "s": pair(curve.s()),
        "branch_points": pairs(&curve.branch_points),
        "a_periods": pd.a_periods.iter().map(|r| pairs(r)).collect::<Vec<_>>(),
        "b_periods": pd.b_periods.iter().map(|r| pairs(r)).collect::<Vec<_>>(),
        "normalization": pd.normalization.iter().map(|r| pairs(r)).collect::<Vec<_>>(),
        "big_b": pd.big_b.iter().map(|r| pairs(r)).collect::<Vec<_>>(),
        "v": pairs(&pd.v),
        "c": (1..=n).map(|k| pair(pd.c(k))).collect::<Vec<_>>(),
        "u": (1..=n).map(|k| pairs(&pd.u(k))).collect::<Vec<_>>(),
        "residues_at_infinity": pairs(&res),
        "odd_characteristic": odd_data,
    });
    Ok(Outcome { checks, data })
}

struct FlowFit {
    slopes: Vec<C64>,
    fit_residual: f64,
    tilde_slope: C64,
    tilde_residual: f64,
    lattice_drift: f64,
    states: Vec<AngleState>,
    phase: Vec<PhasePoint<C64>>,
}

fn fit_flow(
    geo: &Geometry,
    x: &PhasePoint<C64>,
    params: &ModelParams,
    cfg: &RunConfig,
    k: usize,
    opts: &QuadOptions,
) -> CliResult<FlowFit> {
    let traj = integrate_flow(x, params, k, &cfg.times(), cfg.tolerances.ode).map_err(stage("integration"))?;
    let states = track_angles(&geo.curve, &traj, params, &TRACK, opts).map_err(stage("divisor tracking"))?;
    let n = geo.curve.n;
    let ts: Vec<f64> = states.iter().map(|s| s.t).collect();
    let fit = |vs: &[C64]| fit_line(&ts, vs).map_err(|e| CliError::InsufficientSamples(e.to_string()));
    let mut slopes = Vec::with_capacity(n);
    let mut fit_residual: f64 = 0.0;
    for j in 0..n {
        let vs: Vec<C64> = states.iter().map(|s| s.f[j]).collect();
        let (sl, _, res) = fit(&vs)?;
        slopes.push(sl);
        fit_residual = worst(fit_residual, res);
    }
    let vs: Vec<C64> = states.iter().map(|s| s.f_tilde(&geo.pd)).collect();
    let (tilde_slope, _, tilde_residual) = fit(&vs)?;
    let u = geo.pd.u(k);
    let a0 = states[0].abel(&geo.pd);
    let lattice_drift = states
        .iter()
        .map(|s| {
            let d: Vec<C64> = s.abel(&geo.pd).iter().zip(&a0).zip(&u).map(|((a, b), uu)| a - b - uu * s.t).collect();
            geo.pd.lattice_distance(&d)
        })
        .fold(0.0, worst);
    Ok(FlowFit { slopes, fit_residual, tilde_slope, tilde_residual, lattice_drift, states, phase: traj.states })
}

pub fn linearize(cfg: &RunConfig, dir: &Path, timing: &mut Timing) -> CliResult<Outcome> {
    require_genus(cfg, "linearize")?;
    let times = cfg.times();
    if times.len() < 2 {
        return Err(CliError::InsufficientSamples(format!("slopes need at least two sample times, got {}", times.len())));
    }
    let x = base_point(cfg);
    let (params, ordering) = resolve_params(cfg, std::slice::from_ref(&x))?;
    let opts = quad_options(cfg);
    let geo = Geometry::build(cfg, &x, &params, &opts)?;
    timing.mark("periods");
    let n = params.n;
    let tol = &cfg.tolerances;
    let lin = tol.linearization_for(n);

    let fits: Vec<CliResult<FlowFit>> = (1..=n).into_par_iter().map(|k| fit_flow(&geo, &x, &params, cfg, k, &opts)).collect();
    timing.mark("angle tracking");
    let mut checks = Vec::new();
    let mut slope_matrix = vec![vec![Value::Null; n]; n];
    let mut flows = Vec::new();
    let mut csv = csv::Writer::from_path(dir.join("angles.csv"))?;
    let mut header = vec!["k".to_string(), "t".to_string()];
    for j in 1..=n {
        header.push(format!("re_F{j}"));
        header.push(format!("im_F{j}"));
    }
    header.extend(["re_Ftilde".to_string(), "im_Ftilde".to_string()]);
    csv.write_record(&header)?;
    for (k, fit) in (1..=n).zip(&fits) {
        let name = format!("slopes of F_j under the P_{k} flow = delta_jk");
        let fit_name = format!("linear fit residual, P_{k} flow");
        let tilde_name = format!("slope of F~ under the P_{k} flow = c_{k}");
        let f = match fit {
            Ok(f) => f,
            Err(e) => {
                checks.push(Check::failed(name, lin, e.to_string()));
                checks.push(Check::failed(fit_name, lin, "not computed"));
                checks.push(Check::failed(tilde_name, lin, "not computed"));
                flows.push(json!({ "k": k, "error": e.to_string() }));
                continue;
            }
        };
        let dev = f.slopes.iter().enumerate().map(|(j, s)| (s - if j + 1 == k { 1.0 } else { 0.0 }).norm()).fold(0.0, worst);
        checks.push(Check::upper(name, dev, lin));
        checks.push(Check::upper(fit_name, f.fit_residual, lin));
        let ck = geo.pd.c(k);
        let tdev = worst((f.tilde_slope - ck).norm() / ck.norm().max(1.0), f.tilde_residual);
        checks.push(Check::upper(tilde_name, tdev, lin));
        for (j, s) in f.slopes.iter().enumerate() {
            slope_matrix[j][k - 1] = json!(pair(*s));
        }
        flows.push(json!({
            "k": k,
            "slopes": pairs(&f.slopes),
            "fit_residual": f.fit_residual,
            "tilde_slope": pair(f.tilde_slope),
            "c": pair(ck),
            "abel_lattice_drift": f.lattice_drift,
        }));
        for st in &f.states {
            let mut row = vec![k.to_string(), format!("{:.17e}", st.t)];
            for v in st.f.iter().chain(std::iter::once(&st.f_tilde(&geo.pd))) {
                row.push(format!("{:.17e}", v.re));
                row.push(format!("{:.17e}", v.im));
            }
            csv.write_record(&row)?;
        }
    }
    csv.flush()?;

    let (action_checks, actions) = actions(&geo, &params, fits.first().and_then(|f| f.as_ref().ok()), cfg, &opts)?;
    checks.extend(action_checks);
    timing.mark("actions");

    let data = json!({
        "N": n,
        "ordering": ordering,
        "times": times,
        "slope_matrix": slope_matrix,
        "flows": flows,
        "actions": actions,
    });
    Ok(Outcome { checks, data })
}

/// Action variables: finite-difference Jacobian against the periods, its
/// smallest singular value, and constancy along the first flow.
fn actions(
    geo: &Geometry,
    params: &ModelParams,
    flow: Option<&FlowFit>,
    cfg: &RunConfig,
    opts: &QuadOptions,
) -> CliResult<(Vec<Check>, Value)> {
    let tol = &cfg.tolerances;
    let radius = geo.basis.gamma_radius;
    let ap0 = action_periods(&geo.curve, &geo.basis, radius, opts).map_err(stage("action periods"))?;
    let pred = action_jacobian_predicted(&geo.curve, &geo.pd);
    let fd = action_jacobian_fd(&geo.curve, &geo.basis, radius, FD_STEP, opts).map_err(stage("action periods"))?;
    let scale = pred.iter().flatten().map(|v| v.norm()).fold(1e-300, f64::max);
    let dev = pred.iter().flatten().zip(fd.iter().flatten()).map(|(a, b)| (a - b).norm()).fold(0.0, worst) / scale;
    let smin = min_singular_value(&fd);
    let mut checks = vec![
        Check::upper("dJ/dP by finite differences vs A-periods", dev, tol.action),
        Check::lower("action Jacobian nonsingular (smallest singular value)", smin, tol.singular_floor),
    ];
    let j0 = shifted(&ap0);
    let mut drift: f64 = 0.0;
    match flow {
        Some(f) => {
            let m = f.phase.len() - 1;
            let mut picks: Vec<usize> = (0..=3).map(|i| i * m / 3).collect();
            picks.dedup();
            let j_scale = j0.iter().map(|v| v.norm()).fold(1.0, f64::max);
            let per: Vec<CliResult<f64>> = picks[1..]
                .par_iter()
                .map(|&i| {
                    let data = reflection_monodromy(&f.phase[i], params).map_err(stage("monodromy"))?;
                    let cv = SpectralCurve::from_data(&data).map_err(stage("spectral curve"))?;
                    let ap = action_periods(&cv, &geo.basis, radius, opts).map_err(stage("action periods"))?;
                    Ok(shifted(&ap).iter().zip(&j0).map(|(a, b)| (a - b).norm()).fold(0.0, worst) / j_scale)
                })
                .collect();
            for r in per {
                drift = worst(drift, r?);
            }
            checks.push(Check::upper("actions and J_N - 2 pi i log P constant along the P_1 flow", drift, tol.action_constancy));
        }
        None => checks.push(Check::failed(
            "actions and J_N - 2 pi i log P constant along the P_1 flow",
            tol.action_constancy,
            "P_1 flow unavailable",
        )),
    }
    let data = json!({
        "radius": radius,
        "j": pairs(&ap0.j),
        "j_other_lift": pairs(&ap0.j_other_lift),
        "j_n_minus_2pi_i_log_p": pair(ap0.j_n_shifted),
        "jacobian_predicted": pred.iter().map(|r| pairs(r)).collect::<Vec<_>>(),
        "jacobian_fd": fd.iter().map(|r| pairs(r)).collect::<Vec<_>>(),
        "fd_step": FD_STEP,
        "min_singular_value": smin,
        "max_drift": drift,
    });
    Ok((checks, data))
}

/// `J_1..J_{N−1}, J_N − 2πi log P`.
fn shifted(ap: &ActionPeriods) -> Vec<C64> {
    let mut v = ap.j.clone();
    if let Some(last) = v.last_mut() {
        *last = ap.j_n_shifted;
    }
    v
}
