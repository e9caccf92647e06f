use std::path::Path;

use rayon::prelude::*;
use serde_json::{json, Value};
use xxz_core::checks::random_z;
use xxz_core::curve::abel_map;
use xxz_core::dynamics::integrate_flow;
use xxz_core::monodromy::reflection_monodromy;
use xxz_core::phasespace::{casimir, ModelParams, PhasePoint};
use xxz_core::theta::{
    fiber_images, h_minus2_report, reconstruct_from_fiber, rho_rational, FiberImages, ThetaContext, K_OFF_DIVISOR, K_ON_DIVISOR,
};
use xxz_core::C64;

use super::{base_point, matrix_residual, pair, pairs, quad_options, require_genus, resolve_params, rng_for, worst, Geometry, Outcome};
use crate::config::RunConfig;
use crate::error::{stage, CliResult};
use crate::report::{Check, Timing};

struct Setup {
    x: PhasePoint<C64>,
    params: ModelParams,
    ordering: Value,
    geo: Geometry,
    divisor: Vec<(C64, C64)>,
}

fn setup(cfg: &RunConfig, what: &str, timing: &mut Timing) -> CliResult<Setup> {
    require_genus(cfg, what)?;
    let x = base_point(cfg);
    let (params, ordering) = resolve_params(cfg, std::slice::from_ref(&x))?;
    let geo = Geometry::build(cfg, &x, &params, &quad_options(cfg))?;
    let divisor = geo.chart.lambdas.iter().copied().zip(geo.chart.ys.iter().copied()).collect();
    timing.mark("periods");
    Ok(Setup { x, params, ordering, geo, divisor })
}

fn flow_name(k: usize) -> String {
    format!("Q(t) theta formula vs ODE, P_{k} flow")
}

pub fn compare(cfg: &RunConfig, dir: &Path, timing: &mut Timing) -> CliResult<Outcome> {
    let s = setup(cfg, "theta-compare", timing)?;
    let opts = quad_options(cfg);
    let (n, tol) = (s.params.n, &cfg.tolerances);
    let qtol = tol.theta_for(n);
    let mut checks = Vec::new();

    let ctx = match ThetaContext::build(&s.geo.curve, &s.geo.basis, &s.geo.pd, &s.divisor, &opts) {
        Ok(ctx) => ctx,
        Err(e) => {
            // Without a context the comparison cannot run: report it as failed.
            checks.push(Check::failed("theta context", K_ON_DIVISOR, format!("theta context failed: {e}")));
            checks.extend((1..=n).map(|k| Check::failed(flow_name(k), qtol, "theta context unavailable")));
            let data = json!({ "N": n, "ordering": s.ordering, "error": e.to_string() });
            return Ok(Outcome { checks, data });
        }
    };
    timing.mark("theta context");
    let ad0 = abel_map(&s.geo.curve, &s.geo.pd, &s.divisor, &opts).map_err(stage("Abel map"))?;
    let times = cfg.times();
    let flows: Vec<CliResult<Vec<(f64, C64, Result<C64, String>)>>> = (1..=n)
        .into_par_iter()
        .map(|k| {
            let traj = integrate_flow(&s.x, &s.params, k, &times, tol.ode).map_err(stage("integration"))?;
            let u = s.geo.pd.u(k);
            let ck = s.geo.pd.c(k);
            traj.times
                .iter()
                .zip(&traj.states)
                .map(|(t, x)| {
                    let q = reflection_monodromy(x, &s.params).map_err(stage("monodromy"))?.big_q;
                    let qt = ctx.q_evolution(s.geo.data.big_q, &ad0, &u, ck, *t).map_err(|e| e.to_string());
                    Ok((*t, q, qt))
                })
                .collect()
        })
        .collect();
    timing.mark("flows");

    let mut csv = csv::Writer::from_path(dir.join("q_compare.csv"))?;
    csv.write_record(["k", "t", "re_Q_ode", "im_Q_ode", "re_Q_theta", "im_Q_theta", "rel_err"])?;
    let mut tables = Vec::new();
    for (k, rows) in (1..=n).zip(flows) {
        let rows = rows?;
        let mut err: f64 = 0.0;
        let mut note = None;
        for (t, q, qt) in &rows {
            let (qt, e) = match qt {
                Ok(v) => (*v, (v - q).norm() / q.norm()),
                Err(m) => {
                    note.get_or_insert_with(|| m.clone());
                    (C64::new(f64::NAN, f64::NAN), f64::NAN)
                }
            };
            err = worst(err, e);
            csv.write_record(&[
                k.to_string(),
                format!("{t:.17e}"),
                format!("{:.17e}", q.re),
                format!("{:.17e}", q.im),
                format!("{:.17e}", qt.re),
                format!("{:.17e}", qt.im),
                format!("{e:.6e}"),
            ])?;
        }
        let mut c = Check::upper(flow_name(k), err, qtol);
        if let Some(m) = note {
            c = c.with_note(m);
        }
        checks.push(c);
        tables.push(json!({ "k": k, "max_rel_err": err, "c": pair(s.geo.pd.c(k)), "u": pairs(&s.geo.pd.u(k)) }));
    }
    csv.flush()?;

    let th = &ctx.theta;
    let g = ctx.g;
    let theta0 = th.value(&vec![C64::new(0.0, 0.0); g]).norm();
    let ev = th.eval(&ctx.e.point);
    checks.push(Check::upper("theta vanishes at the odd half period", ev.value.norm() / theta0, 1e-8));
    checks.push(Check::upper("Riemann constant: theta zero on a second divisor", ctx.k_validation.on_divisor, K_ON_DIVISOR));
    checks.push(Check::lower("Riemann constant: theta nonzero off the divisor", ctx.k_validation.off_divisor, K_OFF_DIVISOR));
    checks.push(Check::upper("third-kind differential: vanishing A-periods", ctx.w_a_residual, tol.periods));
    checks.push(Check::upper("third-kind differential: reciprocity for W", ctx.w_reciprocity, tol.periods));
    // At the argument of the Q formula; θ(K) itself can vanish.
    let arg: Vec<C64> = (0..g).map(|j| ctx.infinities.inf_plus[j] - ad0[j] - ctx.k[j]).collect();
    let r4 = th.eval_radius(&arg, 4).value;
    let r8 = th.eval_radius(&arg, 8).value;
    checks.push(Check::upper("theta series truncation", (r4 - r8).norm() / r8.norm().max(1e-300), tol.automorphy));

    let rho_minus = ctx.rho(&ctx.infinities.inf_minus, &ad0).norm();
    checks.push(Check::upper("rho vanishes at inf-", rho_minus, qtol));
    let mut rng = rng_for(cfg.seed, 3000);
    let mut rho_err: f64 = 0.0;
    for _ in 0..3 {
        let z = random_z(&mut rng);
        let fiber = fiber_images(&s.geo.curve, &s.geo.pd, z, &opts).map_err(stage("Abel map"))?;
        let l = z * z + (z * z).inv();
        for (y, ap) in [(fiber.y, &fiber.plus), (-fiber.y, &fiber.minus)] {
            let rat = rho_rational(&s.geo.data, l, y).map_err(stage("rho"))?;
            rho_err = worst(rho_err, (ctx.rho(ap, &ad0) - rat).norm() / rat.norm());
        }
    }
    checks.push(Check::upper("rho theta form vs rational form", rho_err, qtol));

    let omegas: Vec<C64> = s.x.sites.iter().map(casimir).collect::<Result<_, _>>().map_err(stage("casimir"))?;
    let h = h_minus2_report(&s.geo.data, &omegas, s.params.xi, &s.params.a).map_err(stage("h(-2)"))?;
    let hq = (h.h_squared - h.q2n_at_minus2).norm() / h.h_squared.norm().max(1e-300);
    checks.push(Check::upper("h(-2)^2 = Q_2N(-2)", hq, tol.hamiltonian));
    checks.push(Check::upper("h(-2)^2 closed form with ((xi + 1/xi)/2)^2", h.plus_residual, tol.hamiltonian));
    timing.mark("context checks");

    let data = json!({
        "N": n,
        "genus": g,
        "ordering": s.ordering,
        "fault": cfg.inject_fault,
        "e": { "delta1": ctx.e.d1, "delta2": ctx.e.d2, "point": pairs(&ctx.e.point) },
        "k": pairs(&ctx.k),
        "big_b": s.geo.pd.big_b.iter().map(|r| pairs(r)).collect::<Vec<_>>(),
        "w": pairs(&ctx.w),
        "abel_inf_plus": pairs(&ctx.infinities.inf_plus),
        "abel_inf_minus": pairs(&ctx.infinities.inf_minus),
        "abel_divisor": pairs(&ad0),
        "k_validation": ctx.k_validation,
        "flows": tables,
        "h_minus2": h,
    });
    Ok(Outcome { checks, data })
}

pub fn reconstruct(cfg: &RunConfig, dir: &Path, timing: &mut Timing) -> CliResult<Outcome> {
    let s = setup(cfg, "reconstruct", timing)?;
    let opts = quad_options(cfg);
    let (n, tol) = (s.params.n, &cfg.tolerances);
    let mut checks = Vec::new();
    let ctx = match ThetaContext::build(&s.geo.curve, &s.geo.basis, &s.geo.pd, &s.divisor, &opts) {
        Ok(ctx) => ctx,
        Err(e) => {
            checks.push(Check::failed("theta context", K_ON_DIVISOR, format!("theta context failed: {e}")));
            checks.push(Check::failed("reconstruction at t = 0", tol.reconstruction_initial, "theta context unavailable"));
            let data = json!({ "N": n, "ordering": s.ordering, "error": e.to_string() });
            return Ok(Outcome { checks, data });
        }
    };
    timing.mark("theta context");
    let ad0 = abel_map(&s.geo.curve, &s.geo.pd, &s.divisor, &opts).map_err(stage("Abel map"))?;

    // Spectral samples away from the branch points, where the eigenvalues
    // would coincide.
    let mut rng = rng_for(cfg.seed, 4000);
    let mut fibers: Vec<FiberImages> = Vec::with_capacity(cfg.z_samples);
    let floor = 1e-3 * s.geo.curve.scale;
    while fibers.len() < cfg.z_samples {
        let z = random_z(&mut rng);
        let l = z * z + (z * z).inv();
        if s.geo.curve.branch_points.iter().any(|b| (l - b).norm() < floor) {
            continue;
        }
        fibers.push(fiber_images(&s.geo.curve, &s.geo.pd, z, &opts).map_err(stage("Abel map"))?);
    }
    timing.mark("fibers");

    let times = cfg.times();
    let mut csv = csv::Writer::from_path(dir.join("reconstruct.csv"))?;
    csv.write_record(["k", "t", "re_z", "im_z", "residual"])?;
    let mut initial: f64 = 0.0;
    for f in &fibers {
        let r = one(&ctx, &s, f, s.geo.data.big_q, &ad0, &s.geo.data);
        csv.write_record(&[
            "0".into(),
            format!("{:.17e}", 0.0),
            format!("{:.17e}", f.z.re),
            format!("{:.17e}", f.z.im),
            format!("{r:.6e}"),
        ])?;
        initial = worst(initial, r);
    }
    checks.push(Check::upper("reconstruction at t = 0", initial, tol.reconstruction_initial));

    let flows: Vec<CliResult<Vec<(f64, C64, f64)>>> = (1..=n)
        .into_par_iter()
        .map(|k| {
            let traj = integrate_flow(&s.x, &s.params, k, &times, tol.ode).map_err(stage("integration"))?;
            let u = s.geo.pd.u(k);
            let ck = s.geo.pd.c(k);
            let mut out = Vec::new();
            for (t, x) in traj.times.iter().zip(&traj.states) {
                let d = reflection_monodromy(x, &s.params).map_err(stage("monodromy"))?;
                let adt: Vec<C64> = ad0.iter().zip(&u).map(|(a, b)| a + b * *t).collect();
                let qt = ctx.q_evolution(s.geo.data.big_q, &ad0, &u, ck, *t);
                for f in &fibers {
                    let r = match &qt {
                        Ok(q) => one(&ctx, &s, f, *q, &adt, &d),
                        Err(_) => f64::NAN,
                    };
                    out.push((*t, f.z, r));
                }
            }
            Ok(out)
        })
        .collect();
    let mut per_flow = Vec::new();
    for (k, rows) in (1..=n).zip(flows) {
        let rows = rows?;
        let mut err: f64 = 0.0;
        for (t, z, r) in &rows {
            csv.write_record(&[
                k.to_string(),
                format!("{t:.17e}"),
                format!("{:.17e}", z.re),
                format!("{:.17e}", z.im),
                format!("{r:.6e}"),
            ])?;
            err = worst(err, *r);
        }
        checks.push(Check::upper(format!("reconstructed T(z, t) vs ODE, P_{k} flow"), err, tol.reconstruction));
        per_flow.push(json!({ "k": k, "max_residual": err }));
    }
    csv.flush()?;
    timing.mark("reconstruction");

    let data = json!({
        "N": n,
        "ordering": s.ordering,
        "fault": cfg.inject_fault,
        "z": fibers.iter().map(|f| pair(f.z)).collect::<Vec<_>>(),
        "flows": per_flow,
    });
    Ok(Outcome { checks, data })
}

/// Entrywise residual of the reconstruction against the monodromy `d`; NaN
/// if it cannot be formed.
fn one(ctx: &ThetaContext, s: &Setup, f: &FiberImages, q: C64, ad: &[C64], d: &xxz_core::monodromy::ReflectionData<C64>) -> f64 {
    let (Ok(t), Ok(tz)) = (d.transfer(f.z), d.t_matrix(f.z)) else { return f64::NAN };
    match reconstruct_from_fiber(ctx, &s.geo.curve, f, t, q, ad) {
        Ok(rec) => matrix_residual(&rec, &tz),
        Err(_) => f64::NAN,
    }
}
