use rayon::prelude::*;
use serde_json::json;
use xxz_core::sov::{chart_residual, root_gradient_check, sov_chart, verify_log_canonical};

use super::{resolve_params, sample_points, worst, Outcome};
use crate::config::RunConfig;
use crate::error::{stage, CliResult};
use crate::report::{Check, Timing};

pub fn run(cfg: &RunConfig, timing: &mut Timing) -> CliResult<Outcome> {
    let points = sample_points(cfg, cfg.samples);
    let (params, ordering) = resolve_params(cfg, &points)?;
    timing.mark("setup");
    let per_point: Vec<_> = points
        .par_iter()
        .map(|x| -> CliResult<(f64, f64, f64)> {
            let lc = verify_log_canonical(x, &params).map_err(stage("log-canonical brackets"))?.max_residual;
            let rg = if params.n >= 2 { root_gradient_check(x, &params).map_err(stage("root gradients"))? } else { 0.0 };
            let chart = sov_chart(x, &params).map_err(stage("separated variables"))?;
            let cr = chart_residual(x, &params, &chart).map_err(stage("separated variables"))?;
            Ok((lc, rg, cr))
        })
        .collect();
    timing.mark("brackets");
    let (mut lc, mut rg, mut cr) = (0.0, 0.0, 0.0);
    for r in per_point {
        let (a, b, c) = r?;
        lc = worst(lc, a);
        rg = worst(rg, b);
        cr = worst(cr, c);
    }
    let tol = &cfg.tolerances;
    let mut checks = vec![Check::upper("log-canonical bracket pattern", lc, tol.log_canonical)];
    if params.n >= 2 {
        checks.push(Check::upper("implicit root gradients vs finite differences", rg, tol.gradient));
    }
    checks.push(Check::upper("chart invariants at the computed roots", cr, tol.log_canonical));
    let data = json!({ "N": params.n, "points": points.len(), "ordering": ordering });
    Ok(Outcome { checks, data })
}
