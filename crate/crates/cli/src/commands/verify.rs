use rayon::prelude::*;
use serde_json::json;
use xxz_core::checks::{identity_suite, CheckOutcome, SuiteTolerances};

use super::{resolve_params, rng_for, sample_points, worst, Outcome};
use crate::config::RunConfig;
use crate::error::{stage, CliResult};
use crate::report::{Check, Timing};

const CHUNK: usize = 5;

pub fn run(cfg: &RunConfig, timing: &mut Timing) -> CliResult<Outcome> {
    let points = sample_points(cfg, cfg.samples);
    let (params, ordering) = resolve_params(cfg, &points)?;
    timing.mark("setup");
    let t = &cfg.tolerances;
    let tol = SuiteTolerances {
        identity: t.identity,
        hamiltonian: t.hamiltonian,
        lax: t.lax,
        log_canonical: t.log_canonical,
        root_gradient: t.gradient,
        independence: t.singular_floor,
    };
    // Lax-pair samples only in the first chunk: that check is the expensive one.
    let results: Vec<_> = points
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(i, chunk)| {
            let mut rng = rng_for(cfg.seed, 1000 + i as u64);
            let lax = if i == 0 { cfg.z_samples } else { 0 };
            identity_suite(chunk, &params, &mut rng, &tol, lax)
        })
        .collect();
    timing.mark("identity suite");
    let mut merged: Vec<CheckOutcome> = Vec::new();
    for r in results {
        for o in r.map_err(stage("identity suite"))? {
            match merged.iter_mut().find(|m| m.name == o.name) {
                Some(m) => merge(m, &o),
                None => merged.push(o),
            }
        }
    }
    let checks: Vec<Check> = merged.into_iter().map(Check::from).collect();
    let data = json!({
        "N": cfg.model.n,
        "points": points.len(),
        "lax_z_samples": cfg.z_samples,
        "ordering": ordering,
    });
    Ok(Outcome { checks, data })
}

fn merge(into: &mut CheckOutcome, o: &CheckOutcome) {
    into.residual = if o.lower_bound {
        if into.residual.is_nan() || o.residual.is_nan() {
            f64::NAN
        } else {
            into.residual.min(o.residual)
        }
    } else {
        worst(into.residual, o.residual)
    };
    into.passed &= o.passed;
}
