//! The seven pipelines. Each returns its checks and a JSON data block and may
//! write CSV files into its output directory.

mod evolve;
mod geometry;
mod sov;
mod theta;
mod verify;

use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use xxz_core::checks::select_ordering;
use xxz_core::curve::{homology_basis, periods, HomologyBasis, PeriodData, SpectralCurve};
use xxz_core::monodromy::{reflection_monodromy, ReflectionData};
use xxz_core::phasespace::{random_leaf, sample_leaf, ModelParams, OrderingMode, PhasePoint};
use xxz_core::quadrature::QuadOptions;
use xxz_core::sov::{sov_chart, SovChart};
use xxz_core::C64;

use crate::config::{cplx, Fault, RunConfig};
use crate::error::{stage, CliError, CliResult};
use crate::report::{Check, Timing};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Verify,
    Evolve,
    Sov,
    Curve,
    Linearize,
    ThetaCompare,
    Reconstruct,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Evolve => "evolve",
            Command::Sov => "sov",
            Command::Curve => "curve",
            Command::Linearize => "linearize",
            Command::ThetaCompare => "theta-compare",
            Command::Reconstruct => "reconstruct",
        }
    }
}

pub struct Outcome {
    pub checks: Vec<Check>,
    pub data: Value,
}

pub fn dispatch(cmd: Command, cfg: &RunConfig, dir: &Path, timing: &mut Timing) -> CliResult<Outcome> {
    match cmd {
        Command::Verify => verify::run(cfg, timing),
        Command::Evolve => evolve::run(cfg, dir, timing),
        Command::Sov => sov::run(cfg, timing),
        Command::Curve => geometry::curve(cfg, timing),
        Command::Linearize => geometry::linearize(cfg, dir, timing),
        Command::ThetaCompare => theta::compare(cfg, dir, timing),
        Command::Reconstruct => theta::reconstruct(cfg, dir, timing),
    }
}

/// Independent stream for sub-task `tag`, so results do not depend on how
/// work is scheduled.
pub(crate) fn rng_for(seed: u64, tag: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag);
    rng
}

/// Phase points for the run: the explicit point if given, otherwise `count`
/// points on the configured leaf (or on random leaves).
pub(crate) fn sample_points(cfg: &RunConfig, count: usize) -> Vec<PhasePoint<C64>> {
    if let Some(x) = cfg.explicit_point() {
        return vec![x];
    }
    (0..count)
        .map(|i| {
            let mut rng = rng_for(cfg.seed, 1 + i as u64);
            let leaf = match &cfg.leaf.omega {
                Some(om) => om.iter().map(cplx).collect(),
                None => random_leaf(cfg.model.n, 1.0, &mut rng),
            };
            sample_leaf(&leaf, rng.next_u64())
        })
        .collect()
}

pub(crate) fn base_point(cfg: &RunConfig) -> PhasePoint<C64> {
    sample_points(cfg, 1).remove(0)
}

/// Model parameters with the ordering resolved. `auto` keeps the ordering
/// whose transfer matrices commute at `points`.
pub(crate) fn resolve_params(cfg: &RunConfig, points: &[PhasePoint<C64>]) -> CliResult<(ModelParams, Value)> {
    let params = cfg.params(OrderingMode::Reversed)?;
    match cfg.fixed_ordering() {
        Some(m) => Ok((params.with_ordering(m), serde_json::json!({ "mode": ordering_name(m), "selected": false }))),
        None => {
            let mut rng = rng_for(cfg.seed, 0);
            let (m, rev, asp) = select_ordering(points, &params, &mut rng).map_err(stage("ordering selection"))?;
            let info = serde_json::json!({
                "mode": ordering_name(m),
                "selected": true,
                "commutator_reversed": rev,
                "commutator_as_printed": asp,
            });
            Ok((params.with_ordering(m), info))
        }
    }
}

fn ordering_name(m: OrderingMode) -> &'static str {
    match m {
        OrderingMode::AsPrinted => "as_printed",
        OrderingMode::Reversed => "reversed",
    }
}

pub(crate) fn quad_options(cfg: &RunConfig) -> QuadOptions {
    QuadOptions { rel_tol: cfg.tolerances.quadrature, ..QuadOptions::default() }
}

/// Everything built from one phase point: monodromy, curve, cycles, periods
/// and the separated-variable chart.
pub(crate) struct Geometry {
    pub data: ReflectionData<C64>,
    pub curve: SpectralCurve,
    pub basis: HomologyBasis,
    pub pd: PeriodData,
    pub chart: SovChart,
}

impl Geometry {
    pub fn build(cfg: &RunConfig, x: &PhasePoint<C64>, params: &ModelParams, opts: &QuadOptions) -> CliResult<Self> {
        let data = reflection_monodromy(x, params).map_err(stage("monodromy"))?;
        let curve = SpectralCurve::from_data(&data).map_err(stage("spectral curve"))?;
        let basis = homology_basis(&curve).map_err(stage("homology basis"))?;
        let mut pd = periods(&curve, &basis, opts).map_err(stage("periods"))?;
        if cfg.inject_fault == Some(Fault::CorruptNormalization) {
            let mut nrm = pd.normalization.clone();
            if let Some(last) = nrm.last_mut() {
                for v in last.iter_mut() {
                    *v *= 1.05;
                }
            }
            pd = pd.with_normalization(nrm);
        }
        let chart = sov_chart(x, params).map_err(stage("separated variables"))?;
        Ok(Geometry { data, curve, basis, pd, chart })
    }
}

pub(crate) fn require_genus(cfg: &RunConfig, what: &str) -> CliResult<()> {
    if cfg.model.n < 2 {
        return Err(CliError::Config(format!("{what} needs N ≥ 2 (a curve of positive genus)")));
    }
    Ok(())
}

pub(crate) fn pair(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

pub(crate) fn pairs(v: &[C64]) -> Vec<[f64; 2]> {
    v.iter().map(|z| pair(*z)).collect()
}

/// Relative entrywise distance of two 2×2 matrices, scaled by the largest
/// entry of `b`.
pub(crate) fn matrix_residual(a: &[[C64; 2]; 2], b: &[[C64; 2]; 2]) -> f64 {
    let scale = b.iter().flatten().map(|v| v.norm()).fold(1e-300, f64::max);
    (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| (a[i][j] - b[i][j]).norm()).fold(0.0, f64::max) / scale
}

/// Larger of two residuals, with NaN winning.
pub(crate) fn worst(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}
