//! Separated variables `(Q, λ_k, w_k, ζ_k, y_k)` and their tracking along flows.

use serde::Serialize;

use crate::dynamics::{Flow, Trajectory};
use crate::error::{Error, Result};
use crate::laurent::LambdaPoly;
use crate::monodromy::{reflection_monodromy, ReflectionData};
use crate::phasespace::{bracket_with_scale, jacobian, jacobian_fd, ModelParams, Observable, PhasePoint};
use crate::roots::poly_roots;
use crate::scalar::Scalar;
use crate::C64;

const Q_FLOOR: f64 = 1e-10;
const TIE_TOL: f64 = 1e-12;

/// `C̃(λ)`, checked against the closed form of its leading coefficient.
pub fn c_tilde(data: &ReflectionData<C64>) -> Result<LambdaPoly<C64>> {
    if data.big_q.norm() < Q_FLOOR {
        return Err(Error::Degenerate(format!("|Q| = {:.3e} below {Q_FLOOR:.0e}", data.big_q.norm())));
    }
    Ok(data.c_tilde.clone())
}

/// `Q = Σ_j f_j((k_j/a_j)∏_{i>j}k_i²ξ − (a_j/k_j)∏_{i>j}k_i⁻²ξ⁻¹)`.
pub fn closed_form_q<S: Scalar>(x: &PhasePoint<S>, params: &ModelParams) -> S {
    let xi = S::constant(params.xi);
    let mut q = S::zero();
    for (j, site) in x.sites.iter().enumerate() {
        let tail = x.sites[j + 1..].iter().fold(S::one(), |acc, s| acc * s.k * s.k);
        let ka = site.k / S::constant(params.a[j]);
        q += site.f * (ka * tail * xi - (ka * tail * xi).recip());
    }
    q
}

/// Root of `w² − λw + 1` with `|w| ≤ 1`, computed without cancellation. The
/// flag reports an unresolved `|w| = 1` tie.
pub fn small_w<S: Scalar>(lambda: S) -> (S, bool) {
    let two = S::constant(C64::new(2.0, 0.0));
    let d = (lambda * lambda - two * two).sqrt();
    let s1 = lambda + d;
    let s2 = lambda - d;
    let s = if s1.magnitude() >= s2.magnitude() { s1 } else { s2 };
    let w = two / s;
    let tie = (w.magnitude() - 1.0).abs() < TIE_TOL;
    if tie && w.value().im < 0.0 {
        return (w.recip(), true);
    }
    (w, tie)
}

/// The root of `w² − λw + 1` nearest `prev`.
pub fn continued_w(lambda: C64, prev: C64) -> C64 {
    let (w, _) = small_w(lambda);
    if (w - prev).norm() <= (1.0 / w - prev).norm() {
        w
    } else {
        1.0 / w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SovChart {
    pub big_q: C64,
    pub big_p: C64,
    pub lambdas: Vec<C64>,
    pub ws: Vec<C64>,
    pub zetas: Vec<C64>,
    pub ys: Vec<C64>,
    pub warnings: Vec<String>,
}

impl SovChart {
    pub fn g(&self) -> usize {
        self.lambdas.len()
    }
}

fn min_gap(v: &[C64]) -> f64 {
    let mut gap = f64::INFINITY;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            gap = gap.min((v[i] - v[j]).norm());
        }
    }
    gap
}

fn root_scale(v: &[C64]) -> f64 {
    v.iter().map(|c| c.norm()).fold(1.0, f64::max)
}

/// Matches `roots` to `reference` greedily by distance.
fn match_to(reference: &[C64], roots: &[C64]) -> Vec<C64> {
    let mut left: Vec<C64> = roots.to_vec();
    let mut out = Vec::with_capacity(reference.len());
    for r in reference {
        let (idx, _) =
            left.iter().enumerate().map(|(i, c)| (i, (c - r).norm())).min_by(|a, b| a.1.total_cmp(&b.1)).expect("same number of roots");
        out.push(left.remove(idx));
    }
    out
}

fn primal_roots(data: &ReflectionData<C64>) -> Result<Vec<C64>> {
    let ct = c_tilde(data)?;
    let roots = poly_roots(&ct)?;
    if roots.len() > 1 && min_gap(&roots) < 1e-6 * root_scale(&roots) {
        return Err(Error::Degenerate(format!("divisor root collision (gap {:.3e})", min_gap(&roots))));
    }
    Ok(roots)
}

fn chart_from(data: &ReflectionData<C64>, lambdas: Vec<C64>, ws: Vec<C64>, warnings: Vec<String>) -> Result<SovChart> {
    let mut zetas = Vec::with_capacity(ws.len());
    let mut ys = Vec::with_capacity(ws.len());
    for w in &ws {
        let z = w.sqrt();
        let zeta = data.a(z)?;
        zetas.push(zeta);
        ys.push(zeta - data.transfer(z)?);
    }
    Ok(SovChart { big_q: data.big_q, big_p: data.big_p, lambdas, ws, zetas, ys, warnings })
}

/// The chart with the `|w| ≤ 1` branch convention. Roots are ordered by
/// (real, imaginary) part.
pub fn sov_chart(x: &PhasePoint<C64>, params: &ModelParams) -> Result<SovChart> {
    let data = reflection_monodromy(x, params)?;
    let lambdas = primal_roots(&data)?;
    let mut warnings = Vec::new();
    let ws = lambdas
        .iter()
        .enumerate()
        .map(|(k, l)| {
            let (w, tie) = small_w(*l);
            if tie {
                warnings.push(format!("|w_{}| = 1: branch tie resolved by Im w > 0", k + 1));
            }
            w
        })
        .collect();
    chart_from(&data, lambdas, ws, warnings)
}

/// The chart continued from `prev`: roots matched to the previous labels and
/// each `w` taken nearest its previous value.
pub fn sov_chart_continued(x: &PhasePoint<C64>, params: &ModelParams, prev: &SovChart) -> Result<SovChart> {
    let data = reflection_monodromy(x, params)?;
    let lambdas = match_to(&prev.lambdas, &primal_roots(&data)?);
    let ws = lambdas.iter().zip(&prev.ws).map(|(l, w)| continued_w(*l, *w)).collect();
    chart_from(&data, lambdas, ws, Vec::new())
}

/// Largest violation of the chart invariants: `C̃(λ_k) = 0`, `y_k² = Q_{2N}(λ_k)`,
/// `y_k = (A − D)/2` and `ζ² − 2tζ + det𝒯 = 0`, each relative.
pub fn chart_residual(x: &PhasePoint<C64>, params: &ModelParams, chart: &SovChart) -> Result<f64> {
    let data = reflection_monodromy(x, params)?;
    let q2n = data.spectral_polynomial()?;
    let ct_norm = data.c_tilde.norm();
    let mut worst: f64 = 0.0;
    for k in 0..chart.g() {
        let l = chart.lambdas[k];
        let z = chart.ws[k].sqrt();
        let lam_scale = l.norm().max(1.0);
        worst = worst.max(data.c_tilde.eval(l).norm() / (ct_norm * lam_scale.powi(chart.g() as i32)));
        let q = q2n.eval(l);
        let (a, d) = (data.a(z)?, data.d(z)?);
        // Both sides carry rounding at the scale of their summands, not of their values.
        let q_terms = q2n.coeffs().iter().rev().fold(0.0, |acc, c| acc * l.norm() + c.norm());
        let y = chart.ys[k];
        let y_scale = y.norm_sqr().max(y.norm() * (a.norm() + d.norm()));
        worst = worst.max((y * y - q).norm() / q_terms.max(y_scale).max(1e-300));
        worst = worst.max((chart.ys[k] - (a - d) / 2.0).norm() / a.norm().max(d.norm()).max(1e-300));
        let t = data.transfer(z)?;
        let dt = data.det_t(z)?;
        let zeta = chart.zetas[k];
        let on = zeta * zeta - 2.0 * t * zeta + dt;
        worst = worst.max(on.norm() / zeta.norm_sqr().max((t * zeta).norm()).max(dt.norm()).max(1e-300));
    }
    Ok(worst)
}

/// `(Q, w_1..w_g, P, ζ_1..ζ_g)` as an observable. Roots are found on the
/// primal value and promoted with one Newton step in `S` arithmetic, which
/// carries the implicit-function derivative `∂λ = −∂C̃/∂_λC̃`.
pub struct SovCoordinates<'a> {
    pub params: &'a ModelParams,
    /// Labels and branches to continue from; `None` uses the `|w| ≤ 1` chart.
    pub reference: Option<SovChart>,
}

/// `λ_1..λ_g` alone, with the same root promotion as [`SovCoordinates`].
pub struct SovRoots<'a> {
    pub params: &'a ModelParams,
    pub reference: Vec<C64>,
}

fn promoted_roots<S: Scalar>(data: &ReflectionData<S>, reference: Option<&[C64]>) -> Result<Vec<S>> {
    let primal = data.c_tilde.map(|c| c.value());
    if data.n() == 1 {
        return Ok(Vec::new());
    }
    if primal.leading().norm() < Q_FLOOR {
        return Err(Error::Degenerate("|Q| below floor".into()));
    }
    let mut roots = poly_roots(&primal)?;
    if let Some(r) = reference {
        roots = match_to(r, &roots);
    }
    let dc = data.c_tilde.derivative();
    Ok(roots
        .iter()
        .map(|r| {
            let l = S::constant(*r);
            l - data.c_tilde.eval(l) / dc.eval(l)
        })
        .collect())
}

impl Observable for SovRoots<'_> {
    fn eval<S: Scalar>(&self, x: &PhasePoint<S>) -> Result<Vec<S>> {
        let data = reflection_monodromy(x, self.params)?;
        promoted_roots(&data, Some(&self.reference))
    }
}

impl Observable for SovCoordinates<'_> {
    fn eval<S: Scalar>(&self, x: &PhasePoint<S>) -> Result<Vec<S>> {
        let data = reflection_monodromy(x, self.params)?;
        let refl = self.reference.as_ref().map(|c| c.lambdas.as_slice());
        let lambdas = promoted_roots(&data, refl)?;
        let g = lambdas.len();
        let mut ws = Vec::with_capacity(g);
        let mut zetas = Vec::with_capacity(g);
        for (k, l) in lambdas.iter().enumerate() {
            let (mut w, _) = small_w(*l);
            if let Some(c) = &self.reference {
                let wv = w.value();
                if (1.0 / wv - c.ws[k]).norm() < (wv - c.ws[k]).norm() {
                    w = w.recip();
                }
            }
            ws.push(w);
            zetas.push(data.a(w.sqrt())?);
        }
        let mut out = vec![data.big_q];
        out.extend(ws);
        out.push(data.big_p);
        out.extend(zetas);
        Ok(out)
    }
}

/// `|d| / scale`, with `0/0 = 0`.
pub(crate) fn relative(d: C64, scale: f64) -> f64 {
    let n = d.norm();
    if n == 0.0 {
        0.0
    } else {
        n / scale
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BracketResidual {
    pub pair: String,
    pub computed: C64,
    pub expected: C64,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LogCanonicalReport {
    /// Worst `|{a,b} − expected| / (|a||b|)` over all pairs.
    pub max_residual: f64,
    pub entries: Vec<BracketResidual>,
}

/// All brackets of `(Q, w_k; P, ζ_k)` against `{w_k, ζ_j} = 2δ_{jk}w_kζ_j`,
/// `{Q, P} = 2QP` and zero for every other pair.
pub fn verify_log_canonical(x: &PhasePoint<C64>, params: &ModelParams) -> Result<LogCanonicalReport> {
    let obs = SovCoordinates { params, reference: None };
    let vals = obs.eval(x)?;
    let (b, bscale) = bracket_with_scale(&obs, &obs, x)?;
    let g = (vals.len() - 2) / 2;
    let names: Vec<String> = std::iter::once("Q".to_string())
        .chain((1..=g).map(|k| format!("w{k}")))
        .chain(std::iter::once("P".to_string()))
        .chain((1..=g).map(|k| format!("zeta{k}")))
        .collect();
    let m = vals.len();
    let mut entries = Vec::new();
    let mut worst: f64 = 0.0;
    for i in 0..m {
        for j in i + 1..m {
            // Pattern: coordinate i in the first block paired with its partner
            // i + g + 1 in the second block.
            let expected = if j == i + g + 1 { 2.0 * vals[i] * vals[j] } else { C64::new(0.0, 0.0) };
            let scale = (vals[i].norm() * vals[j].norm()).max(bscale[(i, j)]);
            let residual = relative(b[(i, j)] - expected, scale);
            worst = worst.max(residual);
            entries.push(BracketResidual { pair: format!("{{{},{}}}", names[i], names[j]), computed: b[(i, j)], expected, residual });
        }
    }
    Ok(LogCanonicalReport { max_residual: worst, entries })
}

/// Largest relative gap between the implicit-function gradient of the roots
/// and central finite differences.
pub fn root_gradient_check(x: &PhasePoint<C64>, params: &ModelParams) -> Result<f64> {
    let chart = sov_chart(x, params)?;
    let obs = SovRoots { params, reference: chart.lambdas.clone() };
    let (_, exact) = jacobian(&obs, x)?;
    let fd = jacobian_fd(&obs, x)?;
    let scale = exact.iter().map(|c| c.norm()).fold(f64::MIN_POSITIVE, f64::max);
    Ok((exact - fd).iter().map(|c| c.norm()).fold(0.0, f64::max) / scale)
}

#[derive(Debug, Clone)]
pub struct TrackOptions {
    /// Largest accepted root motion between consecutive charts, relative to
    /// `max(1, max|λ|)`.
    pub max_jump: f64,
    /// Maximum bisection depth per trajectory interval.
    pub max_depth: usize,
}

impl Default for TrackOptions {
    fn default() -> Self {
        TrackOptions { max_jump: 1e-3, max_depth: 24 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrackedChart {
    pub t: f64,
    pub x: PhasePoint<C64>,
    pub chart: SovChart,
    /// True for points of the input trajectory, false for refinement points.
    pub sample: bool,
}

fn acceptable(prev: &SovChart, next: &SovChart, opts: &TrackOptions) -> bool {
    let motion = prev.lambdas.iter().zip(&next.lambdas).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    let scale = root_scale(&prev.lambdas);
    let unambiguous = prev.g() < 2 || motion < 0.5 * min_gap(&prev.lambdas);
    unambiguous && motion <= opts.max_jump * scale
}

/// Tracks the divisor along `traj`, bisecting intervals (by re-integrating the
/// flow) until consecutive charts satisfy the continuity rule and the extra
/// predicate `accept(prev, next)`. Returns every chart visited, in time order.
pub fn divisor_track_with<F>(traj: &Trajectory, params: &ModelParams, opts: &TrackOptions, mut accept: F) -> Result<Vec<TrackedChart>>
where
    F: FnMut(&TrackedChart, &TrackedChart) -> bool,
{
    let flow = Flow::new(params, traj.hamiltonian_index, traj.tol)?;
    let first = TrackedChart { t: traj.times[0], x: traj.states[0].clone(), chart: sov_chart(&traj.states[0], params)?, sample: true };
    let mut out = vec![first];
    for i in 1..traj.times.len() {
        let target = (traj.times[i], traj.states[i].clone());
        // Stack of pending right endpoints; the left endpoint is out.last().
        let mut pending = vec![(target, 0usize, true)];
        while let Some(((t, x), depth, sample)) = pending.pop() {
            let prev = out.last().unwrap();
            let chart = sov_chart_continued(&x, params, &prev.chart).map_err(|e| Error::Tracking { time: t, reason: e.to_string() })?;
            let cand = TrackedChart { t, x, chart, sample };
            if acceptable(&prev.chart, &cand.chart, opts) && accept(prev, &cand) {
                out.push(cand);
                continue;
            }
            if depth >= opts.max_depth {
                return Err(Error::Tracking { time: t, reason: "root labels ambiguous after refinement".into() });
            }
            let tm = 0.5 * (prev.t + t);
            let (xm, _) = flow.advance(&prev.x, prev.t, tm)?;
            pending.push(((cand.t, cand.x), depth + 1, sample));
            pending.push(((tm, xm), depth + 1, false));
        }
    }
    Ok(out)
}

/// Charts at the trajectory's sample times with consistent labels.
pub fn divisor_track(traj: &Trajectory, params: &ModelParams, opts: &TrackOptions) -> Result<Vec<SovChart>> {
    Ok(divisor_track_with(traj, params, opts, |_, _| true)?.into_iter().filter(|c| c.sample).map(|c| c.chart).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{integrate_flow, uniform_times};
    use crate::phasespace::{sample_leaf, OrderingMode, SiteState};

    fn setup(n: usize, seed: u64) -> (ModelParams, PhasePoint<C64>) {
        let a: Vec<C64> = (0..n).map(|j| C64::new(1.0 + 0.15 * j as f64, -0.1 * j as f64)).collect();
        let params = ModelParams::new(C64::new(1.2, 0.3), a, OrderingMode::Reversed).unwrap();
        let leaf: Vec<C64> = (0..n).map(|j| C64::new(2.6 + 0.4 * j as f64, 0.2)).collect();
        (params, sample_leaf(&leaf, seed))
    }

    #[test]
    fn leading_coefficient_matches_closed_form() {
        for n in 1..=3 {
            for seed in 0..20 {
                let (params, x) = setup(n, seed);
                let data = reflection_monodromy(&x, &params).unwrap();
                let q = closed_form_q(&x, &params);
                assert!((data.big_q - q).norm() < 1e-10 * q.norm().max(1.0), "n={n} seed={seed}");
                assert_eq!(data.c_tilde.degree(), Some(n - 1));
            }
        }
    }

    #[test]
    fn zero_f_is_degenerate() {
        let (params, mut x) = setup(2, 3);
        for s in x.sites.iter_mut() {
            *s = SiteState::new(s.e, C64::new(0.0, 0.0), s.k);
        }
        let data = reflection_monodromy(&x, &params).unwrap();
        assert!(matches!(c_tilde(&data), Err(Error::Degenerate(_))));
    }

    #[test]
    fn chart_invariants_hold() {
        for n in 2..=3 {
            for seed in 0..10 {
                let (params, x) = setup(n, seed);
                let chart = sov_chart(&x, &params).unwrap();
                assert!(chart.ws.iter().all(|w| w.norm() <= 1.0 + 1e-12));
                for (l, w) in chart.lambdas.iter().zip(&chart.ws) {
                    assert!((w + 1.0 / w - l).norm() < 1e-12 * l.norm().max(1.0));
                }
                let r = chart_residual(&x, &params, &chart).unwrap();
                assert!(r < 1e-8, "n={n} seed={seed}: {r}");
            }
        }
    }

    #[test]
    fn single_site_has_no_roots() {
        let (params, x) = setup(1, 2);
        let chart = sov_chart(&x, &params).unwrap();
        assert!(chart.lambdas.is_empty());
    }

    #[test]
    fn log_canonical_pattern() {
        for n in 2..=3 {
            for seed in 0..5 {
                let (params, x) = setup(n, seed);
                let rep = verify_log_canonical(&x, &params).unwrap();
                assert!(rep.max_residual < 1e-8, "n={n} seed={seed}: {}", rep.max_residual);
                assert!(root_gradient_check(&x, &params).unwrap() < 1e-6);
            }
        }
    }

    #[test]
    fn small_w_branch() {
        let (w, tie) = small_w(C64::new(5.0, 1.0));
        assert!(w.norm() < 1.0 && !tie);
        let (w, tie) = small_w(C64::new(1.0, 0.0));
        assert!(tie && w.im > 0.0);
    }

    #[test]
    fn tracked_divisor_stays_on_curve() {
        let (params, _) = setup(3, 0);
        let c = |re, im| C64::new(re, im);
        let x = PhasePoint::from_coords(&[
            c(0.4, 0.1),
            c(0.3, -0.2),
            c(1.05, 0.1),
            c(-0.2, 0.3),
            c(0.5, 0.1),
            c(0.9, -0.15),
            c(0.3, 0.2),
            c(0.25, 0.05),
            c(1.1, 0.2),
        ]);
        let traj = integrate_flow(&x, &params, 1, &uniform_times(0.05, 4), 1e-10).unwrap();
        let opts = TrackOptions { max_jump: 1e-2, ..Default::default() };
        let dense = divisor_track_with(&traj, &params, &opts, |_, _| true).unwrap();
        assert_eq!(dense.iter().filter(|c| c.sample).count(), 5);
        let q2n = reflection_monodromy(&x, &params).unwrap().spectral_polynomial().unwrap();
        for w in dense.windows(2) {
            let scale = root_scale(&w[0].chart.lambdas);
            for (a, b) in w[0].chart.lambdas.iter().zip(&w[1].chart.lambdas) {
                assert!((a - b).norm() <= 1e-2 * scale);
            }
        }
        for c in &dense {
            for (l, y) in c.chart.lambdas.iter().zip(&c.chart.ys) {
                let q = q2n.eval(*l);
                assert!((y * y - q).norm() < 1e-7 * q.norm().max(1.0));
            }
        }
    }
}
