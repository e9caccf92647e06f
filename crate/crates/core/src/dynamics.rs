//! Hamiltonian flows of the reflection Hamiltonians.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::monodromy::{reflection_monodromy, Hamiltonian};
use crate::phasespace::{casimir, jacobian, poisson_tensor, ModelParams, Observable, PhasePoint};
use crate::C64;

/// Tangent vector `{x_c, P_k}` for every flat coordinate `x_c`.
pub fn vector_field(x: &PhasePoint<C64>, k: usize, params: &ModelParams) -> Result<Vec<C64>> {
    if k > params.n {
        return Err(Error::Domain(format!("no Hamiltonian P_{k} for N = {}", params.n)));
    }
    let (_, grad) = jacobian(&Hamiltonian { params, k }, x)?;
    let pi = poisson_tensor(x)?;
    let field = pi * grad.transpose();
    let out: Vec<C64> = field.iter().copied().collect();
    if out.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::Degenerate("non-finite vector field".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct IntegratorStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

impl IntegratorStats {
    fn absorb(&mut self, o: IntegratorStats) {
        self.accepted += o.accepted;
        self.rejected += o.rejected;
        self.rhs_evals += o.rhs_evals;
    }
}

// Dormand–Prince 5(4).
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0];

/// The flow of one Hamiltonian, integrated as a real system of dimension 6N.
#[derive(Debug, Clone)]
pub struct Flow<'a> {
    pub params: &'a ModelParams,
    pub k: usize,
    pub tol: f64,
}

fn to_real(x: &PhasePoint<C64>) -> Vec<f64> {
    let c = x.coords();
    c.iter().map(|z| z.re).chain(c.iter().map(|z| z.im)).collect()
}

fn from_real(y: &[f64]) -> PhasePoint<C64> {
    let m = y.len() / 2;
    let c: Vec<C64> = (0..m).map(|i| C64::new(y[i], y[m + i])).collect();
    PhasePoint::from_coords(&c)
}

impl<'a> Flow<'a> {
    pub fn new(params: &'a ModelParams, k: usize, tol: f64) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
        }
        if k > params.n {
            return Err(Error::Domain(format!("no Hamiltonian P_{k} for N = {}", params.n)));
        }
        Ok(Flow { params, k, tol })
    }

    fn rhs(&self, t: f64, y: &[f64]) -> Result<Vec<f64>> {
        let f = vector_field(&from_real(y), self.k, self.params).map_err(|e| Error::Integration { time: t, reason: e.to_string() })?;
        Ok(f.iter().map(|z| z.re).chain(f.iter().map(|z| z.im)).collect())
    }

    fn err_norm(&self, y: &[f64], y_new: &[f64], err: &[f64]) -> f64 {
        let s: f64 = (0..y.len())
            .map(|i| {
                let sc = self.tol + self.tol * y[i].abs().max(y_new[i].abs());
                (err[i] / sc).powi(2)
            })
            .sum();
        (s / y.len() as f64).sqrt()
    }

    /// Integrates from `(t0, x)` to `t1` (either direction).
    pub fn advance(&self, x: &PhasePoint<C64>, t0: f64, t1: f64) -> Result<(PhasePoint<C64>, IntegratorStats)> {
        let mut stats = IntegratorStats::default();
        let mut y = to_real(x);
        if t1 == t0 {
            return Ok((x.clone(), stats));
        }
        let dir = (t1 - t0).signum();
        let span = (t1 - t0).abs();
        let dim = y.len();
        let mut t = t0;
        let mut f = self.rhs(t, &y)?;
        stats.rhs_evals += 1;

        let d0 = (y.iter().map(|v| v * v).sum::<f64>() / dim as f64).sqrt();
        let d1 = (f.iter().map(|v| v * v).sum::<f64>() / dim as f64).sqrt();
        let mut h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h = h.min(span).max(1e-10 * span);

        let mut k = vec![vec![0.0; dim]; 7];
        let mut ytmp = vec![0.0; dim];
        loop {
            let remaining = (t1 - t) * dir;
            if remaining <= 0.0 {
                break;
            }
            let last = h >= remaining;
            let step = if last { remaining } else { h };
            if step < 1e-14 * t.abs().max(1.0) {
                return Err(Error::Integration { time: t, reason: "step size underflow".into() });
            }
            let hs = dir * step;
            k[0].copy_from_slice(&f);
            for s in 1..7 {
                for i in 0..dim {
                    let mut acc = y[i];
                    for (j, kj) in k.iter().enumerate().take(s) {
                        acc += hs * A[s][j] * kj[i];
                    }
                    ytmp[i] = acc;
                }
                k[s] = self.rhs(t + C[s] * hs, &ytmp)?;
                stats.rhs_evals += 1;
            }
            // Row 6 of A is the fifth-order solution, so ytmp is y_{n+1}.
            let err: Vec<f64> = (0..dim).map(|i| hs * (0..7).map(|s| E[s] * k[s][i]).sum::<f64>()).collect();
            let en = self.err_norm(&y, &ytmp, &err);
            if !en.is_finite() {
                return Err(Error::Integration { time: t, reason: "non-finite error estimate".into() });
            }
            if en <= 1.0 {
                stats.accepted += 1;
                t = if last { t1 } else { t + hs };
                y.copy_from_slice(&ytmp);
                f = k[6].clone();
                let fac = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
                if !last {
                    h = step * fac;
                }
            } else {
                stats.rejected += 1;
                h = step * (0.9 * en.powf(-0.2)).clamp(0.1, 1.0);
            }
        }
        Ok((from_real(&y), stats))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<PhasePoint<C64>>,
    pub hamiltonian_index: usize,
    pub tol: f64,
    pub stats: IntegratorStats,
    /// `max_j |ω_j(t) − ω_j(0)|` over the samples.
    pub max_casimir_drift: f64,
}

/// Integrates the `P_k` flow from `x0` at `times[0]`, recording a state at each
/// time. Times must be strictly increasing.
pub fn integrate_flow(x0: &PhasePoint<C64>, params: &ModelParams, k: usize, times: &[f64], tol: f64) -> Result<Trajectory> {
    if times.is_empty() {
        return Err(Error::Domain("no sample times".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("sample times must be strictly increasing".into()));
    }
    let flow = Flow::new(params, k, tol)?;
    let omega0: Vec<C64> = x0.sites.iter().map(casimir).collect::<Result<_>>()?;
    let mut states = vec![x0.clone()];
    let mut stats = IntegratorStats::default();
    let mut drift: f64 = 0.0;
    for w in times.windows(2) {
        let (next, s) = flow.advance(states.last().unwrap(), w[0], w[1])?;
        stats.absorb(s);
        for (site, w0) in next.sites.iter().zip(&omega0) {
            drift = drift.max((casimir(site)? - w0).norm());
        }
        states.push(next);
    }
    Ok(Trajectory { times: times.to_vec(), states, hamiltonian_index: k, tol, stats, max_casimir_drift: drift })
}

/// Evenly spaced sample times `0, t_end/m, …, t_end`.
pub fn uniform_times(t_end: f64, m: usize) -> Vec<f64> {
    (0..=m).map(|i| t_end * i as f64 / m as f64).collect()
}

/// Evaluates an observable at every stored state.
pub fn flow_observable<F: Observable>(traj: &Trajectory, obs: &F) -> Result<Vec<Vec<C64>>> {
    traj.states.iter().map(|x| obs.eval(x)).collect()
}

/// Maximum drift of the conserved quantities along a trajectory. Drift is
/// `|q(t) − q(0)| / max(1, |q(0)|)`.
#[derive(Debug, Clone, Serialize)]
pub struct ConservationReport {
    pub casimir_drift: f64,
    pub hamiltonian_drift: f64,
    pub curve_drift: f64,
}

impl ConservationReport {
    pub fn max(&self) -> f64 {
        self.casimir_drift.max(self.hamiltonian_drift).max(self.curve_drift)
    }
}

fn drift(series: &[Vec<C64>]) -> f64 {
    let first = &series[0];
    series.iter().flat_map(|v| v.iter().zip(first).map(|(a, b)| (a - b).norm() / b.norm().max(1.0))).fold(0.0, f64::max)
}

pub fn conservation_report(traj: &Trajectory, params: &ModelParams) -> Result<ConservationReport> {
    let mut cas = Vec::new();
    let mut ham = Vec::new();
    let mut curve = Vec::new();
    for x in &traj.states {
        cas.push(x.sites.iter().map(casimir).collect::<Result<Vec<_>>>()?);
        let data = reflection_monodromy(x, params)?;
        let mut q = data.spectral_polynomial()?.coeffs().to_vec();
        q.resize(2 * params.n + 1, C64::new(0.0, 0.0));
        curve.push(q);
        ham.push(data.hamiltonians);
    }
    Ok(ConservationReport { casimir_drift: drift(&cas), hamiltonian_drift: drift(&ham), curve_drift: drift(&curve) })
}

impl Trajectory {
    /// CSV with columns `t, re_e1, im_e1, re_f1, im_f1, re_k1, im_k1, …`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let n = self.states.first().map(|x| x.n()).unwrap_or(0);
        let mut header = vec!["t".to_string()];
        for j in 1..=n {
            for c in ["e", "f", "k"] {
                header.push(format!("re_{c}{j}"));
                header.push(format!("im_{c}{j}"));
            }
        }
        w.write_record(&header)?;
        for (t, x) in self.times.iter().zip(&self.states) {
            let mut row = vec![format!("{t:.17e}")];
            for c in x.coords() {
                row.push(format!("{:.17e}", c.re));
                row.push(format!("{:.17e}", c.im));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phasespace::{jacobian, sample_leaf, Casimirs};

    fn setup(n: usize) -> (ModelParams, PhasePoint<C64>) {
        let a: Vec<C64> = (0..n).map(|j| C64::new(1.0 + 0.1 * j as f64, 0.05)).collect();
        let params = ModelParams::new(C64::new(1.3, 0.2), a, crate::phasespace::OrderingMode::Reversed).unwrap();
        let leaf: Vec<C64> = (0..n).map(|j| C64::new(2.5 + 0.3 * j as f64, 0.1)).collect();
        (params, sample_leaf(&leaf, 7))
    }

    #[test]
    fn field_is_tangent_to_leaf() {
        let (params, x) = setup(2);
        let (_, jc) = jacobian(&Casimirs, &x).unwrap();
        for k in 0..=2 {
            let v = vector_field(&x, k, &params).unwrap();
            let v = nalgebra::DVector::from_vec(v);
            let dw = &jc * v;
            assert!(dw.amax_norm() < 1e-10, "k={k}: {}", dw.amax_norm());
        }
    }

    trait AmaxNorm {
        fn amax_norm(&self) -> f64;
    }
    impl AmaxNorm for nalgebra::DVector<C64> {
        fn amax_norm(&self) -> f64 {
            self.iter().map(|c| c.norm()).fold(0.0, f64::max)
        }
    }

    #[test]
    fn trivial_point_has_no_e_f_motion() {
        let params = ModelParams::homogeneous(1, C64::new(1.4, 0.0));
        let x = PhasePoint::from_coords(&[C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(1.2, 0.3)]);
        for k in 0..=1 {
            let v = vector_field(&x, k, &params).unwrap();
            assert!(v[0].norm() < 1e-14 && v[1].norm() < 1e-14);
        }
    }

    #[test]
    fn field_matches_integrator_difference() {
        let (params, x) = setup(2);
        let flow = Flow::new(&params, 1, 1e-12).unwrap();
        let v = vector_field(&x, 1, &params).unwrap();
        let central = |h: f64| -> Vec<C64> {
            let (xp, _) = flow.advance(&x, 0.0, h).unwrap();
            let (xm, _) = flow.advance(&x, 0.0, -h).unwrap();
            xp.coords().iter().zip(xm.coords()).map(|(p, m)| (p - m) / (2.0 * h)).collect()
        };
        // The central difference is O(h²); Richardson removes that term.
        let (d1, d2) = (central(2e-4), central(1e-4));
        for ((a, b), v) in d1.iter().zip(&d2).zip(v) {
            let fd = (4.0 * b - a) / 3.0;
            assert!((fd - v).norm() < 1e-6 * (1.0 + v.norm()), "{fd} vs {v}");
            assert!((b - v).norm() > (fd - v).norm() * 0.5);
        }
    }

    #[test]
    fn conservation_and_time_reversal() {
        let (params, x) = setup(2);
        let tol = 1e-10;
        let traj = integrate_flow(&x, &params, 2, &uniform_times(1.0, 10), tol).unwrap();
        let rep = conservation_report(&traj, &params).unwrap();
        assert!(rep.max() < 1e2 * tol, "{rep:?}");
        let flow = Flow::new(&params, 2, tol).unwrap();
        let (back, _) = flow.advance(traj.states.last().unwrap(), 1.0, 0.0).unwrap();
        for (a, b) in back.coords().iter().zip(x.coords()) {
            assert!((a - b).norm() < 10.0 * tol * (1.0 + b.norm()));
        }
    }

    #[test]
    fn rejects_bad_input() {
        let (params, x) = setup(1);
        assert!(Flow::new(&params, 0, 0.0).is_err());
        assert!(integrate_flow(&x, &params, 5, &[0.0, 1.0], 1e-8).is_err());
        assert!(integrate_flow(&x, &params, 0, &[0.0, 0.0], 1e-8).is_err());
    }
}
