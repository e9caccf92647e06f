//! Adaptive Gauss–Kronrod and periodic trapezoidal quadrature for
//! vector-valued complex integrands.

use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::C64;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
// Gauss weights at XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { abs_tol: 1e-13, rel_tol: 1e-10, max_intervals: 4000 }
    }
}

fn vnorm(v: &[C64]) -> f64 {
    v.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

fn gk15<F>(f: &mut F, a: f64, b: f64) -> Result<(Vec<C64>, f64)>
where
    F: FnMut(f64) -> Result<Vec<C64>>,
{
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c)?;
    let m = fc.len();
    let mut kron: Vec<C64> = fc.iter().map(|v| v * WGK[7]).collect();
    let mut gauss: Vec<C64> = fc.iter().map(|v| v * WG[3]).collect();
    for i in 0..7 {
        let f1 = f(c - h * XGK[i])?;
        let f2 = f(c + h * XGK[i])?;
        for k in 0..m {
            let s = f1[k] + f2[k];
            kron[k] += s * WGK[i];
            if i % 2 == 1 {
                gauss[k] += s * WG[i / 2];
            }
        }
    }
    let mut err: f64 = 0.0;
    for k in 0..m {
        kron[k] *= h;
        gauss[k] *= h;
        err = err.max((kron[k] - gauss[k]).norm());
    }
    Ok((kron, err))
}

struct Piece {
    a: f64,
    b: f64,
    val: Vec<C64>,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&o.err)
    }
}

/// `∫_a^b f(s) ds` by globally adaptive G7K15 bisection.
pub fn integrate<F>(mut f: F, a: f64, b: f64, opts: &QuadOptions) -> Result<Vec<C64>>
where
    F: FnMut(f64) -> Result<Vec<C64>>,
{
    let (val, err) = gk15(&mut f, a, b)?;
    let mut total = val.clone();
    let mut total_err = err;
    // Narrow pieces whose estimate is small against their own value sit at the
    // rounding floor and are retired; pieces still resolving a singularity are not.
    let min_width = 1e-9 * (b - a).abs();
    let mut retired_err = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, val, err });
    loop {
        let target = opts.abs_tol.max(opts.rel_tol * vnorm(&total));
        if total_err <= target {
            return Ok(total);
        }
        if heap.is_empty() || total_err - retired_err <= target {
            if retired_err <= 1e3 * target {
                return Ok(total);
            }
            return Err(Error::Quadrature(format!("error {retired_err:.3e} at the rounding floor above {target:.3e}")));
        }
        if !total_err.is_finite() {
            return Err(Error::Quadrature("non-finite integrand".into()));
        }
        if heap.len() >= opts.max_intervals {
            return Err(Error::Quadrature(format!("error estimate {total_err:.3e} above {target:.3e} after {} intervals", heap.len())));
        }
        let worst = heap.pop().unwrap();
        if (worst.b - worst.a).abs() < min_width && worst.err <= 1e-3 * vnorm(&worst.val) {
            retired_err += worst.err;
            continue;
        }
        let mid = 0.5 * (worst.a + worst.b);
        let (v1, e1) = gk15(&mut f, worst.a, mid)?;
        let (v2, e2) = gk15(&mut f, mid, worst.b)?;
        for k in 0..total.len() {
            total[k] += v1[k] + v2[k] - worst.val[k];
        }
        total_err += e1 + e2 - worst.err;
        heap.push(Piece { a: worst.a, b: mid, val: v1, err: e1 });
        heap.push(Piece { a: mid, b: worst.b, val: v2, err: e2 });
        // Guard against drift in the running error sum.
        if heap.len() % 64 == 0 {
            total_err = retired_err + heap.iter().map(|p| p.err).sum::<f64>();
        }
    }
}

/// `∫_0^{2π} f(θ) dθ` for smooth periodic `f` by the trapezoidal rule,
/// doubling the node count until successive values agree.
pub fn integrate_periodic<F>(mut f: F, abs_tol: f64, rel_tol: f64, max_nodes: usize) -> Result<Vec<C64>>
where
    F: FnMut(f64) -> Result<Vec<C64>>,
{
    let tau = std::f64::consts::TAU;
    let mut n = 32usize;
    let mut sum = vec![];
    for i in 0..n {
        let v = f(tau * i as f64 / n as f64)?;
        if sum.is_empty() {
            sum = vec![C64::new(0.0, 0.0); v.len()];
        }
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
    }
    let mut prev: Vec<C64> = sum.iter().map(|s| s * (tau / n as f64)).collect();
    while 2 * n <= max_nodes {
        for i in 0..n {
            let v = f(tau * (i as f64 + 0.5) / n as f64)?;
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
        }
        n *= 2;
        let cur: Vec<C64> = sum.iter().map(|s| s * (tau / n as f64)).collect();
        let diff = cur.iter().zip(&prev).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        if diff <= abs_tol.max(rel_tol * vnorm(&cur)) {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::Quadrature(format!("periodic rule not converged with {n} nodes")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let v = integrate(|s| Ok(vec![C64::new(s.powi(5), s * s)]), 0.0, 2.0, &QuadOptions::default()).unwrap();
        assert!((v[0] - C64::new(64.0 / 6.0, 8.0 / 3.0)).norm() < 1e-13);
    }

    #[test]
    fn endpoint_singularity_converges() {
        // ∫_0^1 s^{-1/2} ds = 2
        let v = integrate(
            |s| Ok(vec![C64::new(1.0 / s.sqrt(), 0.0)]),
            0.0,
            1.0,
            &QuadOptions { abs_tol: 1e-10, rel_tol: 1e-10, max_intervals: 4000 },
        )
        .unwrap();
        assert!((v[0].re - 2.0).abs() < 1e-8, "{}", v[0].re - 2.0);
    }

    #[test]
    fn periodic_rule_spectral() {
        // ∫ e^{cos θ} dθ = 2π I_0(1)
        let v = integrate_periodic(|t| Ok(vec![C64::new(t.cos().exp(), 0.0)]), 1e-15, 1e-15, 1 << 12).unwrap();
        assert!((v[0].re - std::f64::consts::TAU * 1.2660658777520082).abs() < 1e-13);
    }
}
