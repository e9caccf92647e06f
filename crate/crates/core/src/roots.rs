//! Roots of complex polynomials via the balanced companion matrix.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::laurent::LambdaPoly;
use crate::C64;

/// Parlett–Reinsch balancing with radix 2.
fn balance(m: &mut DMatrix<C64>) {
    let n = m.nrows();
    let mut converged = false;
    while !converged {
        converged = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += m[(j, i)].l1_norm();
                    r += m[(i, j)].l1_norm();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut cc = c;
            let rr = r;
            while cc < rr / 2.0 {
                f *= 2.0;
                cc *= 4.0;
            }
            while cc > rr * 2.0 {
                f /= 2.0;
                cc /= 4.0;
            }
            if (cc + rr) / f < 0.95 * s {
                converged = false;
                for j in 0..n {
                    m[(i, j)] /= f;
                    m[(j, i)] *= f;
                }
            }
        }
    }
}

fn newton_polish(p: &LambdaPoly<C64>, mut x: C64, steps: usize) -> C64 {
    let dp = p.derivative();
    for _ in 0..steps {
        let f = p.eval(x);
        let d = dp.eval(x);
        if d.norm() == 0.0 {
            break;
        }
        let next = x - f / d;
        if p.eval(next).norm() <= f.norm() {
            x = next;
        } else {
            break;
        }
    }
    x
}

/// All roots of `p`, sorted by (real, imaginary) part.
pub fn poly_roots(p: &LambdaPoly<C64>) -> Result<Vec<C64>> {
    let deg = p.degree().ok_or_else(|| Error::Degenerate("roots of the zero polynomial".into()))?;
    let c = p.coeffs();
    let lead = c[deg];
    let mut roots = match deg {
        0 => Vec::new(),
        1 => vec![-c[0] / c[1]],
        _ => {
            let mut m = DMatrix::<C64>::zeros(deg, deg);
            for i in 1..deg {
                m[(i, i - 1)] = C64::new(1.0, 0.0);
            }
            for i in 0..deg {
                m[(i, deg - 1)] = -c[i] / lead;
            }
            balance(&mut m);
            let ev = nalgebra::Schur::new(m)
                .eigenvalues()
                .ok_or_else(|| Error::LinearAlgebra("companion eigenvalues did not converge".into()))?;
            ev.iter().copied().collect()
        }
    };
    for r in roots.iter_mut() {
        *r = newton_polish(p, *r, 2);
    }
    roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(roots)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_prescribed_roots() {
        let r = [C64::new(1.0, 2.0), C64::new(-0.5, 0.1), C64::new(3.0, -1.0), C64::new(0.2, 0.0)];
        let mut p = LambdaPoly::constant(C64::new(2.5, -1.0));
        for x in r {
            p = &p * &LambdaPoly::new(vec![-x, C64::new(1.0, 0.0)]);
        }
        let found = poly_roots(&p).unwrap();
        let mut expected = r.to_vec();
        expected.sort_by(|a, b| a.re.total_cmp(&b.re));
        for (a, b) in found.iter().zip(&expected) {
            assert!((a - b).norm() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn badly_scaled_quadratic() {
        let p = LambdaPoly::new(vec![C64::new(1e-8, 0.0), C64::new(-1e4, 0.0), C64::new(1.0, 0.0)]);
        let r = poly_roots(&p).unwrap();
        assert!((r[0] - 1e-12).norm() < 1e-20);
        assert!((r[1] - 1e4).norm() < 1e-8);
    }
}
