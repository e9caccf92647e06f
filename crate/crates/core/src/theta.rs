//! Riemann theta function, odd characteristic, Riemann constant and the
//! theta-function solution of the flows.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::curve::{
    a_cycle_integral, abel_infinities, b_cycle_integral, reduce_mod_lattice, AbelPoints, HomologyBasis, PeriodData, SpectralCurve,
};
use crate::error::{Error, Result};
use crate::laurent::LambdaPoly;
use crate::monodromy::ReflectionData;
use crate::quadrature::QuadOptions;
use crate::C64;

const I: C64 = C64::new(0.0, 1.0);

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sub(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn add(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn scaled(a: &[C64], s: f64) -> Vec<C64> {
    a.iter().map(|x| x * s).collect()
}

/// `θ(z)` and `∇θ(z)`.
#[derive(Debug, Clone)]
pub struct ThetaValue {
    pub value: C64,
    pub grad: Vec<C64>,
}

/// Lattice sum `Σ_m exp(2πi(m,z) + πi(𝓑m,m))` evaluated after reducing `z`
/// into the fundamental domain and restoring the automorphy factor.
#[derive(Debug, Clone)]
pub struct Theta {
    pub big_b: DMatrix<C64>,
    im_b: DMatrix<f64>,
}

impl Theta {
    pub fn new(big_b: DMatrix<C64>) -> Result<Self> {
        let g = big_b.nrows();
        let im_b = DMatrix::from_fn(g, g, |i, j| 0.5 * (big_b[(i, j)].im + big_b[(j, i)].im));
        if g > 0 && im_b.clone().symmetric_eigenvalues().min() <= 0.0 {
            return Err(Error::Domain("Im B is not positive definite".into()));
        }
        Ok(Theta { big_b, im_b })
    }

    pub fn g(&self) -> usize {
        self.big_b.nrows()
    }

    fn bm(&self, m: &[f64]) -> Vec<C64> {
        let g = self.g();
        (0..g).map(|i| (0..g).map(|j| self.big_b[(i, j)] * m[j]).sum()).collect()
    }

    /// Lattice sum for `z` near the fundamental domain, over shells until
    /// negligible or, with `fixed`, over `‖m‖∞ ≤ fixed`.
    fn raw(&self, z: &[C64], fixed: Option<i64>) -> ThetaValue {
        let g = self.g();
        let mut value = c(0.0);
        let mut grad = vec![c(0.0); g];
        let mut r: i64 = 0;
        loop {
            let mut shell = c(0.0);
            let mut shell_grad = vec![c(0.0); g];
            let mut m = vec![-r; g];
            loop {
                if m.iter().any(|x| x.abs() == r) {
                    let mf: Vec<f64> = m.iter().map(|x| *x as f64).collect();
                    let mut ph = c(0.0);
                    for i in 0..g {
                        ph += z[i] * (TAU * mf[i]);
                        for j in 0..g {
                            ph += self.big_b[(i, j)] * (PI * mf[i] * mf[j]);
                        }
                    }
                    let term = (I * ph).exp();
                    shell += term;
                    for i in 0..g {
                        shell_grad[i] += term * I * (TAU * mf[i]);
                    }
                }
                // odometer over [-r, r]^g
                let mut k = 0;
                while k < g {
                    m[k] += 1;
                    if m[k] <= r {
                        break;
                    }
                    m[k] = -r;
                    k += 1;
                }
                if k == g || g == 0 {
                    break;
                }
            }
            value += shell;
            for i in 0..g {
                grad[i] += shell_grad[i];
            }
            let small = shell.norm() <= 1e-16 * value.norm().max(1e-300);
            let done = match fixed {
                Some(f) => r >= f,
                None => (r >= 2 && small) || r > 60,
            };
            if g == 0 || done {
                break;
            }
            r += 1;
        }
        ThetaValue { value, grad }
    }

    /// `θ(z)` with gradient.
    pub fn eval(&self, z: &[C64]) -> ThetaValue {
        self.eval_with(z, None)
    }

    /// `θ(z)` summed over `‖m‖∞ ≤ radius` after reduction.
    pub fn eval_radius(&self, z: &[C64], radius: usize) -> ThetaValue {
        self.eval_with(z, Some(radius as i64))
    }

    fn eval_with(&self, z: &[C64], fixed: Option<i64>) -> ThetaValue {
        let g = self.g();
        if g == 0 {
            return ThetaValue { value: c(1.0), grad: vec![] };
        }
        let im_z = DVector::from_iterator(g, z.iter().map(|x| x.im));
        let m: Vec<f64> = self.im_b.clone().lu().solve(&im_z).map(|v| v.iter().map(|x| x.round()).collect()).unwrap_or(vec![0.0; g]);
        let bm = self.bm(&m);
        let shifted = sub(z, &bm);
        let n: Vec<f64> = shifted.iter().map(|x| x.re.round()).collect();
        let red: Vec<C64> = shifted.iter().zip(&n).map(|(x, k)| x - k).collect();
        let inner = self.raw(&red, fixed);
        // θ(r + 𝓑m + n) = exp(−2πi(m, r) − πi(𝓑m, m))θ(r)
        let mc: Vec<C64> = m.iter().map(|x| c(*x)).collect();
        let factor = (-I * TAU * dot(&mc, &red) - I * PI * dot(&bm, &mc)).exp();
        let grad = (0..g).map(|i| factor * (inner.grad[i] - I * TAU * m[i] * inner.value)).collect();
        ThetaValue { value: factor * inner.value, grad }
    }

    pub fn value(&self, z: &[C64]) -> C64 {
        self.eval(z).value
    }

    /// `θ[δ′, δ″](z) = exp(πi(δ′,𝓑δ′) + 2πi(δ′, z + δ″))θ(z + 𝓑δ′ + δ″)`.
    pub fn characteristic(&self, z: &[C64], d1: &[f64], d2: &[f64]) -> C64 {
        let bd = self.bm(d1);
        let d1c: Vec<C64> = d1.iter().map(|x| c(*x)).collect();
        let d2c: Vec<C64> = d2.iter().map(|x| c(*x)).collect();
        let arg = add(&add(z, &bd), &d2c);
        let pre = (I * PI * dot(&d1c, &bd) + I * TAU * dot(&d1c, &add(z, &d2c))).exp();
        pre * self.value(&arg)
    }

    /// `max |θ(z + n) − θ(z)|` and `max |θ(z + 𝓑n) − e(z, n)θ(z)|`, relative.
    pub fn automorphy_residual(&self, z: &[C64], n: &[f64]) -> f64 {
        let g = self.g();
        let base = self.value(z);
        let nc: Vec<C64> = n.iter().map(|x| c(*x)).collect();
        let t1 = self.value(&add(z, &nc));
        let bn = self.bm(n);
        let t2 = self.value(&add(z, &bn));
        let expect = (-I * TAU * dot(&nc, z) - I * PI * dot(&bn, &nc)).exp() * base;
        let _ = g;
        let s1 = (t1 - base).norm() / base.norm().max(1e-300);
        let s2 = (t2 - expect).norm() / t2.norm().max(expect.norm()).max(1e-300);
        s1.max(s2)
    }
}

/// Half-period `𝓑δ′ + δ″`.
#[derive(Debug, Clone, Serialize)]
pub struct HalfPeriod {
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub point: Vec<C64>,
}

pub fn half_periods(theta: &Theta) -> Vec<HalfPeriod> {
    let g = theta.g();
    let mut out = Vec::with_capacity(1 << (2 * g));
    for a in 0..(1usize << g) {
        for b in 0..(1usize << g) {
            // lexicographic with the first entry most significant
            let d1: Vec<f64> = (0..g).map(|i| if a >> (g - 1 - i) & 1 == 1 { 0.5 } else { 0.0 }).collect();
            let d2: Vec<f64> = (0..g).map(|i| if b >> (g - 1 - i) & 1 == 1 { 0.5 } else { 0.0 }).collect();
            let bd = theta.bm(&d1);
            let point = bd.iter().zip(&d2).map(|(x, y)| x + y).collect();
            out.push(HalfPeriod { d1, d2, point });
        }
    }
    out
}

/// First odd half-period `e` with `θ(e) = 0` and `∇θ(e) ≠ 0`.
pub fn odd_point(theta: &Theta) -> Result<HalfPeriod> {
    let g = theta.g();
    let scale = theta.value(&vec![c(0.0); g]).norm();
    for hp in half_periods(theta) {
        let par: f64 = hp.d1.iter().zip(&hp.d2).map(|(a, b)| 4.0 * a * b).sum();
        if (par.round() as i64) % 2 != 1 {
            continue;
        }
        let tv = theta.eval(&hp.point);
        let gn = tv.grad.iter().map(|x| x.norm()).fold(0.0, f64::max);
        if tv.value.norm() < 1e-8 * scale && gn > 1e-4 {
            return Ok(hp);
        }
    }
    Err(Error::Theta("every odd characteristic is singular".into()))
}

/// Abel images with the same base and paths, shared by the theta formulas.
#[derive(Debug, Clone, Serialize)]
pub struct ThetaContext {
    pub g: usize,
    #[serde(skip)]
    pub theta: Theta,
    pub e: HalfPeriod,
    pub k: Vec<C64>,
    pub infinities: AbelPoints,
    /// `𝒜(q⁺)`, `q⁺ = (−2, h(−2))`.
    pub a_q_plus: Vec<C64>,
    /// `𝒜(∞₋) − 𝒜(q⁺)`.
    pub w: Vec<C64>,
    /// `∮_{B_j}Ω_{∞₋,q⁺}` before division by `2πi`.
    pub w_raw: Vec<C64>,
    /// `max |∮_{A_i}Ω_{∞₋,q⁺}|`.
    pub w_a_residual: f64,
    /// Distance of `w_raw/(2πi)` from `w` modulo the lattice.
    pub w_reciprocity: f64,
    pub k_validation: KValidation,
}

#[derive(Debug, Clone, Serialize)]
pub struct KValidation {
    /// Largest `|θ(𝒜q − 𝒜𝒟′ − K)|/scale` over `q ∈ 𝒟′`.
    pub on_divisor: f64,
    /// Smallest value of the same quantity at probe points off `𝒟′`.
    pub off_divisor: f64,
}

/// Deterministic auxiliary points on sheet 1.
fn aux_points(curve: &SpectralCurve, count: usize, phase: f64) -> Vec<(C64, C64)> {
    let center: C64 = curve.branch_points.iter().sum::<C64>() / curve.branch_points.len() as f64;
    (0..count)
        .map(|i| {
            let ang = phase + 2.399963 * i as f64;
            let l = center + C64::from_polar(0.37 * curve.scale * (1.0 + 0.21 * i as f64), ang);
            (l, curve.yplus(l))
        })
        .collect()
}

fn abel_point(curve: &SpectralCurve, pd: &PeriodData, l: C64, y: C64, opts: &QuadOptions) -> Result<Vec<C64>> {
    Ok(pd.normalize(&curve.abel_from_base(l, y, opts)?))
}

/// Newton solve of `θ(𝒜(p_i) − 𝒜(𝒟) − K) = 0`, `i = 1..g`, from `seed`.
fn newton_k(theta: &Theta, u: &[Vec<C64>], seed: &[C64]) -> Option<Vec<C64>> {
    let g = theta.g();
    let mut k = seed.to_vec();
    let scale = u.iter().map(|ui| theta.value(&sub(ui, seed)).norm()).fold(1e-300, f64::max).max(theta.value(&vec![c(0.0); g]).norm());
    for _ in 0..40 {
        let mut f = DVector::<C64>::zeros(g);
        let mut j = DMatrix::<C64>::zeros(g, g);
        for i in 0..g {
            let tv = theta.eval(&sub(&u[i], &k));
            f[i] = tv.value;
            for m in 0..g {
                j[(i, m)] = -tv.grad[m];
            }
        }
        if f.iter().map(|x| x.norm()).fold(0.0, f64::max) < 1e-13 * scale {
            return Some(k);
        }
        let step = j.lu().solve(&f)?;
        for m in 0..g {
            k[m] -= step[m];
        }
        if k.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
            return None;
        }
    }
    None
}

fn sum_all(v: &[Vec<C64>], g: usize) -> Vec<C64> {
    v.iter().fold(vec![c(0.0); g], |acc, x| add(&acc, x))
}

/// Acceptance bound for `θ` on the second divisor, relative to the probe scale.
pub const K_ON_DIVISOR: f64 = 1e-7;
/// Smallest probe value relative to the largest; below this `θ` is taken to vanish identically.
pub const K_OFF_DIVISOR: f64 = 1e-4;

/// `K` from the normalized images `u` of a divisor's points, validated on a
/// second divisor `u2` and off-divisor probes.
pub fn riemann_constant(theta: &Theta, u: &[Vec<C64>], u2: &[Vec<C64>], probes: &[Vec<C64>]) -> Result<(Vec<C64>, KValidation)> {
    let g = theta.g();
    let ad = sum_all(u, g);
    let ui: Vec<Vec<C64>> = u.iter().map(|x| sub(x, &ad)).collect();
    let ad2 = sum_all(u2, g);
    let mut newton_ok = false;
    let mut last = None;
    for hp in half_periods(theta) {
        let Some(k) = newton_k(theta, &ui, &hp.point) else { continue };
        newton_ok = true;
        let on: Vec<f64> = u2.iter().map(|x| theta.value(&sub(&sub(x, &ad2), &k)).norm()).collect();
        let off: Vec<f64> = probes.iter().map(|x| theta.value(&sub(&sub(x, &ad2), &k)).norm()).collect();
        let scale = off.iter().cloned().fold(1e-300, f64::max);
        let val = KValidation {
            on_divisor: on.iter().cloned().fold(0.0, f64::max) / scale,
            off_divisor: off.iter().cloned().fold(f64::INFINITY, f64::min) / scale,
        };
        if val.on_divisor < K_ON_DIVISOR && val.off_divisor > K_OFF_DIVISOR {
            return Ok((reduce_mod_lattice(&k, &theta.big_b), val));
        }
        last = Some(val);
    }
    if !newton_ok {
        return Err(Error::Theta("Riemann constant: Newton failed from every half-period seed".into()));
    }
    Err(Error::Theta(format!("Riemann constant failed validation (special divisor?): {last:?}")))
}

impl ThetaContext {
    pub fn build(
        curve: &SpectralCurve,
        basis: &HomologyBasis,
        pd: &PeriodData,
        divisor: &[(C64, C64)],
        opts: &QuadOptions,
    ) -> Result<Self> {
        let g = pd.g();
        if g == 0 {
            return Err(Error::Theta("genus 0 has no theta function".into()));
        }
        let theta = Theta::new(pd.big_b_matrix())?;
        let e = odd_point(&theta)?;
        let infinities = abel_infinities(curve, pd, opts)?;
        let h = curve.h.as_ref().ok_or_else(|| Error::Theta("curve carries no h(λ)".into()))?;
        let hq = h.eval(c(-2.0));
        let a_q_plus = abel_point(curve, pd, c(-2.0), hq, opts)?;
        let w = sub(&infinities.inf_minus, &a_q_plus);
        let (w_raw, w_a_residual) = third_kind_periods(curve, basis, pd, hq, opts)?;
        let recip: Vec<C64> = w_raw.iter().map(|x| x / (TAU * I)).collect();
        let w_reciprocity = pd.lattice_distance(&sub(&recip, &w));

        let u: Vec<Vec<C64>> = divisor.iter().map(|(l, y)| abel_point(curve, pd, *l, *y, opts)).collect::<Result<_>>()?;
        let second = aux_points(curve, g, 0.3);
        let probes = aux_points(curve, 5, 1.7);
        let u2: Vec<Vec<C64>> = second.iter().map(|(l, y)| abel_point(curve, pd, *l, *y, opts)).collect::<Result<_>>()?;
        let up: Vec<Vec<C64>> = probes.iter().map(|(l, y)| abel_point(curve, pd, *l, *y, opts)).collect::<Result<_>>()?;

        let (k, k_validation) = riemann_constant(&theta, &u, &u2, &up)?;
        Ok(ThetaContext { g, theta, e, k, infinities, a_q_plus, w, w_raw, w_a_residual, w_reciprocity, k_validation })
    }

    fn th(&self, z: &[C64]) -> C64 {
        self.theta.value(z)
    }

    fn th_e(&self, z: &[C64]) -> C64 {
        self.theta.value(&add(z, &self.e.point))
    }

    /// `Q(t) = Q(0)e^{ct}·θ(𝒜∞₊−𝒜𝒟−tU−K)θ(𝒜∞₋−𝒜𝒟−K)/(θ(𝒜∞₋−𝒜𝒟−tU−K)θ(𝒜∞₊−𝒜𝒟−K))`.
    pub fn q_evolution(&self, q0: C64, ad0: &[C64], u: &[C64], c_k: C64, t: f64) -> Result<C64> {
        let shift = add(ad0, &add(&scaled(u, t), &self.k));
        let shift0 = add(ad0, &self.k);
        let num = self.th(&sub(&self.infinities.inf_plus, &shift)) * self.th(&sub(&self.infinities.inf_minus, &shift0));
        let den = self.th(&sub(&self.infinities.inf_minus, &shift)) * self.th(&sub(&self.infinities.inf_plus, &shift0));
        if den.norm() < 1e-14 * num.norm().max(1e-300) || den.norm() == 0.0 {
            return Err(Error::Theta(format!("theta denominator vanishes at t = {t}")));
        }
        Ok(q0 * (c_k * t).exp() * num / den)
    }

    /// `m(p) = ∏_j θ_e(𝒜p − 𝒜p_j)/θ_e(𝒜p − 𝒜q_j) · θ(𝒜p − 𝒜𝒟′ − K)/θ(𝒜p − 𝒜𝒟 − K)`,
    /// constant in `p`.
    pub fn m_function(&self, ap: &[C64], d: &[Vec<C64>], d_prime: &[Vec<C64>]) -> C64 {
        let ad = sum_all(d, self.g);
        let adp = sum_all(d_prime, self.g);
        let mut out = self.th(&sub(&sub(ap, &adp), &self.k)) / self.th(&sub(&sub(ap, &ad), &self.k));
        for (p, q) in d.iter().zip(d_prime) {
            out *= self.th_e(&sub(ap, p)) / self.th_e(&sub(ap, q));
        }
        out
    }

    /// Product form of `Q(t)` from the continued images of the divisor points
    /// at time 0 and at time `t`.
    pub fn q_product(&self, q0: C64, c_k: C64, t: f64, p0: &[Vec<C64>], pt: &[Vec<C64>]) -> C64 {
        let (ip, im) = (&self.infinities.inf_plus, &self.infinities.inf_minus);
        let mut out = q0 * (c_k * t).exp();
        for (a, b) in p0.iter().zip(pt) {
            out *= self.th_e(&sub(ip, b)) * self.th_e(&sub(im, a)) / (self.th_e(&sub(ip, a)) * self.th_e(&sub(im, b)));
        }
        out
    }

    fn rho_f(&self, ap: &[C64], ad: &[C64]) -> C64 {
        let base = sub(&sub(ap, ad), &self.k);
        self.th_e(&sub(ap, &self.infinities.inf_minus)) * self.th(&add(&base, &self.w))
            / (self.th_e(&sub(ap, &self.a_q_plus)) * self.th(&base))
    }

    /// Theta form of `ρ` at a point with normalized Abel image `ap`, for the
    /// divisor image `ad`.
    pub fn rho(&self, ap: &[C64], ad: &[C64]) -> C64 {
        self.rho_f(ap, ad) / self.rho_f(&self.infinities.inf_plus, ad)
    }
}

/// Periods of `Ω_{∞₋,q⁺} = −½dλ/(λ+2) + p(λ)dλ/(y(λ+2)) + Σc_jΩ_j`,
/// `p = (s₀/2)λ^N + γ`, `p(−2) = −h(−2)/2`, with the `c_j` fixed by vanishing
/// A-periods. The even term integrates to zero on every cycle used.
fn third_kind_periods(
    curve: &SpectralCurve,
    basis: &HomologyBasis,
    pd: &PeriodData,
    h_minus2: C64,
    opts: &QuadOptions,
) -> Result<(Vec<C64>, f64)> {
    let g = pd.g();
    let n = curve.n;
    let s0 = curve.s0;
    let gamma = -h_minus2 * 0.5 - s0 * 0.5 * (-2.0f64).powi(n as i32);
    let mut pc = vec![c(0.0); n + 1];
    pc[0] = gamma;
    pc[n] = s0 * 0.5;
    let p = LambdaPoly::new(pc);
    let odd = |l: C64, y: C64| vec![p.eval(l) / (y * (l + 2.0))];
    let mut a_odd = Vec::with_capacity(g);
    let mut b_odd = Vec::with_capacity(g);
    for i in 0..g {
        a_odd.push(a_cycle_integral(curve, &basis.a_cycles[i], odd, opts)?[0]);
        b_odd.push(b_cycle_integral(curve, &basis.b_chains[i], odd, opts)?[0]);
    }
    // Σ_j c_j ∮_{A_i}Ω_j = −∮_{A_i}(odd part)
    let a = DMatrix::from_fn(g, g, |i, j| pd.a_periods[i][j]);
    let rhs = DVector::from_iterator(g, a_odd.iter().map(|x| -x));
    let cj = a.lu().solve(&rhs).ok_or_else(|| Error::LinearAlgebra("holomorphic A-periods singular".into()))?;
    let mut w_raw = Vec::with_capacity(g);
    let mut a_res: f64 = 0.0;
    for i in 0..g {
        let corr: C64 = (0..g).map(|j| cj[j] * pd.b_periods[i][j]).sum();
        w_raw.push(b_odd[i] + corr);
        let acorr: C64 = (0..g).map(|j| cj[j] * pd.a_periods[i][j]).sum();
        a_res = a_res.max((a_odd[i] + acorr).norm());
    }
    Ok((w_raw, a_res))
}

/// `ρ = (y + h(λ))/((P + P⁻¹)(λ + 2)∏(λ − λ_k))` from monodromy data.
pub fn rho_rational(data: &ReflectionData<C64>, l: C64, y: C64) -> Result<C64> {
    let h = data.h_poly()?.eval(l);
    let s = data.big_p + data.big_p.inv();
    let ct = data.c_tilde.eval(l);
    Ok(data.big_q * (y + h) / (s * (l + 2.0) * ct))
}

/// `ρ` read literally as `Q(z + z⁻¹)(y + h)/((P + P⁻¹)C(z))`.
pub fn rho_printed(data: &ReflectionData<C64>, z: C64, y: C64) -> Result<C64> {
    let l = z * z + (z * z).inv();
    let h = data.h_poly()?.eval(l);
    let s = data.big_p + data.big_p.inv();
    Ok(data.big_q * (z + z.inv()) * (y + h) / (s * data.c(z)?))
}

/// `h²(−2)` against `Q_{2N}(−2)` and three closed forms:
/// `((ξ−ξ⁻¹)/4)∏(…)²`, `((ξ−ξ⁻¹)/4)²∏(…)²` and `((ξ+ξ⁻¹)/2)²∏(…)²`.
#[derive(Debug, Clone, Serialize)]
pub struct HMinus2Report {
    pub h_squared: C64,
    pub q2n_at_minus2: C64,
    pub printed_residual: f64,
    pub squared_residual: f64,
    pub plus_residual: f64,
    pub verdict: String,
}

pub fn h_minus2_report(data: &ReflectionData<C64>, omegas: &[C64], xi: C64, a: &[C64]) -> Result<HMinus2Report> {
    let h = data.h_poly()?.eval(c(-2.0));
    let q = data.spectral_polynomial()?.eval(c(-2.0));
    let prod: C64 = omegas.iter().zip(a).map(|(w, ak)| (w + ak * ak + (ak * ak).inv()).powi(2)).product();
    let hs = h * h;
    let rel = |v: C64| (hs - v).norm() / hs.norm().max(1e-300);
    let m = (xi - xi.inv()) / 4.0;
    let p = (xi + xi.inv()) / 2.0;
    let printed_residual = rel(m * prod);
    let squared_residual = rel(m * m * prod);
    let plus_residual = rel(p * p * prod);
    let best = [("printed", printed_residual), ("(xi-1/xi)^2/16", squared_residual), ("((xi+1/xi)/2)^2", plus_residual)]
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    Ok(HMinus2Report {
        h_squared: hs,
        q2n_at_minus2: q,
        printed_residual,
        squared_residual,
        plus_residual,
        verdict: format!("{} fits (relative {:.2e})", best.0, best.1),
    })
}

/// The two points `p± = (λ(z), ±y)` over `z` with their normalized Abel
/// images; `y` is the principal root of `Q_{2N}(λ)`.
#[derive(Debug, Clone)]
pub struct FiberImages {
    pub z: C64,
    pub y: C64,
    pub plus: Vec<C64>,
    pub minus: Vec<C64>,
}

pub fn fiber_images(curve: &SpectralCurve, pd: &PeriodData, z: C64, opts: &QuadOptions) -> Result<FiberImages> {
    let l = z * z + (z * z).inv();
    let y = curve.q2n.eval(l).sqrt();
    if y.norm() < 1e-10 * curve.scale.powi(curve.n as i32) {
        return Err(Error::Theta("coincident eigenvalues (z over a branch point)".into()));
    }
    let plus = pd.normalize(&curve.abel_from_base(l, y, opts)?);
    let minus = pd.normalize(&curve.abel_from_base(l, -y, opts)?);
    Ok(FiberImages { z, y, plus, minus })
}

/// `𝒯(z)` rebuilt from its eigenvectors `(1, Q/((P+P⁻¹)(z+z⁻¹)ρ(p±)))` and
/// eigenvalues `t(z) ± y`.
pub fn reconstruct_monodromy(
    ctx: &ThetaContext,
    curve: &SpectralCurve,
    pd: &PeriodData,
    t_of_z: C64,
    q_t: C64,
    ad_t: &[C64],
    z: C64,
    opts: &QuadOptions,
) -> Result<[[C64; 2]; 2]> {
    let fiber = fiber_images(curve, pd, z, opts)?;
    reconstruct_from_fiber(ctx, curve, &fiber, t_of_z, q_t, ad_t)
}

/// Same as [`reconstruct_monodromy`] with the Abel images precomputed; they
/// do not depend on time.
pub fn reconstruct_from_fiber(
    ctx: &ThetaContext,
    curve: &SpectralCurve,
    fiber: &FiberImages,
    t_of_z: C64,
    q_t: C64,
    ad_t: &[C64],
) -> Result<[[C64; 2]; 2]> {
    let z = fiber.z;
    let s = curve.s();
    let mut cols = Vec::with_capacity(2);
    let mut evs = Vec::with_capacity(2);
    for (yy, ap) in [(fiber.y, &fiber.plus), (-fiber.y, &fiber.minus)] {
        let rho = ctx.rho(ap, ad_t);
        cols.push([c(1.0), q_t / (s * (z + z.inv()) * rho)]);
        evs.push(t_of_z + yy);
    }
    let v = [[cols[0][0], cols[1][0]], [cols[0][1], cols[1][1]]];
    let det = v[0][0] * v[1][1] - v[0][1] * v[1][0];
    if det.norm() == 0.0 || !det.is_finite() {
        return Err(Error::Theta("eigenvectors are parallel".into()));
    }
    let vinv = [[v[1][1] / det, -v[0][1] / det], [-v[1][0] / det, v[0][0] / det]];
    let mut out = [[c(0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = (0..2).map(|k| v[i][k] * evs[k] * vinv[k][j]).sum();
        }
    }
    Ok(out)
}
