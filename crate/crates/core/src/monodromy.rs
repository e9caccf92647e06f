//! Lax matrix, boundary matrix, reflection monodromy `𝒯(z) = 𝒩(z)/(z − z⁻¹)`,
//! transfer matrix, reflection Hamiltonians, r-matrix and Lax pairs.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::laurent::{LambdaPoly, LaurentMatrix, LaurentPoly, Mat2, Substitution};
use crate::phasespace::{ModelParams, Observable, OrderingMode, PhasePoint, SiteState};
use crate::scalar::Scalar;
use crate::C64;

const SYMMETRY_TOL: f64 = 1e-10;

fn cst<S: Scalar>(re: f64) -> S {
    S::constant(Complex64::new(re, 0.0))
}

/// `L(z) = [[zk − z⁻¹k⁻¹, e], [f, zk⁻¹ − z⁻¹k]]`.
pub fn lax_matrix<S: Scalar>(site: &SiteState<S>) -> Result<LaurentMatrix<S>> {
    if site.k.magnitude() == 0.0 {
        return Err(Error::InvalidState("site with k = 0".into()));
    }
    let k = site.k;
    let ki = k.recip();
    Ok(LaurentMatrix::new(
        LaurentPoly::from_coeffs(-1, vec![-ki, S::zero(), k]),
        LaurentPoly::constant(site.e),
        LaurentPoly::constant(site.f),
        LaurentPoly::from_coeffs(-1, vec![-k, S::zero(), ki]),
    ))
}

/// `K(z) = diag(ξz − z⁻¹ξ⁻¹, ξz⁻¹ − zξ⁻¹)`.
pub fn k_matrix<S: Scalar>(xi: S) -> Result<LaurentMatrix<S>> {
    if xi.magnitude() == 0.0 {
        return Err(Error::InvalidState("xi = 0".into()));
    }
    let xii = xi.recip();
    Ok(LaurentMatrix::new(
        LaurentPoly::from_coeffs(-1, vec![-xii, S::zero(), xi]),
        LaurentPoly::zero(),
        LaurentPoly::zero(),
        LaurentPoly::from_coeffs(-1, vec![xi, S::zero(), -xii]),
    ))
}

/// Reflection monodromy and the quantities derived from it.
#[derive(Debug, Clone)]
pub struct ReflectionData<S> {
    /// `𝒩(z)` with `𝒯(z) = 𝒩(z)/(z − z⁻¹)`.
    pub numerator: LaurentMatrix<S>,
    /// `P_0, …, P_N`.
    pub hamiltonians: Vec<S>,
    /// `P = ξ∏k_j²`.
    pub big_p: S,
    /// Leading coefficient of `C̃`.
    pub big_q: S,
    /// `C̃(λ) = C(z)/(z + z⁻¹)` as a polynomial in `λ`, degree `N − 1`.
    pub c_tilde: LambdaPoly<S>,
    /// `det 𝒩(z)`.
    pub det_numerator: LaurentPoly<S>,
}

fn z_minus_inv<S: Scalar>() -> LaurentPoly<S> {
    LaurentPoly::from_coeffs(-1, vec![-S::one(), S::zero(), S::one()])
}

fn z_plus_inv<S: Scalar>() -> LaurentPoly<S> {
    LaurentPoly::from_coeffs(-1, vec![S::one(), S::zero(), S::one()])
}

fn relative_gap<S: Scalar>(p: &LaurentPoly<S>, q: &LaurentPoly<S>, scale: f64) -> f64 {
    (p - q).norm() / scale.max(f64::MIN_POSITIVE)
}

fn check_identity(name: &str, residual: f64) -> Result<()> {
    if residual > SYMMETRY_TOL {
        return Err(Error::Construction { identity: name.to_string(), residual });
    }
    Ok(())
}

/// Builds `𝒩(z) = L_1(a_1z)⋯L_N(a_Nz)·K(z)·(second factor per ordering)`.
pub fn monodromy_numerator<S: Scalar>(x: &PhasePoint<S>, params: &ModelParams) -> Result<LaurentMatrix<S>> {
    params.validate()?;
    if x.n() != params.n {
        return Err(Error::InvalidState(format!("phase point has {} sites, model has {}", x.n(), params.n)));
    }
    let n = params.n;
    let laxes: Vec<LaurentMatrix<S>> = x.sites.iter().map(lax_matrix).collect::<Result<_>>()?;
    let mut m = LaurentMatrix::identity();
    for (l, a) in laxes.iter().zip(&params.a) {
        m = m.matmul(&l.substitute(Substitution::Scale(S::constant(*a))));
    }
    m = m.matmul(&k_matrix(S::constant(params.xi))?);
    for j in (0..n).rev() {
        let a = match params.ordering {
            OrderingMode::Reversed => params.a[j],
            OrderingMode::AsPrinted => params.a[n - 1 - j],
        };
        m = m.matmul(&laxes[j].substitute(Substitution::Scale(S::constant(1.0 / a))));
    }
    Ok(m)
}

fn hamiltonians_from_numerator<S: Scalar>(numerator: &LaurentMatrix<S>, n: usize) -> Result<Vec<S>> {
    let half_trace_quotient = numerator.trace().divide_exact(&z_plus_inv(), SYMMETRY_TOL)?;
    let mut hamiltonians = vec![half_trace_quotient.coeff(0)];
    for k in 1..=n {
        hamiltonians.push(cst::<S>(2.0) * half_trace_quotient.coeff(2 * k as i32));
    }
    Ok(hamiltonians)
}

/// `P_0, …, P_N` without the symmetry checks and derived data of
/// [`reflection_monodromy`]; used on the hot path of the flows.
pub fn hamiltonians_only<S: Scalar>(x: &PhasePoint<S>, params: &ModelParams) -> Result<Vec<S>> {
    hamiltonians_from_numerator(&monodromy_numerator(x, params)?, params.n)
}

pub fn reflection_monodromy<S: Scalar>(x: &PhasePoint<S>, params: &ModelParams) -> Result<ReflectionData<S>> {
    let numerator = monodromy_numerator(x, params)?;
    let scale = numerator.norm();

    // 𝒩(−z) = −σ₃𝒩(z)σ₃ and 𝒩(z⁻¹)ᵗ = σ₂𝒩(z)σ₂⁻¹, checked coefficientwise.
    let neg = numerator.substitute(Substitution::Negate);
    let inv = numerator.substitute(Substitution::Invert);
    check_identity("T(-z) = s3 T(z) s3^-1 (diagonal)", relative_gap(&neg.a, &(-&numerator.a), scale))?;
    check_identity("T(-z) = s3 T(z) s3^-1 (diagonal)", relative_gap(&neg.d, &(-&numerator.d), scale))?;
    check_identity("T(-z) = s3 T(z) s3^-1 (off-diagonal)", relative_gap(&neg.b, &numerator.b, scale))?;
    check_identity("T(-z) = s3 T(z) s3^-1 (off-diagonal)", relative_gap(&neg.c, &numerator.c, scale))?;
    check_identity("T(1/z)^t = -s2 T(z) s2^-1 (A <-> D)", relative_gap(&inv.a, &numerator.d, scale))?;
    check_identity("T(1/z)^t = -s2 T(z) s2^-1 (B)", relative_gap(&inv.b, &(-&numerator.b), scale))?;
    check_identity("T(1/z)^t = -s2 T(z) s2^-1 (C)", relative_gap(&inv.c, &(-&numerator.c), scale))?;

    let hamiltonians = hamiltonians_from_numerator(&numerator, params.n)?;

    let big_p = x.sites.iter().fold(S::constant(params.xi), |acc, s| acc * s.k * s.k);
    let z2_minus = LaurentPoly::from_coeffs(-2, vec![-S::one(), S::zero(), S::zero(), S::zero(), S::one()]);
    let c_tilde = numerator.c.divide_exact(&z2_minus, SYMMETRY_TOL)?.to_lambda(SYMMETRY_TOL)?;
    let big_q = c_tilde.coeffs().get(params.n - 1).copied().unwrap_or_else(S::zero);
    let det_numerator = numerator.det();

    Ok(ReflectionData { numerator, hamiltonians, big_p, big_q, c_tilde, det_numerator })
}

impl<S: Scalar> ReflectionData<S> {
    pub fn n(&self) -> usize {
        self.hamiltonians.len() - 1
    }

    fn denominator(z: S) -> Result<S> {
        let d = z - z.recip();
        if d.magnitude() == 0.0 {
            return Err(Error::Domain("T(z) has a pole at z = ±1".into()));
        }
        Ok(d)
    }

    pub fn t_matrix(&self, z: S) -> Result<Mat2<S>> {
        let d = Self::denominator(z)?;
        let m = self.numerator.eval(z)?;
        Ok([[m[0][0] / d, m[0][1] / d], [m[1][0] / d, m[1][1] / d]])
    }

    pub fn a(&self, z: S) -> Result<S> {
        Ok(self.numerator.a.eval(z)? / Self::denominator(z)?)
    }

    pub fn b(&self, z: S) -> Result<S> {
        Ok(self.numerator.b.eval(z)? / Self::denominator(z)?)
    }

    pub fn c(&self, z: S) -> Result<S> {
        Ok(self.numerator.c.eval(z)? / Self::denominator(z)?)
    }

    pub fn d(&self, z: S) -> Result<S> {
        Ok(self.numerator.d.eval(z)? / Self::denominator(z)?)
    }

    /// `t(z) = tr 𝒯(z)/2`.
    pub fn transfer(&self, z: S) -> Result<S> {
        let d = Self::denominator(z)?;
        Ok(self.numerator.trace().eval(z)? / (d + d))
    }

    pub fn det_t(&self, z: S) -> Result<S> {
        let d = Self::denominator(z)?;
        Ok(self.det_numerator.eval(z)? / (d * d))
    }

    /// `Q_{2N}(λ)` from `t(z)² − det 𝒯(z)`.
    pub fn spectral_polynomial(&self) -> Result<LambdaPoly<S>> {
        let tr = self.numerator.trace();
        let quarter = cst::<S>(0.25);
        let num = &(&tr * &tr).scale(quarter) - &self.det_numerator;
        let zm = z_minus_inv();
        num.divide_exact(&zm, SYMMETRY_TOL)?.divide_exact(&zm, SYMMETRY_TOL)?.to_lambda(SYMMETRY_TOL)
    }

    /// `h(λ) = (A(z) − D(z))/2` as a polynomial of degree `N` in `λ`.
    pub fn h_poly(&self) -> Result<LambdaPoly<S>> {
        let diff = (&self.numerator.a - &self.numerator.d).scale(cst::<S>(0.5));
        diff.divide_exact(&z_minus_inv(), SYMMETRY_TOL)?.to_lambda(SYMMETRY_TOL)
    }

    /// Lax pair `(Mσ_k(z), M⁺_k(z))` with `{𝒯, P_k} = [𝒯, Mσ_k] = [M⁺_k, 𝒯]`.
    ///
    /// `g(z) = 𝒩(z)z^{−2k}/(z + z⁻¹)` is expanded at `z = 0` (geometric
    /// series of `1/(1 + z²)`); its σ-part is assembled from the
    /// non-positive powers and `g⁺ = g − gσ`. Both carry the factor
    /// `−2^{2−δ_{k,0}}`.
    pub fn lax_pair(&self, k: usize, z: S) -> Result<(Mat2<S>, Mat2<S>)> {
        let zv = z.value();
        let z2 = zv * zv;
        if zv.norm() < 1e-12 || (z2 - 1.0).norm() < 1e-12 || (z2 + 1.0).norm() < 1e-12 {
            return Err(Error::Domain("Lax pair requested at z ∈ {0, ±1, ±i}".into()));
        }
        if k > self.n() {
            return Err(Error::Domain(format!("Hamiltonian index {k} exceeds N = {}", self.n())));
        }
        let pref = -cst::<S>(if k == 0 { 2.0 } else { 4.0 });
        let shift = 1 - 2 * k as i32;
        let zpow = z.powi(-2 * k as i32);
        let zsum = z + z.recip();
        let mut sigma = [[S::zero(); 2]; 2];
        let mut plus = [[S::zero(); 2]; 2];
        let entries = [[&self.numerator.a, &self.numerator.b], [&self.numerator.c, &self.numerator.d]];
        for r in 0..2 {
            for c in 0..2 {
                let p = entries[r][c];
                let gs = sigma_part_at_zero(p, shift);
                let g = p.eval(z)? * zpow / zsum;
                let gs_val = gs.eval(z)?;
                sigma[r][c] = pref * gs_val;
                plus[r][c] = pref * (g - gs_val);
            }
        }
        Ok((sigma, plus))
    }
}

/// σ-part of `p(z)·z^shift/(1 + z²)` expanded around `z = 0`.
fn sigma_part_at_zero<S: Scalar>(p: &LaurentPoly<S>, shift: i32) -> LaurentPoly<S> {
    if p.is_zero() {
        return LaurentPoly::zero();
    }
    // Coefficient of zⁿ in the expansion is Σ_{m≥0} (−1)^m p_{n − shift − 2m}.
    let low = p.low() + shift;
    if low > 0 {
        return LaurentPoly::zero();
    }
    let coeff = |n: i32| -> S {
        let mut acc = S::zero();
        let mut idx = n - shift;
        let mut sign = S::one();
        while idx >= p.low() {
            acc += sign * p.coeff(idx);
            sign = -sign;
            idx -= 2;
        }
        acc
    };
    let top = -low;
    let mut c = vec![S::zero(); (2 * top + 1) as usize];
    c[top as usize] = coeff(0);
    for n in 1..=top {
        let v = coeff(-n);
        c[(top + n) as usize] = v;
        c[(top - n) as usize] = v;
    }
    LaurentPoly::from_coeffs(-top, c)
}

/// Transfer coefficients extracted two ways: the coefficient formula on
/// `tr 𝒩/(z + z⁻¹)` and a linear solve against `(wʲ + w⁻ʲ)/2`.
pub fn transfer_coefficients(data: &ReflectionData<C64>) -> Result<Vec<C64>> {
    let n = data.n();
    let tr = data.numerator.trace();
    let mut mat = DMatrix::<C64>::zeros(n + 1, n + 1);
    let mut rhs = DVector::<C64>::zeros(n + 1);
    for m in 0..=n {
        let z = C64::from_polar(1.1, 0.35 + 2.6 * m as f64 / (n as f64 + 1.0));
        let w = z * z;
        rhs[m] = tr.eval(z)? / (z + 1.0 / z);
        for j in 0..=n {
            mat[(m, j)] = (w.powi(j as i32) + w.powi(-(j as i32))) / 2.0;
        }
    }
    let solved = mat.lu().solve(&rhs).ok_or_else(|| Error::LinearAlgebra("singular extraction basis".into()))?;
    let scale = data.hamiltonians.iter().map(|p| p.norm()).fold(1e-300, f64::max);
    let gap = data.hamiltonians.iter().zip(solved.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / scale;
    if gap > 1e-10 {
        return Err(Error::Extraction(gap));
    }
    Ok(data.hamiltonians.clone())
}

/// Classical trigonometric r-matrix `r(z₁/z₂)` (basis `e_i ⊗ e_j ↦ 2i + j`).
pub fn r_matrix(ratio: C64) -> Result<[[C64; 4]; 4]> {
    let r2 = ratio * ratio;
    if (r2 - 1.0).norm() < 1e-14 {
        return Err(Error::Domain("r-matrix pole at ratio² = 1".into()));
    }
    let den = 2.0 * (r2 - 1.0);
    let s = (r2 + 1.0) / den;
    let o = 4.0 * ratio / den;
    let z = C64::new(0.0, 0.0);
    Ok([[s, z, z, z], [z, -s, o, z], [z, o, -s, z], [z, z, z, s]])
}

/// Entries `(A, B, C, D)` of `𝒯` at fixed spectral parameters.
pub struct MonodromyEntries<'a> {
    pub params: &'a ModelParams,
    pub z: Vec<C64>,
}

impl Observable for MonodromyEntries<'_> {
    fn eval<S: Scalar>(&self, x: &PhasePoint<S>) -> Result<Vec<S>> {
        let data = reflection_monodromy(x, self.params)?;
        let mut out = Vec::with_capacity(4 * self.z.len());
        for z in &self.z {
            let t = data.t_matrix(S::constant(*z))?;
            out.extend([t[0][0], t[0][1], t[1][0], t[1][1]]);
        }
        Ok(out)
    }
}

/// `t(z)` at fixed spectral parameters.
pub struct Transfer<'a> {
    pub params: &'a ModelParams,
    pub z: Vec<C64>,
}

// Evaluated from the bare numerator, without the construction checks, so
// that the commutativity test can judge an invalid ordering.
impl Observable for Transfer<'_> {
    fn eval<S: Scalar>(&self, x: &PhasePoint<S>) -> Result<Vec<S>> {
        let tr = monodromy_numerator(x, self.params)?.trace();
        self.z
            .iter()
            .map(|z| {
                let z = S::constant(*z);
                let d = z - z.recip();
                Ok(tr.eval(z)? / (d + d))
            })
            .collect()
    }
}

/// `P_0, …, P_N`.
pub struct Hamiltonians<'a> {
    pub params: &'a ModelParams,
}

impl Observable for Hamiltonians<'_> {
    fn eval<S: Scalar>(&self, x: &PhasePoint<S>) -> Result<Vec<S>> {
        hamiltonians_only(x, self.params)
    }
}

/// A single Hamiltonian `P_k`.
pub struct Hamiltonian<'a> {
    pub params: &'a ModelParams,
    pub k: usize,
}

impl Observable for Hamiltonian<'_> {
    fn eval<S: Scalar>(&self, x: &PhasePoint<S>) -> Result<Vec<S>> {
        let h = hamiltonians_only(x, self.params)?;
        h.get(self.k).map(|p| vec![*p]).ok_or_else(|| Error::Domain(format!("no Hamiltonian P_{}", self.k)))
    }
}

/// The entries of a single Lax matrix `L_j(z)` evaluated at fixed `z`.
pub struct LaxEntries {
    pub site: usize,
    pub z: C64,
}

impl Observable for LaxEntries {
    fn eval<S: Scalar>(&self, x: &PhasePoint<S>) -> Result<Vec<S>> {
        let site = x.sites.get(self.site).ok_or_else(|| Error::Domain(format!("no site {}", self.site)))?;
        let l = lax_matrix(site)?.eval(S::constant(self.z))?;
        Ok(vec![l[0][0], l[0][1], l[1][0], l[1][1]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phasespace::sample_leaf;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn trivial() -> (PhasePoint<C64>, ModelParams) {
        let x = PhasePoint::new(vec![SiteState::new(c(0., 0.), c(0., 0.), c(1., 0.))]);
        (x, ModelParams::homogeneous(1, c(1., 0.)))
    }

    #[test]
    fn lax_matrix_examples() {
        let l = lax_matrix(&SiteState::new(c(0., 0.), c(0., 0.), c(1., 0.))).unwrap();
        let z = c(0.7, 0.4);
        let v = l.eval(z).unwrap();
        assert!((v[0][0] - (z - 1.0 / z)).norm() < 1e-15 && (v[1][1] - (z - 1.0 / z)).norm() < 1e-15);
        assert!(v[0][1].norm() == 0.0 && v[1][0].norm() == 0.0);
    }

    #[test]
    fn k_matrix_examples() {
        let k = k_matrix(c(2.0, 0.0)).unwrap().eval(c(1.0, 0.0)).unwrap();
        assert!((k[0][0] - c(1.5, 0.)).norm() < 1e-15 && (k[1][1] - c(1.5, 0.)).norm() < 1e-15);
        let k1 = k_matrix(c(1.0, 0.0)).unwrap();
        let z = c(0.3, 0.9);
        let v = k1.eval(z).unwrap();
        assert!((v[0][0] - (z - 1.0 / z)).norm() < 1e-14 && (v[1][1] + (z - 1.0 / z)).norm() < 1e-14);
        assert!(k_matrix(c(0.0, 0.0)).is_err());
    }

    #[test]
    fn trivial_point_monodromy() {
        let (x, p) = trivial();
        let data = reflection_monodromy(&x, &p).unwrap();
        let z = c(0.8, 0.5);
        let t = data.t_matrix(z).unwrap();
        let w = (z - 1.0 / z) * (z - 1.0 / z);
        assert!((t[0][0] - w).norm() < 1e-13 && (t[1][1] + w).norm() < 1e-13);
        assert!(data.transfer(z).unwrap().norm() < 1e-13);
        let h = transfer_coefficients(&data).unwrap();
        assert!(h.iter().all(|v| v.norm() < 1e-14));
    }

    #[test]
    fn r_matrix_example() {
        let r = r_matrix(c(2.0, 0.0)).unwrap();
        assert!((r[0][0] - c(5.0 / 6.0, 0.)).norm() < 1e-15);
        assert!((r[1][2] - c(8.0 / 6.0, 0.)).norm() < 1e-15);
        assert!((r[1][1] + c(5.0 / 6.0, 0.)).norm() < 1e-15);
        assert!(r_matrix(c(-1.0, 0.0)).is_err());
    }

    #[test]
    fn big_p_relation_and_extraction() {
        let x = sample_leaf(&[c(1.2, 0.3), c(2.4, -0.5), c(0.7, 0.1)], 5);
        let p = ModelParams::new(c(1.3, 0.4), vec![c(1.1, 0.2), c(0.8, -0.3), c(1.2, 0.1)], OrderingMode::Reversed).unwrap();
        let data = reflection_monodromy(&x, &p).unwrap();
        let pn = data.hamiltonians[3];
        let bp = data.big_p;
        assert!((pn / 2.0 - (bp - 1.0 / bp)).norm() < 1e-12 * pn.norm());
        transfer_coefficients(&data).unwrap();
    }

    #[test]
    fn sigma_part_matches_direct_expansion() {
        // p = z³ + 2z + 3z⁻¹ with shift −1: p·z⁻¹/(1+z²) = (z² + 2 + 3z⁻²)(1 − z² + z⁴ − …)
        // non-positive part: 3z⁻² + (2 − 3) = 3z⁻² − 1.
        let p = LaurentPoly::from_coeffs(-1, vec![c(3., 0.), c(0., 0.), c(2., 0.), c(0., 0.), c(1., 0.)]);
        let s = sigma_part_at_zero(&p, -1);
        assert_eq!(s.coeff(0), c(-1., 0.));
        assert_eq!(s.coeff(-2), c(3., 0.));
        assert_eq!(s.coeff(2), c(3., 0.));
        assert_eq!(s.coeff(-1), c(0., 0.));
    }
}
