//! Laurent polynomials in `z`, 2×2 Laurent matrices, and polynomials in
//! `λ = z² + z⁻²`.

use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense Laurent polynomial `Σ_{n=low}^{low+len-1} c_n zⁿ` over a tight window.
#[derive(Debug, Clone, PartialEq)]
pub struct LaurentPoly<S> {
    low: i32,
    coeffs: Vec<S>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Substitution<S> {
    /// `z → c·z`
    Scale(S),
    /// `z → 1/z`
    Invert,
    /// `z → −z`
    Negate,
}

impl<S: Scalar> LaurentPoly<S> {
    pub fn zero() -> Self {
        LaurentPoly { low: 0, coeffs: Vec::new() }
    }

    pub fn constant(c: S) -> Self {
        Self::from_coeffs(0, vec![c])
    }

    pub fn monomial(c: S, n: i32) -> Self {
        Self::from_coeffs(n, vec![c])
    }

    /// Builds `Σ coeffs[i] z^{low+i}` and trims exact zeros at both ends.
    pub fn from_coeffs(low: i32, coeffs: Vec<S>) -> Self {
        let mut p = LaurentPoly { low, coeffs };
        p.trim();
        p
    }

    fn trim(&mut self) {
        while self.coeffs.last().is_some_and(|c| c.is_exact_zero()) {
            self.coeffs.pop();
        }
        let lead = self.coeffs.iter().take_while(|c| c.is_exact_zero()).count();
        if lead > 0 {
            self.coeffs.drain(..lead);
            self.low += lead as i32;
        }
        if self.coeffs.is_empty() {
            self.low = 0;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Lowest stored degree (0 for the zero polynomial).
    pub fn low(&self) -> i32 {
        self.low
    }

    /// Highest stored degree (`low - 1` for the zero polynomial).
    pub fn high(&self) -> i32 {
        self.low + self.coeffs.len() as i32 - 1
    }

    pub fn coeffs(&self) -> &[S] {
        &self.coeffs
    }

    pub fn coeff(&self, n: i32) -> S {
        let i = n - self.low;
        if i < 0 || i as usize >= self.coeffs.len() {
            S::zero()
        } else {
            self.coeffs[i as usize]
        }
    }

    /// Largest coefficient magnitude.
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.magnitude()).fold(0.0, f64::max)
    }

    pub fn eval(&self, z: S) -> Result<S> {
        if z.magnitude() == 0.0 {
            return Err(Error::Domain("Laurent polynomial evaluated at z = 0".into()));
        }
        if self.is_zero() {
            return Ok(S::zero());
        }
        let mut acc = S::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc * z + *c;
        }
        Ok(acc * z.powi(self.low))
    }

    pub fn scale(&self, s: S) -> Self {
        Self::from_coeffs(self.low, self.coeffs.iter().map(|c| *c * s).collect())
    }

    /// Multiplies by `z^shift`.
    pub fn shift(&self, shift: i32) -> Self {
        LaurentPoly { low: self.low + shift, coeffs: self.coeffs.clone() }
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(S) -> T) -> LaurentPoly<T> {
        LaurentPoly::from_coeffs(self.low, self.coeffs.iter().map(|c| f(*c)).collect())
    }

    pub fn substitute(&self, sub: Substitution<S>) -> Self {
        match sub {
            Substitution::Scale(c) => {
                let coeffs = self.coeffs.iter().enumerate().map(|(i, a)| *a * c.powi(self.low + i as i32)).collect();
                Self::from_coeffs(self.low, coeffs)
            }
            Substitution::Invert => {
                let coeffs = self.coeffs.iter().rev().copied().collect();
                Self::from_coeffs(-self.high(), coeffs)
            }
            Substitution::Negate => {
                let coeffs = self.coeffs.iter().enumerate().map(|(i, a)| if (self.low + i as i32) % 2 == 0 { *a } else { -*a }).collect();
                Self::from_coeffs(self.low, coeffs)
            }
        }
    }

    /// Splits `f = fσ + f⁺` with `fσ(z) = fσ(1/z)` and `f⁺ ∈ zC[z]`.
    pub fn sigma_plus_decompose(&self) -> (Self, Self) {
        let top = self.high().max(-self.low).max(0);
        let mut sigma = vec![S::zero(); (2 * top + 1) as usize];
        let mut plus = vec![S::zero(); (top + 1) as usize];
        sigma[top as usize] = self.coeff(0);
        for n in 1..=top {
            let neg = self.coeff(-n);
            sigma[(top + n) as usize] = neg;
            sigma[(top - n) as usize] = neg;
            plus[n as usize] = self.coeff(n) - neg;
        }
        (Self::from_coeffs(-top, sigma), Self::from_coeffs(0, plus))
    }

    /// Exact division `num / den`; the remainder must be below `tol·‖num‖`.
    pub fn divide_exact(&self, den: &Self, tol: f64) -> Result<Self> {
        if den.is_zero() {
            return Err(Error::Domain("division by the zero Laurent polynomial".into()));
        }
        if self.is_zero() {
            return Ok(Self::zero());
        }
        let dlen = den.coeffs.len();
        let nlen = self.coeffs.len();
        if nlen < dlen {
            return Err(Error::Divisibility { remainder: 1.0, tolerance: tol });
        }
        let lead = *den.coeffs.last().unwrap();
        let mut rem = self.coeffs.clone();
        let qlen = nlen - dlen + 1;
        let mut quot = vec![S::zero(); qlen];
        for qi in (0..qlen).rev() {
            let q = rem[qi + dlen - 1] / lead;
            quot[qi] = q;
            for (j, d) in den.coeffs.iter().enumerate() {
                rem[qi + j] -= q * *d;
            }
        }
        let rnorm = rem[..dlen - 1].iter().map(|c| c.magnitude()).fold(0.0, f64::max);
        let scale = self.norm();
        if rnorm > tol * scale {
            return Err(Error::Divisibility { remainder: rnorm / scale, tolerance: tol });
        }
        Ok(Self::from_coeffs(self.low - den.low, quot))
    }

    /// Rewrites an even, inversion-symmetric Laurent polynomial in `λ = z² + z⁻²`.
    pub fn to_lambda(&self, tol: f64) -> Result<LambdaPoly<S>> {
        let scale = self.norm().max(f64::MIN_POSITIVE);
        let top = self.high().max(-self.low).max(0);
        for n in -top..=top {
            let c = self.coeff(n);
            if n % 2 != 0 && c.magnitude() > tol * scale {
                return Err(Error::Symmetry(format!("odd coefficient at z^{n} in to_lambda")));
            }
            if (c - self.coeff(-n)).magnitude() > tol * scale {
                return Err(Error::Symmetry(format!("p(1/z) ≠ p(z) at z^{n} in to_lambda")));
            }
        }
        let half = S::constant(Complex64::new(0.5, 0.0));
        let m_max = (top / 2) as usize;
        let basis = chebyshev_q::<S>(m_max);
        let mut out = LambdaPoly::constant(self.coeff(0));
        for (m, q) in basis.iter().enumerate().skip(1) {
            let c = (self.coeff(2 * m as i32) + self.coeff(-2 * m as i32)) * half;
            out = &out + &q.scale(c);
        }
        Ok(out)
    }
}

impl<S: Scalar> Add for &LaurentPoly<S> {
    type Output = LaurentPoly<S>;
    fn add(self, o: &LaurentPoly<S>) -> LaurentPoly<S> {
        if self.is_zero() {
            return o.clone();
        }
        if o.is_zero() {
            return self.clone();
        }
        let low = self.low.min(o.low);
        let high = self.high().max(o.high());
        let coeffs = (low..=high).map(|n| self.coeff(n) + o.coeff(n)).collect();
        LaurentPoly::from_coeffs(low, coeffs)
    }
}

impl<S: Scalar> Sub for &LaurentPoly<S> {
    type Output = LaurentPoly<S>;
    fn sub(self, o: &LaurentPoly<S>) -> LaurentPoly<S> {
        self + &(-o)
    }
}

impl<S: Scalar> Neg for &LaurentPoly<S> {
    type Output = LaurentPoly<S>;
    fn neg(self) -> LaurentPoly<S> {
        LaurentPoly { low: self.low, coeffs: self.coeffs.iter().map(|c| -*c).collect() }
    }
}

impl<S: Scalar> Mul for &LaurentPoly<S> {
    type Output = LaurentPoly<S>;
    fn mul(self, o: &LaurentPoly<S>) -> LaurentPoly<S> {
        if self.is_zero() || o.is_zero() {
            return LaurentPoly::zero();
        }
        let mut coeffs = vec![S::zero(); self.coeffs.len() + o.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in o.coeffs.iter().enumerate() {
                coeffs[i + j] += *a * *b;
            }
        }
        LaurentPoly::from_coeffs(self.low + o.low, coeffs)
    }
}

/// `[[a, b], [c, d]]` with Laurent-polynomial entries.
#[derive(Debug, Clone, PartialEq)]
pub struct LaurentMatrix<S> {
    pub a: LaurentPoly<S>,
    pub b: LaurentPoly<S>,
    pub c: LaurentPoly<S>,
    pub d: LaurentPoly<S>,
}

pub type Mat2<S> = [[S; 2]; 2];

impl<S: Scalar> LaurentMatrix<S> {
    pub fn new(a: LaurentPoly<S>, b: LaurentPoly<S>, c: LaurentPoly<S>, d: LaurentPoly<S>) -> Self {
        LaurentMatrix { a, b, c, d }
    }

    pub fn identity() -> Self {
        let one = LaurentPoly::constant(S::one());
        LaurentMatrix::new(one.clone(), LaurentPoly::zero(), LaurentPoly::zero(), one)
    }

    pub fn sigma3() -> Self {
        LaurentMatrix::new(LaurentPoly::constant(S::one()), LaurentPoly::zero(), LaurentPoly::zero(), LaurentPoly::constant(-S::one()))
    }

    /// σ₂ = [[0, −1], [1, 0]].
    pub fn sigma2() -> Self {
        LaurentMatrix::new(LaurentPoly::zero(), LaurentPoly::constant(-S::one()), LaurentPoly::constant(S::one()), LaurentPoly::zero())
    }

    pub fn matmul(&self, o: &Self) -> Self {
        LaurentMatrix::new(
            &(&self.a * &o.a) + &(&self.b * &o.c),
            &(&self.a * &o.b) + &(&self.b * &o.d),
            &(&self.c * &o.a) + &(&self.d * &o.c),
            &(&self.c * &o.b) + &(&self.d * &o.d),
        )
    }

    pub fn substitute(&self, sub: Substitution<S>) -> Self {
        LaurentMatrix::new(self.a.substitute(sub), self.b.substitute(sub), self.c.substitute(sub), self.d.substitute(sub))
    }

    pub fn transpose(&self) -> Self {
        LaurentMatrix::new(self.a.clone(), self.c.clone(), self.b.clone(), self.d.clone())
    }

    pub fn scale(&self, s: S) -> Self {
        LaurentMatrix::new(self.a.scale(s), self.b.scale(s), self.c.scale(s), self.d.scale(s))
    }

    pub fn trace(&self) -> LaurentPoly<S> {
        &self.a + &self.d
    }

    pub fn det(&self) -> LaurentPoly<S> {
        &(&self.a * &self.d) - &(&self.b * &self.c)
    }

    pub fn eval(&self, z: S) -> Result<Mat2<S>> {
        Ok([[self.a.eval(z)?, self.b.eval(z)?], [self.c.eval(z)?, self.d.eval(z)?]])
    }

    pub fn entries(&self) -> [&LaurentPoly<S>; 4] {
        [&self.a, &self.b, &self.c, &self.d]
    }

    pub fn norm(&self) -> f64 {
        self.entries().iter().map(|p| p.norm()).fold(0.0, f64::max)
    }
}

/// Polynomial in `λ` with ascending coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaPoly<S> {
    coeffs: Vec<S>,
}

impl<S: Scalar> LambdaPoly<S> {
    pub fn new(mut coeffs: Vec<S>) -> Self {
        while coeffs.last().is_some_and(|c| c.is_exact_zero()) {
            coeffs.pop();
        }
        LambdaPoly { coeffs }
    }

    pub fn constant(c: S) -> Self {
        Self::new(vec![c])
    }

    /// The polynomial `λ`.
    pub fn lambda() -> Self {
        Self::new(vec![S::zero(), S::one()])
    }

    pub fn coeffs(&self) -> &[S] {
        &self.coeffs
    }

    /// Degree, with `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn leading(&self) -> S {
        self.coeffs.last().copied().unwrap_or_else(S::zero)
    }

    pub fn eval(&self, x: S) -> S {
        self.coeffs.iter().rev().fold(S::zero(), |acc, c| acc * x + *c)
    }

    pub fn derivative(&self) -> Self {
        let coeffs = self.coeffs.iter().enumerate().skip(1).map(|(i, c)| *c * S::constant(Complex64::new(i as f64, 0.0))).collect();
        Self::new(coeffs)
    }

    pub fn scale(&self, s: S) -> Self {
        Self::new(self.coeffs.iter().map(|c| *c * s).collect())
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.magnitude()).fold(0.0, f64::max)
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(S) -> T) -> LambdaPoly<T> {
        LambdaPoly::new(self.coeffs.iter().map(|c| f(*c)).collect())
    }

    /// Synthetic division by `(λ − r)`, returning quotient and remainder.
    pub fn deflate(&self, r: S) -> (Self, S) {
        if self.coeffs.is_empty() {
            return (Self::new(Vec::new()), S::zero());
        }
        let n = self.coeffs.len();
        let mut q = vec![S::zero(); n - 1];
        let mut acc = S::zero();
        for i in (0..n).rev() {
            acc = acc * r + self.coeffs[i];
            if i > 0 {
                q[i - 1] = acc;
            }
        }
        (Self::new(q), acc)
    }

    /// Substitutes `λ = z² + z⁻²`.
    pub fn to_laurent(&self) -> LaurentPoly<S> {
        let lam = LaurentPoly::from_coeffs(-2, vec![S::one(), S::zero(), S::zero(), S::zero(), S::one()]);
        let mut acc = LaurentPoly::zero();
        for c in self.coeffs.iter().rev() {
            acc = &(&acc * &lam) + &LaurentPoly::constant(*c);
        }
        acc
    }
}

impl<S: Scalar> Add for &LambdaPoly<S> {
    type Output = LambdaPoly<S>;
    fn add(self, o: &LambdaPoly<S>) -> LambdaPoly<S> {
        let n = self.coeffs.len().max(o.coeffs.len());
        let get = |p: &LambdaPoly<S>, i: usize| p.coeffs.get(i).copied().unwrap_or_else(S::zero);
        LambdaPoly::new((0..n).map(|i| get(self, i) + get(o, i)).collect())
    }
}

impl<S: Scalar> Sub for &LambdaPoly<S> {
    type Output = LambdaPoly<S>;
    fn sub(self, o: &LambdaPoly<S>) -> LambdaPoly<S> {
        self + &o.scale(-S::one())
    }
}

impl<S: Scalar> Mul for &LambdaPoly<S> {
    type Output = LambdaPoly<S>;
    fn mul(self, o: &LambdaPoly<S>) -> LambdaPoly<S> {
        if self.coeffs.is_empty() || o.coeffs.is_empty() {
            return LambdaPoly::new(Vec::new());
        }
        let mut c = vec![S::zero(); self.coeffs.len() + o.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in o.coeffs.iter().enumerate() {
                c[i + j] += *a * *b;
            }
        }
        LambdaPoly::new(c)
    }
}

/// `q_0 = 2, q_1 = λ, q_{m+1} = λq_m − q_{m−1}`, so that `q_m(w + w⁻¹) = wᵐ + w⁻ᵐ`.
pub fn chebyshev_q<S: Scalar>(m_max: usize) -> Vec<LambdaPoly<S>> {
    let two = S::constant(Complex64::new(2.0, 0.0));
    let mut q = vec![LambdaPoly::constant(two)];
    if m_max >= 1 {
        q.push(LambdaPoly::lambda());
    }
    for m in 1..m_max {
        let next = &(&LambdaPoly::lambda() * &q[m]) - &q[m - 1];
        q.push(next);
    }
    q
}

/// `r_j = (q_j − 2)/(λ − 2)` for `j = 1..=n`.
pub fn chebyshev_r<S: Scalar>(n: usize) -> Vec<LambdaPoly<S>> {
    let two = S::constant(Complex64::new(2.0, 0.0));
    chebyshev_q::<S>(n).into_iter().skip(1).map(|q| (&q - &LambdaPoly::constant(two)).deflate(two).0).collect()
}
