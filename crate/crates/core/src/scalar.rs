//! Scalar abstraction shared by the algebraic layers.
//!
//! Everything up to the separation-of-variables chart is written once over
//! [`Scalar`] and instantiated with plain complex numbers for evaluation and
//! with [`Dual`] numbers for exact directional derivatives.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use num_complex::{Complex, Complex64};
use num_traits::{Float, FloatConst, NumAssign, One, Zero};

pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Send
    + Sync
    + 'static
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
{
    /// Embeds a double-precision constant.
    fn constant(c: Complex64) -> Self;

    /// The primal value, rounded to double precision.
    fn value(&self) -> Complex64;

    /// Principal square root (branch decided by the primal value).
    fn sqrt(self) -> Self;

    /// Principal logarithm.
    fn ln(self) -> Self;

    fn recip(self) -> Self {
        Self::one() / self
    }

    fn powi(self, n: i32) -> Self {
        let mut base = if n < 0 { self.recip() } else { self };
        let mut e = n.unsigned_abs();
        let mut acc = Self::one();
        while e > 0 {
            if e & 1 == 1 {
                acc *= base;
            }
            base = base * base;
            e >>= 1;
        }
        acc
    }

    fn magnitude(&self) -> f64 {
        self.value().norm()
    }

    fn is_exact_zero(&self) -> bool {
        *self == Self::zero()
    }
}

impl<T> Scalar for Complex<T>
where
    T: Float + FloatConst + NumAssign + Debug + Send + Sync + 'static,
{
    fn constant(c: Complex64) -> Self {
        Complex::new(T::from(c.re).unwrap(), T::from(c.im).unwrap())
    }

    fn value(&self) -> Complex64 {
        Complex64::new(self.re.to_f64().unwrap(), self.im.to_f64().unwrap())
    }

    fn sqrt(self) -> Self {
        Complex::sqrt(self)
    }

    fn ln(self) -> Self {
        Complex::ln(self)
    }
}

/// Forward-mode dual number `re + eps·ε` with `ε² = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<S> {
    pub re: S,
    pub eps: S,
}

impl<S: Scalar> Dual<S> {
    pub fn new(re: S, eps: S) -> Self {
        Dual { re, eps }
    }

    pub fn variable(re: S) -> Self {
        Dual { re, eps: S::one() }
    }

    pub fn constant_of(re: S) -> Self {
        Dual { re, eps: S::zero() }
    }
}

impl<S: Scalar> Add for Dual<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Dual::new(self.re + o.re, self.eps + o.eps)
    }
}

impl<S: Scalar> Sub for Dual<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Dual::new(self.re - o.re, self.eps - o.eps)
    }
}

impl<S: Scalar> Mul for Dual<S> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Dual::new(self.re * o.re, self.re * o.eps + self.eps * o.re)
    }
}

impl<S: Scalar> Div for Dual<S> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let inv = S::one() / o.re;
        let q = self.re * inv;
        Dual::new(q, (self.eps - q * o.eps) * inv)
    }
}

impl<S: Scalar> Neg for Dual<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual::new(-self.re, -self.eps)
    }
}

impl<S: Scalar> AddAssign for Dual<S> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<S: Scalar> SubAssign for Dual<S> {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<S: Scalar> MulAssign for Dual<S> {
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

impl<S: Scalar> DivAssign for Dual<S> {
    fn div_assign(&mut self, o: Self) {
        *self = *self / o;
    }
}

impl<S: Scalar> Zero for Dual<S> {
    fn zero() -> Self {
        Dual::new(S::zero(), S::zero())
    }
    fn is_zero(&self) -> bool {
        self.re.is_zero() && self.eps.is_zero()
    }
}

impl<S: Scalar> One for Dual<S> {
    fn one() -> Self {
        Dual::new(S::one(), S::zero())
    }
}

impl<S: Scalar> Scalar for Dual<S> {
    fn constant(c: Complex64) -> Self {
        Dual::constant_of(S::constant(c))
    }

    fn value(&self) -> Complex64 {
        self.re.value()
    }

    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        Dual::new(s, self.eps / (s + s))
    }

    fn ln(self) -> Self {
        Dual::new(self.re.ln(), self.eps / self.re)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::C64;

    fn d(re: f64, im: f64) -> Dual<C64> {
        Dual::variable(C64::new(re, im))
    }

    #[test]
    fn dual_quotient_rule() {
        let x = d(1.5, -0.3);
        let f = (x * x + Dual::constant(C64::new(2.0, 1.0))) / x;
        let x0 = C64::new(1.5, -0.3);
        let expected = 1.0 - C64::new(2.0, 1.0) / (x0 * x0);
        assert!((f.eps - expected).norm() < 1e-14);
    }

    #[test]
    fn dual_sqrt_and_ln() {
        let x = d(0.7, 2.0);
        let x0 = C64::new(0.7, 2.0);
        assert!((x.sqrt().eps - 0.5 / x0.sqrt()).norm() < 1e-14);
        assert!((x.ln().eps - 1.0 / x0).norm() < 1e-14);
    }

    #[test]
    fn powi_negative_exponent() {
        let x = C64::new(0.4, 0.9);
        assert!((x.powi(-3) - 1.0 / (x * x * x)).norm() < 1e-13);
        let y = d(0.4, 0.9).powi(-2);
        assert!((y.eps + 2.0 / (x * x * x)).norm() < 1e-12);
    }

    #[test]
    fn single_precision_instance() {
        let x: Complex<f32> = Scalar::constant(C64::new(4.0, 0.0));
        assert!((Scalar::sqrt(x).re - 2.0).abs() < 1e-6);
    }
}
