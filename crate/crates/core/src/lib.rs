//! Classical XXZ spin chain with reflecting boundaries.
//!
//! The crate builds the reflection monodromy of an N-site chain, its commuting
//! Hamiltonians and their flows, the separated variables, the hyperelliptic
//! spectral curve with its periods, and the Riemann-theta solution of the
//! flows. Every closed form is paired with a numerical check.

pub mod checks;
pub mod curve;
pub mod dynamics;
pub mod error;
pub mod laurent;
pub mod monodromy;
pub mod phasespace;
pub mod quadrature;
pub mod roots;
pub mod scalar;
pub mod sov;
pub mod theta;

pub use error::{Error, Result};

/// Double-precision complex scalar used throughout the geometric layers.
pub type C64 = num_complex::Complex64;
/// Single-precision complex scalar (algebraic layers only).
pub type C32 = num_complex::Complex32;
/// Dual number over `C64`.
pub type Dual64 = scalar::Dual<C64>;
pub type LaurentPoly64 = laurent::LaurentPoly<C64>;
pub type LaurentMatrix64 = laurent::LaurentMatrix<C64>;
pub type LambdaPoly64 = laurent::LambdaPoly<C64>;
pub type SiteState64 = phasespace::SiteState<C64>;
pub type PhasePoint64 = phasespace::PhasePoint<C64>;
pub type ReflectionData64 = monodromy::ReflectionData<C64>;
