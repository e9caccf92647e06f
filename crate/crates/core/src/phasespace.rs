//! Phase space of N sites with the per-site bracket
//! `{k,e} = ke, {k,f} = −kf, {e,f} = 2(k² − k⁻²)`, and a bracket engine for
//! derived observables.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{Dual, Scalar};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiteState<S> {
    pub e: S,
    pub f: S,
    pub k: S,
}

impl<S: Scalar> SiteState<S> {
    pub fn new(e: S, f: S, k: S) -> Self {
        SiteState { e, f, k }
    }

    fn check(&self) -> Result<()> {
        if self.k.magnitude() == 0.0 {
            return Err(Error::InvalidState("site with k = 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint<S> {
    pub sites: Vec<SiteState<S>>,
}

impl<S: Scalar> PhasePoint<S> {
    pub fn new(sites: Vec<SiteState<S>>) -> Self {
        PhasePoint { sites }
    }

    pub fn n(&self) -> usize {
        self.sites.len()
    }

    /// Flat coordinates `(e_1, f_1, k_1, e_2, …)`.
    pub fn coords(&self) -> Vec<S> {
        self.sites.iter().flat_map(|s| [s.e, s.f, s.k]).collect()
    }

    pub fn from_coords(c: &[S]) -> Self {
        PhasePoint { sites: c.chunks(3).map(|s| SiteState::new(s[0], s[1], s[2])).collect() }
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(S) -> T) -> PhasePoint<T> {
        PhasePoint { sites: self.sites.iter().map(|s| SiteState::new(f(s.e), f(s.f), f(s.k))).collect() }
    }

    pub fn validate(&self) -> Result<()> {
        self.sites.iter().try_for_each(|s| s.check())
    }
}

/// Which inhomogeneity pairs with site `j` in the second monodromy factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderingMode {
    /// `L_N(z/a_1)⋯L_1(z/a_N)`
    AsPrinted,
    /// `L_N(z/a_N)⋯L_1(z/a_1)`
    Reversed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: usize,
    pub xi: C64,
    pub a: Vec<C64>,
    pub ordering: OrderingMode,
}

impl ModelParams {
    pub fn new(xi: C64, a: Vec<C64>, ordering: OrderingMode) -> Result<Self> {
        let p = ModelParams { n: a.len(), xi, a, ordering };
        p.validate()?;
        Ok(p)
    }

    /// All inhomogeneities equal to one.
    pub fn homogeneous(n: usize, xi: C64) -> Self {
        ModelParams { n, xi, a: vec![C64::new(1.0, 0.0); n], ordering: OrderingMode::Reversed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.a.len() != self.n {
            return Err(Error::InvalidState(format!("need N ≥ 1 inhomogeneities, got {}", self.a.len())));
        }
        if self.xi.norm() == 0.0 {
            return Err(Error::InvalidState("xi = 0".into()));
        }
        if self.a.iter().any(|a| a.norm() == 0.0) {
            return Err(Error::InvalidState("zero inhomogeneity".into()));
        }
        Ok(())
    }

    /// Genericity warnings: `ξ = ±1` and `ω_j = a_j² + a_j⁻²`.
    pub fn warnings(&self, x: &PhasePoint<C64>) -> Vec<String> {
        let mut w = Vec::new();
        if (self.xi - 1.0).norm() < 1e-12 || (self.xi + 1.0).norm() < 1e-12 {
            w.push("xi = ±1 is non-generic".to_string());
        }
        for (j, (s, a)) in x.sites.iter().zip(&self.a).enumerate() {
            if let Ok(om) = casimir(s) {
                if (om - a * a - 1.0 / (a * a)).norm() < 1e-12 * (1.0 + om.norm()) {
                    w.push(format!("site {}: casimir equals a² + a⁻²", j + 1));
                }
            }
        }
        w
    }

    pub fn with_ordering(&self, ordering: OrderingMode) -> Self {
        ModelParams { ordering, ..self.clone() }
    }

    pub fn is_homogeneous(&self) -> bool {
        self.a.iter().all(|a| (a - 1.0).norm() == 0.0)
    }
}

pub fn casimir<S: Scalar>(site: &SiteState<S>) -> Result<S> {
    site.check()?;
    let k2 = site.k * site.k;
    Ok(k2 + k2.recip() + site.e * site.f)
}

/// Π for one site, rows/columns ordered `(e, f, k)`.
pub fn structure_matrix<S: Scalar>(site: &SiteState<S>) -> Result<[[S; 3]; 3]> {
    site.check()?;
    let two = S::constant(Complex64::new(2.0, 0.0));
    let k2 = site.k * site.k;
    let ef = two * (k2 - k2.recip());
    let ek = -site.k * site.e;
    let fk = site.k * site.f;
    let z = S::zero();
    Ok([[z, ef, ek], [-ef, z, fk], [-ek, -fk, z]])
}

/// Block-diagonal Poisson tensor on the full phase space.
pub fn poisson_tensor(x: &PhasePoint<C64>) -> Result<DMatrix<C64>> {
    let n = x.n();
    let mut p = DMatrix::zeros(3 * n, 3 * n);
    for (j, s) in x.sites.iter().enumerate() {
        let b = structure_matrix(s)?;
        for r in 0..3 {
            for c in 0..3 {
                p[(3 * j + r, 3 * j + c)] = b[r][c];
            }
        }
    }
    Ok(p)
}

/// A vector-valued function on phase space, written once over [`Scalar`] so
/// that it can be differentiated with dual numbers.
pub trait Observable {
    fn eval<S: Scalar>(&self, x: &PhasePoint<S>) -> Result<Vec<S>>;
}

/// The flat coordinate with the given index.
pub struct Coordinate(pub usize);

impl Observable for Coordinate {
    fn eval<S: Scalar>(&self, x: &PhasePoint<S>) -> Result<Vec<S>> {
        x.coords().get(self.0).map(|c| vec![*c]).ok_or_else(|| Error::Domain(format!("no coordinate {}", self.0)))
    }
}

/// All flat coordinates.
pub struct Coordinates;

impl Observable for Coordinates {
    fn eval<S: Scalar>(&self, x: &PhasePoint<S>) -> Result<Vec<S>> {
        Ok(x.coords())
    }
}

/// Site Casimirs `ω_1..ω_N`.
pub struct Casimirs;

impl Observable for Casimirs {
    fn eval<S: Scalar>(&self, x: &PhasePoint<S>) -> Result<Vec<S>> {
        x.sites.iter().map(casimir).collect()
    }
}

/// Values and Jacobian (outputs × 3N) via one dual pass per coordinate.
pub fn jacobian<F: Observable>(obs: &F, x: &PhasePoint<C64>) -> Result<(Vec<C64>, DMatrix<C64>)> {
    let coords = x.coords();
    let values = obs.eval(x)?;
    let mut jac = DMatrix::zeros(values.len(), coords.len());
    for a in 0..coords.len() {
        let seeded: Vec<Dual<C64>> =
            coords.iter().enumerate().map(|(i, c)| if i == a { Dual::variable(*c) } else { Dual::constant_of(*c) }).collect();
        let out = obs.eval(&PhasePoint::from_coords(&seeded))?;
        if out.len() != values.len() {
            return Err(Error::Degenerate(format!(
                "observable changed output size under differentiation ({} vs {})",
                out.len(),
                values.len()
            )));
        }
        for (r, v) in out.iter().enumerate() {
            if (v.re - values[r]).norm() > 1e-9 * (1.0 + values[r].norm()) {
                return Err(Error::Degenerate("observable is not a smooth function at this point".into()));
            }
            jac[(r, a)] = v.eps;
        }
    }
    Ok((values, jac))
}

/// Central finite-difference Jacobian with step `1e-6·(1+|x|)`.
pub fn jacobian_fd<F: Observable>(obs: &F, x: &PhasePoint<C64>) -> Result<DMatrix<C64>> {
    let coords = x.coords();
    let m = obs.eval(x)?.len();
    let mut jac = DMatrix::zeros(m, coords.len());
    for a in 0..coords.len() {
        let h = 1e-6 * (1.0 + coords[a].norm());
        let mut plus = coords.clone();
        let mut minus = coords.clone();
        plus[a] += h;
        minus[a] -= h;
        let fp = obs.eval(&PhasePoint::from_coords(&plus))?;
        let fm = obs.eval(&PhasePoint::from_coords(&minus))?;
        for r in 0..m {
            jac[(r, a)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// All brackets `{F_i, G_j}` as a matrix.
pub fn bracket_matrix<F: Observable, G: Observable>(f: &F, g: &G, x: &PhasePoint<C64>) -> Result<DMatrix<C64>> {
    let (_, jf) = jacobian(f, x)?;
    let (_, jg) = jacobian(g, x)?;
    let pi = poisson_tensor(x)?;
    Ok(&jf * pi * jg.transpose())
}

/// `{F, G}` together with the cancellation-free magnitude `|J_F|·|Π|·|J_G|ᵀ`,
/// the natural scale for relative bracket residuals.
pub fn bracket_with_scale<F: Observable, G: Observable>(f: &F, g: &G, x: &PhasePoint<C64>) -> Result<(DMatrix<C64>, DMatrix<f64>)> {
    let (_, jf) = jacobian(f, x)?;
    let (_, jg) = jacobian(g, x)?;
    let pi = poisson_tensor(x)?;
    let bracket = &jf * &pi * jg.transpose();
    let abs = |m: &DMatrix<C64>| m.map(|c| c.norm());
    let scale = abs(&jf) * abs(&pi) * abs(&jg).transpose();
    Ok((bracket, scale))
}

/// `{F, G}` for the first components of two observables.
pub fn poisson_bracket<F: Observable, G: Observable>(f: &F, g: &G, x: &PhasePoint<C64>) -> Result<C64> {
    Ok(bracket_matrix(f, g, x)?[(0, 0)])
}

fn annulus_sample(rng: &mut ChaCha8Rng) -> C64 {
    let r = rng.gen_range(0.5f64.ln()..2.0f64.ln()).exp();
    let phi = rng.gen_range(0.0..std::f64::consts::TAU);
    C64::from_polar(r, phi)
}

/// Point on the leaf `{ω_j = leaf[j]}`; `e_j, k_j` come from the annulus
/// `0.5 ≤ |·| ≤ 2` and `f_j` is solved from the Casimir constraint.
pub fn sample_leaf(leaf: &[C64], seed: u64) -> PhasePoint<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sites = leaf
        .iter()
        .map(|om| {
            let k = annulus_sample(&mut rng);
            let mut e = annulus_sample(&mut rng);
            while e.norm() < 1e-3 {
                e = annulus_sample(&mut rng);
            }
            let f = (om - k * k - 1.0 / (k * k)) / e;
            SiteState::new(e, f, k)
        })
        .collect();
    PhasePoint::new(sites)
}

/// Casimir values drawn as `2 + (complex normal)·spread`.
pub fn random_leaf(n: usize, spread: f64, rng: &mut ChaCha8Rng) -> Vec<C64> {
    (0..n)
        .map(|_| {
            let re: f64 = rng.gen_range(-1.0..1.0);
            let im: f64 = rng.gen_range(-1.0..1.0);
            C64::new(2.0 + spread * re, spread * im)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn casimir_examples() {
        assert_eq!(casimir(&SiteState::new(c(0., 0.), c(0., 0.), c(1., 0.))).unwrap(), c(2., 0.));
        assert!((casimir(&SiteState::new(c(0., 0.), c(0., 0.), c(0., 1.))).unwrap() - c(-2., 0.)).norm() < 1e-15);
        assert!((casimir(&SiteState::new(c(1., 0.), c(3., 0.), c(2., 0.))).unwrap() - c(7.25, 0.)).norm() < 1e-15);
        assert!(casimir(&SiteState::new(c(1., 0.), c(1., 0.), c(0., 0.))).is_err());
    }

    #[test]
    fn structure_matrix_examples() {
        let zero = structure_matrix(&SiteState::new(c(0., 0.), c(0., 0.), c(1., 0.))).unwrap();
        assert!(zero.iter().flatten().all(|v| v.norm() == 0.0));
        let m = structure_matrix(&SiteState::new(c(1., 0.), c(0., 0.), c(1., 0.))).unwrap();
        assert_eq!(m[0][2], c(-1., 0.));
        assert_eq!(m[2][0], c(1., 0.));
        assert_eq!(m[0][1], c(0., 0.));
        assert_eq!(m[1][2], c(0., 0.));
    }

    #[test]
    fn generator_bracket_example() {
        let x = PhasePoint::new(vec![SiteState::new(c(0., 0.), c(0., 0.), c(2., 0.))]);
        let b = poisson_bracket(&Coordinate(0), &Coordinate(1), &x).unwrap();
        assert!((b - c(7.5, 0.)).norm() < 1e-14);
    }

    #[test]
    fn leaf_sampling_examples() {
        let x = sample_leaf(&[c(2., 0.), c(2., 0.), c(2., 0.)], 3);
        for s in &x.sites {
            assert!((casimir(s).unwrap() - c(2., 0.)).norm() < 1e-14);
        }
        assert_eq!(sample_leaf(&[c(1., 1.)], 9), sample_leaf(&[c(1., 1.)], 9));
        let leaf = [c(3., 1.), c(5., 0.)];
        let y = sample_leaf(&leaf, 7);
        for (s, om) in y.sites.iter().zip(leaf) {
            assert!((casimir(s).unwrap() - om).norm() < 1e-12);
        }
    }

    #[test]
    fn casimir_gradient_matches_finite_differences() {
        let x = sample_leaf(&[c(1.3, -0.2), c(2.5, 0.7)], 11);
        let (_, j) = jacobian(&Casimirs, &x).unwrap();
        let jfd = jacobian_fd(&Casimirs, &x).unwrap();
        assert!((j - jfd).camax() < 1e-8);
    }
}
