//! Run configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use xxz_core::phasespace::{ModelParams, OrderingMode, PhasePoint, SiteState};
use xxz_core::C64;

use crate::error::{CliError, CliResult};

/// Complex number written as `[re, im]`.
pub type Pair = [f64; 2];

pub fn cplx(p: &Pair) -> C64 {
    C64::new(p[0], p[1])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(rename = "N")]
    pub n: usize,
    pub xi: Pair,
    /// Inhomogeneities; all ones when omitted.
    #[serde(default)]
    pub a: Option<Vec<Pair>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteConfig {
    pub e: Pair,
    pub f: Pair,
    pub k: Pair,
}

/// Either Casimir targets (points are sampled on that leaf from the seed) or
/// one explicit phase point. Omitted: a random leaf per point.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeafConfig {
    #[serde(default)]
    pub omega: Option<Vec<Pair>>,
    #[serde(default)]
    pub sites: Option<Vec<SiteConfig>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "d_ode")]
    pub ode: f64,
    #[serde(default = "d_quadrature")]
    pub quadrature: f64,
    #[serde(default = "d_identity")]
    pub identity: f64,
    #[serde(default = "d_hamiltonian")]
    pub hamiltonian: f64,
    #[serde(default = "d_lax")]
    pub lax: f64,
    #[serde(default = "d_conservation")]
    pub conservation: f64,
    #[serde(default = "d_log_canonical")]
    pub log_canonical: f64,
    #[serde(default = "d_gradient")]
    pub gradient: f64,
    /// Slope and fit residual tolerance; `1e-6` for `N = 2`, `1e-4` above.
    #[serde(default)]
    pub linearization: Option<f64>,
    #[serde(default = "d_action")]
    pub action: f64,
    #[serde(default = "d_action_constancy")]
    pub action_constancy: f64,
    #[serde(default = "d_periods")]
    pub periods: f64,
    #[serde(default = "d_automorphy")]
    pub automorphy: f64,
    /// Relative `Q(t)` error; `1e-6` for `N = 2`, `1e-4` above.
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default = "d_reconstruction")]
    pub reconstruction: f64,
    /// Reconstruction at `t = 0`, where no flow error enters.
    #[serde(default = "d_reconstruction_initial")]
    pub reconstruction_initial: f64,
    /// Genus-one periods against the AGM lattice.
    #[serde(default = "d_elliptic_oracle")]
    pub elliptic_oracle: f64,
    /// Lower bound on smallest singular values.
    #[serde(default = "d_singular_floor")]
    pub singular_floor: f64,
}

fn d_ode() -> f64 {
    1e-10
}
fn d_quadrature() -> f64 {
    1e-10
}
fn d_identity() -> f64 {
    1e-9
}
fn d_hamiltonian() -> f64 {
    1e-10
}
fn d_lax() -> f64 {
    1e-8
}
fn d_conservation() -> f64 {
    1e-8
}
fn d_log_canonical() -> f64 {
    1e-8
}
fn d_gradient() -> f64 {
    1e-6
}
fn d_action() -> f64 {
    1e-4
}
fn d_action_constancy() -> f64 {
    1e-6
}
fn d_periods() -> f64 {
    1e-8
}
fn d_automorphy() -> f64 {
    1e-10
}
fn d_reconstruction() -> f64 {
    1e-5
}
fn d_reconstruction_initial() -> f64 {
    1e-8
}
fn d_elliptic_oracle() -> f64 {
    1e-7
}
fn d_singular_floor() -> f64 {
    1e-6
}

impl Default for Tolerances {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

impl Tolerances {
    pub fn linearization_for(&self, n: usize) -> f64 {
        self.linearization.unwrap_or(if n <= 2 { 1e-6 } else { 1e-4 })
    }

    pub fn theta_for(&self, n: usize) -> f64 {
        self.theta.unwrap_or(if n <= 2 { 1e-6 } else { 1e-4 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderingChoice {
    Auto,
    AsPrinted,
    Reversed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Scales the last row of the normalization matrix by 1.05.
    CorruptNormalization,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub leaf: LeafConfig,
    #[serde(default)]
    pub seed: u64,
    /// Sample times, strictly increasing from 0. Default: 0, 0.1, …, 1.
    #[serde(default)]
    pub times: Option<Vec<f64>>,
    #[serde(default = "d_index")]
    pub hamiltonian_index: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "d_ordering")]
    pub ordering_mode: OrderingChoice,
    #[serde(default = "d_output")]
    pub output_dir: PathBuf,
    /// Number of phase points for `verify` and `sov`.
    #[serde(default = "d_samples")]
    pub samples: usize,
    /// Number of spectral-parameter samples.
    #[serde(default = "d_z_samples")]
    pub z_samples: usize,
    #[serde(default)]
    pub inject_fault: Option<Fault>,
}

fn d_index() -> usize {
    1
}
fn d_ordering() -> OrderingChoice {
    OrderingChoice::Auto
}
fn d_output() -> PathBuf {
    PathBuf::from("xxz-out")
}
fn d_samples() -> usize {
    20
}
fn d_z_samples() -> usize {
    10
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        let n = self.model.n;
        if n == 0 {
            return bad("model.N must be at least 1".into());
        }
        let finite = |p: &Pair| p[0].is_finite() && p[1].is_finite();
        if !finite(&self.model.xi) || cplx(&self.model.xi).norm() == 0.0 {
            return bad("model.xi must be finite and nonzero".into());
        }
        if let Some(a) = &self.model.a {
            if a.len() != n {
                return bad(format!("model.a has {} entries, expected {n}", a.len()));
            }
            if a.iter().any(|p| !finite(p) || cplx(p).norm() == 0.0) {
                return bad("model.a entries must be finite and nonzero".into());
            }
        }
        match (&self.leaf.omega, &self.leaf.sites) {
            (Some(_), Some(_)) => return bad("leaf: give either omega or sites, not both".into()),
            (Some(om), None) if om.len() != n || om.iter().any(|p| !finite(p)) => {
                return bad(format!("leaf.omega needs {n} finite entries"));
            }
            (None, Some(s)) if s.len() != n => return bad(format!("leaf.sites needs {n} entries")),
            (None, Some(s)) if s.iter().any(|v| !finite(&v.e) || !finite(&v.f) || !finite(&v.k) || cplx(&v.k).norm() == 0.0) => {
                return bad("leaf.sites entries must be finite with k ≠ 0".into());
            }
            _ => {}
        }
        if let Some(t) = &self.times {
            if t.is_empty() || t.iter().any(|v| !v.is_finite()) {
                return bad("times must be finite and non-empty".into());
            }
            if t.windows(2).any(|w| w[1] <= w[0]) {
                return bad("times must be strictly increasing".into());
            }
            if t[0] != 0.0 {
                return bad("times must start at 0".into());
            }
        }
        if self.hamiltonian_index > n {
            return bad(format!("hamiltonian_index must be in 0..={n}"));
        }
        let tol = &self.tolerances;
        let all = [
            tol.ode,
            tol.quadrature,
            tol.identity,
            tol.hamiltonian,
            tol.lax,
            tol.conservation,
            tol.log_canonical,
            tol.gradient,
            tol.linearization_for(n),
            tol.action,
            tol.action_constancy,
            tol.periods,
            tol.automorphy,
            tol.theta_for(n),
            tol.reconstruction,
            tol.reconstruction_initial,
            tol.elliptic_oracle,
            tol.singular_floor,
        ];
        if all.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return bad("tolerances must be positive and finite".into());
        }
        if self.samples == 0 || self.z_samples == 0 {
            return bad("samples and z_samples must be positive".into());
        }
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        self.times.clone().unwrap_or_else(|| (0..=10).map(|i| i as f64 / 10.0).collect())
    }

    /// Model parameters with the ordering fixed; `Auto` maps to `Reversed`
    /// and is resolved by the caller when it matters.
    pub fn params(&self, ordering: OrderingMode) -> CliResult<ModelParams> {
        let n = self.model.n;
        let a = match &self.model.a {
            Some(a) => a.iter().map(cplx).collect(),
            None => vec![C64::new(1.0, 0.0); n],
        };
        Ok(ModelParams::new(cplx(&self.model.xi), a, ordering)?)
    }

    pub fn fixed_ordering(&self) -> Option<OrderingMode> {
        match self.ordering_mode {
            OrderingChoice::Auto => None,
            OrderingChoice::AsPrinted => Some(OrderingMode::AsPrinted),
            OrderingChoice::Reversed => Some(OrderingMode::Reversed),
        }
    }

    pub fn explicit_point(&self) -> Option<PhasePoint<C64>> {
        self.leaf.sites.as_ref().map(|s| PhasePoint::new(s.iter().map(|v| SiteState::new(cplx(&v.e), cplx(&v.f), cplx(&v.k))).collect()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[model]\nN = 2\nxi = [1.1, 0.2]\n";

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.hamiltonian_index, 1);
        assert_eq!(c.ordering_mode, OrderingChoice::Auto);
        assert_eq!(c.times().len(), 11);
        assert_eq!(c.tolerances.ode, 1e-10);
        assert_eq!(c.tolerances.theta_for(3), 1e-4);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml(&format!("{MINIMAL}bogus = 1\n")).is_err());
        assert!(RunConfig::from_toml("[model]\nN = 2\nxi = [1.0, 0.0]\nextra = 3\n").is_err());
        assert!(RunConfig::from_toml(&format!("{MINIMAL}[tolerances]\node = 1e-9\nfoo = 1.0\n")).is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(RunConfig::from_toml("[model]\nN = 0\nxi = [1.0, 0.0]\n").is_err());
        assert!(RunConfig::from_toml(&format!("{MINIMAL}times = [0.0, 0.5, 0.2]\n")).is_err());
        assert!(RunConfig::from_toml(&format!("{MINIMAL}hamiltonian_index = 3\n")).is_err());
        assert!(RunConfig::from_toml("[model]\nN = 2\nxi = [1.0, 0.0]\na = [[1.0, 0.0]]\n").is_err());
        assert!(RunConfig::from_toml(&format!("{MINIMAL}[tolerances]\node = -1.0\n")).is_err());
        assert!(RunConfig::from_toml(&format!("{MINIMAL}ordering_mode = \"sideways\"\n")).is_err());
    }

    #[test]
    fn explicit_sites_parse() {
        let text = format!(
            "{MINIMAL}[[leaf.sites]]\ne = [0.1, 0.0]\nf = [0.2, 0.0]\nk = [1.0, 0.1]\n[[leaf.sites]]\ne = [0.3, 0.0]\nf = [0.1, 0.0]\nk = [0.9, 0.0]\n"
        );
        let c = RunConfig::from_toml(&text).unwrap();
        assert_eq!(c.explicit_point().unwrap().n(), 2);
    }
}
