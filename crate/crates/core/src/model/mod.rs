//! Switching-problem instances: regimes, coefficient fields, constraint
//! domain and horizon, plus sample-based structural checks.

mod builtin;
mod domain;
mod file;
mod h3;
mod tabulated;
mod validate;

use std::fmt;
use std::sync::Arc;

use sha2::{Digest, Sha256};

pub use builtin::{
    builtin_counterexample, builtin_pumped_storage, Counterexample, PumpedStorage,
    PumpedStorageParams, GENERATE, PUMP, STORE,
};
pub use domain::{Bounds, ConstraintDomain, MAX_HALFSPACES};
pub use file::{load_model, parse_model};
pub use h3::{check_h3_sufficient, H3Report};
pub use tabulated::{AffineReward, Tabulated, TabulatedRegime};
pub use validate::{validate_model, ValidationReport};

use crate::error::{Error, Result};

pub const MAX_REGIMES: usize = 254;

/// The regime labels `0..m` (written `1..=m` in exported artifacts).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegimeSet(usize);

impl RegimeSet {
    pub fn new(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::config(format!("need at least 2 regimes, got {m}")));
        }
        if m > MAX_REGIMES {
            return Err(Error::config(format!("at most {MAX_REGIMES} regimes are supported, got {m}")));
        }
        Ok(RegimeSet(m))
    }

    pub fn count(self) -> usize {
        self.0
    }
}

/// Coefficients of the controlled diffusion and of the payoff.
///
/// Regimes are zero-based. Implementations must be pure functions of
/// `(x, regime)` so a model can be evaluated concurrently.
pub trait Coefficients: Send + Sync + fmt::Debug {
    /// Writes μ(x, i) into `out` (length d).
    fn drift(&self, x: &[f64], regime: usize, out: &mut [f64]);
    /// Writes σ(x, i) into `out` as a row-major d×d matrix.
    fn volatility(&self, x: &[f64], regime: usize, out: &mut [f64]);
    fn running_reward(&self, x: &[f64], regime: usize) -> f64;
    fn terminal_reward(&self, x: &[f64], regime: usize) -> f64;
    /// Cost of switching from `from` to `to` at state `x`.
    fn switch_cost(&self, x: &[f64], from: usize, to: usize) -> f64;
    /// Stable textual identity, hashed into the model fingerprint.
    fn describe(&self) -> String;
}

/// Constants the model author asserts: a Lipschitz bound on the coefficients
/// and a strictly positive lower bound on switching costs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeclaredConstants {
    pub lipschitz: f64,
    pub min_cost: f64,
}

/// A complete, immutable problem instance.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    name: String,
    dim: usize,
    regimes: RegimeSet,
    horizon: f64,
    domain: ConstraintDomain,
    constants: DeclaredConstants,
    coeffs: Arc<dyn Coefficients>,
}

impl ModelSpec {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        regimes: RegimeSet,
        horizon: f64,
        domain: ConstraintDomain,
        constants: DeclaredConstants,
        coeffs: Arc<dyn Coefficients>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("state dimension must be at least 1"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::config(format!("horizon must be positive, got {horizon}")));
        }
        domain.validate()?;
        if domain.dim() != dim {
            return Err(Error::config(format!(
                "domain has dimension {} but the model has {dim}",
                domain.dim()
            )));
        }
        Ok(ModelSpec {
            name: name.into(),
            dim,
            regimes,
            horizon,
            domain,
            constants,
            coeffs,
        })
    }

    /// Same model with a different constraint domain.
    pub fn with_domain(&self, domain: ConstraintDomain) -> Result<Self> {
        ModelSpec::new(
            self.name.clone(),
            self.dim,
            self.regimes,
            self.horizon,
            domain,
            self.constants,
            Arc::clone(&self.coeffs),
        )
    }

    pub fn with_constants(mut self, constants: DeclaredConstants) -> Self {
        self.constants = constants;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn regimes(&self) -> usize {
        self.regimes.count()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn domain(&self) -> &ConstraintDomain {
        &self.domain
    }

    pub fn constants(&self) -> DeclaredConstants {
        self.constants
    }

    pub fn coefficients(&self) -> &dyn Coefficients {
        self.coeffs.as_ref()
    }

    pub fn drift(&self, x: &[f64], regime: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.coeffs.drift(x, regime, &mut out);
        out
    }

    pub fn volatility(&self, x: &[f64], regime: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim * self.dim];
        self.coeffs.volatility(x, regime, &mut out);
        out
    }

    /// σσᵀ(x, i), row-major.
    pub fn diffusion(&self, x: &[f64], regime: usize) -> Vec<f64> {
        let d = self.dim;
        let s = self.volatility(x, regime);
        let mut a = vec![0.0; d * d];
        for r in 0..d {
            for c in 0..d {
                a[r * d + c] = (0..d).map(|k| s[r * d + k] * s[c * d + k]).sum();
            }
        }
        a
    }

    pub fn running_reward(&self, x: &[f64], regime: usize) -> f64 {
        self.coeffs.running_reward(x, regime)
    }

    pub fn terminal_reward(&self, x: &[f64], regime: usize) -> f64 {
        self.coeffs.terminal_reward(x, regime)
    }

    pub fn switch_cost(&self, x: &[f64], from: usize, to: usize) -> f64 {
        self.coeffs.switch_cost(x, from, to)
    }

    pub fn distance_to_domain(&self, x: &[f64]) -> f64 {
        self.domain.distance(x)
    }

    /// Hex SHA-256 of the model's identity (coefficients, domain, horizon).
    pub fn fingerprint(&self) -> String {
        let text = format!(
            "{}|d={}|m={}|T={:?}|{:?}|{:?}|{}",
            self.name,
            self.dim,
            self.regimes(),
            self.horizon,
            self.domain,
            self.constants,
            self.coeffs.describe()
        );
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// `(x, regime, out)`, writing a vector or matrix into `out`.
pub type FillFn = Box<dyn Fn(&[f64], usize, &mut [f64]) + Send + Sync>;
/// `(x, regime) -> value`.
pub type ScalarFn = Box<dyn Fn(&[f64], usize) -> f64 + Send + Sync>;
/// `(x, from, to) -> cost`.
pub type CostFn = Box<dyn Fn(&[f64], usize, usize) -> f64 + Send + Sync>;

/// Convenience for tests and bindings: a model whose coefficients are plain
/// closures.
pub struct ClosureCoefficients {
    pub label: String,
    pub dim: usize,
    pub drift: FillFn,
    pub volatility: FillFn,
    pub running: ScalarFn,
    pub terminal: ScalarFn,
    pub cost: CostFn,
}

impl fmt::Debug for ClosureCoefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClosureCoefficients")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

impl ClosureCoefficients {
    /// Zero dynamics, zero rewards and unit costs; override fields as needed.
    pub fn zero(label: impl Into<String>, dim: usize) -> Self {
        ClosureCoefficients {
            label: label.into(),
            dim,
            drift: Box::new(|_, _, out| out.fill(0.0)),
            volatility: Box::new(|_, _, out| out.fill(0.0)),
            running: Box::new(|_, _| 0.0),
            terminal: Box::new(|_, _| 0.0),
            cost: Box::new(|_, _, _| 1.0),
        }
    }
}

impl Coefficients for ClosureCoefficients {
    fn drift(&self, x: &[f64], regime: usize, out: &mut [f64]) {
        (self.drift)(x, regime, out)
    }
    fn volatility(&self, x: &[f64], regime: usize, out: &mut [f64]) {
        (self.volatility)(x, regime, out)
    }
    fn running_reward(&self, x: &[f64], regime: usize) -> f64 {
        (self.running)(x, regime)
    }
    fn terminal_reward(&self, x: &[f64], regime: usize) -> f64 {
        (self.terminal)(x, regime)
    }
    fn switch_cost(&self, x: &[f64], from: usize, to: usize) -> f64 {
        (self.cost)(x, from, to)
    }
    fn describe(&self) -> String {
        format!("closure:{}", self.label)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_regime_is_rejected() {
        assert!(RegimeSet::new(1).is_err());
        assert_eq!(RegimeSet::new(3).unwrap().count(), 3);
    }

    #[test]
    fn nonpositive_horizon_is_rejected() {
        let coeffs = Arc::new(ClosureCoefficients::zero("z", 1));
        let domain = ConstraintDomain::Box { lower: vec![0.0], upper: vec![1.0] };
        let consts = DeclaredConstants { lipschitz: 0.0, min_cost: 1.0 };
        let err = ModelSpec::new("z", 1, RegimeSet::new(2).unwrap(), 0.0, domain, consts, coeffs);
        assert!(err.unwrap_err().is_config());
    }

    #[test]
    fn fingerprint_tracks_parameters() {
        let a = Counterexample::new(1.0, 0.5).unwrap().spec();
        let b = Counterexample::new(1.0, 0.5).unwrap().spec();
        let c = Counterexample::new(1.0, 0.25).unwrap().spec();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
    }
}
