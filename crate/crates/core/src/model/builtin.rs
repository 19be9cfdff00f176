//! The two built-in instances: the discontinuous-value counterexample and a
//! hydroelectric pumped-storage model.

use std::sync::Arc;

use super::{Coefficients, ConstraintDomain, DeclaredConstants, ModelSpec, RegimeSet};
use crate::error::{Error, Result};
use crate::grid::GridSpec;

/// d = 2, m = 2. Regime 0 drifts the second coordinate down at unit speed,
/// regime 1 freezes the state; f ≡ 1, g ≡ 0, constant switching cost `c`,
/// and the state must keep `x₂ ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Counterexample {
    pub horizon: f64,
    pub cost: f64,
}

impl Counterexample {
    pub fn new(horizon: f64, cost: f64) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(Error::config(format!("horizon must be positive, got {horizon}")));
        }
        if !(cost > 0.0) {
            return Err(Error::config(format!("switching cost must be positive, got {cost}")));
        }
        Ok(Counterexample { horizon, cost })
    }

    pub fn domain() -> ConstraintDomain {
        ConstraintDomain::Box {
            lower: vec![f64::NEG_INFINITY, 0.0],
            upper: vec![f64::INFINITY, f64::INFINITY],
        }
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec::new(
            "counterexample",
            2,
            RegimeSet::new(2).expect("two regimes"),
            self.horizon,
            Self::domain(),
            DeclaredConstants { lipschitz: 0.0, min_cost: self.cost },
            Arc::new(*self),
        )
        .expect("counterexample parameters were checked in new()")
    }

    /// Truncation box [−1, 1] × [−0.5, 2] with 101 × 151 nodes, time steps at
    /// the stability bound.
    pub fn default_grid() -> GridSpec {
        GridSpec::new(vec![(-1.0, 1.0), (-0.5, 2.0)], vec![101, 151], None)
    }
}

impl Coefficients for Counterexample {
    fn drift(&self, _x: &[f64], regime: usize, out: &mut [f64]) {
        out[0] = 0.0;
        out[1] = if regime == 0 { -1.0 } else { 0.0 };
    }

    fn volatility(&self, _x: &[f64], _regime: usize, out: &mut [f64]) {
        out.fill(0.0);
    }

    fn running_reward(&self, _x: &[f64], _regime: usize) -> f64 {
        1.0
    }

    fn terminal_reward(&self, _x: &[f64], _regime: usize) -> f64 {
        0.0
    }

    fn switch_cost(&self, _x: &[f64], _from: usize, _to: usize) -> f64 {
        self.cost
    }

    fn describe(&self) -> String {
        format!("counterexample(T={:?},c={:?})", self.horizon, self.cost)
    }
}

/// Parameters of the pumped-storage model. The price follows an
/// Ornstein–Uhlenbeck diffusion `dP = κ(θ − P)dt + ξ dW`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpedStorageParams {
    pub horizon: f64,
    pub reversion: f64,
    pub mean_price: f64,
    pub price_vol: f64,
    pub switch_cost: f64,
}

impl Default for PumpedStorageParams {
    fn default() -> Self {
        PumpedStorageParams {
            horizon: 1.0,
            reversion: 1.0,
            mean_price: 10.0,
            price_vol: 2.0,
            switch_cost: 0.2,
        }
    }
}

/// State `(ℓ, p)`: reservoir level and electricity price. Regimes 0/1/2 are
/// pump/store/generate with level drift +1/0/−1; the running reward is the
/// cash flow `−p · μ_level`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpedStorage {
    pub level_max: f64,
    pub params: PumpedStorageParams,
    pub initial_level: f64,
    pub initial_price: f64,
}

pub const PUMP: usize = 0;
pub const STORE: usize = 1;
pub const GENERATE: usize = 2;

impl PumpedStorage {
    pub fn new(
        level_max: f64,
        params: PumpedStorageParams,
        initial_level: f64,
        initial_price: f64,
    ) -> Result<Self> {
        if !(level_max > 0.0 && level_max.is_finite()) {
            return Err(Error::config(format!("level_max must be positive, got {level_max}")));
        }
        if !(0.0..=level_max).contains(&initial_level) {
            return Err(Error::config(format!(
                "initial level {initial_level} outside [0, {level_max}]"
            )));
        }
        let p = &params;
        if !(p.horizon > 0.0) || !(p.switch_cost > 0.0) || p.reversion < 0.0 || p.price_vol < 0.0 {
            return Err(Error::config(format!("invalid pumped-storage parameters {p:?}")));
        }
        if !initial_price.is_finite() || !p.mean_price.is_finite() {
            return Err(Error::config("prices must be finite"));
        }
        Ok(PumpedStorage { level_max, params, initial_level, initial_price })
    }

    pub fn level_drift(regime: usize) -> f64 {
        match regime {
            PUMP => 1.0,
            STORE => 0.0,
            _ => -1.0,
        }
    }

    pub fn spec(&self) -> ModelSpec {
        let domain = ConstraintDomain::Box {
            lower: vec![0.0, f64::NEG_INFINITY],
            upper: vec![self.level_max, f64::INFINITY],
        };
        ModelSpec::new(
            "pumped_storage",
            2,
            RegimeSet::new(3).expect("three regimes"),
            self.params.horizon,
            domain,
            DeclaredConstants {
                lipschitz: self.params.reversion.max(1.0),
                min_cost: self.params.switch_cost,
            },
            Arc::new(*self),
        )
        .expect("pumped-storage parameters were checked in new()")
    }

    pub fn initial_state(&self) -> [f64; 2] {
        [self.initial_level, self.initial_price]
    }

    /// Level [−0.5, ℓ_max + 0.5] × price [θ − 10, θ + 10], 41 × 81 nodes.
    pub fn default_grid(&self) -> GridSpec {
        let theta = self.params.mean_price;
        GridSpec::new(
            vec![(-0.5, self.level_max + 0.5), (theta - 10.0, theta + 10.0)],
            vec![41, 81],
            None,
        )
    }
}

impl Coefficients for PumpedStorage {
    fn drift(&self, x: &[f64], regime: usize, out: &mut [f64]) {
        out[0] = Self::level_drift(regime);
        out[1] = self.params.reversion * (self.params.mean_price - x[1]);
    }

    fn volatility(&self, _x: &[f64], _regime: usize, out: &mut [f64]) {
        // only the price row is driven by noise
        out.fill(0.0);
        out[3] = self.params.price_vol;
    }

    fn running_reward(&self, x: &[f64], regime: usize) -> f64 {
        -x[1] * Self::level_drift(regime)
    }

    fn terminal_reward(&self, _x: &[f64], _regime: usize) -> f64 {
        0.0
    }

    fn switch_cost(&self, _x: &[f64], _from: usize, _to: usize) -> f64 {
        self.params.switch_cost
    }

    fn describe(&self) -> String {
        format!("pumped_storage(lmax={:?},{:?})", self.level_max, self.params)
    }
}

/// Counterexample instance for horizon `horizon` and switching cost `cost`.
pub fn builtin_counterexample(horizon: f64, cost: f64) -> Result<ModelSpec> {
    Ok(Counterexample::new(horizon, cost)?.spec())
}

/// Pumped-storage instance; `initial_level`/`initial_price` are kept for
/// simulation defaults.
pub fn builtin_pumped_storage(
    level_max: f64,
    params: PumpedStorageParams,
    initial_level: f64,
    initial_price: f64,
) -> Result<ModelSpec> {
    Ok(PumpedStorage::new(level_max, params, initial_level, initial_price)?.spec())
}
