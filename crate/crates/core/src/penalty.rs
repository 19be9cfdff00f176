//! Penalized rewards for the unconstrained approximation of the
//! state-constrained problem.
//!
//! With `Θ_n(x) = n·d(x, D) ∧ 1`, the penalized rewards are
//! `f_n = f − n·Θ_n` and `g_n = g − n·Θ_n`. They coincide with `f`, `g` on the
//! domain and decrease pointwise in `n`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ConstraintDomain, ModelSpec};

/// Penalty parameter `n ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct PenaltyLevel(u32);

impl PenaltyLevel {
    pub fn new(n: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("penalty level must be at least 1"));
        }
        Ok(PenaltyLevel(n))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    fn as_f64(self) -> f64 {
        f64::from(self.0)
    }
}

/// Geometric ladder 1, 2, 4, …, 2^k.
pub fn geometric_ladder(k: u32) -> Vec<PenaltyLevel> {
    (0..=k).map(|e| PenaltyLevel(1 << e)).collect()
}

pub fn dist_to_domain(domain: &ConstraintDomain, x: &[f64]) -> f64 {
    domain.distance(x)
}

/// `Θ_n` for a precomputed distance.
pub fn theta_from_distance(n: PenaltyLevel, distance: f64) -> f64 {
    (n.as_f64() * distance).min(1.0)
}

/// `n·Θ_n` for a precomputed distance: the amount subtracted from rewards.
pub fn penalty_from_distance(n: PenaltyLevel, distance: f64) -> f64 {
    n.as_f64() * theta_from_distance(n, distance)
}

pub fn theta(n: PenaltyLevel, domain: &ConstraintDomain, x: &[f64]) -> f64 {
    theta_from_distance(n, domain.distance(x))
}

pub fn penalized_running(spec: &ModelSpec, n: PenaltyLevel, x: &[f64], regime: usize) -> f64 {
    spec.running_reward(x, regime) - penalty_from_distance(n, spec.distance_to_domain(x))
}

pub fn penalized_terminal(spec: &ModelSpec, n: PenaltyLevel, x: &[f64], regime: usize) -> f64 {
    spec.terminal_reward(x, regime) - penalty_from_distance(n, spec.distance_to_domain(x))
}
