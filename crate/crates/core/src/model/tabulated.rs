//! Coefficients given as per-regime tables: affine drift, constant
//! volatility, affine rewards and a constant cost matrix.

use super::Coefficients;
use crate::error::{Error, Result};

/// `constant + gradient · x`; an empty gradient means zero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AffineReward {
    pub constant: f64,
    pub gradient: Vec<f64>,
}

impl AffineReward {
    pub fn constant(value: f64) -> Self {
        AffineReward { constant: value, gradient: Vec::new() }
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.gradient.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedRegime {
    /// Constant part of the drift.
    pub drift: Vec<f64>,
    /// Optional row-major d×d matrix A in μ(x) = drift + A x.
    pub drift_linear: Option<Vec<f64>>,
    /// Row-major d×d.
    pub volatility: Vec<f64>,
    pub running: AffineReward,
    pub terminal: AffineReward,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tabulated {
    dim: usize,
    regimes: Vec<TabulatedRegime>,
    /// Row-major m×m; the diagonal is ignored.
    costs: Vec<f64>,
}

impl Tabulated {
    pub fn new(dim: usize, regimes: Vec<TabulatedRegime>, costs: Vec<f64>) -> Result<Self> {
        let m = regimes.len();
        if costs.len() != m * m {
            return Err(Error::config(format!("cost table must be {m}×{m}")));
        }
        for (i, r) in regimes.iter().enumerate() {
            let ok = r.drift.len() == dim
                && r.volatility.len() == dim * dim
                && r.drift_linear.as_ref().is_none_or(|a| a.len() == dim * dim)
                && (r.running.gradient.is_empty() || r.running.gradient.len() == dim)
                && (r.terminal.gradient.is_empty() || r.terminal.gradient.len() == dim);
            if !ok {
                return Err(Error::config(format!(
                    "regime {} table has the wrong shape for dimension {dim}",
                    i + 1
                )));
            }
        }
        Ok(Tabulated { dim, regimes, costs })
    }

    pub fn regime_count(&self) -> usize {
        self.regimes.len()
    }
}

impl Coefficients for Tabulated {
    fn drift(&self, x: &[f64], regime: usize, out: &mut [f64]) {
        let r = &self.regimes[regime];
        out.copy_from_slice(&r.drift);
        if let Some(a) = &r.drift_linear {
            for (row, o) in out.iter_mut().enumerate() {
                *o += (0..self.dim).map(|c| a[row * self.dim + c] * x[c]).sum::<f64>();
            }
        }
    }

    fn volatility(&self, _x: &[f64], regime: usize, out: &mut [f64]) {
        out.copy_from_slice(&self.regimes[regime].volatility);
    }

    fn running_reward(&self, x: &[f64], regime: usize) -> f64 {
        self.regimes[regime].running.eval(x)
    }

    fn terminal_reward(&self, x: &[f64], regime: usize) -> f64 {
        self.regimes[regime].terminal.eval(x)
    }

    fn switch_cost(&self, _x: &[f64], from: usize, to: usize) -> f64 {
        self.costs[from * self.regimes.len() + to]
    }

    fn describe(&self) -> String {
        format!("tabulated({:?},{:?})", self.regimes, self.costs)
    }
}
