//! Penalized finite-difference solver for finite-horizon optimal switching
//! problems with a state constraint.
//!
//! A [`ModelSpec`] describes the regimes, coefficients, switching costs,
//! constraint domain and horizon. The constraint is replaced by penalized
//! rewards at a [`PenaltyLevel`], the resulting system of variational
//! inequalities is solved on a [`Grid`] by an explicit monotone scheme, and
//! the solved [`ValueField`] yields a [`SwitchingPolicy`] that can be
//! evaluated by Monte Carlo. The [`harness`] module checks solved fields
//! against closed-form and lattice oracles.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod export;
pub mod grid;
pub mod harness;
pub mod model;
pub mod oracle;
pub mod penalty;
pub mod simulate;
pub mod solver;

pub use error::{Error, Result};
pub use grid::{build_grid, cfl_timestep, Grid, GridSpec, NodeClass, ValueField};
pub use model::{
    builtin_counterexample, builtin_pumped_storage, check_h3_sufficient, load_model, parse_model,
    validate_model, ConstraintDomain, ModelSpec, PumpedStorageParams,
};
pub use oracle::{counterexample_value, lattice_dp, ExtValue, LatticeDp};
pub use penalty::{geometric_ladder, PenaltyLevel};
pub use simulate::{
    constraint_violation_rate, estimate_payoff, payoff_statistics, simulate_path, simulate_paths, simulate_paths_with, PathBundle, Recording,
};
pub use solver::{extract_policy, solve, Action, Scheme, SchemeParams, SwitchingPolicy};
