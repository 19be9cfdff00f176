//! Euler–Maruyama simulation of the controlled diffusion under a feedback
//! switching policy.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::solver::{Action, SwitchingPolicy};

/// One switch: time, regime left, regime entered, cost paid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SwitchEvent {
    pub t: f64,
    pub from: usize,
    pub to: usize,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<f64>,
    pub regime: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub samples: Vec<Sample>,
    pub switches: Vec<SwitchEvent>,
    pub running: f64,
    pub terminal: f64,
    pub costs: f64,
    /// Some sample lay outside the constraint domain.
    pub violated: bool,
    pub max_excursion: f64,
    /// The path left the policy grid and was stopped.
    pub escaped: bool,
}

impl SamplePath {
    /// `terminal + running − costs`.
    pub fn payoff(&self) -> f64 {
        self.terminal + self.running - self.costs
    }
}

/// Paths simulated from one start with one seed; path `j` draws from
/// stream `j` of the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub seed: u64,
    pub dt_sim: f64,
    pub paths: Vec<SamplePath>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PayoffEstimate {
    pub mean: f64,
    pub std_error: f64,
    /// Paths that reached the horizon and enter the estimate.
    pub paths: usize,
    pub escaped: usize,
}

/// What a simulated path keeps besides its payoff bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Recording {
    /// Every sample.
    #[default]
    Full,
    /// The first and last sample only.
    Endpoints,
}

/// Default simulation step: a quarter of the policy grid's time step.
pub fn default_dt_sim(policy: &SwitchingPolicy) -> f64 {
    policy.grid().dt() / 4.0
}

fn rng_for(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

fn check_start(spec: &ModelSpec, policy: &SwitchingPolicy, t0: f64, x0: &[f64], i0: usize, dt_sim: f64) -> Result<()> {
    if x0.len() != spec.dim() {
        return Err(Error::config(format!("start point has {} coordinates, the model has {}", x0.len(), spec.dim())));
    }
    if i0 >= spec.regimes() {
        return Err(Error::config(format!("start regime {} does not exist", i0 + 1)));
    }
    if policy.regimes() != spec.regimes() {
        return Err(Error::config("policy and model have different regime counts"));
    }
    if !(dt_sim > 0.0 && dt_sim.is_finite()) {
        return Err(Error::config(format!("simulation step must be positive, got {dt_sim}")));
    }
    let grid = policy.grid();
    if !(0.0..=grid.horizon()).contains(&t0) || grid.interpolation_weights(x0).is_none() {
        return Err(Error::Extrapolation { t: t0, x: x0.to_vec() });
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_path(
    spec: &ModelSpec,
    policy: &SwitchingPolicy,
    t0: f64,
    x0: &[f64],
    i0: usize,
    dt_sim: f64,
    recording: Recording,
    rng: &mut ChaCha8Rng,
) -> SamplePath {
    let grid = policy.grid();
    let d = spec.dim();
    let m = spec.regimes();
    let horizon = grid.horizon();
    let steps = ((horizon - t0) / dt_sim - 1e-9).ceil().max(0.0) as usize;
    let mut path = SamplePath {
        samples: vec![Sample { t: t0, x: x0.to_vec(), regime: i0 }],
        switches: Vec::new(),
        running: 0.0,
        terminal: 0.0,
        costs: 0.0,
        violated: false,
        max_excursion: 0.0,
        escaped: false,
    };
    let mut x = x0.to_vec();
    let mut regime = i0;
    let mut noise = vec![0.0; d];
    let note_position = |path: &mut SamplePath, x: &[f64]| {
        let dist = spec.distance_to_domain(x);
        if dist > 0.0 {
            path.violated = true;
            path.max_excursion = path.max_excursion.max(dist);
        }
    };
    note_position(&mut path, &x);

    let apply_policy = |path: &mut SamplePath, t: f64, x: &[f64], regime: &mut usize| -> bool {
        let (Some(level), Some(node)) = (grid.level_at(t), grid.nearest_node(x)) else {
            return false;
        };
        for _ in 1..m {
            match policy.action(level, node, *regime) {
                Action::Keep => break,
                Action::SwitchTo(j) => {
                    let cost = spec.switch_cost(x, *regime, j);
                    path.switches.push(SwitchEvent { t, from: *regime, to: j, cost });
                    path.costs += cost;
                    *regime = j;
                }
            }
        }
        true
    };

    for k in 0..steps {
        let t = t0 + k as f64 * dt_sim;
        let h = if k + 1 == steps { horizon - t } else { dt_sim };
        if !apply_policy(&mut path, t, &x, &mut regime) {
            path.escaped = true;
            return path;
        }
        path.running += spec.running_reward(&x, regime) * h;
        let mu = spec.drift(&x, regime);
        let sigma = spec.volatility(&x, regime);
        for z in noise.iter_mut() {
            *z = StandardNormal.sample(rng);
        }
        let sq = h.sqrt();
        let mut next = x.clone();
        for r in 0..d {
            let diffusion: f64 = (0..d).map(|c| sigma[r * d + c] * noise[c]).sum();
            next[r] += mu[r] * h + diffusion * sq;
        }
        x = next;
        let t_next = if k + 1 == steps { horizon } else { t0 + (k + 1) as f64 * dt_sim };
        if recording == Recording::Full || k + 1 == steps {
            path.samples.push(Sample { t: t_next, x: x.clone(), regime });
        }
        note_position(&mut path, &x);
    }
    if !apply_policy(&mut path, horizon, &x, &mut regime) {
        path.escaped = true;
        return path;
    }
    if let Some(last) = path.samples.last_mut() {
        last.regime = regime;
    }
    path.terminal = spec.terminal_reward(&x, regime);
    path
}

/// One path from `(t0, x0, i0)` on stream 0 of `seed`.
pub fn simulate_path(
    spec: &ModelSpec,
    policy: &SwitchingPolicy,
    t0: f64,
    x0: &[f64],
    i0: usize,
    dt_sim: f64,
    seed: u64,
) -> Result<SamplePath> {
    check_start(spec, policy, t0, x0, i0, dt_sim)?;
    Ok(run_path(spec, policy, t0, x0, i0, dt_sim, Recording::Full, &mut rng_for(seed, 0)))
}

/// `count` independent paths, simulated in parallel.
#[allow(clippy::too_many_arguments)]
pub fn simulate_paths(
    spec: &ModelSpec,
    policy: &SwitchingPolicy,
    t0: f64,
    x0: &[f64],
    i0: usize,
    count: usize,
    dt_sim: f64,
    seed: u64,
) -> Result<PathBundle> {
    simulate_paths_with(spec, policy, t0, x0, i0, count, dt_sim, seed, Recording::Full)
}

/// [`simulate_paths`] with a choice of what each path keeps.
#[allow(clippy::too_many_arguments)]
pub fn simulate_paths_with(
    spec: &ModelSpec,
    policy: &SwitchingPolicy,
    t0: f64,
    x0: &[f64],
    i0: usize,
    count: usize,
    dt_sim: f64,
    seed: u64,
    recording: Recording,
) -> Result<PathBundle> {
    check_start(spec, policy, t0, x0, i0, dt_sim)?;
    if count == 0 {
        return Err(Error::config("path count must be positive"));
    }
    let paths = (0..count)
        .into_par_iter()
        .map(|j| run_path(spec, policy, t0, x0, i0, dt_sim, recording, &mut rng_for(seed, j as u64)))
        .collect();
    Ok(PathBundle { seed, dt_sim, paths })
}

/// Sample mean and standard error of the payoff over the paths that reached
/// the horizon.
pub fn payoff_statistics(bundle: &PathBundle) -> PayoffEstimate {
    let payoffs: Vec<f64> = bundle.paths.iter().filter(|p| !p.escaped).map(SamplePath::payoff).collect();
    let escaped = bundle.paths.len() - payoffs.len();
    let n = payoffs.len();
    if n == 0 {
        return PayoffEstimate { mean: f64::NAN, std_error: f64::NAN, paths: 0, escaped };
    }
    let shift = payoffs[0];
    let sum: f64 = payoffs.iter().map(|p| p - shift).sum();
    let sum_sq: f64 = payoffs.iter().map(|p| (p - shift) * (p - shift)).sum();
    let mean = shift + sum / n as f64;
    let std_error = if n > 1 {
        let var = ((sum_sq - sum * sum / n as f64) / (n - 1) as f64).max(0.0);
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    PayoffEstimate { mean, std_error, paths: n, escaped }
}

/// Monte Carlo estimate of the payoff of `policy` from `(t0, x0, i0)`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_payoff(
    spec: &ModelSpec,
    policy: &SwitchingPolicy,
    t0: f64,
    x0: &[f64],
    i0: usize,
    count: usize,
    dt_sim: f64,
    seed: u64,
) -> Result<PayoffEstimate> {
    if count < 2 {
        return Err(Error::config(format!("need at least 2 paths for a standard error, got {count}")));
    }
    let bundle = simulate_paths_with(spec, policy, t0, x0, i0, count, dt_sim, seed, Recording::Endpoints)?;
    Ok(payoff_statistics(&bundle))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ViolationStats {
    pub rate: f64,
    pub max_excursion: f64,
}

/// Fraction of paths with a sample outside the domain and the largest
/// distance to the domain over all samples.
pub fn constraint_violation_rate(bundle: &PathBundle) -> ViolationStats {
    let n = bundle.paths.len().max(1);
    let violated = bundle.paths.iter().filter(|p| p.violated).count();
    let max_excursion = bundle.paths.iter().map(|p| p.max_excursion).fold(0.0, f64::max);
    ViolationStats { rate: violated as f64 / n as f64, max_excursion }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::grid::{build_grid, GridSpec};
    use crate::model::{builtin_counterexample, ClosureCoefficients, ConstraintDomain, DeclaredConstants, RegimeSet};
    use crate::penalty::PenaltyLevel;
    use crate::solver::{extract_policy, solve, SchemeParams};

    fn counterexample_policy() -> (ModelSpec, SwitchingPolicy) {
        let spec = builtin_counterexample(1.0, 0.5).unwrap();
        let grid = Arc::new(build_grid(&spec, &GridSpec::new(vec![(-1.0, 1.0), (-0.5, 2.5)], vec![5, 181], None)).unwrap());
        let field = solve(&spec, PenaltyLevel::new(64).unwrap(), grid, SchemeParams::default()).unwrap();
        let policy = extract_policy(&field, &spec, 1e-12);
        (spec, policy)
    }

    /// Regime 0 never switches: its values are far above regime 1.
    fn keep_only_policy(spec: &ModelSpec) -> SwitchingPolicy {
        let grid = Arc::new(build_grid(spec, &GridSpec::new(vec![(-1.0, 1.0), (-1.5, 2.5)], vec![5, 41], Some(20))).unwrap());
        let len = grid.node_count() * 2 * 21;
        let values: Vec<f64> = (0..len).map(|e| if e % 2 == 0 { 100.0 } else { 0.0 }).collect();
        let field = crate::grid::ValueField::new(grid, spec, PenaltyLevel::new(1).unwrap(), values).unwrap();
        extract_policy(&field, spec, 1e-12)
    }

    #[test]
    fn counterexample_path_above_front() {
        let (spec, policy) = counterexample_policy();
        let path = simulate_path(&spec, &policy, 0.0, &[0.0, 2.0], 0, default_dt_sim(&policy), 7).unwrap();
        assert!(path.switches.is_empty());
        assert!((path.payoff() - 1.0).abs() < 1e-12);
        assert!((path.samples.last().unwrap().x[1] - 1.0).abs() < 1e-12);
        assert!(!path.violated);
    }

    #[test]
    fn counterexample_path_below_front() {
        let (spec, policy) = counterexample_policy();
        let path = simulate_path(&spec, &policy, 0.0, &[0.0, 0.2], 0, default_dt_sim(&policy), 7).unwrap();
        assert_eq!(path.switches.len(), 1);
        assert_eq!((path.switches[0].from, path.switches[0].to), (0, 1));
        assert!((path.payoff() - 0.5).abs() < 1e-12);
        assert!(!path.violated);
        let bundle = simulate_paths(&spec, &policy, 0.0, &[0.0, 0.2], 0, 4, default_dt_sim(&policy), 1).unwrap();
        assert_eq!(constraint_violation_rate(&bundle).rate, 0.0);
    }

    #[test]
    fn keep_only_policy_exits() {
        let spec = builtin_counterexample(1.0, 0.5).unwrap();
        let policy = keep_only_policy(&spec);
        let bundle = simulate_paths(&spec, &policy, 0.0, &[0.0, 0.2], 0, 3, 0.01, 3).unwrap();
        let stats = constraint_violation_rate(&bundle);
        assert_eq!(stats.rate, 1.0);
        assert!((stats.max_excursion - 0.8).abs() < 1e-9);
    }

    #[test]
    fn constant_reward_quadrature() {
        let mut c = ClosureCoefficients::zero("accrual", 1);
        c.running = Box::new(|_, _| 1.0);
        c.cost = Box::new(|_, _, _| 1e6);
        let spec = ModelSpec::new(
            "accrual",
            1,
            RegimeSet::new(2).unwrap(),
            1.0,
            ConstraintDomain::Box { lower: vec![0.0], upper: vec![1.0] },
            DeclaredConstants { lipschitz: 0.0, min_cost: 1e6 },
            Arc::new(c),
        )
        .unwrap();
        let grid = Arc::new(build_grid(&spec, &GridSpec::new(vec![(-0.5, 1.5)], vec![5], Some(4))).unwrap());
        let field = solve(&spec, PenaltyLevel::new(2).unwrap(), grid, SchemeParams::default()).unwrap();
        let policy = extract_policy(&field, &spec, 1e-12);
        let est = estimate_payoff(&spec, &policy, 0.3, &[0.5], 1, 5, 0.07, 9).unwrap();
        assert!((est.mean - 0.7).abs() < 1e-12);
        assert_eq!(est.std_error, 0.0);
        assert_eq!(est.escaped, 0);
    }

    #[test]
    fn deterministic_model_has_zero_error() {
        let (spec, policy) = counterexample_policy();
        let est = estimate_payoff(&spec, &policy, 0.0, &[0.0, 2.0], 0, 16, default_dt_sim(&policy), 5).unwrap();
        assert!((est.mean - 1.0).abs() < 1e-12);
        assert_eq!(est.std_error, 0.0);
        assert!(estimate_payoff(&spec, &policy, 0.0, &[0.0, 2.0], 0, 1, 0.01, 5).unwrap_err().is_config());
    }

    #[test]
    fn seeded_paths_reproduce() {
        let (spec, policy) = counterexample_policy();
        let a = simulate_paths(&spec, &policy, 0.0, &[0.1, 0.4], 0, 8, 0.01, 11).unwrap();
        let b = simulate_paths(&spec, &policy, 0.0, &[0.1, 0.4], 0, 8, 0.01, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn start_outside_grid_is_rejected() {
        let (spec, policy) = counterexample_policy();
        let err = simulate_path(&spec, &policy, 0.0, &[5.0, 0.4], 0, 0.01, 1).unwrap_err();
        assert!(matches!(err, Error::Extrapolation { .. }));
    }
}
