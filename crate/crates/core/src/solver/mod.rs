//! Explicit monotone scheme for the penalized system of variational
//! inequalities
//!
//! ```text
//! min[−∂_t v − 𝓛v − f_n, v − 𝓗v] = 0   on [0, T) × ℝᵈ × 𝓘
//! min[v − g_n, v − 𝓗v] = 0             at t = T
//! ```
//!
//! Each backward step applies an upwind explicit update for the generator
//! and then projects onto the switching obstacle `v ≥ 𝓗v`.

mod envelope;
mod policy;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use envelope::switching_envelope;
pub use policy::{extract_policy, Action, SwitchingPolicy};

use crate::error::{Error, Result};
use crate::grid::{Grid, ValueField};
use crate::model::ModelSpec;
use crate::penalty::{penalty_from_distance, PenaltyLevel};

/// Slack allowed on `dt` against the stability bound (rounding only).
const CFL_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeParams {
    /// Tolerance ε_obs of the obstacle projection and of policy extraction.
    pub obstacle_tol: f64,
    /// Improving projection sweeps allowed per node; `None` means m − 1.
    pub max_sweeps: Option<usize>,
}

impl Default for SchemeParams {
    fn default() -> Self {
        SchemeParams { obstacle_tol: 1e-12, max_sweeps: None }
    }
}

/// Generator weights at one node: `𝓛v(x) ≈ center·v(x) + Σ w·v(neighbor)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    pub center: f64,
    pub neighbors: Vec<(usize, f64)>,
}

/// Upwind first differences for the drift, central second differences for
/// the diagonal of σσᵀ and the 7-point monotone stencil for cross terms.
/// Differences that would reach past a truncation face are dropped (the
/// missing neighbor is replaced by the node itself).
pub fn build_stencil(spec: &ModelSpec, grid: &Grid, node: usize, regime: usize) -> Result<Stencil> {
    let d = spec.dim();
    let x = grid.coordinates(node);
    let mu = spec.drift(&x, regime);
    let a = spec.diffusion(&x, regime);
    let h = grid.spacing();
    let mut center = 0.0;
    let mut nbrs: Vec<(usize, f64)> = Vec::with_capacity(4 * d);
    let mut add = |target: Option<usize>, w: f64| {
        if w == 0.0 {
            return;
        }
        if let Some(t) = target {
            center -= w;
            match nbrs.iter_mut().find(|(n, _)| *n == t) {
                Some(e) => e.1 += w,
                None => nbrs.push((t, w)),
            }
        }
    };
    for k in 0..d {
        if mu[k] > 0.0 {
            add(grid.neighbor(node, k, 1), mu[k] / h[k]);
        } else if mu[k] < 0.0 {
            add(grid.neighbor(node, k, -1), -mu[k] / h[k]);
        }
        let half = a[k * d + k] / (2.0 * h[k] * h[k]);
        add(grid.neighbor(node, k, 1), half);
        add(grid.neighbor(node, k, -1), half);
    }
    for k in 0..d {
        for l in k + 1..d {
            let akl = 0.5 * (a[k * d + l] + a[l * d + k]);
            if akl == 0.0 {
                continue;
            }
            let w = akl.abs() / (2.0 * h[k] * h[l]);
            let s: isize = if akl > 0.0 { 1 } else { -1 };
            let diag = |sk: isize, sl: isize| grid.neighbor(node, k, sk).and_then(|n| grid.neighbor(n, l, sl));
            add(diag(1, s), w);
            add(diag(-1, -s), w);
            add(grid.neighbor(node, k, 1), -w);
            add(grid.neighbor(node, k, -1), -w);
            add(grid.neighbor(node, l, 1), -w);
            add(grid.neighbor(node, l, -1), -w);
        }
    }
    let scale: f64 = nbrs.iter().map(|(_, w)| w.abs()).sum::<f64>().max(1.0);
    if let Some((_, w)) = nbrs.iter().find(|(_, w)| *w < -1e-12 * scale) {
        return Err(Error::config(format!(
            "cross-diffusion at {x:?} (regime {}) is not diagonally dominant: neighbor weight {w}",
            regime + 1
        )));
    }
    for e in &mut nbrs {
        e.1 = e.1.max(0.0);
    }
    nbrs.retain(|(_, w)| *w != 0.0);
    Ok(Stencil { center, neighbors: nbrs })
}

/// Discrete `𝓛v = μᵀDv + ½tr[σσᵀD²v]` at `node` for regime `regime`;
/// `level_values` is laid out `[node * m + regime]`.
pub fn generator_apply(
    spec: &ModelSpec,
    grid: &Grid,
    level_values: &[f64],
    node: usize,
    regime: usize,
) -> Result<f64> {
    let m = spec.regimes();
    let s = build_stencil(spec, grid, node, regime)?;
    Ok(s.center * level_values[node * m + regime]
        + s.neighbors.iter().map(|&(n, w)| w * level_values[n * m + regime]).sum::<f64>())
}

/// The assembled scheme for one model, penalty level and grid: transition
/// weights of the explicit step, penalized rewards and switching costs at
/// every node.
#[derive(Debug, Clone)]
pub struct Scheme {
    grid: Arc<Grid>,
    regimes: usize,
    dt: f64,
    params: SchemeParams,
    penalty: PenaltyLevel,
    // per (node, regime), laid out node * m + regime
    stay: Vec<f64>,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    weights: Vec<f64>,
    running: Vec<f64>,
    terminal: Vec<f64>,
    // per node, row-major m×m
    costs: Vec<f64>,
}

struct NodeData {
    stay: Vec<f64>,
    moves: Vec<Vec<(u32, f64)>>,
    running: Vec<f64>,
    terminal: Vec<f64>,
    costs: Vec<f64>,
}

impl Scheme {
    pub fn new(spec: &ModelSpec, n: PenaltyLevel, grid: Arc<Grid>, params: SchemeParams) -> Result<Self> {
        let m = spec.regimes();
        let dt = grid.dt();
        if dt > grid.cfl_bound() * (1.0 + CFL_SLACK) {
            return Err(Error::CflViolated { dt, bound: grid.cfl_bound() });
        }
        if !(params.obstacle_tol >= 0.0) {
            return Err(Error::config("obstacle tolerance must be nonnegative"));
        }
        let per_node: Vec<NodeData> = (0..grid.node_count())
            .into_par_iter()
            .map(|node| -> Result<NodeData> {
                let x = grid.coordinates(node);
                let pen = penalty_from_distance(n, grid.distance(node));
                let mut data = NodeData {
                    stay: Vec::with_capacity(m),
                    moves: Vec::with_capacity(m),
                    running: Vec::with_capacity(m),
                    terminal: Vec::with_capacity(m),
                    costs: vec![0.0; m * m],
                };
                for i in 0..m {
                    let s = build_stencil(spec, &grid, node, i)?;
                    let mut stay = 1.0 + dt * s.center;
                    if stay < 0.0 {
                        if stay < -1e-12 {
                            return Err(Error::CflViolated { dt, bound: grid.cfl_bound() });
                        }
                        stay = 0.0;
                    }
                    data.stay.push(stay);
                    data.moves.push(s.neighbors.iter().map(|&(t, w)| (t as u32, dt * w)).collect());
                    data.running.push(spec.running_reward(&x, i) - pen);
                    data.terminal.push(spec.terminal_reward(&x, i) - pen);
                    for j in (0..m).filter(|&j| j != i) {
                        data.costs[i * m + j] = spec.switch_cost(&x, i, j);
                    }
                }
                Ok(data)
            })
            .collect::<Result<_>>()?;

        let mut scheme = Scheme {
            grid,
            regimes: m,
            dt,
            params,
            penalty: n,
            stay: Vec::new(),
            offsets: vec![0],
            targets: Vec::new(),
            weights: Vec::new(),
            running: Vec::new(),
            terminal: Vec::new(),
            costs: Vec::new(),
        };
        for data in per_node {
            scheme.stay.extend(data.stay);
            for moves in data.moves {
                for (t, w) in moves {
                    scheme.targets.push(t);
                    scheme.weights.push(w);
                }
                scheme.offsets.push(scheme.targets.len());
            }
            scheme.running.extend(data.running);
            scheme.terminal.extend(data.terminal);
            scheme.costs.extend(data.costs);
        }
        Ok(scheme)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn regimes(&self) -> usize {
        self.regimes
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn penalty(&self) -> PenaltyLevel {
        self.penalty
    }

    pub fn params(&self) -> SchemeParams {
        self.params
    }

    /// c(x_node, from, to) as assembled.
    pub fn switch_cost(&self, node: usize, from: usize, to: usize) -> f64 {
        let m = self.regimes;
        self.costs[node * m * m + from * m + to]
    }

    /// Penalized running reward f_n at a node.
    pub fn running(&self, node: usize, regime: usize) -> f64 {
        self.running[node * self.regimes + regime]
    }

    /// Transition weights of the explicit step out of `(node, regime)`:
    /// the weight on the node itself and on each neighbor. They are
    /// nonnegative and sum to one.
    pub fn transitions(&self, node: usize, regime: usize) -> (f64, Vec<(usize, f64)>) {
        let e = node * self.regimes + regime;
        let moves = (self.offsets[e]..self.offsets[e + 1])
            .map(|k| (self.targets[k] as usize, self.weights[k]))
            .collect();
        (self.stay[e], moves)
    }

    fn max_sweeps(&self) -> usize {
        self.params.max_sweeps.unwrap_or(self.regimes - 1)
    }

    /// Explicit update without the obstacle: the value of keeping the
    /// current regime over one step, `ṽ = v + Δt(𝓛v + f_n)`.
    pub fn keep_step(&self, next: &[f64]) -> Vec<f64> {
        let m = self.regimes;
        let mut out = vec![0.0; next.len()];
        out.par_chunks_mut(m).enumerate().for_each(|(node, vals)| {
            for (i, v) in vals.iter_mut().enumerate() {
                let e = node * m + i;
                let mut acc = self.stay[e] * next[e];
                for k in self.offsets[e]..self.offsets[e + 1] {
                    acc += self.weights[k] * next[self.targets[k] as usize * m + i];
                }
                *v = acc + self.dt * self.running[e];
            }
        });
        out
    }

    /// Projects every node onto `v ≥ 𝓗v` in place.
    pub fn project(&self, level: &mut [f64]) -> Result<()> {
        let m = self.regimes;
        let tol = self.params.obstacle_tol;
        let sweeps = self.max_sweeps();
        let failed = level
            .par_chunks_mut(m)
            .enumerate()
            .filter_map(|(node, vals)| {
                let costs = &self.costs[node * m * m..(node + 1) * m * m];
                (!envelope::project_node(vals, costs, tol, sweeps)).then_some(node)
            })
            .min();
        match failed {
            None => Ok(()),
            Some(node) => Err(Error::Internal(format!(
                "switching projection did not stabilize in {sweeps} sweeps at node {node} ({:?}); \
                 some switching cost is not positive",
                self.grid.coordinates(node)
            ))),
        }
    }

    fn check_finite(&self, level_index: usize, level: &[f64]) -> Result<()> {
        match level.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(e) => {
                let node = e / self.regimes;
                Err(Error::Divergence {
                    level: level_index,
                    node,
                    x: self.grid.coordinates(node),
                    regime: e % self.regimes,
                })
            }
        }
    }

    /// Terminal level: the least fixed point of `v = max(g_n, 𝓗v)`.
    pub fn terminal_level(&self) -> Result<Vec<f64>> {
        let mut level = self.terminal.clone();
        self.project(&mut level)?;
        self.check_finite(self.grid.time_steps(), &level)?;
        Ok(level)
    }

    /// Level `k` from level `k + 1`: explicit update, then projection.
    pub fn step(&self, level_index: usize, next: &[f64]) -> Result<Vec<f64>> {
        let mut level = self.keep_step(next);
        self.project(&mut level)?;
        self.check_finite(level_index, &level)?;
        Ok(level)
    }
}

/// Terminal values `[node * m + regime]` for penalty level `n`.
pub fn terminal_condition(spec: &ModelSpec, n: PenaltyLevel, grid: Arc<Grid>, params: SchemeParams) -> Result<Vec<f64>> {
    Scheme::new(spec, n, grid, params)?.terminal_level()
}

/// One backward step from `v_next` (values at `t + Δt`).
pub fn backward_step(
    spec: &ModelSpec,
    n: PenaltyLevel,
    grid: Arc<Grid>,
    v_next: &[f64],
    params: SchemeParams,
) -> Result<Vec<f64>> {
    let scheme = Scheme::new(spec, n, grid, params)?;
    scheme.step(scheme.grid.time_steps().saturating_sub(1), v_next)
}

/// Runs the scheme from the terminal level down to t = 0.
pub fn solve_with(scheme: &Scheme, spec: &ModelSpec) -> Result<ValueField> {
    let grid = Arc::clone(&scheme.grid);
    let steps = grid.time_steps();
    let len = grid.node_count() * scheme.regimes;
    let mut values = vec![0.0; (steps + 1) * len];
    let terminal = scheme.terminal_level()?;
    values[steps * len..].copy_from_slice(&terminal);
    for k in (0..steps).rev() {
        let (head, tail) = values.split_at_mut((k + 1) * len);
        let level = scheme.step(k, &tail[..len])?;
        head[k * len..].copy_from_slice(&level);
    }
    ValueField::new(grid, spec, scheme.penalty, values)
}

/// Solves the penalized problem at level `n` on `grid`.
pub fn solve(spec: &ModelSpec, n: PenaltyLevel, grid: Arc<Grid>, params: SchemeParams) -> Result<ValueField> {
    let scheme = Scheme::new(spec, n, grid, params)?;
    solve_with(&scheme, spec)
}

#[cfg(test)]
mod tests;
