//! Ground truth: the closed-form value of the discontinuous counterexample
//! and exhaustive backward induction on small lattices.

use std::cmp::Ordering;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::solver::{Action, Scheme};

/// Lattices larger than this many (level, node, regime) entries are refused.
pub const LATTICE_LIMIT: usize = 1_000_000;

/// A value that may be the −∞ marker of an empty admissible set. Arithmetic
/// on the marker is symbolic, never IEEE infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtValue {
    NegInf,
    Finite(f64),
}

impl ExtValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            ExtValue::Finite(v) => Some(v),
            ExtValue::NegInf => None,
        }
    }

    pub fn is_neg_inf(self) -> bool {
        self == ExtValue::NegInf
    }

    /// `self + r`, with the marker absorbing.
    pub fn plus(self, r: f64) -> ExtValue {
        match self {
            ExtValue::Finite(v) => ExtValue::Finite(v + r),
            ExtValue::NegInf => ExtValue::NegInf,
        }
    }

    pub fn max(self, other: ExtValue) -> ExtValue {
        if other.exceeds(self) {
            other
        } else {
            self
        }
    }

    /// Strict order with the marker below every finite value.
    pub fn exceeds(self, other: ExtValue) -> bool {
        self.partial_cmp(&other) == Some(Ordering::Greater)
    }
}

impl PartialOrd for ExtValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (ExtValue::NegInf, ExtValue::NegInf) => Some(Ordering::Equal),
            (ExtValue::NegInf, ExtValue::Finite(_)) => Some(Ordering::Less),
            (ExtValue::Finite(_), ExtValue::NegInf) => Some(Ordering::Greater),
            (ExtValue::Finite(a), ExtValue::Finite(b)) => a.partial_cmp(b),
        }
    }
}

impl Serialize for ExtValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExtValue::Finite(v) => s.serialize_f64(*v),
            ExtValue::NegInf => s.serialize_str("-inf"),
        }
    }
}

/// Value of the counterexample (zero-based regimes): regime 0 earns `T − t`
/// when it can drift down to time `T` without leaving `x₂ ≥ 0`, otherwise it
/// pays `c` to freeze; regime 1 always earns `T − t`.
pub fn counterexample_value(t: f64, x: &[f64], regime: usize, horizon: f64, cost: f64) -> ExtValue {
    if x[1] < 0.0 {
        return ExtValue::NegInf;
    }
    let remaining = horizon - t;
    match regime {
        0 if x[1] < remaining => ExtValue::Finite(remaining - cost),
        _ => ExtValue::Finite(remaining),
    }
}

/// A finite controlled Markov chain: per (node, regime) transition
/// probabilities, rewards, switching costs and a mask of forbidden nodes.
#[derive(Debug, Clone)]
pub struct LatticeDp {
    pub steps: usize,
    pub dt: f64,
    pub nodes: usize,
    pub regimes: usize,
    /// `[node * regimes + regime]` → list of (target node, probability).
    pub transitions: Vec<Vec<(usize, f64)>>,
    /// Running reward per unit time, `[node * regimes + regime]`.
    pub running: Vec<f64>,
    pub terminal: Vec<f64>,
    /// Row-major m×m switching costs per node.
    pub costs: Vec<f64>,
    /// `true` marks a node outside the constraint set.
    pub masked: Vec<bool>,
}

impl LatticeDp {
    /// Lattice whose kernel is exactly the explicit step of `scheme`, with
    /// rewards read from the scheme and no masked nodes.
    pub fn from_scheme(scheme: &Scheme, terminal: &[f64]) -> Self {
        let grid = scheme.grid();
        let m = scheme.regimes();
        let nodes = grid.node_count();
        let mut transitions = Vec::with_capacity(nodes * m);
        let mut running = Vec::with_capacity(nodes * m);
        let mut costs = Vec::with_capacity(nodes * m * m);
        for node in 0..nodes {
            for i in 0..m {
                let (stay, moves) = scheme.transitions(node, i);
                let mut row = vec![(node, stay)];
                row.extend(moves);
                transitions.push(row);
                running.push(scheme.running(node, i));
            }
            for i in 0..m {
                for j in 0..m {
                    costs.push(if i == j { 0.0 } else { scheme.switch_cost(node, i, j) });
                }
            }
        }
        LatticeDp {
            steps: grid.time_steps(),
            dt: scheme.dt(),
            nodes,
            regimes: m,
            transitions,
            running,
            terminal: terminal.to_vec(),
            costs,
            masked: vec![false; nodes],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let entries = self.nodes * self.regimes;
        if self.regimes == 0 || self.nodes == 0 {
            return Err(Error::config("lattice needs at least one node and one regime"));
        }
        if (self.steps + 1) * entries > LATTICE_LIMIT {
            return Err(Error::config(format!(
                "lattice has {} entries, more than {LATTICE_LIMIT}",
                (self.steps + 1) * entries
            )));
        }
        let sizes = [
            (self.transitions.len(), entries, "transitions"),
            (self.running.len(), entries, "running"),
            (self.terminal.len(), entries, "terminal"),
            (self.costs.len(), entries * self.regimes, "costs"),
            (self.masked.len(), self.nodes, "mask"),
        ];
        for (got, want, what) in sizes {
            if got != want {
                return Err(Error::config(format!("lattice {what} has {got} entries, expected {want}")));
            }
        }
        for (e, row) in self.transitions.iter().enumerate() {
            let total: f64 = row.iter().map(|&(_, p)| p).sum();
            if row.iter().any(|&(t, p)| p < 0.0 || t >= self.nodes) || (total - 1.0).abs() > 1e-12 {
                return Err(Error::config(format!(
                    "transition row of node {} regime {} is not a probability vector",
                    e / self.regimes,
                    e % self.regimes + 1
                )));
            }
        }
        Ok(())
    }

    fn cost(&self, node: usize, from: usize, to: usize) -> f64 {
        let m = self.regimes;
        self.costs[node * m * m + from * m + to]
    }

    /// Expected next value plus reward for keeping `regime` at `node`.
    fn keep(&self, node: usize, regime: usize, next: &[ExtValue]) -> ExtValue {
        let m = self.regimes;
        let mut acc = 0.0;
        for &(t, p) in &self.transitions[node * m + regime] {
            if p == 0.0 {
                continue;
            }
            match next[t * m + regime] {
                ExtValue::Finite(v) => acc += p * v,
                ExtValue::NegInf => return ExtValue::NegInf,
            }
        }
        ExtValue::Finite(acc + self.dt * self.running[node * m + regime])
    }

    /// Best immediate switch out of `from` against the current values.
    fn best_switch(&self, node: usize, from: usize, vals: &[ExtValue]) -> (ExtValue, usize) {
        let mut best = (ExtValue::NegInf, usize::MAX);
        for (j, v) in vals.iter().enumerate() {
            if j == from {
                continue;
            }
            let cand = v.plus(-self.cost(node, from, j));
            if best.1 == usize::MAX || cand.exceeds(best.0) {
                best = (cand, j);
            }
        }
        best
    }

    /// Gauss–Seidel closure of one node's values under switching.
    fn close(&self, node: usize, vals: &mut [ExtValue], actions: &mut [Action]) -> Result<()> {
        let m = self.regimes;
        for _ in 0..m {
            let mut changed = false;
            for i in 0..m {
                let (h, j) = self.best_switch(node, i, vals);
                if h.exceeds(vals[i]) {
                    vals[i] = h;
                    actions[i] = Action::SwitchTo(j);
                    changed = true;
                }
            }
            if !changed {
                return Ok(());
            }
        }
        Err(Error::Internal(format!("switching chain at lattice node {node} does not terminate")))
    }
}

/// Exact value and action tables of a [`LatticeDp`], laid out
/// `[level][node * m + regime]`.
#[derive(Debug, Clone)]
pub struct LatticeSolution {
    pub values: Vec<ExtValue>,
    pub actions: Vec<Action>,
    entries: usize,
}

impl LatticeSolution {
    pub fn value(&self, level: usize, node: usize, regime: usize, regimes: usize) -> ExtValue {
        self.values[level * self.entries + node * regimes + regime]
    }

    pub fn level(&self, level: usize) -> &[ExtValue] {
        &self.values[level * self.entries..(level + 1) * self.entries]
    }

    /// Finite values, or `None` if any entry carries the −∞ marker.
    pub fn finite_values(&self) -> Option<Vec<f64>> {
        self.values.iter().map(|v| v.finite()).collect()
    }

    /// Largest mismatch in the one-step identity
    /// `v = max(keep, max_j v_j − c)` over all entries; markers must match
    /// markers exactly.
    pub fn dpp_residual(&self, dp: &LatticeDp) -> f64 {
        let m = dp.regimes;
        let mut worst: f64 = 0.0;
        for k in 0..=dp.steps {
            let cur = self.level(k);
            for node in 0..dp.nodes {
                let vals = &cur[node * m..(node + 1) * m];
                for i in 0..m {
                    let base = if dp.masked[node] {
                        ExtValue::NegInf
                    } else if k == dp.steps {
                        ExtValue::Finite(dp.terminal[node * m + i])
                    } else {
                        dp.keep(node, i, self.level(k + 1))
                    };
                    let rhs = if dp.masked[node] { base } else { base.max(dp.best_switch(node, i, vals).0) };
                    let gap = match (vals[i], rhs) {
                        (ExtValue::Finite(a), ExtValue::Finite(b)) => (a - b).abs(),
                        (ExtValue::NegInf, ExtValue::NegInf) => 0.0,
                        _ => f64::INFINITY,
                    };
                    worst = worst.max(gap);
                }
            }
        }
        worst
    }
}

/// Backward induction: the value of keeping is the reward over one step
/// plus the expected next value, switches are closed at each level, and
/// masked nodes hold the −∞ marker.
pub fn lattice_dp(dp: &LatticeDp) -> Result<LatticeSolution> {
    dp.validate()?;
    let m = dp.regimes;
    let entries = dp.nodes * m;
    let mut values = vec![ExtValue::NegInf; (dp.steps + 1) * entries];
    let mut actions = vec![Action::Keep; (dp.steps + 1) * entries];
    for k in (0..=dp.steps).rev() {
        let (head, tail) = values.split_at_mut((k + 1) * entries);
        let cur = &mut head[k * entries..];
        let acts = &mut actions[k * entries..(k + 1) * entries];
        for node in 0..dp.nodes {
            if dp.masked[node] {
                continue;
            }
            for i in 0..m {
                cur[node * m + i] = if k == dp.steps {
                    ExtValue::Finite(dp.terminal[node * m + i])
                } else {
                    dp.keep(node, i, &tail[..entries])
                };
            }
            dp.close(node, &mut cur[node * m..(node + 1) * m], &mut acts[node * m..(node + 1) * m])?;
        }
    }
    Ok(LatticeSolution { values, actions, entries })
}

/// The counterexample's second coordinate on a lattice with spacing
/// `T / steps`: regime 0 shifts one node down per step, regime 1 stays,
/// and node 0 (one spacing below zero) is forbidden. Node `j` sits at
/// `x₂ = (j − 1)·h` for `j = 0..=levels`.
pub fn counterexample_lattice(horizon: f64, cost: f64, levels: usize, steps: usize) -> LatticeDp {
    let nodes = levels + 1;
    let h = horizon / steps as f64;
    let mut transitions = Vec::with_capacity(nodes * 2);
    for j in 0..nodes {
        transitions.push(vec![(j.saturating_sub(1), 1.0)]);
        transitions.push(vec![(j, 1.0)]);
    }
    let mut masked = vec![false; nodes];
    masked[0] = true;
    LatticeDp {
        steps,
        dt: h,
        nodes,
        regimes: 2,
        transitions,
        running: vec![1.0; nodes * 2],
        terminal: vec![0.0; nodes * 2],
        costs: (0..nodes).flat_map(|_| [0.0, cost, cost, 0.0]).collect(),
        masked,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn chain(nodes: usize, regimes: usize, steps: usize, dt: f64) -> LatticeDp {
        LatticeDp {
            steps,
            dt,
            nodes,
            regimes,
            transitions: (0..nodes * regimes).map(|e| vec![(e / regimes, 1.0)]).collect(),
            running: vec![0.0; nodes * regimes],
            terminal: vec![0.0; nodes * regimes],
            costs: vec![1.0; nodes * regimes * regimes],
            masked: vec![false; nodes],
        }
    }

    #[test]
    fn counterexample_values() {
        assert_eq!(counterexample_value(0.0, &[0.0, 2.0], 0, 1.0, 0.5), ExtValue::Finite(1.0));
        assert_eq!(counterexample_value(0.0, &[0.0, 0.2], 0, 1.0, 0.5), ExtValue::Finite(0.5));
        let v = counterexample_value(0.3, &[7.0, 5.0], 1, 1.0, 0.5).finite().unwrap();
        assert!((v - 0.7).abs() < 1e-15);
        assert!(counterexample_value(0.0, &[0.0, -0.1], 1, 1.0, 0.5).is_neg_inf());
    }

    #[test]
    fn marker_arithmetic() {
        let a = ExtValue::Finite(-1e300);
        assert!(a.exceeds(ExtValue::NegInf));
        assert_eq!(ExtValue::NegInf.plus(5.0), ExtValue::NegInf);
        assert_eq!(ExtValue::NegInf.max(a), a);
        assert_eq!(serde_json::to_string(&ExtValue::NegInf).unwrap(), "\"-inf\"");
    }

    #[test]
    fn reward_accrual() {
        let mut dp = chain(1, 1, 2, 0.5);
        dp.running = vec![1.0];
        let sol = lattice_dp(&dp).unwrap();
        assert_eq!(sol.value(0, 0, 0, 1), ExtValue::Finite(1.0));
    }

    #[test]
    fn only_absorbing_node_survives() {
        let mut dp = chain(3, 2, 3, 0.1);
        dp.terminal = vec![7.0; 6];
        dp.masked = vec![true, false, true];
        let sol = lattice_dp(&dp).unwrap();
        for k in 0..=3 {
            for i in 0..2 {
                assert_eq!(sol.value(k, 1, i, 2), ExtValue::Finite(7.0));
                assert!(sol.value(k, 0, i, 2).is_neg_inf());
                assert!(sol.value(k, 2, i, 2).is_neg_inf());
            }
        }
        assert_eq!(sol.dpp_residual(&dp), 0.0);
    }

    #[test]
    fn moves_into_forbidden_nodes_are_inadmissible() {
        let mut dp = chain(2, 2, 1, 0.1);
        dp.transitions[2] = vec![(0, 0.5), (1, 0.5)];
        dp.transitions[3] = vec![(0, 1.0)];
        dp.masked = vec![true, false];
        let sol = lattice_dp(&dp).unwrap();
        assert!(sol.value(0, 1, 0, 2).is_neg_inf());
        assert!(sol.value(0, 1, 1, 2).is_neg_inf());
        assert_eq!(sol.value(1, 1, 0, 2), ExtValue::Finite(0.0));
        assert_eq!(sol.dpp_residual(&dp), 0.0);
    }

    #[test]
    fn shift_lattice_reproduces_closed_form() {
        let (horizon, cost, steps) = (1.0, 0.5, 20);
        let dp = counterexample_lattice(horizon, cost, 21, steps);
        let sol = lattice_dp(&dp).unwrap();
        let h = horizon / steps as f64;
        for k in 0..=steps {
            let t = k as f64 * h;
            for j in 1..dp.nodes {
                let x2 = (j as f64 - 1.0) * h;
                // the front x₂ = T − t falls on nodes; stay one node clear
                if (x2 - (horizon - t)).abs() < 0.5 * h {
                    continue;
                }
                for i in 0..2 {
                    let want = counterexample_value(t, &[0.0, x2], i, horizon, cost).finite().unwrap();
                    let got = sol.value(k, j, i, 2).finite().unwrap();
                    assert!((got - want).abs() < 1e-12, "k={k} j={j} i={i}: {got} vs {want}");
                }
            }
            for i in 0..2 {
                assert!(sol.value(k, 0, i, 2).is_neg_inf());
            }
        }
        assert_eq!(sol.dpp_residual(&dp), 0.0);
    }

    #[test]
    fn shift_lattice_switches_at_boundary() {
        let dp = counterexample_lattice(1.0, 0.5, 21, 20);
        let sol = lattice_dp(&dp).unwrap();
        // switching later costs the same, so it is forced only at x₂ = 0 (node 1)
        assert_eq!(sol.actions[5 * 2], Action::Keep);
        assert_eq!(sol.actions[2], Action::SwitchTo(1));
        assert_eq!(sol.actions[3], Action::Keep);
        // node 21 is x₂ = 1 at t = 0
        assert_eq!(sol.actions[21 * 2], Action::Keep);
    }

    #[test]
    fn oversized_lattice_refused() {
        let dp = counterexample_lattice(1.0, 0.5, 1000, 1000);
        assert!(lattice_dp(&dp).unwrap_err().is_config());
    }

    fn random_lattice(seed: &[f64], mask: usize) -> LatticeDp {
        let nodes = 6;
        let mut dp = counterexample_lattice(1.0, 0.3, nodes - 1, 4);
        for (e, row) in dp.transitions.iter_mut().enumerate() {
            let a = seed[e % seed.len()];
            let node = e / 2;
            *row = vec![(node, a), ((node + 1) % nodes, 1.0 - a)];
        }
        dp.running = (0..nodes * 2).map(|e| seed[(e + 3) % seed.len()] * 4.0 - 2.0).collect();
        dp.terminal = (0..nodes * 2).map(|e| seed[(e + 5) % seed.len()]).collect();
        dp.masked = vec![false; nodes];
        dp.masked[mask % nodes] = true;
        dp
    }

    proptest! {
        #[test]
        fn raising_a_reward_never_lowers_values(seed in proptest::collection::vec(0.0f64..1.0, 7),
                                               entry in 0usize..12, mask in 0usize..6, up in 0.0f64..3.0) {
            let dp = random_lattice(&seed, mask);
            let mut raised = dp.clone();
            raised.running[entry] += up;
            raised.terminal[(entry + 1) % 12] += up;
            let a = lattice_dp(&dp).unwrap();
            let b = lattice_dp(&raised).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!(!x.exceeds(*y));
            }
            prop_assert_eq!(a.dpp_residual(&dp), 0.0);
        }

        #[test]
        fn masking_a_node_never_raises_values(seed in proptest::collection::vec(0.0f64..1.0, 7),
                                             mask in 0usize..6, extra in 0usize..6) {
            let dp = random_lattice(&seed, mask);
            let mut tighter = dp.clone();
            tighter.masked[extra] = true;
            let a = lattice_dp(&dp).unwrap();
            let b = lattice_dp(&tighter).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!(!y.exceeds(*x));
            }
        }
    }
}
