use std::sync::Arc;

use rayon::prelude::*;

use super::envelope::switching_envelope;
use crate::grid::{Grid, ValueField};
use crate::model::ModelSpec;

const KEEP: u8 = u8::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Keep,
    SwitchTo(usize),
}

/// Feedback switching rule per (time level, node, regime).
#[derive(Debug, Clone)]
pub struct SwitchingPolicy {
    grid: Arc<Grid>,
    regimes: usize,
    actions: Vec<u8>,
}

impl SwitchingPolicy {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn regimes(&self) -> usize {
        self.regimes
    }

    pub fn levels(&self) -> usize {
        self.actions.len() / (self.grid.node_count() * self.regimes)
    }

    pub fn action(&self, level: usize, node: usize, regime: usize) -> Action {
        let len = self.grid.node_count() * self.regimes;
        match self.actions[level * len + node * self.regimes + regime] {
            KEEP => Action::Keep,
            j => Action::SwitchTo(j as usize),
        }
    }

    /// Number of (level, node, regime) entries that switch.
    pub fn switch_count(&self) -> usize {
        self.actions.iter().filter(|&&a| a != KEEP).count()
    }
}

/// Switch to the best target wherever `v(·, i) ≤ 𝓗v(·, i) + eps`, keep
/// otherwise.
pub fn extract_policy(field: &ValueField, spec: &ModelSpec, eps: f64) -> SwitchingPolicy {
    let grid = field.grid_arc();
    let m = field.regimes();
    let nodes = grid.node_count();
    let costs: Vec<f64> = (0..nodes)
        .into_par_iter()
        .flat_map_iter(|node| {
            let x = grid.coordinates(node);
            (0..m * m)
                .map(|e| {
                    let (i, j) = (e / m, e % m);
                    if i == j {
                        0.0
                    } else {
                        spec.switch_cost(&x, i, j)
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let mut actions = vec![KEEP; field.values().len()];
    actions
        .par_chunks_mut(m)
        .zip(field.values().par_chunks(m))
        .enumerate()
        .for_each(|(e, (out, vals))| {
            let node = e % nodes;
            for (i, a) in out.iter_mut().enumerate() {
                let c = &costs[node * m * m + i * m..node * m * m + (i + 1) * m];
                let (h, j) = switching_envelope(vals, c, i);
                if vals[i] <= h + eps {
                    *a = j as u8;
                }
            }
        });
    SwitchingPolicy { grid, regimes: m, actions }
}
