//! Truncated space-time grid and discrete value fields.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::penalty::PenaltyLevel;

/// Truncation box, node counts, and optionally the number of time steps
/// (`None` picks the smallest count allowed by the stability bound).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub bounds: Vec<(f64, f64)>,
    pub points: Vec<usize>,
    pub time_steps: Option<usize>,
}

impl GridSpec {
    pub fn new(bounds: Vec<(f64, f64)>, points: Vec<usize>, time_steps: Option<usize>) -> Self {
        GridSpec { bounds, points, time_steps }
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn spacing(&self) -> Vec<f64> {
        self.bounds
            .iter()
            .zip(&self.points)
            .map(|(&(lo, hi), &n)| (hi - lo) / (n as f64 - 1.0))
            .collect()
    }

    fn check(&self, spec: &ModelSpec) -> Result<()> {
        if self.bounds.len() != spec.dim() || self.points.len() != spec.dim() {
            return Err(Error::config(format!(
                "grid has {} bounds and {} point counts, model dimension is {}",
                self.bounds.len(),
                self.points.len(),
                spec.dim()
            )));
        }
        for (k, (&(lo, hi), &n)) in self.bounds.iter().zip(&self.points).enumerate() {
            if n < 3 {
                return Err(Error::config(format!("coordinate {k} needs at least 3 points, got {n}")));
            }
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::config(format!(
                    "coordinate {k}: zero or negative grid spacing on [{lo}, {hi}]"
                )));
            }
        }
        if self.time_steps == Some(0) {
            return Err(Error::config("time_steps must be at least 1"));
        }
        Ok(())
    }

    /// Iterates over node coordinates without building a grid.
    fn for_each_node(&self, mut visit: impl FnMut(&[f64])) {
        let d = self.dim();
        let h = self.spacing();
        let total: usize = self.points.iter().product();
        let mut x = vec![0.0; d];
        for node in 0..total {
            let mut rest = node;
            for k in (0..d).rev() {
                let j = rest % self.points[k];
                rest /= self.points[k];
                x[k] = self.bounds[k].0 + j as f64 * h[k];
            }
            visit(&x);
        }
    }
}

/// Largest explicit time step keeping every scheme weight nonnegative:
/// `1 / max_{nodes, regimes} (Σ_k |μ_k|/Δx_k + Σ_k (σσᵀ)_kk/Δx_k²)`. When the
/// dynamics vanish everywhere the requested `T/M` is returned.
pub fn cfl_timestep(spec: &ModelSpec, gspec: &GridSpec) -> Result<f64> {
    gspec.check(spec)?;
    let d = spec.dim();
    let h = gspec.spacing();
    let mut rate: f64 = 0.0;
    let mut bad: Option<Vec<f64>> = None;
    gspec.for_each_node(|x| {
        for i in 0..spec.regimes() {
            let mu = spec.drift(x, i);
            let a = spec.diffusion(x, i);
            let r: f64 = (0..d).map(|k| mu[k].abs() / h[k] + a[k * d + k] / (h[k] * h[k])).sum();
            if !r.is_finite() && bad.is_none() {
                bad = Some(x.to_vec());
            }
            rate = rate.max(r);
        }
    });
    if let Some(x) = bad {
        return Err(Error::config(format!("coefficients are not finite at grid node {x:?}")));
    }
    if rate == 0.0 {
        let m = gspec.time_steps.unwrap_or(1);
        Ok(spec.horizon() / m as f64)
    } else {
        Ok(1.0 / rate)
    }
}

/// Position of a node relative to the constraint domain for penalty level n.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    Inside,
    /// 0 < d(x, D) < 1/n: the penalty is still ramping up.
    Ramp,
    FarOutside,
}

/// A realized grid: node coordinates, spacing, time stepping and each node's
/// distance to the constraint domain.
#[derive(Debug, Clone)]
pub struct Grid {
    spec: GridSpec,
    horizon: f64,
    time_steps: usize,
    dt: f64,
    cfl_bound: f64,
    axes: Vec<Vec<f64>>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
    distance: Vec<f64>,
}

/// Realizes `gspec` for `spec`. Bounded sides of the domain must lie strictly
/// inside the truncation box and at least one node must lie in the domain.
pub fn build_grid(spec: &ModelSpec, gspec: &GridSpec) -> Result<Grid> {
    gspec.check(spec)?;
    let d = spec.dim();
    for (k, (lo_d, hi_d)) in spec.domain().coordinate_bounds().into_iter().enumerate() {
        let (lo, hi) = gspec.bounds[k];
        if lo_d.is_some_and(|v| v <= lo) || hi_d.is_some_and(|v| v >= hi) {
            return Err(Error::config(format!(
                "domain extent [{lo_d:?}, {hi_d:?}] in coordinate {k} is not strictly inside the truncation [{lo}, {hi}]"
            )));
        }
    }
    let spacing = gspec.spacing();
    let axes: Vec<Vec<f64>> = (0..d)
        .map(|k| {
            let (lo, hi) = gspec.bounds[k];
            let n = gspec.points[k];
            (0..n)
                .map(|j| if j == n - 1 { hi } else { lo + j as f64 * spacing[k] })
                .collect()
        })
        .collect();
    let mut strides = vec![1; d];
    for k in (0..d.saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * gspec.points[k + 1];
    }
    let cfl_bound = cfl_timestep(spec, gspec)?;
    let horizon = spec.horizon();
    let time_steps = match gspec.time_steps {
        Some(m) => m,
        None => ((horizon / cfl_bound) - 1e-9).ceil().max(1.0) as usize,
    };
    let mut grid = Grid {
        spec: GridSpec { time_steps: Some(time_steps), ..gspec.clone() },
        horizon,
        time_steps,
        dt: horizon / time_steps as f64,
        cfl_bound,
        axes,
        spacing,
        strides,
        distance: Vec::new(),
    };
    grid.distance = (0..grid.node_count())
        .map(|node| spec.distance_to_domain(&grid.coordinates(node)))
        .collect();
    if !grid.distance.contains(&0.0) {
        return Err(Error::config("no grid node lies inside the constraint domain"));
    }
    Ok(grid)
}

impl Grid {
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn node_count(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn time_steps(&self) -> usize {
        self.time_steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// The stability bound computed when the grid was built.
    pub fn cfl_bound(&self) -> f64 {
        self.cfl_bound
    }

    pub fn time(&self, level: usize) -> f64 {
        if level == self.time_steps {
            self.horizon
        } else {
            level as f64 * self.dt
        }
    }

    pub fn axis(&self, k: usize) -> &[f64] {
        &self.axes[k]
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn multi_index(&self, node: usize) -> Vec<usize> {
        let mut rest = node;
        self.strides
            .iter()
            .map(|s| {
                let j = rest / s;
                rest %= s;
                j
            })
            .collect()
    }

    pub fn node_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(j, s)| j * s).sum()
    }

    pub fn coordinates(&self, node: usize) -> Vec<f64> {
        self.multi_index(node)
            .iter()
            .enumerate()
            .map(|(k, &j)| self.axes[k][j])
            .collect()
    }

    /// Neighbor offset by `step` (±1) along axis `k`, if inside the box.
    pub fn neighbor(&self, node: usize, k: usize, step: isize) -> Option<usize> {
        let j = (node / self.strides[k]) % self.axes[k].len();
        let t = j as isize + step;
        if t < 0 || t >= self.axes[k].len() as isize {
            None
        } else {
            Some((node as isize + step * self.strides[k] as isize) as usize)
        }
    }

    /// d(x, D) at a node.
    pub fn distance(&self, node: usize) -> f64 {
        self.distance[node]
    }

    pub fn in_domain(&self, node: usize) -> bool {
        self.distance[node] == 0.0
    }

    pub fn node_class(&self, node: usize, n: PenaltyLevel) -> NodeClass {
        let d = self.distance[node];
        if d == 0.0 {
            NodeClass::Inside
        } else if d * f64::from(n.get()) < 1.0 {
            NodeClass::Ramp
        } else {
            NodeClass::FarOutside
        }
    }

    /// True when, along every coordinate where the domain is bounded, the
    /// truncation box leaves at least `1/n` of room for the penalty ramp.
    pub fn ramp_resolved(&self, spec: &ModelSpec, n: PenaltyLevel) -> bool {
        let margin = 1.0 / f64::from(n.get());
        spec.domain()
            .coordinate_bounds()
            .into_iter()
            .enumerate()
            .all(|(k, (lo, hi))| {
                let (blo, bhi) = self.spec.bounds[k];
                lo.is_none_or(|v| v - blo >= margin - 1e-12)
                    && hi.is_none_or(|v| bhi - v >= margin - 1e-12)
            })
    }

    pub fn is_face(&self, node: usize) -> bool {
        self.multi_index(node)
            .iter()
            .zip(&self.axes)
            .any(|(&j, a)| j == 0 || j + 1 == a.len())
    }

    fn contains_point(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().enumerate().all(|(k, &v)| {
                let tol = 1e-9 * self.spacing[k];
                v >= self.axes[k][0] - tol && v <= self.axes[k][self.axes[k].len() - 1] + tol
            })
    }

    /// Nearest node to `x`, or `None` outside the box.
    pub fn nearest_node(&self, x: &[f64]) -> Option<usize> {
        if !self.contains_point(x) {
            return None;
        }
        let idx: Vec<usize> = x
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let n = self.axes[k].len();
                let j = ((v - self.axes[k][0]) / self.spacing[k]).round();
                (j.max(0.0) as usize).min(n - 1)
            })
            .collect();
        Some(self.node_index(&idx))
    }

    /// Nearest time level to `t` (ties go to the later level).
    pub fn nearest_level(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * self.dt;
        if !(t >= -tol && t <= self.horizon + tol) {
            return None;
        }
        Some(((t / self.dt).round().max(0.0) as usize).min(self.time_steps))
    }

    /// Latest time level at or before `t`.
    pub fn level_at(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * self.dt;
        if !(t >= -tol && t <= self.horizon + tol) {
            return None;
        }
        Some(((t / self.dt + 1e-9).floor().max(0.0) as usize).min(self.time_steps))
    }

    /// Multilinear interpolation weights `(node, weight)` for `x`; weights
    /// within 1e-12 of 0 or 1 are snapped so node queries are exact.
    pub fn interpolation_weights(&self, x: &[f64]) -> Option<Vec<(usize, f64)>> {
        if !self.contains_point(x) {
            return None;
        }
        let d = self.dim();
        let mut cells = Vec::with_capacity(d);
        for (k, &v) in x.iter().enumerate() {
            let n = self.axes[k].len();
            let s = (v - self.axes[k][0]) / self.spacing[k];
            let mut j = (s.floor().max(0.0) as usize).min(n - 2);
            let mut w = ((v - self.axes[k][j]) / self.spacing[k]).clamp(0.0, 1.0);
            if w > 1.0 - 1e-12 {
                if j + 2 < n {
                    j += 1;
                    w = 0.0;
                } else {
                    w = 1.0;
                }
            } else if w < 1e-12 {
                w = 0.0;
            }
            cells.push((j, w));
        }
        let mut out = Vec::with_capacity(1 << d);
        for corner in 0..(1usize << d) {
            let mut weight = 1.0;
            let mut idx = vec![0; d];
            for k in 0..d {
                let (j, w) = cells[k];
                if corner >> k & 1 == 1 {
                    weight *= w;
                    idx[k] = j + 1;
                } else {
                    weight *= 1.0 - w;
                    idx[k] = j;
                }
            }
            if weight != 0.0 {
                out.push((self.node_index(&idx), weight));
            }
        }
        Some(out)
    }
}

/// Discrete value function `v(t_k, x_node, i)` on a grid, for one penalty
/// level. The last time level holds the terminal condition.
#[derive(Debug, Clone)]
pub struct ValueField {
    grid: Arc<Grid>,
    regimes: usize,
    penalty: PenaltyLevel,
    model_name: String,
    model_fingerprint: String,
    values: Vec<f64>,
}

impl ValueField {
    pub fn new(grid: Arc<Grid>, spec: &ModelSpec, penalty: PenaltyLevel, values: Vec<f64>) -> Result<Self> {
        let regimes = spec.regimes();
        let expect = (grid.time_steps() + 1) * grid.node_count() * regimes;
        if values.len() != expect {
            return Err(Error::config(format!(
                "value array has {} entries, grid needs {expect}",
                values.len()
            )));
        }
        Ok(ValueField {
            grid,
            regimes,
            penalty,
            model_name: spec.name().to_string(),
            model_fingerprint: spec.fingerprint(),
            values,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn grid_arc(&self) -> Arc<Grid> {
        Arc::clone(&self.grid)
    }

    pub fn regimes(&self) -> usize {
        self.regimes
    }

    pub fn penalty(&self) -> PenaltyLevel {
        self.penalty
    }

    pub fn model_name(&self) -> &str {
        &self.model_name
    }

    pub fn model_fingerprint(&self) -> &str {
        &self.model_fingerprint
    }

    pub fn levels(&self) -> usize {
        self.grid.time_steps() + 1
    }

    fn level_len(&self) -> usize {
        self.grid.node_count() * self.regimes
    }

    pub fn get(&self, level: usize, node: usize, regime: usize) -> f64 {
        self.values[level * self.level_len() + node * self.regimes + regime]
    }

    pub fn set(&mut self, level: usize, node: usize, regime: usize, value: f64) {
        let len = self.level_len();
        self.values[level * len + node * self.regimes + regime] = value;
    }

    /// All values at one time level, laid out `[node * m + regime]`.
    pub fn level(&self, level: usize) -> &[f64] {
        let len = self.level_len();
        &self.values[level * len..(level + 1) * len]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Multilinear in space, nearest level in time.
    pub fn interp(&self, t: f64, x: &[f64], regime: usize) -> Result<f64> {
        let outside = || Error::Extrapolation { t, x: x.to_vec() };
        let level = self.grid.nearest_level(t).ok_or_else(outside)?;
        let weights = self.grid.interpolation_weights(x).ok_or_else(outside)?;
        Ok(weights.iter().map(|&(node, w)| w * self.get(level, node, regime)).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        builtin_counterexample, builtin_pumped_storage, ClosureCoefficients, ConstraintDomain,
        DeclaredConstants, PumpedStorageParams, RegimeSet,
    };
    use proptest::prelude::*;

    fn line_spec(mu: f64, sigma: f64) -> ModelSpec {
        let mut c = ClosureCoefficients::zero("line", 1);
        c.drift = Box::new(move |_, _, out| out[0] = mu);
        c.volatility = Box::new(move |_, _, out| out[0] = sigma);
        ModelSpec::new(
            "line",
            1,
            RegimeSet::new(2).unwrap(),
            1.0,
            ConstraintDomain::Box { lower: vec![0.25], upper: vec![0.75] },
            DeclaredConstants { lipschitz: 0.0, min_cost: 1.0 },
            Arc::new(c),
        )
        .unwrap()
    }

    #[test]
    fn counterexample_grid_counts() {
        let spec = builtin_counterexample(1.0, 0.5).unwrap();
        let g = build_grid(&spec, &GridSpec::new(vec![(-1.0, 1.0), (-0.5, 2.0)], vec![11, 26], None)).unwrap();
        assert_eq!(g.node_count(), 286);
        let outside = (0..g.node_count()).filter(|&v| !g.in_domain(v)).count();
        // x₂ ∈ {-0.5, -0.4, -0.3, -0.2, -0.1} for each of the 11 x₁ values
        assert_eq!(outside, 55);
        for v in 0..g.node_count() {
            assert_eq!(g.in_domain(v), g.coordinates(v)[1] >= 0.0);
        }
    }

    #[test]
    fn one_dimensional_nodes() {
        let spec = line_spec(0.0, 0.0);
        let g = build_grid(&spec, &GridSpec::new(vec![(0.0, 1.0)], vec![3], Some(4))).unwrap();
        assert_eq!(g.axis(0), &[0.0, 0.5, 1.0]);
        assert_eq!(g.time_steps(), 4);
    }

    #[test]
    fn pumped_storage_ramp_on_both_sides() {
        let spec = builtin_pumped_storage(1.0, PumpedStorageParams::default(), 0.5, 10.0).unwrap();
        let g = build_grid(&spec, &GridSpec::new(vec![(-0.5, 1.5), (0.0, 20.0)], vec![21, 21], None)).unwrap();
        let n = PenaltyLevel::new(4).unwrap();
        let ramp: Vec<f64> = (0..g.node_count())
            .filter(|&v| g.node_class(v, n) == NodeClass::Ramp)
            .map(|v| g.coordinates(v)[0])
            .collect();
        assert!(ramp.iter().any(|&l| l < 0.0));
        assert!(ramp.iter().any(|&l| l > 1.0));
    }

    #[test]
    fn domain_must_fit_in_truncation() {
        let spec = builtin_pumped_storage(1.0, PumpedStorageParams::default(), 0.5, 10.0).unwrap();
        let err = build_grid(&spec, &GridSpec::new(vec![(0.0, 1.5), (0.0, 20.0)], vec![5, 5], None));
        assert!(err.unwrap_err().is_config());
    }

    #[test]
    fn cfl_examples() {
        let spec = builtin_counterexample(1.0, 0.5).unwrap();
        let dt = cfl_timestep(&spec, &GridSpec::new(vec![(-1.0, 1.0), (-0.5, 0.5)], vec![3, 11], None)).unwrap();
        assert!((dt - 0.1).abs() < 1e-12);
        let dt = cfl_timestep(&line_spec(0.0, 1.0), &GridSpec::new(vec![(0.0, 1.0)], vec![11], None)).unwrap();
        assert!((dt - 0.01).abs() < 1e-12);
        let dt = cfl_timestep(&line_spec(0.0, 0.0), &GridSpec::new(vec![(0.0, 1.0)], vec![11], Some(8))).unwrap();
        assert_eq!(dt, 1.0 / 8.0);
        let err = cfl_timestep(&line_spec(0.0, 0.0), &GridSpec::new(vec![(1.0, 1.0)], vec![11], None));
        assert!(err.unwrap_err().is_config());
    }

    #[test]
    fn automatic_time_steps_respect_bound() {
        let spec = builtin_counterexample(1.0, 0.5).unwrap();
        let g = build_grid(&spec, &GridSpec::new(vec![(-1.0, 1.0), (-0.5, 2.0)], vec![101, 151], None)).unwrap();
        assert_eq!(g.time_steps(), 60);
        assert!(g.dt() <= g.cfl_bound() * (1.0 + 1e-12));
    }

    fn field_1d(values: Vec<f64>) -> ValueField {
        let spec = line_spec(0.0, 0.0);
        let g = Arc::new(build_grid(&spec, &GridSpec::new(vec![(0.0, 1.0)], vec![3], Some(1))).unwrap());
        ValueField::new(g, &spec, PenaltyLevel::new(1).unwrap(), values).unwrap()
    }

    #[test]
    fn interp_examples() {
        // level 0 regime 0 holds 0, 2, 4 at x = 0, 0.5, 1
        let f = field_1d(vec![0.0, 9.0, 2.0, 9.0, 4.0, 9.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(f.interp(0.0, &[0.5], 0).unwrap(), 2.0);
        assert_eq!(f.interp(0.0, &[0.25], 0).unwrap(), 1.0);
        assert_eq!(f.interp(0.0, &[0.5], 1).unwrap(), 9.0);
        assert_eq!(f.interp(0.9, &[0.3], 0).unwrap(), 1.0);
        assert!(matches!(f.interp(0.0, &[1.5], 0), Err(Error::Extrapolation { .. })));
        assert!(matches!(f.interp(1.5, &[0.5], 0), Err(Error::Extrapolation { .. })));
    }

    proptest! {
        #[test]
        fn interp_exact_on_affine(a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0,
                                  x in -1.0f64..1.0, y in -0.5f64..2.0) {
            let spec = builtin_counterexample(1.0, 0.5).unwrap();
            let g = Arc::new(build_grid(&spec, &GridSpec::new(vec![(-1.0, 1.0), (-0.5, 2.0)], vec![7, 9], Some(2))).unwrap());
            let mut vals = Vec::new();
            for _ in 0..3 {
                for v in 0..g.node_count() {
                    let p = g.coordinates(v);
                    vals.push(a * p[0] + b * p[1] + c);
                    vals.push(0.0);
                }
            }
            let f = ValueField::new(g, &spec, PenaltyLevel::new(1).unwrap(), vals).unwrap();
            let got = f.interp(0.4, &[x, y], 0).unwrap();
            prop_assert!((got - (a * x + b * y + c)).abs() < 1e-10);
        }

        #[test]
        fn node_classes_partition(n in 1u32..100) {
            let spec = builtin_counterexample(1.0, 0.5).unwrap();
            let g = build_grid(&spec, &GridSpec::new(vec![(-1.0, 1.0), (-0.5, 2.0)], vec![5, 26], Some(1))).unwrap();
            let level = PenaltyLevel::new(n).unwrap();
            for v in 0..g.node_count() {
                let d = g.distance(v);
                let class = g.node_class(v, level);
                prop_assert_eq!(class == NodeClass::Inside, d == 0.0);
                prop_assert_eq!(class == NodeClass::Ramp, d > 0.0 && d < 1.0 / f64::from(n));
                prop_assert_eq!(class == NodeClass::FarOutside, d >= 1.0 / f64::from(n));
            }
        }
    }
}
