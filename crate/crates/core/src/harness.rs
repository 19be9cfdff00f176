//! Checks on solved value fields: monotone convergence along a penalty
//! ladder, dynamic-programming residuals, growth bounds and the switching
//! obstacle, plus a suite that runs them all.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Grid, ValueField};
use crate::model::ModelSpec;
use crate::oracle::{counterexample_value, lattice_dp, ExtValue, LatticeDp, LATTICE_LIMIT};
use crate::penalty::PenaltyLevel;
use crate::solver::{switching_envelope, Scheme, SchemeParams};

/// Allowed increase between consecutive ladder levels.
pub const MONOTONE_TOL: f64 = 1e-10;

/// Rounding allowance on closed-form value bounds.
pub const BOUND_TOL: f64 = 1e-12;

/// One (time level, node, regime) entry of a value field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Entry {
    pub level: usize,
    pub node: usize,
    pub regime: usize,
}

/// A reference solution known in closed form.
pub trait Oracle: Sync {
    fn name(&self) -> &str;
    fn value(&self, t: f64, x: &[f64], regime: usize) -> ExtValue;
    /// Points too close to a discontinuity for pointwise comparison.
    fn near_front(&self, t: f64, x: &[f64], grid: &Grid) -> bool;
    /// Bounds `(lower, upper)` the value must satisfy on the domain.
    fn bounds(&self) -> Option<(f64, f64)>;
}

/// The counterexample's closed-form value, with a band of `band` grid
/// spacings around the front `x₂ = T − t` excluded from comparisons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CounterexampleOracle {
    pub horizon: f64,
    pub cost: f64,
    pub band: f64,
}

impl CounterexampleOracle {
    pub fn new(horizon: f64, cost: f64) -> Self {
        CounterexampleOracle { horizon, cost, band: 3.0 }
    }
}

impl Oracle for CounterexampleOracle {
    fn name(&self) -> &str {
        "counterexample"
    }

    fn value(&self, t: f64, x: &[f64], regime: usize) -> ExtValue {
        counterexample_value(t, x, regime, self.horizon, self.cost)
    }

    fn near_front(&self, t: f64, x: &[f64], grid: &Grid) -> bool {
        (x[1] - (self.horizon - t)).abs() < self.band * grid.spacing()[1]
    }

    fn bounds(&self) -> Option<(f64, f64)> {
        Some((-self.cost, self.horizon))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderRung {
    pub n: u32,
    pub min_value: f64,
    pub max_value: f64,
    /// Largest `v_n − v_prev` on the domain, absent for the first rung.
    pub max_increase: Option<f64>,
    /// Largest `|v_n − v_prev|` on the domain, absent for the first rung.
    pub sup_difference: Option<f64>,
    pub oracle_gap: Option<f64>,
    pub off_front_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub model: String,
    pub fingerprint: String,
    pub tolerance: f64,
    pub rungs: Vec<LadderRung>,
    pub monotone: bool,
    pub aborted: Option<String>,
}

impl ConvergenceReport {
    pub fn max_increase(&self) -> f64 {
        self.rungs.iter().filter_map(|r| r.max_increase).fold(0.0, f64::max)
    }

    pub fn table(&self) -> String {
        let mut out = format!(
            "{:>6}  {:>12}  {:>12}  {:>12}  {:>12}  {:>12}\n",
            "n", "max rise", "sup diff", "oracle gap", "off-front", "max value"
        );
        let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4e}"));
        for r in &self.rungs {
            let _ = writeln!(
                out,
                "{:>6}  {:>12}  {:>12}  {:>12}  {:>12}  {:>12.6}",
                r.n,
                cell(r.max_increase),
                cell(r.sup_difference),
                cell(r.oracle_gap),
                cell(r.off_front_gap),
                r.max_value
            );
        }
        let _ = writeln!(out, "monotone: {}", if self.monotone { "yes" } else { "NO" });
        if let Some(msg) = &self.aborted {
            let _ = writeln!(out, "aborted: {msg}");
        }
        out
    }
}

/// Solved fields of a ladder together with its report. A solve failure
/// stops the ladder; the report then covers the completed rungs.
#[derive(Debug)]
pub struct Ladder {
    pub report: ConvergenceReport,
    pub fields: Vec<ValueField>,
    pub failure: Option<Error>,
}

fn domain_nodes(grid: &Grid) -> Vec<usize> {
    (0..grid.node_count()).filter(|&v| grid.in_domain(v)).collect()
}

/// Largest gap to the oracle over domain nodes, all levels and regimes:
/// `(everywhere, away from the front)`.
fn oracle_gaps(field: &ValueField, oracle: &dyn Oracle) -> (f64, f64) {
    let grid = field.grid();
    let m = field.regimes();
    let (mut all, mut off): (f64, f64) = (0.0, 0.0);
    for k in 0..field.levels() {
        let t = grid.time(k);
        for node in domain_nodes(grid) {
            let x = grid.coordinates(node);
            let near = oracle.near_front(t, &x, grid);
            for i in 0..m {
                if let ExtValue::Finite(want) = oracle.value(t, &x, i) {
                    let gap = (field.get(k, node, i) - want).abs();
                    all = all.max(gap);
                    if !near {
                        off = off.max(gap);
                    }
                }
            }
        }
    }
    (all, off)
}

/// Solves at each level of `levels` (non-decreasing) and compares
/// consecutive fields on the domain.
pub fn penalty_ladder(
    spec: &ModelSpec,
    grid: Arc<Grid>,
    levels: &[PenaltyLevel],
    params: SchemeParams,
    oracle: Option<&dyn Oracle>,
) -> Result<Ladder> {
    if levels.is_empty() {
        return Err(Error::config("penalty ladder is empty"));
    }
    if levels.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::config("penalty levels must be sorted in increasing order"));
    }
    let nodes = domain_nodes(&grid);
    let m = spec.regimes();
    let mut report = ConvergenceReport {
        model: spec.name().to_string(),
        fingerprint: spec.fingerprint(),
        tolerance: MONOTONE_TOL,
        rungs: Vec::new(),
        monotone: true,
        aborted: None,
    };
    let mut fields: Vec<ValueField> = Vec::new();
    for &n in levels {
        if !grid.ramp_resolved(spec, n) {
            log::warn!("truncation box leaves less than 1/{} outside the domain for the penalty ramp", n.get());
        }
        let field = match crate::solver::solve(spec, n, Arc::clone(&grid), params) {
            Ok(f) => f,
            Err(e) => {
                report.aborted = Some(format!("n = {}: {e}", n.get()));
                return Ok(Ladder { report, fields, failure: Some(e) });
            }
        };
        let mut min_value = f64::INFINITY;
        let mut max_value = f64::NEG_INFINITY;
        let (mut rise, mut sup) = (f64::NEG_INFINITY, 0.0f64);
        let prev = fields.last();
        for k in 0..field.levels() {
            for &node in &nodes {
                for i in 0..m {
                    let v = field.get(k, node, i);
                    min_value = min_value.min(v);
                    max_value = max_value.max(v);
                    if let Some(p) = prev {
                        let d = v - p.get(k, node, i);
                        rise = rise.max(d);
                        sup = sup.max(d.abs());
                    }
                }
            }
        }
        let (max_increase, sup_difference) = match prev {
            Some(_) => (Some(rise.max(0.0)), Some(sup)),
            None => (None, None),
        };
        if max_increase.is_some_and(|r| r > MONOTONE_TOL) {
            report.monotone = false;
        }
        let (oracle_gap, off_front_gap) = match oracle {
            Some(o) => {
                let (a, b) = oracle_gaps(&field, o);
                (Some(a), Some(b))
            }
            None => (None, None),
        };
        log::info!("ladder rung n = {} solved, max value {max_value:.6}", n.get());
        report.rungs.push(LadderRung {
            n: n.get(),
            min_value,
            max_value,
            max_increase,
            sup_difference,
            oracle_gap,
            off_front_gap,
        });
        fields.push(field);
    }
    Ok(Ladder { report, fields, failure: None })
}

/// Up to `count` distinct entries below the terminal level whose
/// (level, node) passes `keep`, drawn uniformly with a seeded stream and
/// returned in sorted order.
pub fn sample_entries(
    field: &ValueField,
    count: usize,
    seed: u64,
    keep: impl Fn(&Grid, usize, usize) -> bool,
) -> Vec<Entry> {
    let grid = field.grid();
    let m = field.regimes();
    let mut pool = Vec::new();
    for level in 0..field.levels().saturating_sub(1) {
        for node in 0..grid.node_count() {
            if keep(grid, level, node) {
                pool.extend((0..m).map(|regime| Entry { level, node, regime }));
            }
        }
    }
    let take = count.min(pool.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<Entry> = index::sample(&mut rng, pool.len(), take).into_iter().map(|e| pool[e]).collect();
    picked.sort();
    picked
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DppReport {
    pub lookahead: usize,
    pub samples: usize,
    pub dt: f64,
    pub max_residual: f64,
    /// `max_residual / dt`.
    pub constant: f64,
    pub worst: Option<Entry>,
}

/// Compares each sampled value with the best of two restricted strategies
/// over the next `lookahead` steps (fewer near the horizon): keep the
/// current regime, or switch once immediately and keep the new regime.
/// Keeping uses the scheme's own explicit operator started from the stored
/// field at the end of the lookahead.
pub fn dpp_residual(
    field: &ValueField,
    spec: &ModelSpec,
    samples: &[Entry],
    lookahead: usize,
    params: SchemeParams,
) -> Result<DppReport> {
    if lookahead == 0 {
        return Err(Error::config("lookahead must be at least one step"));
    }
    let grid = field.grid_arc();
    let scheme = Scheme::new(spec, field.penalty(), Arc::clone(&grid), params)?;
    let m = field.regimes();
    let last = field.levels() - 1;
    let mut by_level: BTreeMap<usize, Vec<Entry>> = BTreeMap::new();
    for e in samples {
        if e.level >= last || e.node >= grid.node_count() || e.regime >= m {
            return Err(Error::config(format!("sample {e:?} is not below the terminal level")));
        }
        by_level.entry(e.level).or_default().push(*e);
    }
    let mut worst = (0.0f64, None);
    for (level, entries) in by_level {
        let steps = lookahead.min(last - level);
        let mut keep = field.level(level + steps).to_vec();
        for _ in 0..steps {
            keep = scheme.keep_step(&keep);
        }
        for e in entries {
            let vals = &keep[e.node * m..(e.node + 1) * m];
            let costs: Vec<f64> = (0..m)
                .map(|j| if j == e.regime { 0.0 } else { scheme.switch_cost(e.node, e.regime, j) })
                .collect();
            let (switch, _) = switching_envelope(vals, &costs, e.regime);
            let rhs = vals[e.regime].max(switch);
            let r = (field.get(e.level, e.node, e.regime) - rhs).abs();
            if worst.1.is_none() || r > worst.0 {
                worst = (r, Some(e));
            }
        }
    }
    let dt = grid.dt();
    Ok(DppReport {
        lookahead,
        samples: samples.len(),
        dt,
        max_residual: worst.0,
        constant: worst.0 / dt,
        worst: worst.1,
    })
}

/// Disjoint node sets for the growth check: domain nodes with
/// `|x| ≤ R/2` and with `R/2 < |x| ≤ R`, where `R` is the largest `|x|`
/// over domain nodes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthRegions {
    pub radius: f64,
    pub fit: Vec<usize>,
    pub test: Vec<usize>,
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn growth_regions(grid: &Grid) -> GrowthRegions {
    let nodes = domain_nodes(grid);
    let radius = nodes.iter().map(|&v| norm(&grid.coordinates(v))).fold(0.0, f64::max);
    let (fit, test) = nodes.into_iter().partition(|&v| norm(&grid.coordinates(v)) <= radius / 2.0);
    GrowthRegions { radius, fit, test }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthReport {
    /// Smallest `C ≥ 0` with `v ≤ C(1 + |x|)` on the fit region.
    pub c_fit: f64,
    /// Largest `v − C(1 + |x|)` on the test region, floored at 0.
    pub upper_violation: f64,
    pub eta: f64,
    /// Smallest `C ≥ 0` with `v ≥ −C(1 + |x|^η)` on the fit region.
    pub c_fit_lower: f64,
    /// Largest `−C(1 + |x|^η) − v` on the test region, floored at 0.
    pub lower_violation: f64,
}

/// Fits linear growth constants on `fit` and measures their violation on
/// `test`, over every level and regime of every field.
pub fn growth_check(fields: &[ValueField], fit: &[usize], test: &[usize], eta: f64) -> Result<GrowthReport> {
    if fit.iter().any(|v| test.contains(v)) {
        return Err(Error::config("growth fit and test regions overlap"));
    }
    if !(eta > 0.0) {
        return Err(Error::config(format!("growth exponent must be positive, got {eta}")));
    }
    let mut report = GrowthReport { c_fit: 0.0, upper_violation: 0.0, eta, c_fit_lower: 0.0, lower_violation: 0.0 };
    let scan = |nodes: &[usize], mut visit: Box<dyn FnMut(f64, f64) + '_>| {
        for field in fields {
            let grid = field.grid();
            for &node in nodes {
                let r = norm(&grid.coordinates(node));
                for k in 0..field.levels() {
                    for i in 0..field.regimes() {
                        visit(r, field.get(k, node, i));
                    }
                }
            }
        }
    };
    let (mut c, mut c_low) = (0.0f64, 0.0f64);
    scan(fit, Box::new(|r, v| {
        c = c.max(v / (1.0 + r));
        c_low = c_low.max(-v / (1.0 + r.powf(eta)));
    }));
    let (mut up, mut low) = (0.0f64, 0.0f64);
    scan(test, Box::new(|r, v| {
        up = up.max(v - c * (1.0 + r));
        low = low.max(-c_low * (1.0 + r.powf(eta)) - v);
    }));
    report.c_fit = c;
    report.c_fit_lower = c_low;
    report.upper_violation = up;
    report.lower_violation = low;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObstacleReport {
    /// Minimum of `v − 𝓗v` over the domain nodes, all levels and regimes.
    pub min_slack: f64,
    pub worst: Option<Entry>,
}

/// Recomputes `v − 𝓗v` from the field and the model's switching costs.
pub fn obstacle_check(field: &ValueField, spec: &ModelSpec) -> ObstacleReport {
    let grid = field.grid();
    let m = field.regimes();
    let mut report = ObstacleReport { min_slack: f64::INFINITY, worst: None };
    for node in domain_nodes(grid) {
        let x = grid.coordinates(node);
        let costs: Vec<Vec<f64>> = (0..m)
            .map(|i| (0..m).map(|j| if i == j { 0.0 } else { spec.switch_cost(&x, i, j) }).collect())
            .collect();
        for level in 0..field.levels() {
            let vals = &field.level(level)[node * m..(node + 1) * m];
            for (regime, row) in costs.iter().enumerate() {
                let (h, _) = switching_envelope(vals, row, regime);
                let slack = vals[regime] - h;
                if slack < report.min_slack {
                    report.min_slack = slack;
                    report.worst = Some(Entry { level, node, regime });
                }
            }
        }
    }
    report
}

/// Lattice whose kernel is the scheme on `grid`, solved exhaustively, and
/// the largest gap between its values and `field`.
pub fn lattice_equivalence(field: &ValueField, spec: &ModelSpec, params: SchemeParams) -> Result<(f64, f64)> {
    let scheme = Scheme::new(spec, field.penalty(), field.grid_arc(), params)?;
    let terminal = scheme_terminal_rewards(&scheme, spec);
    let dp = LatticeDp::from_scheme(&scheme, &terminal);
    let sol = lattice_dp(&dp)?;
    let residual = sol.dpp_residual(&dp);
    let values = sol
        .finite_values()
        .ok_or_else(|| Error::Internal("unmasked lattice produced the -inf marker".into()))?;
    let gap = values.iter().zip(field.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok((gap, residual))
}

fn scheme_terminal_rewards(scheme: &Scheme, spec: &ModelSpec) -> Vec<f64> {
    let grid = scheme.grid();
    let n = scheme.penalty();
    (0..grid.node_count())
        .flat_map(|node| {
            let x = grid.coordinates(node);
            (0..spec.regimes())
                .map(|i| crate::penalty::penalized_terminal(spec, n, &x, i))
                .collect::<Vec<_>>()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub name: String,
    pub status: Status,
    pub value: Option<f64>,
    pub threshold: Option<f64>,
    pub detail: String,
}

impl CheckRow {
    fn at_most(name: &str, value: f64, threshold: f64, detail: String) -> Self {
        let status = if value <= threshold { Status::Pass } else { Status::Fail };
        CheckRow { name: name.into(), status, value: Some(value), threshold: Some(threshold), detail }
    }

    fn at_least(name: &str, value: f64, threshold: f64, detail: String) -> Self {
        let status = if value >= threshold { Status::Pass } else { Status::Fail };
        CheckRow { name: name.into(), status, value: Some(value), threshold: Some(threshold), detail }
    }

    fn skipped(name: &str, detail: &str) -> Self {
        CheckRow { name: name.into(), status: Status::Skipped, value: None, threshold: None, detail: detail.into() }
    }
}

/// Shift applied to one field entry before the checks run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Perturbation {
    pub entry: Entry,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    /// Penalty level of the field checked for DPP, growth and the oracle.
    pub n: PenaltyLevel,
    pub ladder: Vec<PenaltyLevel>,
    pub params: SchemeParams,
    pub lookahead: usize,
    pub dpp_samples: usize,
    /// DPP residual bound in units of Δt.
    pub dpp_factor: f64,
    pub eta: f64,
    pub seed: u64,
    pub obstacle_tol: f64,
    pub oracle_tol: f64,
    pub perturb: Option<Perturbation>,
}

impl VerifyOptions {
    pub fn new(n: PenaltyLevel) -> Self {
        VerifyOptions {
            n,
            ladder: vec![n],
            params: SchemeParams::default(),
            lookahead: 1,
            dpp_samples: 200,
            dpp_factor: 2.0,
            eta: 1.0,
            seed: 0,
            obstacle_tol: 1e-9,
            oracle_tol: 0.05,
            perturb: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub model: String,
    pub fingerprint: String,
    pub rows: Vec<CheckRow>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.status != Status::Fail)
    }

    pub fn row(&self, name: &str) -> Option<&CheckRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn table(&self) -> String {
        let mut out = format!("{:<22}  {:<7}  {:>12}  {:>12}  detail\n", "check", "status", "value", "threshold");
        let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4e}"));
        for r in &self.rows {
            let status = match r.status {
                Status::Pass => "pass",
                Status::Fail => "FAIL",
                Status::Skipped => "skipped",
            };
            let _ = writeln!(
                out,
                "{:<22}  {:<7}  {:>12}  {:>12}  {}",
                r.name,
                status,
                cell(r.value),
                cell(r.threshold),
                r.detail
            );
        }
        out
    }
}

/// Runs the ladder and every field check on one grid. Solve failures are
/// returned as errors; failed checks are reported as rows.
pub fn verify(spec: &ModelSpec, grid: Arc<Grid>, opts: &VerifyOptions, oracle: Option<&dyn Oracle>) -> Result<VerifyReport> {
    let mut levels = opts.ladder.clone();
    if !levels.contains(&opts.n) {
        levels.push(opts.n);
        levels.sort();
    }
    let ladder = penalty_ladder(spec, Arc::clone(&grid), &levels, opts.params, oracle)?;
    if let Some(e) = ladder.failure {
        return Err(e);
    }
    let Ladder { report: conv, mut fields, .. } = ladder;
    let main = levels.iter().position(|&n| n == opts.n).expect("main level is in the ladder");
    if let Some(p) = opts.perturb {
        let e = p.entry;
        if e.level >= fields[main].levels() || e.node >= grid.node_count() || e.regime >= spec.regimes() {
            return Err(Error::config(format!("perturbed entry {e:?} is outside the field")));
        }
        let v = fields[main].get(e.level, e.node, e.regime);
        fields[main].set(e.level, e.node, e.regime, v + p.delta);
    }
    let field = &fields[main];
    let mut rows = Vec::new();

    rows.push(CheckRow::at_most(
        "ladder_monotone",
        conv.max_increase(),
        MONOTONE_TOL,
        format!("levels {:?}", levels.iter().map(|n| n.get()).collect::<Vec<_>>()),
    ));

    let obstacle = fields
        .iter()
        .map(|f| (f.penalty().get(), obstacle_check(f, spec)))
        .min_by(|a, b| a.1.min_slack.total_cmp(&b.1.min_slack))
        .expect("ladder is not empty");
    rows.push(CheckRow::at_least(
        "obstacle_slack",
        obstacle.1.min_slack,
        -opts.obstacle_tol,
        match obstacle.1.worst {
            Some(e) => format!("worst at n = {}, level {}, node {}, regime {}", obstacle.0, e.level, e.node, e.regime + 1),
            None => format!("worst at n = {}", obstacle.0),
        },
    ));

    let samples = sample_entries(field, opts.dpp_samples, opts.seed, |g, level, node| {
        g.in_domain(node)
            && !g.is_face(node)
            && oracle.is_none_or(|o| !o.near_front(g.time(level), &g.coordinates(node), g))
    });
    let dpp = dpp_residual(field, spec, &samples, opts.lookahead, opts.params)?;
    log::info!("dpp residual {:.3e} = {:.3} dt over {} samples", dpp.max_residual, dpp.constant, dpp.samples);
    rows.push(CheckRow::at_most(
        "dpp_residual",
        dpp.max_residual,
        opts.dpp_factor * dpp.dt,
        format!("lookahead {}, {} samples, constant {:.4}", dpp.lookahead, dpp.samples, dpp.constant),
    ));

    let regions = growth_regions(&grid);
    let growth = growth_check(std::slice::from_ref(field), &regions.fit, &regions.test, opts.eta)?;
    rows.push(CheckRow::at_most(
        "growth_upper",
        growth.upper_violation,
        0.0,
        format!("C = {:.6}, R = {:.4}", growth.c_fit, regions.radius),
    ));
    rows.push(CheckRow::at_most(
        "growth_lower",
        growth.lower_violation,
        0.0,
        format!("C = {:.6}, eta = {}", growth.c_fit_lower, growth.eta),
    ));

    match oracle {
        Some(o) => {
            let (all, off) = oracle_gaps(field, o);
            rows.push(CheckRow::at_most("oracle_gap", off, opts.oracle_tol, format!("{} off-front; {all:.4e} including the front", o.name())));
            if let Some((lo, hi)) = o.bounds() {
                let nodes = domain_nodes(&grid);
                let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
                for k in 0..field.levels() {
                    for &node in &nodes {
                        for i in 0..field.regimes() {
                            let v = field.get(k, node, i);
                            min = min.min(v);
                            max = max.max(v);
                        }
                    }
                }
                let excess = (max - hi).max(lo - min).max(0.0);
                rows.push(CheckRow::at_most("oracle_bounds", excess, BOUND_TOL, format!("values in [{min:.6}, {max:.6}], bounds [{lo}, {hi}]")));
            }
        }
        None => {
            rows.push(CheckRow::skipped("oracle_gap", "no closed-form oracle for this model"));
            rows.push(CheckRow::skipped("oracle_bounds", "no closed-form oracle for this model"));
        }
    }

    let entries = (grid.time_steps() + 1) * grid.node_count() * spec.regimes();
    if entries <= LATTICE_LIMIT {
        let (gap, residual) = lattice_equivalence(field, spec, opts.params)?;
        rows.push(CheckRow::at_most("lattice_equivalence", gap, 1e-12, "solver against exhaustive lattice".into()));
        rows.push(CheckRow::at_most("lattice_self_residual", residual, 0.0, "one-step identity of the lattice".into()));
    } else {
        let why = format!("{entries} entries exceed the lattice limit");
        rows.push(CheckRow::skipped("lattice_equivalence", &why));
        rows.push(CheckRow::skipped("lattice_self_residual", &why));
    }

    Ok(VerifyReport { model: spec.name().to_string(), fingerprint: spec.fingerprint(), rows })
}
