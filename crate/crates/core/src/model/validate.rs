use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::ModelSpec;
use crate::error::{Error, Result};

/// Sampled evidence for the Lipschitz bound and the cost floor.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub seed: u64,
    pub sample_count: usize,
    pub region: Vec<(f64, f64)>,
    pub max_ratio_drift: f64,
    pub max_ratio_volatility: f64,
    pub max_ratio_running: f64,
    pub max_ratio_terminal: f64,
    pub max_ratio_cost: f64,
    pub min_cost: f64,
    pub declared_lipschitz: f64,
    pub declared_min_cost: f64,
    pub lipschitz_pass: bool,
    pub cost_pass: bool,
    pub pass: bool,
}

impl ValidationReport {
    pub fn max_ratio(&self) -> f64 {
        [
            self.max_ratio_drift,
            self.max_ratio_volatility,
            self.max_ratio_running,
            self.max_ratio_terminal,
            self.max_ratio_cost,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

struct Sample {
    x: Vec<f64>,
    drift: Vec<Vec<f64>>,
    vol: Vec<Vec<f64>>,
    running: Vec<f64>,
    terminal: Vec<f64>,
    cost: Vec<f64>,
}

fn finite(field: &str, x: &[f64], values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Validation {
            field: field.to_string(),
            point: x.to_vec(),
            reason: "non-finite coefficient value".into(),
        })
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Checks the declared Lipschitz constant and cost floor on `sample_count`
/// uniform points of `region` drawn from a seeded stream. Every pair of
/// sample points contributes a Lipschitz ratio, so the cost is quadratic in
/// `sample_count`.
pub fn validate_model(
    spec: &ModelSpec,
    region: &[(f64, f64)],
    sample_count: usize,
    seed: u64,
) -> Result<ValidationReport> {
    let d = spec.dim();
    let m = spec.regimes();
    if region.len() != d {
        return Err(Error::config(format!("validation region must have {d} coordinates")));
    }
    if sample_count < 2 {
        return Err(Error::config("validation needs at least 2 sample points"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(sample_count);
    for _ in 0..sample_count {
        let x: Vec<f64> = region
            .iter()
            .map(|&(lo, hi)| if hi > lo { rng.random_range(lo..=hi) } else { lo })
            .collect();
        let mut s = Sample {
            x: x.clone(),
            drift: Vec::with_capacity(m),
            vol: Vec::with_capacity(m),
            running: Vec::with_capacity(m),
            terminal: Vec::with_capacity(m),
            cost: vec![0.0; m * m],
        };
        for i in 0..m {
            let mu = spec.drift(&x, i);
            finite("drift", &x, &mu)?;
            let sig = spec.volatility(&x, i);
            finite("volatility", &x, &sig)?;
            let f = spec.running_reward(&x, i);
            finite("running_reward", &x, &[f])?;
            let g = spec.terminal_reward(&x, i);
            finite("terminal_reward", &x, &[g])?;
            s.drift.push(mu);
            s.vol.push(sig);
            s.running.push(f);
            s.terminal.push(g);
            for j in (0..m).filter(|&j| j != i) {
                let c = spec.switch_cost(&x, i, j);
                finite("switch_cost", &x, &[c])?;
                s.cost[i * m + j] = c;
            }
        }
        samples.push(s);
    }

    let mut r = [0.0f64; 5];
    for a in 0..samples.len() {
        for b in a + 1..samples.len() {
            let (p, q) = (&samples[a], &samples[b]);
            let h = dist(&p.x, &q.x);
            if h == 0.0 {
                continue;
            }
            for i in 0..m {
                r[0] = r[0].max(dist(&p.drift[i], &q.drift[i]) / h);
                r[1] = r[1].max(dist(&p.vol[i], &q.vol[i]) / h);
                r[2] = r[2].max((p.running[i] - q.running[i]).abs() / h);
                r[3] = r[3].max((p.terminal[i] - q.terminal[i]).abs() / h);
                for j in (0..m).filter(|&j| j != i) {
                    r[4] = r[4].max((p.cost[i * m + j] - q.cost[i * m + j]).abs() / h);
                }
            }
        }
    }
    let min_cost = samples
        .iter()
        .flat_map(|s| (0..m).flat_map(move |i| (0..m).filter(move |&j| j != i).map(move |j| s.cost[i * m + j])))
        .fold(f64::INFINITY, f64::min);

    let consts = spec.constants();
    let max_ratio = r.iter().copied().fold(0.0, f64::max);
    let lipschitz_pass = max_ratio <= consts.lipschitz * (1.0 + 1e-12) + 1e-12;
    let cost_pass = consts.min_cost > 0.0 && min_cost >= consts.min_cost;
    Ok(ValidationReport {
        seed,
        sample_count,
        region: region.to_vec(),
        max_ratio_drift: r[0],
        max_ratio_volatility: r[1],
        max_ratio_running: r[2],
        max_ratio_terminal: r[3],
        max_ratio_cost: r[4],
        min_cost,
        declared_lipschitz: consts.lipschitz,
        declared_min_cost: consts.min_cost,
        lipschitz_pass,
        cost_pass,
        pass: lipschitz_pass && cost_pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        builtin_counterexample, ClosureCoefficients, ConstraintDomain, DeclaredConstants, RegimeSet,
    };
    use std::sync::Arc;

    fn line_model(coeffs: ClosureCoefficients, consts: DeclaredConstants) -> ModelSpec {
        ModelSpec::new(
            "line",
            1,
            RegimeSet::new(2).unwrap(),
            1.0,
            ConstraintDomain::Box { lower: vec![-1.0], upper: vec![1.0] },
            consts,
            Arc::new(coeffs),
        )
        .unwrap()
    }

    #[test]
    fn counterexample_passes() {
        let spec = builtin_counterexample(1.0, 0.5).unwrap();
        let rep = validate_model(&spec, &[(-1.0, 1.0), (-0.5, 2.0)], 64, 11).unwrap();
        assert_eq!(rep.min_cost, 0.5);
        assert_eq!(rep.max_ratio(), 0.0);
        assert!(rep.pass);
    }

    #[test]
    fn zero_cost_fails_positivity() {
        let mut c = ClosureCoefficients::zero("free", 1);
        c.cost = Box::new(|_, _, _| 0.0);
        let spec = line_model(c, DeclaredConstants { lipschitz: 1.0, min_cost: 0.0 });
        let rep = validate_model(&spec, &[(-1.0, 1.0)], 20, 1).unwrap();
        assert!(!rep.cost_pass);
        assert!(!rep.pass);
    }

    #[test]
    fn quadratic_drift_exceeds_unit_lipschitz() {
        // Brute force over a 100-point grid of [-2, 2]: max |x + x'| over
        // distinct nodes is 2 + (2 - 4/99).
        let grid: Vec<f64> = (0..100).map(|k| -2.0 + 4.0 * k as f64 / 99.0).collect();
        let mut oracle: f64 = 0.0;
        for a in 0..100 {
            for b in a + 1..100 {
                let (x, y) = (grid[a], grid[b]);
                oracle = oracle.max((x * x - y * y).abs() / (x - y).abs());
            }
        }
        assert!((oracle - 3.959_595_959_595_96).abs() < 1e-9);

        let mut c = ClosureCoefficients::zero("square", 1);
        c.drift = Box::new(|x, _, out| out[0] = x[0] * x[0]);
        let spec = line_model(c, DeclaredConstants { lipschitz: 1.0, min_cost: 1.0 });
        let rep = validate_model(&spec, &[(-2.0, 2.0)], 100, 5).unwrap();
        assert!(!rep.lipschitz_pass);
        assert!(rep.max_ratio_drift <= 4.0);
        assert!((rep.max_ratio_drift - oracle).abs() < 0.15, "{}", rep.max_ratio_drift);
    }

    #[test]
    fn non_finite_coefficient_names_field() {
        let mut c = ClosureCoefficients::zero("nan", 1);
        c.running = Box::new(|x, _| if x[0] > 0.0 { f64::NAN } else { 0.0 });
        let spec = line_model(c, DeclaredConstants { lipschitz: 1.0, min_cost: 1.0 });
        match validate_model(&spec, &[(-1.0, 1.0)], 50, 2) {
            Err(Error::Validation { field, point, .. }) => {
                assert_eq!(field, "running_reward");
                assert!(point[0] > 0.0);
            }
            other => panic!("expected validation failure, got {other:?}"),
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = builtin_counterexample(1.0, 0.5).unwrap();
        let a = validate_model(&spec, &[(-1.0, 1.0), (0.0, 1.0)], 30, 9).unwrap();
        let b = validate_model(&spec, &[(-1.0, 1.0), (0.0, 1.0)], 30, 9).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}
