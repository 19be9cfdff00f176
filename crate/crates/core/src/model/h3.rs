//! Structural checks for three sufficient conditions of the lower growth
//! bound on the constrained value function: an absorbing regime on the
//! boundary, a regime that keeps the dynamics in the domain, and a regime
//! whose drift is nonpositive against the normal cone of a convex domain.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::ModelSpec;

const ZERO_TOL: f64 = 1e-12;
const ACTIVE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Serialize)]
pub struct H3Report {
    pub boundary_points: usize,
    /// (a) every sampled boundary point has a regime with μ = 0 and σ = 0.
    pub absorbing: bool,
    /// (b) a single regime whose drift is inward or tangent and whose noise
    /// has no normal component at every sampled boundary point.
    pub viable_regime: Option<usize>,
    /// (c) the domain is convex and a single regime satisfies p·μ ≤ 0 for
    /// sampled directions p of the normal cone.
    pub convex_regime: Option<usize>,
}

impl H3Report {
    pub fn any(&self) -> bool {
        self.absorbing || self.viable_regime.is_some() || self.convex_regime.is_some()
    }
}

/// Samples `boundary_sample` points of ∂D inside `region` and evaluates the
/// three conditions. Regime indices in the report are zero-based.
pub fn check_h3_sufficient(
    spec: &ModelSpec,
    region: &[(f64, f64)],
    boundary_sample: usize,
    seed: u64,
) -> H3Report {
    let d = spec.dim();
    let m = spec.regimes();
    let domain = spec.domain();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = domain.sample_boundary(&mut rng, region, boundary_sample);

    let mut absorbing = true;
    let mut viable = vec![true; m];
    let mut convex = vec![domain.is_convex(); m];

    for x in &points {
        let normals = domain.outward_normals(x, ACTIVE_TOL);
        let cone = normal_cone_directions(&normals, &mut rng);
        let mut has_absorbing = false;
        for i in 0..m {
            let mu = spec.drift(x, i);
            let sigma = spec.volatility(x, i);
            if mu.iter().chain(&sigma).all(|v| v.abs() <= ZERO_TOL) {
                has_absorbing = true;
            }
            for nu in &normals {
                let inward = dot(nu, &mu) <= ZERO_TOL;
                // σᵀν: noise component along the normal
                let quiet = (0..d).all(|c| {
                    (0..d).map(|r| sigma[r * d + c] * nu[r]).sum::<f64>().abs() <= ZERO_TOL
                });
                if !(inward && quiet) {
                    viable[i] = false;
                }
            }
            if cone.iter().any(|p| dot(p, &mu) > ZERO_TOL) {
                convex[i] = false;
            }
        }
        absorbing &= has_absorbing;
    }

    H3Report {
        boundary_points: points.len(),
        absorbing,
        viable_regime: viable.iter().position(|&ok| ok),
        convex_regime: convex.iter().position(|&ok| ok),
    }
}

/// The active normals, their pairwise sums, and a few random nonnegative
/// combinations.
fn normal_cone_directions<R: Rng>(normals: &[Vec<f64>], rng: &mut R) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = normals.to_vec();
    for a in 0..normals.len() {
        for b in a + 1..normals.len() {
            out.push(normals[a].iter().zip(&normals[b]).map(|(x, y)| x + y).collect());
        }
    }
    if normals.len() > 1 {
        for _ in 0..4 {
            let w: Vec<f64> = normals.iter().map(|_| rng.random_range(0.0..1.0)).collect();
            let d = normals[0].len();
            out.push(
                (0..d)
                    .map(|k| normals.iter().zip(&w).map(|(n, wi)| wi * n[k]).sum())
                    .collect(),
            );
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin::{STORE, PumpedStorage, PumpedStorageParams};
    use crate::model::{
        builtin_counterexample, ClosureCoefficients, ConstraintDomain, DeclaredConstants, RegimeSet,
    };
    use std::sync::Arc;

    #[test]
    fn counterexample_has_absorbing_regime() {
        let spec = builtin_counterexample(1.0, 0.5).unwrap();
        let rep = check_h3_sufficient(&spec, &[(-1.0, 1.0), (-0.5, 2.0)], 40, 1);
        assert_eq!(rep.boundary_points, 40);
        assert!(rep.absorbing);
        assert_eq!(rep.viable_regime, Some(1));
        assert_eq!(rep.convex_regime, Some(1));
    }

    #[test]
    fn pumped_storage_store_regime_is_viable() {
        let spec = PumpedStorage::new(1.0, PumpedStorageParams::default(), 0.5, 10.0)
            .unwrap()
            .spec();
        let rep = check_h3_sufficient(&spec, &[(-0.5, 1.5), (0.0, 20.0)], 40, 1);
        assert_eq!(rep.viable_regime, Some(STORE));
        // the price keeps moving in the store regime
        assert!(!rep.absorbing);
    }

    #[test]
    fn outward_drift_everywhere_fails_all() {
        let mut c = ClosureCoefficients::zero("outward", 1);
        // both regimes push toward the nearest face of [0, 1]
        c.drift = Box::new(|x, i, out| out[0] = if x[0] < 0.5 { -1.0 - i as f64 } else { 1.0 + i as f64 });
        let spec = ModelSpec::new(
            "outward",
            1,
            RegimeSet::new(2).unwrap(),
            1.0,
            ConstraintDomain::Box { lower: vec![0.0], upper: vec![1.0] },
            DeclaredConstants { lipschitz: 1.0, min_cost: 1.0 },
            Arc::new(c),
        )
        .unwrap();
        let rep = check_h3_sufficient(&spec, &[(-1.0, 2.0)], 20, 4);
        assert!(!rep.absorbing);
        assert_eq!(rep.viable_regime, None);
        assert_eq!(rep.convex_regime, None);
        assert!(!rep.any());
    }
}
