use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::grid::{build_grid, GridSpec};
use crate::model::{
    builtin_counterexample, builtin_pumped_storage, ClosureCoefficients, ConstraintDomain,
    DeclaredConstants, PumpedStorageParams, RegimeSet,
};

fn level(n: u32) -> PenaltyLevel {
    PenaltyLevel::new(n).unwrap()
}

fn line_model(m: usize, coeffs: ClosureCoefficients) -> ModelSpec {
    ModelSpec::new(
        "line",
        1,
        RegimeSet::new(m).unwrap(),
        1.0,
        ConstraintDomain::Box { lower: vec![-10.0], upper: vec![10.0] },
        DeclaredConstants { lipschitz: 1.0, min_cost: 1.0 },
        Arc::new(coeffs),
    )
    .unwrap()
}

fn line_grid(spec: &ModelSpec, points: usize, steps: Option<usize>) -> Arc<Grid> {
    Arc::new(build_grid(spec, &GridSpec::new(vec![(-11.0, 11.0)], vec![points], steps)).unwrap())
}

fn level_of(grid: &Grid, m: usize, v: impl Fn(&[f64], usize) -> f64) -> Vec<f64> {
    (0..grid.node_count())
        .flat_map(|node| {
            let x = grid.coordinates(node);
            (0..m).map(|i| v(&x, i)).collect::<Vec<_>>()
        })
        .collect()
}

/// Best value over every chain of distinct switches starting at `i`.
fn chain_oracle(g: &[f64], cost: impl Fn(usize, usize) -> f64 + Copy, i: usize) -> f64 {
    fn walk(g: &[f64], cost: &dyn Fn(usize, usize) -> f64, at: usize, paid: f64, seen: &mut Vec<usize>) -> f64 {
        let mut best = g[at] - paid;
        for j in 0..g.len() {
            if !seen.contains(&j) {
                seen.push(j);
                best = best.max(walk(g, cost, j, paid + cost(at, j), seen));
                seen.pop();
            }
        }
        best
    }
    walk(g, &cost, i, 0.0, &mut vec![i])
}

#[test]
fn generator_exact_on_affine() {
    let mut c = ClosureCoefficients::zero("affine", 1);
    c.drift = Box::new(|_, i, out| out[0] = if i == 0 { 0.7 } else { -1.3 });
    let spec = line_model(2, c);
    let grid = line_grid(&spec, 23, Some(1));
    let vals = level_of(&grid, 2, |x, _| 2.5 * x[0] + 1.0);
    let node = grid.nearest_node(&[0.0]).unwrap();
    assert!((generator_apply(&spec, &grid, &vals, node, 0).unwrap() - 0.7 * 2.5).abs() < 1e-12);
    assert!((generator_apply(&spec, &grid, &vals, node, 1).unwrap() + 1.3 * 2.5).abs() < 1e-12);
}

#[test]
fn generator_exact_on_quadratic() {
    let mut c = ClosureCoefficients::zero("quadratic", 1);
    c.volatility = Box::new(|_, _, out| out[0] = 1.0);
    let spec = line_model(2, c);
    let grid = line_grid(&spec, 45, Some(1000));
    let vals = level_of(&grid, 2, |x, _| x[0] * x[0]);
    let node = grid.nearest_node(&[1.5]).unwrap();
    assert!((generator_apply(&spec, &grid, &vals, node, 0).unwrap() - 1.0).abs() < 1e-10);
}

#[test]
fn generator_counterexample_drift() {
    let spec = builtin_counterexample(1.0, 0.5).unwrap();
    let grid = build_grid(&spec, &GridSpec::new(vec![(-1.0, 1.0), (-0.5, 2.0)], vec![11, 26], None)).unwrap();
    let vals = level_of(&grid, 2, |x, _| x[1]);
    let node = grid.nearest_node(&[0.0, 1.0]).unwrap();
    assert!((generator_apply(&spec, &grid, &vals, node, 0).unwrap() + 1.0).abs() < 1e-12);
    assert_eq!(generator_apply(&spec, &grid, &vals, node, 1).unwrap(), 0.0);
}

#[test]
fn cross_terms_use_monotone_stencil() {
    // σσᵀ = [[1, 0.5], [0.5, 1]] is diagonally dominant on a square grid
    let mut c = ClosureCoefficients::zero("cross", 2);
    c.volatility = Box::new(|_, _, out| out.copy_from_slice(&[1.0, 0.0, 0.5, 0.75f64.sqrt()]));
    let spec = ModelSpec::new(
        "cross",
        2,
        RegimeSet::new(2).unwrap(),
        1.0,
        ConstraintDomain::Box { lower: vec![-1.0, -1.0], upper: vec![1.0, 1.0] },
        DeclaredConstants { lipschitz: 1.0, min_cost: 1.0 },
        Arc::new(c),
    )
    .unwrap();
    let grid = build_grid(&spec, &GridSpec::new(vec![(-2.0, 2.0), (-2.0, 2.0)], vec![17, 17], Some(100))).unwrap();
    let a = spec.diffusion(&[0.0, 0.0], 0);
    let vals = level_of(&grid, 2, |x, _| x[0] * x[1]);
    let node = grid.nearest_node(&[0.0, 0.0]).unwrap();
    let got = generator_apply(&spec, &grid, &vals, node, 0).unwrap();
    assert!((got - a[1]).abs() < 1e-12, "got {got}, want {}", a[1]);
    let s = build_stencil(&spec, &grid, node, 0).unwrap();
    assert!(s.neighbors.iter().all(|&(_, w)| w >= 0.0));
    let total: f64 = s.neighbors.iter().map(|&(_, w)| w).sum();
    assert!((total + s.center).abs() < 1e-12);
}

#[test]
fn non_dominant_cross_terms_rejected() {
    let mut c = ClosureCoefficients::zero("skewed", 2);
    c.volatility = Box::new(|_, _, out| out.copy_from_slice(&[1.0, 0.0, 1.0, 0.0]));
    let spec = ModelSpec::new(
        "skewed",
        2,
        RegimeSet::new(2).unwrap(),
        1.0,
        ConstraintDomain::Box { lower: vec![-1.0, -1.0], upper: vec![1.0, 1.0] },
        DeclaredConstants { lipschitz: 1.0, min_cost: 1.0 },
        Arc::new(c),
    )
    .unwrap();
    // a = [[1,1],[1,1]] with h₁ ≠ h₂ leaves a negative axis weight
    let grid = Arc::new(
        build_grid(&spec, &GridSpec::new(vec![(-2.0, 2.0), (-2.0, 2.0)], vec![9, 17], Some(400))).unwrap(),
    );
    let err = Scheme::new(&spec, level(1), grid, SchemeParams::default()).unwrap_err();
    assert!(err.is_config());
}

#[test]
fn pure_reward_accrual() {
    let mut c = ClosureCoefficients::zero("accrual", 1);
    c.running = Box::new(|_, _| 1.0);
    let spec = line_model(2, c);
    let grid = line_grid(&spec, 23, Some(10));
    let next = vec![0.0; grid.node_count() * 2];
    let out = backward_step(&spec, level(1), Arc::clone(&grid), &next, SchemeParams::default()).unwrap();
    for node in (0..grid.node_count()).filter(|&v| grid.in_domain(v)) {
        assert_eq!(out[node * 2], grid.dt());
        assert_eq!(out[node * 2 + 1], grid.dt());
    }
}

#[test]
fn terminal_two_regimes() {
    let mut c = ClosureCoefficients::zero("terminal2", 1);
    c.terminal = Box::new(|_, i| if i == 0 { 0.0 } else { 10.0 });
    let spec = line_model(2, c);
    let grid = line_grid(&spec, 5, Some(1));
    let v = terminal_condition(&spec, level(1), Arc::clone(&grid), SchemeParams::default()).unwrap();
    let node = grid.nearest_node(&[0.0]).unwrap();
    assert_eq!(&v[node * 2..node * 2 + 2], &[9.0, 10.0]);
}

#[test]
fn terminal_three_regimes_matches_chain_oracle() {
    let g = [0.0, 0.0, 5.0];
    let mut c = ClosureCoefficients::zero("terminal3", 1);
    c.terminal = Box::new(move |_, i| g[i]);
    let spec = line_model(3, c);
    let grid = line_grid(&spec, 5, Some(1));
    let v = terminal_condition(&spec, level(1), Arc::clone(&grid), SchemeParams::default()).unwrap();
    let node = grid.nearest_node(&[0.0]).unwrap();
    let want: Vec<f64> = (0..3).map(|i| chain_oracle(&g, |_, _| 1.0, i)).collect();
    assert_eq!(want, vec![4.0, 4.0, 5.0]);
    assert_eq!(&v[node * 3..node * 3 + 3], want.as_slice());
}

#[test]
fn counterexample_terminal_is_zero_on_domain() {
    let spec = builtin_counterexample(1.0, 0.5).unwrap();
    let grid = Arc::new(build_grid(&spec, &GridSpec::new(vec![(-1.0, 1.0), (-0.5, 2.0)], vec![5, 26], None)).unwrap());
    let v = terminal_condition(&spec, level(8), Arc::clone(&grid), SchemeParams::default()).unwrap();
    for node in (0..grid.node_count()).filter(|&v| grid.in_domain(v)) {
        assert_eq!(v[node * 2], 0.0);
        assert_eq!(v[node * 2 + 1], 0.0);
    }
}

#[test]
fn cfl_violation_is_reported() {
    let spec = builtin_counterexample(1.0, 0.5).unwrap();
    let grid = Arc::new(build_grid(&spec, &GridSpec::new(vec![(-1.0, 1.0), (-0.5, 2.0)], vec![5, 26], Some(5))).unwrap());
    let err = Scheme::new(&spec, level(1), grid, SchemeParams::default()).unwrap_err();
    assert!(matches!(err, Error::CflViolated { .. }));
}

#[test]
fn zero_model_solves_to_zero() {
    let spec = line_model(3, ClosureCoefficients::zero("zero", 1));
    let grid = line_grid(&spec, 23, Some(7));
    let field = solve(&spec, level(4), grid, SchemeParams::default()).unwrap();
    let grid = field.grid();
    for k in 0..field.levels() {
        for node in (0..grid.node_count()).filter(|&v| grid.in_domain(v)) {
            for i in 0..3 {
                assert_eq!(field.get(k, node, i), 0.0);
            }
        }
    }
}

#[test]
fn counterexample_matches_closed_form() {
    let spec = builtin_counterexample(1.0, 0.5).unwrap();
    let grid = Arc::new(build_grid(&spec, &GridSpec::new(vec![(-1.0, 1.0), (-0.5, 2.0)], vec![5, 151], None)).unwrap());
    let field = solve(&spec, level(64), grid, SchemeParams::default()).unwrap();
    assert!((field.interp(0.0, &[0.0, 1.5], 0).unwrap() - 1.0).abs() < 1e-9);
    assert!((field.interp(0.0, &[0.0, 0.1], 0).unwrap() - 0.5).abs() < 1e-9);
    assert!((field.interp(0.0, &[0.0, 0.1], 1).unwrap() - 1.0).abs() < 1e-9);

    let policy = extract_policy(&field, &spec, 1e-12);
    let g = field.grid();
    let low = g.nearest_node(&[0.0, 0.2]).unwrap();
    assert_eq!(policy.action(0, low, 0), Action::SwitchTo(1));
    for node in (0..g.node_count()).filter(|&v| g.in_domain(v)) {
        assert_eq!(policy.action(0, node, 1), Action::Keep);
    }
}

#[test]
fn policy_threshold_semantics() {
    let mut c = ClosureCoefficients::zero("threshold", 1);
    let eps = 1e-6;
    c.terminal = Box::new(move |_, i| if i == 0 { 10.0 * eps } else { 1.0 });
    let spec = line_model(2, c);
    let grid = line_grid(&spec, 5, Some(1));
    let values = level_of(&grid, 2, |_, i| if i == 0 { 10.0 * eps } else { 1.0 });
    let values = [values.clone(), values].concat();
    let field = ValueField::new(grid, &spec, level(1), values).unwrap();
    // v − 𝓗v = 10·eps in regime 0
    let policy = extract_policy(&field, &spec, eps);
    assert_eq!(policy.action(0, 2, 0), Action::Keep);
    let policy = extract_policy(&field, &spec, 20.0 * eps);
    assert_eq!(policy.action(0, 2, 0), Action::SwitchTo(1));
}

#[test]
fn obstacle_holds_after_each_step() {
    let spec = builtin_pumped_storage(1.0, PumpedStorageParams::default(), 0.5, 10.0).unwrap();
    let grid = Arc::new(build_grid(&spec, &GridSpec::new(vec![(-0.5, 1.5), (0.0, 20.0)], vec![9, 21], None)).unwrap());
    let field = solve(&spec, level(4), Arc::clone(&grid), SchemeParams::default()).unwrap();
    let m = spec.regimes();
    for k in 0..field.levels() {
        for node in 0..grid.node_count() {
            let x = grid.coordinates(node);
            let vals = &field.level(k)[node * m..(node + 1) * m];
            for i in 0..m {
                let costs: Vec<f64> = (0..m).map(|j| if j == i { 0.0 } else { spec.switch_cost(&x, i, j) }).collect();
                let (h, _) = switching_envelope(vals, &costs, i);
                assert!(vals[i] >= h - 1e-12);
            }
        }
    }
}

#[test]
fn larger_penalty_lowers_values() {
    let spec = builtin_pumped_storage(1.0, PumpedStorageParams::default(), 0.5, 10.0).unwrap();
    let grid = Arc::new(build_grid(&spec, &GridSpec::new(vec![(-0.5, 1.5), (0.0, 20.0)], vec![9, 21], None)).unwrap());
    let a = solve(&spec, level(2), Arc::clone(&grid), SchemeParams::default()).unwrap();
    let b = solve(&spec, level(8), grid, SchemeParams::default()).unwrap();
    for (x, y) in a.values().iter().zip(b.values()) {
        assert!(*y <= *x + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn backward_step_is_monotone(seed in proptest::collection::vec(-5.0f64..5.0, 2 * 9 * 21),
                                 bump in proptest::collection::vec(0.0f64..2.0, 2 * 9 * 21),
                                 n in 1u32..20) {
        let spec = builtin_counterexample(1.0, 0.5).unwrap();
        let grid = Arc::new(build_grid(&spec, &GridSpec::new(vec![(-1.0, 1.0), (-0.5, 2.0)], vec![9, 21], None)).unwrap());
        let scheme = Scheme::new(&spec, level(n), grid, SchemeParams::default()).unwrap();
        let upper: Vec<f64> = seed.iter().zip(&bump).map(|(a, b)| a + b).collect();
        let lo = scheme.step(0, &seed).unwrap();
        let hi = scheme.step(0, &upper).unwrap();
        for (a, b) in lo.iter().zip(&hi) {
            prop_assert!(a <= b);
        }
    }

    #[test]
    fn diffusive_step_is_monotone(seed in proptest::collection::vec(-5.0f64..5.0, 3 * 9 * 11),
                                  bump in proptest::collection::vec(0.0f64..2.0, 3 * 9 * 11)) {
        let spec = builtin_pumped_storage(1.0, PumpedStorageParams::default(), 0.5, 10.0).unwrap();
        let grid = Arc::new(build_grid(&spec, &GridSpec::new(vec![(-0.5, 1.5), (0.0, 20.0)], vec![9, 11], None)).unwrap());
        let scheme = Scheme::new(&spec, level(4), grid, SchemeParams::default()).unwrap();
        let upper: Vec<f64> = seed.iter().zip(&bump).map(|(a, b)| a + b).collect();
        let lo = scheme.step(0, &seed).unwrap();
        let hi = scheme.step(0, &upper).unwrap();
        for (a, b) in lo.iter().zip(&hi) {
            prop_assert!(a <= b);
        }
    }

    #[test]
    fn transition_weights_are_probabilities(node in 0usize..(9 * 11), i in 0usize..3) {
        let spec = builtin_pumped_storage(1.0, PumpedStorageParams::default(), 0.5, 10.0).unwrap();
        let grid = Arc::new(build_grid(&spec, &GridSpec::new(vec![(-0.5, 1.5), (0.0, 20.0)], vec![9, 11], None)).unwrap());
        let scheme = Scheme::new(&spec, level(4), grid, SchemeParams::default()).unwrap();
        let (stay, moves) = scheme.transitions(node, i);
        prop_assert!(stay >= 0.0);
        prop_assert!(moves.iter().all(|&(_, w)| w > 0.0));
        let total = stay + moves.iter().map(|&(_, w)| w).sum::<f64>();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }
}
