/// Best value reachable by one immediate switch out of `from`:
/// `max_{j ≠ from} values[j] − costs[j]`, where `costs[j] = c(x, from, j)`.
/// Returns the maximizing target; ties go to the lowest regime index.
pub fn switching_envelope(values: &[f64], costs: &[f64], from: usize) -> (f64, usize) {
    debug_assert!(values.len() >= 2 && costs.len() == values.len());
    let mut best = f64::NEG_INFINITY;
    let mut target = usize::MAX;
    for (j, (v, c)) in values.iter().zip(costs).enumerate() {
        if j == from {
            continue;
        }
        let cand = v - c;
        if target == usize::MAX || cand > best {
            best = cand;
            target = j;
        }
    }
    (best, target)
}

/// Gauss–Seidel projection `v_i ← max(v_i, 𝓗v_i)` over the regimes of one
/// node until no entry rises by more than `tol`. `costs` is row-major m×m.
/// Positive costs rule out improving cycles, so `max_sweeps = m − 1`
/// improving sweeps always suffice; one more sweep confirms the fixed point.
/// Returns `false` when the fixed point was not confirmed.
pub(crate) fn project_node(values: &mut [f64], costs: &[f64], tol: f64, max_sweeps: usize) -> bool {
    let m = values.len();
    for _ in 0..=max_sweeps {
        let mut changed = false;
        for i in 0..m {
            let (h, _) = switching_envelope(values, &costs[i * m..(i + 1) * m], i);
            if h > values[i] {
                if h - values[i] > tol {
                    changed = true;
                }
                values[i] = h;
            }
        }
        if !changed {
            return true;
        }
    }
    false
}
