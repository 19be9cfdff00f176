//! Closed constraint sets with exact Euclidean distance.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};

/// Largest number of half-spaces accepted in a polyhedral domain; the exact
/// projection enumerates active sets.
pub const MAX_HALFSPACES: usize = 16;

const ACTIVE_TOL: f64 = 1e-12;

/// Axis-aligned bounds of a region, one `(lo, hi)` pair per coordinate.
pub type Bounds = Vec<(f64, f64)>;

/// A nonempty closed subset of ℝᵈ.
///
/// Unbounded box sides are stored as infinities. Half-spaces are written
/// `normal · x ≤ offset`.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintDomain {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    HalfSpace { normal: Vec<f64>, offset: f64 },
    Ball { center: Vec<f64>, radius: f64 },
    Polyhedron { normals: Vec<Vec<f64>>, offsets: Vec<f64> },
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl ConstraintDomain {
    pub fn dim(&self) -> usize {
        match self {
            ConstraintDomain::Box { lower, .. } => lower.len(),
            ConstraintDomain::HalfSpace { normal, .. } => normal.len(),
            ConstraintDomain::Ball { center, .. } => center.len(),
            ConstraintDomain::Polyhedron { normals, .. } => {
                normals.first().map(Vec::len).unwrap_or(0)
            }
        }
    }

    /// Checks well-formedness and nonemptiness.
    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(Error::config("constraint domain has dimension 0"));
        }
        match self {
            ConstraintDomain::Box { lower, upper } => {
                if upper.len() != d {
                    return Err(Error::config("box bounds have mismatched lengths"));
                }
                for (k, (lo, hi)) in lower.iter().zip(upper).enumerate() {
                    if lo.is_nan() || hi.is_nan() || lo > hi || *lo == f64::INFINITY || *hi == f64::NEG_INFINITY {
                        return Err(Error::config(format!(
                            "box coordinate {k} has empty range [{lo}, {hi}]"
                        )));
                    }
                }
            }
            ConstraintDomain::HalfSpace { normal, offset } => {
                if !offset.is_finite() || normal.iter().any(|a| !a.is_finite()) {
                    return Err(Error::config("half-space parameters must be finite"));
                }
                if norm(normal) == 0.0 {
                    return Err(Error::config("half-space normal is zero"));
                }
            }
            ConstraintDomain::Ball { center, radius } => {
                if center.iter().any(|a| !a.is_finite()) || !radius.is_finite() || *radius < 0.0 {
                    return Err(Error::config(format!("invalid ball radius {radius}")));
                }
            }
            ConstraintDomain::Polyhedron { normals, offsets } => {
                if normals.is_empty() || normals.len() != offsets.len() {
                    return Err(Error::config(
                        "polyhedron needs matching, nonempty normals and offsets",
                    ));
                }
                if normals.len() > MAX_HALFSPACES {
                    return Err(Error::config(format!(
                        "polyhedron has {} half-spaces, at most {MAX_HALFSPACES} supported",
                        normals.len()
                    )));
                }
                for (a, b) in normals.iter().zip(offsets) {
                    if a.len() != d || a.iter().any(|v| !v.is_finite()) || !b.is_finite() {
                        return Err(Error::config("malformed polyhedron half-space"));
                    }
                    if norm(a) == 0.0 {
                        return Err(Error::config("polyhedron normal is zero"));
                    }
                }
                if polyhedron_projection(normals, offsets, &vec![0.0; d]).is_none() {
                    return Err(Error::config("polyhedron is empty"));
                }
            }
        }
        Ok(())
    }

    /// Euclidean distance `inf_{y ∈ D} |x − y|`; exactly zero on the domain.
    pub fn distance(&self, x: &[f64]) -> f64 {
        match self {
            ConstraintDomain::Box { lower, upper } => {
                let mut acc = 0.0;
                for ((xk, lo), hi) in x.iter().zip(lower).zip(upper) {
                    let e = if xk < lo {
                        lo - xk
                    } else if xk > hi {
                        xk - hi
                    } else {
                        0.0
                    };
                    acc += e * e;
                }
                acc.sqrt()
            }
            ConstraintDomain::HalfSpace { normal, offset } => {
                let s = dot(normal, x) - offset;
                if s <= 0.0 {
                    0.0
                } else {
                    s / norm(normal)
                }
            }
            ConstraintDomain::Ball { center, radius } => {
                let r: f64 = x
                    .iter()
                    .zip(center)
                    .map(|(a, c)| (a - c) * (a - c))
                    .sum::<f64>()
                    .sqrt();
                if r <= *radius {
                    0.0
                } else {
                    r - radius
                }
            }
            ConstraintDomain::Polyhedron { normals, offsets } => {
                if normals.iter().zip(offsets).all(|(a, b)| dot(a, x) <= *b) {
                    return 0.0;
                }
                match polyhedron_projection(normals, offsets, x) {
                    // outside points keep a positive distance
                    Some(y) => {
                        let d: f64 = x
                            .iter()
                            .zip(&y)
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum::<f64>()
                            .sqrt();
                        d.max(f64::MIN_POSITIVE)
                    }
                    None => f64::INFINITY,
                }
            }
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.distance(x) == 0.0
    }

    /// All supported kinds are convex.
    pub fn is_convex(&self) -> bool {
        true
    }

    /// Per-coordinate extent of the domain where it is bounded by an
    /// axis-aligned face (box sides, ball extent, axis-aligned half-spaces).
    pub fn coordinate_bounds(&self) -> Vec<(Option<f64>, Option<f64>)> {
        let d = self.dim();
        let fin = |v: f64| if v.is_finite() { Some(v) } else { None };
        match self {
            ConstraintDomain::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(lo, hi)| (fin(*lo), fin(*hi)))
                .collect(),
            ConstraintDomain::Ball { center, radius } => center
                .iter()
                .map(|c| (Some(c - radius), Some(c + radius)))
                .collect(),
            ConstraintDomain::HalfSpace { normal, offset } => {
                let mut out = vec![(None, None); d];
                axis_bound(normal, *offset, &mut out);
                out
            }
            ConstraintDomain::Polyhedron { normals, offsets } => {
                let mut out = vec![(None, None); d];
                for (a, b) in normals.iter().zip(offsets) {
                    axis_bound(a, *b, &mut out);
                }
                out
            }
        }
    }

    /// Unit outward normals of the constraints active at `x` (within `tol`).
    pub fn outward_normals(&self, x: &[f64], tol: f64) -> Vec<Vec<f64>> {
        let d = self.dim();
        match self {
            ConstraintDomain::Box { lower, upper } => {
                let mut out = Vec::new();
                for k in 0..d {
                    if lower[k].is_finite() && (x[k] - lower[k]).abs() <= tol {
                        let mut n = vec![0.0; d];
                        n[k] = -1.0;
                        out.push(n);
                    }
                    if upper[k].is_finite() && (x[k] - upper[k]).abs() <= tol {
                        let mut n = vec![0.0; d];
                        n[k] = 1.0;
                        out.push(n);
                    }
                }
                out
            }
            ConstraintDomain::HalfSpace { normal, offset } => {
                if (dot(normal, x) - offset).abs() <= tol * norm(normal) {
                    let s = norm(normal);
                    vec![normal.iter().map(|a| a / s).collect()]
                } else {
                    Vec::new()
                }
            }
            ConstraintDomain::Ball { center, radius } => {
                let diff: Vec<f64> = x.iter().zip(center).map(|(a, c)| a - c).collect();
                let r = norm(&diff);
                if r > 0.0 && (r - radius).abs() <= tol {
                    vec![diff.iter().map(|a| a / r).collect()]
                } else {
                    Vec::new()
                }
            }
            ConstraintDomain::Polyhedron { normals, offsets } => normals
                .iter()
                .zip(offsets)
                .filter(|(a, b)| (dot(a, x) - *b).abs() <= tol * norm(a))
                .map(|(a, _)| {
                    let s = norm(a);
                    a.iter().map(|v| v / s).collect()
                })
                .collect(),
        }
    }

    /// Draws up to `count` boundary points lying inside `region`. Fewer points
    /// are returned when the boundary misses the region.
    pub fn sample_boundary<R: Rng>(&self, rng: &mut R, region: &[(f64, f64)], count: usize) -> Vec<Vec<f64>> {
        let d = self.dim();
        let uniform = |rng: &mut R, k: usize, lo: f64, hi: f64| -> f64 {
            let lo = lo.max(region[k].0);
            let hi = hi.min(region[k].1);
            if hi <= lo {
                lo
            } else {
                rng.random_range(lo..=hi)
            }
        };
        let in_region = |x: &[f64]| {
            x.iter()
                .zip(region)
                .all(|(v, (lo, hi))| *v >= lo - 1e-12 && *v <= hi + 1e-12)
        };
        let mut out = Vec::with_capacity(count);
        match self {
            ConstraintDomain::Box { lower, upper } => {
                let faces: Vec<(usize, f64)> = (0..d)
                    .flat_map(|k| [(k, lower[k]), (k, upper[k])])
                    .filter(|(k, b)| b.is_finite() && *b >= region[*k].0 && *b <= region[*k].1)
                    .collect();
                if faces.is_empty() {
                    return out;
                }
                for _ in 0..count {
                    let (k, b) = faces[rng.random_range(0..faces.len())];
                    let x: Vec<f64> = (0..d)
                        .map(|j| if j == k { b } else { uniform(rng, j, lower[j], upper[j]) })
                        .collect();
                    out.push(x);
                }
            }
            ConstraintDomain::HalfSpace { normal, offset } => {
                let s2 = dot(normal, normal);
                for _ in 0..count * 20 {
                    if out.len() == count {
                        break;
                    }
                    let y: Vec<f64> = (0..d).map(|k| uniform(rng, k, f64::MIN, f64::MAX)).collect();
                    let shift = (dot(normal, &y) - offset) / s2;
                    let x: Vec<f64> = y.iter().zip(normal).map(|(a, n)| a - shift * n).collect();
                    if in_region(&x) {
                        out.push(x);
                    }
                }
            }
            ConstraintDomain::Ball { center, radius } => {
                for _ in 0..count * 20 {
                    if out.len() == count {
                        break;
                    }
                    let g: Vec<f64> = (0..d)
                        .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                        .collect();
                    let s = norm(&g);
                    if s == 0.0 {
                        continue;
                    }
                    let x: Vec<f64> = g
                        .iter()
                        .zip(center)
                        .map(|(a, c)| c + radius * a / s)
                        .collect();
                    if in_region(&x) {
                        out.push(x);
                    }
                }
            }
            ConstraintDomain::Polyhedron { normals, offsets } => {
                for _ in 0..count * 50 {
                    if out.len() == count {
                        break;
                    }
                    let r = rng.random_range(0..normals.len());
                    let a = &normals[r];
                    let y: Vec<f64> = (0..d).map(|k| uniform(rng, k, f64::MIN, f64::MAX)).collect();
                    let shift = (dot(a, &y) - offsets[r]) / dot(a, a);
                    let x: Vec<f64> = y.iter().zip(a).map(|(v, n)| v - shift * n).collect();
                    let feasible = normals
                        .iter()
                        .zip(offsets)
                        .all(|(a, b)| dot(a, &x) <= b + 1e-12 * (1.0 + b.abs()));
                    if feasible && in_region(&x) {
                        out.push(x);
                    }
                }
            }
        }
        out
    }
}

fn axis_bound(a: &[f64], b: f64, out: &mut [(Option<f64>, Option<f64>)]) {
    let nonzero: Vec<usize> = (0..a.len()).filter(|&k| a[k] != 0.0).collect();
    if let [k] = nonzero[..] {
        let v = b / a[k];
        if a[k] > 0.0 {
            out[k].1 = Some(out[k].1.map_or(v, |u: f64| u.min(v)));
        } else {
            out[k].0 = Some(out[k].0.map_or(v, |u: f64| u.max(v)));
        }
    }
}

/// Exact Euclidean projection of `x` onto `{y : a_r · y ≤ b_r}` by active-set
/// enumeration: the first linearly independent active set whose multipliers
/// are nonnegative and whose projection is feasible satisfies KKT and is
/// therefore the projection. `None` means the set is empty.
fn polyhedron_projection(normals: &[Vec<f64>], offsets: &[f64], x: &[f64]) -> Option<Vec<f64>> {
    let d = x.len();
    let rows = normals.len();
    let feasible = |y: &[f64]| {
        normals
            .iter()
            .zip(offsets)
            .all(|(a, b)| dot(a, y) <= b + ACTIVE_TOL * (1.0 + b.abs() + norm(a) * norm(y)))
    };
    if feasible(x) {
        return Some(x.to_vec());
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    for size in 1..=d.min(rows) {
        for subset in subsets(rows, size) {
            let a = DMatrix::from_fn(size, d, |r, c| normals[subset[r]][c]);
            let gram = &a * a.transpose();
            let rhs = DVector::from_fn(size, |r, _| dot(&normals[subset[r]], x) - offsets[subset[r]]);
            let Some(lambda) = gram.clone().lu().solve(&rhs) else {
                continue;
            };
            // Reject numerically singular active sets.
            if (&gram * &lambda - &rhs).amax() > 1e-9 * (1.0 + rhs.amax()) {
                continue;
            }
            if lambda.iter().any(|l| *l < -ACTIVE_TOL) {
                continue;
            }
            let step = a.transpose() * &lambda;
            let y: Vec<f64> = x.iter().zip(step.iter()).map(|(v, s)| v - s).collect();
            if feasible(&y) {
                let dist: f64 = step.norm();
                if best.as_ref().is_none_or(|(b, _)| dist < *b) {
                    best = Some((dist, y));
                }
            }
        }
        if best.is_some() {
            break;
        }
    }
    best.map(|(_, y)| y)
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}
