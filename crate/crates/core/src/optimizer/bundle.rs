//! Search directions for the transfer step from a small bundle of cuts.
//!
//! The optimal value is concave but kinked in the transfers, and at a kink
//! the multipliers of a single inner solution describe only one side. Cuts
//! collected at the current point and at rejected trial points are combined
//! into the shortest admissible ascent direction, each cut penalized by how
//! far its linearization overestimates the current value.

use nalgebra::{DMatrix, DVector};

/// Linear upper model of the value (or of the secondary-rate slack when
/// `constraint` is set) seen from the current point.
#[derive(Clone, Debug)]
pub(crate) struct Cut {
    pub slope: Vec<f64>,
    /// Overestimate of the model at the current point; never negative.
    pub error: f64,
    pub constraint: bool,
}

impl Cut {
    pub fn exact(slope: Vec<f64>) -> Self {
        Self {
            slope,
            error: 0.0,
            constraint: false,
        }
    }

    /// Re-anchors the cut after the current point moved by `moved` and the
    /// value rose by `gain`.
    pub fn shift(&mut self, moved: &[f64], gain: f64) {
        let lin = dot(&self.slope, moved);
        let drop = if self.constraint { 0.0 } else { gain };
        self.error = (self.error + lin - drop).max(0.0);
    }
}

/// Outward normals of the transfer constraints active at `x`.
pub(crate) fn active_normals(x: &[f64], cap: &[f64], budget: &[f64]) -> Vec<Vec<f64>> {
    let n = x.len();
    let scale = 1.0 + budget.last().copied().unwrap_or(0.0).abs();
    let tol = 1e-10 * scale;
    let mut out = Vec::new();
    let mut acc = 0.0;
    for i in 0..n {
        let unit = |sign: f64| {
            let mut v = vec![0.0; n];
            v[i] = sign;
            v
        };
        if x[i] <= tol {
            out.push(unit(-1.0));
        }
        if x[i] >= cap[i] - tol {
            out.push(unit(1.0));
        }
        acc += x[i];
        if acc >= budget[i] - tol {
            out.push((0..n).map(|j| if j <= i { 1.0 } else { 0.0 }).collect());
        }
    }
    out
}

/// Direction `sum theta_i g_i - sum nu_j a_j` minimizing
/// `|.|^2 / 2 + sum theta_i e_i / step` over `theta` in the simplex and
/// `nu >= 0`. Returns the direction and the cut weights.
pub(crate) fn direction(cuts: &[Cut], normals: &[Vec<f64>], step: f64) -> (Vec<f64>, Vec<f64>) {
    let m = cuts.len();
    let size = m + normals.len();
    let n = cuts[0].slope.len();
    let cols: Vec<Vec<f64>> = cuts
        .iter()
        .map(|c| c.slope.clone())
        .chain(normals.iter().map(|a| a.iter().map(|v| -v).collect()))
        .collect();
    let linear: Vec<f64> = (0..size).map(|c| if c < m { cuts[c].error / step } else { 0.0 }).collect();
    let mut hessian: Vec<Vec<f64>> = cols.iter().map(|a| cols.iter().map(|b| dot(a, b)).collect()).collect();
    let ridge = 1e-13 * (1.0 + (0..size).map(|i| hessian[i][i]).fold(0.0, f64::max));
    for (i, row) in hessian.iter_mut().enumerate() {
        row[i] += ridge;
    }
    let z = active_set(&hessian, &linear, m);
    let mut v = vec![0.0; n];
    for (c, &w) in cols.iter().zip(&z) {
        for (vi, ci) in v.iter_mut().zip(c) {
            *vi += w * ci;
        }
    }
    (v, z[..m].to_vec())
}

/// Minimizes `z'Hz/2 + c'z` over `z >= 0` with the first `m` entries
/// summing to one. `H` must be positive definite.
fn active_set(h: &[Vec<f64>], c: &[f64], m: usize) -> Vec<f64> {
    let size = c.len();
    let mut z = vec![0.0; size];
    z[0] = 1.0;
    let mut free = vec![false; size];
    free[0] = true;
    let in_sum = |i: usize| if i < m { 1.0 } else { 0.0 };
    for _ in 0..10 * size + 50 {
        // Equality-constrained minimizer over the free entries.
        let idx: Vec<usize> = (0..size).filter(|&i| free[i]).collect();
        let k = idx.len();
        let system = DMatrix::from_fn(k + 1, k + 1, |r, s| match (idx.get(r), idx.get(s)) {
            (Some(&i), Some(&j)) => h[i][j],
            (Some(&i), None) => in_sum(i),
            (None, Some(&j)) => in_sum(j),
            (None, None) => 0.0,
        });
        let rhs = DVector::from_fn(k + 1, |r, _| idx.get(r).map_or(1.0, |&i| -c[i]));
        let Some(sol) = system.lu().solve(&rhs) else {
            break;
        };
        let target: Vec<f64> = (0..size)
            .map(|i| idx.iter().position(|&j| j == i).map_or(0.0, |r| sol[r]))
            .collect();
        let shared = sol[k];

        let blocking = idx
            .iter()
            .filter(|&&i| target[i] < 0.0)
            .map(|&i| (z[i] / (z[i] - target[i]), i))
            .min_by(|a, b| a.0.total_cmp(&b.0));
        match blocking {
            Some((t, i)) if t < 1.0 => {
                for j in 0..size {
                    z[j] += t * (target[j] - z[j]);
                }
                z[i] = 0.0;
                free[i] = false;
            }
            _ => {
                z = target.iter().map(|v| v.max(0.0)).collect();
                // Multipliers of the entries held at zero.
                let worst = (0..size)
                    .filter(|&i| !free[i])
                    .map(|i| {
                        let grad: f64 = (0..size).map(|j| h[i][j] * z[j]).sum::<f64>() + c[i];
                        (grad + shared * in_sum(i), i)
                    })
                    .min_by(|a, b| a.0.total_cmp(&b.0));
                match worst {
                    Some((mult, i)) if mult < -1e-14 * (1.0 + h[i][i]) => free[i] = true,
                    _ => break,
                }
            }
        }
    }
    z
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
