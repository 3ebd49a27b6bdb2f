//! Admissible energy transfers.
//!
//! A transfer vector is admissible when it is non-negative, never pushes
//! the ST battery past capacity on arrival (`E_s_i + alpha delta_r_i <=
//! b_max`) and never spends PT energy before it is harvested. Layer 3 steps
//! are projected back onto this set.

/// Per-slot upper bound `(b_max - E_s_i) / alpha`, or `None` when some slot
/// harvests more than the battery holds (no admissible policy exists).
pub fn transfer_caps(e_s: &[f64], b_max: f64, alpha: f64) -> Option<Vec<f64>> {
    e_s.iter()
        .map(|&e| if e > b_max { None } else { Some((b_max - e) / alpha) })
        .collect()
}

/// Euclidean projection of `y` onto `{0 <= x_i <= cap_i, sum_{i<=k} x_i <= budget[k]}`.
///
/// The projection is `x_i = clamp(y_i - theta_i, 0, cap_i)` with shifts
/// `theta` non-increasing over slots and rising only where a prefix budget
/// binds; the epochs are found tightest-first as in directional
/// water-filling.
pub fn project(y: &[f64], cap: &[f64], budget: &[f64]) -> Vec<f64> {
    let n = y.len();
    let take = |i: usize, theta: f64| (y[i] - theta).clamp(0.0, cap[i]);
    let used = |s: usize, k: usize, theta: f64| (s..=k).map(|i| take(i, theta)).sum::<f64>();

    let mut x = vec![0.0; n];
    let mut start = 0;
    let mut spent = 0.0;
    while start < n {
        let mut best = (n - 1, 0.0);
        for k in start..n {
            let avail = (budget[k] - spent).max(0.0);
            if used(start, k, 0.0) <= avail {
                continue;
            }
            let mut lo = 0.0;
            let mut hi = (start..=k).map(|i| y[i]).fold(0.0, f64::max);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if used(start, k, mid) <= avail {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            if hi > best.1 {
                best = (k, hi);
            }
        }
        let (end, theta) = best;
        for i in start..=end {
            x[i] = take(i, theta);
            spent += x[i];
        }
        start = end + 1;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn admissible(x: &[f64], cap: &[f64], budget: &[f64], tol: f64) -> bool {
        let mut acc = 0.0;
        x.iter().zip(cap).zip(budget).all(|((&v, &c), &b)| {
            acc += v;
            v >= 0.0 && v <= c + tol && acc <= b + tol
        })
    }

    #[test]
    fn interior_points_are_fixed() {
        let y = [0.5, 1.0, 0.2];
        assert_eq!(project(&y, &[2.0; 3], &[5.0; 3]), y.to_vec());
    }

    #[test]
    fn clips_boxes_and_prefix() {
        let x = project(&[-1.0, 4.0], &[3.0, 3.0], &[10.0, 10.0]);
        assert_eq!(x, vec![0.0, 3.0]);
        // first prefix holds 1: both of the first two share the cut
        let x = project(&[1.0, 1.0, 0.0], &[5.0; 3], &[1.0, 1.0, 9.0]);
        assert!((x[0] - 0.5).abs() < 1e-12 && (x[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn caps_reject_oversized_harvests() {
        assert!(transfer_caps(&[1.0, 4.0], 3.5, 1.0).is_none());
        assert_eq!(transfer_caps(&[1.0, 0.0], 3.0, 0.5).unwrap(), vec![4.0, 6.0]);
    }

    proptest! {
        #[test]
        fn projection_is_admissible_and_optimal(
            y in prop::collection::vec(-3.0f64..6.0, 1..6),
            seed in prop::collection::vec(0.0f64..1.0, 6),
        ) {
            let n = y.len();
            let cap: Vec<f64> = (0..n).map(|i| 1.0 + 3.0 * seed[i]).collect();
            let budget: Vec<f64> = (0..n).map(|i| 2.0 * (i + 1) as f64 * seed[(i + 3) % 6]).collect();
            let budget: Vec<f64> = budget.iter().scan(0.0f64, |m, &b| { *m = m.max(b); Some(*m) }).collect();
            let x = project(&y, &cap, &budget);
            prop_assert!(admissible(&x, &cap, &budget, 1e-9));
            // variational inequality against other admissible points
            let others = [vec![0.0; n], project(&y.iter().map(|v| 2.0 - v).collect::<Vec<_>>(), &cap, &budget)];
            for z in others {
                let vi: f64 = (0..n).map(|i| (y[i] - x[i]) * (z[i] - x[i])).sum();
                prop_assert!(vi <= 1e-9, "{vi}");
            }
        }
    }
}
