//! Water-level machinery shared by the baseline and the optimizer layers.
//!
//! Every slot answers a water level `w` with a power
//! `x(w) = sum_j slope_j * max(0, w - threshold_j)`, a non-decreasing
//! piecewise-linear map. Two allocators are built on it:
//!
//! * [`directional`]: cumulative budgets only (energy causality); levels
//!   are non-decreasing and the epoch structure is found by repeatedly
//!   picking the tightest prefix constraint.
//! * [`tube`]: cumulative consumption confined between a lower and an upper
//!   envelope (causality plus a finite battery), solved by a forward
//!   taut-string sweep; levels rise after an upper contact and fall after a
//!   lower contact.

/// One linear piece `slope * max(0, w - threshold)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Term {
    pub slope: f64,
    pub threshold: f64,
}

/// Level-to-power response of one slot (at most two pieces).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SlotResponse {
    terms: [Option<Term>; 2],
}

impl SlotResponse {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Adds `slope * max(0, w - threshold)`; ignored unless `slope > 0` and
    /// the threshold is finite.
    pub fn with(mut self, slope: f64, threshold: f64) -> Self {
        if slope > 0.0 && threshold.is_finite() {
            let slot = self
                .terms
                .iter_mut()
                .find(|t| t.is_none())
                .expect("a slot response holds at most two terms");
            *slot = Some(Term { slope, threshold });
        }
        self
    }

    /// Single-link response `max(0, w - floor)`; an infinite floor gives a
    /// dead slot.
    pub fn floor(floor: f64) -> Self {
        Self::empty().with(1.0, floor)
    }

    pub fn terms(&self) -> impl Iterator<Item = Term> + '_ {
        self.terms.iter().flatten().copied()
    }

    pub fn is_dead(&self) -> bool {
        self.terms.iter().all(|t| t.is_none())
    }

    pub fn power(&self, level: f64) -> f64 {
        self.terms().map(|t| t.slope * (level - t.threshold).max(0.0)).sum()
    }

    /// Smallest level at which the slot starts drawing power.
    pub fn onset(&self) -> f64 {
        self.terms().map(|t| t.threshold).fold(f64::INFINITY, f64::min)
    }
}

pub fn total_power(slots: &[SlotResponse], level: f64) -> f64 {
    slots.iter().map(|s| s.power(level)).sum()
}

/// Largest level whose total consumption over `slots` does not exceed
/// `target`, clipped to `cap`. Returns `-inf` for a negative target and
/// `cap` when the slots cannot draw power at all.
pub fn level_for(slots: &[SlotResponse], target: f64, cap: f64, scratch: &mut Vec<Term>) -> f64 {
    if target < 0.0 {
        return f64::NEG_INFINITY;
    }
    scratch.clear();
    scratch.extend(slots.iter().flat_map(|s| s.terms()));
    if scratch.is_empty() {
        return cap;
    }
    scratch.sort_unstable_by(|a, b| a.threshold.total_cmp(&b.threshold));

    let mut level = scratch[0].threshold;
    let mut consumed = 0.0;
    let mut slope = 0.0;
    for (j, term) in scratch.iter().enumerate() {
        slope += term.slope;
        let next = scratch.get(j + 1).map_or(f64::INFINITY, |t| t.threshold);
        let at_next = consumed + slope * (next - level);
        if at_next > target {
            return (level + (target - consumed) / slope).min(cap);
        }
        consumed = at_next;
        level = next;
    }
    cap
}

/// Allocation produced by a water-filling pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Allocation {
    /// Water level of every slot.
    pub levels: Vec<f64>,
    /// Power drawn in every slot at its level.
    pub power: Vec<f64>,
}

/// Directional water-filling under cumulative budgets `budget[k]`
/// (the most that may be spent in slots `0..=k`).
///
/// Epochs are closed at the prefix whose exhaustion needs the lowest
/// level; ties go to the earliest prefix.
pub fn directional(slots: &[SlotResponse], budget: &[f64], cap: f64) -> Allocation {
    let n = slots.len();
    assert_eq!(budget.len(), n);
    let mut levels = vec![0.0; n];
    let mut scratch = Vec::with_capacity(2 * n);
    let mut start = 0;
    let mut spent = 0.0;
    while start < n {
        let mut best = (start, f64::INFINITY);
        for k in start..n {
            let avail = (budget[k] - spent).max(0.0);
            let w = level_for(&slots[start..=k], avail, cap, &mut scratch);
            if w < best.1 {
                best = (k, w);
            }
        }
        let (end, w) = best;
        let w = if w.is_finite() { w } else { cap };
        levels[start..=end].fill(w);
        spent += total_power(&slots[start..=end], w);
        start = end + 1;
    }
    let power = slots.iter().zip(&levels).map(|(s, &w)| s.power(w)).collect();
    Allocation { levels, power }
}

/// Water-filling with cumulative consumption `X_k` kept inside
/// `lower[k] <= X_k <= upper[k]`, and the final total driven to `upper[n-1]`.
///
/// The envelopes must admit a non-decreasing path from zero (`lower[k] <=
/// upper[k]` and `lower[k] <= upper[j]` for `j >= k`); callers guarantee it.
pub fn tube(slots: &[SlotResponse], lower: &[f64], upper: &[f64], cap: f64) -> Allocation {
    let n = slots.len();
    assert_eq!(lower.len(), n);
    assert_eq!(upper.len(), n);
    let mut levels = vec![0.0; n];
    let mut scratch = Vec::with_capacity(2 * n);
    let mut start = 0;
    let mut base = 0.0;

    while start < n {
        let mut hi = (f64::INFINITY, start);
        let mut lo = (f64::NEG_INFINITY, start);
        let mut k = start;
        loop {
            let last = k == n - 1;
            let seg = &slots[start..=k];
            let w_up = level_for(seg, (upper[k] - base).max(0.0), cap, &mut scratch);
            let need = if last { upper[k] } else { lower[k] } - base;
            let w_low = if need > 0.0 {
                level_for(seg, need, cap, &mut scratch)
            } else {
                f64::NEG_INFINITY
            };

            if w_up < lo.0 {
                // The path must dip: close on the lower envelope.
                let (w, at) = lo;
                levels[start..=at].fill(w);
                base = lower[at];
                start = at + 1;
                break;
            }
            if w_low > hi.0 {
                // The path must climb: close on the upper envelope.
                let (w, at) = hi;
                levels[start..=at].fill(w);
                base = upper[at];
                start = at + 1;
                break;
            }
            if w_up < hi.0 {
                hi = (w_up, k);
            }
            if w_low > lo.0 {
                lo = (w_low, k);
            }
            if last {
                let w = if hi.0.is_finite() { hi.0 } else { cap };
                levels[start..=k].fill(w);
                start = n;
                break;
            }
            k += 1;
        }
    }
    let power = slots.iter().zip(&levels).map(|(s, &w)| s.power(w)).collect();
    Allocation { levels, power }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CAP: f64 = 1e9;

    fn floors(f: &[f64]) -> Vec<SlotResponse> {
        f.iter().map(|&x| SlotResponse::floor(x)).collect()
    }

    #[test]
    fn level_for_inverts_consumption() {
        let slots = vec![SlotResponse::floor(1.0), SlotResponse::empty().with(1.0, 0.5).with(2.0, 3.0)];
        let mut scratch = Vec::new();
        for target in [0.0, 0.3, 1.0, 2.5, 7.0, 40.0] {
            let w = level_for(&slots, target, CAP, &mut scratch);
            assert!((total_power(&slots, w) - target).abs() < 1e-12, "target {target}");
        }
        assert_eq!(level_for(&slots, 0.0, CAP, &mut scratch), 0.5);
        assert_eq!(level_for(&slots, -1.0, CAP, &mut scratch), f64::NEG_INFINITY);
        assert_eq!(level_for(&[SlotResponse::empty()], 1.0, CAP, &mut scratch), CAP);
    }

    #[test]
    fn directional_single_epoch() {
        // Budget available up front: one level over all slots.
        let a = directional(&floors(&[1.0, 2.0, 3.0]), &[6.0, 6.0, 6.0], CAP);
        assert!(a.levels.iter().all(|&w| (w - 4.0).abs() < 1e-12));
        assert!((a.power.iter().sum::<f64>() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn directional_two_epochs() {
        // Energy arrives in two batches; the first is tight.
        let a = directional(&floors(&[1.0, 1.0, 1.0, 1.0]), &[1.0, 1.0, 5.0, 5.0], CAP);
        assert!((a.levels[0] - 1.5).abs() < 1e-12);
        assert!((a.levels[1] - 1.5).abs() < 1e-12);
        assert!((a.levels[2] - 3.0).abs() < 1e-12);
        assert!((a.levels[3] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn directional_dead_slot() {
        let mut slots = floors(&[1.0, 1.0]);
        slots.insert(1, SlotResponse::empty());
        let a = directional(&slots, &[2.0, 2.0, 2.0], CAP);
        assert_eq!(a.power[1], 0.0);
        assert!((a.power[0] - 1.0).abs() < 1e-12 && (a.power[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tube_without_binding_lower_matches_directional() {
        let slots = floors(&[0.5, 2.0, 1.0, 0.1]);
        let upper = [1.0, 1.5, 6.0, 8.0];
        let lower = [f64::NEG_INFINITY; 4];
        let a = tube(&slots, &lower, &upper, CAP);
        let b = directional(&slots, &upper, CAP);
        for (x, y) in a.power.iter().zip(&b.power) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn tube_forces_early_spending() {
        // Plenty of energy up front but a small battery: X_0 >= 3.
        let slots = floors(&[1.0, 1.0, 1.0]);
        let upper = [6.0, 6.0, 6.0];
        let lower = [3.0, 3.0, 6.0];
        let a = tube(&slots, &lower, &upper, CAP);
        assert!((a.power[0] - 3.0).abs() < 1e-12);
        assert!((a.power[1] - 1.5).abs() < 1e-12);
        assert!((a.power[2] - 1.5).abs() < 1e-12);
        assert!(a.levels[0] > a.levels[1]);
    }
}
