//! The three layers of the decomposition.
//!
//! Layer 1 allocates the primary direct-link power `P_d` against the PT
//! energy-causality multipliers `mu`; Layer 2 allocates the secondary
//! transmitter's relay and own-data powers against `lambda`, `gamma`,
//! `gamma'`; Layer 3 moves the energy transfer `delta_r` along the
//! subgradient assembled from those multipliers.
//!
//! Each of Layers 1 and 2 comes in two flavours: the closed-form primal
//! map plus a projected dual-gradient step (iterated to a fixed point), and
//! an exact solver that finds the fixed point directly by water-filling and
//! reads the multipliers off the water levels.

use crate::model::{ChannelRealization, HarvestRealization, PowerPolicy, ScenarioConfig};
use crate::waterfill::{directional, tube, SlotResponse};

/// Denominators below this are treated as vanished and the implied water
/// level is replaced by the level cap.
pub const DENOM_FLOOR: f64 = 1e-12;

pub(crate) fn tail_sums(v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    let mut acc = 0.0;
    for i in (0..v.len()).rev() {
        acc += v[i];
        out[i] = acc;
    }
    out
}

fn level_from(denom: f64, cap: f64) -> f64 {
    if denom <= DENOM_FLOOR {
        cap
    } else {
        (1.0 / denom).min(cap)
    }
}

/// `D_i = sum_{k>=i} gamma_k - sum_{k>i} gamma'_k`, the denominator of the
/// secondary transmitter's water level in slot `i`.
pub fn st_denominators(gamma: &[f64], gamma_prime: &[f64]) -> Vec<f64> {
    let n = gamma.len();
    let g = tail_sums(gamma);
    let gp = tail_sums(gamma_prime);
    (0..n).map(|i| g[i] - if i + 1 < n { gp[i + 1] } else { 0.0 }).collect()
}

/// Closed-form direct-link power:
/// `P_d_i = [1/sum_{k>=i} mu_k - 1/h_p_i - (h_sp_i/h_p_i) P_sp_i]^+`.
pub fn layer1_primal(h_p: &[f64], h_sp: &[f64], p_sp: &[f64], mu: &[f64], level_cap: f64) -> Vec<f64> {
    let m = tail_sums(mu);
    (0..h_p.len())
        .map(|i| {
            if h_p[i] <= 0.0 {
                return 0.0;
            }
            let level = level_from(m[i], level_cap);
            (level - 1.0 / h_p[i] - h_sp[i] / h_p[i] * p_sp[i]).max(0.0)
        })
        .collect()
}

/// Projected gradient step on the PT energy-causality multipliers:
/// `mu_k = [mu_k + s sum_{i<=k} (P_d_i + delta_r_i - E_p_i)]^+`.
pub fn layer1_dual_update(mu: &[f64], p_d: &[f64], delta_r: &[f64], e_p: &[f64], step: f64) -> Vec<f64> {
    let mut acc = 0.0;
    (0..mu.len())
        .map(|k| {
            acc += p_d[k] + delta_r[k] - e_p[k];
            (mu[k] + step * acc).max(0.0)
        })
        .collect()
}

/// Closed-form relay and own-data powers of the secondary transmitter:
/// `P_sp_i = [1/D_i - 1/h_sp_i - (h_p_i/h_sp_i) P_d_i]^+` and
/// `P_ss_i = [lambda/D_i - 1/h_ss_i]^+`.
#[allow(clippy::too_many_arguments)]
pub fn layer2_primal(
    h_p: &[f64],
    h_sp: &[f64],
    h_ss: &[f64],
    p_d: &[f64],
    lambda: f64,
    gamma: &[f64],
    gamma_prime: &[f64],
    level_cap: f64,
) -> (Vec<f64>, Vec<f64>) {
    let d = st_denominators(gamma, gamma_prime);
    let n = h_p.len();
    let mut p_sp = vec![0.0; n];
    let mut p_ss = vec![0.0; n];
    for i in 0..n {
        let level = level_from(d[i], level_cap);
        if h_sp[i] > 0.0 {
            p_sp[i] = (level - 1.0 / h_sp[i] - h_p[i] / h_sp[i] * p_d[i]).max(0.0);
        }
        if h_ss[i] > 0.0 {
            p_ss[i] = (lambda * level - 1.0 / h_ss[i]).max(0.0);
        }
    }
    (p_sp, p_ss)
}

/// Projected gradient step on `lambda`, `gamma` and `gamma'`.
pub fn layer2_dual_update(
    lambda: f64,
    gamma: &[f64],
    gamma_prime: &[f64],
    policy: &PowerPolicy,
    channels: &ChannelRealization,
    harvests: &HarvestRealization,
    cfg: &ScenarioConfig,
    step: f64,
) -> (f64, Vec<f64>, Vec<f64>) {
    let n = gamma.len();
    let sec: f64 = (0..n).map(|i| (channels.h_ss[i] * policy.p_ss[i]).ln_1p()).sum();
    let lambda = (lambda + step * (n as f64 * cfg.rs_bar - sec)).max(0.0);

    let mut new_gamma = Vec::with_capacity(n);
    let mut new_gamma_prime = Vec::with_capacity(n);
    let (mut spent, mut spent_before, mut inflow) = (0.0, 0.0, 0.0);
    for k in 0..n {
        inflow += harvests.e_s[k] + cfg.alpha * policy.delta_r[k];
        spent += policy.p_sp[k] + policy.p_ss[k];
        new_gamma.push((gamma[k] + step * (spent - inflow)).max(0.0));
        new_gamma_prime.push((gamma_prime[k] + step * (inflow - spent_before - cfg.b_max)).max(0.0));
        spent_before = spent;
    }
    (lambda, new_gamma, new_gamma_prime)
}

/// Subgradient step on the energy transfer:
/// `delta_r_i = [delta_r_i - s sum_{j>=i} (mu_j - alpha gamma_j + alpha gamma'_j)]^+`.
pub fn layer3_update(
    delta_r: &[f64],
    mu: &[f64],
    gamma: &[f64],
    gamma_prime: &[f64],
    alpha: f64,
    step: f64,
) -> Vec<f64> {
    let per_slot: Vec<f64> = (0..delta_r.len())
        .map(|j| mu[j] - alpha * gamma[j] + alpha * gamma_prime[j])
        .collect();
    let tail = tail_sums(&per_slot);
    delta_r.iter().zip(&tail).map(|(d, t)| (d - step * t).max(0.0)).collect()
}

/// `mu` whose tail sums are the reciprocals of the given PT water levels.
pub(crate) fn mu_from_levels(levels: &[f64]) -> Vec<f64> {
    let n = levels.len();
    (0..n)
        .map(|k| {
            let here = 1.0 / levels[k];
            let next = if k + 1 < n { 1.0 / levels[k + 1] } else { 0.0 };
            (here - next).max(0.0)
        })
        .collect()
}

/// `(gamma, gamma')` whose denominators `D_i` are the reciprocals of the
/// given ST water levels. A falling denominator is charged to `gamma` (the
/// causality bound was hit), a rising one to `gamma'` (the battery bound
/// was hit). `gamma'_1` is zero.
pub(crate) fn st_duals_from_levels(levels: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = levels.len();
    let d: Vec<f64> = levels.iter().map(|w| 1.0 / w).collect();
    let mut gamma = vec![0.0; n];
    let mut gamma_prime = vec![0.0; n];
    for i in 0..n {
        if i + 1 < n {
            let diff = d[i] - d[i + 1];
            if diff >= 0.0 {
                gamma[i] = diff;
            } else {
                gamma_prime[i + 1] = -diff;
            }
        } else {
            gamma[i] = d[i];
        }
    }
    (gamma, gamma_prime)
}

pub(crate) fn prefix_sums(v: impl IntoIterator<Item = f64>) -> Vec<f64> {
    v.into_iter()
        .scan(0.0, |acc, x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

/// Exact Layer 1: directional water-filling of `P_d` over the PT budget left
/// after the transfers, with per-slot floors `(1 + h_sp P_sp)/h_p`.
/// Returns `(P_d, mu)`.
pub fn layer1_exact(
    channels: &ChannelRealization,
    p_sp: &[f64],
    delta_r: &[f64],
    e_p: &[f64],
    level_cap: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = e_p.len();
    let slots: Vec<SlotResponse> = (0..n)
        .map(|i| {
            let h = channels.h_p[i];
            if h > 0.0 {
                SlotResponse::floor((1.0 + channels.h_sp[i] * p_sp[i]) / h)
            } else {
                SlotResponse::empty()
            }
        })
        .collect();
    let budget = prefix_sums((0..n).map(|i| e_p[i] - delta_r[i]));
    let budget: Vec<f64> = budget.into_iter().map(|b| b.max(0.0)).collect();
    let mut alloc = directional(&slots, &budget, level_cap);
    settle_idle_epochs(&mut alloc.levels, &alloc.power, level_cap, 1e-12 * (1.0 + budget[n - 1]));
    (alloc.power, mu_from_levels(&alloc.levels))
}

/// An epoch that draws no power (its budget is exhausted by earlier
/// slots) is consistent with any level between the previous epoch's level
/// and its own onset. Taking the lowest prices a transfer out of that
/// epoch at what the earlier slots lose, which is the one-sided cost the
/// transfer step needs.
fn settle_idle_epochs(levels: &mut [f64], power: &[f64], cap: f64, eps: f64) {
    let n = levels.len();
    let mut prev: Option<f64> = None;
    let mut s = 0;
    while s < n {
        let mut e = s;
        while e + 1 < n && levels[e + 1] == levels[s] {
            e += 1;
        }
        let used: f64 = power[s..=e].iter().sum();
        if let Some(p) = prev {
            if used <= eps && levels[s] < cap && p < levels[s] {
                levels[s..=e].fill(p);
            }
        }
        prev = Some(levels[s]);
        s = e + 1;
    }
}

/// The ST counterpart of [`settle_idle_epochs`]. A run of idle slots that
/// starts with an empty battery may sit at any level up to its onset.
/// Transfers only add ST energy, so the run is priced at what one more unit
/// would earn: spent at the run's cheapest onset, or carried to the next
/// slot if that values it more.
fn raise_idle_runs(levels: &mut [f64], power: &[f64], responses: &[SlotResponse], upper: &[f64], cap: f64, eps: f64) {
    let n = levels.len();
    let mut spent = 0.0;
    let mut s = 0;
    while s < n {
        if power[s] > eps {
            spent += power[s];
            s += 1;
            continue;
        }
        let mut end = s;
        while end + 1 < n && power[end + 1] <= eps {
            end += 1;
        }
        let empty = s == 0 || upper[s - 1] - spent <= eps;
        if empty {
            let mut w = responses[s..=end].iter().map(SlotResponse::onset).fold(cap, f64::min);
            if end + 1 < n {
                w = w.min(levels[end + 1]);
            }
            for l in &mut levels[s..=end] {
                *l = l.max(w);
            }
        }
        spent += power[s..=end].iter().sum::<f64>();
        s = end + 1;
    }
}

/// Outcome of the exact Layer 2 solve.
#[derive(Clone, Debug)]
pub struct Layer2Solution {
    pub p_sp: Vec<f64>,
    pub p_ss: Vec<f64>,
    pub lambda: f64,
    pub gamma: Vec<f64>,
    pub gamma_prime: Vec<f64>,
    /// Whether the secondary rate target is attainable with the current
    /// transfers. When it is not, the powers and multipliers are those of
    /// the secondary-rate maximizer and `lambda` is zero.
    pub feasible: bool,
    /// Largest secondary sum-rate attainable with the current transfers.
    pub max_secondary: f64,
    /// When the target is met over a whole range of `lambda`, the
    /// multipliers above price adding ST energy (bottom of the range) and
    /// these `(gamma, gamma')` price removing it (top of the range).
    pub removal_duals: Option<(Vec<f64>, Vec<f64>)>,
}

/// Inputs shared by every Layer 2 evaluation at fixed `(P_d, delta_r)`.
struct StProblem<'a> {
    channels: &'a ChannelRealization,
    base: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cap: f64,
}

impl StProblem<'_> {
    fn responses(&self, lambda: f64, relay: bool) -> Vec<SlotResponse> {
        let ch = self.channels;
        (0..self.base.len())
            .map(|i| {
                let mut r = SlotResponse::empty();
                if relay && ch.h_sp[i] > 0.0 {
                    r = r.with(1.0, self.base[i] / ch.h_sp[i]);
                }
                if lambda > 0.0 && ch.h_ss[i] > 0.0 {
                    r = r.with(lambda, 1.0 / (lambda * ch.h_ss[i]));
                }
                r
            })
            .collect()
    }

    /// Tube allocation at a given `lambda`: (levels, p_sp, p_ss, secondary sum-rate).
    fn allocate(&self, lambda: f64, relay: bool) -> (Vec<f64>, Vec<f64>, Vec<f64>, f64) {
        let ch = self.channels;
        let responses = self.responses(lambda, relay);
        let mut alloc = tube(&responses, &self.lower, &self.upper, self.cap);
        let eps = 1e-12 * (1.0 + self.upper.last().copied().unwrap_or(0.0));
        raise_idle_runs(&mut alloc.levels, &alloc.power, &responses, &self.upper, self.cap, eps);
        let n = self.base.len();
        let mut p_sp = vec![0.0; n];
        let mut p_ss = vec![0.0; n];
        let mut rate = 0.0;
        for i in 0..n {
            let w = alloc.levels[i];
            if relay && ch.h_sp[i] > 0.0 {
                p_sp[i] = (w - self.base[i] / ch.h_sp[i]).max(0.0);
            }
            if lambda > 0.0 && ch.h_ss[i] > 0.0 {
                p_ss[i] = (lambda * w - 1.0 / ch.h_ss[i]).max(0.0);
                rate += (ch.h_ss[i] * p_ss[i]).ln_1p();
            }
        }
        (alloc.levels, p_sp, p_ss, rate)
    }
}

/// Exact Layer 2 at fixed `(P_d, delta_r)`.
///
/// For a fixed `lambda` the relay/own-data split is a water-filling inside
/// the ST energy tube (causality above, battery overflow below); `lambda`
/// is then tuned so the secondary sum-rate meets `N * rs_bar` exactly.
pub fn layer2_exact(
    cfg: &ScenarioConfig,
    channels: &ChannelRealization,
    harvests: &HarvestRealization,
    p_d: &[f64],
    delta_r: &[f64],
    lambda_hint: f64,
    level_cap: f64,
) -> Layer2Solution {
    let n = p_d.len();
    let inflow = prefix_sums((0..n).map(|i| harvests.e_s[i] + cfg.alpha * delta_r[i]));
    let lower: Vec<f64> = (0..n)
        .map(|k| {
            if k + 1 < n {
                (inflow[k + 1] - cfg.b_max).min(inflow[k])
            } else {
                inflow[k]
            }
        })
        .collect();
    let problem = StProblem {
        channels,
        base: (0..n).map(|i| 1.0 + channels.h_p[i] * p_d[i]).collect(),
        lower,
        upper: inflow,
        cap: level_cap,
    };
    let target = n as f64 * cfg.rs_bar;

    let finish = |levels: Vec<f64>, p_sp, p_ss, lambda, feasible, max_secondary| {
        let (gamma, gamma_prime) = st_duals_from_levels(&levels);
        Layer2Solution {
            p_sp,
            p_ss,
            lambda,
            gamma,
            gamma_prime,
            feasible,
            max_secondary,
            removal_duals: None,
        }
    };

    if target <= 0.0 {
        let (levels, p_sp, p_ss, _) = problem.allocate(0.0, true);
        return finish(levels, p_sp, p_ss, 0.0, true, f64::INFINITY);
    }

    let (max_levels, _, max_pss, max_rate) = problem.allocate(1.0, false);
    if max_rate < target * (1.0 - 1e-12) {
        return finish(max_levels, vec![0.0; n], max_pss, 0.0, false, max_rate);
    }

    // The secondary sum-rate is non-decreasing in lambda and behaves like
    // ln(lambda); bracket, then regula falsi (Illinois) in ln(lambda).
    let rate_gap = |lambda: f64| problem.allocate(lambda, true).3 - target;
    let tol = 1e-11 * target.max(1.0);
    let mut lambda = if lambda_hint.is_finite() && lambda_hint > 0.0 { lambda_hint } else { 1.0 };
    let mut f = rate_gap(lambda);
    let (mut lo, mut f_lo, mut hi, mut f_hi);
    if f < 0.0 {
        (lo, f_lo) = (lambda.ln(), f);
        loop {
            lambda *= 2.0;
            f = rate_gap(lambda);
            if f >= 0.0 || lambda > 1e15 {
                break;
            }
            (lo, f_lo) = (lambda.ln(), f);
        }
        (hi, f_hi) = (lambda.ln(), f);
    } else {
        (hi, f_hi) = (lambda.ln(), f);
        loop {
            lambda *= 0.5;
            f = rate_gap(lambda);
            if f <= 0.0 || lambda < 1e-300 {
                break;
            }
            (hi, f_hi) = (lambda.ln(), f);
        }
        (lo, f_lo) = (lambda.ln(), f);
    }

    // Illinois rescales the retained endpoint's gap; the true gaps decide
    // termination. Without convergence the upper end is returned, since it
    // meets the target.
    let (mut true_lo, mut true_hi) = (f_lo, f_hi);
    let mut t = hi;
    let mut side = 0i8;
    for _ in 0..200 {
        if true_hi.abs() <= tol || hi - lo <= 1e-15 * hi.abs().max(1.0) {
            t = hi;
            break;
        }
        if true_lo.abs() <= tol {
            t = lo;
            break;
        }
        let mut guess = if f_hi > f_lo {
            (lo * f_hi - hi * f_lo) / (f_hi - f_lo)
        } else {
            0.5 * (lo + hi)
        };
        if !(guess > lo && guess < hi) {
            guess = 0.5 * (lo + hi);
        }
        let f_t = rate_gap(guess.exp());
        if f_t < 0.0 {
            (lo, f_lo, true_lo) = (guess, f_t, f_t);
            if side == -1 {
                f_hi *= 0.5;
            }
            side = -1;
        } else {
            (hi, f_hi, true_hi) = (guess, f_t, f_t);
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        }
        t = hi;
    }

    // The rate can be flat in lambda when every slot is committed to one
    // use. Any lambda on the flat stretch is a valid multiplier; report both
    // ends.
    let gap_at = |s: f64| rate_gap(s.exp());
    let probe = 1e-6;
    if gap_at(t - probe) >= -tol || gap_at(t + probe) <= tol {
        let bottom = flat_edge(t, -1.0, (1e-300f64).ln(), |s| gap_at(s) >= -tol);
        let top = flat_edge(t, 1.0, (1e15f64).ln(), |s| gap_at(s) <= tol);
        let lambda = bottom.expect("start point is on the flat stretch").exp();
        let (levels, p_sp, p_ss, _) = problem.allocate(lambda, true);
        let mut sol = finish(levels, p_sp, p_ss, lambda, true, max_rate);
        sol.removal_duals = top.map(|s| st_duals_from_levels(&problem.allocate(s.exp(), true).0));
        return sol;
    }
    let lambda = t.exp();
    let (levels, p_sp, p_ss, _) = problem.allocate(lambda, true);
    finish(levels, p_sp, p_ss, lambda, true, max_rate)
}

/// Last point from `start` in direction `dir` (in log-lambda) where `holds`
/// is still true, or `None` if it holds all the way to `limit`.
fn flat_edge(start: f64, dir: f64, limit: f64, holds: impl Fn(f64) -> bool) -> Option<f64> {
    let mut good = start;
    let mut offset = 1e-6;
    let bad = loop {
        let s = start + dir * offset;
        if dir * (s - limit) >= 0.0 {
            return if holds(limit) { None } else { Some(bisect_edge(good, limit, &holds)) };
        }
        if !holds(s) {
            break s;
        }
        good = s;
        offset *= 4.0;
    };
    Some(bisect_edge(good, bad, &holds))
}

fn bisect_edge(mut good: f64, mut bad: f64, holds: &impl Fn(f64) -> bool) -> f64 {
    for _ in 0..60 {
        let mid = 0.5 * (good + bad);
        if mid == good || mid == bad {
            break;
        }
        if holds(mid) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    good
}
