//! Brute-force reference solver for horizons of at most three slots.
//!
//! Transfers are enumerated on a grid over the primary's energy polytope.
//! For each grid point the remaining powers are found by a general conic
//! interior-point solve, which shares nothing with the decomposition in
//! [`crate::optimizer`]. The best point is then refined once on a grid ten
//! times finer around it.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{constraint_residuals, ChannelRealization, HarvestRealization, PowerPolicy, ScenarioConfig};

/// Longest horizon the oracle accepts.
pub const MAX_SLOTS: usize = 3;
/// Most grid points evaluated in one pass.
pub const POINT_BUDGET: f64 = 1e8;
/// Refinement divides the step by this factor.
const REFINE: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub policy: PowerPolicy,
    /// Total primary rate over the horizon (nats/Hz).
    pub objective: f64,
    /// Step of the finest grid searched (W).
    pub grid_step: f64,
}

/// Coarse step used when none is given: a fiftieth of the primary's total
/// harvest.
pub fn default_grid_step(harvests: &HarvestRealization) -> f64 {
    (harvests.e_p.iter().sum::<f64>() / 50.0).max(1e-3)
}

pub fn brute_force_solve(
    cfg: &ScenarioConfig,
    channels: &ChannelRealization,
    harvests: &HarvestRealization,
    grid_step: f64,
) -> Result<OracleResult> {
    cfg.validate()?;
    let n = cfg.n_slots;
    if n > MAX_SLOTS {
        return Err(Error::HorizonTooLong(n));
    }
    channels.validate(n)?;
    harvests.validate(n)?;
    if !(grid_step > 0.0 && grid_step.is_finite()) {
        return Err(Error::InvalidConfig(format!("grid_step = {grid_step} must be positive")));
    }

    let budget: Vec<f64> = harvests
        .e_p
        .iter()
        .scan(0.0, |acc, e| {
            *acc += e;
            Some(*acc)
        })
        .collect();
    let slack = 1e-12 * (1.0 + budget[n - 1]);

    let axes = |lo: &[f64], hi: &[f64], step: f64| -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                let count = ((hi[i] - lo[i]) / step + 1e-9).floor().max(0.0) as usize;
                (0..=count).map(|k| lo[i] + k as f64 * step).collect()
            })
            .collect()
    };
    let coarse = axes(&vec![0.0; n], &budget, grid_step);
    let mut best = search(&coarse, &budget, slack, cfg, channels, harvests)?;

    let fine = grid_step / REFINE;
    if let Some((_, policy)) = &best {
        let lo: Vec<f64> = policy.delta_r.iter().map(|d| (d - grid_step).max(0.0)).collect();
        let hi: Vec<f64> = policy.delta_r.iter().zip(&budget).map(|(d, b)| (d + grid_step).min(*b)).collect();
        let refined = search(&axes(&lo, &hi, fine), &budget, slack, cfg, channels, harvests)?;
        if let Some(r) = refined {
            if better(&r, best.as_ref().expect("checked above")) {
                best = Some(r);
            }
        }
    }

    match best {
        Some((objective, policy)) => Ok(OracleResult {
            policy,
            objective,
            grid_step: fine,
        }),
        None => Err(Error::Infeasible("no grid point meets the secondary rate target".into())),
    }
}

/// Strictly higher objective, ties broken towards the lexicographically
/// smaller transfer vector.
fn better(a: &(f64, PowerPolicy), b: &(f64, PowerPolicy)) -> bool {
    match a.0.total_cmp(&b.0) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => a.1.delta_r.iter().zip(&b.1.delta_r).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne())
            == Some(std::cmp::Ordering::Less),
    }
}

/// Evaluates every point of the product of `axes` inside the polytope.
fn search(
    axes: &[Vec<f64>],
    budget: &[f64],
    slack: f64,
    cfg: &ScenarioConfig,
    channels: &ChannelRealization,
    harvests: &HarvestRealization,
) -> Result<Option<(f64, PowerPolicy)>> {
    let points: f64 = axes.iter().map(|a| a.len() as f64).product();
    if points > POINT_BUDGET {
        return Err(Error::BudgetExceeded {
            points,
            step: axes[0].get(1).map_or(0.0, |v| v - axes[0][0]),
            limit: POINT_BUDGET,
        });
    }
    let best = axes[0]
        .par_iter()
        .map(|&first| {
            let mut best: Option<(f64, PowerPolicy)> = None;
            let mut point = vec![first; axes.len()];
            visit(axes, budget, slack, 1, first, &mut point, &mut |delta_r| {
                if let Some(found) = inner_optimum(cfg, channels, harvests, delta_r) {
                    if best.as_ref().is_none_or(|b| better(&found, b)) {
                        best = Some(found);
                    }
                }
            });
            best
        })
        .reduce(
            || None,
            |a, b| match (a, b) {
                (Some(a), Some(b)) => Some(if better(&b, &a) { b } else { a }),
                (a, b) => a.or(b),
            },
        );
    Ok(best)
}

fn visit(
    axes: &[Vec<f64>],
    budget: &[f64],
    slack: f64,
    slot: usize,
    spent: f64,
    point: &mut Vec<f64>,
    f: &mut dyn FnMut(&[f64]),
) {
    if spent > budget[slot - 1] + slack {
        return;
    }
    if slot == axes.len() {
        f(point);
        return;
    }
    for &v in &axes[slot] {
        point[slot] = v;
        visit(axes, budget, slack, slot + 1, spent + v, point, f);
    }
}

/// Best primary powers and secondary split for fixed transfers, or `None`
/// when the secondary target cannot be met.
///
/// Variables are `p_d, p_sp, p_ss` followed by epigraph variables for the
/// primary and secondary per-slot rates, each tied to its power by an
/// exponential cone.
pub fn inner_optimum(
    cfg: &ScenarioConfig,
    channels: &ChannelRealization,
    harvests: &HarvestRealization,
    delta_r: &[f64],
) -> Option<(f64, PowerPolicy)> {
    let n = delta_r.len();
    let (pd, psp, pss, rp, rs) = (0, n, 2 * n, 3 * n, 4 * n);
    let vars = 5 * n;

    let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    for j in 0..3 * n {
        rows.push((vec![(j, -1.0)], 0.0));
    }
    let (mut pt_in, mut st_in) = (0.0, 0.0);
    for i in 0..n {
        pt_in += harvests.e_p[i] - delta_r[i];
        st_in += harvests.e_s[i] + cfg.alpha * delta_r[i];
        rows.push(((0..=i).map(|j| (pd + j, 1.0)).collect(), pt_in));
        rows.push(((0..=i).flat_map(|j| [(psp + j, 1.0), (pss + j, 1.0)]).collect(), st_in));
        // Energy held at the start of slot i must fit in the battery.
        let floor = st_in - cfg.b_max;
        if i == 0 {
            if floor > 1e-12 * (1.0 + cfg.b_max) {
                return None;
            }
        } else {
            rows.push(((0..i).flat_map(|j| [(psp + j, -1.0), (pss + j, -1.0)]).collect(), -floor));
        }
    }
    if pt_in < -1e-12 * (1.0 + harvests.total()) {
        return None;
    }
    let target = n as f64 * cfg.rs_bar;
    rows.push(((0..n).map(|j| (rs + j, -1.0)).collect(), -target));
    let linear = rows.len();

    for i in 0..n {
        rows.push((vec![(rp + i, -1.0)], 0.0));
        rows.push((vec![], 1.0));
        rows.push((vec![(pd + i, -channels.h_p[i]), (psp + i, -channels.h_sp[i])], 1.0));
    }
    for i in 0..n {
        rows.push((vec![(rs + i, -1.0)], 0.0));
        rows.push((vec![], 1.0));
        rows.push((vec![(pss + i, -channels.h_ss[i])], 1.0));
    }

    let (mut ri, mut ci, mut vi) = (Vec::new(), Vec::new(), Vec::new());
    for (r, (entries, _)) in rows.iter().enumerate() {
        for &(c, v) in entries {
            if v != 0.0 {
                ri.push(r);
                ci.push(c);
                vi.push(v);
            }
        }
    }
    let a = CscMatrix::new_from_triplets(rows.len(), vars, ri, ci, vi);
    let b: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let p = CscMatrix::zeros((vars, vars));
    let q: Vec<f64> = (0..vars).map(|j| if (rp..rs).contains(&j) { -1.0 } else { 0.0 }).collect();
    let mut cones = vec![SupportedConeT::NonnegativeConeT(linear)];
    cones.extend((0..2 * n).map(|_| SupportedConeT::ExponentialConeT()));

    let settings = DefaultSettings {
        verbose: false,
        ..DefaultSettings::default()
    };
    let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings).ok()?;
    solver.solve();
    if !matches!(solver.solution.status, SolverStatus::Solved | SolverStatus::AlmostSolved) {
        return None;
    }
    let x = &solver.solution.x;
    let take = |from: usize| -> Vec<f64> { x[from..from + n].iter().map(|v| v.max(0.0)).collect() };
    let policy = PowerPolicy {
        p_d: take(pd),
        delta_r: delta_r.to_vec(),
        p_sp: take(psp),
        p_ss: take(pss),
    };

    // Interior-point answers sit slightly off the boundary; keep only
    // points that really meet the constraints.
    let r = constraint_residuals(cfg, channels, harvests, &policy, 0.0).ok()?;
    if r.max_violation() > 1e-6 * (1.0 + harvests.total()) {
        return None;
    }
    let objective = (0..n)
        .map(|i| (channels.h_p[i] * policy.p_d[i] + channels.h_sp[i] * policy.p_sp[i]).ln_1p())
        .sum();
    Some((objective, policy))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_slot(h: [f64; 3], e_p: f64, e_s: f64, rs_bar: f64) -> (ScenarioConfig, ChannelRealization, HarvestRealization) {
        let cfg = ScenarioConfig {
            n_slots: 1,
            alpha: 1.0,
            b_max: 10.0,
            rs_bar,
            ..Default::default()
        };
        let ch = ChannelRealization {
            h_p: vec![h[0]],
            h_sp: vec![h[1]],
            h_ss: vec![h[2]],
        };
        let hv = HarvestRealization {
            e_p: vec![e_p],
            e_s: vec![e_s],
        };
        (cfg, ch, hv)
    }

    #[test]
    fn transfer_to_the_stronger_relay() {
        let (cfg, ch, hv) = one_slot([1.0, 2.0, 1.0], 2.0, 0.0, 1.5f64.ln());
        let r = brute_force_solve(&cfg, &ch, &hv, 0.01).unwrap();
        assert!((r.objective - 4f64.ln()).abs() < 1e-4, "{r:?}");
        assert!(r.policy.p_d[0] < 1e-3);
        assert!((r.policy.delta_r[0] - 2.0).abs() < 1e-3);
        assert!((r.policy.p_sp[0] - 1.5).abs() < 1e-3);
        assert!((r.policy.p_ss[0] - 0.5).abs() < 1e-3);
    }

    #[test]
    fn direct_link_wins_without_a_secondary_target() {
        let (cfg, ch, hv) = one_slot([3.0, 1.0, 1.0], 2.0, 0.0, 0.0);
        let r = brute_force_solve(&cfg, &ch, &hv, 0.05).unwrap();
        assert!(r.policy.delta_r[0] < 1e-9);
        assert!((r.policy.p_d[0] - 2.0).abs() < 1e-4);
    }

    #[test]
    fn zero_harvest() {
        let (cfg, ch, hv) = one_slot([1.0, 1.0, 1.0], 0.0, 0.0, 0.0);
        let r = brute_force_solve(&cfg, &ch, &hv, 0.1).unwrap();
        assert!(r.objective.abs() < 1e-6);
        let (cfg, ch, hv) = one_slot([1.0, 1.0, 1.0], 0.0, 0.0, 0.1);
        assert!(matches!(brute_force_solve(&cfg, &ch, &hv, 0.1), Err(Error::Infeasible(_))));
    }

    #[test]
    fn rejects_long_horizons_and_huge_grids() {
        let cfg = ScenarioConfig {
            n_slots: 4,
            ..Default::default()
        };
        let ch = ChannelRealization {
            h_p: vec![1.0; 4],
            h_sp: vec![1.0; 4],
            h_ss: vec![1.0; 4],
        };
        let hv = HarvestRealization {
            e_p: vec![1.0; 4],
            e_s: vec![1.0; 4],
        };
        assert!(matches!(brute_force_solve(&cfg, &ch, &hv, 0.1), Err(Error::HorizonTooLong(4))));
        let cfg = ScenarioConfig { n_slots: 3, ..cfg };
        let ch = ChannelRealization {
            h_p: vec![1.0; 3],
            h_sp: vec![1.0; 3],
            h_ss: vec![1.0; 3],
        };
        let hv = HarvestRealization {
            e_p: vec![1e3; 3],
            e_s: vec![1.0; 3],
        };
        assert!(matches!(brute_force_solve(&cfg, &ch, &hv, 1e-3), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn battery_overflow_is_infeasible() {
        let (mut cfg, ch, hv) = one_slot([1.0, 1.0, 1.0], 1.0, 5.0, 0.0);
        cfg.b_max = 1.0;
        assert!(inner_optimum(&cfg, &ch, &hv, &[0.0]).is_none());
    }
}
