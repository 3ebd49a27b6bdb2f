//! Structural audits of solved policies and the Monte Carlo experiments:
//! rate region against the secondary target, probability of cooperation,
//! and the effect of the ST battery size.
//!
//! Every sweep pairs its realizations: realization `j` is drawn from the
//! same child stream at every grid point and in both modes, and results are
//! reduced in realization order, so the output does not depend on how the
//! work is spread over threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ChannelRealization, HarvestRealization, Instance, ScenarioConfig};
use crate::optimizer::{solve_with, Mode, SolveReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropositionAudit {
    /// False when the report did not converge; the remaining fields are
    /// then advisory.
    pub applicable: bool,
    /// `|N rs_bar - sum ln(1 + h_ss P_ss)|`.
    pub secondary_rate_gap: f64,
    /// PT energy left unspent at the end of the horizon.
    pub pt_leftover: f64,
    /// ST energy left unspent at the end of the horizon.
    pub st_leftover: f64,
    /// Slots with `h_p > h_sp` that both receive a transfer and relay.
    pub split_violations: Vec<usize>,
    /// Slots with `h_p < alpha h_sp` and a battery below capacity that still
    /// use the direct link.
    pub idle_direct_violations: Vec<usize>,
}

impl PropositionAudit {
    pub fn passes(&self, tol: f64) -> bool {
        self.secondary_rate_gap <= tol
            && self.pt_leftover <= tol
            && self.st_leftover <= tol
            && self.split_violations.is_empty()
            && self.idle_direct_violations.is_empty()
    }
}

pub fn check_propositions(
    report: &SolveReport,
    cfg: &ScenarioConfig,
    channels: &ChannelRealization,
    tol: f64,
) -> PropositionAudit {
    let p = &report.policy;
    let r = &report.residuals;
    let n = p.n_slots();
    let last = |v: &[f64]| v.last().copied().unwrap_or(0.0).abs();
    let split_violations = (0..n)
        .filter(|&i| channels.h_p[i] > channels.h_sp[i] && p.delta_r[i].min(p.p_sp[i]) > tol)
        .collect();
    let idle_direct_violations = (0..n)
        .filter(|&i| {
            channels.h_p[i] < cfg.alpha * channels.h_sp[i] && r.battery_level[i] < cfg.b_max - tol && p.p_d[i] > tol
        })
        .collect();
    PropositionAudit {
        applicable: report.converged,
        secondary_rate_gap: r.sec_rate.abs(),
        pt_leftover: last(&r.pt_energy),
        st_leftover: last(&r.st_energy),
        split_violations,
        idle_direct_violations,
    }
}

/// Draws realization `index` of the configured scenario.
fn realization(cfg: &ScenarioConfig, master_seed: u64, index: usize) -> Result<(ChannelRealization, HarvestRealization)> {
    let inst = Instance::sample(cfg, master_seed, index as u64)?;
    Ok((inst.channels, inst.harvests))
}

/// Fraction of realizations on which cooperation succeeds.
pub fn cooperation_probability(cfg: &ScenarioConfig, realizations: usize, mode: Mode, master_seed: u64) -> Result<f64> {
    if realizations == 0 {
        return Err(Error::InvalidConfig("realization count must be positive".into()));
    }
    let wins = (0..realizations)
        .into_par_iter()
        .map(|j| {
            let (ch, hv) = realization(cfg, master_seed, j)?;
            Ok(solve_with(cfg, &ch, &hv, mode, None)?.cooperation_successful)
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(wins.iter().filter(|&&w| w).count() as f64 / realizations as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionPoint {
    pub rs_bar: f64,
    /// Average primary rate obtained, falling back to the no-cooperation
    /// rate when cooperation fails.
    pub rate: f64,
    pub cooperation: bool,
}

/// Primary rate against the secondary target on one fixed realization.
pub fn rate_region(
    cfg: &ScenarioConfig,
    channels: &ChannelRealization,
    harvests: &HarvestRealization,
    rs_grid: &[f64],
    mode: Mode,
) -> Result<Vec<RegionPoint>> {
    rs_grid
        .par_iter()
        .map(|&rs_bar| {
            let cfg = ScenarioConfig { rs_bar, ..cfg.clone() };
            let r = solve_with(&cfg, channels, harvests, mode, None)?;
            Ok(RegionPoint {
                rs_bar,
                rate: r.effective_rate,
                cooperation: r.cooperation_successful,
            })
        })
        .collect()
}

/// Largest secondary target at which cooperation still succeeds, located
/// by bisection on `[0, rs_max]`. Returns 0 when it fails even at 0.
pub fn cooperation_cutoff(
    cfg: &ScenarioConfig,
    channels: &ChannelRealization,
    harvests: &HarvestRealization,
    mode: Mode,
    rs_max: f64,
    tol: f64,
) -> Result<f64> {
    let works = |rs_bar: f64| -> Result<bool> {
        let cfg = ScenarioConfig { rs_bar, ..cfg.clone() };
        Ok(solve_with(&cfg, channels, harvests, mode, None)?.cooperation_successful)
    };
    if !works(0.0)? {
        return Ok(0.0);
    }
    if works(rs_max)? {
        return Ok(rs_max);
    }
    let (mut lo, mut hi) = (0.0, rs_max);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if works(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Outcome of a paired sweep over one scenario parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub parameter: String,
    pub grid: Vec<f64>,
    pub rate_joint: Vec<f64>,
    pub rate_info: Vec<f64>,
    pub rate_nocoop: Vec<f64>,
    pub prob_joint: Vec<f64>,
    pub prob_info: Vec<f64>,
    pub realizations: usize,
    pub master_seed: u64,
}

#[derive(Clone, Copy, Default)]
struct Tally {
    rate_joint: f64,
    rate_info: f64,
    rate_nocoop: f64,
    wins_joint: usize,
    wins_info: usize,
}

/// Solves every realization in both modes at every grid value, with the
/// configuration at each grid value produced by `apply`.
fn paired_sweep(
    cfg: &ScenarioConfig,
    parameter: &str,
    grid: &[f64],
    realizations: usize,
    master_seed: u64,
    apply: impl Fn(&ScenarioConfig, f64) -> ScenarioConfig + Sync,
) -> Result<SweepResult> {
    if realizations == 0 {
        return Err(Error::InvalidConfig("realization count must be positive".into()));
    }
    if grid.is_empty() {
        return Err(Error::InvalidConfig("sweep grid is empty".into()));
    }
    cfg.validate()?;
    let configs: Vec<ScenarioConfig> = grid.iter().map(|&v| apply(cfg, v)).collect();
    for c in &configs {
        c.validate()?;
    }

    // One task per realization; each returns its per-grid-point outcomes.
    let per_realization = (0..realizations)
        .into_par_iter()
        .map(|j| {
            let (ch, hv) = realization(cfg, master_seed, j)?;
            configs
                .iter()
                .map(|c| {
                    let joint = solve_with(c, &ch, &hv, Mode::Joint, None)?;
                    let info = solve_with(c, &ch, &hv, Mode::InfoOnly, None)?;
                    Ok(Tally {
                        rate_joint: joint.effective_rate,
                        rate_info: info.effective_rate,
                        rate_nocoop: joint.baseline.r_p_bar,
                        wins_joint: joint.cooperation_successful as usize,
                        wins_info: info.cooperation_successful as usize,
                    })
                })
                .collect::<Result<Vec<Tally>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut totals = vec![Tally::default(); grid.len()];
    for outcome in &per_realization {
        for (t, o) in totals.iter_mut().zip(outcome) {
            t.rate_joint += o.rate_joint;
            t.rate_info += o.rate_info;
            t.rate_nocoop += o.rate_nocoop;
            t.wins_joint += o.wins_joint;
            t.wins_info += o.wins_info;
        }
    }
    let m = realizations as f64;
    Ok(SweepResult {
        parameter: parameter.into(),
        grid: grid.to_vec(),
        rate_joint: totals.iter().map(|t| t.rate_joint / m).collect(),
        rate_info: totals.iter().map(|t| t.rate_info / m).collect(),
        rate_nocoop: totals.iter().map(|t| t.rate_nocoop / m).collect(),
        prob_joint: totals.iter().map(|t| t.wins_joint as f64 / m).collect(),
        prob_info: totals.iter().map(|t| t.wins_info as f64 / m).collect(),
        realizations,
        master_seed,
    })
}

/// Cooperation probability and mean rate against the secondary target.
pub fn secondary_target_sweep(
    cfg: &ScenarioConfig,
    rs_grid: &[f64],
    realizations: usize,
    master_seed: u64,
) -> Result<SweepResult> {
    paired_sweep(cfg, "rs_bar", rs_grid, realizations, master_seed, |c, rs_bar| ScenarioConfig {
        rs_bar,
        ..c.clone()
    })
}

/// Mean primary rate against the ST battery capacity.
pub fn battery_sweep(
    cfg: &ScenarioConfig,
    bmax_grid: &[f64],
    realizations: usize,
    master_seed: u64,
) -> Result<SweepResult> {
    if bmax_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidConfig("battery grid must be ascending".into()));
    }
    paired_sweep(cfg, "b_max", bmax_grid, realizations, master_seed, |c, b_max| ScenarioConfig {
        b_max,
        ..c.clone()
    })
}

/// `steps` evenly spaced values from `from` to `to` inclusive.
pub fn linear_grid(from: f64, to: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => vec![],
        1 => vec![from],
        _ => (0..steps).map(|k| from + (to - from) * k as f64 / (steps - 1) as f64).collect(),
    }
}
