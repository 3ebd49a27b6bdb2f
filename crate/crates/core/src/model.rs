//! System model: scenario parameters, channel and harvest realizations,
//! per-slot rates and the residuals of every energy/rate constraint.
//!
//! Slots have unit duration, so energies (J) and powers (W) are used
//! interchangeably. Channel gains are stored already divided by the noise
//! power.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::optimizer::SolverSettings;

/// Converts a power in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

/// Converts a power in watts to dBm.
pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * (watts / 1e-3).log10()
}

/// All exogenous parameters of one scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Horizon length in slots.
    pub n_slots: usize,
    /// Bernoulli harvest probability at the primary transmitter.
    pub theta_p: f64,
    /// Bernoulli harvest probability at the secondary transmitter.
    pub theta_s: f64,
    /// Energy quantum harvested by the primary transmitter (J).
    pub e_p_amount: f64,
    /// Energy quantum harvested by the secondary transmitter (J).
    pub e_s_amount: f64,
    /// Battery capacity of the secondary transmitter (J).
    pub b_max: f64,
    /// Wireless energy transfer efficiency, in (0, 1].
    pub alpha: f64,
    /// Receiver noise power (W).
    pub noise_power: f64,
    /// PT-PR distance (m).
    pub d_pp: f64,
    /// ST-PR distance (m).
    pub d_sp: f64,
    /// ST-SR distance (m).
    pub d_ss: f64,
    /// PT-ST distance (m). Recorded only; no channel gain is derived from it.
    pub d_pt_st: f64,
    /// Path-loss exponent.
    pub rho: f64,
    /// Minimum average secondary rate (nats/slot/Hz).
    pub rs_bar: f64,
    pub solver: SolverSettings,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_slots: 5,
            theta_p: 0.5,
            theta_s: 0.5,
            e_p_amount: 7.0,
            e_s_amount: 1.0,
            b_max: 3.5,
            alpha: 0.3,
            noise_power: dbm_to_watts(0.0),
            d_pp: 5.0,
            d_sp: 5.0,
            d_ss: 5.0,
            d_pt_st: 0.5,
            rho: 2.7,
            rs_bar: 0.5,
            solver: SolverSettings::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_slots == 0 {
            return bad("n_slots must be at least 1".into());
        }
        for (name, p) in [("theta_p", self.theta_p), ("theta_s", self.theta_s)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} is not a probability"));
            }
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha = {} must lie in (0, 1]", self.alpha));
        }
        for (name, v) in [
            ("e_p_amount", self.e_p_amount),
            ("e_s_amount", self.e_s_amount),
            ("noise_power", self.noise_power),
            ("d_pp", self.d_pp),
            ("d_sp", self.d_sp),
            ("d_ss", self.d_ss),
            ("d_pt_st", self.d_pt_st),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} = {v} must be positive and finite"));
            }
        }
        if !(self.b_max >= 0.0 && self.b_max.is_finite()) {
            return bad(format!("b_max = {} must be non-negative", self.b_max));
        }
        if !(self.rs_bar >= 0.0 && self.rs_bar.is_finite()) {
            return bad(format!("rs_bar = {} must be non-negative", self.rs_bar));
        }
        if !self.rho.is_finite() {
            return bad("rho must be finite".into());
        }
        self.solver.validate()
    }

    /// Mean raw power gain `d^-rho` of a link of length `d`.
    pub fn mean_gain(&self, d: f64) -> f64 {
        d.powf(-self.rho)
    }
}

/// One fully specified problem instance.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub config: ScenarioConfig,
    pub channels: ChannelRealization,
    pub harvests: HarvestRealization,
}

impl Instance {
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let n = self.config.n_slots;
        self.channels.validate(n)?;
        self.harvests.validate(n)
    }

    pub fn sample(config: &ScenarioConfig, master_seed: u64, index: u64) -> Result<Self> {
        let (channels, harvests) = sample_realization(config, &mut realization_rng(master_seed, index))?;
        Ok(Self {
            config: config.clone(),
            channels,
            harvests,
        })
    }
}

/// Normalized channel power gains `h = g / N0`, one entry per slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub h_p: Vec<f64>,
    pub h_sp: Vec<f64>,
    pub h_ss: Vec<f64>,
}

impl ChannelRealization {
    pub fn n_slots(&self) -> usize {
        self.h_p.len()
    }

    /// Builds a realization from raw gains, normalizing each by `noise_power`.
    pub fn from_raw(g_p: &[f64], g_sp: &[f64], g_ss: &[f64], noise_power: f64) -> Result<Self> {
        let norm = |g: &[f64]| -> Result<Vec<f64>> {
            g.iter().map(|&x| normalize_gain(x, noise_power)).collect()
        };
        let out = Self {
            h_p: norm(g_p)?,
            h_sp: norm(g_sp)?,
            h_ss: norm(g_ss)?,
        };
        out.validate(g_p.len())?;
        Ok(out)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        check_len("h_p", &self.h_p, n)?;
        check_len("h_sp", &self.h_sp, n)?;
        check_len("h_ss", &self.h_ss, n)?;
        let all = self.h_p.iter().chain(&self.h_sp).chain(&self.h_ss);
        if all.clone().any(|&h| !(h >= 0.0 && h.is_finite())) {
            return Err(Error::Domain("channel gains must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Per-slot harvested energies (J).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarvestRealization {
    pub e_p: Vec<f64>,
    pub e_s: Vec<f64>,
}

impl HarvestRealization {
    pub fn validate(&self, n: usize) -> Result<()> {
        check_len("e_p", &self.e_p, n)?;
        check_len("e_s", &self.e_s, n)?;
        if self.e_p.iter().chain(&self.e_s).any(|&e| !(e >= 0.0 && e.is_finite())) {
            return Err(Error::Domain("harvested energies must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.e_p.iter().sum::<f64>() + self.e_s.iter().sum::<f64>()
    }
}

/// The four decision vectors over the horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerPolicy {
    /// Primary direct-link power.
    pub p_d: Vec<f64>,
    /// Energy transferred from PT to ST.
    pub delta_r: Vec<f64>,
    /// ST relaying power.
    pub p_sp: Vec<f64>,
    /// ST own-data power.
    pub p_ss: Vec<f64>,
}

impl PowerPolicy {
    pub fn zeros(n: usize) -> Self {
        Self {
            p_d: vec![0.0; n],
            delta_r: vec![0.0; n],
            p_sp: vec![0.0; n],
            p_ss: vec![0.0; n],
        }
    }

    pub fn n_slots(&self) -> usize {
        self.p_d.len()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        check_len("p_d", &self.p_d, n)?;
        check_len("delta_r", &self.delta_r, n)?;
        check_len("p_sp", &self.p_sp, n)?;
        check_len("p_ss", &self.p_ss, n)?;
        let all = self.p_d.iter().chain(&self.delta_r).chain(&self.p_sp).chain(&self.p_ss);
        if all.clone().any(|&p| !(p >= 0.0 && p.is_finite())) {
            return Err(Error::Domain("powers must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Per-slot rates together with their sum and average.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotRates {
    pub per_slot: Vec<f64>,
    pub sum: f64,
    pub average: f64,
}

impl SlotRates {
    fn from_slots(per_slot: Vec<f64>) -> Self {
        let sum: f64 = per_slot.iter().sum();
        let average = if per_slot.is_empty() { 0.0 } else { sum / per_slot.len() as f64 };
        Self { per_slot, sum, average }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub r_pc_slots: Vec<f64>,
    pub r_s_slots: Vec<f64>,
    pub r_pc_avg: f64,
    pub r_s_avg: f64,
    /// Average primary rate of the no-cooperation baseline.
    pub r_p_bar: f64,
}

impl RateSummary {
    pub fn evaluate(channels: &ChannelRealization, policy: &PowerPolicy, r_p_bar: f64) -> Result<Self> {
        let pc = primary_coop_rate(channels, &policy.p_d, &policy.p_sp)?;
        let s = secondary_rate(channels, &policy.p_ss)?;
        Ok(Self {
            r_pc_slots: pc.per_slot,
            r_s_slots: s.per_slot,
            r_pc_avg: pc.average,
            r_s_avg: s.average,
            r_p_bar,
        })
    }
}

/// Constraint residuals of a policy; a value `<= 0` means the constraint holds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintResiduals {
    /// `N * r_p_bar - sum R_pc`.
    pub coop_rate: f64,
    /// `N * rs_bar - sum ln(1 + h_ss P_ss)`.
    pub sec_rate: f64,
    /// PT cumulative spend minus cumulative harvest, per prefix.
    pub pt_energy: Vec<f64>,
    /// ST cumulative spend minus cumulative inflow, per prefix.
    pub st_energy: Vec<f64>,
    /// Energy held by ST at the start of each slot minus `b_max`.
    pub battery: Vec<f64>,
    /// Energy held by ST at the start of each slot (after that slot's inflow).
    pub battery_level: Vec<f64>,
}

impl ConstraintResiduals {
    /// Largest residual over the energy, battery and secondary-rate constraints.
    /// The cooperation-rate constraint is checked separately.
    pub fn max_violation(&self) -> f64 {
        self.pt_energy
            .iter()
            .chain(&self.st_energy)
            .chain(&self.battery)
            .copied()
            .fold(self.sec_rate, f64::max)
    }

    pub fn is_feasible(&self, tol: f64) -> bool {
        self.max_violation() <= tol
    }
}

/// `g / noise_power`.
pub fn normalize_gain(g: f64, noise_power: f64) -> Result<f64> {
    if !(noise_power > 0.0) {
        return Err(Error::InvalidConfig(format!("noise power {noise_power} must be positive")));
    }
    if !(g >= 0.0) {
        return Err(Error::Domain(format!("raw gain {g} must be non-negative")));
    }
    Ok(g / noise_power)
}

/// Deterministic per-realization stream derived from a master seed, so that
/// realization `index` is the same whichever worker draws it.
pub fn realization_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Draws one channel and harvest realization.
///
/// Raw power gains are exponential (Rayleigh fading) with mean `d^-rho`;
/// harvests are Bernoulli with the configured quanta. Draw order is fixed:
/// per slot, `g_p, g_sp, g_ss, E_p, E_s`.
pub fn sample_realization<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> Result<(ChannelRealization, HarvestRealization)> {
    cfg.validate()?;
    let n = cfg.n_slots;
    let means = [cfg.mean_gain(cfg.d_pp), cfg.mean_gain(cfg.d_sp), cfg.mean_gain(cfg.d_ss)];
    let mut ch = ChannelRealization {
        h_p: Vec::with_capacity(n),
        h_sp: Vec::with_capacity(n),
        h_ss: Vec::with_capacity(n),
    };
    let mut hv = HarvestRealization {
        e_p: Vec::with_capacity(n),
        e_s: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let draw = |mean: f64, rng: &mut R| -> f64 {
            let x: f64 = Exp1.sample(rng);
            x * mean / cfg.noise_power
        };
        ch.h_p.push(draw(means[0], rng));
        ch.h_sp.push(draw(means[1], rng));
        ch.h_ss.push(draw(means[2], rng));
        hv.e_p.push(if rng.random_bool(cfg.theta_p) { cfg.e_p_amount } else { 0.0 });
        hv.e_s.push(if rng.random_bool(cfg.theta_s) { cfg.e_s_amount } else { 0.0 });
    }
    Ok((ch, hv))
}

fn check_powers(name: &str, p: &[f64]) -> Result<()> {
    if p.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::Domain(format!("{name} contains a negative or NaN power")));
    }
    Ok(())
}

/// Primary rate with cooperation: `ln(1 + h_p P_d + h_sp P_sp)` per slot
/// (maximal ratio combining at the primary receiver).
pub fn primary_coop_rate(channels: &ChannelRealization, p_d: &[f64], p_sp: &[f64]) -> Result<SlotRates> {
    let n = channels.n_slots();
    check_len("p_d", p_d, n)?;
    check_len("p_sp", p_sp, n)?;
    check_powers("p_d", p_d)?;
    check_powers("p_sp", p_sp)?;
    let per_slot = (0..n)
        .map(|i| (channels.h_p[i] * p_d[i] + channels.h_sp[i] * p_sp[i]).ln_1p())
        .collect();
    Ok(SlotRates::from_slots(per_slot))
}

/// Secondary rate `ln(1 + h_ss P_ss)` per slot.
pub fn secondary_rate(channels: &ChannelRealization, p_ss: &[f64]) -> Result<SlotRates> {
    let n = channels.n_slots();
    check_len("p_ss", p_ss, n)?;
    check_powers("p_ss", p_ss)?;
    let per_slot = (0..n).map(|i| (channels.h_ss[i] * p_ss[i]).ln_1p()).collect();
    Ok(SlotRates::from_slots(per_slot))
}

pub fn constraint_residuals(
    cfg: &ScenarioConfig,
    channels: &ChannelRealization,
    harvests: &HarvestRealization,
    policy: &PowerPolicy,
    r_p_bar: f64,
) -> Result<ConstraintResiduals> {
    let n = channels.n_slots();
    channels.validate(n)?;
    harvests.validate(n)?;
    check_len("p_d", &policy.p_d, n)?;
    check_len("delta_r", &policy.delta_r, n)?;
    check_len("p_sp", &policy.p_sp, n)?;
    check_len("p_ss", &policy.p_ss, n)?;

    let pc = primary_coop_rate(channels, &policy.p_d, &policy.p_sp)?;
    let s = secondary_rate(channels, &policy.p_ss)?;
    let nf = n as f64;

    let mut pt_energy = Vec::with_capacity(n);
    let mut st_energy = Vec::with_capacity(n);
    let mut battery = Vec::with_capacity(n);
    let mut battery_level = Vec::with_capacity(n);
    let (mut pt_spent, mut pt_in) = (0.0, 0.0);
    let (mut st_spent_before, mut st_in) = (0.0, 0.0);
    for i in 0..n {
        pt_spent += policy.p_d[i] + policy.delta_r[i];
        pt_in += harvests.e_p[i];
        pt_energy.push(pt_spent - pt_in);

        st_in += harvests.e_s[i] + cfg.alpha * policy.delta_r[i];
        let level = st_in - st_spent_before;
        battery_level.push(level);
        battery.push(level - cfg.b_max);

        st_spent_before += policy.p_sp[i] + policy.p_ss[i];
        st_energy.push(st_spent_before - st_in);
    }

    Ok(ConstraintResiduals {
        coop_rate: nf * r_p_bar - pc.sum,
        sec_rate: nf * cfg.rs_bar - s.sum,
        pt_energy,
        st_energy,
        battery,
        battery_level,
    })
}
