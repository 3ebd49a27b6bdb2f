//! Optimality audit of a finished solve: the closed-form primal maps
//! evaluated at the returned multipliers must give back the returned
//! powers, and every multiplier must vanish where its constraint is slack.

use serde::{Deserialize, Serialize};

use super::layers::{layer1_primal, layer2_primal};
use super::SolveReport;
use crate::model::ChannelRealization;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KktAudit {
    /// Largest mismatch between a returned power and its closed form, over
    /// slots where the power is positive.
    pub stationarity: f64,
    /// Largest closed-form power at slots returned as zero (a clamp in the
    /// wrong direction).
    pub clamp: f64,
    /// Largest `|multiplier * residual|` over all constraint families.
    pub slackness: f64,
}

impl KktAudit {
    pub fn passes(&self, stationarity_tol: f64, slackness_tol: f64) -> bool {
        self.stationarity <= stationarity_tol && self.clamp <= stationarity_tol && self.slackness <= slackness_tol
    }
}

/// Relative accuracy of the secondary-rate target in the inner solve.
const RATE_PRECISION: f64 = 1e-9;
/// Relative roundoff of accumulated energies.
const ENERGY_PRECISION: f64 = 64.0 * f64::EPSILON;

pub fn kkt_audit(report: &SolveReport, channels: &ChannelRealization) -> KktAudit {
    let (p, d, r) = (&report.policy, &report.duals, &report.residuals);
    let cap = report.level_cap;
    let p_d = layer1_primal(&channels.h_p, &channels.h_sp, &p.p_sp, &d.mu, cap);
    let (p_sp, p_ss) = layer2_primal(
        &channels.h_p,
        &channels.h_sp,
        &channels.h_ss,
        &p.p_d,
        d.lambda,
        &d.gamma,
        &d.gamma_prime,
        cap,
    );

    let mut stationarity: f64 = 0.0;
    let mut clamp: f64 = 0.0;
    for (returned, rebuilt) in [(&p.p_d, &p_d), (&p.p_sp, &p_sp), (&p.p_ss, &p_ss)] {
        for (&x, &y) in returned.iter().zip(rebuilt) {
            if x > 0.0 {
                stationarity = stationarity.max((x - y).abs());
            } else {
                clamp = clamp.max(y);
            }
        }
    }

    // A residual within solver precision counts as active: the multiplier
    // of a barely reachable target can be huge, and multiplying it by
    // leftover roundoff says nothing about slackness.
    let rate_scale = 1.0 + report.rates.r_s_slots.iter().sum::<f64>();
    let energy_scale = 1.0 + p.p_d.iter().chain(&p.p_sp).chain(&p.p_ss).chain(&p.delta_r).sum::<f64>();
    let product = |m: f64, v: f64, floor: f64| if v.abs() <= floor { 0.0 } else { (m * v).abs() };
    let mut slackness = product(d.lambda, r.sec_rate, RATE_PRECISION * rate_scale);
    for (mult, res) in [(&d.mu, &r.pt_energy), (&d.gamma, &r.st_energy), (&d.gamma_prime, &r.battery)] {
        for (&m, &v) in mult.iter().zip(res) {
            slackness = slackness.max(product(m, v, ENERGY_PRECISION * energy_scale));
        }
    }
    KktAudit {
        stationarity,
        clamp,
        slackness,
    }
}
