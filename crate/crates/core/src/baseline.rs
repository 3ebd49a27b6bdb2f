//! No-cooperation benchmark: the primary transmitter alone maximizes
//! `sum ln(1 + h_p P'_d)` under energy causality. Its average rate is the
//! floor that cooperation has to beat.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::waterfill::{directional, SlotResponse};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub p_d_prime: Vec<f64>,
    /// `P'_d + 1/h_p` on slots that transmit, otherwise the epoch level.
    pub water_levels: Vec<f64>,
    /// Average no-cooperation rate (nats/slot/Hz).
    pub r_p_bar: f64,
}

/// Exact directional water-filling over the energy-causality polytope.
///
/// Slots with `h_p = 0` get no power. With every gain zero the result is
/// the zero policy at rate zero.
pub fn solve_no_coop(h_p: &[f64], e_p: &[f64]) -> Result<BaselineResult> {
    let n = h_p.len();
    if e_p.len() != n {
        return Err(Error::Shape {
            what: "e_p",
            got: e_p.len(),
            expected: n,
        });
    }
    if h_p.iter().chain(e_p).any(|&v| !(v >= 0.0 && v.is_finite())) {
        return Err(Error::Domain("gains and harvests must be finite and non-negative".into()));
    }
    if n == 0 {
        return Ok(BaselineResult {
            p_d_prime: vec![],
            water_levels: vec![],
            r_p_bar: 0.0,
        });
    }

    let slots: Vec<SlotResponse> = h_p
        .iter()
        .map(|&h| if h > 0.0 { SlotResponse::floor(1.0 / h) } else { SlotResponse::empty() })
        .collect();
    let budget: Vec<f64> = e_p
        .iter()
        .scan(0.0, |acc, &e| {
            *acc += e;
            Some(*acc)
        })
        .collect();
    let max_floor = h_p.iter().filter(|&&h| h > 0.0).map(|h| 1.0 / h).fold(0.0, f64::max);
    let cap = 10.0 * (budget[n - 1] + max_floor) + 1.0;

    let alloc = directional(&slots, &budget, cap);
    let rate_sum: f64 = h_p.iter().zip(&alloc.power).map(|(h, p)| (h * p).ln_1p()).sum();
    Ok(BaselineResult {
        p_d_prime: alloc.power,
        water_levels: alloc.levels,
        r_p_bar: rate_sum / n as f64,
    })
}
