//! The five-slot worked example: published gains, harvests and optimal
//! policy table. Gains are the raw values, normalized with a 0 dBm noise floor.

use crate::model::{dbm_to_watts, ChannelRealization, HarvestRealization, Instance, PowerPolicy, ScenarioConfig};

pub const G_P: [f64; 5] = [0.0191, 0.0080, 0.0036, 0.0024, 0.0119];
pub const G_SP: [f64; 5] = [0.0065, 0.0074, 0.0194, 0.0256, 0.0067];
pub const G_SS: [f64; 5] = [0.0027, 0.0140, 0.0164, 0.0201, 0.0010];
pub const E_P: [f64; 5] = [7.0, 0.0, 0.0, 7.0, 0.0];
pub const E_S: [f64; 5] = [0.0, 0.0, 1.0, 0.0, 1.0];

/// Reported no-cooperation average rate for the example (nats/slot/Hz).
pub const NO_COOP_RATE: f64 = 3.0073;

pub fn worked_example_config() -> ScenarioConfig {
    ScenarioConfig {
        n_slots: 5,
        b_max: 3.5,
        alpha: 1.0,
        noise_power: dbm_to_watts(0.0),
        rs_bar: 0.5,
        ..ScenarioConfig::default()
    }
}

pub fn worked_example_instance() -> Instance {
    let config = worked_example_config();
    let channels = ChannelRealization::from_raw(&G_P, &G_SP, &G_SS, config.noise_power)
        .expect("fixture gains are valid");
    Instance {
        config,
        channels,
        harvests: HarvestRealization {
            e_p: E_P.to_vec(),
            e_s: E_S.to_vec(),
        },
    }
}

/// The published optimal policy for the example.
pub fn worked_example_policy() -> PowerPolicy {
    PowerPolicy {
        p_d: vec![2.5555, 2.4828, 0.0, 0.0, 3.5],
        delta_r: vec![0.7216, 0.4908, 0.7493, 3.5, 0.0],
        p_sp: vec![0.0, 0.0, 2.5014, 3.1835, 1.0],
        p_ss: vec![0.0, 0.2249, 0.2354, 0.3165, 0.0],
    }
}
