//! Randomized invariants of the solver, the baseline and the oracle.

use ehcoop::baseline::solve_no_coop;
use ehcoop::model::{ChannelRealization, HarvestRealization, ScenarioConfig};
use ehcoop::optimizer::{solve_with, Mode, Status};
use ehcoop::oracle::{brute_force_solve, default_grid_step};
use proptest::prelude::*;

fn instance(max_slots: usize) -> impl Strategy<Value = (ScenarioConfig, ChannelRealization, HarvestRealization)> {
    (1..=max_slots)
        .prop_flat_map(|n| {
            let gains = prop::collection::vec(0.05f64..5.0, n);
            let energy = prop::collection::vec(0.0f64..4.0, n);
            (
                gains.clone(),
                gains.clone(),
                gains,
                energy.clone(),
                energy,
                0.1f64..1.0,
                0.5f64..8.0,
                0.0f64..1.0,
            )
        })
        .prop_map(|(h_p, h_sp, h_ss, e_p, e_s, alpha, b_max, rs_bar)| {
            let cfg = ScenarioConfig {
                n_slots: h_p.len(),
                alpha,
                b_max,
                rs_bar,
                ..ScenarioConfig::default()
            };
            (cfg, ChannelRealization { h_p, h_sp, h_ss }, HarvestRealization { e_p, e_s })
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn converged_policies_are_feasible((cfg, ch, hv) in instance(6)) {
        let r = solve_with(&cfg, &ch, &hv, Mode::Joint, None).unwrap();
        if r.status == Status::Converged {
            prop_assert!(r.residuals.is_feasible(cfg.solver.feas_tol), "{:?}", r.residuals);
            prop_assert!(r.policy.p_d.iter().chain(&r.policy.delta_r).chain(&r.policy.p_sp).chain(&r.policy.p_ss).all(|&p| p >= 0.0));
        }
        prop_assert!(r.effective_rate >= r.baseline.r_p_bar - cfg.solver.feas_tol);
    }

    #[test]
    fn energy_transfer_never_hurts((cfg, ch, hv) in instance(5)) {
        let joint = solve_with(&cfg, &ch, &hv, Mode::Joint, None).unwrap();
        let info = solve_with(&cfg, &ch, &hv, Mode::InfoOnly, None).unwrap();
        prop_assert!(info.policy.delta_r.iter().all(|&d| d == 0.0));
        if info.status == Status::Converged {
            prop_assert_ne!(joint.status, Status::Infeasible);
            if joint.status == Status::Converged {
                let slack = 1e-4 * (1.0 + info.objective.abs());
                prop_assert!(joint.objective >= info.objective - slack, "joint {} info {}", joint.objective, info.objective);
            }
        }
    }

    #[test]
    fn baseline_spends_the_harvest(
        (h, e) in (1usize..8).prop_flat_map(|n| (prop::collection::vec(0.01f64..10.0, n), prop::collection::vec(0.0f64..5.0, n)))
    ) {
        let b = solve_no_coop(&h, &e).unwrap();
        let total: f64 = e.iter().sum();
        let spent: f64 = b.p_d_prime.iter().sum();
        prop_assert!((spent - total).abs() <= 1e-9 * (1.0 + total));
        let mut harvested = 0.0;
        let mut used = 0.0;
        for (p, x) in b.p_d_prime.iter().zip(&e) {
            harvested += x;
            used += p;
            prop_assert!(used <= harvested + 1e-9 * (1.0 + harvested));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn single_slot_solves_match_the_oracle((cfg, ch, hv) in instance(1)) {
        let s = solve_with(&cfg, &ch, &hv, Mode::Joint, None).unwrap();
        match brute_force_solve(&cfg, &ch, &hv, default_grid_step(&hv)) {
            Ok(o) => {
                prop_assert_eq!(s.status, Status::Converged);
                let gap = (s.objective - o.objective).abs() / o.objective.abs().max(1.0);
                prop_assert!(gap <= 1e-2, "solver {} oracle {}", s.objective, o.objective);
            }
            Err(_) => prop_assert_eq!(s.status, Status::Infeasible),
        }
    }
}
