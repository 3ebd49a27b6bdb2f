//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::process::Command;
use std::time::{Duration, Instant};

use ehcoop::analysis::{
    battery_sweep, check_propositions, cooperation_cutoff, linear_grid, rate_region, secondary_target_sweep,
};
use ehcoop::baseline::solve_no_coop;
use ehcoop::fixture;
use ehcoop::model::{Instance, PowerPolicy, ScenarioConfig};
use ehcoop::optimizer::{kkt_audit, solve, Mode, Status};
use ehcoop::oracle::{brute_force_solve, default_grid_step};
use ehcoop::Error;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn objective(inst: &Instance, p: &PowerPolicy) -> f64 {
    let ch = &inst.channels;
    (0..p.n_slots()).map(|i| (ch.h_p[i] * p.p_d[i] + ch.h_sp[i] * p.p_sp[i]).ln_1p()).sum()
}

fn baseline_rate() -> Outcome {
    let inst = fixture::worked_example_instance();
    let mut fastest = Duration::MAX;
    let mut rate = f64::NAN;
    for _ in 0..20 {
        let t = Instant::now();
        rate = solve_no_coop(&inst.channels.h_p, &inst.harvests.e_p).map_err(|e| e.to_string())?.r_p_bar;
        fastest = fastest.min(t.elapsed());
    }
    check(
        (rate - 3.0073).abs() <= 1e-3 && fastest < Duration::from_millis(1),
        format!("rate {rate:.5}, {fastest:?}"),
    )
}

fn reference_energy_accounting() -> Outcome {
    let inst = fixture::worked_example_instance();
    let p = fixture::worked_example_policy();
    let pt: f64 = p.p_d.iter().chain(&p.delta_r).sum();
    let st: f64 = p.p_sp.iter().chain(&p.p_ss).sum();
    let harvest_p: f64 = inst.harvests.e_p.iter().sum();
    let inflow: f64 = inst.harvests.e_s.iter().sum::<f64>() + inst.config.alpha * p.delta_r.iter().sum::<f64>();
    check(
        (pt - 14.0).abs() <= 1e-3
            && (pt - harvest_p).abs() <= 1e-3
            && (st - 7.4617).abs() <= 1e-3
            && (st - inflow).abs() <= 1e-3,
        format!("PT spend {pt:.4} of {harvest_p:.4}, ST spend {st:.4} of {inflow:.4}"),
    )
}

fn beats_reference_policy() -> Outcome {
    let inst = fixture::worked_example_instance();
    let reference = objective(&inst, &fixture::worked_example_policy());
    let r = solve(&inst.config, &inst.channels, &inst.harvests).map_err(|e| e.to_string())?;
    let feasible = r.residuals.is_feasible(inst.config.solver.feas_tol);
    check(
        r.converged && feasible && r.objective >= reference - 1e-2 && (reference - 19.161).abs() < 1e-2,
        format!("solver {:.4} vs reference {reference:.4} nats", r.objective),
    )
}

fn oracle_agreement() -> Outcome {
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for j in 0..50u64 {
        let cfg = ScenarioConfig {
            n_slots: 1 + (j % 3) as usize,
            ..ScenarioConfig::default()
        };
        let inst = Instance::sample(&cfg, 2024, j).map_err(|e| e.to_string())?;
        let s = solve(&cfg, &inst.channels, &inst.harvests).map_err(|e| e.to_string())?;
        match brute_force_solve(&cfg, &inst.channels, &inst.harvests, default_grid_step(&inst.harvests)) {
            Ok(o) => {
                if s.status != Status::Converged {
                    return Err(format!("instance {j}: solver {:?} but the oracle found {:.5}", s.status, o.objective));
                }
                worst = worst.max((s.objective - o.objective).abs() / o.objective.abs().max(1.0));
                compared += 1;
            }
            Err(Error::Infeasible(_)) if s.status == Status::Infeasible => {}
            Err(e) => return Err(format!("instance {j}: oracle {e}, solver {:?}", s.status)),
        }
    }
    let elapsed = started.elapsed();
    check(
        worst <= 1e-2 && elapsed < Duration::from_secs(600),
        format!("{compared} feasible of 50, worst relative gap {worst:.2e}, {elapsed:.1?}"),
    )
}

/// Converged random solves at the default scenario, with their audits.
fn batch() -> Result<(usize, usize, usize), String> {
    let cfg = ScenarioConfig::default();
    let (mut converged, mut audit_fail, mut kkt_fail) = (0, 0, 0);
    let mut j = 0u64;
    while converged < 1000 {
        let inst = Instance::sample(&cfg, 7, j).map_err(|e| e.to_string())?;
        j += 1;
        let r = solve(&cfg, &inst.channels, &inst.harvests).map_err(|e| e.to_string())?;
        if !r.converged {
            continue;
        }
        converged += 1;
        if !check_propositions(&r, &cfg, &inst.channels, 1e-3).passes(1e-3) {
            audit_fail += 1;
        }
        let tol = cfg.solver.feas_tol;
        if !kkt_audit(&r, &inst.channels).passes(10.0 * tol, tol) {
            kkt_fail += 1;
        }
    }
    Ok((converged, audit_fail, kkt_fail))
}

fn structural_audits(b: &(usize, usize, usize)) -> Outcome {
    check(b.1 == 0, format!("{} of {} converged solves fail the audit", b.1, b.0))
}

fn kkt_reconstruction(b: &(usize, usize, usize)) -> Outcome {
    let inst = fixture::worked_example_instance();
    let r = solve(&inst.config, &inst.channels, &inst.harvests).map_err(|e| e.to_string())?;
    let tol = inst.config.solver.feas_tol;
    let example = kkt_audit(&r, &inst.channels);
    check(
        b.2 == 0 && example.passes(10.0 * tol, tol),
        format!("{} of {} random solves fail; example {example:?}", b.2, b.0),
    )
}

fn figure_properties() -> Outcome {
    let slack = ScenarioConfig::default().solver.feas_tol;
    let cfg = ScenarioConfig::default();

    let rs = linear_grid(0.0, 2.0, 5);
    let s = secondary_target_sweep(&cfg, &rs, 200, 11).map_err(|e| e.to_string())?;
    let non_increasing = |v: &[f64]| v.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let prob_ok = non_increasing(&s.prob_joint)
        && non_increasing(&s.prob_info)
        && s.prob_joint.iter().zip(&s.prob_info).all(|(j, i)| j >= i);

    let bmax = linear_grid(0.0, 8.0, 5);
    let b = battery_sweep(&cfg, &bmax, 200, 12).map_err(|e| e.to_string())?;
    let non_decreasing = |v: &[f64]| v.windows(2).all(|w| w[1] >= w[0] - slack);
    let rate_ok = non_decreasing(&b.rate_joint)
        && non_decreasing(&b.rate_info)
        && b.rate_joint.iter().zip(&b.rate_info).all(|(j, i)| *j >= i - slack);

    // Rate region on the worked example: flat at the no-cooperation rate
    // past each cutoff, and the joint cutoff is no smaller.
    let inst = fixture::worked_example_instance();
    let floor = solve_no_coop(&inst.channels.h_p, &inst.harvests.e_p).map_err(|e| e.to_string())?.r_p_bar;
    let cut = |m| cooperation_cutoff(&inst.config, &inst.channels, &inst.harvests, m, 6.0, 1e-3);
    let (cut_joint, cut_info) = (cut(Mode::Joint).map_err(|e| e.to_string())?, cut(Mode::InfoOnly).map_err(|e| e.to_string())?);
    let grid = linear_grid(0.0, 6.0, 25);
    let mut region_ok = cut_joint >= cut_info;
    for (mode, cutoff) in [(Mode::Joint, cut_joint), (Mode::InfoOnly, cut_info)] {
        let curve = rate_region(&inst.config, &inst.channels, &inst.harvests, &grid, mode).map_err(|e| e.to_string())?;
        region_ok &= curve.iter().all(|p| p.rate >= floor - slack);
        region_ok &= curve.iter().filter(|p| p.rs_bar > cutoff + 1e-3).all(|p| (p.rate - floor).abs() <= 1e-12);
    }
    check(
        prob_ok && rate_ok && region_ok,
        format!(
            "probability {prob_ok}, battery {rate_ok}, region {region_ok} (cutoffs joint {cut_joint:.3}, info {cut_info:.3})"
        ),
    )
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_ehcoop");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |workers: &str, tag: &str, sweep: &[&str]| -> Result<Vec<u8>, String> {
        let out = dir.path().join(tag);
        let status = Command::new(bin)
            .args(["--workers", workers])
            .args(sweep)
            .args(["--realizations", "60", "--seed", "5", "--out"])
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(String::from_utf8_lossy(&status.stderr).into_owned());
        }
        std::fs::read(out.join(format!("{}.csv", sweep[0]))).map_err(|e| e.to_string())
    };
    let mut identical = true;
    for sweep in [
        ["coopprob", "--rs-from", "0", "--rs-to", "2", "--steps", "4"],
        ["bsweep", "--bmax-from", "0", "--bmax-to", "6", "--steps", "4"],
    ] {
        let a = run("1", &format!("{}-a", sweep[0]), &sweep)?;
        let b = run("1", &format!("{}-b", sweep[0]), &sweep)?;
        let c = run("3", &format!("{}-c", sweep[0]), &sweep)?;
        identical &= a == b && a == c && !a.is_empty();
    }
    check(identical, "coopprob and bsweep CSVs across reruns and worker counts".into())
}

fn main() {
    let batch = batch();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("no-cooperation baseline rate", Box::new(baseline_rate)),
        ("reference policy energy accounting", Box::new(reference_energy_accounting)),
        ("solver matches or beats the reference policy", Box::new(beats_reference_policy)),
        ("agreement with the brute-force oracle", Box::new(oracle_agreement)),
        ("structural audits on 1000 random solves", Box::new(|| batch.clone().and_then(|b| structural_audits(&b)))),
        ("closed-form reconstruction and slackness", Box::new(|| batch.clone().and_then(|b| kkt_reconstruction(&b)))),
        ("sweep orderings and rate-region cutoffs", Box::new(figure_properties)),
        ("byte-identical sweep output", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = run();
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail}; {secs:.1}s)", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail}; {secs:.1}s)", k + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
