//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::analysis::{battery_sweep, check_propositions, linear_grid, rate_region, secondary_target_sweep};
use crate::baseline::solve_no_coop;
use crate::fixture;
use crate::io::{csv_text, Cell, ConfigFile};
use crate::model::{Instance, PowerPolicy, ScenarioConfig};
use crate::optimizer::{kkt_audit, solve_with, Mode, SolveReport};
use crate::oracle;

/// Audit tolerance used by the CLI: ten times the solver's feasibility
/// tolerance.
const AUDIT_SCALE: f64 = 10.0;

#[derive(Debug, Parser)]
#[command(name = "ehcoop", version, about = "Offline power policies for energy and information cooperation")]
pub struct Cli {
    /// Worker threads for the Monte Carlo sweeps (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one instance: loaded from the config, or sampled from it.
    Solve {
        #[command(flatten)]
        common: Common,
    },
    /// Solve the built-in five-slot example and compare with its reference policy.
    Example,
    /// Primary rate against the secondary target on one realization.
    Region {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        rs_from: f64,
        #[arg(long)]
        rs_to: f64,
        #[arg(long)]
        steps: usize,
        #[arg(long, value_enum, default_value_t = RegionMode::Both)]
        mode: RegionMode,
    },
    /// Probability of cooperation against the secondary target.
    Coopprob {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        rs_from: f64,
        #[arg(long)]
        rs_to: f64,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = 1000)]
        realizations: usize,
    },
    /// Mean primary rate against the ST battery capacity.
    Bsweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        bmax_from: f64,
        #[arg(long)]
        bmax_to: f64,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = 1000)]
        realizations: usize,
    },
    /// Brute-force reference solve for horizons of at most three slots.
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Coarse grid step (W); defaults to a fiftieth of the PT harvest.
        #[arg(long)]
        grid_step: Option<f64>,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML config or instance file; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed for sampling realizations.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for the output files and the run manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RegionMode {
    Joint,
    Info,
    Both,
}

/// Enough to rerun a command.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub master_seed: Option<u64>,
    pub tool_version: String,
    pub outputs: Vec<String>,
    pub wall_clock_secs: f64,
    pub config: ConfigFile,
}

/// Parses `argv` and runs the command; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let rendered: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(cli, rendered) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn execute(cli: Cli, args: Vec<String>) -> anyhow::Result<()> {
    if let Some(workers) = cli.workers {
        if workers == 0 {
            bail!("--workers must be at least 1");
        }
        // Fails only if a pool already exists, as in tests running several
        // commands in one process; the sweeps are deterministic either way.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    }
    let started = Instant::now();
    match cli.command {
        Command::Example => example(),
        Command::Solve { common } => {
            let (file, inst) = load(&common)?;
            let cfg = &inst.config;
            let report = solve_with(cfg, &inst.channels, &inst.harvests, Mode::Joint, None)?;
            let audit = check_propositions(&report, cfg, &inst.channels, AUDIT_SCALE * cfg.solver.feas_tol);
            let kkt = kkt_audit(&report, &inst.channels);
            print_policy("policy", &report.policy);
            println!("status {:?}, {} iterations", report.status, report.iterations);
            println!("objective {:.6} nats, no-cooperation rate {:.6}", report.objective, report.baseline.r_p_bar);
            println!("cooperation successful: {}", report.cooperation_successful);
            if audit.applicable {
                println!("audit passes: {}", audit.passes(AUDIT_SCALE * cfg.solver.feas_tol));
            } else {
                println!("audit not applicable: the solve did not converge");
            }
            if let Some(dir) = &common.out {
                #[derive(Serialize)]
                struct SolveOutput<'a> {
                    report: &'a SolveReport,
                    audit: &'a crate::analysis::PropositionAudit,
                    kkt: &'a crate::optimizer::KktAudit,
                }
                let body = toml::to_string(&SolveOutput {
                    report: &report,
                    audit: &audit,
                    kkt: &kkt,
                })?;
                let instance = ConfigFile::from_instance(&inst).to_toml()?;
                write_outputs(dir, "solve", &args, Some(common.seed), file, started, &[
                    ("report.toml", body),
                    ("instance.toml", instance),
                ])?;
            }
            Ok(())
        }
        Command::Region {
            common,
            rs_from,
            rs_to,
            steps,
            mode,
        } => {
            let (file, inst) = load(&common)?;
            let grid = grid(rs_from, rs_to, steps)?;
            let run = |m: Mode| rate_region(&inst.config, &inst.channels, &inst.harvests, &grid, m);
            let joint = if mode != RegionMode::Info { Some(run(Mode::Joint)?) } else { None };
            let info = if mode != RegionMode::Joint { Some(run(Mode::InfoOnly)?) } else { None };
            let nocoop = solve_no_coop(&inst.channels.h_p, &inst.harvests.e_p)?.r_p_bar;
            let cell = |curve: &Option<Vec<crate::analysis::RegionPoint>>, k: usize| {
                curve.as_ref().map_or(Cell::Empty, |c| Cell::Real(c[k].rate))
            };
            let rows: Vec<Vec<Cell>> = (0..grid.len())
                .map(|k| vec![Cell::Real(grid[k]), cell(&joint, k), cell(&info, k), Cell::Real(nocoop)])
                .collect();
            let csv = csv_text(&["rs_bar", "rp_joint", "rp_info", "rp_nocoop"], &rows)?;
            emit(&common, "region", &args, file, started, csv)
        }
        Command::Coopprob {
            common,
            rs_from,
            rs_to,
            steps,
            realizations,
        } => {
            let (file, cfg) = load_config(&common)?;
            let sweep = secondary_target_sweep(&cfg, &grid(rs_from, rs_to, steps)?, realizations, common.seed)?;
            let rows: Vec<Vec<Cell>> = (0..sweep.grid.len())
                .map(|k| {
                    vec![
                        Cell::Real(sweep.grid[k]),
                        Cell::Real(sweep.prob_joint[k]),
                        Cell::Real(sweep.prob_info[k]),
                        Cell::Count(sweep.realizations),
                    ]
                })
                .collect();
            let csv = csv_text(&["rs_bar", "p_joint", "p_info", "realizations"], &rows)?;
            emit(&common, "coopprob", &args, file, started, csv)
        }
        Command::Bsweep {
            common,
            bmax_from,
            bmax_to,
            steps,
            realizations,
        } => {
            let (file, cfg) = load_config(&common)?;
            let sweep = battery_sweep(&cfg, &grid(bmax_from, bmax_to, steps)?, realizations, common.seed)?;
            let rows: Vec<Vec<Cell>> = (0..sweep.grid.len())
                .map(|k| {
                    vec![
                        Cell::Real(sweep.grid[k]),
                        Cell::Real(sweep.rate_joint[k]),
                        Cell::Real(sweep.rate_info[k]),
                        Cell::Count(sweep.realizations),
                    ]
                })
                .collect();
            let csv = csv_text(&["b_max", "rp_joint", "rp_info", "realizations"], &rows)?;
            emit(&common, "bsweep", &args, file, started, csv)
        }
        Command::Oracle { common, grid_step } => {
            let (file, inst) = load(&common)?;
            if inst.config.n_slots > oracle::MAX_SLOTS {
                bail!("the oracle handles at most {} slots, got {}", oracle::MAX_SLOTS, inst.config.n_slots);
            }
            let step = grid_step.unwrap_or_else(|| oracle::default_grid_step(&inst.harvests));
            let result = oracle::brute_force_solve(&inst.config, &inst.channels, &inst.harvests, step)?;
            print_policy("oracle policy", &result.policy);
            println!("objective {:.6} nats at grid step {}", result.objective, result.grid_step);
            if let Some(dir) = &common.out {
                write_outputs(dir, "oracle", &args, Some(common.seed), file, started, &[
                    ("oracle.toml", toml::to_string(&result)?),
                    ("instance.toml", ConfigFile::from_instance(&inst).to_toml()?),
                ])?;
            }
            Ok(())
        }
    }
}

fn grid(from: f64, to: f64, steps: usize) -> anyhow::Result<Vec<f64>> {
    if steps == 0 || !from.is_finite() || !to.is_finite() {
        bail!("a sweep needs finite bounds and at least one step");
    }
    Ok(linear_grid(from, to, steps))
}

fn load_config(common: &Common) -> anyhow::Result<(ConfigFile, ScenarioConfig)> {
    let file = match &common.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let cfg = file.config();
    Ok((file, cfg))
}

/// The instance in the config file, or realization 0 of the seed.
fn load(common: &Common) -> anyhow::Result<(ConfigFile, Instance)> {
    let (file, cfg) = load_config(common)?;
    let inst = match file.instance()? {
        Some(inst) => inst,
        None => Instance::sample(&cfg, common.seed, 0)?,
    };
    Ok((file, inst))
}

/// Prints the CSV, and with `--out` also writes it with a manifest.
fn emit(common: &Common, command: &str, args: &[String], file: ConfigFile, started: Instant, csv: String) -> anyhow::Result<()> {
    print!("{csv}");
    if let Some(dir) = &common.out {
        write_outputs(dir, command, args, Some(common.seed), file, started, &[(&format!("{command}.csv"), csv)])?;
    }
    Ok(())
}

fn write_outputs(
    dir: &Path,
    command: &str,
    args: &[String],
    master_seed: Option<u64>,
    config: ConfigFile,
    started: Instant,
    files: &[(&str, String)],
) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut outputs = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        outputs.push(path.display().to_string());
    }
    let manifest = RunManifest {
        command: command.into(),
        args: args.to_vec(),
        master_seed,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        outputs,
        wall_clock_secs: started.elapsed().as_secs_f64(),
        config,
    };
    let path = dir.join("manifest.toml");
    std::fs::write(&path, toml::to_string(&manifest)?).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn print_policy(title: &str, p: &PowerPolicy) {
    println!("{title}");
    println!("{:>5} {:>10} {:>10} {:>10} {:>10}", "slot", "p_d", "delta_r", "p_sp", "p_ss");
    for i in 0..p.n_slots() {
        println!("{:>5} {:>10.4} {:>10.4} {:>10.4} {:>10.4}", i + 1, p.p_d[i], p.delta_r[i], p.p_sp[i], p.p_ss[i]);
    }
    let pt: f64 = p.p_d.iter().chain(&p.delta_r).sum();
    let st: f64 = p.p_sp.iter().chain(&p.p_ss).sum();
    println!("sum(p_d + delta_r) = {pt:.4}, sum(p_sp + p_ss) = {st:.4}");
}

fn example() -> anyhow::Result<()> {
    let inst = fixture::worked_example_instance();
    let cfg = &inst.config;
    let baseline = solve_no_coop(&inst.channels.h_p, &inst.harvests.e_p)?;
    println!("no-cooperation rate {:.4} nats/slot/Hz", baseline.r_p_bar);

    let published = fixture::worked_example_policy();
    print_policy("published policy", &published);
    let objective = |p: &PowerPolicy| -> f64 {
        (0..p.n_slots()).map(|i| (inst.channels.h_p[i] * p.p_d[i] + inst.channels.h_sp[i] * p.p_sp[i]).ln_1p()).sum()
    };
    println!("published objective {:.4} nats", objective(&published));

    let report = solve_with(cfg, &inst.channels, &inst.harvests, Mode::Joint, None)?;
    print_policy("solver policy", &report.policy);
    println!(
        "solver objective {:.4} nats ({:.4} per slot), status {:?}",
        report.objective,
        report.objective / cfg.n_slots as f64,
        report.status
    );
    let tol = AUDIT_SCALE * cfg.solver.feas_tol;
    let audit = check_propositions(&report, cfg, &inst.channels, tol);
    println!("audit {audit:?}");
    println!("audit passes: {}", audit.applicable && audit.passes(tol));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_subcommand() {
        for argv in [
            vec!["ehcoop", "example"],
            vec!["ehcoop", "solve", "--seed", "3"],
            vec!["ehcoop", "region", "--rs-from", "0", "--rs-to", "1", "--steps", "3", "--mode", "joint"],
            vec!["ehcoop", "coopprob", "--rs-from", "0", "--rs-to", "1", "--steps", "3", "--realizations", "5"],
            vec!["ehcoop", "--workers", "2", "bsweep", "--bmax-from", "0", "--bmax-to", "4", "--steps", "2"],
            vec!["ehcoop", "oracle", "--grid-step", "0.1"],
        ] {
            assert!(Cli::try_parse_from(&argv).is_ok(), "{argv:?}");
        }
        assert!(Cli::try_parse_from(["ehcoop", "solve", "--bogus"]).is_err());
    }

    #[test]
    fn usage_errors_exit_nonzero() {
        assert_ne!(run(["ehcoop", "frobnicate"]), 0);
        assert_ne!(run(["ehcoop", "solve", "--config", "/definitely/missing.toml"]), 0);
    }
}
