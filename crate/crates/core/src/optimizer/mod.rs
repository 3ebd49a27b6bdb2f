//! Three-layer solver for the joint information and energy cooperation
//! problem: maximize the primary's cooperative sum-rate subject to the
//! secondary rate target, PT and ST energy causality and the ST battery.
//!
//! Layers 1 and 2 are solved to a fixed point for the current transfer
//! vector (alternating between them, since the primary rate couples `P_d`
//! and `P_sp`); Layer 3 then moves the transfers, by default with a
//! proximal bundle step built from the multipliers the inner layers
//! produced. A plain diminishing subgradient step remains available.

mod bundle;
mod kkt;
mod layers;
mod transfer;

use serde::{Deserialize, Serialize};

use crate::baseline::{solve_no_coop, BaselineResult};
use bundle::{dot, Cut};
use crate::error::{Error, Result};
use crate::model::{
    constraint_residuals, ChannelRealization, ConstraintResiduals, HarvestRealization, PowerPolicy, RateSummary,
    ScenarioConfig,
};

pub use kkt::{kkt_audit, KktAudit};
pub use layers::{
    layer1_dual_update, layer1_exact, layer1_primal, layer2_dual_update, layer2_exact, layer2_primal, layer3_update,
    st_denominators, Layer2Solution, DENOM_FLOOR,
};
pub use transfer::{project as project_transfers, transfer_caps};

/// Step-size rule for the transfer update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `step0 / sqrt(t)`, every step taken.
    Diminishing,
    /// A step is kept only if it raises the objective by a fixed fraction
    /// of the first-order prediction; the step doubles after a kept step
    /// and halves after a rejected one.
    #[default]
    Adaptive,
}

/// How Layers 1 and 2 reach their fixed point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerMethod {
    /// Water-filling with multipliers read off the levels.
    #[default]
    Exact,
    /// Closed-form primal map plus projected dual-gradient steps.
    DualAscent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// Initial transfer step.
    pub step0: f64,
    pub step_rule: StepRule,
    pub max_outer_iters: usize,
    pub max_inner_iters: usize,
    /// Relative objective change below which the outer loop has settled.
    pub primal_tol: f64,
    /// Largest constraint residual accepted at termination.
    pub feas_tol: f64,
    /// Water level used when a dual denominator vanishes. Derived from the
    /// instance when unset.
    pub level_cap: Option<f64>,
    /// Outer iterations over which the objective must stay flat.
    pub plateau_window: usize,
    pub inner: InnerMethod,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            step0: 0.5,
            step_rule: StepRule::Adaptive,
            max_outer_iters: 50_000,
            max_inner_iters: 200,
            primal_tol: 1e-6,
            feas_tol: 1e-4,
            level_cap: None,
            plateau_window: 50,
            inner: InnerMethod::Exact,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if !(self.step0 > 0.0 && self.step0.is_finite()) {
            return bad("solver step0 must be positive");
        }
        if self.max_outer_iters == 0 || self.max_inner_iters == 0 || self.plateau_window == 0 {
            return bad("solver iteration limits must be positive");
        }
        if !(self.primal_tol > 0.0 && self.feas_tol > 0.0) {
            return bad("solver tolerances must be positive");
        }
        if let Some(cap) = self.level_cap {
            if !(cap > 0.0 && cap.is_finite()) {
                return bad("solver level_cap must be positive");
            }
        }
        Ok(())
    }
}

/// Which cooperation the solve may use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Relaying plus energy transfer.
    #[default]
    Joint,
    /// Relaying only: transfers pinned to zero.
    InfoOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    /// Secondary rate target.
    pub lambda: f64,
    /// PT energy causality.
    pub mu: Vec<f64>,
    /// ST energy causality.
    pub gamma: Vec<f64>,
    /// ST battery capacity.
    pub gamma_prime: Vec<f64>,
}

impl DualState {
    pub fn initial(n: usize) -> Self {
        let v = 1.0 / n as f64;
        Self {
            lambda: 1.0,
            mu: vec![v; n],
            gamma: vec![v; n],
            gamma_prime: vec![v; n],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    /// The secondary target cannot be met by any admissible transfer.
    Infeasible,
    IterationLimit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub mode: Mode,
    pub status: Status,
    pub policy: PowerPolicy,
    pub duals: DualState,
    pub rates: RateSummary,
    pub residuals: ConstraintResiduals,
    /// Primary cooperative sum-rate (nats).
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    pub cooperation_successful: bool,
    /// Average primary rate actually obtained: the cooperative rate when
    /// cooperation succeeds, else the no-cooperation rate.
    pub effective_rate: f64,
    pub level_cap: f64,
    pub baseline: BaselineResult,
}

/// One outer iteration, for diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub best_feasible: f64,
    pub max_residual: f64,
    pub step: f64,
}

/// Water level that no optimal allocation on this instance can reach.
pub fn auto_level_cap(channels: &ChannelRealization, harvests: &HarvestRealization) -> f64 {
    let energy = harvests.total();
    let mut floor: f64 = 0.0;
    for i in 0..channels.n_slots() {
        let (hp, hsp, hss) = (channels.h_p[i], channels.h_sp[i], channels.h_ss[i]);
        if hp > 0.0 {
            floor = floor.max((1.0 + hsp * energy) / hp);
        }
        if hsp > 0.0 {
            floor = floor.max((1.0 + hp * energy) / hsp);
        }
        if hss > 0.0 {
            floor = floor.max(1.0 / hss);
        }
    }
    10.0 * (energy + floor) + 1.0
}

/// Solves the joint problem.
pub fn solve(cfg: &ScenarioConfig, channels: &ChannelRealization, harvests: &HarvestRealization) -> Result<SolveReport> {
    solve_with(cfg, channels, harvests, Mode::Joint, None)
}

struct Inner {
    p_d: Vec<f64>,
    p_sp: Vec<f64>,
    p_ss: Vec<f64>,
    duals: DualState,
    st_feasible: bool,
    max_secondary: f64,
    /// ST multipliers pricing the removal of ST energy, when they differ
    /// from those in `duals`.
    removal: Option<(Vec<f64>, Vec<f64>)>,
}

struct Ctx<'a> {
    cfg: &'a ScenarioConfig,
    ch: &'a ChannelRealization,
    hv: &'a HarvestRealization,
    cap: f64,
}

impl Ctx<'_> {
    fn inner(&self, delta_r: &[f64], prev: &Inner) -> Inner {
        match self.cfg.solver.inner {
            InnerMethod::Exact => self.inner_exact(delta_r, prev),
            InnerMethod::DualAscent => self.inner_dual_ascent(delta_r, prev),
        }
    }

    fn inner_exact(&self, delta_r: &[f64], prev: &Inner) -> Inner {
        let (cfg, ch, hv) = (self.cfg, self.ch, self.hv);
        let tol = 1e-12 * (1.0 + hv.total());
        let mut p_sp = prev.p_sp.clone();
        let mut p_d = prev.p_d.clone();
        let mut lambda = prev.duals.lambda;
        let mut out = None;
        for _ in 0..cfg.solver.max_inner_iters {
            let (pd, mu) = layer1_exact(ch, &p_sp, delta_r, &hv.e_p, self.cap);
            let l2 = layer2_exact(cfg, ch, hv, &pd, delta_r, lambda, self.cap);
            let change = max_abs_diff(&pd, &p_d).max(max_abs_diff(&l2.p_sp, &p_sp));
            p_d = pd;
            p_sp = l2.p_sp.clone();
            if l2.feasible {
                lambda = l2.lambda;
            }
            out = Some((mu, l2));
            if change <= tol {
                break;
            }
        }
        let (mu, l2) = out.expect("at least one inner pass");
        Inner {
            p_d,
            p_sp,
            p_ss: l2.p_ss,
            duals: DualState {
                lambda: l2.lambda,
                mu,
                gamma: l2.gamma,
                gamma_prime: l2.gamma_prime,
            },
            st_feasible: l2.feasible,
            max_secondary: l2.max_secondary,
            removal: l2.removal_duals,
        }
    }

    fn inner_dual_ascent(&self, delta_r: &[f64], prev: &Inner) -> Inner {
        let (cfg, ch, hv) = (self.cfg, self.ch, self.hv);
        let s = &cfg.solver;
        let mut duals = prev.duals.clone();
        let mut policy = PowerPolicy {
            p_d: prev.p_d.clone(),
            delta_r: delta_r.to_vec(),
            p_sp: prev.p_sp.clone(),
            p_ss: prev.p_ss.clone(),
        };
        for j in 1..=s.max_inner_iters {
            let step = s.step0 / (j as f64).sqrt();
            policy.p_d = layer1_primal(&ch.h_p, &ch.h_sp, &policy.p_sp, &duals.mu, self.cap);
            let mu = layer1_dual_update(&duals.mu, &policy.p_d, delta_r, &hv.e_p, step);
            let moved = max_abs_diff(&mu, &duals.mu);
            duals.mu = mu;
            if moved <= s.primal_tol {
                break;
            }
        }
        for j in 1..=s.max_inner_iters {
            let step = s.step0 / (j as f64).sqrt();
            (policy.p_sp, policy.p_ss) = layer2_primal(
                &ch.h_p,
                &ch.h_sp,
                &ch.h_ss,
                &policy.p_d,
                duals.lambda,
                &duals.gamma,
                &duals.gamma_prime,
                self.cap,
            );
            let (lambda, gamma, gamma_prime) =
                layer2_dual_update(duals.lambda, &duals.gamma, &duals.gamma_prime, &policy, ch, hv, cfg, step);
            let moved = (lambda - duals.lambda)
                .abs()
                .max(max_abs_diff(&gamma, &duals.gamma))
                .max(max_abs_diff(&gamma_prime, &duals.gamma_prime));
            duals.lambda = lambda;
            duals.gamma = gamma;
            duals.gamma_prime = gamma_prime;
            if moved <= s.primal_tol {
                break;
            }
        }
        let n = delta_r.len();
        let sec: f64 = (0..n).map(|i| (ch.h_ss[i] * policy.p_ss[i]).ln_1p()).sum();
        Inner {
            p_d: policy.p_d,
            p_sp: policy.p_sp,
            p_ss: policy.p_ss,
            duals,
            st_feasible: true,
            max_secondary: sec,
            removal: None,
        }
    }
}

/// Sufficient-increase fraction for accepting an adaptive Layer 3 step.
const ARMIJO: f64 = 1e-4;
/// Adaptive steps never exceed this multiple of `step0`.
const MAX_STEP_GROWTH: f64 = 1e12;

impl Inner {
    fn progress(&self, ch: &ChannelRealization) -> f64 {
        if self.st_feasible {
            objective_of(ch, &self.p_d, &self.p_sp)
        } else {
            self.max_secondary
        }
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Ascent direction of the optimal value in the transfers, read off the
/// multipliers of an inner solution.
fn transfer_ascent(inner: &Inner, alpha: f64) -> Vec<f64> {
    ascent_from(inner, &inner.duals.gamma, &inner.duals.gamma_prime, alpha)
}

fn ascent_from(inner: &Inner, gamma: &[f64], gamma_prime: &[f64], alpha: f64) -> Vec<f64> {
    let per_slot: Vec<f64> = (0..gamma.len())
        .map(|j| {
            let mu = if inner.st_feasible { inner.duals.mu[j] } else { 0.0 };
            alpha * (gamma[j] - gamma_prime[j]) - mu
        })
        .collect();
    layers::tail_sums(&per_slot)
}

/// Exact cuts at an inner solution: one per extreme of the ST multipliers
/// when they are ambiguous.
fn exact_cuts(inner: &Inner, alpha: f64) -> Vec<Cut> {
    let mut cuts = vec![Cut::exact(transfer_ascent(inner, alpha))];
    if let Some((gamma, gamma_prime)) = &inner.removal {
        cuts.push(Cut::exact(ascent_from(inner, gamma, gamma_prime, alpha)));
    }
    cuts
}

/// Doubling search along `ridge` from `from_point`; returns the best point
/// that improves on `from` without changing phase.
#[allow(clippy::too_many_arguments)]
fn extrapolate(
    ctx: &Ctx,
    from_point: &[f64],
    ridge: &[f64],
    state: &Inner,
    from: f64,
    channels: &ChannelRealization,
    caps: &[f64],
    budget: &[f64],
) -> Option<(Vec<f64>, Inner, f64)> {
    let mut best: Option<(Vec<f64>, Inner, f64)> = None;
    let mut beta = 1.0;
    let mut last = from_point.to_vec();
    for _ in 0..40 {
        let trial: Vec<f64> = from_point.iter().zip(ridge).map(|(x, r)| x + beta * r).collect();
        let trial = transfer::project(&trial, caps, budget);
        if max_abs_diff(&trial, &last) <= 1e-14 * (1.0 + budget.last().copied().unwrap_or(0.0)) {
            break;
        }
        let inner = ctx.inner(&trial, state);
        let gain = inner.progress(channels) - from;
        if inner.st_feasible != state.st_feasible || gain <= best.as_ref().map_or(0.0, |b| b.2) {
            break;
        }
        last = trial.clone();
        best = Some((trial, inner, gain));
        beta *= 2.0;
    }
    best
}

/// Smallest relative gain worth another polishing pass.
const POLISH_GAIN: f64 = 1e-9;

/// Single-transfer searches along the exact slopes, steepest first.
#[allow(clippy::too_many_arguments)]
fn polish(
    ctx: &Ctx,
    point: &[f64],
    state: &Inner,
    from: f64,
    alpha: f64,
    step: f64,
    channels: &ChannelRealization,
    caps: &[f64],
    budget: &[f64],
) -> Option<(Vec<f64>, Inner)> {
    let floor = 1e-9 * (1.0 + budget.last().copied().unwrap_or(0.0));
    for cut in exact_cuts(state, alpha) {
        let mut order: Vec<usize> = (0..point.len()).collect();
        order.sort_by(|&a, &b| cut.slope[b].abs().total_cmp(&cut.slope[a].abs()));
        for i in order {
            let g = cut.slope[i];
            if g == 0.0 {
                continue;
            }
            let mut ridge = vec![0.0; point.len()];
            ridge[i] = g.signum() * (step * g.abs()).max(floor);
            match extrapolate(ctx, point, &ridge, state, from, channels, caps, budget) {
                Some((next, inner, gain)) if gain > POLISH_GAIN * from.abs().max(1.0) => return Some((next, inner)),
                _ => {}
            }
        }
    }
    None
}

/// Most cuts carried between iterations.
const BUNDLE_SIZE: usize = 12;

fn trim(mut cuts: Vec<Cut>) -> Vec<Cut> {
    if cuts.len() > BUNDLE_SIZE {
        cuts.sort_by(|a, b| a.error.total_cmp(&b.error));
        cuts.truncate(BUNDLE_SIZE);
    }
    cuts
}

fn objective_of(ch: &ChannelRealization, p_d: &[f64], p_sp: &[f64]) -> f64 {
    (0..p_d.len()).map(|i| (ch.h_p[i] * p_d[i] + ch.h_sp[i] * p_sp[i]).ln_1p()).sum()
}

/// Solves in the given mode, optionally reporting every outer iteration.
pub fn solve_with(
    cfg: &ScenarioConfig,
    channels: &ChannelRealization,
    harvests: &HarvestRealization,
    mode: Mode,
    mut trace: Option<&mut dyn FnMut(&TraceRow)>,
) -> Result<SolveReport> {
    cfg.validate()?;
    let n = cfg.n_slots;
    channels.validate(n)?;
    harvests.validate(n)?;
    let settings = &cfg.solver;
    let baseline = solve_no_coop(&channels.h_p, &harvests.e_p)?;
    let cap = settings.level_cap.unwrap_or_else(|| auto_level_cap(channels, harvests));
    let ctx = Ctx {
        cfg,
        ch: channels,
        hv: harvests,
        cap,
    };

    let finish = |policy: PowerPolicy, duals: DualState, status: Status, iterations: usize| -> Result<SolveReport> {
        let rates = RateSummary::evaluate(channels, &policy, baseline.r_p_bar)?;
        let residuals = constraint_residuals(cfg, channels, harvests, &policy, baseline.r_p_bar)?;
        let objective = rates.r_pc_slots.iter().sum::<f64>();
        let converged = status == Status::Converged && residuals.is_feasible(settings.feas_tol);
        let cooperation_successful = converged
            && objective >= n as f64 * baseline.r_p_bar - settings.feas_tol
            && residuals.sec_rate <= settings.feas_tol;
        let effective_rate = if cooperation_successful { rates.r_pc_avg } else { baseline.r_p_bar };
        Ok(SolveReport {
            mode,
            status: if status == Status::Converged && !converged { Status::IterationLimit } else { status },
            policy,
            duals,
            rates,
            residuals,
            objective,
            converged,
            iterations,
            cooperation_successful,
            effective_rate,
            level_cap: cap,
            baseline: baseline.clone(),
        })
    };

    let Some(caps) = transfer_caps(&harvests.e_s, cfg.b_max, cfg.alpha) else {
        // Some harvest alone overflows the battery: nothing is admissible.
        let policy = PowerPolicy {
            p_d: baseline.p_d_prime.clone(),
            ..PowerPolicy::zeros(n)
        };
        return finish(policy, DualState::initial(n), Status::Infeasible, 0);
    };
    let caps = match mode {
        Mode::Joint => caps,
        Mode::InfoOnly => vec![0.0; n],
    };
    let pt_budget = layers::prefix_sums(harvests.e_p.iter().copied());

    let mut delta_r = vec![0.0; n];
    let mut state = ctx.inner(
        &delta_r,
        &Inner {
            p_d: vec![0.0; n],
            p_sp: vec![0.0; n],
            p_ss: vec![0.0; n],
            duals: DualState::initial(n),
            st_feasible: true,
            max_secondary: 0.0,
            removal: None,
        },
    );
    let window = settings.plateau_window;
    let mut history: Vec<f64> = Vec::new();
    let mut best: Option<(f64, PowerPolicy, DualState)> = None;
    let target = n as f64 * cfg.rs_bar;
    let mut step = settings.step0;
    let mut bundle: Vec<Cut> = Vec::new();
    let mut anchor: Option<Vec<f64>> = None;

    for t in 1..=settings.max_outer_iters {
        let policy = PowerPolicy {
            p_d: state.p_d.clone(),
            delta_r: delta_r.clone(),
            p_sp: state.p_sp.clone(),
            p_ss: state.p_ss.clone(),
        };
        let residuals = constraint_residuals(cfg, channels, harvests, &policy, baseline.r_p_bar)?;
        let max_residual = residuals.max_violation();
        let feasible = state.st_feasible && max_residual <= settings.feas_tol;
        let objective = objective_of(channels, &state.p_d, &state.p_sp);
        if feasible && best.as_ref().is_none_or(|b| objective > b.0) {
            best = Some((objective, policy.clone(), state.duals.clone()));
        }
        if settings.step_rule == StepRule::Diminishing {
            step = settings.step0 / (t as f64).sqrt();
        }
        if let Some(f) = trace.as_deref_mut() {
            f(&TraceRow {
                iteration: t,
                objective,
                best_feasible: best.as_ref().map_or(f64::NAN, |b| b.0),
                max_residual,
                step,
            });
        }

        if mode == Mode::InfoOnly {
            // No outer variable: the first inner fixed point is final.
            let status = if feasible { Status::Converged } else { Status::Infeasible };
            return finish(policy, state.duals, status, t);
        }

        // Progress measure: the objective while the secondary target is
        // reachable, the best attainable secondary rate while it is not.
        let progress = state.progress(channels);
        history.push(progress);
        let flat = history.len() > window && {
            let recent = &history[history.len() - window - 1..];
            let (lo, hi) = recent.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
            (hi - lo) <= settings.primal_tol * progress.abs().max(1.0)
        };
        if flat && feasible && settings.step_rule == StepRule::Adaptive {
            // Slopes that are tiny next to the curvature elsewhere stall
            // the joint steps; settle them one transfer at a time.
            if let Some((point, inner)) = polish(&ctx, &delta_r, &state, progress, cfg.alpha, step, channels, &caps, &pt_budget) {
                delta_r = point;
                state = inner;
                bundle.clear();
                anchor = None;
                continue;
            }
        }
        if flat && feasible {
            let (_, policy, duals) = best.expect("feasible iterate recorded");
            return finish(policy, duals, Status::Converged, t);
        }
        if flat && !state.st_feasible && state.max_secondary < target - settings.feas_tol {
            return finish(policy, state.duals, Status::Infeasible, t);
        }

        // Layer 3. While the target is out of reach the multipliers are
        // those of the secondary-rate maximizer, so the same step climbs
        // towards feasibility instead.
        let (candidate, next, accept) = match settings.step_rule {
            StepRule::Diminishing => {
                let mu = if state.st_feasible { state.duals.mu.clone() } else { vec![0.0; n] };
                let stepped = layer3_update(&delta_r, &mu, &state.duals.gamma, &state.duals.gamma_prime, cfg.alpha, step);
                let candidate = transfer::project(&stepped, &caps, &pt_budget);
                let next = ctx.inner(&candidate, &state);
                (candidate, next, true)
            }
            StepRule::Adaptive => {
                let own = exact_cuts(&state, cfg.alpha);
                let own_count = own.len();
                let cuts: Vec<Cut> = own.into_iter().chain(std::mem::take(&mut bundle)).collect();
                let normals = bundle::active_normals(&delta_r, &caps, &pt_budget);
                let (dir, weights) = bundle::direction(&cuts, &normals, step);
                let stepped: Vec<f64> = delta_r.iter().zip(&dir).map(|(x, d)| x + step * d).collect();
                let candidate = transfer::project(&stepped, &caps, &pt_budget);
                let next = ctx.inner(&candidate, &state);
                let moved: Vec<f64> = (0..n).map(|i| candidate[i] - delta_r[i]).collect();
                let predicted = dot(&dir, &moved);
                let gain = next.progress(channels) - progress;
                let accept = match (state.st_feasible, next.st_feasible) {
                    (false, true) => true,
                    (true, false) => false,
                    _ => gain >= ARMIJO * predicted,
                };
                let used = |skip: usize| {
                    cuts.iter()
                        .zip(&weights)
                        .skip(skip)
                        .filter(|(_, w)| **w > 0.0)
                        .map(|(c, _)| c.clone())
                        .collect::<Vec<_>>()
                };
                bundle = if state.st_feasible && !next.st_feasible {
                    // The candidate left the region where the target is
                    // reachable: its secondary-rate slope is a cut that
                    // steers along the boundary.
                    let slope = transfer_ascent(&next, cfg.alpha);
                    let error = (next.max_secondary - target - dot(&slope, &moved)).max(0.0);
                    let mut kept = used(own_count);
                    kept.push(Cut { slope, error, constraint: true });
                    trim(kept)
                } else if next.st_feasible != state.st_feasible {
                    // The progress measure changes with the phase.
                    anchor = None;
                    Vec::new()
                } else if accept {
                    let mut kept = used(0);
                    for c in &mut kept {
                        c.shift(&moved, gain);
                    }
                    trim(kept)
                } else {
                    // Near a kink the current multipliers misprice the move;
                    // those of the rejected candidate price the far side.
                    let mut kept = used(own_count);
                    for mut c in exact_cuts(&next, cfg.alpha) {
                        c.error = (gain - dot(&c.slope, &moved)).max(0.0);
                        kept.push(c);
                    }
                    trim(kept)
                };
                (candidate, next, accept)
            }
        };
        if accept {
            let before = std::mem::replace(&mut delta_r, candidate);
            let same_phase = state.st_feasible == next.st_feasible;
            state = next;
            if settings.step_rule == StepRule::Adaptive {
                step = (2.0 * step).min(MAX_STEP_GROWTH * settings.step0);
                // Ascent steps zigzag across curved valleys; the displacement
                // over two of them points along the valley.
                if let (true, Some(anchor)) = (same_phase, anchor.take()) {
                    let from = state.progress(channels);
                    let ridge: Vec<f64> = delta_r.iter().zip(&anchor).map(|(a, b)| a - b).collect();
                    if let Some((point, inner, gain)) = extrapolate(&ctx, &delta_r, &ridge, &state, from, channels, &caps, &pt_budget) {
                        let moved: Vec<f64> = point.iter().zip(&delta_r).map(|(a, b)| a - b).collect();
                        for c in &mut bundle {
                            c.shift(&moved, gain);
                        }
                        delta_r = point;
                        state = inner;
                    }
                }
                anchor = Some(before);
            }
        } else {
            step *= 0.5;
        }
    }

    match best {
        Some((_, policy, duals)) => finish(policy, duals, Status::IterationLimit, settings.max_outer_iters),
        None => {
            let policy = PowerPolicy {
                p_d: state.p_d,
                delta_r,
                p_sp: state.p_sp,
                p_ss: state.p_ss,
            };
            finish(policy, state.duals, Status::IterationLimit, settings.max_outer_iters)
        }
    }
}
