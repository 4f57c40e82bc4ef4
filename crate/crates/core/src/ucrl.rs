//! Optimistic fair learning with unknown transitions.
//!
//! Each episode plans the fair objective over the confidence-set occupancy
//! superset, executes the policy extracted from the optimistic occupancy on
//! the true MDP, and adds the trajectory to the counts. Regret is measured
//! exactly: the executed policy is evaluated on the true model rather than
//! estimated from the sampled return.

use crate::confidence::{ConfidenceSet, OptimisticModel};
use crate::error::{invalid, FairError, Result};
use crate::mdp::{evaluate_values, sample_unchecked, Policy, RewardSet, TabularMdp};
use crate::planning::{plan_fair, PlanOptions, PlanResult};
use crate::rng::stream;
use crate::welfare::{welfare_of_values, WelfareSpec};

/// Fair planning over the confidence set for an MDP with initial
/// distribution `initial` and horizon `horizon`.
pub fn optimistic_plan(
    set: &ConfidenceSet,
    initial: &[f64],
    horizon: usize,
    rewards: &RewardSet,
    spec: &WelfareSpec,
    opts: &PlanOptions,
) -> Result<PlanResult> {
    let model = OptimisticModel::new(set, initial, horizon)?;
    plan_fair(&model, rewards, spec, opts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UcrlOptions {
    /// Confidence level of the transition set.
    pub delta: f64,
    pub plan: PlanOptions,
    /// Tolerance for the comparator plan on the true model; `None` uses a
    /// tenth of the per-episode tolerance.
    pub comparator_tol: Option<f64>,
}

impl Default for UcrlOptions {
    fn default() -> Self {
        Self { delta: 0.1, plan: PlanOptions::default(), comparator_tol: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    /// 1-based episode index.
    pub t: usize,
    pub welfare_opt: f64,
    pub welfare_exec: f64,
    pub welfare_optimistic: f64,
    pub regret_cum: f64,
    /// Exact values of the executed policy.
    pub values: Vec<f64>,
    /// Whether the true kernel was inside the confidence set used this
    /// episode.
    pub covered: bool,
    pub planner_converged: bool,
}

#[derive(Debug, Clone)]
pub struct RegretLog {
    pub num_agents: usize,
    pub records: Vec<EpisodeRecord>,
}

impl RegretLog {
    pub fn final_regret(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.regret_cum)
    }

    /// Regret after episode `t` (1-based).
    pub fn regret_at(&self, t: usize) -> Option<f64> {
        self.records.get(t.checked_sub(1)?).map(|r| r.regret_cum)
    }

    pub fn always_covered(&self) -> bool {
        self.records.iter().all(|r| r.covered)
    }
}

pub(crate) fn comparator_options(opts: &PlanOptions, explicit: Option<f64>, n: usize, horizon: usize) -> PlanOptions {
    let base = opts.tol.unwrap_or(1e-4 * n as f64 * horizon as f64);
    PlanOptions { tol: Some(explicit.unwrap_or(base / 10.0)), max_iters: opts.max_iters.max(20_000), ..*opts }
}

/// Runs the optimistic fair learner for `episodes` episodes.
pub fn run_ucrl_f(
    mdp: &TabularMdp,
    rewards: &RewardSet,
    spec: &WelfareSpec,
    episodes: usize,
    seed: u64,
    opts: &UcrlOptions,
) -> Result<RegretLog> {
    rewards.check_matches(mdp)?;
    spec.check_agents(rewards.num_agents())?;
    if episodes == 0 {
        return Err(invalid("at least one episode is required"));
    }
    let n = rewards.num_agents();
    let horizon = mdp.horizon();
    let comparator = plan_fair(
        &crate::oracle::KnownModel(mdp),
        rewards,
        spec,
        &comparator_options(&opts.plan, opts.comparator_tol, n, horizon),
    )?;
    let welfare_opt = comparator.welfare;

    let mut set = ConfidenceSet::new(mdp.num_states(), mdp.num_actions(), opts.delta)?;
    let mut rng = stream(seed, 0);
    let mut regret = 0.0;
    let mut records = Vec::with_capacity(episodes);
    for t in 1..=episodes {
        let plan = optimistic_plan(&set, mdp.initial(), horizon, rewards, spec, &opts.plan)
            .map_err(|e| FairError::Episode { episode: t, source: Box::new(e) })?;
        let values = evaluate_values(mdp, rewards, &plan.policy)?;
        let welfare_exec = welfare_of_values(spec, &values)?;
        regret += welfare_opt - welfare_exec;
        let covered = set.contains(mdp);
        let trajectory = sample_unchecked(mdp, rewards, &plan.policy, &mut rng);
        set.update_counts(&trajectory)?;
        records.push(EpisodeRecord {
            t,
            welfare_opt,
            welfare_exec,
            welfare_optimistic: plan.welfare,
            regret_cum: regret,
            values,
            covered,
            planner_converged: plan.converged,
        });
    }
    Ok(RegretLog { num_agents: n, records })
}

/// Cumulative regret of running `policy` in every one of `episodes`
/// episodes.
pub fn fixed_policy_regret(
    mdp: &TabularMdp,
    rewards: &RewardSet,
    spec: &WelfareSpec,
    policy: &Policy,
    welfare_opt: f64,
    episodes: usize,
) -> Result<f64> {
    let values = evaluate_values(mdp, rewards, policy)?;
    Ok(episodes as f64 * (welfare_opt - welfare_of_values(spec, &values)?))
}

/// Both sides of the Nash linearization inequality
/// `prod_i v_i - prod_i u_i <= H^(n-1) sum_i |v_i - u_i|` for values in
/// `[0, H]`.
pub fn nsw_linearization_gap(v: &[f64], u: &[f64], horizon: f64) -> Result<(f64, f64)> {
    if v.len() != u.len() || v.is_empty() {
        return Err(invalid("value vectors must be nonempty and of equal length"));
    }
    if v.iter().chain(u).any(|x| !(0.0..=horizon).contains(x)) {
        return Err(invalid("values must lie in [0, H]"));
    }
    let lhs = v.iter().product::<f64>() - u.iter().product::<f64>();
    let l1: f64 = v.iter().zip(u).map(|(a, b)| (a - b).abs()).sum();
    Ok((lhs, horizon.powi(v.len() as i32 - 1) * l1))
}

/// Both sides of the value-difference bound
/// `|V(P~) - V(P)| <= H^2 sqrt(sum_{s,a} ||P~(s,a) - P(s,a)||_1^2)` for a
/// single reward in `[0, 1]` and a shared initial distribution.
pub fn value_difference_bound(
    mdp: &TabularMdp,
    perturbed: &TabularMdp,
    rewards: &RewardSet,
    policy: &Policy,
) -> Result<(f64, f64)> {
    if mdp.num_states() != perturbed.num_states()
        || mdp.num_actions() != perturbed.num_actions()
        || mdp.horizon() != perturbed.horizon()
        || mdp.initial() != perturbed.initial()
    {
        return Err(invalid("the two models must differ only in their kernels"));
    }
    if rewards.num_agents() != 1 || rewards.upper_bound() > 1.0 {
        return Err(invalid("value-difference bound takes a single reward in [0, 1]"));
    }
    let v = evaluate_values(mdp, rewards, policy)?[0];
    let w = evaluate_values(perturbed, rewards, policy)?[0];
    let ns = mdp.num_states();
    let sq: f64 = mdp
        .kernel()
        .chunks_exact(ns)
        .zip(perturbed.kernel().chunks_exact(ns))
        .map(|(p, q)| p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>().powi(2))
        .sum();
    let h = mdp.horizon() as f64;
    Ok(((w - v).abs(), h * h * sq.sqrt()))
}
