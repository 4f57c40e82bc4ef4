//! Primal-dual learning for min welfare.
//!
//! Min welfare at target `v*` is the saddle problem
//! `max_q min_{lambda in C} v* + sum_i lambda_i (V_i(q) - v*)` over
//! `C = {lambda >= 0, sum_i lambda_i <= B}`. Equivalently the learner faces
//! the scalar reward
//! `r~(s,a) = sum_i lambda_i r_i(s,a) + (v*/H)(1 - sum_i lambda_i)`,
//! whose expected return is exactly the Lagrangian.
//!
//! * The multiplier player runs projected online gradient descent on the
//!   realized returns with step `B / (H sqrt(n t))`.
//! * The policy player runs full-information online mirror descent over
//!   the confidence-set occupancy superset. Its Bregman divergence is the
//!   occupancy-weighted KL between policies, which turns each update into a
//!   soft backward induction:
//!   `V_h(s) = ln sum_a pi_h(a|s) exp(eta r~(s,a) + max_{p in ball} p.V_{h+1})`
//!   and `pi'_h(a|s) ~ pi_h(a|s) exp(eta r~(s,a) + max_p p.V_{h+1})`.
//!
//! Weak regret compares the best min welfare with the min over agents of
//! the cumulative values, `t MW* - min_i sum_{u<=t} V^{pi_u}(r_i)`.

use crate::confidence::{ball_argmax, descending_order, ConfidenceSet, OptimisticModel};
use crate::error::{invalid, Result};
use crate::mdp::{evaluate_values, flow_forward, sample_unchecked, Occupancy, Policy, RewardSet, TabularMdp, Trajectory};
use crate::oracle::{KnownModel, LinearOracle};
use crate::planning::{plan_fair, PlanOptions};
use crate::rng::stream;
use crate::ucrl::comparator_options;
use crate::welfare::WelfareSpec;

/// The Lagrangian scalar reward as an `[s][a]` table.
pub fn lagrangian_reward(lambda: &[f64], rewards: &RewardSet, v_star: f64, horizon: usize) -> Result<Vec<f64>> {
    if lambda.len() != rewards.num_agents() {
        return Err(invalid("multiplier vector length differs from the number of agents"));
    }
    let total: f64 = lambda.iter().sum();
    let base = v_star / horizon as f64 * (1.0 - total);
    let sa = rewards.num_states() * rewards.num_actions();
    let mut table = vec![base; sa];
    for (i, &l) in lambda.iter().enumerate() {
        for (t, r) in table.iter_mut().zip(rewards.agent(i)) {
            *t += l * r;
        }
    }
    Ok(table)
}

/// Euclidean projection onto `{lambda >= 0, sum lambda <= bound}`.
pub fn project_lambda(lambda: &[f64], bound: f64) -> Vec<f64> {
    let clamped: Vec<f64> = lambda.iter().map(|l| l.max(0.0)).collect();
    if clamped.iter().sum::<f64>() <= bound {
        return clamped;
    }
    // Projection onto the scaled simplex by sorting.
    let mut sorted = clamped.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cum += u;
        let t = (cum - bound) / (k + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    clamped.iter().map(|l| (l - theta).max(0.0)).collect()
}

/// One mirror-descent step over the occupancy superset of `model`. Returns
/// the new policy and the step-wise kernel pairing it with its occupancy.
pub fn omd_step(model: &OptimisticModel, policy: &Policy, reward: &[f64], lr: f64) -> (Policy, Vec<f64>) {
    let shape = model.shape();
    let (ns, na, hz) = (shape.states, shape.actions, shape.horizon);
    let sas = ns * na * ns;
    let mut kernels = vec![0.0; hz.saturating_sub(1) * sas];
    let mut probs = vec![0.0; shape.len()];
    let mut next = vec![0.0; ns];
    let mut cur = vec![0.0; ns];
    let mut order = Vec::with_capacity(ns);
    let mut logits = vec![0.0; na];
    for h in (0..hz).rev() {
        if h + 1 < hz {
            descending_order(&next, &mut order);
        }
        for s in 0..ns {
            for a in 0..na {
                let cont = if h + 1 < hz {
                    let row = &mut kernels[h * sas + (s * na + a) * ns..h * sas + (s * na + a + 1) * ns];
                    ball_argmax(model.center_row(s, a), model.radius(s, a), &order, row);
                    row.iter().zip(&next).map(|(p, v)| p * v).sum()
                } else {
                    0.0
                };
                logits[a] = lr * reward[s * na + a] + cont;
            }
            let dist = policy.dist(h, s);
            let top = (0..na).filter(|&a| dist[a] > 0.0).map(|a| logits[a]).fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for a in 0..na {
                let w = if dist[a] > 0.0 { dist[a] * (logits[a] - top).exp() } else { 0.0 };
                probs[shape.index(h, s, a)] = w;
                z += w;
            }
            for a in 0..na {
                probs[shape.index(h, s, a)] /= z;
            }
            cur[s] = top + z.ln();
        }
        std::mem::swap(&mut cur, &mut next);
    }
    (Policy::from_raw(shape, probs), kernels)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagrangeOptions {
    pub delta: f64,
    /// Target value `v*`; `None` means `H`.
    pub v_star: Option<f64>,
    /// Multiplier budget `B`; `None` means `H`.
    pub bound: Option<f64>,
    /// Mirror-descent rate; `None` means `sqrt(ln A / T) / B`.
    pub policy_lr: Option<f64>,
    /// Tolerance for the min-welfare comparator on the true model.
    pub comparator_tol: Option<f64>,
}

impl Default for LagrangeOptions {
    fn default() -> Self {
        Self { delta: 0.1, v_star: None, bound: None, policy_lr: None, comparator_tol: None }
    }
}

/// Learner state between episodes.
#[derive(Debug, Clone)]
pub struct LagrangeState {
    pub lambda: Vec<f64>,
    pub bound: f64,
    pub v_star: f64,
    pub horizon: usize,
    pub set: ConfidenceSet,
    pub policy: Policy,
    /// Number of completed multiplier updates.
    pub steps: usize,
}

impl LagrangeState {
    pub fn new(mdp: &TabularMdp, num_agents: usize, v_star: f64, bound: f64, delta: f64) -> Result<Self> {
        if !(bound > 0.0 && bound.is_finite()) || !v_star.is_finite() {
            return Err(invalid("multiplier budget must be positive and v* finite"));
        }
        Ok(Self {
            lambda: vec![0.0; num_agents],
            bound,
            v_star,
            horizon: mdp.horizon(),
            set: ConfidenceSet::new(mdp.num_states(), mdp.num_actions(), delta)?,
            policy: Policy::uniform(mdp.num_states(), mdp.num_actions(), mdp.horizon()),
            steps: 0,
        })
    }
}

/// Projected gradient step on `sum_i lambda_i (return_i - v*)`.
pub fn lambda_player_update(state: &mut LagrangeState, returns: &[f64]) -> Result<()> {
    if returns.len() != state.lambda.len() {
        return Err(invalid("returns have the wrong number of agents"));
    }
    state.steps += 1;
    let n = state.lambda.len() as f64;
    let step = state.bound / (state.horizon as f64 * (n * state.steps as f64).sqrt());
    let moved: Vec<f64> =
        state.lambda.iter().zip(returns).map(|(l, g)| l - step * (g - state.v_star)).collect();
    state.lambda = project_lambda(&moved, state.bound);
    Ok(())
}

/// Adds `trajectory` to the counts and takes one mirror-descent step on
/// the `[s][a]` reward table `reward`. Returns the kernels paired with the
/// new policy.
pub fn oreps_policy_update(
    state: &mut LagrangeState,
    initial: &[f64],
    reward: &[f64],
    trajectory: &Trajectory,
    lr: f64,
) -> Result<Vec<f64>> {
    state.set.update_counts(trajectory)?;
    let model = OptimisticModel::new(&state.set, initial, state.horizon)?;
    let (policy, kernels) = omd_step(&model, &state.policy, reward, lr);
    state.policy = policy;
    Ok(kernels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LagrangeRecord {
    pub t: usize,
    pub welfare_opt: f64,
    pub welfare_exec: f64,
    /// Min welfare of the policy player's own occupancy in the superset.
    pub welfare_optimistic: f64,
    pub regret_cum: f64,
    pub weak_regret_cum: f64,
    pub values: Vec<f64>,
    /// Multipliers used during episode `t`.
    pub lambda: Vec<f64>,
    pub lambda_feasible: bool,
}

#[derive(Debug, Clone)]
pub struct LagrangeLog {
    pub num_agents: usize,
    pub bound: f64,
    pub records: Vec<LagrangeRecord>,
}

impl LagrangeLog {
    pub fn weak_regret_at(&self, t: usize) -> Option<f64> {
        self.records.get(t.checked_sub(1)?).map(|r| r.weak_regret_cum)
    }

    pub fn regret_at(&self, t: usize) -> Option<f64> {
        self.records.get(t.checked_sub(1)?).map(|r| r.regret_cum)
    }
}

/// Runs the primal-dual learner. With `fixed_policy` the policy player is
/// replaced by that policy while everything else runs unchanged.
pub fn run_lagrange_maximin(
    mdp: &TabularMdp,
    rewards: &RewardSet,
    episodes: usize,
    seed: u64,
    opts: &LagrangeOptions,
    fixed_policy: Option<&Policy>,
) -> Result<LagrangeLog> {
    rewards.check_matches(mdp)?;
    if episodes == 0 {
        return Err(invalid("at least one episode is required"));
    }
    let n = rewards.num_agents();
    let horizon = mdp.horizon();
    let h = horizon as f64;
    let v_star = opts.v_star.unwrap_or(h);
    let bound = opts.bound.unwrap_or(h);
    let lr = opts
        .policy_lr
        .unwrap_or_else(|| ((mdp.num_actions() as f64).ln().max(f64::MIN_POSITIVE) / episodes as f64).sqrt() / bound);
    let comparator = plan_fair(
        &KnownModel(mdp),
        rewards,
        &WelfareSpec::Min,
        &comparator_options(&PlanOptions::default(), opts.comparator_tol, n, horizon),
    )?;
    let mw_star = comparator.welfare;

    let mut state = LagrangeState::new(mdp, n, v_star, bound, opts.delta)?;
    let mut rng = stream(seed, 0);
    let mut cum_values = vec![0.0; n];
    let mut regret = 0.0;
    let mut optimistic_welfare = f64::NAN;
    let mut records = Vec::with_capacity(episodes);
    for t in 1..=episodes {
        let policy = fixed_policy.unwrap_or(&state.policy).clone();
        let lambda = state.lambda.clone();
        let lambda_feasible =
            lambda.iter().all(|&l| l >= 0.0) && lambda.iter().sum::<f64>() <= bound * (1.0 + 1e-12);
        let values = evaluate_values(mdp, rewards, &policy)?;
        let mw = values.iter().copied().fold(f64::INFINITY, f64::min);
        regret += mw_star - mw;
        cum_values.iter_mut().zip(&values).for_each(|(c, v)| *c += v);
        let weak = t as f64 * mw_star - cum_values.iter().copied().fold(f64::INFINITY, f64::min);

        let trajectory = sample_unchecked(mdp, rewards, &policy, &mut rng);
        let reward = lagrangian_reward(&lambda, rewards, v_star, horizon)?;
        lambda_player_update(&mut state, &trajectory.returns())?;
        let kernels = oreps_policy_update(&mut state, mdp.initial(), &reward, &trajectory, lr)?;
        records.push(LagrangeRecord {
            t,
            welfare_opt: mw_star,
            welfare_exec: mw,
            welfare_optimistic: optimistic_welfare,
            regret_cum: regret,
            weak_regret_cum: weak,
            values,
            lambda,
            lambda_feasible,
        });

        let shape = state.policy.shape();
        let sas = shape.states * shape.actions * shape.states;
        let q = flow_forward(mdp.initial(), state.policy.probs(), shape, |k| &kernels[k * sas..(k + 1) * sas]);
        optimistic_welfare = Occupancy::from_raw(shape, q)
            .agent_values(rewards)
            .into_iter()
            .fold(f64::INFINITY, f64::min);
    }
    Ok(LagrangeLog { num_agents: n, bound, records })
}
