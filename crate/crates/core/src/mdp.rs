//! Tabular episodic MDPs, multi-agent rewards, policies and occupancy
//! measures.
//!
//! Steps are 0-based internally (`h = 0..H`). Dense arrays use row-major
//! layouts: kernels are `[s][a][s']`, rewards `[agent][s][a]`, policies and
//! occupancies `[h][s][a]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::categorical;

/// Tolerance used when validating user-supplied distributions.
pub const INPUT_TOL: f64 = 1e-12;
/// Tolerance used when checking derived quantities such as flow residuals.
pub const DERIVED_TOL: f64 = 1e-9;

/// A finite-horizon MDP with a stationary kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    initial: Vec<f64>,
    kernel: Vec<f64>,
}

fn check_distribution(what: &str, p: &[f64]) -> Result<()> {
    if let Some(x) = p.iter().find(|x| !x.is_finite() || **x < -INPUT_TOL) {
        return Err(invalid(format!("{what} has invalid entry {x}")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > INPUT_TOL * p.len().max(1) as f64 {
        return Err(invalid(format!("{what} sums to {total}, expected 1")));
    }
    Ok(())
}

impl TabularMdp {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        initial: Vec<f64>,
        kernel: Vec<f64>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 || horizon == 0 {
            return Err(invalid("S, A and H must all be at least 1"));
        }
        if initial.len() != num_states {
            return Err(invalid(format!(
                "initial distribution has {} entries, expected {num_states}",
                initial.len()
            )));
        }
        check_distribution("initial distribution", &initial)?;
        if kernel.len() != num_states * num_actions * num_states {
            return Err(invalid(format!(
                "kernel has {} entries, expected {}",
                kernel.len(),
                num_states * num_actions * num_states
            )));
        }
        for s in 0..num_states {
            for a in 0..num_actions {
                let start = (s * num_actions + a) * num_states;
                check_distribution(
                    &format!("P[{s}][{a}]"),
                    &kernel[start..start + num_states],
                )?;
            }
        }
        Ok(Self { num_states, num_actions, horizon, initial, kernel })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// The full `[s][a][s']` kernel.
    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    pub fn transition(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.kernel[start..start + self.num_states]
    }

    /// Same states, actions, horizon and initial distribution with another
    /// kernel.
    pub fn with_kernel(&self, kernel: Vec<f64>) -> Result<Self> {
        Self::new(self.num_states, self.num_actions, self.horizon, self.initial.clone(), kernel)
    }

    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        Self::new(self.num_states, self.num_actions, horizon, self.initial.clone(), self.kernel.clone())
    }

    pub(crate) fn shape(&self) -> Shape {
        Shape { states: self.num_states, actions: self.num_actions, horizon: self.horizon }
    }
}

/// Dimensions shared by policies, occupancies and step rewards.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub states: usize,
    pub actions: usize,
    pub horizon: usize,
}

impl Shape {
    pub fn len(&self) -> usize {
        self.horizon * self.states * self.actions
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, h: usize, s: usize, a: usize) -> usize {
        (h * self.states + s) * self.actions + a
    }
}

/// Per-agent reward functions `r_i(s, a)`, all bounded by `upper_bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardSet {
    num_agents: usize,
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
    upper_bound: f64,
}

impl RewardSet {
    /// Rewards in `[0, 1]`.
    pub fn new(num_agents: usize, num_states: usize, num_actions: usize, values: Vec<f64>) -> Result<Self> {
        Self::with_upper_bound(num_agents, num_states, num_actions, values, 1.0)
    }

    pub fn with_upper_bound(
        num_agents: usize,
        num_states: usize,
        num_actions: usize,
        values: Vec<f64>,
        upper_bound: f64,
    ) -> Result<Self> {
        if num_agents == 0 {
            return Err(invalid("at least one agent is required"));
        }
        if !(upper_bound.is_finite() && upper_bound > 0.0) {
            return Err(invalid(format!("reward upper bound {upper_bound} must be positive")));
        }
        if values.len() != num_agents * num_states * num_actions {
            return Err(invalid(format!(
                "rewards have {} entries, expected {}",
                values.len(),
                num_agents * num_states * num_actions
            )));
        }
        for (k, &r) in values.iter().enumerate() {
            if !r.is_finite() || r < -INPUT_TOL || r > upper_bound + INPUT_TOL {
                let i = k / (num_states * num_actions);
                let s = (k / num_actions) % num_states;
                let a = k % num_actions;
                return Err(invalid(format!(
                    "reward r[{i}][{s}][{a}] = {r} outside [0, {upper_bound}]"
                )));
            }
        }
        Ok(Self { num_agents, num_states, num_actions, values, upper_bound })
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn upper_bound(&self) -> f64 {
        self.upper_bound
    }

    /// The `[s][a]` table of agent `i`.
    pub fn agent(&self, i: usize) -> &[f64] {
        let len = self.num_states * self.num_actions;
        &self.values[i * len..(i + 1) * len]
    }

    pub fn get(&self, i: usize, s: usize, a: usize) -> f64 {
        self.values[(i * self.num_states + s) * self.num_actions + a]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Reorders agents so that new agent `k` is old agent `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.num_agents];
        if perm.len() != self.num_agents || perm.iter().any(|&p| p >= self.num_agents || std::mem::replace(&mut seen[p], true)) {
            return Err(invalid("agent permutation is not a bijection"));
        }
        let values = perm.iter().flat_map(|&p| self.agent(p).iter().copied()).collect();
        Self::with_upper_bound(self.num_agents, self.num_states, self.num_actions, values, self.upper_bound)
    }

    pub(crate) fn check_matches(&self, mdp: &TabularMdp) -> Result<()> {
        if self.num_states != mdp.num_states || self.num_actions != mdp.num_actions {
            return Err(invalid(format!(
                "rewards are {}x{} but the MDP has S={} A={}",
                self.num_states, self.num_actions, mdp.num_states, mdp.num_actions
            )));
        }
        Ok(())
    }
}

/// A non-stationary stochastic policy `pi_h(a | s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(num_states: usize, num_actions: usize, horizon: usize, probs: Vec<f64>) -> Result<Self> {
        let shape = Shape { states: num_states, actions: num_actions, horizon };
        if probs.len() != shape.len() {
            return Err(invalid(format!("policy has {} entries, expected {}", probs.len(), shape.len())));
        }
        for h in 0..horizon {
            for s in 0..num_states {
                let start = shape.index(h, s, 0);
                check_distribution(&format!("pi[{h}][{s}]"), &probs[start..start + num_actions])?;
            }
        }
        Ok(Self { num_states, num_actions, horizon, probs })
    }

    pub fn uniform(num_states: usize, num_actions: usize, horizon: usize) -> Self {
        let probs = vec![1.0 / num_actions as f64; num_states * num_actions * horizon];
        Self { num_states, num_actions, horizon, probs }
    }

    /// Deterministic policy from `actions[h][s]` flattened as `h * S + s`.
    pub fn deterministic(num_states: usize, num_actions: usize, horizon: usize, actions: &[usize]) -> Result<Self> {
        if actions.len() != num_states * horizon || actions.iter().any(|&a| a >= num_actions) {
            return Err(invalid("deterministic policy table has the wrong size or an invalid action"));
        }
        let mut probs = vec![0.0; num_states * num_actions * horizon];
        for (hs, &a) in actions.iter().enumerate() {
            probs[hs * num_actions + a] = 1.0;
        }
        Ok(Self { num_states, num_actions, horizon, probs })
    }

    /// The same action distribution at every state and step.
    pub fn stationary_single(num_states: usize, horizon: usize, dist: &[f64]) -> Result<Self> {
        let probs = (0..num_states * horizon).flat_map(|_| dist.iter().copied()).collect();
        Self::new(num_states, dist.len(), horizon, probs)
    }

    pub(crate) fn from_raw(shape: Shape, probs: Vec<f64>) -> Self {
        debug_assert_eq!(probs.len(), shape.len());
        Self { num_states: shape.states, num_actions: shape.actions, horizon: shape.horizon, probs }
    }

    pub fn prob(&self, h: usize, s: usize, a: usize) -> f64 {
        self.probs[(h * self.num_states + s) * self.num_actions + a]
    }

    pub fn dist(&self, h: usize, s: usize) -> &[f64] {
        let start = (h * self.num_states + s) * self.num_actions;
        &self.probs[start..start + self.num_actions]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub(crate) fn shape(&self) -> Shape {
        Shape { states: self.num_states, actions: self.num_actions, horizon: self.horizon }
    }

    fn check_matches(&self, mdp: &TabularMdp) -> Result<()> {
        if self.shape() != mdp.shape() {
            return Err(invalid(format!(
                "policy shape {:?} does not match the MDP {:?}",
                self.shape(),
                mdp.shape()
            )));
        }
        Ok(())
    }
}

/// State-action occupancy `q_h(s, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Occupancy {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    values: Vec<f64>,
}

impl Occupancy {
    pub fn new(num_states: usize, num_actions: usize, horizon: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_states * num_actions * horizon {
            return Err(invalid("occupancy has the wrong number of entries"));
        }
        if values.iter().any(|q| !q.is_finite() || *q < -INPUT_TOL) {
            return Err(invalid("occupancy entries must be finite and nonnegative"));
        }
        Ok(Self { num_states, num_actions, horizon, values })
    }

    pub(crate) fn from_raw(shape: Shape, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), shape.len());
        Self { num_states: shape.states, num_actions: shape.actions, horizon: shape.horizon, values }
    }

    pub fn get(&self, h: usize, s: usize, a: usize) -> f64 {
        self.values[(h * self.num_states + s) * self.num_actions + a]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn shape(&self) -> Shape {
        Shape { states: self.num_states, actions: self.num_actions, horizon: self.horizon }
    }

    /// `sum_{h,s,a} q_h(s,a) r_i(s,a)` for every agent.
    pub fn agent_values(&self, rewards: &RewardSet) -> Vec<f64> {
        (0..rewards.num_agents()).map(|i| self.inner_stationary(rewards.agent(i))).collect()
    }

    /// Inner product with a stationary `[s][a]` reward table.
    pub fn inner_stationary(&self, reward: &[f64]) -> f64 {
        let sa = self.num_states * self.num_actions;
        self.values.chunks_exact(sa).map(|qh| qh.iter().zip(reward).map(|(q, r)| q * r).sum::<f64>()).sum()
    }

    /// Largest absolute violation of the Bellman flow constraints under
    /// `mdp`.
    pub fn flow_residual(&self, mdp: &TabularMdp) -> f64 {
        let shape = self.shape();
        let (ns, na) = (shape.states, shape.actions);
        let mut worst: f64 = 0.0;
        for s in 0..ns {
            let out: f64 = (0..na).map(|a| self.get(0, s, a)).sum();
            worst = worst.max((out - mdp.initial()[s]).abs());
        }
        for h in 1..shape.horizon {
            let mut inflow = vec![0.0; ns];
            for sp in 0..ns {
                for a in 0..na {
                    let q = self.get(h - 1, sp, a);
                    for (s, p) in mdp.transition(sp, a).iter().enumerate() {
                        inflow[s] += q * p;
                    }
                }
            }
            for s in 0..ns {
                let out: f64 = (0..na).map(|a| self.get(h, s, a)).sum();
                worst = worst.max((out - inflow[s]).abs());
            }
        }
        worst
    }
}

/// One step of a sampled episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub rewards: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<Step>,
}

impl Trajectory {
    /// Undiscounted return of every agent.
    pub fn returns(&self) -> Vec<f64> {
        let n = self.steps.first().map_or(0, |s| s.rewards.len());
        let mut out = vec![0.0; n];
        for step in &self.steps {
            for (o, r) in out.iter_mut().zip(&step.rewards) {
                *o += r;
            }
        }
        out
    }
}

/// Exact values `V^pi(r_i)` for all agents by backward induction.
pub fn evaluate_values(mdp: &TabularMdp, rewards: &RewardSet, policy: &Policy) -> Result<Vec<f64>> {
    rewards.check_matches(mdp)?;
    policy.check_matches(mdp)?;
    let (ns, na) = (mdp.num_states, mdp.num_actions);
    let mut out = Vec::with_capacity(rewards.num_agents());
    let mut next = vec![0.0; ns];
    let mut cur = vec![0.0; ns];
    for i in 0..rewards.num_agents() {
        let r = rewards.agent(i);
        next.iter_mut().for_each(|v| *v = 0.0);
        for h in (0..mdp.horizon).rev() {
            for s in 0..ns {
                let pi = policy.dist(h, s);
                cur[s] = (0..na)
                    .filter(|&a| pi[a] > 0.0)
                    .map(|a| {
                        let cont: f64 = mdp.transition(s, a).iter().zip(&next).map(|(p, v)| p * v).sum();
                        pi[a] * (r[s * na + a] + cont)
                    })
                    .sum();
            }
            std::mem::swap(&mut cur, &mut next);
        }
        out.push(mdp.initial.iter().zip(&next).map(|(p, v)| p * v).sum());
    }
    Ok(out)
}

/// Forward flow of `policy` where step `h` transitions with `kernel_at(h)`.
pub(crate) fn flow_forward<'k>(
    initial: &[f64],
    policy_probs: &[f64],
    shape: Shape,
    kernel_at: impl Fn(usize) -> &'k [f64],
) -> Vec<f64> {
    let (ns, na) = (shape.states, shape.actions);
    let mut q = vec![0.0; shape.len()];
    let mut state_mass = initial.to_vec();
    for h in 0..shape.horizon {
        for s in 0..ns {
            for a in 0..na {
                let k = shape.index(h, s, a);
                q[k] = state_mass[s] * policy_probs[k];
            }
        }
        if h + 1 < shape.horizon {
            let kernel = kernel_at(h);
            state_mass.iter_mut().for_each(|m| *m = 0.0);
            for s in 0..ns {
                for a in 0..na {
                    let mass = q[shape.index(h, s, a)];
                    if mass == 0.0 {
                        continue;
                    }
                    let row = &kernel[(s * na + a) * ns..(s * na + a + 1) * ns];
                    for (m, p) in state_mass.iter_mut().zip(row) {
                        *m += mass * p;
                    }
                }
            }
        }
    }
    q
}

/// Occupancy measure induced by `policy` on `mdp`.
pub fn policy_to_occupancy(mdp: &TabularMdp, policy: &Policy) -> Result<Occupancy> {
    policy.check_matches(mdp)?;
    let q = flow_forward(&mdp.initial, &policy.probs, mdp.shape(), |_| &mdp.kernel);
    Ok(Occupancy::from_raw(mdp.shape(), q))
}

/// `pi_h(a|s) = q_h(s,a) / sum_b q_h(s,b)`, uniform where the state carries
/// no mass.
pub fn occupancy_to_policy(occupancy: &Occupancy) -> Policy {
    let shape = occupancy.shape();
    let na = shape.actions;
    let mut probs = vec![0.0; shape.len()];
    for (row_out, row_in) in probs.chunks_exact_mut(na).zip(occupancy.values.chunks_exact(na)) {
        let total: f64 = row_in.iter().map(|q| q.max(0.0)).sum();
        if total > 0.0 {
            for (p, q) in row_out.iter_mut().zip(row_in) {
                *p = q.max(0.0) / total;
            }
        } else {
            row_out.iter_mut().for_each(|p| *p = 1.0 / na as f64);
        }
    }
    Policy::from_raw(shape, probs)
}

/// `alpha * q1 + (1 - alpha) * q2`.
pub fn mix(q1: &Occupancy, q2: &Occupancy, alpha: f64) -> Result<Occupancy> {
    if q1.shape() != q2.shape() {
        return Err(invalid("cannot mix occupancies of different shapes"));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid(format!("mixing weight {alpha} outside [0, 1]")));
    }
    if alpha == 1.0 {
        return Ok(q1.clone());
    }
    if alpha == 0.0 {
        return Ok(q2.clone());
    }
    let values = q1.values.iter().zip(&q2.values).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect();
    Ok(Occupancy::from_raw(q1.shape(), values))
}

/// Samples one episode of length `H`.
pub fn simulate_episode<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    rewards: &RewardSet,
    policy: &Policy,
    rng: &mut R,
) -> Result<Trajectory> {
    rewards.check_matches(mdp)?;
    policy.check_matches(mdp)?;
    Ok(sample_unchecked(mdp, rewards, policy, rng))
}

pub(crate) fn sample_unchecked<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    rewards: &RewardSet,
    policy: &Policy,
    rng: &mut R,
) -> Trajectory {
    let n = rewards.num_agents();
    let mut steps = Vec::with_capacity(mdp.horizon);
    let mut state = categorical(rng, &mdp.initial);
    for h in 0..mdp.horizon {
        let action = categorical(rng, policy.dist(h, state));
        let step_rewards = (0..n).map(|i| rewards.get(i, state, action)).collect();
        steps.push(Step { state, action, rewards: step_rewards });
        if h + 1 < mdp.horizon {
            state = categorical(rng, mdp.transition(state, action));
        }
    }
    Trajectory { steps }
}
