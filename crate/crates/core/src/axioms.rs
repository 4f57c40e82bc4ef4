//! Executable checks of welfare axioms on concrete instances.
//!
//! * Pareto optimality: if one policy's values dominate another's, the
//!   welfare must be strictly larger.
//! * Anonymity: permuting the agents leaves the welfare unchanged.
//! * Independence with neutrality: if each agent's value ratio between two
//!   policies is the same under two reward vectors, the welfare must order
//!   the policies the same way under both.
//! * Continuity: a policy whose occupancy mixes the best and worst of three
//!   policies attains the middle policy's welfare.
//!
//! A check returns [`Verdict::Inconclusive`] when the axiom's premise does
//! not hold on the given inputs.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{invalid, Result};
use crate::instances::{
    make_ggw_third_weight_flip, make_ggw_w2_third_counterexample, make_iian_counterexample, make_po_counterexample,
    sample_random_instance, IianInstance,
};
use crate::mdp::{evaluate_values, mix, occupancy_to_policy, policy_to_occupancy, Policy, RewardSet, TabularMdp};
use crate::planning::{plan_minwelfare, plan_nash, plan_utilitarian, PlanOptions};
use crate::rng::stream;
use crate::welfare::{welfare_of_values, WelfareSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Satisfied,
    Violated,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxiomCheck {
    pub verdict: Verdict,
    pub detail: String,
}

impl AxiomCheck {
    fn new(verdict: Verdict, detail: impl Into<String>) -> Self {
        Self { verdict, detail: detail.into() }
    }
}

const DOMINANCE_MARGIN: f64 = 1e-9;
const RATIO_TOL: f64 = 1e-9;
const CON_GRID: usize = 10_000;

fn tie_tol(a: f64, b: f64) -> f64 {
    1e-12 * a.abs().max(b.abs()).max(1.0)
}

fn welfare(spec: &WelfareSpec, mdp: &TabularMdp, rewards: &RewardSet, pi: &Policy) -> Result<f64> {
    welfare_of_values(spec, &evaluate_values(mdp, rewards, pi)?)
}

fn dominates(v: &[f64], u: &[f64]) -> bool {
    v.iter().zip(u).all(|(a, b)| *a >= b - 1e-12) && v.iter().zip(u).any(|(a, b)| *a > b + DOMINANCE_MARGIN)
}

/// Pareto optimality for one pair of policies, in whichever direction
/// dominance holds.
pub fn check_pareto(
    spec: &WelfareSpec,
    mdp: &TabularMdp,
    rewards: &RewardSet,
    pi: &Policy,
    pi_tilde: &Policy,
) -> Result<AxiomCheck> {
    let v = evaluate_values(mdp, rewards, pi)?;
    let u = evaluate_values(mdp, rewards, pi_tilde)?;
    let (hi, lo) = if dominates(&v, &u) {
        (v, u)
    } else if dominates(&u, &v) {
        (u, v)
    } else {
        return Ok(AxiomCheck::new(Verdict::Inconclusive, "neither value vector dominates the other"));
    };
    let (w_hi, w_lo) = (welfare_of_values(spec, &hi)?, welfare_of_values(spec, &lo)?);
    if w_hi > w_lo + tie_tol(w_hi, w_lo) {
        Ok(AxiomCheck::new(Verdict::Satisfied, format!("{hi:?} dominates {lo:?}; welfare {w_hi} > {w_lo}")))
    } else {
        Ok(AxiomCheck::new(Verdict::Violated, format!("{hi:?} dominates {lo:?} but welfare {w_hi} <= {w_lo}")))
    }
}

/// Anonymity under the agent permutation `perm`.
pub fn check_anonymity(
    spec: &WelfareSpec,
    mdp: &TabularMdp,
    rewards: &RewardSet,
    pi: &Policy,
    perm: &[usize],
) -> Result<AxiomCheck> {
    let permuted = rewards.permuted(perm)?;
    let a = welfare(spec, mdp, rewards, pi)?;
    let b = welfare(spec, mdp, &permuted, pi)?;
    if (a - b).abs() <= tie_tol(a, b) {
        Ok(AxiomCheck::new(Verdict::Satisfied, format!("welfare {a} under permutation {perm:?}")))
    } else {
        Ok(AxiomCheck::new(Verdict::Violated, format!("welfare {a} becomes {b} under permutation {perm:?}")))
    }
}

/// Independence with neutrality for the same two policies under `r` and
/// `r~`.
pub fn check_iian(
    spec: &WelfareSpec,
    mdp: &TabularMdp,
    rewards: &RewardSet,
    rewards_tilde: &RewardSet,
    pi_1: &Policy,
    pi_2: &Policy,
) -> Result<AxiomCheck> {
    if rewards.num_agents() != rewards_tilde.num_agents() {
        return Err(invalid("reward vectors have different numbers of agents"));
    }
    let v1 = evaluate_values(mdp, rewards, pi_1)?;
    let v2 = evaluate_values(mdp, rewards, pi_2)?;
    let u1 = evaluate_values(mdp, rewards_tilde, pi_1)?;
    let u2 = evaluate_values(mdp, rewards_tilde, pi_2)?;
    for i in 0..v1.len() {
        if v2[i] <= 0.0 || u2[i] <= 0.0 {
            return Ok(AxiomCheck::new(Verdict::Inconclusive, format!("agent {i} has zero value under pi_2")));
        }
        let (x, y) = (v1[i] / v2[i], u1[i] / u2[i]);
        if (x - y).abs() > RATIO_TOL * x.abs().max(1.0) {
            return Ok(AxiomCheck::new(Verdict::Inconclusive, format!("agent {i} value ratios differ: {x} vs {y}")));
        }
    }
    let (a1, a2) = (welfare_of_values(spec, &v1)?, welfare_of_values(spec, &v2)?);
    let (b1, b2) = (welfare_of_values(spec, &u1)?, welfare_of_values(spec, &u2)?);
    let prefers_1 = a1 >= a2 - tie_tol(a1, a2);
    let prefers_1_tilde = b1 >= b2 - tie_tol(b1, b2);
    let detail = format!("W(pi_1; r) = {a1}, W(pi_2; r) = {a2}, W(pi_1; r~) = {b1}, W(pi_2; r~) = {b2}");
    Ok(AxiomCheck::new(if prefers_1 == prefers_1_tilde { Verdict::Satisfied } else { Verdict::Violated }, detail))
}

/// Continuity witness: returns `(alpha, residual)` where the policy of
/// `alpha q_1 + (1 - alpha) q_3` has welfare `W(pi_2) + residual`, found by
/// a scan over a `1e-4` grid followed by bisection. `None` if the policies
/// are not ordered `W(pi_1) >= W(pi_2) >= W(pi_3)`.
pub fn continuity_witness(
    spec: &WelfareSpec,
    mdp: &TabularMdp,
    rewards: &RewardSet,
    pi_1: &Policy,
    pi_2: &Policy,
    pi_3: &Policy,
) -> Result<Option<(f64, f64)>> {
    let w1 = welfare(spec, mdp, rewards, pi_1)?;
    let w2 = welfare(spec, mdp, rewards, pi_2)?;
    let w3 = welfare(spec, mdp, rewards, pi_3)?;
    if w1 < w2 - tie_tol(w1, w2) || w2 < w3 - tie_tol(w2, w3) {
        return Ok(None);
    }
    let q1 = policy_to_occupancy(mdp, pi_1)?;
    let q3 = policy_to_occupancy(mdp, pi_3)?;
    let gap = |alpha: f64| -> Result<f64> {
        let pi = occupancy_to_policy(&mix(&q1, &q3, alpha)?);
        Ok(welfare(spec, mdp, rewards, &pi)? - w2)
    };
    let g0 = gap(0.0)?;
    if g0 >= 0.0 {
        return Ok(Some((0.0, g0)));
    }
    let mut prev = 0.0;
    for k in 1..=CON_GRID {
        let alpha = k as f64 / CON_GRID as f64;
        let g = gap(alpha)?;
        if g >= 0.0 {
            let (mut lo, mut hi) = (prev, alpha);
            let mut best = (alpha, g);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let gm = gap(mid)?;
                if gm.abs() < best.1.abs() {
                    best = (mid, gm);
                }
                if gm >= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(Some(best));
        }
        prev = alpha;
    }
    // Unreachable when W(pi_1) >= W(pi_2) up to rounding at alpha = 1.
    let g1 = gap(1.0)?;
    Ok(Some((1.0, g1)))
}

pub fn check_continuity(
    spec: &WelfareSpec,
    mdp: &TabularMdp,
    rewards: &RewardSet,
    pi_1: &Policy,
    pi_2: &Policy,
    pi_3: &Policy,
) -> Result<AxiomCheck> {
    let Some((alpha, residual)) = continuity_witness(spec, mdp, rewards, pi_1, pi_2, pi_3)? else {
        return Ok(AxiomCheck::new(Verdict::Inconclusive, "policies are not ordered by welfare"));
    };
    let w1 = welfare(spec, mdp, rewards, pi_1)?;
    let detail = format!("alpha = {alpha}, residual = {residual:e}");
    let ok = residual.abs() <= 1e-6 * w1.abs().max(1.0);
    Ok(AxiomCheck::new(if ok { Verdict::Satisfied } else { Verdict::Violated }, detail))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub verdict: Verdict,
    /// `V_i(pi_NW) / V_i(pi_MW)` for each agent.
    pub ratios: Vec<f64>,
    pub min_ratio: f64,
}

/// Checks that the Nash-optimal policy gives every agent at least `1/n` of
/// what the min-optimal policy gives it, up to the planners' tolerance.
pub fn check_nw_maxmin_bound(mdp: &TabularMdp, rewards: &RewardSet, tol: f64) -> Result<BoundReport> {
    let n = rewards.num_agents();
    let opts = PlanOptions { tol: Some(tol), max_iters: 200_000, ..Default::default() };
    let nw = plan_nash(mdp, rewards, &opts)?;
    let mw = plan_minwelfare(mdp, rewards, &opts)?;
    let ratios: Vec<f64> = nw.values.iter().zip(&mw.values).map(|(a, b)| a / b).collect();
    let min_ratio = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    if mw.welfare <= 10.0 * tol {
        return Ok(BoundReport { verdict: Verdict::Inconclusive, ratios, min_ratio });
    }
    let ok = ratios
        .iter()
        .zip(&mw.values)
        .all(|(r, v)| *r >= 1.0 / n as f64 - 10.0 * tol / v);
    Ok(BoundReport { verdict: if ok { Verdict::Satisfied } else { Verdict::Violated }, ratios, min_ratio })
}

/// Outcome counts of one axiom across a battery of checks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AxiomTally {
    pub satisfied: usize,
    pub violated: usize,
    pub inconclusive: usize,
    pub first_violation: Option<String>,
}

impl AxiomTally {
    fn record(&mut self, check: AxiomCheck) {
        match check.verdict {
            Verdict::Satisfied => self.satisfied += 1,
            Verdict::Inconclusive => self.inconclusive += 1,
            Verdict::Violated => {
                self.violated += 1;
                self.first_violation.get_or_insert(check.detail);
            }
        }
    }

    /// `'Y'` if no check found a violation.
    pub fn mark(&self) -> char {
        if self.violated == 0 {
            'Y'
        } else {
            'N'
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxiomTable {
    pub measure: String,
    pub po: AxiomTally,
    pub anon: AxiomTally,
    pub iian: AxiomTally,
    pub con: AxiomTally,
}

impl AxiomTable {
    pub fn new(measure: impl Into<String>) -> Self {
        Self {
            measure: measure.into(),
            po: AxiomTally::default(),
            anon: AxiomTally::default(),
            iian: AxiomTally::default(),
            con: AxiomTally::default(),
        }
    }

    /// The four marks in the order PO, ANON, IIAN, CON.
    pub fn marks(&self) -> [char; 4] {
        [self.po.mark(), self.anon.mark(), self.iian.mark(), self.con.mark()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryConfig {
    pub random_instances: usize,
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub num_agents: usize,
    pub seed: u64,
    /// Horizon of the named counterexamples.
    pub named_horizon: usize,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self { random_instances: 100, num_states: 3, num_actions: 2, horizon: 3, num_agents: 3, seed: 0, named_horizon: 4 }
    }
}

fn random_policy<R: Rng>(rng: &mut R, ns: usize, na: usize, horizon: usize) -> Policy {
    let mut probs = Vec::with_capacity(ns * na * horizon);
    for _ in 0..ns * horizon {
        let raw: Vec<f64> = (0..na).map(|_| -rng.gen::<f64>().max(f64::MIN_POSITIVE).ln()).collect();
        let t: f64 = raw.iter().sum();
        probs.extend(raw.iter().map(|x| x / t));
    }
    Policy::new(ns, na, horizon, probs).expect("rows are normalized")
}

/// Checks the two-agent counterexamples of the given horizon with `spec`.
pub fn check_named_instances(spec: &WelfareSpec, horizon: usize, table: &mut AxiomTable) -> Result<()> {
    let pair = make_po_counterexample(horizon)?;
    table.po.record(check_pareto(spec, &pair.mdp, &pair.rewards, &pair.pi_2, &pair.pi_1)?);
    table.anon.record(check_anonymity(spec, &pair.mdp, &pair.rewards, &pair.pi_1, &[1, 0])?);
    let named: [IianInstance; 3] = [
        make_iian_counterexample(horizon)?,
        make_ggw_w2_third_counterexample(horizon)?,
        make_ggw_third_weight_flip(horizon)?,
    ];
    for inst in &named {
        table.iian.record(check_iian(spec, &inst.mdp, &inst.rewards, &inst.rewards_tilde, &inst.pi_1, &inst.pi_2)?);
        table.anon.record(check_anonymity(spec, &inst.mdp, &inst.rewards, &inst.pi_2, &[1, 0])?);
    }
    Ok(())
}

/// Checks every axiom on one instance with seeded random policies:
/// Pareto against the utilitarian optimum, anonymity under a random
/// permutation, independence under random per-agent reward scalings, and
/// continuity on three policies sorted by welfare.
pub fn check_instance(
    spec: &WelfareSpec,
    mdp: &TabularMdp,
    rewards: &RewardSet,
    seed: u64,
    table: &mut AxiomTable,
) -> Result<()> {
    let (ns, na, hz, n) = (mdp.num_states(), mdp.num_actions(), mdp.horizon(), rewards.num_agents());
    let mut rng = stream(seed, 1);
    let policies: Vec<Policy> = (0..6).map(|_| random_policy(&mut rng, ns, na, hz)).collect();

    let util = plan_utilitarian(mdp, rewards)?.policy;
    for pi in &policies {
        table.po.record(check_pareto(spec, mdp, rewards, &util, pi)?);
    }
    table.po.record(check_pareto(spec, mdp, rewards, &policies[0], &policies[1])?);

    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    table.anon.record(check_anonymity(spec, mdp, rewards, &policies[2], &perm)?);

    let scales: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
    let tilde_values: Vec<f64> =
        (0..n).flat_map(|i| rewards.agent(i).iter().map(|r| r * scales[i]).collect::<Vec<_>>()).collect();
    let tilde = RewardSet::with_upper_bound(n, ns, na, tilde_values, 2.0 * rewards.upper_bound())?;
    table.iian.record(check_iian(spec, mdp, rewards, &tilde, &policies[3], &policies[4])?);

    let mut trio: Vec<(f64, &Policy)> =
        policies[..3].iter().map(|pi| Ok((welfare(spec, mdp, rewards, pi)?, pi))).collect::<Result<_>>()?;
    trio.sort_by(|a, b| b.0.total_cmp(&a.0));
    table.con.record(check_continuity(spec, mdp, rewards, trio[0].1, trio[1].1, trio[2].1)?);
    Ok(())
}

/// Runs every axiom check on the named counterexamples and on random
/// instances. `spec_for` picks the welfare measure for a given number of
/// agents, which lets Gini weights follow the instance size.
pub fn axiom_battery(spec_for: &dyn Fn(usize) -> Result<WelfareSpec>, cfg: &BatteryConfig) -> Result<AxiomTable> {
    let spec2 = spec_for(2)?;
    let mut table = AxiomTable::new(spec2.name());
    check_named_instances(&spec2, cfg.named_horizon, &mut table)?;
    let spec = spec_for(cfg.num_agents)?;
    for k in 0..cfg.random_instances {
        let seed = cfg.seed.wrapping_add(k as u64);
        let inst = sample_random_instance(cfg.num_states, cfg.num_actions, cfg.horizon, cfg.num_agents, 1.0, seed)?;
        check_instance(&spec, &inst.mdp, &inst.rewards, seed, &mut table)?;
    }
    Ok(table)
}
