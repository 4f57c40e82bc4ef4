//! Named instances (axiom counterexamples, a bound-tightness family, a
//! lower-bound tree) and a seeded random instance sampler.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{invalid, Result};
use crate::mdp::{Policy, RewardSet, TabularMdp};
use crate::rng::stream;

/// An MDP together with its agents' rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub mdp: TabularMdp,
    pub rewards: RewardSet,
}

/// A single-state, two-action instance with two policies to compare.
#[derive(Debug, Clone, PartialEq)]
pub struct PairInstance {
    pub mdp: TabularMdp,
    pub rewards: RewardSet,
    pub pi_1: Policy,
    pub pi_2: Policy,
}

/// Two reward vectors and two policies meant for the independence axiom:
/// each agent's value ratio between the policies is the same under both
/// reward vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct IianInstance {
    pub mdp: TabularMdp,
    pub rewards: RewardSet,
    pub rewards_tilde: RewardSet,
    pub pi_1: Policy,
    pub pi_2: Policy,
}

fn bandit(horizon: usize) -> Result<TabularMdp> {
    TabularMdp::new(1, 2, horizon, vec![1.0], vec![1.0, 1.0])
}

fn two_agent(r1: [f64; 2], r2: [f64; 2]) -> Result<RewardSet> {
    let bound = r1.iter().chain(&r2).copied().fold(1.0, f64::max);
    RewardSet::with_upper_bound(2, 1, 2, vec![r1[0], r1[1], r2[0], r2[1]], bound)
}

/// Agent 1 gets 1 from either action; agent 2 gets 1 from `a` and 2 from
/// `b`. Always-`a` (`pi_1`) and always-`b` (`pi_2`) have the same minimum
/// value `H`, though `pi_2` dominates.
pub fn make_po_counterexample(horizon: usize) -> Result<PairInstance> {
    Ok(PairInstance {
        mdp: bandit(horizon)?,
        rewards: two_agent([1.0, 1.0], [1.0, 2.0])?,
        pi_1: Policy::stationary_single(1, horizon, &[1.0, 0.0])?,
        pi_2: Policy::stationary_single(1, horizon, &[0.0, 1.0])?,
    })
}

fn iian(horizon: usize, r2: [f64; 2], r2_tilde: [f64; 2]) -> Result<IianInstance> {
    Ok(IianInstance {
        mdp: bandit(horizon)?,
        rewards: two_agent([1.0, 0.0], r2)?,
        rewards_tilde: two_agent([1.0, 0.0], r2_tilde)?,
        pi_1: Policy::stationary_single(1, horizon, &[0.5, 0.5])?,
        pi_2: Policy::stationary_single(1, horizon, &[0.75, 0.25])?,
    })
}

/// Values `(H/2, H/2)` against `(3H/4, 3H/8)` under `r` and `(H/2, 2H)`
/// against `(3H/4, 3H/2)` under `r~`. Min welfare prefers `pi_1` under `r`
/// and `pi_2` under `r~`; Gini welfare flips for every `w_2 != 1/3`.
pub fn make_iian_counterexample(horizon: usize) -> Result<IianInstance> {
    iian(horizon, [0.25, 0.75], [1.0, 3.0])
}

/// The alternative rewards proposed for Gini weights `(2/3, 1/3)`:
/// `r_2 = (1/2, 2/3)` and `r~_2 = (1, 4/3)`.
///
/// These do not produce a flip. `r~_2 = 2 r_2`, and on this bandit the Gini
/// welfare under either reward vector increases with the probability of
/// action `a`, so both reward vectors rank `pi_2` above `pi_1`. See
/// [`make_ggw_third_weight_flip`] for a construction that does flip.
pub fn make_ggw_w2_third_counterexample(horizon: usize) -> Result<IianInstance> {
    iian(horizon, [0.5, 2.0 / 3.0], [1.0, 4.0 / 3.0])
}

/// An independence violation for Gini weights `(2/3, 1/3)`: with
/// `r_2 = (1/5, 4/5)` and `r~_2 = 3 r_2` the values are `(H/2, H/2)` against
/// `(3H/4, 7H/20)` under `r` and `(H/2, 3H/2)` against `(3H/4, 21H/20)`
/// under `r~`, so the welfare prefers `pi_1` under `r` and `pi_2` under
/// `r~`.
pub fn make_ggw_third_weight_flip(horizon: usize) -> Result<IianInstance> {
    iian(horizon, [0.2, 0.8], [0.6, 2.4])
}

/// Single state, two actions. Agent 1 earns `delta^n` from `a`, every other
/// agent earns 1 from `a`, and everyone earns `delta` from `b`. Always-`b`
/// is min-optimal while the Nash optimum plays `a` half the time, leaving
/// agent 1 with about half of its min-optimal value.
pub fn make_tightness_instance(delta: f64, n: usize, horizon: usize) -> Result<Instance> {
    if !(delta > 0.0 && delta < 1.0) || n < 2 {
        return Err(invalid("tightness instance needs delta in (0, 1) and at least two agents"));
    }
    let mut values = Vec::with_capacity(2 * n);
    values.extend([delta.powi(n as i32), delta]);
    for _ in 1..n {
        values.extend([1.0, delta]);
    }
    Ok(Instance { mdp: bandit(horizon)?, rewards: RewardSet::new(n, 1, 2, values)? })
}

/// A navigation tree whose leaves lead to a rewarding state `good` or a
/// barren state `bad`; one leaf action (`flagged`) is slightly more likely
/// to reach `good`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundInstance {
    pub mdp: TabularMdp,
    pub rewards: RewardSet,
    /// `(leaf, action)` with the `1/2 + gap` success probability.
    pub flagged: (usize, usize),
    pub leaves: Vec<usize>,
    pub good: usize,
    pub bad: usize,
}

/// Tree states `0..S-2` are numbered breadth first with the root at 0 and
/// children of `k` at `A k + 1 + a`. A node whose child slots are only
/// partly filled sends the missing actions to the last tree node, which
/// extends the last branch into a chain. Leaves move to `good = S-2` with
/// probability `1/2` (`1/2 + gap` for the flagged pair) and to `bad = S-1`
/// otherwise. `good` and `bad` stay put with probability `1 - 1/(2H)` and
/// return to the root otherwise. Every agent earns 1 in `good` and nothing
/// elsewhere. `flagged = None` flags action 0 of the first leaf.
pub fn make_lowerbound_instance(
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    num_agents: usize,
    gap: f64,
    flagged: Option<(usize, usize)>,
) -> Result<LowerBoundInstance> {
    if num_states < 3 || num_actions < 1 || horizon < 1 || num_agents < 1 {
        return Err(invalid("lower-bound tree needs S >= 3 and positive A, H, n"));
    }
    if !(0.0..=0.5).contains(&gap) {
        return Err(invalid(format!("gap {gap} outside [0, 1/2]")));
    }
    let (ns, na) = (num_states, num_actions);
    let tree = ns - 2;
    let (good, bad) = (ns - 2, ns - 1);
    let child = |k: usize, a: usize| -> Option<usize> {
        let first = na * k + 1;
        (first < tree).then(|| (first + a).min(tree - 1))
    };
    let leaves: Vec<usize> = (0..tree).filter(|&k| child(k, 0).is_none()).collect();
    let flagged = flagged.unwrap_or((leaves[0], 0));
    if !leaves.contains(&flagged.0) || flagged.1 >= na {
        return Err(invalid(format!("flagged pair {flagged:?} is not a leaf action")));
    }
    let mut kernel = vec![0.0; ns * na * ns];
    let stay = 1.0 - 1.0 / (2.0 * horizon as f64);
    for s in 0..ns {
        for a in 0..na {
            let row = &mut kernel[(s * na + a) * ns..(s * na + a + 1) * ns];
            if s == good || s == bad {
                row[s] = stay;
                row[0] += 1.0 - stay;
            } else if let Some(c) = child(s, a) {
                row[c] = 1.0;
            } else {
                let p = if (s, a) == flagged { 0.5 + gap } else { 0.5 };
                row[good] = p;
                row[bad] = 1.0 - p;
            }
        }
    }
    let mut initial = vec![0.0; ns];
    initial[0] = 1.0;
    let mdp = TabularMdp::new(ns, na, horizon, initial, kernel)?;
    let mut values = vec![0.0; num_agents * ns * na];
    for i in 0..num_agents {
        for a in 0..na {
            values[(i * ns + good) * na + a] = 1.0;
        }
    }
    let rewards = RewardSet::new(num_agents, ns, na, values)?;
    Ok(LowerBoundInstance { mdp, rewards, flagged, leaves, good, bad })
}

fn dirichlet<R: Rng + ?Sized>(rng: &mut R, len: usize, alpha: f64) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha was validated");
    let raw: Vec<f64> = (0..len).map(|_| gamma.sample(rng)).collect();
    let total: f64 = raw.iter().sum();
    if total > 0.0 && total.is_finite() {
        raw.iter().map(|x| x / total).collect()
    } else {
        let mut point = vec![0.0; len];
        point[rng.gen_range(0..len)] = 1.0;
        point
    }
}

/// Initial distribution and kernel rows drawn from a symmetric
/// Dirichlet(`alpha`), rewards uniform on `[0, 1]`. Each seed yields the
/// same instance on every platform.
pub fn sample_random_instance(
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    num_agents: usize,
    alpha: f64,
    seed: u64,
) -> Result<Instance> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(invalid(format!("Dirichlet concentration {alpha} must be positive")));
    }
    if num_states == 0 || num_actions == 0 || horizon == 0 || num_agents == 0 {
        return Err(invalid("S, A, H and n must all be at least 1"));
    }
    let mut rng = stream(seed, 0);
    let initial = dirichlet(&mut rng, num_states, alpha);
    let kernel = (0..num_states * num_actions).flat_map(|_| dirichlet(&mut rng, num_states, alpha)).collect();
    let mdp = TabularMdp::new(num_states, num_actions, horizon, initial, kernel)?;
    let values = (0..num_agents * num_states * num_actions).map(|_| rng.gen::<f64>()).collect();
    Ok(Instance { mdp, rewards: RewardSet::new(num_agents, num_states, num_actions, values)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::evaluate_values;
    use crate::rng::seeded;
    use crate::welfare::{welfare_of_values, WelfareSpec};

    fn values(mdp: &TabularMdp, r: &RewardSet, pi: &Policy) -> Vec<f64> {
        evaluate_values(mdp, r, pi).unwrap()
    }

    #[test]
    fn po_values() {
        let inst = make_po_counterexample(4).unwrap();
        assert_eq!(values(&inst.mdp, &inst.rewards, &inst.pi_1), vec![4.0, 4.0]);
        assert_eq!(values(&inst.mdp, &inst.rewards, &inst.pi_2), vec![4.0, 8.0]);
    }

    #[test]
    fn iian_values_and_ratios() {
        let h = 4.0;
        let inst = make_iian_counterexample(4).unwrap();
        let v11 = values(&inst.mdp, &inst.rewards, &inst.pi_1);
        let v21 = values(&inst.mdp, &inst.rewards, &inst.pi_2);
        let v12 = values(&inst.mdp, &inst.rewards_tilde, &inst.pi_1);
        let v22 = values(&inst.mdp, &inst.rewards_tilde, &inst.pi_2);
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12);
        assert!(close(&v11, &[h / 2.0, h / 2.0]));
        assert!(close(&v21, &[3.0 * h / 4.0, 3.0 * h / 8.0]));
        assert!(close(&v12, &[h / 2.0, 2.0 * h]));
        assert!(close(&v22, &[3.0 * h / 4.0, 3.0 * h / 2.0]));
        for i in 0..2 {
            assert!((v11[i] / v21[i] - v12[i] / v22[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn gini_flips_for_every_tested_weight_off_one_third() {
        let inst = make_iian_counterexample(4).unwrap();
        for k in 1..=9 {
            let w2 = 0.05 * k as f64;
            let spec = WelfareSpec::gini(vec![1.0 - w2, w2]).unwrap();
            let g = |r: &RewardSet, pi: &Policy| welfare_of_values(&spec, &values(&inst.mdp, r, pi)).unwrap();
            let before = g(&inst.rewards, &inst.pi_1) - g(&inst.rewards, &inst.pi_2);
            let after = g(&inst.rewards_tilde, &inst.pi_1) - g(&inst.rewards_tilde, &inst.pi_2);
            assert!(before * after < 0.0, "w2 = {w2}: {before} {after}");
        }
    }

    #[test]
    fn proposed_one_third_rewards_do_not_flip() {
        let inst = make_ggw_w2_third_counterexample(4).unwrap();
        let spec = WelfareSpec::gini(vec![2.0 / 3.0, 1.0 / 3.0]).unwrap();
        let g = |r: &RewardSet, pi: &Policy| welfare_of_values(&spec, &values(&inst.mdp, r, pi)).unwrap();
        assert!(g(&inst.rewards, &inst.pi_1) < g(&inst.rewards, &inst.pi_2));
        assert!(g(&inst.rewards_tilde, &inst.pi_1) < g(&inst.rewards_tilde, &inst.pi_2));
    }

    #[test]
    fn one_third_flip_construction() {
        let inst = make_ggw_third_weight_flip(4).unwrap();
        let spec = WelfareSpec::gini(vec![2.0 / 3.0, 1.0 / 3.0]).unwrap();
        let g = |r: &RewardSet, pi: &Policy| welfare_of_values(&spec, &values(&inst.mdp, r, pi)).unwrap();
        assert!(g(&inst.rewards, &inst.pi_1) > g(&inst.rewards, &inst.pi_2));
        assert!(g(&inst.rewards_tilde, &inst.pi_1) < g(&inst.rewards_tilde, &inst.pi_2));
    }

    #[test]
    fn tightness_rewards() {
        let inst = make_tightness_instance(0.01, 2, 3).unwrap();
        assert_eq!(inst.rewards.agent(0), &[0.01f64.powi(2), 0.01]);
        assert_eq!(inst.rewards.agent(1), &[1.0, 0.01]);
    }

    #[test]
    fn lower_bound_tree_shape() {
        let inst = make_lowerbound_instance(6, 2, 8, 2, 0.1, None).unwrap();
        assert_eq!(inst.leaves, vec![2, 3]);
        assert_eq!(inst.flagged, (2, 0));
        assert_eq!(inst.mdp.transition(0, 0)[1], 1.0);
        assert_eq!(inst.mdp.transition(0, 1)[2], 1.0);
        assert_eq!(inst.mdp.transition(1, 1)[3], 1.0);
        assert!((inst.mdp.transition(2, 0)[inst.good] - 0.6).abs() < 1e-15);
        assert_eq!(inst.mdp.transition(2, 1)[inst.good], 0.5);
        assert_eq!(inst.rewards.get(1, inst.good, 1), 1.0);
        assert_eq!(inst.rewards.get(0, inst.bad, 0), 0.0);
    }

    #[test]
    fn good_state_stay_length_is_twice_horizon() {
        let h = 8;
        let inst = make_lowerbound_instance(6, 2, h, 1, 0.1, None).unwrap();
        let mut rng = seeded(5);
        let trials = 20_000;
        let mut total = 0usize;
        for _ in 0..trials {
            let mut len = 1;
            while crate::rng::categorical(&mut rng, inst.mdp.transition(inst.good, 0)) == inst.good {
                len += 1;
            }
            total += len;
        }
        let mean = total as f64 / trials as f64;
        assert!((mean / (2.0 * h as f64) - 1.0).abs() < 0.05, "{mean}");
    }

    #[test]
    fn random_instances_are_seeded_and_concentrate() {
        let a = sample_random_instance(3, 2, 3, 2, 1.0, 42).unwrap();
        let b = sample_random_instance(3, 2, 3, 2, 1.0, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_random_instance(3, 2, 3, 2, 1.0, 43).unwrap());
        let flat = sample_random_instance(4, 2, 3, 2, 1e6, 1).unwrap();
        assert!(flat.mdp.kernel().iter().all(|p| (p - 0.25).abs() < 1e-2));
    }
}
