//! Scalar-reward planning: the linear maximization oracle every fair planner
//! is built on.

use crate::error::{invalid, Result};
use crate::mdp::{flow_forward, Occupancy, Policy, RewardSet, Shape, TabularMdp};

/// A scalar reward indexed by step, state and action (`[h][s][a]`), of any
/// sign.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReward {
    shape: Shape,
    values: Vec<f64>,
}

impl StepReward {
    pub fn new(shape: Shape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(invalid("step reward has the wrong number of entries"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("step reward must be finite"));
        }
        Ok(Self { shape, values })
    }

    /// Repeats an `[s][a]` table at every step.
    pub fn stationary(shape: Shape, table: &[f64]) -> Self {
        debug_assert_eq!(table.len(), shape.states * shape.actions);
        let values = (0..shape.horizon).flat_map(|_| table.iter().copied()).collect();
        Self { shape, values }
    }

    /// `sum_i coeffs[i] * r_i`, repeated at every step.
    pub fn combination(shape: Shape, rewards: &RewardSet, coeffs: &[f64]) -> Self {
        let sa = shape.states * shape.actions;
        let mut table = vec![0.0; sa];
        for (i, &c) in coeffs.iter().enumerate() {
            if c != 0.0 {
                for (t, r) in table.iter_mut().zip(rewards.agent(i)) {
                    *t += c * r;
                }
            }
        }
        Self::stationary(shape, &table)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    #[inline]
    pub fn get(&self, h: usize, s: usize, a: usize) -> f64 {
        self.values[self.shape.index(h, s, a)]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// A deterministic policy returned by an oracle together with its occupancy
/// and objective value.
#[derive(Debug, Clone)]
pub struct Vertex {
    pub policy: Policy,
    pub occupancy: Occupancy,
    pub objective: f64,
}

/// Exact maximization of `<q, r>` over some set of occupancy measures.
pub trait LinearOracle {
    fn shape(&self) -> Shape;
    fn best_response(&self, reward: &StepReward) -> Vertex;
}

/// The occupancy polytope of a known MDP.
#[derive(Debug, Clone, Copy)]
pub struct KnownModel<'a>(pub &'a TabularMdp);

impl LinearOracle for KnownModel<'_> {
    fn shape(&self) -> Shape {
        self.0.shape()
    }

    fn best_response(&self, reward: &StepReward) -> Vertex {
        backward_induction(self.0, reward)
    }
}

/// Optimal deterministic policy for a scalar reward by backward induction.
/// Ties go to the lowest action index.
pub fn plan_scalarized(mdp: &TabularMdp, reward: &StepReward) -> Result<Vertex> {
    if reward.shape != mdp.shape() {
        return Err(invalid(format!(
            "reward shape {:?} does not match the MDP {:?}",
            reward.shape,
            mdp.shape()
        )));
    }
    Ok(backward_induction(mdp, reward))
}

fn backward_induction(mdp: &TabularMdp, reward: &StepReward) -> Vertex {
    let shape = mdp.shape();
    let (ns, na) = (shape.states, shape.actions);
    let mut probs = vec![0.0; shape.len()];
    let mut next = vec![0.0; ns];
    let mut cur = vec![0.0; ns];
    for h in (0..shape.horizon).rev() {
        for s in 0..ns {
            let mut best = f64::NEG_INFINITY;
            let mut best_a = 0;
            for a in 0..na {
                let cont: f64 = mdp.transition(s, a).iter().zip(&next).map(|(p, v)| p * v).sum();
                let q = reward.get(h, s, a) + cont;
                if q > best {
                    best = q;
                    best_a = a;
                }
            }
            cur[s] = best;
            probs[shape.index(h, s, best_a)] = 1.0;
        }
        std::mem::swap(&mut cur, &mut next);
    }
    let objective = mdp.initial().iter().zip(&next).map(|(p, v)| p * v).sum();
    let occupancy = flow_forward(mdp.initial(), &probs, shape, |_| mdp.kernel());
    Vertex {
        policy: Policy::from_raw(shape, probs),
        occupancy: Occupancy::from_raw(shape, occupancy),
        objective,
    }
}
