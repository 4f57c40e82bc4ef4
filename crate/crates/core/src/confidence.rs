//! Empirical transition estimates, L1 confidence sets and optimistic
//! planning over them.
//!
//! The radius at episode `t` (1-based) is
//! `eps_t(s,a) = sqrt(4 S ln(S A t / delta) / max(1, N_t(s,a)))`, where
//! `N_t(s,a)` counts visits at every step of earlier episodes. Transition
//! counts only use steps `1..H-1` since the last step has no successor, and
//! the empirical kernel is normalized by them.
//!
//! Optimistic planning lets the kernel vary with the step: at each step the
//! inner maximization over the L1 ball is solved exactly, so the oracle
//! maximizes `<q, r>` over every occupancy reachable with step-wise kernels
//! from the set. That set contains `Q(rho, P)` for every stationary `P` in
//! the confidence set, and it is convex.

use crate::error::{invalid, Result};
use crate::mdp::{flow_forward, Occupancy, Policy, Shape, TabularMdp, Trajectory};
use crate::oracle::{LinearOracle, StepReward, Vertex};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceSet {
    num_states: usize,
    num_actions: usize,
    delta: f64,
    episode: u64,
    visits: Vec<u64>,
    transitions: Vec<u64>,
}

impl ConfidenceSet {
    pub fn new(num_states: usize, num_actions: usize, delta: f64) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(invalid("confidence set needs at least one state and action"));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(invalid(format!("confidence level delta = {delta} must lie in (0, 1)")));
        }
        Ok(Self {
            num_states,
            num_actions,
            delta,
            episode: 1,
            visits: vec![0; num_states * num_actions],
            transitions: vec![0; num_states * num_actions * num_states],
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Index of the episode this set is used for (starts at 1).
    pub fn episode(&self) -> u64 {
        self.episode
    }

    pub fn visits(&self, s: usize, a: usize) -> u64 {
        self.visits[s * self.num_actions + a]
    }

    pub fn transition_count(&self, s: usize, a: usize, next: usize) -> u64 {
        self.transitions[(s * self.num_actions + a) * self.num_states + next]
    }

    pub fn radius(&self, s: usize, a: usize) -> f64 {
        let (ns, na) = (self.num_states as f64, self.num_actions as f64);
        let log_term = (ns * na * self.episode as f64 / self.delta).ln();
        (4.0 * ns * log_term / self.visits(s, a).max(1) as f64).sqrt()
    }

    /// Empirical next-state distribution, uniform before any transition was
    /// observed.
    pub fn empirical_row(&self, s: usize, a: usize) -> Vec<f64> {
        let ns = self.num_states;
        let start = (s * self.num_actions + a) * ns;
        let counts = &self.transitions[start..start + ns];
        let total: u64 = counts.iter().sum();
        if total == 0 {
            vec![1.0 / ns as f64; ns]
        } else {
            counts.iter().map(|&c| c as f64 / total as f64).collect()
        }
    }

    pub fn empirical_kernel(&self) -> Vec<f64> {
        (0..self.num_states)
            .flat_map(|s| (0..self.num_actions).map(move |a| (s, a)))
            .flat_map(|(s, a)| self.empirical_row(s, a))
            .collect()
    }

    /// Whether every row of `mdp`'s kernel lies in its L1 ball.
    pub fn contains(&self, mdp: &TabularMdp) -> bool {
        (0..self.num_states).all(|s| {
            (0..self.num_actions).all(|a| {
                let dist: f64 =
                    self.empirical_row(s, a).iter().zip(mdp.transition(s, a)).map(|(x, y)| (x - y).abs()).sum();
                dist <= self.radius(s, a)
            })
        })
    }

    /// Adds one episode's visits and moves on to the next episode.
    pub fn update_counts(&mut self, trajectory: &Trajectory) -> Result<()> {
        let (ns, na) = (self.num_states, self.num_actions);
        if trajectory.steps.iter().any(|st| st.state >= ns || st.action >= na) {
            return Err(invalid("trajectory visits a state or action outside the confidence set"));
        }
        for (k, step) in trajectory.steps.iter().enumerate() {
            self.visits[step.state * na + step.action] += 1;
            if let Some(next) = trajectory.steps.get(k + 1) {
                self.transitions[(step.state * na + step.action) * ns + next.state] += 1;
            }
        }
        self.episode += 1;
        Ok(())
    }
}

/// Maximizes `<p, values>` over `||p - center||_1 <= radius` on the simplex:
/// up to `radius / 2` extra mass goes to the best state and is taken from
/// the worst states first. `order` lists states by value, best first.
pub(crate) fn ball_argmax(center: &[f64], radius: f64, order: &[usize], out: &mut [f64]) {
    out.copy_from_slice(center);
    let best = order[0];
    out[best] = (center[best] + 0.5 * radius).min(1.0);
    let mut excess: f64 = out.iter().sum::<f64>() - 1.0;
    for &worst in order.iter().rev() {
        if excess <= 0.0 {
            break;
        }
        if worst == best {
            continue;
        }
        let take = out[worst].min(excess);
        out[worst] -= take;
        excess -= take;
    }
}

/// States sorted by value, best first; ties keep lower indices first.
pub(crate) fn descending_order(values: &[f64], order: &mut Vec<usize>) {
    order.clear();
    order.extend(0..values.len());
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));
}

/// Result of optimistic planning: a deterministic policy, the step-wise
/// kernel it is paired with, their occupancy and the optimistic value.
#[derive(Debug, Clone)]
pub struct OptimisticVertex {
    pub vertex: Vertex,
    /// `[h][s][a][s']` kernel used between steps `h` and `h + 1`, for
    /// `h = 0..H-1`.
    pub kernels: Vec<f64>,
}

/// Precomputed empirical kernel and radii of a confidence set, usable as a
/// linear oracle.
#[derive(Debug, Clone)]
pub struct OptimisticModel {
    shape: Shape,
    initial: Vec<f64>,
    center: Vec<f64>,
    radii: Vec<f64>,
}

impl OptimisticModel {
    pub fn new(set: &ConfidenceSet, initial: &[f64], horizon: usize) -> Result<Self> {
        if initial.len() != set.num_states || horizon == 0 {
            return Err(invalid("initial distribution or horizon does not fit the confidence set"));
        }
        let radii = (0..set.num_states)
            .flat_map(|s| (0..set.num_actions).map(move |a| (s, a)))
            .map(|(s, a)| set.radius(s, a))
            .collect();
        Ok(Self::from_parts(
            Shape { states: set.num_states, actions: set.num_actions, horizon },
            initial.to_vec(),
            set.empirical_kernel(),
            radii,
        ))
    }

    /// A model with an explicit center kernel and per-(s, a) radii.
    pub fn from_parts(shape: Shape, initial: Vec<f64>, center: Vec<f64>, radii: Vec<f64>) -> Self {
        Self { shape, initial, center, radii }
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn center_row(&self, s: usize, a: usize) -> &[f64] {
        let ns = self.shape.states;
        let start = (s * self.shape.actions + a) * ns;
        &self.center[start..start + ns]
    }

    pub fn radius(&self, s: usize, a: usize) -> f64 {
        self.radii[s * self.shape.actions + a]
    }

    /// Extended backward induction.
    pub fn plan(&self, reward: &StepReward) -> OptimisticVertex {
        let shape = self.shape;
        let (ns, na, hz) = (shape.states, shape.actions, shape.horizon);
        let sas = ns * na * ns;
        let mut kernels = vec![0.0; hz.saturating_sub(1) * sas];
        let mut probs = vec![0.0; shape.len()];
        let mut next = vec![0.0; ns];
        let mut cur = vec![0.0; ns];
        let mut order = Vec::with_capacity(ns);
        for h in (0..hz).rev() {
            if h + 1 < hz {
                descending_order(&next, &mut order);
            }
            for s in 0..ns {
                let mut best = f64::NEG_INFINITY;
                let mut best_a = 0;
                for a in 0..na {
                    let cont = if h + 1 < hz {
                        let row = &mut kernels[h * sas + (s * na + a) * ns..h * sas + (s * na + a + 1) * ns];
                        ball_argmax(self.center_row(s, a), self.radius(s, a), &order, row);
                        row.iter().zip(&next).map(|(p, v)| p * v).sum()
                    } else {
                        0.0
                    };
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
        let objective = self.initial.iter().zip(&next).map(|(p, v)| p * v).sum();
        let q = flow_forward(&self.initial, &probs, shape, |h| &kernels[h * sas..(h + 1) * sas]);
        OptimisticVertex {
            vertex: Vertex {
                policy: Policy::from_raw(shape, probs),
                occupancy: Occupancy::from_raw(shape, q),
                objective,
            },
            kernels,
        }
    }
}

impl LinearOracle for OptimisticModel {
    fn shape(&self) -> Shape {
        self.shape
    }

    fn best_response(&self, reward: &StepReward) -> Vertex {
        self.plan(reward).vertex
    }
}

/// Optimistic scalar planning over a confidence set.
pub fn optimistic_scalarized(
    set: &ConfidenceSet,
    initial: &[f64],
    reward: &StepReward,
) -> Result<OptimisticVertex> {
    let shape = reward.shape();
    if shape.states != set.num_states || shape.actions != set.num_actions {
        return Err(invalid("reward does not match the confidence set"));
    }
    Ok(OptimisticModel::new(set, initial, shape.horizon)?.plan(reward))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{RewardSet, Step};
    use crate::oracle::plan_scalarized;
    use crate::rng::seeded;
    use rand::Rng;

    fn traj(path: &[(usize, usize)]) -> Trajectory {
        Trajectory { steps: path.iter().map(|&(state, action)| Step { state, action, rewards: vec![] }).collect() }
    }

    #[test]
    fn empty_set_is_uniform_with_base_radius() {
        let cs = ConfidenceSet::new(3, 2, 0.1).unwrap();
        assert_eq!(cs.empirical_row(1, 1), vec![1.0 / 3.0; 3]);
        let expected = (4.0 * 3.0 * (3.0 * 2.0 * 1.0 / 0.1f64).ln()).sqrt();
        assert!((cs.radius(0, 0) - expected).abs() < 1e-15);
    }

    #[test]
    fn counts_follow_steps() {
        let mut cs = ConfidenceSet::new(2, 2, 0.1).unwrap();
        cs.update_counts(&traj(&[(0, 1), (1, 0), (1, 0)])).unwrap();
        assert_eq!(cs.visits(0, 1), 1);
        assert_eq!(cs.visits(1, 0), 2);
        assert_eq!(cs.transition_count(0, 1, 1), 1);
        assert_eq!(cs.transition_count(1, 0, 1), 1);
        assert_eq!(cs.empirical_row(1, 0), vec![0.0, 1.0]);
        assert_eq!(cs.episode(), 2);
        for s in 0..2 {
            for a in 0..2 {
                assert!((cs.empirical_row(s, a).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn radii_shrink_with_visits() {
        let mut cs = ConfidenceSet::new(2, 1, 0.1).unwrap();
        let mut prev = cs.radius(0, 0);
        for _ in 0..50 {
            cs.update_counts(&traj(&[(0, 0), (0, 0), (0, 0), (0, 0)])).unwrap();
            let r = cs.radius(0, 0);
            assert!(r < prev);
            prev = r;
        }
    }

    fn random_mdp(rng: &mut impl Rng, ns: usize, na: usize, h: usize, grid: Option<f64>) -> TabularMdp {
        let mut kernel = Vec::new();
        for _ in 0..ns * na {
            let row: Vec<f64> = match grid {
                Some(step) => {
                    let units = (1.0 / step).round() as usize;
                    let cut1 = rng.gen_range(0..=units);
                    let cut2 = rng.gen_range(cut1..=units);
                    vec![cut1 as f64 * step, (cut2 - cut1) as f64 * step, (units - cut2) as f64 * step]
                }
                None => {
                    let raw: Vec<f64> = (0..ns).map(|_| rng.gen::<f64>()).collect();
                    let t: f64 = raw.iter().sum();
                    raw.iter().map(|x| x / t).collect()
                }
            };
            kernel.extend(row);
        }
        TabularMdp::new(ns, na, h, vec![1.0 / ns as f64; ns], kernel).unwrap()
    }

    fn model(mdp: &TabularMdp, radius: f64) -> OptimisticModel {
        let shape = Shape { states: mdp.num_states(), actions: mdp.num_actions(), horizon: mdp.horizon() };
        OptimisticModel::from_parts(
            shape,
            mdp.initial().to_vec(),
            mdp.kernel().to_vec(),
            vec![radius; mdp.num_states() * mdp.num_actions()],
        )
    }

    #[test]
    fn zero_radius_matches_known_model() {
        let mut rng = seeded(1);
        for _ in 0..10 {
            let mdp = random_mdp(&mut rng, 3, 2, 4, None);
            let table: Vec<f64> = (0..6).map(|_| rng.gen()).collect();
            let reward = StepReward::stationary(Shape { states: 3, actions: 2, horizon: 4 }, &table);
            let known = plan_scalarized(&mdp, &reward).unwrap();
            let opt = model(&mdp, 0.0).plan(&reward);
            assert!((known.objective - opt.vertex.objective).abs() < 1e-12);
            assert_eq!(known.policy, opt.vertex.policy);
        }
    }

    #[test]
    fn large_radius_jumps_to_best_state() {
        // Reward only in state 2; with radius >= 2 every transition can land
        // there, so the value is 1 + (H - 1) from any start.
        let mdp = TabularMdp::new(3, 1, 4, vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let reward = StepReward::stationary(Shape { states: 3, actions: 1, horizon: 4 }, &[0.0, 0.0, 1.0]);
        let opt = model(&mdp, 2.0).plan(&reward);
        assert!((opt.vertex.objective - 3.0).abs() < 1e-12);
        assert_eq!(&opt.kernels[0..3], &[0.0, 0.0, 1.0]);
    }

    // Best value of p . v over a 0.005 grid of the simplex within the ball.
    fn grid_ball_max(center: &[f64], radius: f64, v: &[f64]) -> f64 {
        let units = 200;
        let mut best = f64::NEG_INFINITY;
        for i in 0..=units {
            for j in 0..=units - i {
                let p = [i as f64 / 200.0, j as f64 / 200.0, (units - i - j) as f64 / 200.0];
                let dist: f64 = p.iter().zip(center).map(|(a, b)| (a - b).abs()).sum();
                if dist <= radius + 1e-9 {
                    best = best.max(p.iter().zip(v).map(|(a, b)| a * b).sum());
                }
            }
        }
        best
    }

    #[test]
    fn optimistic_plan_matches_discretized_kernels() {
        let mut rng = seeded(2);
        for _ in 0..10 {
            let mdp = random_mdp(&mut rng, 3, 2, 2, Some(0.005));
            let r = RewardSet::new(1, 3, 2, (0..6).map(|_| rng.gen()).collect()).unwrap();
            let reward = StepReward::combination(Shape { states: 3, actions: 2, horizon: 2 }, &r, &[1.0]);
            let opt = model(&mdp, 0.2).plan(&reward);
            let v2: Vec<f64> = (0..3).map(|s| (0..2).map(|a| r.get(0, s, a)).fold(f64::MIN, f64::max)).collect();
            let brute: f64 = (0..3)
                .map(|s| {
                    let best = (0..2)
                        .map(|a| r.get(0, s, a) + grid_ball_max(mdp.transition(s, a), 0.2, &v2))
                        .fold(f64::MIN, f64::max);
                    mdp.initial()[s] * best
                })
                .sum();
            assert!((opt.vertex.objective - brute).abs() < 1e-9, "{} vs {brute}", opt.vertex.objective);
        }
    }

    #[test]
    fn optimistic_occupancy_follows_its_kernels() {
        let mut rng = seeded(4);
        let mdp = random_mdp(&mut rng, 3, 2, 5, None);
        let table: Vec<f64> = (0..6).map(|_| rng.gen()).collect();
        let reward = StepReward::stationary(Shape { states: 3, actions: 2, horizon: 5 }, &table);
        let opt = model(&mdp, 0.3).plan(&reward);
        let realized: f64 = opt.vertex.occupancy.values().iter().zip(reward.values()).map(|(a, b)| a * b).sum();
        assert!((realized - opt.vertex.objective).abs() < 1e-12);
        for row in opt.kernels.chunks_exact(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&p| p >= 0.0));
        }
        for (k, row) in opt.kernels.chunks_exact(3).enumerate() {
            let sa = k % 6;
            let dist: f64 = row.iter().zip(mdp.transition(sa / 2, sa % 2)).map(|(a, b)| (a - b).abs()).sum();
            assert!(dist <= 0.3 + 1e-12);
        }
    }

    #[test]
    fn true_kernel_is_usually_covered() {
        let mut rng = seeded(8);
        let mdp = random_mdp(&mut rng, 3, 2, 4, None);
        let r = RewardSet::new(1, 3, 2, vec![0.0; 6]).unwrap();
        let pi = Policy::uniform(3, 2, 4);
        let mut cs = ConfidenceSet::new(3, 2, 0.1).unwrap();
        for _ in 0..300 {
            assert!(cs.contains(&mdp));
            let t = crate::mdp::simulate_episode(&mdp, &r, &pi, &mut rng).unwrap();
            cs.update_counts(&t).unwrap();
        }
    }
}
