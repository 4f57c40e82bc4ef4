//! Fair planning over a set of occupancy measures accessed only through a
//! [`LinearOracle`].
//!
//! * Nash welfare maximizes `sum_i ln V_i(q)` with Frank-Wolfe. The default
//!   step is pairwise: weight moves from the worst active vertex to the
//!   Frank-Wolfe vertex with an exact line search, which converges linearly
//!   on this objective. The classic `2/(k+2)` schedule is kept as an option.
//! * Min and Gini welfare are saddle problems `max_q min_c <c, V(q)>`,
//!   where `c` ranges over the simplex or the permutations of `w`. The
//!   default solver alternates between an exact restricted master game over
//!   the vertices found so far and an oracle call at the master's dual
//!   weights (column generation). No-regret dynamics (Hedge for min, Follow
//!   the Perturbed Leader for Gini) with best-responding occupancies are
//!   available as the alternative.
//!
//! Every run reports a residual: the Frank-Wolfe gap for Nash and the gap
//! between a weak-duality upper bound and the welfare of the returned
//! occupancy for min and Gini.

use rand::Rng;

use crate::error::{FairError, Result};
use crate::game::solve_matrix_game;
use crate::mdp::{occupancy_to_policy, Occupancy, Policy, RewardSet, Shape};
use crate::oracle::{KnownModel, LinearOracle, StepReward, Vertex};
use crate::rng::seeded;
use crate::welfare::{ggw_supergradient, welfare_of_values, WelfareSpec};
use crate::TabularMdp;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NashStep {
    Pairwise,
    /// `gamma_k = 2 / (k + 2)`.
    Classic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaddleMethod {
    ColumnGeneration,
    NoRegret,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanOptions {
    /// Stopping tolerance on the residual; `None` means `1e-4 * n * H`.
    pub tol: Option<f64>,
    pub max_iters: usize,
    /// Seeds the perturbations of Follow the Perturbed Leader.
    pub seed: u64,
    pub nash_step: NashStep,
    pub saddle: SaddleMethod,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self {
            tol: None,
            max_iters: 5000,
            seed: 0,
            nash_step: NashStep::Pairwise,
            saddle: SaddleMethod::ColumnGeneration,
        }
    }
}

impl PlanOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol: Some(tol), ..Self::default() }
    }

    fn tol_for(&self, n: usize, horizon: usize) -> f64 {
        self.tol.unwrap_or(1e-4 * n as f64 * horizon as f64)
    }
}

#[derive(Debug, Clone)]
pub struct PlanResult {
    pub policy: Policy,
    pub occupancy: Occupancy,
    /// `V_i(q)` for each agent, computed from the returned occupancy.
    pub values: Vec<f64>,
    pub welfare: f64,
    pub iterations: usize,
    pub residual: f64,
    /// Weak-duality upper bound on the optimal welfare (min and Gini only).
    pub upper_bound: Option<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone)]
struct Atom {
    occupancy: Vec<f64>,
    values: Vec<f64>,
}

impl Atom {
    fn from_vertex(v: Vertex, rewards: &RewardSet) -> Self {
        let values = v.occupancy.agent_values(rewards);
        Self { occupancy: v.occupancy.values().to_vec(), values }
    }
}

fn find_or_push(atoms: &mut Vec<Atom>, atom: Atom) -> (usize, bool) {
    if let Some(k) = atoms.iter().position(|a| a.occupancy == atom.occupancy) {
        (k, false)
    } else {
        atoms.push(atom);
        (atoms.len() - 1, true)
    }
}

fn combine(atoms: &[Atom], weights: &[f64], shape: Shape) -> (Occupancy, Vec<f64>) {
    let n = atoms[0].values.len();
    let mut q = vec![0.0; shape.len()];
    let mut v = vec![0.0; n];
    for (atom, &w) in atoms.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        q.iter_mut().zip(&atom.occupancy).for_each(|(a, b)| *a += w * b);
        v.iter_mut().zip(&atom.values).for_each(|(a, b)| *a += w * b);
    }
    (Occupancy::from_raw(shape, q), v)
}

fn weighted_values(atoms: &[Atom], weights: &[f64]) -> Vec<f64> {
    let n = atoms[0].values.len();
    let mut v = vec![0.0; n];
    for (atom, &w) in atoms.iter().zip(weights) {
        v.iter_mut().zip(&atom.values).for_each(|(a, b)| *a += w * b);
    }
    v
}

fn finish(
    spec: &WelfareSpec,
    occupancy: Occupancy,
    iterations: usize,
    residual: f64,
    upper_bound: Option<f64>,
    converged: bool,
    rewards: &RewardSet,
) -> Result<PlanResult> {
    // Values are recomputed from the mixed occupancy so that they agree
    // exactly with what any caller would compute from it.
    let values = occupancy.agent_values(rewards);
    let welfare = welfare_of_values(spec, &values)?;
    Ok(PlanResult {
        policy: occupancy_to_policy(&occupancy),
        occupancy,
        values,
        welfare,
        iterations,
        residual,
        upper_bound,
        converged,
    })
}

/// Plans for any welfare measure over the set behind `oracle`.
pub fn plan_fair<O: LinearOracle + ?Sized>(
    oracle: &O,
    rewards: &RewardSet,
    spec: &WelfareSpec,
    opts: &PlanOptions,
) -> Result<PlanResult> {
    spec.check_agents(rewards.num_agents())?;
    let shape = oracle.shape();
    if rewards.num_states() != shape.states || rewards.num_actions() != shape.actions {
        return Err(crate::error::invalid("rewards do not match the model's states and actions"));
    }
    let tol = opts.tol_for(rewards.num_agents(), shape.horizon);
    match spec {
        WelfareSpec::Nash => nash(oracle, rewards, tol, opts),
        WelfareSpec::Min | WelfareSpec::Gini { .. } => match opts.saddle {
            SaddleMethod::ColumnGeneration => column_generation(oracle, rewards, spec, tol, opts),
            SaddleMethod::NoRegret => no_regret(oracle, rewards, spec, tol, opts),
        },
        WelfareSpec::Utilitarian => {
            let ones = vec![1.0; rewards.num_agents()];
            let v = oracle.best_response(&StepReward::combination(shape, rewards, &ones));
            finish(spec, v.occupancy, 1, 0.0, None, true, rewards)
        }
    }
}

pub fn plan_nash(mdp: &TabularMdp, rewards: &RewardSet, opts: &PlanOptions) -> Result<PlanResult> {
    rewards.check_matches(mdp)?;
    plan_fair(&KnownModel(mdp), rewards, &WelfareSpec::Nash, opts)
}

pub fn plan_minwelfare(mdp: &TabularMdp, rewards: &RewardSet, opts: &PlanOptions) -> Result<PlanResult> {
    rewards.check_matches(mdp)?;
    plan_fair(&KnownModel(mdp), rewards, &WelfareSpec::Min, opts)
}

pub fn plan_gini(mdp: &TabularMdp, rewards: &RewardSet, weights: &[f64], opts: &PlanOptions) -> Result<PlanResult> {
    rewards.check_matches(mdp)?;
    let spec = WelfareSpec::gini(weights.to_vec())?;
    plan_fair(&KnownModel(mdp), rewards, &spec, opts)
}

pub fn plan_utilitarian(mdp: &TabularMdp, rewards: &RewardSet) -> Result<PlanResult> {
    rewards.check_matches(mdp)?;
    plan_fair(&KnownModel(mdp), rewards, &WelfareSpec::Utilitarian, &PlanOptions::default())
}

fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[i] = 1.0;
    e
}

/// One best response per agent; every agent is positive on at least one.
fn agent_atoms<O: LinearOracle + ?Sized>(oracle: &O, rewards: &RewardSet) -> Vec<Atom> {
    let n = rewards.num_agents();
    let mut atoms = Vec::with_capacity(n);
    for i in 0..n {
        let v = oracle.best_response(&StepReward::combination(oracle.shape(), rewards, &unit(n, i)));
        find_or_push(&mut atoms, Atom::from_vertex(v, rewards));
    }
    atoms
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn nash<O: LinearOracle + ?Sized>(oracle: &O, rewards: &RewardSet, tol: f64, opts: &PlanOptions) -> Result<PlanResult> {
    let shape = oracle.shape();
    let n = rewards.num_agents();
    let floor = 1e-8 * shape.horizon as f64;
    let mut atoms = agent_atoms(oracle, rewards);
    for i in 0..n {
        if atoms.iter().all(|a| a.values[i] <= 0.0) {
            return Err(FairError::Degenerate { agent: i });
        }
    }
    let mut weights = vec![1.0 / atoms.len() as f64; atoms.len()];
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    for k in 0..opts.max_iters {
        let v = weighted_values(&atoms, &weights);
        let grad: Vec<f64> = v.iter().map(|x| 1.0 / x.max(floor)).collect();
        let fw = Atom::from_vertex(oracle.best_response(&StepReward::combination(shape, rewards, &grad)), rewards);
        gap = grad.iter().zip(fw.values.iter().zip(&v)).map(|(g, (f, x))| g * (f - x)).sum();
        iterations = k + 1;
        if gap <= tol {
            break;
        }
        match opts.nash_step {
            NashStep::Classic => {
                let gamma = 2.0 / (k as f64 + 2.0);
                weights.iter_mut().for_each(|w| *w *= 1.0 - gamma);
                let (j, added) = find_or_push(&mut atoms, fw);
                if added {
                    weights.push(gamma);
                } else {
                    weights[j] += gamma;
                }
            }
            NashStep::Pairwise => {
                let away = (0..atoms.len())
                    .filter(|&j| weights[j] > 0.0)
                    .min_by(|&a, &b| dot(&grad, &atoms[a].values).total_cmp(&dot(&grad, &atoms[b].values)))
                    .expect("active set is never empty");
                let dir: Vec<f64> = fw.values.iter().zip(&atoms[away].values).map(|(f, a)| f - a).collect();
                let gamma = log_line_search(&v, &dir, weights[away]);
                if gamma <= 0.0 {
                    break;
                }
                let (j, added) = find_or_push(&mut atoms, fw);
                if added {
                    weights.push(0.0);
                }
                if j == away {
                    break;
                }
                weights[away] -= gamma;
                weights[j] += gamma;
                if weights[away] <= 1e-15 {
                    weights[away] = 0.0;
                }
                prune(&mut atoms, &mut weights);
            }
        }
    }
    let (q, _) = combine(&atoms, &weights, shape);
    finish(&WelfareSpec::Nash, q, iterations, gap, None, gap <= tol, rewards)
}

fn prune(atoms: &mut Vec<Atom>, weights: &mut Vec<f64>) {
    if weights.iter().all(|&w| w > 0.0) {
        return;
    }
    let mut k = 0;
    atoms.retain(|_| {
        k += 1;
        weights[k - 1] > 0.0
    });
    weights.retain(|&w| w > 0.0);
    let t: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= t);
}

/// Maximizes `sum_i ln(v_i + gamma d_i)` over `gamma in [0, gamma_max]`.
fn log_line_search(v: &[f64], d: &[f64], gamma_max: f64) -> f64 {
    let slope = |g: f64| -> f64 {
        v.iter()
            .zip(d)
            .map(|(x, dx)| {
                let at = x + g * dx;
                if at > 0.0 {
                    dx / at
                } else if *dx < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    f64::INFINITY
                }
            })
            .sum()
    };
    if slope(0.0) <= 0.0 {
        return 0.0;
    }
    if slope(gamma_max) >= 0.0 {
        return gamma_max;
    }
    let (mut lo, mut hi) = (0.0, gamma_max);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 * gamma_max {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn column_generation<O: LinearOracle + ?Sized>(
    oracle: &O,
    rewards: &RewardSet,
    spec: &WelfareSpec,
    tol: f64,
    opts: &PlanOptions,
) -> Result<PlanResult> {
    let shape = oracle.shape();
    let n = rewards.num_agents();
    let mut atoms = agent_atoms(oracle, rewards);
    let mut pieces: Vec<Vec<f64>> = match spec {
        WelfareSpec::Gini { weights } => {
            let uniform = vec![1.0 / atoms.len() as f64; atoms.len()];
            vec![ggw_supergradient(&weighted_values(&atoms, &uniform), weights)?]
        }
        _ => (0..n).map(|i| unit(n, i)).collect(),
    };
    let mut best_ub = f64::INFINITY;
    let mut residual = f64::INFINITY;
    let mut mixture = vec![1.0];
    let mut iterations = 0;
    for k in 0..opts.max_iters {
        iterations = k + 1;
        let payoff: Vec<Vec<f64>> = atoms.iter().map(|a| pieces.iter().map(|c| dot(c, &a.values)).collect()).collect();
        let game = solve_matrix_game(&payoff);
        mixture = game.rows;
        let v = weighted_values(&atoms, &mixture);
        let lb = welfare_of_values(spec, &v)?;

        let mut grew = false;
        if let WelfareSpec::Gini { weights } = spec {
            let c = ggw_supergradient(&v, weights)?;
            if !pieces.contains(&c) && dot(&c, &v) < game.value - 1e-12 {
                pieces.push(c);
                grew = true;
            }
        }

        let mut lambda = vec![0.0; n];
        for (c, y) in pieces.iter().zip(&game.cols) {
            lambda.iter_mut().zip(c).for_each(|(l, ci)| *l += y * ci);
        }
        let br = Atom::from_vertex(oracle.best_response(&StepReward::combination(shape, rewards, &lambda)), rewards);
        best_ub = best_ub.min(dot(&lambda, &br.values));
        residual = (best_ub - lb).max(0.0);
        if residual <= tol {
            break;
        }
        let (_, added) = find_or_push(&mut atoms, br);
        if !added && !grew {
            break;
        }
    }
    if mixture.len() < atoms.len() {
        mixture.resize(atoms.len(), 0.0);
    }
    let (q, _) = combine(&atoms, &mixture, shape);
    finish(spec, q, iterations, residual, Some(best_ub), residual <= tol, rewards)
}

fn no_regret<O: LinearOracle + ?Sized>(
    oracle: &O,
    rewards: &RewardSet,
    spec: &WelfareSpec,
    tol: f64,
    opts: &PlanOptions,
) -> Result<PlanResult> {
    let shape = oracle.shape();
    let n = rewards.num_agents();
    let scale = shape.horizon as f64 * rewards.upper_bound();
    let budget = opts.max_iters.max(1);
    let eta = (8.0 * (n as f64).ln() / budget as f64).sqrt();
    let mut rng = seeded(opts.seed);
    let mut cum_values = vec![0.0; n];
    let mut sum_q = vec![0.0; shape.len()];
    let mut best_ub = f64::INFINITY;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    for k in 1..=budget {
        iterations = k;
        let lambda = match spec {
            WelfareSpec::Gini { weights } => {
                let noise = scale / (k as f64).sqrt();
                let perturbed: Vec<f64> = cum_values
                    .iter()
                    .map(|c| c / (k as f64 - 1.0).max(1.0) + rng.gen::<f64>() * noise)
                    .collect();
                ggw_supergradient(&perturbed, weights)?
            }
            _ => {
                let lo = cum_values.iter().copied().fold(f64::INFINITY, f64::min);
                let raw: Vec<f64> = cum_values.iter().map(|c| (-eta * (c - lo) / scale).exp()).collect();
                let t: f64 = raw.iter().sum();
                raw.iter().map(|x| x / t).collect()
            }
        };
        let br = oracle.best_response(&StepReward::combination(shape, rewards, &lambda));
        let values = br.occupancy.agent_values(rewards);
        best_ub = best_ub.min(dot(&lambda, &values));
        cum_values.iter_mut().zip(&values).for_each(|(c, v)| *c += v);
        sum_q.iter_mut().zip(br.occupancy.values()).for_each(|(a, b)| *a += b);
        let avg: Vec<f64> = cum_values.iter().map(|c| c / k as f64).collect();
        residual = (best_ub - welfare_of_values(spec, &avg)?).max(0.0);
        if residual <= tol {
            break;
        }
    }
    let q = Occupancy::from_raw(shape, sum_q.iter().map(|x| x / iterations as f64).collect());
    finish(spec, q, iterations, residual, Some(best_ub), residual <= tol, rewards)
}
