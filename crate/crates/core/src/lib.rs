//! Fair multi-agent planning and learning in tabular episodic MDPs.
//!
//! Several agents share one environment but each has its own reward. A
//! policy is judged by a welfare measure of the agents' values: Nash
//! (product), min, generalized Gini, or utilitarian (sum). This crate
//! provides
//!
//! * the MDP primitives and occupancy-measure conversions ([`mdp`]),
//! * the welfare measures ([`welfare`]),
//! * fair planners on a known model ([`planning`]),
//! * an optimism-based learner for unknown transitions ([`ucrl`]),
//! * a primal-dual learner for min welfare ([`lagrange`]),
//! * instance constructors and a random instance sampler ([`instances`]),
//! * executable checks of welfare axioms ([`axioms`]).

pub mod axioms;
pub mod confidence;
pub mod error;
pub mod game;
pub mod instances;
pub mod io;
pub mod lagrange;
pub mod mdp;
pub mod oracle;
pub mod planning;
pub mod rng;
pub mod ucrl;
pub mod welfare;

pub use error::{FairError, Result};
pub use mdp::{
    evaluate_values, mix, occupancy_to_policy, policy_to_occupancy, simulate_episode, Occupancy, Policy,
    RewardSet, Shape, Step, TabularMdp, Trajectory,
};
pub use oracle::{plan_scalarized, KnownModel, LinearOracle, StepReward, Vertex};
pub use planning::{
    plan_fair, plan_gini, plan_minwelfare, plan_nash, plan_utilitarian, NashStep, PlanOptions, PlanResult,
    SaddleMethod,
};
pub use io::{instance_to_json, load_instance, parse_instance, save_instance};
pub use welfare::{ggw_supergradient, welfare_of_values, WelfareSpec};
