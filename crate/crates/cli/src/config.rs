//! Experiment configuration files.
//!
//! ```json
//! {
//!   "instance": {"generate": {"kind": "random", "states": 4, "actions": 2,
//!                             "horizon": 5, "agents": 2, "alpha": 1.0, "seed": 7}},
//!   "algorithm": "ucrl",
//!   "measure": {"measure": "nash"},
//!   "episodes": 20000,
//!   "seeds": [0, 1, 2],
//!   "output_dir": "runs/nash"
//! }
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};

use fairmdp_core::instances::{
    make_ggw_third_weight_flip, make_ggw_w2_third_counterexample, make_iian_counterexample, make_lowerbound_instance,
    make_po_counterexample, make_tightness_instance, sample_random_instance,
};
use fairmdp_core::{load_instance, RewardSet, TabularMdp, WelfareSpec};
use serde::{Deserialize, Serialize};

use crate::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Plan,
    Ucrl,
    Lagrange,
}

/// Which of the two reward vectors of an independence counterexample to
/// emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardVariant {
    #[default]
    Original,
    Tilde,
}

fn default_alpha() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Generator {
    Po {
        horizon: usize,
    },
    Iian {
        horizon: usize,
        #[serde(default)]
        variant: RewardVariant,
    },
    /// The two-agent Gini counterexample for weights `(2/3, 1/3)`;
    /// `corrected` selects the reward pair that actually flips.
    Ggw {
        horizon: usize,
        #[serde(default)]
        variant: RewardVariant,
        #[serde(default)]
        corrected: bool,
    },
    Tightness {
        delta: f64,
        agents: usize,
        horizon: usize,
    },
    Lowerbound {
        states: usize,
        actions: usize,
        horizon: usize,
        agents: usize,
        gap: f64,
    },
    Random {
        states: usize,
        actions: usize,
        horizon: usize,
        agents: usize,
        #[serde(default = "default_alpha")]
        alpha: f64,
        seed: u64,
    },
}

impl Generator {
    pub fn build(&self) -> CliResult<(TabularMdp, RewardSet)> {
        let pick = |inst: fairmdp_core::instances::IianInstance, variant: RewardVariant| match variant {
            RewardVariant::Original => (inst.mdp, inst.rewards),
            RewardVariant::Tilde => (inst.mdp, inst.rewards_tilde),
        };
        Ok(match *self {
            Generator::Po { horizon } => {
                let inst = make_po_counterexample(horizon)?;
                (inst.mdp, inst.rewards)
            }
            Generator::Iian { horizon, variant } => pick(make_iian_counterexample(horizon)?, variant),
            Generator::Ggw { horizon, variant, corrected } => {
                let inst = if corrected {
                    make_ggw_third_weight_flip(horizon)?
                } else {
                    make_ggw_w2_third_counterexample(horizon)?
                };
                pick(inst, variant)
            }
            Generator::Tightness { delta, agents, horizon } => {
                let inst = make_tightness_instance(delta, agents, horizon)?;
                (inst.mdp, inst.rewards)
            }
            Generator::Lowerbound { states, actions, horizon, agents, gap } => {
                let inst = make_lowerbound_instance(states, actions, horizon, agents, gap, None)?;
                (inst.mdp, inst.rewards)
            }
            Generator::Random { states, actions, horizon, agents, alpha, seed } => {
                let inst = sample_random_instance(states, actions, horizon, agents, alpha, seed)?;
                (inst.mdp, inst.rewards)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum InstanceSource {
    File(PathBuf),
    Generate(Generator),
}

fn default_delta() -> f64 {
    0.1
}

fn default_episodes() -> usize {
    1
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: InstanceSource,
    pub algorithm: Algorithm,
    /// Ignored by `lagrange`, which always targets min welfare.
    #[serde(default = "default_measure")]
    pub measure: WelfareSpec,
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Planner tolerance; `None` uses the planner default.
    #[serde(default)]
    pub tol: Option<f64>,
    /// Lagrange multiplier budget `B`.
    #[serde(default)]
    pub bound: Option<f64>,
    /// Lagrange target value `v*`.
    #[serde(default)]
    pub v_star: Option<f64>,
    pub output_dir: PathBuf,
    /// Worker threads; `None` uses all cores.
    #[serde(default)]
    pub workers: Option<usize>,
}

fn default_measure() -> WelfareSpec {
    WelfareSpec::Nash
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads a config file and resolves its relative paths.
    pub fn load(path: &Path) -> CliResult<Self> {
        let mut cfg = Self::from_json(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let InstanceSource::File(p) = &mut cfg.instance {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.episodes == 0 {
            return Err(CliError::Config("episodes must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(CliError::Config("seeds must not be empty".into()));
        }
        if self.workers == Some(0) {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        if let InstanceSource::File(p) = &self.instance {
            if !p.is_file() {
                return Err(CliError::Config(format!("instance file {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn load_instance(&self) -> CliResult<(TabularMdp, RewardSet)> {
        match &self.instance {
            InstanceSource::File(p) => Ok(load_instance(p)?),
            InstanceSource::Generate(g) => g.build(),
        }
    }
}
