//! JSON instance files.
//!
//! ```json
//! {"S": 2, "A": 2, "H": 3, "n": 2,
//!  "rho": [1.0, 0.0],
//!  "P": [[[0.5, 0.5], [1.0, 0.0]], [[0.0, 1.0], [0.2, 0.8]]],
//!  "rewards": [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 1.0], [0.5, 0.5]]]}
//! ```
//!
//! `P[s][a]` is the next-state distribution and `rewards[i][s][a]` agent
//! `i`'s reward. An optional `reward_upper_bound` (default 1) allows
//! rewards above 1.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{FairError, Result};
use crate::mdp::{RewardSet, TabularMdp};

const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    #[serde(rename = "S")]
    pub num_states: usize,
    #[serde(rename = "A")]
    pub num_actions: usize,
    #[serde(rename = "H")]
    pub horizon: usize,
    pub n: usize,
    pub rho: Vec<f64>,
    #[serde(rename = "P")]
    pub kernel: Vec<Vec<Vec<f64>>>,
    pub rewards: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_upper_bound: Option<f64>,
}

fn bad(path: &str, msg: impl std::fmt::Display) -> FairError {
    FairError::Parse(format!("{path}: {msg}"))
}

fn check_distribution(path: &str, row: &[f64], len: usize) -> Result<()> {
    if row.len() != len {
        return Err(bad(path, format!("expected {len} entries, found {}", row.len())));
    }
    if let Some(j) = row.iter().position(|p| !p.is_finite() || *p < 0.0) {
        return Err(bad(&format!("{path}[{j}]"), format!("probability {} is negative or not finite", row[j])));
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > PROB_TOL {
        return Err(bad(path, format!("probabilities sum to {total}, not 1")));
    }
    Ok(())
}

impl InstanceFile {
    pub fn from_parts(mdp: &TabularMdp, rewards: &RewardSet) -> Self {
        let (ns, na) = (mdp.num_states(), mdp.num_actions());
        let kernel = (0..ns).map(|s| (0..na).map(|a| mdp.transition(s, a).to_vec()).collect()).collect();
        let rewards_nested = (0..rewards.num_agents())
            .map(|i| rewards.agent(i).chunks_exact(na).map(<[f64]>::to_vec).collect())
            .collect();
        let ub = rewards.upper_bound();
        Self {
            num_states: ns,
            num_actions: na,
            horizon: mdp.horizon(),
            n: rewards.num_agents(),
            rho: mdp.initial().to_vec(),
            kernel,
            rewards: rewards_nested,
            reward_upper_bound: (ub != 1.0).then_some(ub),
        }
    }

    /// Validates every field and builds the model. Errors name the offending
    /// field by its JSON path.
    pub fn build(&self) -> Result<(TabularMdp, RewardSet)> {
        let (ns, na, n) = (self.num_states, self.num_actions, self.n);
        for (name, v) in [("S", ns), ("A", na), ("H", self.horizon), ("n", n)] {
            if v == 0 {
                return Err(bad(name, "must be positive"));
            }
        }
        check_distribution("rho", &self.rho, ns)?;
        if self.kernel.len() != ns {
            return Err(bad("P", format!("expected {ns} states, found {}", self.kernel.len())));
        }
        for (s, per_state) in self.kernel.iter().enumerate() {
            if per_state.len() != na {
                return Err(bad(&format!("P[{s}]"), format!("expected {na} actions, found {}", per_state.len())));
            }
            for (a, row) in per_state.iter().enumerate() {
                check_distribution(&format!("P[{s}][{a}]"), row, ns)?;
            }
        }
        let ub = self.reward_upper_bound.unwrap_or(1.0);
        if !ub.is_finite() || ub <= 0.0 {
            return Err(bad("reward_upper_bound", format!("{ub} is not a positive number")));
        }
        if self.rewards.len() != n {
            return Err(bad("rewards", format!("expected {n} agents, found {}", self.rewards.len())));
        }
        for (i, agent) in self.rewards.iter().enumerate() {
            if agent.len() != ns {
                return Err(bad(&format!("rewards[{i}]"), format!("expected {ns} states, found {}", agent.len())));
            }
            for (s, row) in agent.iter().enumerate() {
                if row.len() != na {
                    return Err(bad(&format!("rewards[{i}][{s}]"), format!("expected {na} actions, found {}", row.len())));
                }
                if let Some(a) = row.iter().position(|r| !(0.0..=ub).contains(r)) {
                    return Err(bad(&format!("rewards[{i}][{s}][{a}]"), format!("{} is outside [0, {ub}]", row[a])));
                }
            }
        }
        let kernel: Vec<f64> = self.kernel.iter().flatten().flatten().copied().collect();
        let mdp = TabularMdp::new(ns, na, self.horizon, self.rho.clone(), kernel)?;
        let values: Vec<f64> = self.rewards.iter().flatten().flatten().copied().collect();
        let rewards = RewardSet::with_upper_bound(n, ns, na, values, ub)?;
        Ok((mdp, rewards))
    }
}

/// Parses and validates an instance. Syntax and type errors carry the
/// line and column reported by the JSON parser.
pub fn parse_instance(text: &str) -> Result<(TabularMdp, RewardSet)> {
    let file: InstanceFile = serde_json::from_str(text).map_err(|e| FairError::Parse(e.to_string()))?;
    file.build()
}

pub fn load_instance(path: &Path) -> Result<(TabularMdp, RewardSet)> {
    let text = std::fs::read_to_string(path)?;
    parse_instance(&text).map_err(|e| match e {
        FairError::Parse(msg) => FairError::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Pretty-printed JSON. Output is a pure function of the inputs.
pub fn instance_to_json(mdp: &TabularMdp, rewards: &RewardSet) -> String {
    let mut out = serde_json::to_string_pretty(&InstanceFile::from_parts(mdp, rewards))
        .expect("instance serialization cannot fail");
    out.push('\n');
    out
}

pub fn save_instance(path: &Path, mdp: &TabularMdp, rewards: &RewardSet) -> Result<()> {
    std::fs::write(path, instance_to_json(mdp, rewards))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{make_po_counterexample, sample_random_instance};

    const SMALL: &str = r#"{"S": 2, "A": 2, "H": 3, "n": 2,
        "rho": [1.0, 0.0],
        "P": [[[0.5, 0.5], [1.0, 0.0]], [[0.0, 1.0], [0.2, 0.8]]],
        "rewards": [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 1.0], [0.5, 0.5]]]}"#;

    #[test]
    fn parses_nested_layout() {
        let (mdp, r) = parse_instance(SMALL).unwrap();
        assert_eq!(mdp.transition(1, 1), &[0.2, 0.8]);
        assert_eq!(r.get(1, 1, 0), 0.5);
        assert_eq!(r.get(0, 0, 0), 1.0);
    }

    #[test]
    fn round_trip_is_exact_and_stable() {
        let inst = sample_random_instance(3, 2, 4, 3, 1.0, 5).unwrap();
        let text = instance_to_json(&inst.mdp, &inst.rewards);
        let (mdp, r) = parse_instance(&text).unwrap();
        assert_eq!(mdp.kernel(), inst.mdp.kernel());
        assert_eq!(r.values(), inst.rewards.values());
        assert_eq!(instance_to_json(&mdp, &r), text);

        let po = make_po_counterexample(4).unwrap();
        let text = instance_to_json(&po.mdp, &po.rewards);
        assert!(text.contains("reward_upper_bound"));
        assert_eq!(parse_instance(&text).unwrap().1.upper_bound(), 2.0);
    }

    #[test]
    fn errors_locate_the_problem() {
        let msg = |text: &str| parse_instance(text).unwrap_err().to_string();
        assert!(msg(&SMALL.replace("[0.2, 0.8]", "[0.2, 0.7]")).contains("P[1][1]"));
        assert!(msg(&SMALL.replace("[0.5, 0.5]]]}", "[0.5, 1.5]]]}")).contains("rewards[1][1][1]"));
        assert!(msg(&SMALL.replace("\"H\": 3", "\"H\": 0")).contains("H: must be positive"));
        assert!(msg(&SMALL.replace("[1.0, 0.0],\n", "[1.0],\n")).contains("rho"));
        let syntax = msg(&SMALL.replace("\"n\": 2,", "\"n\": 2"));
        assert!(syntax.contains("line 2"), "{syntax}");
        assert!(msg(&SMALL.replace("\"n\": 2,", "\"n\": 2, \"extra\": 1,")).contains("unknown field"));
    }
}
