//! Batch runs over seeds.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use fairmdp_core::lagrange::{run_lagrange_maximin, LagrangeOptions};
use fairmdp_core::planning::plan_fair;
use fairmdp_core::ucrl::{run_ucrl_f, UcrlOptions};
use fairmdp_core::{KnownModel, PlanOptions, RewardSet, TabularMdp, WelfareSpec};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Algorithm, ExperimentConfig};
use crate::output::{write_lagrange_csv, write_ucrl_csv};
use crate::slope::{fit_regret_slope, SlopeFit};
use crate::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanSummary {
    pub values: Vec<f64>,
    pub welfare: f64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Checkpoint {
    pub t: usize,
    pub mean_regret: f64,
    pub std_regret: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_weak_regret: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_weak_regret: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub csv: PathBuf,
    pub final_regret: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_weak_regret: Option<f64>,
    pub slope: Option<SlopeFit>,
    /// Episodes whose planner stopped at its iteration cap.
    pub unconverged_episodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub algorithm: Algorithm,
    pub measure: WelfareSpec,
    pub episodes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanSummary>,
    pub checkpoints: Vec<Checkpoint>,
    /// Fit on the across-seed mean of cumulative regret.
    pub slope: Option<SlopeFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weak_slope: Option<SlopeFit>,
    pub seeds: Vec<SeedSummary>,
    pub failures: Vec<SeedFailure>,
    /// Set when at least one seed failed.
    pub partial: bool,
    pub notes: Vec<String>,
}

impl RunSummary {
    /// True if some planner stopped at its iteration cap.
    pub fn has_unconverged(&self) -> bool {
        self.plan.as_ref().is_some_and(|p| !p.converged) || self.seeds.iter().any(|s| s.unconverged_episodes > 0)
    }
}

struct SeedRun {
    summary: SeedSummary,
    regret: Vec<f64>,
    weak: Option<Vec<f64>>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

fn curve_slope(curve: &[f64]) -> Option<SlopeFit> {
    let rows: Vec<(f64, f64)> = curve.iter().enumerate().map(|(i, r)| ((i + 1) as f64, *r)).collect();
    fit_regret_slope(&rows)
}

fn mean_curve(curves: &[&Vec<f64>]) -> Vec<f64> {
    let len = curves[0].len();
    (0..len).map(|t| curves.iter().map(|c| c[t]).sum::<f64>() / curves.len() as f64).collect()
}

/// Checkpoint episodes `T/10`, `T/2` and `T`, deduplicated for small `T`.
pub fn checkpoints(episodes: usize) -> Vec<usize> {
    let mut ts = vec![(episodes / 10).max(1), (episodes / 2).max(1), episodes];
    ts.dedup();
    ts
}

fn plan_options(cfg: &ExperimentConfig) -> PlanOptions {
    PlanOptions { tol: cfg.tol, ..PlanOptions::default() }
}

fn run_seed(cfg: &ExperimentConfig, mdp: &TabularMdp, rewards: &RewardSet, seed: u64) -> CliResult<SeedRun> {
    let csv = cfg.output_dir.join(format!("seed_{seed}.csv"));
    let out = BufWriter::new(File::create(&csv)?);
    match cfg.algorithm {
        Algorithm::Ucrl => {
            let opts = UcrlOptions { delta: cfg.delta, plan: plan_options(cfg), comparator_tol: None };
            let log = run_ucrl_f(mdp, rewards, &cfg.measure, cfg.episodes, seed, &opts)?;
            write_ucrl_csv(out, &log)?;
            let regret: Vec<f64> = log.records.iter().map(|r| r.regret_cum).collect();
            let summary = SeedSummary {
                seed,
                csv,
                final_regret: log.final_regret(),
                final_weak_regret: None,
                slope: curve_slope(&regret),
                unconverged_episodes: log.records.iter().filter(|r| !r.planner_converged).count(),
            };
            Ok(SeedRun { summary, regret, weak: None })
        }
        Algorithm::Lagrange => {
            let opts = LagrangeOptions {
                delta: cfg.delta,
                v_star: cfg.v_star,
                bound: cfg.bound,
                policy_lr: None,
                comparator_tol: cfg.tol.map(|t| t / 10.0),
            };
            let log = run_lagrange_maximin(mdp, rewards, cfg.episodes, seed, &opts, None)?;
            write_lagrange_csv(out, &log)?;
            let regret: Vec<f64> = log.records.iter().map(|r| r.regret_cum).collect();
            let weak: Vec<f64> = log.records.iter().map(|r| r.weak_regret_cum).collect();
            let summary = SeedSummary {
                seed,
                csv,
                final_regret: *regret.last().expect("at least one episode"),
                final_weak_regret: weak.last().copied(),
                slope: curve_slope(&weak),
                unconverged_episodes: 0,
            };
            Ok(SeedRun { summary, regret, weak: Some(weak) })
        }
        Algorithm::Plan => unreachable!("planning runs once, not per seed"),
    }
}

fn run_notes(algorithm: Algorithm, mdp: &TabularMdp, n: usize) -> Vec<String> {
    match algorithm {
        Algorithm::Plan => Vec::new(),
        Algorithm::Ucrl => vec!["executed policy is the stochastic policy induced by the optimistic occupancy".into()],
        Algorithm::Lagrange => {
            let (s, a) = (mdp.num_states() as f64, mdp.num_actions() as f64);
            let limit = if a > 1.0 { s * s * a / a.ln() } else { f64::INFINITY };
            let holds = (n as f64) <= limit;
            vec![format!("agent-count condition n <= S^2 A / ln A: n = {n}, limit = {limit:.2}, holds = {holds}")]
        }
    }
}

/// Runs the configured experiment, writing `seed_<k>.csv` per seed and
/// `summary.json` into the output directory. A failed seed is recorded in
/// the summary, which is then marked partial.
pub fn run_experiment(cfg: &ExperimentConfig) -> CliResult<RunSummary> {
    cfg.validate()?;
    let (mdp, rewards) = cfg.load_instance()?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    let measure = if cfg.algorithm == Algorithm::Lagrange { WelfareSpec::Min } else { cfg.measure.clone() };
    measure.check_agents(rewards.num_agents())?;

    let mut summary = RunSummary {
        algorithm: cfg.algorithm,
        measure,
        episodes: cfg.episodes,
        plan: None,
        checkpoints: Vec::new(),
        slope: None,
        weak_slope: None,
        seeds: Vec::new(),
        failures: Vec::new(),
        partial: false,
        notes: run_notes(cfg.algorithm, &mdp, rewards.num_agents()),
    };

    if cfg.algorithm == Algorithm::Plan {
        let res = plan_fair(&KnownModel(&mdp), &rewards, &cfg.measure, &plan_options(cfg))?;
        summary.plan = Some(PlanSummary {
            values: res.values,
            welfare: res.welfare,
            iterations: res.iterations,
            residual: res.residual,
            converged: res.converged,
        });
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers.unwrap_or(0))
            .build()
            .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
        let results: Vec<(u64, CliResult<SeedRun>)> =
            pool.install(|| cfg.seeds.par_iter().map(|&s| (s, run_seed(cfg, &mdp, &rewards, s))).collect());
        let mut runs = Vec::new();
        for (seed, res) in results {
            match res {
                Ok(run) => runs.push(run),
                Err(e) => summary.failures.push(SeedFailure { seed, error: e.to_string() }),
            }
        }
        summary.partial = !summary.failures.is_empty();
        if !runs.is_empty() {
            let regrets: Vec<&Vec<f64>> = runs.iter().map(|r| &r.regret).collect();
            let weaks: Option<Vec<&Vec<f64>>> = runs.iter().map(|r| r.weak.as_ref()).collect();
            for t in checkpoints(cfg.episodes) {
                let (mean_regret, std_regret) = mean_std(&regrets.iter().map(|c| c[t - 1]).collect::<Vec<_>>());
                let weak = weaks.as_ref().map(|w| mean_std(&w.iter().map(|c| c[t - 1]).collect::<Vec<_>>()));
                summary.checkpoints.push(Checkpoint {
                    t,
                    mean_regret,
                    std_regret,
                    mean_weak_regret: weak.map(|w| w.0),
                    std_weak_regret: weak.map(|w| w.1),
                });
            }
            summary.slope = curve_slope(&mean_curve(&regrets));
            summary.weak_slope = weaks.as_ref().and_then(|w| curve_slope(&mean_curve(w)));
        }
        summary.seeds = runs.into_iter().map(|r| r.summary).collect();
    }

    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    std::fs::write(cfg.output_dir.join("summary.json"), text)?;
    Ok(summary)
}
