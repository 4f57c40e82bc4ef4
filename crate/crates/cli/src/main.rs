use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fairmdp_core::axioms::{check_instance, check_named_instances, AxiomTable, BatteryConfig};
use fairmdp_core::instances::sample_random_instance;
use fairmdp_core::lagrange::{run_lagrange_maximin, LagrangeOptions};
use fairmdp_core::ucrl::{run_ucrl_f, UcrlOptions};
use fairmdp_core::{load_instance, plan_fair, save_instance, KnownModel, PlanOptions, WelfareSpec};
use fairmdp_cli::config::{Generator, RewardVariant};
use fairmdp_cli::output::{occupancy_json, write_lagrange_csv, write_ucrl_csv};
use fairmdp_cli::{run_experiment, CliError, CliResult, ExperimentConfig};

#[derive(Parser)]
#[command(name = "fairmdp", version, about = "Fair multi-agent planning and learning in tabular MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Measure {
    Nash,
    Min,
    Gini,
    Util,
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Ucrl,
    Lagrange,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Po,
    Iian,
    Ggw,
    Tightness,
    Lowerbound,
    Random,
}

#[derive(Subcommand)]
enum Command {
    /// Plan a fair policy on a known instance.
    Plan {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_enum)]
        measure: Measure,
        /// Gini weights, nonincreasing and summing to 1.
        #[arg(long, value_delimiter = ',')]
        weights: Vec<f64>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        max_iters: Option<usize>,
        /// Write the optimal occupancy measure as JSON.
        #[arg(long)]
        emit_occupancy: Option<PathBuf>,
    },
    /// Run a learner for a number of episodes and write its per-episode CSV.
    Learn {
        #[arg(long, value_enum)]
        algo: Algo,
        #[arg(long)]
        instance: PathBuf,
        /// Ignored by `lagrange`, which targets min welfare.
        #[arg(long, value_enum, default_value = "nash")]
        measure: Measure,
        #[arg(long, value_delimiter = ',')]
        weights: Vec<f64>,
        #[arg(long)]
        episodes: usize,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Multiplier budget (lagrange).
        #[arg(long = "B")]
        bound: Option<f64>,
        /// Target value (lagrange).
        #[arg(long = "vstar")]
        v_star: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a named or random instance in the JSON instance format.
    Make {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long, default_value_t = 4)]
        horizon: usize,
        #[arg(long, default_value_t = 4)]
        states: usize,
        #[arg(long, default_value_t = 2)]
        actions: usize,
        #[arg(long, default_value_t = 2)]
        agents: usize,
        /// Reward gap (lowerbound) or reward level (tightness).
        #[arg(long, default_value_t = 0.1)]
        gap: f64,
        /// Dirichlet concentration of random kernels.
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Emit the second reward vector of an iian or ggw instance.
        #[arg(long)]
        tilde: bool,
        /// For ggw, the reward pair that flips the order at weights (2/3, 1/3).
        #[arg(long)]
        corrected: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the welfare axioms on the named counterexamples, random
    /// instances and optionally a directory of instance files.
    Axioms {
        #[arg(long, value_enum)]
        measure: Measure,
        /// Gini weights for instances with a matching number of agents;
        /// others use weights proportional to 1, 1/2, 1/4, ...
        #[arg(long, value_delimiter = ',')]
        weights: Vec<f64>,
        #[arg(long)]
        instances: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        random: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run an experiment described by a JSON config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn spec(measure: Measure, weights: &[f64]) -> CliResult<WelfareSpec> {
    Ok(match measure {
        Measure::Nash => WelfareSpec::Nash,
        Measure::Min => WelfareSpec::Min,
        Measure::Util => WelfareSpec::Utilitarian,
        Measure::Gini if weights.is_empty() => return Err(CliError::Config("gini needs --weights".into())),
        Measure::Gini => WelfareSpec::gini(weights.to_vec())?,
    })
}

fn halving_weights(n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|k| 0.5f64.powi(k as i32)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w / total).collect()
}

fn spec_for(measure: Measure, weights: &[f64], n: usize) -> CliResult<WelfareSpec> {
    match measure {
        Measure::Gini if weights.len() != n => Ok(WelfareSpec::gini(halving_weights(n))?),
        _ => spec(measure, weights),
    }
}

fn plan(
    instance: &Path,
    measure: &WelfareSpec,
    tol: Option<f64>,
    seed: u64,
    max_iters: Option<usize>,
    emit: Option<&Path>,
) -> CliResult<()> {
    let (mdp, rewards) = load_instance(instance)?;
    let mut opts = PlanOptions { tol, seed, ..PlanOptions::default() };
    if let Some(m) = max_iters {
        opts.max_iters = m;
    }
    let res = plan_fair(&KnownModel(&mdp), &rewards, measure, &opts)?;
    println!("measure: {}", measure.name());
    for (i, v) in res.values.iter().enumerate() {
        println!("value_agent_{}: {v}", i + 1);
    }
    println!("welfare: {}", res.welfare);
    println!("iterations: {}", res.iterations);
    println!("residual: {}", res.residual);
    if let Some(path) = emit {
        std::fs::write(path, occupancy_json(&res.occupancy, mdp.num_states(), mdp.num_actions(), mdp.horizon())?)?;
    }
    if !res.converged {
        return Err(CliError::NotConverged(format!("residual {} after {} iterations", res.residual, res.iterations)));
    }
    Ok(())
}

fn print_table(table: &AxiomTable) {
    println!("{:<8} {:>4} {:>4} {:>4} {:>4}", "measure", "PO", "ANON", "IIAN", "CON");
    let [po, anon, iian, con] = table.marks();
    println!("{:<8} {:>4} {:>4} {:>4} {:>4}", table.measure, po, anon, iian, con);
    for (name, tally) in [("PO", &table.po), ("ANON", &table.anon), ("IIAN", &table.iian), ("CON", &table.con)] {
        println!(
            "{name}: {} satisfied, {} violated, {} inconclusive",
            tally.satisfied, tally.violated, tally.inconclusive
        );
        if let Some(w) = &tally.first_violation {
            println!("  witness: {w}");
        }
    }
}

fn axioms(measure: Measure, weights: &[f64], dir: Option<&Path>, random: usize, seed: u64) -> CliResult<()> {
    let spec2 = spec_for(measure, weights, 2)?;
    let mut table = AxiomTable::new(spec2.name());
    let cfg = BatteryConfig { random_instances: random, seed, ..BatteryConfig::default() };
    check_named_instances(&spec2, cfg.named_horizon, &mut table)?;
    let spec_n = spec_for(measure, weights, cfg.num_agents)?;
    for k in 0..random {
        let s = seed.wrapping_add(k as u64);
        let inst = sample_random_instance(cfg.num_states, cfg.num_actions, cfg.horizon, cfg.num_agents, 1.0, s)?;
        check_instance(&spec_n, &inst.mdp, &inst.rewards, s, &mut table)?;
    }
    if let Some(dir) = dir {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        files.retain(|p| p.extension().is_some_and(|e| e == "json"));
        files.sort();
        for path in files {
            let (mdp, rewards) = load_instance(&path)?;
            let spec = spec_for(measure, weights, rewards.num_agents())?;
            check_instance(&spec, &mdp, &rewards, seed, &mut table)?;
        }
    }
    print_table(&table);
    Ok(())
}

fn execute(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Plan { instance, measure, weights, tol, seed, max_iters, emit_occupancy } => {
            plan(&instance, &spec(measure, &weights)?, tol, seed, max_iters, emit_occupancy.as_deref())
        }
        Command::Learn { algo, instance, measure, weights, episodes, delta, seed, bound, v_star, tol, out } => {
            let (mdp, rewards) = load_instance(&instance)?;
            let writer = BufWriter::new(File::create(&out)?);
            match algo {
                Algo::Ucrl => {
                    let spec = spec(measure, &weights)?;
                    let opts = UcrlOptions { delta, plan: PlanOptions { tol, ..PlanOptions::default() }, comparator_tol: None };
                    let log = run_ucrl_f(&mdp, &rewards, &spec, episodes, seed, &opts)?;
                    write_ucrl_csv(writer, &log)?;
                    println!("final_regret: {}", log.final_regret());
                    let unconverged = log.records.iter().filter(|r| !r.planner_converged).count();
                    if unconverged > 0 {
                        return Err(CliError::NotConverged(format!("{unconverged} episodes hit the iteration cap")));
                    }
                }
                Algo::Lagrange => {
                    let opts = LagrangeOptions {
                        delta,
                        v_star,
                        bound,
                        policy_lr: None,
                        comparator_tol: tol,
                    };
                    let log = run_lagrange_maximin(&mdp, &rewards, episodes, seed, &opts, None)?;
                    write_lagrange_csv(writer, &log)?;
                    let last = log.records.last().expect("at least one episode");
                    println!("final_regret: {}", last.regret_cum);
                    println!("final_weak_regret: {}", last.weak_regret_cum);
                }
            }
            Ok(())
        }
        Command::Make { kind, horizon, states, actions, agents, gap, alpha, seed, tilde, corrected, out } => {
            let variant = if tilde { RewardVariant::Tilde } else { RewardVariant::Original };
            let generator = match kind {
                Kind::Po => Generator::Po { horizon },
                Kind::Iian => Generator::Iian { horizon, variant },
                Kind::Ggw => Generator::Ggw { horizon, variant, corrected },
                Kind::Tightness => Generator::Tightness { delta: gap, agents, horizon },
                Kind::Lowerbound => Generator::Lowerbound { states, actions, horizon, agents, gap },
                Kind::Random => Generator::Random { states, actions, horizon, agents, alpha, seed },
            };
            let (mdp, rewards) = generator.build()?;
            save_instance(&out, &mdp, &rewards)?;
            Ok(())
        }
        Command::Axioms { measure, weights, instances, random, seed } => {
            axioms(measure, &weights, instances.as_deref(), random, seed)
        }
        Command::Run { config, workers } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if workers.is_some() {
                cfg.workers = workers;
            }
            let summary = run_experiment(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            if summary.has_unconverged() {
                return Err(CliError::NotConverged("see summary.json".into()));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
