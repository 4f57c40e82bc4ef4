//! The ten acceptance criteria. Each test prints one `PASS`/`FAIL` line
//! straight to stdout, so the lines survive output capture, and then
//! asserts. Criteria run one at a time so wall-clock budgets are measured
//! without interference.

use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use fairmdp_cli::{run_experiment, Algorithm, ExperimentConfig, Generator, InstanceSource};
use fairmdp_core::axioms::{axiom_battery, check_nw_maxmin_bound, BatteryConfig, Verdict};
use fairmdp_core::instances::{
    make_ggw_third_weight_flip, make_ggw_w2_third_counterexample, make_iian_counterexample, make_lowerbound_instance,
    make_po_counterexample, make_tightness_instance, sample_random_instance,
};
use fairmdp_core::rng::seeded;
use fairmdp_core::ucrl::{fixed_policy_regret, nsw_linearization_gap, run_ucrl_f, value_difference_bound, UcrlOptions};
use fairmdp_core::{
    evaluate_values, occupancy_to_policy, plan_gini, plan_minwelfare, plan_nash, plan_scalarized, policy_to_occupancy,
    simulate_episode, welfare_of_values, Occupancy, PlanOptions, Policy, RewardSet, Shape, StepReward, TabularMdp,
    WelfareSpec,
};
use rand::Rng;

static SERIAL: Mutex<()> = Mutex::new(());

fn run_criterion(id: u32, name: &str, budget: Duration, body: impl FnOnce() -> (bool, String)) {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let (ok, detail) = body();
    let elapsed = start.elapsed();
    let in_budget = elapsed <= budget;
    let pass = ok && in_budget;
    let line = format!(
        "criterion {id:>2} {}: {name} | {detail} | {:.2}s of {}s",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    writeln!(std::io::stdout().lock(), "{line}").unwrap();
    assert!(pass, "{line}");
}

fn gini_weights(n: usize) -> Vec<f64> {
    match n {
        2 => vec![0.6, 0.4],
        3 => vec![0.5, 0.3, 0.2],
        _ => panic!("no Gini weights chosen for {n} agents"),
    }
}

fn random_policy<R: Rng>(rng: &mut R, ns: usize, na: usize, horizon: usize) -> Policy {
    let mut probs = Vec::with_capacity(ns * na * horizon);
    for _ in 0..ns * horizon {
        if rng.gen_bool(0.3) {
            let pick = rng.gen_range(0..na);
            probs.extend((0..na).map(|a| if a == pick { 1.0 } else { 0.0 }));
        } else {
            let raw: Vec<f64> = (0..na).map(|_| rng.gen::<f64>() + 1e-3).collect();
            let total: f64 = raw.iter().sum();
            probs.extend(raw.iter().map(|x| x / total));
        }
    }
    Policy::new(ns, na, horizon, probs).unwrap()
}

#[test]
fn criterion_01_counterexamples() {
    run_criterion(1, "axiom counterexamples at H = 4", Duration::from_secs(1), || {
        let exact = |a: f64, b: f64| (a - b).abs() <= 1e-12;
        let min = WelfareSpec::Min;
        let mut failures = Vec::new();

        let po = make_po_counterexample(4).unwrap();
        let va = evaluate_values(&po.mdp, &po.rewards, &po.pi_1).unwrap();
        let vb = evaluate_values(&po.mdp, &po.rewards, &po.pi_2).unwrap();
        let (mwa, mwb) = (welfare_of_values(&min, &va).unwrap(), welfare_of_values(&min, &vb).unwrap());
        if !(exact(mwa, 4.0) && exact(mwb, 4.0) && exact(va[0], 4.0) && exact(va[1], 4.0) && exact(vb[0], 4.0) && exact(vb[1], 8.0)) {
            failures.push(format!("PO: values {va:?} {vb:?}"));
        }

        let iian = make_iian_counterexample(4).unwrap();
        let mw = |r: &RewardSet, pi: &Policy| welfare_of_values(&min, &evaluate_values(&iian.mdp, r, pi).unwrap()).unwrap();
        let got = [
            mw(&iian.rewards, &iian.pi_1),
            mw(&iian.rewards, &iian.pi_2),
            mw(&iian.rewards_tilde, &iian.pi_1),
            mw(&iian.rewards_tilde, &iian.pi_2),
        ];
        if !got.iter().zip([2.0, 1.5, 2.0, 3.0]).all(|(g, w)| exact(*g, w)) {
            failures.push(format!("IIAN: MW values {got:?}"));
        }

        let flips = |inst: &fairmdp_core::instances::IianInstance, spec: &WelfareSpec| {
            let w = |r: &RewardSet, pi: &Policy| welfare_of_values(spec, &evaluate_values(&inst.mdp, r, pi).unwrap()).unwrap();
            let d = w(&inst.rewards, &inst.pi_1) - w(&inst.rewards, &inst.pi_2);
            let dt = w(&inst.rewards_tilde, &inst.pi_1) - w(&inst.rewards_tilde, &inst.pi_2);
            d.abs() > 1e-12 && dt.abs() > 1e-12 && d.signum() != dt.signum()
        };
        if !flips(&iian, &WelfareSpec::gini(vec![0.6, 0.4]).unwrap()) {
            failures.push("no GGW flip at (0.6, 0.4)".into());
        }
        let third = WelfareSpec::gini(vec![2.0 / 3.0, 1.0 / 3.0]).unwrap();
        if !flips(&make_ggw_third_weight_flip(4).unwrap(), &third) {
            failures.push("no GGW flip at (2/3, 1/3) with the modified rewards".into());
        }
        // The literal reward pair r2 = (1/2, 2/3), r~2 = 2 r2 cannot flip:
        // under both, the second policy wins.
        let literal_flips = flips(&make_ggw_w2_third_counterexample(4).unwrap(), &third);
        if literal_flips {
            failures.push("literal (1/2, 2/3) rewards unexpectedly flip".into());
        }
        let detail = if failures.is_empty() {
            "PO 4 = 4 with (4,8) > (4,4); IIAN 2 > 1.5, 2 < 3; GGW flips at (0.6,0.4) and (2/3,1/3); \
             literal (1/2,2/3) pair does not flip"
                .to_string()
        } else {
            failures.join("; ")
        };
        (failures.is_empty(), detail)
    });
}

#[test]
fn criterion_02_axiom_table() {
    run_criterion(2, "axiom table over named and 100 random instances", Duration::from_secs(30), || {
        let cfg = BatteryConfig::default();
        let expected: [(&str, [char; 4]); 3] = [("nash", ['Y'; 4]), ("min", ['N', 'Y', 'N', 'Y']), ("gini", ['Y', 'Y', 'N', 'Y'])];
        let mut ok = true;
        let mut rows = Vec::new();
        for (name, want) in expected {
            let table = match name {
                "nash" => axiom_battery(&|_| Ok(WelfareSpec::Nash), &cfg),
                "min" => axiom_battery(&|_| Ok(WelfareSpec::Min), &cfg),
                _ => axiom_battery(&|n| WelfareSpec::gini(gini_weights(n)), &cfg),
            }
            .unwrap();
            let marks = table.marks();
            ok &= marks == want;
            rows.push(format!("{name} {}", marks.iter().collect::<String>()));
        }
        (ok, rows.join(", "))
    });
}

#[test]
fn criterion_03_nash_maxmin_bound() {
    run_criterion(3, "Nash policy gives each agent 1/n of the max-min value", Duration::from_secs(120), || {
        let mut worst = f64::INFINITY;
        let mut ok = true;
        for k in 0..100 {
            let inst = sample_random_instance(3, 2, 3, 3, 1.0, 3_000 + k).unwrap();
            let report = check_nw_maxmin_bound(&inst.mdp, &inst.rewards, 1e-6).unwrap();
            ok &= report.verdict != Verdict::Violated && report.min_ratio >= 1.0 / 3.0 - 1e-4;
            worst = worst.min(report.min_ratio);
        }
        let tight = make_tightness_instance(0.01, 2, 3).unwrap();
        let report = check_nw_maxmin_bound(&tight.mdp, &tight.rewards, 1e-6).unwrap();
        let tight_ok = (0.50..=0.55).contains(&report.min_ratio);
        (ok && tight_ok, format!("worst random ratio {worst:.4}, tightness ratio {:.4}", report.min_ratio))
    });
}

/// Best welfare over mixtures of two deterministic policies, scanning the
/// Pareto-undominated value vectors pairwise on a `1e-3` grid. With two
/// agents the value set is a polygon whose upper frontier consists of such
/// segments.
fn brute_force_welfare(mdp: &TabularMdp, rewards: &RewardSet, spec: &WelfareSpec) -> f64 {
    let (ns, na, h) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let slots = ns * h;
    let mut vertices: Vec<Vec<f64>> = Vec::new();
    for code in 0..na.pow(slots as u32) {
        let mut c = code;
        let actions: Vec<usize> = (0..slots)
            .map(|_| {
                let a = c % na;
                c /= na;
                a
            })
            .collect();
        let pi = Policy::deterministic(ns, na, h, &actions).unwrap();
        vertices.push(evaluate_values(mdp, rewards, &pi).unwrap());
    }
    let dominated = |v: &Vec<f64>| {
        vertices.iter().any(|u| u.iter().zip(v).all(|(a, b)| a >= b) && u.iter().zip(v).any(|(a, b)| a > b))
    };
    let mut frontier: Vec<Vec<f64>> = vertices.iter().filter(|v| !dominated(v)).cloned().collect();
    frontier.sort_by(|a, b| a.partial_cmp(b).unwrap());
    frontier.dedup();
    let mut best = f64::NEG_INFINITY;
    for (i, p) in frontier.iter().enumerate() {
        best = best.max(welfare_of_values(spec, p).unwrap());
        for q in &frontier[i + 1..] {
            for k in 1..1000 {
                let alpha = k as f64 / 1000.0;
                let mixed: Vec<f64> = p.iter().zip(q).map(|(x, y)| alpha * x + (1.0 - alpha) * y).collect();
                best = best.max(welfare_of_values(spec, &mixed).unwrap());
            }
        }
    }
    best
}

#[test]
fn criterion_04_planners_match_brute_force() {
    run_criterion(4, "fair planners match brute force on 50 instances", Duration::from_secs(300), || {
        let (h, n) = (3.0f64, 2);
        let opts = PlanOptions::default();
        let weights = gini_weights(n);
        let mut worst = [0.0f64; 3];
        let mut ok = true;
        for k in 0..50 {
            let inst = sample_random_instance(3, 2, 3, n, 1.0, 4_000 + k).unwrap();
            let (mdp, r) = (&inst.mdp, &inst.rewards);
            let gini = WelfareSpec::gini(weights.clone()).unwrap();
            let cases = [
                (plan_nash(mdp, r, &opts).unwrap().welfare, brute_force_welfare(mdp, r, &WelfareSpec::Nash), 1e-3 * h.powi(n as i32)),
                (plan_minwelfare(mdp, r, &opts).unwrap().welfare, brute_force_welfare(mdp, r, &WelfareSpec::Min), 1e-3 * h),
                (plan_gini(mdp, r, &weights, &opts).unwrap().welfare, brute_force_welfare(mdp, r, &gini), 1e-3 * h),
            ];
            for (j, (planned, oracle, tol)) in cases.into_iter().enumerate() {
                let gap = (planned - oracle).abs();
                worst[j] = worst[j].max(gap / tol);
                ok &= gap <= tol;
            }
        }
        (ok, format!("worst |planner - oracle| / tolerance: nash {:.3}, min {:.3}, gini {:.3}", worst[0], worst[1], worst[2]))
    });
}

#[test]
fn criterion_05_confidence_coverage() {
    run_criterion(5, "true kernel stays in the confidence set", Duration::from_secs(300), || {
        let runs = 200;
        let opts = UcrlOptions { delta: 0.1, ..UcrlOptions::default() };
        let covered = (0..runs)
            .filter(|&k| {
                let inst = sample_random_instance(4, 2, 5, 2, 1.0, 5_000 + k).unwrap();
                run_ucrl_f(&inst.mdp, &inst.rewards, &WelfareSpec::Min, 500, k, &opts).unwrap().always_covered()
            })
            .count();
        let frac = covered as f64 / runs as f64;
        (frac >= 0.90, format!("{covered}/{runs} runs covered at every episode"))
    });
}

fn first_column_value(csv: &Path, column: &str) -> f64 {
    let mut reader = csv::Reader::from_path(csv).unwrap();
    let idx = reader.headers().unwrap().iter().position(|h| h == column).unwrap();
    reader.records().next().unwrap().unwrap()[idx].parse().unwrap()
}

fn learner_config(out: &Path, generator: Generator, algorithm: Algorithm, measure: WelfareSpec) -> ExperimentConfig {
    ExperimentConfig {
        instance: InstanceSource::Generate(generator),
        algorithm,
        measure,
        episodes: 20_000,
        seeds: (0..10).collect(),
        delta: 0.1,
        tol: None,
        bound: None,
        v_star: None,
        output_dir: out.to_path_buf(),
        workers: None,
    }
}

#[test]
fn criterion_06_ucrl_sublinear_regret() {
    run_criterion(6, "optimistic learner regret is sublinear", Duration::from_secs(1800), || {
        // Random instance 4 of this size has fractional fair optima for all
        // three measures; instances whose optimum is deterministic lock in
        // early and show flat regret instead.
        let generator = Generator::Random { states: 4, actions: 2, horizon: 5, agents: 2, alpha: 1.0, seed: 4 };
        let (mdp, rewards) = generator.build().unwrap();
        let uniform = Policy::uniform(4, 2, 5);
        let mut ok = true;
        let mut parts = Vec::new();
        for spec in [WelfareSpec::Nash, WelfareSpec::Min, WelfareSpec::gini(gini_weights(2)).unwrap()] {
            let dir = tempfile::tempdir().unwrap();
            let cfg = learner_config(dir.path(), generator.clone(), Algorithm::Ucrl, spec.clone());
            let summary = run_experiment(&cfg).unwrap();
            let slope = summary.slope.unwrap().slope;
            let final_regret = summary.checkpoints.last().unwrap().mean_regret;
            let welfare_opt = first_column_value(&summary.seeds[0].csv, "welfare_opt");
            let uniform_regret = fixed_policy_regret(&mdp, &rewards, &spec, &uniform, welfare_opt, cfg.episodes).unwrap();
            let ratio = final_regret / uniform_regret;
            ok &= !summary.partial && (0.35..=0.85).contains(&slope) && ratio < 0.25;
            parts.push(format!("{} slope {slope:.3}, regret/uniform {ratio:.3}", spec.name()));
        }
        (ok, parts.join("; "))
    });
}

#[test]
fn criterion_07_linearization_inequalities() {
    run_criterion(7, "linearization and value-difference inequalities", Duration::from_secs(60), || {
        let mut rng = seeded(7);
        let mut lin_failures = 0;
        for _ in 0..100_000 {
            let n = rng.gen_range(1..=6);
            let h = rng.gen_range(1..=8) as f64;
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=h)).collect();
            let u: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=h)).collect();
            let (lhs, rhs) = nsw_linearization_gap(&v, &u, h).unwrap();
            if lhs > rhs + 1e-9 * rhs.max(1.0) {
                lin_failures += 1;
            }
        }
        let mut diff_failures = 0;
        let mut tightest: f64 = 0.0;
        for k in 0..1_000u64 {
            let base = sample_random_instance(3, 2, 4, 1, 1.0, 7_000 + k).unwrap();
            let other = sample_random_instance(3, 2, 4, 1, 1.0, 17_000 + k).unwrap();
            let eps: f64 = rng.gen();
            let kernel: Vec<f64> =
                base.mdp.kernel().iter().zip(other.mdp.kernel()).map(|(p, q)| (1.0 - eps) * p + eps * q).collect();
            let perturbed = base.mdp.with_kernel(kernel).unwrap();
            let pi = random_policy(&mut rng, 3, 2, 4);
            let (lhs, rhs) = value_difference_bound(&base.mdp, &perturbed, &base.rewards, &pi).unwrap();
            if lhs > rhs + 1e-12 {
                diff_failures += 1;
            }
            if rhs > 0.0 {
                tightest = tightest.max(lhs / rhs);
            }
        }
        (
            lin_failures == 0 && diff_failures == 0,
            format!("{lin_failures} linearization and {diff_failures} value-difference failures; max lhs/rhs {tightest:.3}"),
        )
    });
}

fn mean_returns(mdp: &TabularMdp, rewards: &RewardSet, pi: &Policy, episodes: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeded(seed);
    let mut total = vec![0.0; rewards.num_agents()];
    for _ in 0..episodes {
        let traj = simulate_episode(mdp, rewards, pi, &mut rng).unwrap();
        for (t, r) in total.iter_mut().zip(traj.returns()) {
            *t += r;
        }
    }
    total.iter().map(|t| t / episodes as f64).collect()
}

#[test]
fn criterion_08_lower_bound_separation() {
    run_criterion(8, "lower-bound tree separates flagged and unflagged play", Duration::from_secs(600), || {
        let inst = make_lowerbound_instance(6, 2, 8, 2, 0.1, None).unwrap();
        let shape = Shape { states: 6, actions: 2, horizon: 8 };
        let best = plan_scalarized(&inst.mdp, &StepReward::stationary(shape, inst.rewards.agent(0))).unwrap().policy;
        let mut penalized = inst.rewards.agent(0).to_vec();
        penalized[inst.flagged.0 * 2 + inst.flagged.1] = -1e6;
        let avoid = plan_scalarized(&inst.mdp, &StepReward::stationary(shape, &penalized)).unwrap().policy;
        let avoids = (0..8).all(|h| avoid.prob(h, inst.flagged.0, inst.flagged.1) == 0.0);

        let nw = |pi: &Policy, seed: u64| mean_returns(&inst.mdp, &inst.rewards, pi, 100_000, seed).iter().product::<f64>();
        let ratio = nw(&best, 81) / nw(&avoid, 82);
        let target = 1.44 * 0.95;

        let regret = |gap: f64| {
            let lb = make_lowerbound_instance(6, 2, 8, 2, gap, None).unwrap();
            (0..3)
                .map(|s| run_ucrl_f(&lb.mdp, &lb.rewards, &WelfareSpec::Nash, 10_000, s, &UcrlOptions::default()).unwrap().final_regret())
                .sum::<f64>()
                / 3.0
        };
        let (wide, narrow) = (regret(0.1), regret(0.02));
        (
            avoids && ratio >= target && wide > narrow,
            format!("NW ratio {ratio:.4} (need {target:.3}); mean regret gap 0.1: {wide:.1}, gap 0.02: {narrow:.1}"),
        )
    });
}

#[test]
fn criterion_09_lagrange_weak_regret() {
    run_criterion(9, "primal-dual learner weak regret", Duration::from_secs(1200), || {
        // Random instance 1 of this size keeps several agents binding at the
        // max-min optimum; on most instances the multipliers settle on one
        // agent and weak regret stops growing within the horizon.
        let generator = Generator::Random { states: 3, actions: 2, horizon: 4, agents: 3, alpha: 1.0, seed: 1 };
        let dir = tempfile::tempdir().unwrap();
        let cfg = learner_config(dir.path(), generator, Algorithm::Lagrange, WelfareSpec::Min);
        let summary = run_experiment(&cfg).unwrap();
        let slope = summary.weak_slope.unwrap().slope;
        let (h, n, bound) = (4.0f64, 3.0f64, 4.0f64);
        let checkpoints: Vec<usize> = summary.checkpoints.iter().map(|c| c.t).collect();
        let mut gap_ok = true;
        let mut lambda_ok = true;
        for seed in &summary.seeds {
            let mut reader = csv::Reader::from_path(&seed.csv).unwrap();
            let headers = reader.headers().unwrap().clone();
            let col = |name: &str| headers.iter().position(|x| x == name).unwrap();
            let (strong, weak) = (col("regret_cum"), col("weak_regret_cum"));
            let lambdas: Vec<usize> = (1..=3).map(|i| col(&format!("lambda_{i}"))).collect();
            for (row, t) in reader.records().zip(1..) {
                let row = row.unwrap();
                let f = |i: usize| row[i].parse::<f64>().unwrap();
                let l: Vec<f64> = lambdas.iter().map(|&i| f(i)).collect();
                lambda_ok &= l.iter().all(|x| *x >= 0.0) && l.iter().sum::<f64>() <= bound + 1e-12;
                if checkpoints.contains(&t) {
                    gap_ok &= f(weak) <= f(strong) + 3.0 * h * (t as f64 * n.ln()).sqrt();
                }
            }
        }
        (
            !summary.partial && (0.35..=0.85).contains(&slope) && gap_ok && lambda_ok,
            format!("weak-regret slope {slope:.3}, checkpoint gap ok {gap_ok}, multipliers feasible {lambda_ok}"),
        )
    });
}

#[test]
fn criterion_10_round_trip_and_flow() {
    run_criterion(10, "occupancy round trip and Bellman flow", Duration::from_secs(10), || {
        let mut rng = seeded(10);
        let mut worst_round_trip: f64 = 0.0;
        let mut worst_flow: f64 = 0.0;
        for k in 0..1_000u64 {
            let (ns, na, h) = (rng.gen_range(1..=6), rng.gen_range(1..=4), rng.gen_range(1..=8));
            let alpha = if k % 2 == 0 { 1.0 } else { 0.1 };
            let inst = sample_random_instance(ns, na, h, 1, alpha, 10_000 + k).unwrap();
            let pi = random_policy(&mut rng, ns, na, h);
            let q = policy_to_occupancy(&inst.mdp, &pi).unwrap();
            let back: Occupancy = policy_to_occupancy(&inst.mdp, &occupancy_to_policy(&q)).unwrap();
            let diff = q.values().iter().zip(back.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            worst_round_trip = worst_round_trip.max(diff);
            worst_flow = worst_flow.max(q.flow_residual(&inst.mdp));
        }
        (
            worst_round_trip <= 1e-9 && worst_flow <= 1e-9,
            format!("max round-trip error {worst_round_trip:e}, max flow residual {worst_flow:e}"),
        )
    });
}
