//! CSV and JSON writers. Floats use Rust's shortest round-trip formatting,
//! so identical runs produce identical bytes.

use std::io::Write;

use fairmdp_core::lagrange::LagrangeLog;
use fairmdp_core::ucrl::RegretLog;
use fairmdp_core::Occupancy;
use serde::Serialize;

use crate::CliResult;

fn header(base: &[&str], groups: &[(&str, usize)]) -> Vec<String> {
    let mut cols: Vec<String> = base.iter().map(|s| s.to_string()).collect();
    for (prefix, n) in groups {
        cols.extend((1..=*n).map(|i| format!("{prefix}_{i}")));
    }
    cols
}

fn num(x: f64) -> String {
    x.to_string()
}

/// Columns `t, welfare_opt, welfare_exec, welfare_optimistic, regret_cum,
/// value_agent_1..n`.
pub fn write_ucrl_csv<W: Write>(out: W, log: &RegretLog) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(
        &["t", "welfare_opt", "welfare_exec", "welfare_optimistic", "regret_cum"],
        &[("value_agent", log.num_agents)],
    ))?;
    for r in &log.records {
        let mut row = vec![r.t.to_string(), num(r.welfare_opt), num(r.welfare_exec), num(r.welfare_optimistic), num(r.regret_cum)];
        row.extend(r.values.iter().copied().map(num));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// The learner columns followed by `weak_regret_cum, lambda_1..n`.
pub fn write_lagrange_csv<W: Write>(out: W, log: &LagrangeLog) -> CliResult<()> {
    let n = log.num_agents;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(
        &["t", "welfare_opt", "welfare_exec", "welfare_optimistic", "regret_cum"],
        &[("value_agent", n)],
    )
    .into_iter()
    .chain(header(&["weak_regret_cum"], &[("lambda", n)])))?;
    for r in &log.records {
        let mut row = vec![r.t.to_string(), num(r.welfare_opt), num(r.welfare_exec), num(r.welfare_optimistic), num(r.regret_cum)];
        row.extend(r.values.iter().copied().map(num));
        row.push(num(r.weak_regret_cum));
        row.extend(r.lambda.iter().copied().map(num));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct OccupancyJson {
    #[serde(rename = "H")]
    horizon: usize,
    #[serde(rename = "S")]
    states: usize,
    #[serde(rename = "A")]
    actions: usize,
    /// `q[h][s][a]`.
    q: Vec<Vec<Vec<f64>>>,
}

pub fn occupancy_json(q: &Occupancy, states: usize, actions: usize, horizon: usize) -> CliResult<String> {
    let q = (0..horizon)
        .map(|h| (0..states).map(|s| (0..actions).map(|a| q.get(h, s, a)).collect()).collect())
        .collect();
    let mut text = serde_json::to_string_pretty(&OccupancyJson { horizon, states, actions, q })?;
    text.push('\n');
    Ok(text)
}
