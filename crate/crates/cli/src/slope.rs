//! Log-log regret slope.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

const REGRET_FLOOR: f64 = 1e-9;

/// Least-squares fit of `ln regret = intercept + slope * ln t` over the
/// second half of the rows. `rows` are `(t, cumulative regret)` pairs in
/// increasing `t`; regret is clamped below at `1e-9`. `None` if fewer than
/// two distinct `t` remain.
pub fn fit_regret_slope(rows: &[(f64, f64)]) -> Option<SlopeFit> {
    let tail = &rows[rows.len() / 2..];
    let pts: Vec<(f64, f64)> = tail.iter().map(|&(t, r)| (t.ln(), r.max(REGRET_FLOOR).ln())).collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if pts.len() < 2 || sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Some(SlopeFit { slope, intercept: my - slope * mx, r_squared })
}
