//! Exact solution of small two-player zero-sum matrix games.
//!
//! The fair planners reduce their restricted master problems to a matrix
//! game between a mixture over oracle vertices (rows, maximizing) and a
//! mixture over the welfare's linear pieces (columns, minimizing). After
//! shifting payoffs to be positive the column player's problem is the LP
//! `max 1'u s.t. G u <= 1, u >= 0`, whose slack basis is feasible, so a
//! plain tableau simplex with Bland's rule solves it; the row strategy is
//! read off the dual prices.

#[derive(Debug, Clone)]
pub struct GameSolution {
    /// Maximizer's mixed strategy over rows.
    pub rows: Vec<f64>,
    /// Minimizer's mixed strategy over columns.
    pub cols: Vec<f64>,
    pub value: f64,
}

const PIVOT_EPS: f64 = 1e-12;

/// Solves `max_x min_y x' G y` for a payoff matrix given as rows.
///
/// Panics if `payoff` is empty or ragged.
pub fn solve_matrix_game(payoff: &[Vec<f64>]) -> GameSolution {
    let m = payoff.len();
    assert!(m > 0, "empty payoff matrix");
    let k = payoff[0].len();
    assert!(k > 0 && payoff.iter().all(|r| r.len() == k), "ragged payoff matrix");

    let lo = payoff.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let hi = payoff.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = (hi - lo).max(1.0);
    // Entries land in [1, 2].
    let shifted = |i: usize, j: usize| 1.0 + (payoff[i][j] - lo) / scale;

    // Columns: u_0..u_{k-1}, slacks k..k+m-1, then the right-hand side.
    let width = k + m + 1;
    let rhs = k + m;
    let mut tab = vec![0.0; (m + 1) * width];
    for i in 0..m {
        for j in 0..k {
            tab[i * width + j] = shifted(i, j);
        }
        tab[i * width + k + i] = 1.0;
        tab[i * width + rhs] = 1.0;
    }
    let obj = m * width;
    for j in 0..k {
        tab[obj + j] = -1.0;
    }
    let mut basis: Vec<usize> = (k..k + m).collect();

    while let Some(enter) = (0..k + m).find(|&j| tab[obj + j] < -PIVOT_EPS) {
        let mut leave: Option<usize> = None;
        let mut best_ratio = f64::INFINITY;
        for i in 0..m {
            let a = tab[i * width + enter];
            if a > PIVOT_EPS {
                let ratio = tab[i * width + rhs] / a;
                let better = match leave {
                    None => true,
                    Some(l) => ratio < best_ratio - PIVOT_EPS || (ratio <= best_ratio + PIVOT_EPS && basis[i] < basis[l]),
                };
                if better {
                    best_ratio = ratio;
                    leave = Some(i);
                }
            }
        }
        // Bounded: every column has a positive entry in every row.
        let r = leave.expect("matrix game LP is bounded");
        let pivot = tab[r * width + enter];
        for c in 0..width {
            tab[r * width + c] /= pivot;
        }
        for i in 0..=m {
            if i == r {
                continue;
            }
            let f = tab[i * width + enter];
            if f != 0.0 {
                for c in 0..width {
                    tab[i * width + c] -= f * tab[r * width + c];
                }
            }
        }
        basis[r] = enter;
    }

    let z = tab[obj + rhs];
    let mut cols = vec![0.0; k];
    for (i, &b) in basis.iter().enumerate() {
        if b < k {
            cols[b] = tab[i * width + rhs].max(0.0);
        }
    }
    let mut rows: Vec<f64> = (0..m).map(|i| tab[obj + k + i].max(0.0)).collect();
    normalize(&mut cols);
    normalize(&mut rows);
    let value = lo + (1.0 / z - 1.0) * scale;
    GameSolution { rows, cols, value }
}

fn normalize(v: &mut [f64]) {
    let t: f64 = v.iter().sum();
    if t > 0.0 {
        v.iter_mut().for_each(|x| *x /= t);
    } else {
        let u = 1.0 / v.len() as f64;
        v.iter_mut().for_each(|x| *x = u);
    }
}
