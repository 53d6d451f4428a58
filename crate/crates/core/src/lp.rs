//! Exact solution of small zero-sum matrix games by the simplex method.
//!
//! The maximizer picks a probability vector `p` over columns, the minimizer a
//! row; the value is `max_p min_i (A p)_i`. After shifting `A` to be positive
//! the dual LP `max Σ w  s.t.  A^T w <= 1, w >= 0` is solved with a dense
//! tableau and Bland's rule. The row strategy is `w / Σ w`; the column strategy
//! is read off the reduced costs of the slack columns.

use serde::Serialize;

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-12;
const MAX_PIVOTS: usize = 100_000;

#[derive(Clone, Debug, Serialize)]
pub struct GameSolution {
    /// `min_i (A p)_i` at the returned column strategy.
    pub value: f64,
    /// Column (maximizer) strategy.
    pub p: Vec<f64>,
    /// Row (minimizer) strategy.
    pub q: Vec<f64>,
    /// `max_j (q^T A)_j − min_i (A p)_i`; zero at an exact optimum.
    pub gap: f64,
    /// Largest complementary-slackness residual over active rows and columns.
    pub slackness: f64,
    pub pivots: usize,
}

fn check_matrix(a: &[Vec<f64>]) -> Result<(usize, usize)> {
    let r = a.len();
    if r == 0 {
        return Err(Error::InvalidInput("game matrix has no rows".into()));
    }
    let s = a[0].len();
    if s == 0 || a.iter().any(|row| row.len() != s) {
        return Err(Error::InvalidInput("game matrix rows must be nonempty and equal length".into()));
    }
    if a.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("game matrix entries must be finite".into()));
    }
    Ok((r, s))
}

/// `A p` for a column strategy.
pub fn row_payoffs(a: &[Vec<f64>], p: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(p).map(|(x, y)| x * y).sum()).collect()
}

/// `q^T A` for a row strategy.
pub fn column_payoffs(a: &[Vec<f64>], q: &[f64]) -> Vec<f64> {
    let s = a[0].len();
    (0..s)
        .map(|j| a.iter().zip(q).map(|(row, w)| row[j] * w).sum())
        .collect()
}

/// Solves `max_p min_i (A p)_i` over the probability simplex on columns.
pub fn solve_matrix_game(a: &[Vec<f64>]) -> Result<GameSolution> {
    let (r, s) = check_matrix(a)?;
    let lo = a.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let shift = 1.0 - lo;

    // Tableau rows: one per column j of A, variables w_0..w_{r-1} then slacks.
    let width = r + s + 1;
    let mut tab = vec![vec![0.0; width]; s + 1];
    for j in 0..s {
        for i in 0..r {
            tab[j][i] = a[i][j] + shift;
        }
        tab[j][r + j] = 1.0;
        tab[j][width - 1] = 1.0;
    }
    for i in 0..r {
        tab[s][i] = -1.0;
    }
    let mut basis: Vec<usize> = (r..r + s).collect();
    let mut pivots = 0;
    loop {
        let entering = (0..r + s).find(|&c| tab[s][c] < -PIVOT_TOL);
        let Some(e) = entering else { break };
        let mut leave: Option<(usize, f64)> = None;
        for row in 0..s {
            let coef = tab[row][e];
            if coef > PIVOT_TOL {
                let ratio = tab[row][width - 1] / coef;
                leave = match leave {
                    None => Some((row, ratio)),
                    Some((best, br)) => {
                        if ratio < br - PIVOT_TOL || (ratio <= br + PIVOT_TOL && basis[row] < basis[best]) {
                            Some((row, ratio))
                        } else {
                            Some((best, br))
                        }
                    }
                };
            }
        }
        let Some((lr, _)) = leave else {
            return Err(Error::Solver("game LP is unbounded".into()));
        };
        let piv = tab[lr][e];
        for v in tab[lr].iter_mut() {
            *v /= piv;
        }
        let pivot_row = tab[lr].clone();
        for (row, line) in tab.iter_mut().enumerate() {
            if row != lr {
                let factor = line[e];
                if factor != 0.0 {
                    for (v, pv) in line.iter_mut().zip(&pivot_row) {
                        *v -= factor * pv;
                    }
                }
            }
        }
        basis[lr] = e;
        pivots += 1;
        if pivots > MAX_PIVOTS {
            return Err(Error::Solver(format!("no convergence after {MAX_PIVOTS} pivots")));
        }
    }

    let mut w = vec![0.0; r];
    for (row, &b) in basis.iter().enumerate() {
        if b < r {
            w[b] = tab[row][width - 1].max(0.0);
        }
    }
    let u: Vec<f64> = (0..s).map(|j| tab[s][r + j].max(0.0)).collect();
    let wsum: f64 = w.iter().sum();
    let usum: f64 = u.iter().sum();
    if wsum <= 0.0 || usum <= 0.0 {
        return Err(Error::Solver("degenerate game solution".into()));
    }
    let q: Vec<f64> = w.iter().map(|x| x / wsum).collect();
    let p: Vec<f64> = u.iter().map(|x| x / usum).collect();

    let rows = row_payoffs(a, &p);
    let cols = column_payoffs(a, &q);
    let value = rows.iter().copied().fold(f64::INFINITY, f64::min);
    let upper = cols.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut slackness: f64 = 0.0;
    for i in 0..r {
        if q[i] > PIVOT_TOL {
            slackness = slackness.max((rows[i] - value).abs());
        }
    }
    for j in 0..s {
        if p[j] > PIVOT_TOL {
            slackness = slackness.max((upper - cols[j]).abs());
        }
    }
    Ok(GameSolution {
        value,
        p,
        q,
        gap: upper - value,
        slackness,
        pivots,
    })
}

/// Gaussian elimination with partial pivoting; `None` if singular.
pub fn solve_linear(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))?;
        if m[piv][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let factor = m[row][col] / m[col][col];
            if factor != 0.0 {
                for k in col..n {
                    m[row][k] -= factor * m[col][k];
                }
                b[row] -= factor * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
    }
    Some(x)
}
