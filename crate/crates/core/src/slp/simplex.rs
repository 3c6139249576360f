//! Small dense two-phase simplex for box-bounded LPs.
//!
//! `maximize c·s  s.t.  A s ≤ b,  lo ≤ s ≤ hi`
//!
//! Each variable is written as `s_i = anchor_i + p_i − n_i` with
//! `anchor_i = clamp(0, lo_i, hi_i)`, so the all-zero basis sits at `s = 0`
//! whenever that point is feasible. Bland's rule picks entering and leaving
//! variables, so the method cannot cycle.

use crate::error::{Error, Result};
use crate::problem::LinearConstraint;

const PIVOT_TOL: f64 = 1e-11;
const MAX_PIVOTS: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub step: Vec<f64>,
    pub objective: f64,
    pub status: LpStatus,
}

struct Tableau {
    /// `rows × (cols + 1)`, right-hand side last.
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn rhs(&self, r: usize) -> f64 {
        self.rows[r][self.cols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        self.rows[r].iter_mut().for_each(|x| *x /= p);
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let factor = row[c];
            if factor != 0.0 {
                row.iter_mut().zip(&pivot_row).for_each(|(x, y)| *x -= factor * y);
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Maximizes `cost·x` over columns flagged in `allowed`.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool]) -> Result<()> {
        for _ in 0..MAX_PIVOTS {
            let mut in_basis = vec![false; self.cols];
            self.basis.iter().for_each(|&b| in_basis[b] = true);
            let entering = (0..self.cols).find(|&j| {
                if !allowed[j] || in_basis[j] {
                    return false;
                }
                let reduced = cost[j]
                    - self.rows.iter().zip(&self.basis).map(|(row, &b)| cost[b] * row[j]).sum::<f64>();
                reduced > PIVOT_TOL
            });
            let Some(c) = entering else { return Ok(()) };

            let mut leaving: Option<(usize, f64)> = None;
            for r in 0..self.rows.len() {
                let a = self.rows[r][c];
                if a <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.rhs(r).max(0.0) / a;
                leaving = match leaving {
                    None => Some((r, ratio)),
                    Some((best, best_ratio)) => {
                        let tie = (ratio - best_ratio).abs() <= 1e-12 * (1.0 + best_ratio.abs());
                        if (!tie && ratio < best_ratio) || (tie && self.basis[r] < self.basis[best]) {
                            Some((r, ratio))
                        } else {
                            Some((best, best_ratio))
                        }
                    }
                };
            }
            match leaving {
                Some((r, _)) => self.pivot(r, c),
                // Every variable here is bounded, so an unbounded ray means the
                // tableau has lost accuracy.
                None => return Err(Error::InvalidInput("linear subproblem reported unbounded".into())),
            }
        }
        Err(Error::InvalidInput("simplex pivot limit reached".into()))
    }
}

/// Solves `max c·x, A x ≤ b, x ≥ 0` (b of any sign). `None` when infeasible.
fn solve_standard(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Result<Option<Vec<f64>>> {
    let n = c.len();
    let m = a.len();
    let negative: Vec<usize> = (0..m).filter(|&i| b[i] < 0.0).collect();
    let cols = n + m + negative.len();
    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut artificial = 0;
    for i in 0..m {
        let mut row = vec![0.0; cols + 1];
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            row[j] = sign * a[i][j];
        }
        row[n + i] = sign;
        row[cols] = sign * b[i];
        if b[i] < 0.0 {
            let col = n + m + artificial;
            row[col] = 1.0;
            basis.push(col);
            artificial += 1;
        } else {
            basis.push(n + i);
        }
        rows.push(row);
    }
    let mut tableau = Tableau { rows, basis, cols };

    if !negative.is_empty() {
        let mut phase_one = vec![0.0; cols];
        phase_one[n + m..].iter_mut().for_each(|x| *x = -1.0);
        tableau.optimize(&phase_one, &vec![true; cols])?;
        let infeasibility: f64 = tableau
            .basis
            .iter()
            .enumerate()
            .filter(|(_, &bv)| bv >= n + m)
            .map(|(r, _)| tableau.rhs(r))
            .sum();
        let scale = 1.0 + b.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        if infeasibility > 1e-9 * scale {
            return Ok(None);
        }
        // Drive zero-level artificials out of the basis where possible.
        for r in 0..m {
            if tableau.basis[r] >= n + m {
                if let Some(c) = (0..n + m).find(|&j| tableau.rows[r][j].abs() > PIVOT_TOL) {
                    tableau.pivot(r, c);
                }
            }
        }
    }

    let mut cost = vec![0.0; cols];
    cost[..n].copy_from_slice(c);
    let allowed: Vec<bool> = (0..cols).map(|j| j < n + m).collect();
    tableau.optimize(&cost, &allowed)?;

    let mut x = vec![0.0; n];
    for (r, &bv) in tableau.basis.iter().enumerate() {
        if bv < n {
            x[bv] = tableau.rhs(r).max(0.0);
        }
    }
    Ok(Some(x))
}

/// Maximizes `c·s` over `{ s : a_r·s ≤ offset_r for every row, lo ≤ s ≤ hi }`.
///
/// Returns `s = 0` for a zero objective when the origin is feasible.
pub fn solve_lp(c: &[f64], rows: &[LinearConstraint], lo: &[f64], hi: &[f64]) -> Result<LpSolution> {
    let d = c.len();
    if lo.len() != d || hi.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: lo.len().min(hi.len()) });
    }
    if lo.iter().zip(hi).any(|(l, h)| !(l <= h) || !l.is_finite() || !h.is_finite()) {
        return Err(Error::InvalidInput("LP box needs finite lo <= hi".into()));
    }
    for row in rows {
        if row.coefficients().len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: row.coefficients().len() });
        }
    }
    let infeasible = || LpSolution { step: vec![0.0; d], objective: 0.0, status: LpStatus::Infeasible };

    let anchor: Vec<f64> = lo.iter().zip(hi).map(|(l, h)| 0.0f64.clamp(*l, *h)).collect();
    let mut a = Vec::with_capacity(rows.len() + 2 * d);
    let mut b = Vec::with_capacity(rows.len() + 2 * d);
    for row in rows {
        let coeffs = row.coefficients();
        let mut line: Vec<f64> = coeffs.to_vec();
        line.extend(coeffs.iter().map(|x| -x));
        a.push(line);
        b.push(row.offset() - coeffs.iter().zip(&anchor).map(|(x, y)| x * y).sum::<f64>());
    }
    for i in 0..d {
        let mut up = vec![0.0; 2 * d];
        up[i] = 1.0;
        a.push(up);
        b.push(hi[i] - anchor[i]);
        let mut down = vec![0.0; 2 * d];
        down[d + i] = 1.0;
        a.push(down);
        b.push(anchor[i] - lo[i]);
    }
    let mut cost: Vec<f64> = c.to_vec();
    cost.extend(c.iter().map(|x| -x));

    let Some(x) = solve_standard(&cost, &a, &b)? else { return Ok(infeasible()) };
    let step: Vec<f64> = (0..d)
        .map(|i| (anchor[i] + x[i] - x[d + i]).clamp(lo[i], hi[i]))
        .collect();
    let objective = c.iter().zip(&step).map(|(x, y)| x * y).sum();
    Ok(LpSolution { step, objective, status: LpStatus::Optimal })
}
