//! Dense linear programming via the two-phase primal simplex method.
//!
//! Built for the small exact LPs generated by the finite-space testing
//! solvers (at most a few hundred variables), where determinism matters more
//! than speed. Bland's smallest-index rule is used for both the entering and
//! the leaving variable, which rules out cycling and makes every pivot
//! sequence reproducible.
//!
//! Dual multipliers are reported as shadow prices: `duals[i]` is the
//! derivative of the optimal objective value with respect to `rhs[i]` for the
//! problem exactly as posed, whatever the row sense or objective direction.

use crate::error::{CoreError, Result};

/// Constraint row sense.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

/// A dense LP: optimize `objective . x` subject to `rows[i] . x  <sense>  rhs[i]`
/// and `bounds[j].0 <= x[j] <= bounds[j].1` (infinite bounds allowed).
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub maximize: bool,
    pub objective: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub senses: Vec<Sense>,
    pub rhs: Vec<f64>,
    pub bounds: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Solver output. `x` and `duals` are nonempty only when `status` is
/// `Optimal`; `objective` is `NaN` otherwise.
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    pub x: Vec<f64>,
    pub duals: Vec<f64>,
}

/// Reduced-cost threshold for optimality and pivot eligibility.
const TOL_RC: f64 = 1e-9;
/// Smallest pivot magnitude accepted in the ratio test.
const TOL_PIV: f64 = 1e-9;

/// How one user variable maps to the nonnegative internal columns.
#[derive(Clone, Copy)]
enum VarMap {
    /// x = shift + u, u >= 0.
    Shift { col: usize, shift: f64 },
    /// x = hi - u, u >= 0 (lower bound absent).
    Negate { col: usize, hi: f64 },
    /// x = u - v, both >= 0 (free variable).
    Split { pos: usize, neg: usize },
}

pub fn solve_lp(problem: &LpProblem) -> Result<LpSolution> {
    validate(problem)?;
    let n = problem.objective.len();
    let m_user = problem.rows.len();

    // Map user variables onto shifted/negated/split nonnegative columns.
    let mut maps = Vec::with_capacity(n);
    let mut n_struct = 0usize;
    // Extra `u <= hi - lo` rows for doubly bounded variables.
    let mut ub_rows: Vec<(usize, f64)> = Vec::new();
    for (j, &(lo, hi)) in problem.bounds.iter().enumerate() {
        if lo.is_finite() {
            let col = n_struct;
            n_struct += 1;
            maps.push(VarMap::Shift { col, shift: lo });
            if hi.is_finite() {
                ub_rows.push((j, hi - lo));
            }
        } else if hi.is_finite() {
            let col = n_struct;
            n_struct += 1;
            maps.push(VarMap::Negate { col, hi });
        } else {
            let pos = n_struct;
            let neg = n_struct + 1;
            n_struct += 2;
            maps.push(VarMap::Split { pos, neg });
        }
    }

    // Internal rows: user rows first, then synthetic upper-bound rows.
    let m = m_user + ub_rows.len();
    let mut a = vec![vec![0.0; n_struct]; m];
    let mut b = vec![0.0; m];
    let mut senses = Vec::with_capacity(m);
    for i in 0..m_user {
        let mut rhs = problem.rhs[i];
        for (j, &coef) in problem.rows[i].iter().enumerate() {
            match maps[j] {
                VarMap::Shift { col, shift } => {
                    a[i][col] = coef;
                    rhs -= coef * shift;
                }
                VarMap::Negate { col, hi } => {
                    a[i][col] = -coef;
                    rhs -= coef * hi;
                }
                VarMap::Split { pos, neg } => {
                    a[i][pos] = coef;
                    a[i][neg] = -coef;
                }
            }
        }
        b[i] = rhs;
        senses.push(problem.senses[i]);
    }
    for (k, &(j, width)) in ub_rows.iter().enumerate() {
        let i = m_user + k;
        let col = match maps[j] {
            VarMap::Shift { col, .. } => col,
            _ => unreachable!("upper-bound rows only arise from shifted variables"),
        };
        a[i][col] = 1.0;
        b[i] = width;
        senses.push(Sense::Le);
    }

    // Normalize to nonnegative rhs, remembering flips for dual recovery.
    let mut row_sign = vec![1.0; m];
    for i in 0..m {
        if b[i] < 0.0 {
            row_sign[i] = -1.0;
            b[i] = -b[i];
            for v in a[i].iter_mut() {
                *v = -*v;
            }
            senses[i] = match senses[i] {
                Sense::Le => Sense::Ge,
                Sense::Ge => Sense::Le,
                Sense::Eq => Sense::Eq,
            };
        }
    }

    // Column layout: structural, then one slack/surplus per inequality row,
    // then one artificial per Ge/Eq row. `dual_col[i]` is a column that
    // started as +e_i with zero phase-2 cost, so its final reduced cost is
    // -y_i.
    let n_slack = senses.iter().filter(|s| **s != Sense::Eq).count();
    let slack_start = n_struct;
    let art_start = n_struct + n_slack;
    let n_art = senses.iter().filter(|s| **s != Sense::Le).count();
    let n_cols = art_start + n_art;

    let mut t = vec![vec![0.0; n_cols + 1]; m];
    let mut basis = vec![0usize; m];
    let mut dual_col = vec![0usize; m];
    let mut slack_idx = slack_start;
    let mut art_idx = art_start;
    for i in 0..m {
        t[i][..n_struct].copy_from_slice(&a[i]);
        t[i][n_cols] = b[i];
        match senses[i] {
            Sense::Le => {
                t[i][slack_idx] = 1.0;
                basis[i] = slack_idx;
                dual_col[i] = slack_idx;
                slack_idx += 1;
            }
            Sense::Ge => {
                t[i][slack_idx] = -1.0;
                slack_idx += 1;
                t[i][art_idx] = 1.0;
                basis[i] = art_idx;
                dual_col[i] = art_idx;
                art_idx += 1;
            }
            Sense::Eq => {
                t[i][art_idx] = 1.0;
                basis[i] = art_idx;
                dual_col[i] = art_idx;
                art_idx += 1;
            }
        }
    }

    // Internal objective (minimization).
    let sign = if problem.maximize { -1.0 } else { 1.0 };
    let mut c_int = vec![0.0; n_cols];
    for (j, &cj) in problem.objective.iter().enumerate() {
        match maps[j] {
            VarMap::Shift { col, .. } => c_int[col] += sign * cj,
            VarMap::Negate { col, .. } => c_int[col] -= sign * cj,
            VarMap::Split { pos, neg } => {
                c_int[pos] += sign * cj;
                c_int[neg] -= sign * cj;
            }
        }
    }

    let mut iters_left = 50_000usize;

    // Phase 1: minimize the sum of artificials.
    if n_art > 0 {
        let mut r = vec![0.0; n_cols];
        for c in r.iter_mut().skip(art_start) {
            *c = 1.0;
        }
        let mut z = 0.0;
        for i in 0..m {
            if basis[i] >= art_start {
                for j in 0..n_cols {
                    r[j] -= t[i][j];
                }
                z += t[i][n_cols];
            }
        }
        let outcome = run_simplex(&mut t, &mut basis, &mut r, &mut z, n_cols, &mut iters_left)?;
        debug_assert!(outcome, "phase 1 is bounded below by zero");
        let rhs_scale = b.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
        if z > 1e-9 * rhs_scale {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                objective: f64::NAN,
                x: Vec::new(),
                duals: Vec::new(),
            });
        }
        // Drive leftover artificials out of the basis where a nonzero pivot
        // exists; rows without one are redundant and keep the artificial at
        // level zero.
        for i in 0..m {
            if basis[i] >= art_start {
                if let Some(col) = (0..art_start).find(|&j| t[i][j].abs() > 1e-7) {
                    pivot(&mut t, &mut basis, &mut vec![0.0; n_cols], &mut 0.0, i, col);
                }
            }
        }
    }

    // Phase 2: rebuild reduced costs for the real objective, forbid
    // artificials from entering.
    let mut r = c_int.clone();
    let mut z = 0.0;
    for i in 0..m {
        let ck = c_int[basis[i]];
        if ck != 0.0 {
            for j in 0..n_cols {
                r[j] -= ck * t[i][j];
            }
            z += ck * t[i][n_cols];
        }
    }
    let bounded = run_simplex(&mut t, &mut basis, &mut r, &mut z, art_start, &mut iters_left)?;
    if !bounded {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            objective: f64::NAN,
            x: Vec::new(),
            duals: Vec::new(),
        });
    }

    // Recover the user-space solution.
    let mut x_int = vec![0.0; n_cols];
    for i in 0..m {
        x_int[basis[i]] = t[i][n_cols];
    }
    let x: Vec<f64> = maps
        .iter()
        .map(|map| match *map {
            VarMap::Shift { col, shift } => shift + x_int[col],
            VarMap::Negate { col, hi } => hi - x_int[col],
            VarMap::Split { pos, neg } => x_int[pos] - x_int[neg],
        })
        .collect();
    let objective: f64 = problem
        .objective
        .iter()
        .zip(&x)
        .map(|(cj, xj)| cj * xj)
        .sum();
    let duals: Vec<f64> = (0..m_user)
        .map(|i| sign * row_sign[i] * -r[dual_col[i]])
        .collect();

    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective,
        x,
        duals,
    })
}

/// Bland-rule simplex on an explicit tableau. Columns with index >=
/// `enter_limit` may not enter (used to bar artificials in phase 2). Returns
/// `Ok(true)` at optimality, `Ok(false)` if unbounded.
fn run_simplex(
    t: &mut [Vec<f64>],
    basis: &mut [usize],
    r: &mut [f64],
    z: &mut f64,
    enter_limit: usize,
    iters_left: &mut usize,
) -> Result<bool> {
    let m = t.len();
    let n_cols = r.len();
    loop {
        let Some(col) = (0..enter_limit).find(|&j| r[j] < -TOL_RC) else {
            return Ok(true);
        };
        // Ratio test; ties resolved toward the smallest basic index.
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..m {
            let aij = t[i][col];
            if aij > TOL_PIV {
                let ratio = t[i][n_cols].max(0.0) / aij;
                best = match best {
                    None => Some((ratio, basis[i], i)),
                    Some((br, _, _)) if ratio < br - 1e-9 * (1.0 + br.abs()) => {
                        Some((ratio, basis[i], i))
                    }
                    Some((br, bk, _))
                        if (ratio - br).abs() <= 1e-9 * (1.0 + br.abs()) && basis[i] < bk =>
                    {
                        Some((ratio, basis[i], i))
                    }
                    other => other,
                };
            }
        }
        let Some((_, _, row)) = best else {
            return Ok(false);
        };
        pivot(t, basis, r, z, row, col);
        *iters_left = iters_left
            .checked_sub(1)
            .filter(|&k| k > 0)
            .ok_or_else(|| {
                CoreError::Numerical("simplex exceeded its pivot budget".to_string())
            })?;
    }
}

/// Gauss-Jordan pivot on (row, col), updating the reduced-cost row alongside.
fn pivot(
    t: &mut [Vec<f64>],
    basis: &mut [usize],
    r: &mut [f64],
    z: &mut f64,
    row: usize,
    col: usize,
) {
    let m = t.len();
    let n_cols = r.len();
    let piv = t[row][col];
    for v in t[row].iter_mut() {
        *v /= piv;
    }
    t[row][col] = 1.0;
    for i in 0..m {
        if i == row {
            continue;
        }
        let f = t[i][col];
        if f != 0.0 {
            for j in 0..=n_cols {
                t[i][j] -= f * t[row][j];
            }
            t[i][col] = 0.0;
            // Roundoff can push a feasible rhs a hair negative.
            if t[i][n_cols] < 0.0 && t[i][n_cols] > -1e-10 {
                t[i][n_cols] = 0.0;
            }
        }
    }
    let f = r[col];
    if f != 0.0 {
        for j in 0..n_cols {
            r[j] -= f * t[row][j];
        }
        r[col] = 0.0;
        *z += f * t[row][n_cols];
    }
    basis[row] = col;
}

fn validate(p: &LpProblem) -> Result<()> {
    let n = p.objective.len();
    if p.bounds.len() != n {
        return Err(CoreError::InvalidInput(format!(
            "bounds length {} does not match {} variables",
            p.bounds.len(),
            n
        )));
    }
    if p.rows.len() != p.senses.len() || p.rows.len() != p.rhs.len() {
        return Err(CoreError::InvalidInput(format!(
            "rows/senses/rhs lengths disagree: {}/{}/{}",
            p.rows.len(),
            p.senses.len(),
            p.rhs.len()
        )));
    }
    for (i, row) in p.rows.iter().enumerate() {
        if row.len() != n {
            return Err(CoreError::InvalidInput(format!(
                "row {i} has {} coefficients, expected {n}",
                row.len()
            )));
        }
    }
    let finite = |v: f64| v.is_finite();
    if !p.objective.iter().copied().all(finite)
        || !p.rhs.iter().copied().all(finite)
        || !p.rows.iter().flatten().copied().all(finite)
    {
        return Err(CoreError::InvalidInput(
            "objective, rows, and rhs must be finite".to_string(),
        ));
    }
    for (j, &(lo, hi)) in p.bounds.iter().enumerate() {
        if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY
        {
            return Err(CoreError::InvalidInput(format!(
                "variable {j} has invalid bounds [{lo}, {hi}]"
            )));
        }
    }
    Ok(())
}
