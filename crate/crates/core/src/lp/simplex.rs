//! Dense revised simplex for `min cᵀx, Ax = b, x ≥ 0` where every column of
//! `A` is a 0/1 vector, as in transport polytopes.
//!
//! Two phases with one artificial per row. Pricing and the ratio test both
//! follow Bland's rule, so the method terminates on degenerate problems.
//! The basis inverse is kept explicitly and refactorized periodically.

use crate::error::{Error, Result};

/// Smallest admissible pivot magnitude.
pub const PIVOT_TOL: f64 = 1e-10;
/// Phase 1 objective above this means the system is infeasible.
const FEASIBILITY_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 64;

/// Column `j` has a 1 in each row listed in `columns[j]`.
pub struct UnitColumnLp<'a> {
    pub rows: usize,
    pub columns: &'a [Vec<usize>],
    pub costs: &'a [f64],
    pub rhs: &'a [f64],
}

#[derive(Debug)]
pub enum SimplexOutcome {
    Optimal(SimplexSolution),
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct SimplexSolution {
    /// `(column, value)` for structural basic variables.
    pub basic: Vec<(usize, f64)>,
    /// Row duals `y` with `c_j − yᵀa_j ≥ 0` at optimality.
    pub duals: Vec<f64>,
    pub iterations: usize,
}

struct State<'a> {
    lp: &'a UnitColumnLp<'a>,
    /// `basis[p]` is a column index; `≥ n_cols` means artificial `basis[p] − n_cols`.
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    binv: Vec<f64>,
    x: Vec<f64>,
    iterations: usize,
}

impl<'a> State<'a> {
    fn new(lp: &'a UnitColumnLp<'a>) -> Self {
        let r = lp.rows;
        let n = lp.columns.len();
        let mut binv = vec![0.0; r * r];
        for i in 0..r {
            binv[i * r + i] = 1.0;
        }
        Self {
            lp,
            basis: (n..n + r).collect(),
            in_basis: vec![false; n],
            binv,
            x: lp.rhs.to_vec(),
            iterations: 0,
        }
    }

    fn n_cols(&self) -> usize {
        self.lp.columns.len()
    }

    fn is_artificial(&self, var: usize) -> bool {
        var >= self.n_cols()
    }

    /// `y = c_Bᵀ B⁻¹`.
    fn duals(&self, cost_of: &impl Fn(usize) -> f64) -> Vec<f64> {
        let r = self.lp.rows;
        let mut y = vec![0.0; r];
        for (p, &var) in self.basis.iter().enumerate() {
            let c = cost_of(var);
            if c != 0.0 {
                let row = &self.binv[p * r..(p + 1) * r];
                for (yk, b) in y.iter_mut().zip(row) {
                    *yk += c * b;
                }
            }
        }
        y
    }

    /// `B⁻¹ a_j`.
    fn column(&self, j: usize) -> Vec<f64> {
        let r = self.lp.rows;
        let mut alpha = vec![0.0; r];
        for &row in &self.lp.columns[j] {
            for (p, a) in alpha.iter_mut().enumerate() {
                *a += self.binv[p * r + row];
            }
        }
        alpha
    }

    fn pivot(&mut self, p: usize, j: usize, alpha: &[f64]) {
        let r = self.lp.rows;
        let theta = self.x[p].max(0.0) / alpha[p];
        for (i, xi) in self.x.iter_mut().enumerate() {
            if i != p {
                *xi -= theta * alpha[i];
            }
        }
        self.x[p] = theta;
        let inv = 1.0 / alpha[p];
        for k in 0..r {
            self.binv[p * r + k] *= inv;
        }
        let (before, rest) = self.binv.split_at_mut(p * r);
        let (prow, after) = rest.split_at_mut(r);
        for (i, row) in before
            .chunks_exact_mut(r)
            .enumerate()
            .chain(after.chunks_exact_mut(r).enumerate().map(|(i, c)| (i + p + 1, c)))
        {
            let f = alpha[i];
            if f != 0.0 {
                for (b, pb) in row.iter_mut().zip(prow.iter()) {
                    *b -= f * pb;
                }
            }
        }
        let leaving = self.basis[p];
        if !self.is_artificial(leaving) {
            self.in_basis[leaving] = false;
        }
        self.basis[p] = j;
        self.in_basis[j] = true;
        self.iterations += 1;
        if self.iterations.is_multiple_of(REFACTOR_EVERY) {
            // a failed refactorization keeps the updated inverse
            let _ = self.refactor();
        }
    }

    /// Rebuilds `B⁻¹` by Gauss–Jordan elimination and recomputes `x_B`.
    fn refactor(&mut self) -> Result<()> {
        let r = self.lp.rows;
        let mut b = vec![0.0f64; r * r];
        for (p, &var) in self.basis.iter().enumerate() {
            if self.is_artificial(var) {
                b[(var - self.n_cols()) * r + p] = 1.0;
            } else {
                for &row in &self.lp.columns[var] {
                    b[row * r + p] = 1.0;
                }
            }
        }
        let mut inv = vec![0.0f64; r * r];
        for i in 0..r {
            inv[i * r + i] = 1.0;
        }
        for k in 0..r {
            let piv = (k..r)
                .max_by(|&i, &j| b[i * r + k].abs().total_cmp(&b[j * r + k].abs()))
                .unwrap();
            if b[piv * r + k].abs() < PIVOT_TOL {
                return Err(Error::Numerical("singular basis".into()));
            }
            if piv != k {
                for c in 0..r {
                    b.swap(k * r + c, piv * r + c);
                    inv.swap(k * r + c, piv * r + c);
                }
            }
            let d = 1.0 / b[k * r + k];
            for c in 0..r {
                b[k * r + c] *= d;
                inv[k * r + c] *= d;
            }
            for i in 0..r {
                if i == k {
                    continue;
                }
                let f = b[i * r + k];
                if f != 0.0 {
                    for c in 0..r {
                        b[i * r + c] -= f * b[k * r + c];
                        inv[i * r + c] -= f * inv[k * r + c];
                    }
                }
            }
        }
        self.binv = inv;
        for p in 0..r {
            self.x[p] = (0..r).map(|k| self.binv[p * r + k] * self.lp.rhs[k]).sum();
        }
        Ok(())
    }

    /// Runs Bland's-rule simplex iterations with the given objective.
    fn optimize(&mut self, cost_of: impl Fn(usize) -> f64, opt_tol: f64, max_iter: usize) -> Result<()> {
        loop {
            if self.iterations >= max_iter {
                return Err(Error::Numerical(format!(
                    "iteration limit {max_iter} reached"
                )));
            }
            let y = self.duals(&cost_of);
            // lowest-index improving column
            let entering = (0..self.n_cols()).find(|&j| {
                !self.in_basis[j] && {
                    let d: f64 = cost_of(j) - self.lp.columns[j].iter().map(|&r| y[r]).sum::<f64>();
                    d < -opt_tol
                }
            });
            let Some(j) = entering else {
                return Ok(());
            };
            let alpha = self.column(j);
            let min_ratio = alpha
                .iter()
                .zip(&self.x)
                .filter(|(&a, _)| a > PIVOT_TOL)
                .map(|(&a, &x)| x.max(0.0) / a)
                .fold(f64::INFINITY, f64::min);
            if min_ratio.is_infinite() {
                return Err(Error::Numerical("unbounded direction in a bounded polytope".into()));
            }
            // among tied rows, the basic variable with the lowest index leaves
            let p = (0..alpha.len())
                .filter(|&p| alpha[p] > PIVOT_TOL && self.x[p].max(0.0) / alpha[p] <= min_ratio + 1e-12)
                .min_by_key(|&p| self.basis[p])
                .unwrap();
            self.pivot(p, j, &alpha);
        }
    }
}

/// Solves the LP. `opt_tol` is the reduced-cost tolerance.
pub fn solve(lp: &UnitColumnLp<'_>, opt_tol: f64) -> Result<SimplexOutcome> {
    let r = lp.rows;
    let n = lp.columns.len();
    if lp.rhs.len() != r || lp.costs.len() != n {
        return Err(Error::DimensionMismatch("LP data sizes disagree".into()));
    }
    if lp.rhs.iter().any(|&b| b < 0.0) {
        return Err(Error::Numerical("negative right-hand side".into()));
    }
    let max_iter = 50 * (n + r) + 10_000;
    let mut st = State::new(lp);

    // phase 1: minimize the sum of artificials
    st.optimize(|v| if v >= n { 1.0 } else { 0.0 }, 1e-12, max_iter)?;
    st.refactor()?;
    let infeasibility: f64 = st
        .basis
        .iter()
        .zip(&st.x)
        .filter(|(&v, _)| v >= n)
        .map(|(_, &x)| x.max(0.0))
        .sum();
    if infeasibility > FEASIBILITY_TOL {
        return Ok(SimplexOutcome::Infeasible);
    }

    // drive zero-level artificials out where a structural pivot exists;
    // rows where none exists are redundant and keep their artificial
    for p in 0..r {
        if st.basis[p] < n {
            continue;
        }
        let rr = st.lp.rows;
        let candidate = (0..n).find(|&j| {
            !st.in_basis[j]
                && st.lp.columns[j]
                    .iter()
                    .map(|&row| st.binv[p * rr + row])
                    .sum::<f64>()
                    .abs()
                    > 1e-7
        });
        if let Some(j) = candidate {
            let alpha = st.column(j);
            st.x[p] = 0.0;
            st.pivot(p, j, &alpha);
        }
    }
    st.refactor()?;
    for x in st.x.iter_mut() {
        if *x < 0.0 && *x > -FEASIBILITY_TOL {
            *x = 0.0;
        }
    }

    // phase 2: artificials have zero cost and never re-enter
    st.optimize(|v| if v >= n { 0.0 } else { lp.costs[v] }, opt_tol, max_iter)?;
    st.refactor()?;
    let duals = st.duals(&|v| if v >= n { 0.0 } else { lp.costs[v] });
    let basic = st
        .basis
        .iter()
        .zip(&st.x)
        .filter(|(&v, _)| v < n)
        .map(|(&v, &x)| (v, x))
        .collect();
    Ok(SimplexOutcome::Optimal(SimplexSolution {
        basic,
        duals,
        iterations: st.iterations,
    }))
}
