//! Linear programming with exact primal and dual solutions.
//!
//! Problems are kept in the split form
//!
//! ```text
//!     minimize    c'x
//!     subject to  A x  = b        (equality block, duals u)
//!                 H x >= g        (inequality block, duals y >= 0)
//!                 lower <= x <= upper
//! ```
//!
//! Rows added with [`LpProblem::add_le`] are negated into the canonical `>=`
//! block; the original orientation is remembered so duals can be reported
//! either way. The solver is a two-phase revised simplex with bounded
//! variables ([`simplex`]); it reports row duals, bound duals (reduced
//! costs), and a residual report, and detects infeasibility via the phase-1
//! objective.

mod simplex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Semantic tag for a row, used by model builders to find rows back
/// (e.g. Kirchhoff rows when assembling infeasibility certificates).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowLabel {
    /// Power balance at a bus.
    Balance(usize),
    /// Flow/angle coupling of a branch.
    Kirchhoff(usize),
    /// Flow capacity row of a branch.
    FlowBound(usize),
    /// Generator output row.
    GenBound(usize),
    /// Switching disjunction row of a branch.
    BigM(usize),
    /// Capacity/switch coupling row of a branch.
    Coupling(usize),
    /// Limit on the number of switched-off branches.
    Cardinality,
    /// Certificate normalization row.
    Normalization,
    /// Anything else.
    Generic,
}

/// One sparse row: `(column, coefficient)` pairs, unordered but unique.
#[derive(Clone, Debug)]
pub struct SparseRow<S>(pub Vec<(usize, S)>);

/// A block of rows sharing one relation (`=` or canonical `>=`).
#[derive(Clone, Debug, Default)]
pub struct RowBlock<S> {
    pub rows: Vec<SparseRow<S>>,
    pub rhs: Vec<S>,
    pub labels: Vec<RowLabel>,
    /// True where the user supplied the row as `<=` and it was negated.
    pub flipped: Vec<bool>,
}

impl<S: Scalar> RowBlock<S> {
    fn push(&mut self, coeffs: Vec<(usize, S)>, rhs: S, label: RowLabel, flipped: bool) -> usize {
        self.rows.push(SparseRow(coeffs));
        self.rhs.push(rhs);
        self.labels.push(label);
        self.flipped.push(flipped);
        self.rows.len() - 1
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Solver status of an LP.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Residuals of a returned solution, measured against the original problem.
#[derive(Clone, Copy, Debug, Default)]
pub struct Residuals<S> {
    /// Largest violation of any row or bound (absolute).
    pub primal: S,
    /// Largest violation of dual feasibility / complementary slackness
    /// in the reduced costs (absolute).
    pub dual: S,
    /// `|c'x - dual objective|`, relative to `1 + |c'x|`.
    pub gap: S,
}

/// Primal/dual solution of an [`LpProblem`].
///
/// On `Infeasible`, `x` is the final phase-1 point, `objective` is the
/// residual infeasibility measure, and the duals are the phase-1 multipliers
/// (an infeasibility certificate direction).
#[derive(Clone, Debug)]
pub struct LpSolution<S> {
    pub status: LpStatus,
    pub x: Vec<S>,
    /// Duals of the equality block, in insertion order.
    pub eq_duals: Vec<S>,
    /// Duals of the canonical `>=` block, in insertion order. Nonnegative at
    /// optimality up to tolerance.
    pub ineq_duals: Vec<S>,
    /// Reduced costs of the structural variables (duals of active bounds).
    pub bound_duals: Vec<S>,
    pub objective: S,
    pub residuals: Residuals<S>,
    /// Simplex iterations spent (both phases).
    pub iterations: usize,
}

/// Tolerances and limits for the simplex.
#[derive(Clone, Copy, Debug)]
pub struct SolverOptions<S> {
    /// Row/bound feasibility tolerance (phase-1 acceptance).
    pub feas_tol: S,
    /// Reduced-cost optimality tolerance.
    pub opt_tol: S,
    /// Pivots smaller than this are treated as zero.
    pub zero_pivot: S,
    /// Iterations without objective progress before Bland's rule engages.
    pub stall_iters: usize,
    /// Hard iteration cap; 0 means `10_000 + 200 * (rows + cols)`.
    pub max_iters: usize,
    /// Basis inverse is rebuilt from scratch every this many pivots.
    pub refactor_every: usize,
}

impl<S: Scalar> Default for SolverOptions<S> {
    fn default() -> Self {
        SolverOptions {
            feas_tol: S::val(1e-7),
            opt_tol: S::val(1e-9),
            zero_pivot: S::val(1e-10),
            stall_iters: 100,
            max_iters: 0,
            refactor_every: 64,
        }
    }
}

#[derive(Debug, Error)]
pub enum LpError {
    #[error("column {0} out of range for {1} variables")]
    BadColumn(usize, usize),
    #[error("variable {0} has empty bound range")]
    EmptyBounds(usize),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// KKT check report; see [`LpProblem::check_kkt`].
#[derive(Clone, Copy, Debug)]
pub struct KktReport<S> {
    pub max_primal_violation: S,
    pub max_dual_violation: S,
    pub duality_gap: S,
}

/// A linear program in split equality/inequality form with variable bounds.
#[derive(Clone, Debug, Default)]
pub struct LpProblem<S> {
    num_vars: usize,
    c: Vec<S>,
    lower: Vec<S>,
    upper: Vec<S>,
    pub eq: RowBlock<S>,
    pub ineq: RowBlock<S>,
}

impl<S: Scalar> LpProblem<S> {
    /// A problem with `num_vars` variables, zero objective, and default
    /// bounds `[0, +inf)`.
    pub fn new(num_vars: usize) -> Self {
        LpProblem {
            num_vars,
            c: vec![S::zero(); num_vars],
            lower: vec![S::zero(); num_vars],
            upper: vec![S::infinity(); num_vars],
            eq: RowBlock::default(),
            ineq: RowBlock::default(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn objective(&self) -> &[S] {
        &self.c
    }

    pub fn set_objective(&mut self, j: usize, cost: S) {
        self.c[j] = cost;
    }

    /// Sets `lower <= x_j <= upper`; use infinities to open a side.
    pub fn set_bounds(&mut self, j: usize, lower: S, upper: S) {
        self.lower[j] = lower;
        self.upper[j] = upper;
    }

    /// Marks `x_j` free in both directions.
    pub fn set_free(&mut self, j: usize) {
        self.set_bounds(j, S::neg_infinity(), S::infinity());
    }

    pub fn bounds(&self, j: usize) -> (S, S) {
        (self.lower[j], self.upper[j])
    }

    pub fn lower_bounds(&self) -> &[S] {
        &self.lower
    }

    pub fn upper_bounds(&self) -> &[S] {
        &self.upper
    }

    fn check_coeffs(&self, coeffs: &[(usize, S)]) -> Result<(), LpError> {
        for &(j, _) in coeffs {
            if j >= self.num_vars {
                return Err(LpError::BadColumn(j, self.num_vars));
            }
        }
        Ok(())
    }

    /// Adds `coeffs . x = rhs`; returns the row's index in the equality block.
    pub fn add_eq(
        &mut self,
        coeffs: Vec<(usize, S)>,
        rhs: S,
        label: RowLabel,
    ) -> Result<usize, LpError> {
        self.check_coeffs(&coeffs)?;
        Ok(self.eq.push(coeffs, rhs, label, false))
    }

    /// Adds `coeffs . x >= rhs`; returns the row's index in the inequality block.
    pub fn add_ge(
        &mut self,
        coeffs: Vec<(usize, S)>,
        rhs: S,
        label: RowLabel,
    ) -> Result<usize, LpError> {
        self.check_coeffs(&coeffs)?;
        Ok(self.ineq.push(coeffs, rhs, label, false))
    }

    /// Adds `coeffs . x <= rhs`, stored negated as a `>=` row. The returned
    /// index refers to the canonical row; [`Self::oriented_ineq_dual`] maps
    /// its dual back to the `<=` orientation.
    pub fn add_le(
        &mut self,
        coeffs: Vec<(usize, S)>,
        rhs: S,
        label: RowLabel,
    ) -> Result<usize, LpError> {
        self.check_coeffs(&coeffs)?;
        let neg: Vec<(usize, S)> = coeffs.into_iter().map(|(j, a)| (j, -a)).collect();
        Ok(self.ineq.push(neg, -rhs, label, true))
    }

    /// Dual of inequality row `r` in the orientation the row was added with:
    /// for a `<=` row this is the negated canonical dual (nonpositive at
    /// optimality), for a `>=` row the canonical dual itself.
    pub fn oriented_ineq_dual(&self, sol: &LpSolution<S>, r: usize) -> S {
        if self.ineq.flipped[r] {
            -sol.ineq_duals[r]
        } else {
            sol.ineq_duals[r]
        }
    }

    /// Solves with the problem's own bounds.
    pub fn solve(&self, opts: &SolverOptions<S>) -> Result<LpSolution<S>, LpError> {
        self.solve_with_bounds(&self.lower, &self.upper, opts)
    }

    /// Solves with overridden variable bounds (used by branch-and-bound to
    /// fix binaries without cloning the problem).
    pub fn solve_with_bounds(
        &self,
        lower: &[S],
        upper: &[S],
        opts: &SolverOptions<S>,
    ) -> Result<LpSolution<S>, LpError> {
        for j in 0..self.num_vars {
            if lower[j] > upper[j] {
                return Err(LpError::EmptyBounds(j));
            }
        }
        let mut sol = simplex::solve(self, lower, upper, opts)?;
        sol.residuals = self.residuals(&sol, lower, upper);
        Ok(sol)
    }

    /// Evaluates `c'x` for an arbitrary point.
    pub fn objective_value(&self, x: &[S]) -> S {
        self.c.iter().zip(x).map(|(&c, &v)| c * v).sum()
    }

    fn row_activity(row: &SparseRow<S>, x: &[S]) -> S {
        row.0.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// KKT residuals of a claimed solution against this problem.
    ///
    /// Primal: worst row/bound violation. Dual: worst reduced-cost sign
    /// violation given the activity pattern, plus `y >= 0`. Gap: relative
    /// primal/dual objective mismatch, with active-bound terms included in
    /// the dual objective.
    pub fn check_kkt(&self, sol: &LpSolution<S>) -> KktReport<S> {
        let res = self.residuals(sol, &self.lower, &self.upper);
        KktReport {
            max_primal_violation: res.primal,
            max_dual_violation: res.dual,
            duality_gap: res.gap,
        }
    }

    fn residuals(&self, sol: &LpSolution<S>, lower: &[S], upper: &[S]) -> Residuals<S> {
        if sol.status != LpStatus::Optimal {
            // Residuals are only meaningful for claimed-optimal points; report
            // the primal violation so infeasible outcomes stay inspectable.
            let mut primal = S::zero();
            for (row, &rhs) in self.eq.rows.iter().zip(&self.eq.rhs) {
                primal = primal.max((Self::row_activity(row, &sol.x) - rhs).abs());
            }
            for (row, &rhs) in self.ineq.rows.iter().zip(&self.ineq.rhs) {
                primal = primal.max(rhs - Self::row_activity(row, &sol.x));
            }
            return Residuals { primal, dual: S::zero(), gap: S::zero() };
        }

        let x = &sol.x;
        let mut primal = S::zero();
        for (row, &rhs) in self.eq.rows.iter().zip(&self.eq.rhs) {
            primal = primal.max((Self::row_activity(row, x) - rhs).abs());
        }
        for (row, &rhs) in self.ineq.rows.iter().zip(&self.ineq.rhs) {
            primal = primal.max(rhs - Self::row_activity(row, x));
        }
        for j in 0..self.num_vars {
            primal = primal.max(lower[j] - x[j]).max(x[j] - upper[j]);
        }

        // Reduced costs from the reported duals must match bound activity.
        let mut z = self.c.clone();
        for (i, row) in self.eq.rows.iter().enumerate() {
            for &(j, a) in &row.0 {
                z[j] -= sol.eq_duals[i] * a;
            }
        }
        for (i, row) in self.ineq.rows.iter().enumerate() {
            for &(j, a) in &row.0 {
                z[j] -= sol.ineq_duals[i] * a;
            }
        }
        let btol = S::val(1e-7);
        let mut dual = S::zero();
        for &y in &sol.ineq_duals {
            dual = dual.max(-y);
        }
        for j in 0..self.num_vars {
            let at_lower = lower[j].is_finite() && (x[j] - lower[j]).abs() <= btol;
            let at_upper = upper[j].is_finite() && (upper[j] - x[j]).abs() <= btol;
            let v = if at_lower && at_upper {
                S::zero() // fixed variable: any reduced cost is dual feasible
            } else if at_lower {
                (-z[j]).max(S::zero())
            } else if at_upper {
                z[j].max(S::zero())
            } else {
                z[j].abs()
            };
            dual = dual.max(v);
        }
        // Complementary slackness on rows: y_r > 0 only where the row binds.
        for (i, row) in self.ineq.rows.iter().enumerate() {
            let slack = Self::row_activity(row, x) - self.ineq.rhs[i];
            dual = dual.max(sol.ineq_duals[i].abs().min(slack.abs()));
        }

        // Dual objective with active-bound contributions.
        let mut dual_obj = S::zero();
        for (i, &b) in self.eq.rhs.iter().enumerate() {
            dual_obj += sol.eq_duals[i] * b;
        }
        for (i, &g) in self.ineq.rhs.iter().enumerate() {
            dual_obj += sol.ineq_duals[i] * g;
        }
        for j in 0..self.num_vars {
            let zj = sol.bound_duals[j];
            if zj > S::zero() && lower[j].is_finite() {
                dual_obj += zj * lower[j];
            } else if zj < S::zero() && upper[j].is_finite() {
                dual_obj += zj * upper[j];
            }
        }
        let pobj = self.objective_value(x);
        let gap = (pobj - dual_obj).abs() / (S::one() + pobj.abs());

        Residuals { primal, dual, gap }
    }

    /// Renders the problem as a fixed-format MPS file (debug aid for
    /// cross-checking against external solvers). Rows are exported in the
    /// canonical orientation the solver sees: `E` rows then `G` rows.
    pub fn to_mps(&self, name: &str) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(s, "NAME          {}", name);
        let _ = writeln!(s, "ROWS");
        let _ = writeln!(s, " N  OBJ");
        for i in 0..self.eq.len() {
            let _ = writeln!(s, " E  E{}", i);
        }
        for i in 0..self.ineq.len() {
            let _ = writeln!(s, " G  G{}", i);
        }
        let _ = writeln!(s, "COLUMNS");
        for j in 0..self.num_vars {
            let var = format!("X{}", j);
            let mut entries: Vec<(String, S)> = Vec::new();
            if self.c[j] != S::zero() {
                entries.push(("OBJ".to_string(), self.c[j]));
            }
            for (i, row) in self.eq.rows.iter().enumerate() {
                for &(col, a) in &row.0 {
                    if col == j {
                        entries.push((format!("E{}", i), a));
                    }
                }
            }
            for (i, row) in self.ineq.rows.iter().enumerate() {
                for &(col, a) in &row.0 {
                    if col == j {
                        entries.push((format!("G{}", i), a));
                    }
                }
            }
            for pair in entries.chunks(2) {
                let _ = write!(s, "    {:<10}", var);
                for (rname, a) in pair {
                    let _ = write!(s, "{:<10}{:<12}", rname, format!("{}", a));
                }
                let _ = writeln!(s);
            }
        }
        let _ = writeln!(s, "RHS");
        for (i, &b) in self.eq.rhs.iter().enumerate() {
            if b != S::zero() {
                let _ = writeln!(s, "    RHS       {:<10}{:<12}", format!("E{}", i), format!("{}", b));
            }
        }
        for (i, &g) in self.ineq.rhs.iter().enumerate() {
            if g != S::zero() {
                let _ = writeln!(s, "    RHS       {:<10}{:<12}", format!("G{}", i), format!("{}", g));
            }
        }
        let _ = writeln!(s, "BOUNDS");
        for j in 0..self.num_vars {
            let lo = self.lower[j];
            let hi = self.upper[j];
            let var = format!("X{}", j);
            if lo == hi {
                let _ = writeln!(s, " FX BND       {:<10}{:<12}", var, format!("{}", lo));
                continue;
            }
            if lo.is_infinite() && hi.is_infinite() {
                let _ = writeln!(s, " FR BND       {}", var);
                continue;
            }
            if lo.is_infinite() {
                let _ = writeln!(s, " MI BND       {}", var);
            } else if lo != S::zero() {
                let _ = writeln!(s, " LO BND       {:<10}{:<12}", var, format!("{}", lo));
            }
            if hi.is_finite() {
                let _ = writeln!(s, " UP BND       {:<10}{:<12}", var, format!("{}", hi));
            }
        }
        let _ = writeln!(s, "ENDATA");
        s
    }
}
