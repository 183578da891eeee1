//! Two-phase revised simplex over bounded variables.
//!
//! Phase 1 minimizes the sum of one artificial variable per row starting
//! from all structural/surplus variables at their bound nearest zero; a
//! positive phase-1 optimum is an infeasibility proof. Phase 2 minimizes the
//! real objective with artificials pinned to zero. The basis inverse is kept
//! dense and product-form updated, with periodic refactorization. Entering
//! variables are picked by largest reduced-cost violation (ties to the
//! lowest index); after `stall_iters` iterations without objective progress
//! the pricing switches to Bland's rule for the rest of the solve.

use super::{LpError, LpProblem, LpSolution, LpStatus, Residuals, SolverOptions};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
enum VarState {
    Basic(usize),
    AtLower,
    AtUpper,
    /// Nonbasic free variable, held at zero.
    Free,
}

#[derive(Clone, Copy, PartialEq)]
enum Phase {
    One,
    Two,
}

enum StepResult {
    Optimal,
    Unbounded,
}

struct Work<'a, S> {
    m: usize,
    n_struct: usize,
    /// Structural + surplus count; artificials sit at indices `>= n_real`.
    n_real: usize,
    cols: Vec<Vec<(usize, S)>>,
    rhs: Vec<S>,
    lower: Vec<S>,
    upper: Vec<S>,
    cost: Vec<S>,
    basis: Vec<usize>,
    state: Vec<VarState>,
    x: Vec<S>,
    /// Dense basis inverse, row-major `m * m`.
    binv: Vec<S>,
    opts: &'a SolverOptions<S>,
    bland: bool,
    stall: usize,
    iterations: usize,
    max_iters: usize,
    pivots_since_refactor: usize,
    phase_obj: S,
}

pub(super) fn solve<S: Scalar>(
    p: &LpProblem<S>,
    lower: &[S],
    upper: &[S],
    opts: &SolverOptions<S>,
) -> Result<LpSolution<S>, LpError> {
    let me = p.eq.len();
    let mi = p.ineq.len();
    let m = me + mi;
    let n_struct = p.num_vars();
    let n_real = n_struct + mi;
    let n_total = n_real + m;

    // Column-major matrix: structural columns from both blocks, then one
    // surplus column per inequality row (H x - s = g), then artificials.
    let mut cols: Vec<Vec<(usize, S)>> = vec![Vec::new(); n_total];
    for (i, row) in p.eq.rows.iter().enumerate() {
        for &(j, a) in &row.0 {
            cols[j].push((i, a));
        }
    }
    for (i, row) in p.ineq.rows.iter().enumerate() {
        for &(j, a) in &row.0 {
            cols[j].push((me + i, a));
        }
    }
    for i in 0..mi {
        cols[n_struct + i].push((me + i, -S::one()));
    }

    let mut rhs = p.eq.rhs.clone();
    rhs.extend_from_slice(&p.ineq.rhs);

    let mut lo = lower.to_vec();
    let mut hi = upper.to_vec();
    lo.extend(std::iter::repeat(S::zero()).take(mi + m));
    hi.extend(std::iter::repeat(S::infinity()).take(mi + m));

    // Nonbasic start: every real variable at its finite bound nearest zero,
    // free variables at zero.
    let mut state = Vec::with_capacity(n_total);
    let mut x = vec![S::zero(); n_total];
    for j in 0..n_real {
        let (l, u) = (lo[j], hi[j]);
        let (st, v) = if l.is_finite() && u.is_finite() {
            if u.abs() < l.abs() { (VarState::AtUpper, u) } else { (VarState::AtLower, l) }
        } else if l.is_finite() {
            (VarState::AtLower, l)
        } else if u.is_finite() {
            (VarState::AtUpper, u)
        } else {
            (VarState::Free, S::zero())
        };
        state.push(st);
        x[j] = v;
    }

    // Artificials pick up the initial row residuals with a sign making them
    // nonnegative; the starting basis inverse is the matching sign matrix.
    let mut resid = rhs.clone();
    for j in 0..n_real {
        if x[j] != S::zero() {
            for &(r, a) in &cols[j] {
                resid[r] -= a * x[j];
            }
        }
    }
    let mut binv = vec![S::zero(); m * m];
    let mut basis = Vec::with_capacity(m);
    for r in 0..m {
        let sign = if resid[r] >= S::zero() { S::one() } else { -S::one() };
        cols[n_real + r].push((r, sign));
        basis.push(n_real + r);
        state.push(VarState::Basic(r));
        x[n_real + r] = resid[r] * sign;
        binv[r * m + r] = sign;
    }

    let mut cost = vec![S::zero(); n_total];
    for j in n_real..n_total {
        cost[j] = S::one();
    }

    let max_iters = if opts.max_iters == 0 { 10_000 + 200 * (m + n_real) } else { opts.max_iters };
    let phase_obj = (0..m).map(|r| x[basis[r]]).sum();
    let mut w = Work {
        m,
        n_struct,
        n_real,
        cols,
        rhs,
        lower: lo,
        upper: hi,
        cost,
        basis,
        state,
        x,
        binv,
        opts,
        bland: false,
        stall: 0,
        iterations: 0,
        max_iters,
        pivots_since_refactor: 0,
        phase_obj,
    };

    match w.iterate(Phase::One)? {
        StepResult::Unbounded => {
            return Err(LpError::Numerical("phase-1 objective unbounded".into()));
        }
        StepResult::Optimal => {}
    }

    let infeas: S = (n_real..n_total).map(|j| w.x[j].max(S::zero())).sum();
    if infeas > opts.feas_tol {
        return Ok(w.extract(me, LpStatus::Infeasible, infeas));
    }

    // Pin artificials and clear basic ones out where a real pivot exists;
    // rows with no eligible pivot are redundant and keep their (zero-valued)
    // artificial in the basis.
    for j in w.n_real..n_total {
        w.upper[j] = S::zero();
        if !matches!(w.state[j], VarState::Basic(_)) {
            w.state[j] = VarState::AtLower;
            w.x[j] = S::zero();
        }
    }
    w.evict_basic_artificials()?;

    for j in 0..n_total {
        w.cost[j] = if j < n_struct { p.objective()[j] } else { S::zero() };
    }
    w.bland = false;
    w.stall = 0;
    w.phase_obj = (0..n_total).map(|j| w.cost[j] * w.x[j]).sum();

    let status = match w.iterate(Phase::Two)? {
        StepResult::Optimal => LpStatus::Optimal,
        StepResult::Unbounded => LpStatus::Unbounded,
    };
    let obj = (0..n_struct).map(|j| p.objective()[j] * w.x[j]).sum();
    Ok(w.extract(me, status, obj))
}

impl<'a, S: Scalar> Work<'a, S> {
    fn iterate(&mut self, phase: Phase) -> Result<StepResult, LpError> {
        loop {
            if self.iterations >= self.max_iters {
                return Err(LpError::Numerical(format!(
                    "iteration limit {} reached (anti-cycling exhausted)",
                    self.max_iters
                )));
            }
            self.iterations += 1;

            let pi = self.multipliers();
            let Some((enter, d)) = self.price(&pi) else {
                return Ok(StepResult::Optimal);
            };
            let dir = match self.state[enter] {
                VarState::AtLower => S::one(),
                VarState::AtUpper => -S::one(),
                VarState::Free => {
                    if d < S::zero() { S::one() } else { -S::one() }
                }
                VarState::Basic(_) => unreachable!("basic variable priced"),
            };
            let wcol = self.ftran(enter);

            let span = self.upper[enter] - self.lower[enter];
            let mut t = if span.is_finite() { span } else { S::infinity() };
            let mut block: Option<usize> = None; // row index; None with finite t = bound flip
            for r in 0..self.m {
                let step = -dir * wcol[r];
                if step.abs() <= self.opts.zero_pivot {
                    continue;
                }
                let bv = self.basis[r];
                let limit = if step > S::zero() {
                    if !self.upper[bv].is_finite() {
                        continue;
                    }
                    (self.upper[bv] - self.x[bv]) / step
                } else {
                    if !self.lower[bv].is_finite() {
                        continue;
                    }
                    (self.lower[bv] - self.x[bv]) / step
                }
                .max(S::zero());
                let replace = match block {
                    _ if limit < t => true,
                    Some(r0) if limit == t => self.basis[r] < self.basis[r0],
                    _ => false,
                };
                if replace {
                    t = limit;
                    block = Some(r);
                }
            }

            if t.is_infinite() {
                return Ok(match phase {
                    Phase::One => {
                        return Err(LpError::Numerical("phase-1 ratio test found no blocker".into()))
                    }
                    Phase::Two => StepResult::Unbounded,
                });
            }

            // Objective progress bookkeeping drives the anti-cycling switch.
            let gain = d.abs() * t;
            self.phase_obj -= gain;
            if gain <= S::val(1e-12) * (S::one() + self.phase_obj.abs()) {
                self.stall += 1;
                if self.stall > self.opts.stall_iters {
                    self.bland = true;
                }
            } else {
                self.stall = 0;
            }

            let delta = dir * t;
            self.x[enter] += delta;
            if delta != S::zero() {
                for r in 0..self.m {
                    if wcol[r] != S::zero() {
                        let bv = self.basis[r];
                        self.x[bv] -= wcol[r] * delta;
                    }
                }
            }

            match block {
                None => {
                    // Bound flip: no basis change.
                    self.state[enter] = match self.state[enter] {
                        VarState::AtLower => VarState::AtUpper,
                        VarState::AtUpper => VarState::AtLower,
                        other => other,
                    };
                    let snapped = match self.state[enter] {
                        VarState::AtLower => self.lower[enter],
                        VarState::AtUpper => self.upper[enter],
                        _ => self.x[enter],
                    };
                    self.x[enter] = snapped;
                }
                Some(r) => {
                    let leave = self.basis[r];
                    let step = -dir * wcol[r];
                    self.state[leave] = if step > S::zero() { VarState::AtUpper } else { VarState::AtLower };
                    self.x[leave] = match self.state[leave] {
                        VarState::AtUpper => self.upper[leave],
                        _ => self.lower[leave],
                    };
                    self.basis[r] = enter;
                    self.state[enter] = VarState::Basic(r);
                    self.eta_update(r, &wcol)?;
                }
            }
        }
    }

    /// Row multipliers for the current phase costs: `pi = c_B' B^-1`.
    fn multipliers(&self) -> Vec<S> {
        let mut pi = vec![S::zero(); self.m];
        for r in 0..self.m {
            let cb = self.cost[self.basis[r]];
            if cb != S::zero() {
                let row = &self.binv[r * self.m..(r + 1) * self.m];
                for i in 0..self.m {
                    pi[i] += cb * row[i];
                }
            }
        }
        pi
    }

    fn reduced_cost(&self, j: usize, pi: &[S]) -> S {
        let mut d = self.cost[j];
        for &(r, a) in &self.cols[j] {
            d -= pi[r] * a;
        }
        d
    }

    /// Entering-variable selection. Returns `(index, reduced cost)`.
    fn price(&self, pi: &[S]) -> Option<(usize, S)> {
        let tol = self.opts.opt_tol;
        let mut best: Option<(usize, S, S)> = None; // (j, d, merit)
        for j in 0..self.cols.len() {
            if self.lower[j] == self.upper[j] {
                continue; // fixed (includes pinned artificials)
            }
            let merit = match self.state[j] {
                VarState::Basic(_) => continue,
                VarState::AtLower => {
                    let d = self.reduced_cost(j, pi);
                    if d < -tol {
                        -d
                    } else {
                        continue;
                    }
                }
                VarState::AtUpper => {
                    let d = self.reduced_cost(j, pi);
                    if d > tol {
                        d
                    } else {
                        continue;
                    }
                }
                VarState::Free => {
                    let d = self.reduced_cost(j, pi);
                    if d.abs() > tol {
                        d.abs()
                    } else {
                        continue;
                    }
                }
            };
            let d = self.reduced_cost(j, pi);
            if self.bland {
                return Some((j, d)); // smallest index wins outright
            }
            match best {
                Some((_, _, m0)) if merit <= m0 => {}
                _ => best = Some((j, d, merit)),
            }
        }
        best.map(|(j, d, _)| (j, d))
    }

    /// `B^-1 a_j` for column `j`.
    fn ftran(&self, j: usize) -> Vec<S> {
        let mut w = vec![S::zero(); self.m];
        for &(row, a) in &self.cols[j] {
            for r in 0..self.m {
                w[r] += self.binv[r * self.m + row] * a;
            }
        }
        w
    }

    /// Product-form update of the basis inverse after pivoting on row `r`.
    fn eta_update(&mut self, r: usize, wcol: &[S]) -> Result<(), LpError> {
        let piv = wcol[r];
        if piv.abs() <= self.opts.zero_pivot {
            return Err(LpError::Numerical("pivot below zero tolerance".into()));
        }
        let m = self.m;
        let pivot_row: Vec<S> = self.binv[r * m..(r + 1) * m].iter().map(|&v| v / piv).collect();
        for rr in 0..m {
            if rr == r || wcol[rr] == S::zero() {
                continue;
            }
            let f = wcol[rr];
            for i in 0..m {
                self.binv[rr * m + i] -= f * pivot_row[i];
            }
        }
        self.binv[r * m..(r + 1) * m].copy_from_slice(&pivot_row);

        self.pivots_since_refactor += 1;
        if self.pivots_since_refactor >= self.opts.refactor_every {
            self.refactor()?;
        }
        Ok(())
    }

    /// Rebuilds the basis inverse from scratch and recomputes basic values.
    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        self.pivots_since_refactor = 0;
        if m == 0 {
            return Ok(());
        }
        let mut a = vec![S::zero(); m * m];
        for (r, &bv) in self.basis.iter().enumerate() {
            for &(row, v) in &self.cols[bv] {
                a[row * m + r] = v;
            }
        }
        let mut inv = vec![S::zero(); m * m];
        for i in 0..m {
            inv[i * m + i] = S::one();
        }
        for k in 0..m {
            let mut p = k;
            for r in k + 1..m {
                if a[r * m + k].abs() > a[p * m + k].abs() {
                    p = r;
                }
            }
            if a[p * m + k].abs() <= self.opts.zero_pivot {
                return Err(LpError::Numerical("singular basis during refactorization".into()));
            }
            if p != k {
                for i in 0..m {
                    a.swap(k * m + i, p * m + i);
                    inv.swap(k * m + i, p * m + i);
                }
            }
            let d = a[k * m + k];
            for i in 0..m {
                a[k * m + i] /= d;
                inv[k * m + i] /= d;
            }
            let a_k: Vec<S> = a[k * m..(k + 1) * m].to_vec();
            let inv_k: Vec<S> = inv[k * m..(k + 1) * m].to_vec();
            for r in 0..m {
                if r == k {
                    continue;
                }
                let f = a[r * m + k];
                if f != S::zero() {
                    for i in 0..m {
                        a[r * m + i] -= f * a_k[i];
                        inv[r * m + i] -= f * inv_k[i];
                    }
                }
            }
        }
        self.binv = inv;
        self.recompute_basics();
        Ok(())
    }

    fn recompute_basics(&mut self) {
        let m = self.m;
        let mut eff = self.rhs.clone();
        for j in 0..self.cols.len() {
            if !matches!(self.state[j], VarState::Basic(_)) && self.x[j] != S::zero() {
                for &(r, a) in &self.cols[j] {
                    eff[r] -= a * self.x[j];
                }
            }
        }
        for r in 0..m {
            let mut v = S::zero();
            let row = &self.binv[r * m..(r + 1) * m];
            for i in 0..m {
                v += row[i] * eff[i];
            }
            self.x[self.basis[r]] = v;
        }
    }

    /// Swaps basic near-zero artificials for real columns where possible so
    /// phase 2 starts from a maximally real basis.
    fn evict_basic_artificials(&mut self) -> Result<(), LpError> {
        let m = self.m;
        for r in 0..m {
            if self.basis[r] < self.n_real {
                continue;
            }
            let mut found = None;
            'scan: for j in 0..self.n_real {
                if matches!(self.state[j], VarState::Basic(_)) || self.lower[j] == self.upper[j] {
                    continue;
                }
                let mut entry = S::zero();
                for &(row, a) in &self.cols[j] {
                    entry += self.binv[r * m + row] * a;
                }
                if entry.abs() > S::val(1e-8) {
                    found = Some(j);
                    break 'scan;
                }
            }
            if let Some(j) = found {
                let wcol = self.ftran(j);
                let art = self.basis[r];
                self.state[art] = VarState::AtLower;
                self.x[art] = S::zero();
                self.basis[r] = j;
                self.state[j] = VarState::Basic(r);
                self.eta_update(r, &wcol)?;
                self.recompute_basics();
            }
            // No pivot found: the row is linearly dependent; its artificial
            // stays basic, pinned at zero.
        }
        Ok(())
    }

    fn extract(mut self, me: usize, status: LpStatus, objective: S) -> LpSolution<S> {
        // A final clean factorization tightens both x and the duals.
        if status == LpStatus::Optimal && self.m > 0 {
            let _ = self.refactor();
        }
        let pi = self.multipliers();
        let eq_duals = pi[..me].to_vec();
        let ineq_duals = pi[me..].to_vec();
        let mut bound_duals = vec![S::zero(); self.n_struct];
        for (j, bd) in bound_duals.iter_mut().enumerate() {
            if !matches!(self.state[j], VarState::Basic(_)) {
                *bd = self.reduced_cost(j, &pi);
            }
        }
        LpSolution {
            status,
            x: self.x[..self.n_struct].to_vec(),
            eq_duals,
            ineq_duals,
            bound_duals,
            objective,
            residuals: Residuals::default(),
            iterations: self.iterations,
        }
    }
}
