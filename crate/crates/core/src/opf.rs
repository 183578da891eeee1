//! DC optimal power flow on a (possibly reduced) network.
//!
//! The LP follows the compact form `min c'p  s.t.  A x = b, H x >= g` over
//! the stacked variable vector `x = (p, theta, f)`: per-bus power balance
//! and per-branch flow-angle coupling (Kirchhoff) form the equality block,
//! while flow capacities and generator limits are explicit inequality rows
//! rather than native variable bounds. Keeping the limits as rows is what
//! lets the infeasibility certificate of [`dual_mis`] range over them.
//!
//! Branch removals reduce the problem: the branch's flow column disappears
//! together with its Kirchhoff row and capacity rows, which is equivalent to
//! pinning its flow to zero.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::grid::Network;
use crate::lp::{LpError, LpProblem, LpStatus, RowLabel, SolverOptions};

/// Branches whose certificate multiplier exceeds this magnitude count as
/// carriers of the infeasibility.
pub const MIS_DUAL_TOL: f64 = 1e-7;

#[derive(Debug, thiserror::Error)]
pub enum OpfError {
    #[error("branch id {0} out of range")]
    UnknownBranch(usize),
    #[error("linear programming failure: {0}")]
    Lp(#[from] LpError),
    #[error("optimal power flow cannot be unbounded with nonnegative costs")]
    Unbounded,
}

/// Column and row layout of the compact-form LP for a reduced network.
pub(crate) struct OpfLayout {
    pub n_bus: usize,
    pub n_gen: usize,
    /// Branch id -> flow column, `None` when removed.
    pub f_col: Vec<Option<usize>>,
    /// Branch ids still in service, ascending.
    pub in_service: Vec<usize>,
}

impl OpfLayout {
    pub fn new(net: &Network, removed: &[usize]) -> Result<Self, OpfError> {
        let m = net.branches().len();
        let mut gone = vec![false; m];
        for &e in removed {
            *gone.get_mut(e).ok_or(OpfError::UnknownBranch(e))? = true;
        }
        let n_gen = net.generators().len();
        let n_bus = net.num_buses();
        let mut f_col = vec![None; m];
        let mut in_service = Vec::with_capacity(m);
        let mut next = n_gen + n_bus;
        for e in 0..m {
            if !gone[e] {
                f_col[e] = Some(next);
                next += 1;
                in_service.push(e);
            }
        }
        Ok(Self { n_bus, n_gen, f_col, in_service })
    }

    pub fn p_col(&self, g: usize) -> usize {
        g
    }

    pub fn theta_col(&self, i: usize) -> usize {
        self.n_gen + i
    }

    pub fn num_vars(&self) -> usize {
        self.n_gen + self.n_bus + self.in_service.len()
    }
}

/// The bus whose angle gets pinned to zero: the generator bus with the
/// lowest external id, or bus 0 for the degenerate all-passive network.
/// Flows, dispatch, and objective are invariant to this choice; pinning a
/// a priori well-connected bus just keeps the reported angles stable.
pub(crate) fn reference_bus(net: &Network) -> usize {
    net.generators()
        .iter()
        .map(|g| g.bus)
        .min_by_key(|&i| net.buses()[i].id)
        .unwrap_or(0)
}

/// Builds the compact-form LP. Equality rows come out as all balance rows
/// (bus order) followed by the Kirchhoff rows (branch id order); inequality
/// rows as flow lower bounds, flow upper bounds, generator lower bounds,
/// generator upper bounds, each block in id order. Every variable is free;
/// callers that want a deterministic angle profile pin a reference
/// separately.
pub(crate) fn build_opf(net: &Network, layout: &OpfLayout) -> LpProblem<f64> {
    let mut p = LpProblem::new(layout.num_vars());
    for j in 0..layout.num_vars() {
        p.set_free(j);
    }
    for (g, gen) in net.generators().iter().enumerate() {
        p.set_objective(layout.p_col(g), gen.cost);
    }

    // Balance: sum of inflows - outflows + local generation = demand.
    for (i, bus) in net.buses().iter().enumerate() {
        let mut coeffs = Vec::new();
        for (g, gen) in net.generators().iter().enumerate() {
            if gen.bus == i {
                coeffs.push((layout.p_col(g), 1.0));
            }
        }
        for &e in &layout.in_service {
            let br = &net.branches()[e];
            let col = layout.f_col[e].expect("in-service branch has a column");
            if br.to == i {
                coeffs.push((col, 1.0));
            } else if br.from == i {
                coeffs.push((col, -1.0));
            }
        }
        p.add_eq(coeffs, bus.demand, RowLabel::Balance(i)).expect("columns are in range");
    }

    // Kirchhoff: f = B (theta_from - theta_to) for every in-service branch.
    for &e in &layout.in_service {
        let br = &net.branches()[e];
        let col = layout.f_col[e].expect("in-service branch has a column");
        p.add_eq(
            vec![
                (col, 1.0),
                (layout.theta_col(br.from), -br.susceptance),
                (layout.theta_col(br.to), br.susceptance),
            ],
            0.0,
            RowLabel::Kirchhoff(e),
        )
        .expect("columns are in range");
    }

    for &e in &layout.in_service {
        let col = layout.f_col[e].expect("in-service branch has a column");
        p.add_ge(vec![(col, 1.0)], -net.branches()[e].capacity, RowLabel::FlowBound(e))
            .expect("columns are in range");
    }
    for &e in &layout.in_service {
        let col = layout.f_col[e].expect("in-service branch has a column");
        p.add_le(vec![(col, 1.0)], net.branches()[e].capacity, RowLabel::FlowBound(e))
            .expect("columns are in range");
    }
    for (g, gen) in net.generators().iter().enumerate() {
        p.add_ge(vec![(layout.p_col(g), 1.0)], gen.p_min, RowLabel::GenBound(g))
            .expect("columns are in range");
    }
    for (g, gen) in net.generators().iter().enumerate() {
        p.add_le(vec![(layout.p_col(g), 1.0)], gen.p_max, RowLabel::GenBound(g))
            .expect("columns are in range");
    }
    p
}

/// Minimum-cost dispatch for the network with the given branches removed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OpfSolution {
    /// Output per generator, in generator-list order.
    pub p: Vec<f64>,
    /// Voltage angle per bus; the lowest-id generator bus is pinned to zero.
    pub theta: Vec<f64>,
    /// Flow per branch id; zero on removed branches.
    pub flow: Vec<f64>,
    /// Balance-row dual (locational price) per bus.
    pub pi: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub enum OpfOutcome {
    Feasible(OpfSolution),
    Infeasible,
}

impl OpfOutcome {
    pub fn feasible(&self) -> Option<&OpfSolution> {
        match self {
            OpfOutcome::Feasible(s) => Some(s),
            OpfOutcome::Infeasible => None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, OpfOutcome::Feasible(_))
    }
}

pub fn solve_dcopf(net: &Network, removed: &[usize]) -> Result<OpfOutcome, OpfError> {
    let layout = OpfLayout::new(net, removed)?;
    let mut lp = build_opf(net, &layout);
    // Deterministic angle profile; feasibility is unaffected because the
    // model is invariant under a uniform angle shift per component.
    lp.set_bounds(layout.theta_col(reference_bus(net)), 0.0, 0.0);
    let sol = lp.solve(&SolverOptions::default())?;
    match sol.status {
        LpStatus::Infeasible => Ok(OpfOutcome::Infeasible),
        LpStatus::Unbounded => Err(OpfError::Unbounded),
        LpStatus::Optimal => {
            let mut flow = vec![0.0; net.branches().len()];
            for &e in &layout.in_service {
                flow[e] = sol.x[layout.f_col[e].expect("in-service branch has a column")];
            }
            Ok(OpfOutcome::Feasible(OpfSolution {
                p: sol.x[..layout.n_gen].to_vec(),
                theta: sol.x[layout.n_gen..layout.n_gen + layout.n_bus].to_vec(),
                flow,
                pi: sol.eq_duals[..layout.n_bus].to_vec(),
                objective: sol.objective,
                iterations: sol.iterations,
            }))
        }
    }
}

/// Branch sensitivities `alpha_e = (pi_from - pi_to) * f_e` for the branches
/// in service, keyed by branch id. The value prices the Kirchhoff coupling
/// of the branch: how much the dispatch cost would change per unit of
/// relaxation of its switching pin.
pub fn shadow_prices(net: &Network, removed: &[usize], sol: &OpfSolution) -> BTreeMap<usize, f64> {
    let gone: std::collections::HashSet<usize> = removed.iter().copied().collect();
    net.branches()
        .iter()
        .filter(|br| !gone.contains(&br.id))
        .map(|br| (br.id, (sol.pi[br.from] - sol.pi[br.to]) * sol.flow[br.id]))
        .collect()
}

/// Worst-case constraint violations of a dispatch, for invariant checks.
#[derive(Clone, Copy, Debug, Default)]
pub struct OpfResiduals {
    pub balance: f64,
    pub kirchhoff: f64,
    pub flow_capacity: f64,
    pub gen_bounds: f64,
}

pub fn opf_residuals(net: &Network, removed: &[usize], sol: &OpfSolution) -> OpfResiduals {
    let gone: std::collections::HashSet<usize> = removed.iter().copied().collect();
    let mut r = OpfResiduals::default();
    for (i, bus) in net.buses().iter().enumerate() {
        let mut acc = -bus.demand;
        for (g, gen) in net.generators().iter().enumerate() {
            if gen.bus == i {
                acc += sol.p[g];
            }
        }
        for br in net.branches() {
            if gone.contains(&br.id) {
                continue;
            }
            if br.to == i {
                acc += sol.flow[br.id];
            } else if br.from == i {
                acc -= sol.flow[br.id];
            }
        }
        r.balance = r.balance.max(acc.abs());
    }
    for br in net.branches() {
        if gone.contains(&br.id) {
            continue;
        }
        let gap = sol.flow[br.id] - br.susceptance * (sol.theta[br.from] - sol.theta[br.to]);
        r.kirchhoff = r.kirchhoff.max(gap.abs());
        r.flow_capacity = r.flow_capacity.max(sol.flow[br.id].abs() - br.capacity);
    }
    for (g, gen) in net.generators().iter().enumerate() {
        r.gen_bounds = r.gen_bounds.max(gen.p_min - sol.p[g]).max(sol.p[g] - gen.p_max);
    }
    r
}

/// A minimal-support certificate that the reduced OPF is infeasible.
///
/// The certificate is a Farkas multiplier pair `(y, u)` found by the LP
/// `min 1'y  s.t.  y'H + u'A = 0,  y'g + u'b = 1,  y >= 0` over the reduced
/// compact form. Any dispatch satisfying the reduced constraints would give
/// the combination `y'(Hx - g) + u'(Ax - b)` the value `-1` while it is
/// provably nonnegative, so none exists. `e_mis` lists the in-service
/// branches whose Kirchhoff multiplier is active: removing branches outside
/// this set leaves the same certificate valid, hence the problem infeasible.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MisCertificate {
    /// Balance-row multiplier per bus.
    pub u_balance: Vec<f64>,
    /// Kirchhoff-row multiplier per in-service branch id.
    pub u_kirchhoff: BTreeMap<usize, f64>,
    /// Flow-capacity multipliers per in-service branch id (lower, upper).
    pub y_flow_lower: BTreeMap<usize, f64>,
    pub y_flow_upper: BTreeMap<usize, f64>,
    /// Generator-limit multipliers per generator (lower, upper).
    pub y_gen_lower: Vec<f64>,
    pub y_gen_upper: Vec<f64>,
    /// Branch ids with `|u_kirchhoff| > MIS_DUAL_TOL`, ascending.
    pub e_mis: Vec<usize>,
    /// Largest violation of the stationarity rows `y'H + u'A = 0`.
    pub stationarity_residual: f64,
    /// `|y'g + u'b - 1|`.
    pub normalization_residual: f64,
    /// Most negative multiplier in `y` (0 when `y` is empty).
    pub min_y: f64,
    /// Certificate size `1'y` at optimality.
    pub objective: f64,
}

/// Searches for an infeasibility certificate of the reduced OPF. Returns
/// `None` when the reduced problem is feasible (no certificate exists).
pub fn dual_mis(net: &Network, removed: &[usize]) -> Result<Option<MisCertificate>, OpfError> {
    let layout = OpfLayout::new(net, removed)?;
    let n_bus = layout.n_bus;
    let n_gen = layout.n_gen;
    let m_live = layout.in_service.len();

    // Certificate variables: u free per equality row, y >= 0 per inequality
    // row, in the same block order the primal uses.
    let u_bal = |i: usize| i;
    let u_kir = |k: usize| n_bus + k; // k indexes layout.in_service
    let y_flow_lo = |k: usize| n_bus + m_live + k;
    let y_flow_hi = |k: usize| n_bus + 2 * m_live + k;
    let y_p_lo = |g: usize| n_bus + 3 * m_live + g;
    let y_p_hi = |g: usize| n_bus + 3 * m_live + n_gen + g;
    let num_vars = n_bus + 3 * m_live + 2 * n_gen;

    let mut lp = LpProblem::new(num_vars);
    for i in 0..n_bus + m_live {
        lp.set_free(i);
    }
    // y variables keep the default [0, inf) bounds.
    for k in 0..2 * m_live + 2 * n_gen {
        lp.set_objective(n_bus + m_live + k, 1.0);
    }

    // One stationarity row per primal column: the multiplier combination of
    // that column's coefficients must vanish.
    for (g, gen) in net.generators().iter().enumerate() {
        lp.add_eq(
            vec![(u_bal(gen.bus), 1.0), (y_p_lo(g), 1.0), (y_p_hi(g), -1.0)],
            0.0,
            RowLabel::Generic,
        )?;
    }
    for i in 0..n_bus {
        let mut coeffs = Vec::new();
        for (k, &e) in layout.in_service.iter().enumerate() {
            let br = &net.branches()[e];
            if br.from == i {
                coeffs.push((u_kir(k), -br.susceptance));
            } else if br.to == i {
                coeffs.push((u_kir(k), br.susceptance));
            }
        }
        if coeffs.is_empty() {
            continue; // bus isolated by the removals: its angle touches no row
        }
        lp.add_eq(coeffs, 0.0, RowLabel::Generic)?;
    }
    for (k, &e) in layout.in_service.iter().enumerate() {
        let br = &net.branches()[e];
        lp.add_eq(
            vec![
                (u_bal(br.to), 1.0),
                (u_bal(br.from), -1.0),
                (u_kir(k), 1.0),
                (y_flow_lo(k), 1.0),
                (y_flow_hi(k), -1.0),
            ],
            0.0,
            RowLabel::Generic,
        )?;
    }

    // Normalization pins the certificate scale: y'g + u'b = 1.
    let mut norm = Vec::new();
    for (k, &e) in layout.in_service.iter().enumerate() {
        let cap = net.branches()[e].capacity;
        norm.push((y_flow_lo(k), -cap));
        norm.push((y_flow_hi(k), -cap));
    }
    for (g, gen) in net.generators().iter().enumerate() {
        if gen.p_min != 0.0 {
            norm.push((y_p_lo(g), gen.p_min));
        }
        norm.push((y_p_hi(g), -gen.p_max));
    }
    for (i, bus) in net.buses().iter().enumerate() {
        if bus.demand != 0.0 {
            norm.push((u_bal(i), bus.demand));
        }
    }
    lp.add_eq(norm, 1.0, RowLabel::Normalization)?;

    let sol = lp.solve(&SolverOptions::default())?;
    match sol.status {
        LpStatus::Infeasible => return Ok(None), // primal feasible
        LpStatus::Unbounded => return Err(OpfError::Unbounded),
        LpStatus::Optimal => {}
    }

    let u_balance: Vec<f64> = (0..n_bus).map(|i| sol.x[u_bal(i)]).collect();
    let mut u_kirchhoff = BTreeMap::new();
    let mut y_flow_lower = BTreeMap::new();
    let mut y_flow_upper = BTreeMap::new();
    for (k, &e) in layout.in_service.iter().enumerate() {
        u_kirchhoff.insert(e, sol.x[u_kir(k)]);
        y_flow_lower.insert(e, sol.x[y_flow_lo(k)]);
        y_flow_upper.insert(e, sol.x[y_flow_hi(k)]);
    }
    let y_gen_lower: Vec<f64> = (0..n_gen).map(|g| sol.x[y_p_lo(g)]).collect();
    let y_gen_upper: Vec<f64> = (0..n_gen).map(|g| sol.x[y_p_hi(g)]).collect();

    let mut stationarity_residual: f64 = 0.0;
    for row in 0..lp.eq.len() - 1 {
        let act: f64 = lp.eq.rows[row].0.iter().map(|&(j, a)| a * sol.x[j]).sum();
        stationarity_residual = stationarity_residual.max((act - lp.eq.rhs[row]).abs());
    }
    let norm_row = lp.eq.len() - 1;
    let norm_act: f64 = lp.eq.rows[norm_row].0.iter().map(|&(j, a)| a * sol.x[j]).sum();
    let normalization_residual = (norm_act - 1.0).abs();
    let min_y = sol.x[n_bus + m_live..]
        .iter()
        .copied()
        .fold(0.0_f64, f64::min);

    let e_mis: Vec<usize> = layout
        .in_service
        .iter()
        .copied()
        .filter(|e| u_kirchhoff[e].abs() > MIS_DUAL_TOL)
        .collect();

    Ok(Some(MisCertificate {
        u_balance,
        u_kirchhoff,
        y_flow_lower,
        y_flow_upper,
        y_gen_lower,
        y_gen_upper,
        e_mis,
        stationarity_residual,
        normalization_residual,
        min_y,
        objective: sol.objective,
    }))
}

/// Duals of the switching pins in the switching-aware form of the OPF.
///
/// The flow coupling `f = B x (theta_from - theta_to)` with every switch
/// pinned on (`x_e = 1`) is linearized at the base optimum, which is exact
/// at the pinned point: `f - B(theta_from - theta_to) - f*_e x_e = -f*_e`.
/// The returned map carries the equality dual of each pin row `x_e = 1`,
/// keyed by branch id; it should reproduce [`shadow_prices`] of the base
/// solve. Returns `None` when the base OPF is infeasible.
pub fn reformulation_pin_duals(
    net: &Network,
) -> Result<Option<BTreeMap<usize, f64>>, OpfError> {
    let base = match solve_dcopf(net, &[])? {
        OpfOutcome::Feasible(s) => s,
        OpfOutcome::Infeasible => return Ok(None),
    };
    let n_gen = net.generators().len();
    let n_bus = net.num_buses();
    let m = net.branches().len();
    let p_col = |g: usize| g;
    let theta_col = |i: usize| n_gen + i;
    let f_col = |e: usize| n_gen + n_bus + e;
    let x_col = |e: usize| n_gen + n_bus + m + e;

    let mut lp = LpProblem::new(n_gen + n_bus + 2 * m);
    for j in 0..lp.num_vars() {
        lp.set_free(j);
    }
    lp.set_bounds(theta_col(reference_bus(net)), 0.0, 0.0);
    for (g, gen) in net.generators().iter().enumerate() {
        lp.set_objective(p_col(g), gen.cost);
    }

    for (i, bus) in net.buses().iter().enumerate() {
        let mut coeffs = Vec::new();
        for (g, gen) in net.generators().iter().enumerate() {
            if gen.bus == i {
                coeffs.push((p_col(g), 1.0));
            }
        }
        for br in net.branches() {
            if br.to == i {
                coeffs.push((f_col(br.id), 1.0));
            } else if br.from == i {
                coeffs.push((f_col(br.id), -1.0));
            }
        }
        lp.add_eq(coeffs, bus.demand, RowLabel::Balance(i))?;
    }
    for br in net.branches() {
        lp.add_eq(
            vec![
                (f_col(br.id), 1.0),
                (theta_col(br.from), -br.susceptance),
                (theta_col(br.to), br.susceptance),
                (x_col(br.id), -base.flow[br.id]),
            ],
            -base.flow[br.id],
            RowLabel::Kirchhoff(br.id),
        )?;
    }
    let first_pin = net.num_buses() + m;
    for br in net.branches() {
        lp.add_eq(vec![(x_col(br.id), 1.0)], 1.0, RowLabel::Generic)?;
    }
    for br in net.branches() {
        lp.add_ge(
            vec![(f_col(br.id), 1.0), (x_col(br.id), br.capacity)],
            0.0,
            RowLabel::Coupling(br.id),
        )?;
    }
    for br in net.branches() {
        lp.add_le(
            vec![(f_col(br.id), 1.0), (x_col(br.id), -br.capacity)],
            0.0,
            RowLabel::Coupling(br.id),
        )?;
    }
    for (g, gen) in net.generators().iter().enumerate() {
        lp.add_ge(vec![(p_col(g), 1.0)], gen.p_min, RowLabel::GenBound(g))?;
    }
    for (g, gen) in net.generators().iter().enumerate() {
        lp.add_le(vec![(p_col(g), 1.0)], gen.p_max, RowLabel::GenBound(g))?;
    }

    let sol = lp.solve(&SolverOptions::default())?;
    match sol.status {
        LpStatus::Optimal => Ok(Some(
            net.branches()
                .iter()
                .map(|br| (br.id, sol.eq_duals[first_pin + br.id]))
                .collect(),
        )),
        // The pinned problem shares its feasible set with the base OPF,
        // which just solved; anything else is a numerical failure.
        _ => Err(OpfError::Lp(LpError::Numerical(
            "pinned switching form disagrees with the base solve".into(),
        ))),
    }
}
