//! Optimal transmission switching: which branches to take out of service so
//! that the cheapest dispatch of the remaining network is minimized.
//!
//! The model keeps the OPF variables and adds a binary `x_e` per switchable
//! branch (1 = in service). The flow-angle coupling of a switchable branch
//! is relaxed through its big-M constant,
//!
//! ```text
//!   -(1 - x_e) M_e  <=  f_e - B_e (theta_i - theta_j)  <=  (1 - x_e) M_e
//!   -cap_e x_e      <=  f_e                            <=  cap_e x_e
//! ```
//!
//! so an in-service branch obeys the physics exactly while a switched-off
//! branch carries no flow and leaves its endpoints' angles free within
//! `M_e`. A cardinality row limits how many branches may go out at once.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bigm::BigMVector;
use crate::grid::Network;
use crate::lp::{LpError, LpProblem, RowLabel};
use crate::milp::{self, MilpError, MilpOptions, MilpStatus};

#[derive(Debug, thiserror::Error)]
pub enum OtsError {
    #[error("bound vector has no entry for switchable branch {0}")]
    MissingBound(usize),
    #[error("no switching pattern within the allowance admits a feasible dispatch")]
    Infeasible,
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error(transparent)]
    Lp(#[from] LpError),
}

#[derive(Clone, Copy, Debug)]
pub struct OtsOptions {
    /// Relative optimality gap at which the search may stop.
    pub gap_tol: f64,
    pub time_limit: Option<std::time::Duration>,
    /// Emit a progress line every this many nodes (0 = silent).
    pub log_every: usize,
}

impl Default for OtsOptions {
    fn default() -> Self {
        Self { gap_tol: 1e-6, time_limit: None, log_every: 0 }
    }
}

/// Column layout of the switching MILP.
pub struct OtsLayout {
    pub n_gen: usize,
    pub n_bus: usize,
    pub n_branch: usize,
    /// Switchable branch ids ascending; `x_col` follows this order.
    pub switchable: Vec<usize>,
}

impl OtsLayout {
    pub fn p_col(&self, g: usize) -> usize {
        g
    }

    pub fn theta_col(&self, i: usize) -> usize {
        self.n_gen + i
    }

    pub fn f_col(&self, e: usize) -> usize {
        self.n_gen + self.n_bus + e
    }

    /// Column of the service indicator of the `pos`-th switchable branch.
    pub fn x_col(&self, pos: usize) -> usize {
        self.n_gen + self.n_bus + self.n_branch + pos
    }
}

/// Assembles the switching MILP with at most `max_off` branches out.
pub fn build_ots(
    net: &Network,
    bounds: &BigMVector,
    max_off: usize,
) -> Result<(LpProblem<f64>, OtsLayout), OtsError> {
    let layout = OtsLayout {
        n_gen: net.generators().len(),
        n_bus: net.num_buses(),
        n_branch: net.branches().len(),
        switchable: net
            .branches()
            .iter()
            .filter(|b| b.switchable)
            .map(|b| b.id)
            .collect(),
    };
    let num_vars = layout.n_gen + layout.n_bus + layout.n_branch + layout.switchable.len();
    let mut lp = LpProblem::new(num_vars);

    for (g, gen) in net.generators().iter().enumerate() {
        lp.set_objective(layout.p_col(g), gen.cost);
        lp.set_bounds(layout.p_col(g), gen.p_min, gen.p_max);
    }
    for i in 0..layout.n_bus {
        lp.set_free(layout.theta_col(i));
    }
    lp.set_bounds(layout.theta_col(crate::opf::reference_bus(net)), 0.0, 0.0);
    for br in net.branches() {
        if br.switchable {
            // Coupling rows bound the flow once the indicator is fixed.
            lp.set_free(layout.f_col(br.id));
        } else {
            lp.set_bounds(layout.f_col(br.id), -br.capacity, br.capacity);
        }
    }
    for pos in 0..layout.switchable.len() {
        lp.set_bounds(layout.x_col(pos), 0.0, 1.0);
    }

    for (i, bus) in net.buses().iter().enumerate() {
        let mut coeffs = Vec::new();
        for (g, gen) in net.generators().iter().enumerate() {
            if gen.bus == i {
                coeffs.push((layout.p_col(g), 1.0));
            }
        }
        for br in net.branches() {
            if br.to == i {
                coeffs.push((layout.f_col(br.id), 1.0));
            } else if br.from == i {
                coeffs.push((layout.f_col(br.id), -1.0));
            }
        }
        lp.add_eq(coeffs, bus.demand, RowLabel::Balance(i))?;
    }

    for (pos, &e) in layout.switchable.iter().enumerate() {
        let br = &net.branches()[e];
        let m = *bounds.m.get(&e).ok_or(OtsError::MissingBound(e))?;
        let x = layout.x_col(pos);
        let kirchhoff = [
            (layout.f_col(e), 1.0),
            (layout.theta_col(br.from), -br.susceptance),
            (layout.theta_col(br.to), br.susceptance),
        ];
        let mut upper = kirchhoff.to_vec();
        upper.push((x, m));
        lp.add_le(upper, m, RowLabel::BigM(e))?;
        let mut lower = kirchhoff.to_vec();
        lower.push((x, -m));
        lp.add_ge(lower, -m, RowLabel::BigM(e))?;
        lp.add_le(vec![(layout.f_col(e), 1.0), (x, -br.capacity)], 0.0, RowLabel::Coupling(e))?;
        lp.add_ge(vec![(layout.f_col(e), 1.0), (x, br.capacity)], 0.0, RowLabel::Coupling(e))?;
    }
    for br in net.branches() {
        if !br.switchable {
            lp.add_eq(
                vec![
                    (layout.f_col(br.id), 1.0),
                    (layout.theta_col(br.from), -br.susceptance),
                    (layout.theta_col(br.to), br.susceptance),
                ],
                0.0,
                RowLabel::Kirchhoff(br.id),
            )?;
        }
    }

    // At most max_off branches out: sum of indicators >= count - allowance.
    let cardinality: Vec<(usize, f64)> =
        (0..layout.switchable.len()).map(|pos| (layout.x_col(pos), 1.0)).collect();
    let min_on = layout.switchable.len() as f64 - max_off as f64;
    lp.add_ge(cardinality, min_on, RowLabel::Cardinality)?;

    Ok((lp, layout))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OtsResult {
    /// Service state per switchable branch id (true = in service).
    pub topology: BTreeMap<usize, bool>,
    /// Output per generator.
    pub dispatch: Vec<f64>,
    /// Angle per bus.
    pub angles: Vec<f64>,
    /// Flow per branch; exactly zero on switched-off branches.
    pub flows: Vec<f64>,
    pub objective: f64,
    pub best_bound: f64,
    pub opt_gap: f64,
    pub status: MilpStatus,
    pub nodes: usize,
    pub wall_time_s: f64,
    pub switched_off_count: usize,
    /// Whether the chosen topology leaves the network connected.
    pub connected: bool,
}

/// Solves the switching problem with at most `max_off` branches out of
/// service. `Err(OtsError::Infeasible)` when no pattern admits a dispatch;
/// a time limit with an incumbent returns that incumbent with its gap.
pub fn solve_ots(
    net: &Network,
    bounds: &BigMVector,
    max_off: usize,
    opts: &OtsOptions,
) -> Result<OtsResult, OtsError> {
    let start = Instant::now();
    let (lp, layout) = build_ots(net, bounds, max_off)?;
    let binaries: Vec<usize> = (0..layout.switchable.len()).map(|p| layout.x_col(p)).collect();
    let milp_opts = MilpOptions {
        gap_tol: opts.gap_tol,
        time_limit: opts.time_limit,
        log_every: opts.log_every,
        ..MilpOptions::default()
    };
    let sol = match milp::solve(&lp, &binaries, &milp_opts) {
        Ok(s) => s,
        Err(MilpError::Lp(e)) => return Err(OtsError::Lp(e)),
        Err(e) => return Err(OtsError::Milp(e)),
    };
    if matches!(sol.status, MilpStatus::Infeasible) {
        return Err(OtsError::Infeasible);
    }

    let mut topology = BTreeMap::new();
    let mut off = Vec::new();
    for (pos, &e) in layout.switchable.iter().enumerate() {
        let on = sol.x[layout.x_col(pos)] > 0.5;
        topology.insert(e, on);
        if !on {
            off.push(e);
        }
    }
    let mut flows: Vec<f64> = (0..layout.n_branch).map(|e| sol.x[layout.f_col(e)]).collect();
    for &e in &off {
        flows[e] = 0.0; // coupling pins these to zero up to integer tolerance
    }
    let mut active = vec![true; layout.n_branch];
    for &e in &off {
        active[e] = false;
    }
    Ok(OtsResult {
        dispatch: sol.x[..layout.n_gen].to_vec(),
        angles: sol.x[layout.n_gen..layout.n_gen + layout.n_bus].to_vec(),
        flows,
        objective: sol.objective,
        best_bound: sol.best_bound,
        opt_gap: sol.opt_gap,
        status: sol.status,
        nodes: sol.nodes,
        wall_time_s: start.elapsed().as_secs_f64(),
        switched_off_count: off.len(),
        connected: net.graph().is_connected(&active),
        topology,
    })
}
