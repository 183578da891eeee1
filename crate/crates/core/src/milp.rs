//! Branch-and-bound for LPs with binary variables.
//!
//! The search runs best-bound-first with plunging: after branching, the
//! child on the rounded side of the fractional value is explored next
//! (depth-first dive), while its sibling is parked in a best-bound heap.
//! Branching picks the most fractional binary, ties to the lowest column
//! index, which keeps runs deterministic. Binaries that arrive with equal
//! lower and upper bounds stay fixed, so callers can pin variables without
//! touching the formulation.

use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use crate::lp::{LpError, LpProblem, LpStatus, SolverOptions};
use crate::scalar::Scalar;

/// How a branch-and-bound run ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum MilpStatus {
    /// Proven optimal within the gap tolerance.
    Optimal,
    /// Time limit hit with an incumbent in hand; `opt_gap` reports how far
    /// the proof got.
    FeasibleTimeLimit,
    /// No integer-feasible point exists.
    Infeasible,
}

#[derive(Debug, thiserror::Error)]
pub enum MilpError {
    #[error("time limit reached before any integer-feasible point was found")]
    TimeLimitNoIncumbent,
    #[error("LP relaxation is unbounded; the formulation is missing bounds")]
    UnboundedRelaxation,
    #[error(transparent)]
    Lp(#[from] LpError),
}

#[derive(Clone, Debug)]
pub struct MilpOptions<S> {
    /// A value within this distance of an integer counts as integral.
    pub int_tol: S,
    /// Stop once (incumbent - bound) / max(|incumbent|, 1e-10) drops below this.
    pub gap_tol: S,
    pub time_limit: Option<Duration>,
    /// Emit a progress line on stderr every this many nodes; 0 disables.
    pub log_every: usize,
    pub lp: SolverOptions<S>,
}

impl<S: Scalar> Default for MilpOptions<S> {
    fn default() -> Self {
        Self {
            int_tol: S::val(1e-6),
            gap_tol: S::val(1e-4),
            time_limit: None,
            log_every: 0,
            lp: SolverOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MilpSolution<S> {
    pub status: MilpStatus,
    pub x: Vec<S>,
    pub objective: S,
    /// Proven lower bound on the optimum at termination.
    pub best_bound: S,
    /// (objective - best_bound) / max(|objective|, 1e-10).
    pub opt_gap: S,
    /// LP relaxations solved.
    pub nodes: usize,
    /// Simplex iterations summed over all nodes.
    pub lp_iterations: usize,
}

struct Node<S> {
    /// Parent LP objective: a valid lower bound for this subtree.
    bound: f64,
    id: u64,
    depth: usize,
    lower: Vec<S>,
    upper: Vec<S>,
}

/// Heap wrapper ordering nodes by (bound, id) ascending under `BinaryHeap`'s
/// max-heap semantics.
struct HeapNode<S>(Node<S>);

impl<S> PartialEq for HeapNode<S> {
    fn eq(&self, other: &Self) -> bool {
        self.0.bound == other.0.bound && self.0.id == other.0.id
    }
}
impl<S> Eq for HeapNode<S> {}
impl<S> PartialOrd for HeapNode<S> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<S> Ord for HeapNode<S> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Reversed so that pop() yields the smallest bound, oldest node first.
        other
            .0
            .bound
            .total_cmp(&self.0.bound)
            .then_with(|| other.0.id.cmp(&self.0.id))
    }
}

/// Solves `p` with the given columns restricted to {0, 1}.
pub fn solve<S: Scalar>(
    p: &LpProblem<S>,
    binaries: &[usize],
    opts: &MilpOptions<S>,
) -> Result<MilpSolution<S>, MilpError> {
    let n = p.num_vars();
    for &j in binaries {
        if j >= n {
            return Err(MilpError::Lp(LpError::BadColumn(j, n)));
        }
    }
    let mut bins: Vec<usize> = binaries.to_vec();
    bins.sort_unstable();
    bins.dedup();

    let start = Instant::now();
    let mut lower = p.lower_bounds().to_vec();
    let mut upper = p.upper_bounds().to_vec();
    for &j in &bins {
        lower[j] = lower[j].max(S::zero());
        upper[j] = upper[j].min(S::one());
    }

    let mut heap: BinaryHeap<HeapNode<S>> = BinaryHeap::new();
    let mut stack: Vec<Node<S>> = Vec::new();
    stack.push(Node { bound: f64::NEG_INFINITY, id: 0, depth: 0, lower, upper });
    let mut next_id = 1u64;

    let mut incumbent: Option<(S, Vec<S>)> = None;
    let mut nodes = 0usize;
    let mut lp_iterations = 0usize;
    let mut timed_out = false;
    let mut gap_reached = false;

    let outstanding_bound = |stack: &[Node<S>], heap: &BinaryHeap<HeapNode<S>>| -> f64 {
        let mut gb = f64::INFINITY;
        for nd in stack {
            gb = gb.min(nd.bound);
        }
        if let Some(top) = heap.peek() {
            gb = gb.min(top.0.bound);
        }
        gb
    };

    while let Some(node) = stack.pop().or_else(|| heap.pop().map(|h| h.0)) {
        if let Some((z, _)) = &incumbent {
            if S::val(node.bound) >= *z - S::val(1e-9) {
                continue;
            }
        }
        if let Some(tl) = opts.time_limit {
            if start.elapsed() >= tl {
                timed_out = true;
                break;
            }
        }

        let sol = p.solve_with_bounds(&node.lower, &node.upper, &opts.lp)?;
        nodes += 1;
        lp_iterations += sol.iterations;
        match sol.status {
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => return Err(MilpError::UnboundedRelaxation),
            LpStatus::Optimal => {}
        }
        let bound = sol.objective;
        if let Some((z, _)) = &incumbent {
            if bound >= *z - S::val(1e-9) {
                continue;
            }
        }

        // Most fractional binary, ties to the lowest index.
        let mut branch: Option<(usize, S)> = None;
        for &j in &bins {
            let f = sol.x[j] - sol.x[j].floor();
            let dist = f.min(S::one() - f);
            if dist > opts.int_tol && branch.map_or(true, |(_, best)| dist > best) {
                branch = Some((j, dist));
            }
        }

        let Some((j, _)) = branch else {
            if incumbent.as_ref().map_or(true, |(z, _)| bound < *z) {
                incumbent = Some((bound, sol.x.clone()));
            }
            continue;
        };

        let plunge_val = if sol.x[j].as_f64() >= 0.5 { S::one() } else { S::zero() };
        let mut make_child = |val: S| {
            let mut lo = node.lower.clone();
            let mut up = node.upper.clone();
            lo[j] = val;
            up[j] = val;
            let child = Node {
                bound: bound.as_f64(),
                id: next_id,
                depth: node.depth + 1,
                lower: lo,
                upper: up,
            };
            next_id += 1;
            child
        };
        let sibling = make_child(S::one() - plunge_val);
        let plunge = make_child(plunge_val);
        heap.push(HeapNode(sibling));
        stack.push(plunge);

        if let Some((z, _)) = &incumbent {
            let gb = outstanding_bound(&stack, &heap);
            let zf = z.as_f64();
            let gap = (zf - gb) / zf.abs().max(1e-10);
            if gap <= opts.gap_tol.as_f64() {
                gap_reached = true;
                break;
            }
        }
        if opts.log_every > 0 && nodes % opts.log_every == 0 {
            let (zs, gs) = match &incumbent {
                Some((z, _)) => {
                    let gb = outstanding_bound(&stack, &heap);
                    let zf = z.as_f64();
                    (format!("{zf:.6}"), format!("{:.6}", (zf - gb) / zf.abs().max(1e-10)))
                }
                None => ("-".into(), "-".into()),
            };
            eprintln!(
                "node {nodes} depth {} bound {:.6} incumbent {zs} gap {gs}",
                node.depth,
                bound.as_f64()
            );
        }
    }

    match incumbent {
        Some((z, x)) => {
            let best_bound = if timed_out || gap_reached {
                let gb = outstanding_bound(&stack, &heap).min(z.as_f64());
                S::val(gb)
            } else {
                z
            };
            let opt_gap = (z - best_bound) / z.abs().max(S::val(1e-10));
            let status = if timed_out { MilpStatus::FeasibleTimeLimit } else { MilpStatus::Optimal };
            Ok(MilpSolution { status, x, objective: z, best_bound, opt_gap, nodes, lp_iterations })
        }
        None if timed_out => Err(MilpError::TimeLimitNoIncumbent),
        None => Ok(MilpSolution {
            status: MilpStatus::Infeasible,
            x: Vec::new(),
            objective: S::zero(),
            best_bound: S::zero(),
            opt_gap: S::zero(),
            nodes,
            lp_iterations,
        }),
    }
}
