//! Weighted undirected multigraphs and the path queries the big-M methods
//! are built on: shortest paths, Yen's k-shortest elementary paths, longest
//! elementary paths, and hop-limited neighborhoods.
//!
//! Parallel edges are first-class: every edge has a stable integer id and
//! paths are sequences of edge ids, so two branches joining the same pair of
//! nodes stay distinguishable. All tie-breaks are by id, which keeps every
//! query deterministic.
//!
//! Longest elementary path is NP-hard, so there are two engines: exhaustive
//! depth-first search with a sorted-weights pruning bound for small graphs,
//! and a Miller-Tucker-Zemlin style MILP (arc binaries plus node position
//! variables) with a time limit and relative gap for everything else. Both
//! report a proven upper bound alongside the best path found, so callers
//! that need a safe overestimate can use the bound even when the search was
//! truncated.

use std::collections::BinaryHeap;
use std::time::Duration;

use crate::lp::{LpProblem, RowLabel};
use crate::milp::{self, MilpError, MilpOptions, MilpStatus};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug)]
pub struct Edge<S> {
    pub u: usize,
    pub v: usize,
    pub weight: S,
}

impl<S: Scalar> Edge<S> {
    /// The endpoint that is not `n`. Panics if `n` is not an endpoint.
    pub fn other(&self, n: usize) -> usize {
        if n == self.u {
            self.v
        } else {
            assert_eq!(n, self.v, "node {n} is not an endpoint");
            self.u
        }
    }
}

/// An elementary path: edge ids in traversal order plus the node sequence
/// (one longer than the edge list) and the total weight.
#[derive(Clone, Debug, PartialEq)]
pub struct Path<S> {
    pub weight: S,
    pub edges: Vec<usize>,
    pub nodes: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Graph<S> {
    num_nodes: usize,
    edges: Vec<Edge<S>>,
    adj: Vec<Vec<(usize, usize)>>, // (edge id, other endpoint)
}

#[derive(Clone, Debug)]
pub struct LongestPathOptions<S> {
    /// Up to this many nodes the exhaustive search runs; larger graphs go
    /// through the MILP.
    pub exact_node_limit: usize,
    pub milp_time_limit: Duration,
    /// Relative gap at which the MILP may stop early.
    pub milp_gap: S,
}

impl<S: Scalar> Default for LongestPathOptions<S> {
    fn default() -> Self {
        Self {
            exact_node_limit: 30,
            milp_time_limit: Duration::from_secs(600),
            milp_gap: S::val(1e-2),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LongestPathResult<S> {
    /// Best path found; the true longest when `exact`.
    pub path: Path<S>,
    /// Proven upper bound on the longest elementary path weight.
    pub upper_bound: S,
    pub exact: bool,
}

/// Heap key ordering by (distance, node), smallest first.
#[derive(PartialEq)]
struct DijkstraKey(f64, usize);
impl Eq for DijkstraKey {}
impl PartialOrd for DijkstraKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for DijkstraKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl<S: Scalar> Graph<S> {
    pub fn new(num_nodes: usize) -> Self {
        Self { num_nodes, edges: Vec::new(), adj: vec![Vec::new(); num_nodes] }
    }

    /// Adds an undirected edge and returns its id. Nonnegative weights are
    /// assumed by every path query.
    pub fn add_edge(&mut self, u: usize, v: usize, weight: S) -> usize {
        assert!(u < self.num_nodes && v < self.num_nodes, "endpoint out of range");
        assert!(u != v, "self-loops are not supported");
        assert!(weight >= S::zero(), "edge weights must be nonnegative");
        let id = self.edges.len();
        self.edges.push(Edge { u, v, weight });
        self.adj[u].push((id, v));
        self.adj[v].push((id, u));
        id
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edge(&self, id: usize) -> &Edge<S> {
        &self.edges[id]
    }

    pub fn edges(&self) -> &[Edge<S>] {
        &self.edges
    }

    /// Shortest path by weight, or `None` if `t` is unreachable.
    pub fn shortest_path(&self, s: usize, t: usize) -> Option<Path<S>> {
        self.dijkstra(s, t, &[], &[])
    }

    fn dijkstra(&self, s: usize, t: usize, banned_edges: &[bool], banned_nodes: &[bool]) -> Option<Path<S>> {
        let n = self.num_nodes;
        let banned_n = |v: usize| banned_nodes.get(v).copied().unwrap_or(false);
        let banned_e = |e: usize| banned_edges.get(e).copied().unwrap_or(false);
        if banned_n(s) || banned_n(t) {
            return None;
        }
        let mut dist = vec![S::infinity(); n];
        let mut prev_edge: Vec<Option<usize>> = vec![None; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        dist[s] = S::zero();
        heap.push(DijkstraKey(0.0, s));
        while let Some(DijkstraKey(_, u)) = heap.pop() {
            if done[u] {
                continue;
            }
            done[u] = true;
            if u == t {
                break;
            }
            for &(eid, v) in &self.adj[u] {
                if banned_e(eid) || banned_n(v) || done[v] {
                    continue;
                }
                let nd = dist[u] + self.edges[eid].weight;
                if nd < dist[v] {
                    dist[v] = nd;
                    prev_edge[v] = Some(eid);
                    heap.push(DijkstraKey(nd.as_f64(), v));
                }
            }
        }
        if !done[t] {
            return None;
        }
        let mut edges = Vec::new();
        let mut nodes = vec![t];
        let mut cur = t;
        while cur != s {
            let eid = prev_edge[cur].expect("broken predecessor chain");
            edges.push(eid);
            cur = self.edges[eid].other(cur);
            nodes.push(cur);
        }
        edges.reverse();
        nodes.reverse();
        Some(Path { weight: dist[t], edges, nodes })
    }

    /// Yen's algorithm: up to `k` shortest elementary paths in increasing
    /// weight, ties broken by the lexicographically smallest edge-id
    /// sequence. Returns fewer when the graph runs out of paths.
    pub fn k_shortest_paths(&self, s: usize, t: usize, k: usize) -> Vec<Path<S>> {
        let mut accepted: Vec<Path<S>> = Vec::new();
        if k == 0 {
            return accepted;
        }
        let Some(first) = self.shortest_path(s, t) else {
            return accepted;
        };
        accepted.push(first);
        let mut candidates: Vec<Path<S>> = Vec::new();
        while accepted.len() < k {
            let prev = accepted.last().unwrap().clone();
            for i in 0..prev.edges.len() {
                let spur_node = prev.nodes[i];
                let mut banned_edges = vec![false; self.edges.len()];
                let mut banned_nodes = vec![false; self.num_nodes];
                // Paths sharing the root must leave through a new edge.
                for p in &accepted {
                    if p.edges.len() > i && p.edges[..i] == prev.edges[..i] {
                        banned_edges[p.edges[i]] = true;
                    }
                }
                for &nd in &prev.nodes[..i] {
                    banned_nodes[nd] = true;
                }
                let Some(spur) = self.dijkstra(spur_node, t, &banned_edges, &banned_nodes) else {
                    continue;
                };
                let mut edges = prev.edges[..i].to_vec();
                edges.extend_from_slice(&spur.edges);
                let root_weight: S = prev.edges[..i].iter().map(|&e| self.edges[e].weight).sum();
                let mut nodes = prev.nodes[..i].to_vec();
                nodes.extend_from_slice(&spur.nodes);
                let cand = Path { weight: root_weight + spur.weight, edges, nodes };
                let dup = accepted.iter().chain(candidates.iter()).any(|p| p.edges == cand.edges);
                if !dup {
                    candidates.push(cand);
                }
            }
            if candidates.is_empty() {
                break;
            }
            let mut best = 0;
            for i in 1..candidates.len() {
                let a = &candidates[i];
                let b = &candidates[best];
                let better = match a.weight.as_f64().total_cmp(&b.weight.as_f64()) {
                    std::cmp::Ordering::Less => true,
                    std::cmp::Ordering::Greater => false,
                    std::cmp::Ordering::Equal => a.edges < b.edges,
                };
                if better {
                    best = i;
                }
            }
            accepted.push(candidates.swap_remove(best));
        }
        accepted
    }

    /// Longest elementary path from `s` to `t`, or `None` when `t` is
    /// unreachable. Exact below `opts.exact_node_limit` nodes, MILP with a
    /// proven upper bound beyond it.
    pub fn longest_path(&self, s: usize, t: usize, opts: &LongestPathOptions<S>) -> Option<LongestPathResult<S>> {
        if self.num_nodes <= opts.exact_node_limit.min(128) {
            self.longest_path_dfs(s, t)
        } else {
            self.longest_path_mtz(s, t, opts)
        }
    }

    fn longest_path_dfs(&self, s: usize, t: usize) -> Option<LongestPathResult<S>> {
        assert!(self.num_nodes <= 128, "DFS search is limited to 128 nodes");
        // Optimistic completion bound: any extension visiting q more nodes
        // uses at most q more edges, so the top-q global weights cap it.
        let mut sorted: Vec<S> = self.edges.iter().map(|e| e.weight).collect();
        sorted.sort_by(|a, b| b.as_f64().total_cmp(&a.as_f64()));
        let mut prefix = vec![S::zero()];
        for w in &sorted {
            let last = *prefix.last().unwrap();
            prefix.push(last + *w);
        }

        struct Dfs<'g, S> {
            g: &'g Graph<S>,
            t: usize,
            prefix: Vec<S>,
            best: Option<(S, Vec<usize>)>,
            stack: Vec<usize>,
        }
        impl<S: Scalar> Dfs<'_, S> {
            fn visit(&mut self, u: usize, visited: u128, weight: S) {
                if u == self.t {
                    let better = self.best.as_ref().map_or(true, |(bw, _)| weight > *bw);
                    if better {
                        self.best = Some((weight, self.stack.clone()));
                    }
                    return;
                }
                let unvisited = self.g.num_nodes - (visited.count_ones() as usize);
                let cap = unvisited.min(self.prefix.len() - 1);
                if let Some((bw, _)) = &self.best {
                    if weight + self.prefix[cap] <= *bw {
                        return;
                    }
                }
                for &(eid, v) in &self.g.adj[u] {
                    if visited & (1u128 << v) != 0 {
                        continue;
                    }
                    self.stack.push(eid);
                    self.visit(v, visited | (1u128 << v), weight + self.g.edges[eid].weight);
                    self.stack.pop();
                }
            }
        }

        let mut dfs = Dfs { g: self, t, prefix, best: None, stack: Vec::new() };
        dfs.visit(s, 1u128 << s, S::zero());
        let (weight, edges) = dfs.best?;
        let nodes = self.nodes_of(s, &edges);
        Some(LongestPathResult { path: Path { weight, edges, nodes }, upper_bound: weight, exact: true })
    }

    fn longest_path_mtz(&self, s: usize, t: usize, opts: &LongestPathOptions<S>) -> Option<LongestPathResult<S>> {
        // Arc binaries for both orientations of each edge, except arcs into
        // the source or out of the sink, which no elementary s-t path uses.
        let mut arcs: Vec<(usize, usize, usize)> = Vec::new(); // (edge, tail, head)
        for (eid, e) in self.edges.iter().enumerate() {
            if e.v != s && e.u != t {
                arcs.push((eid, e.u, e.v));
            }
            if e.u != s && e.v != t {
                arcs.push((eid, e.v, e.u));
            }
        }
        let na = arcs.len();
        let n = self.num_nodes;
        let mut p = LpProblem::<S>::new(na + n);
        let pos = |v: usize| na + v;
        for (a, &(eid, _, _)) in arcs.iter().enumerate() {
            p.set_objective(a, -self.edges[eid].weight);
            p.set_bounds(a, S::zero(), S::one());
        }
        let nn = S::val(n as f64);
        for v in 0..n {
            p.set_bounds(pos(v), S::zero(), nn - S::one());
        }
        p.set_bounds(pos(s), S::zero(), S::zero());

        let mut in_arcs = vec![Vec::new(); n];
        let mut out_arcs = vec![Vec::new(); n];
        for (a, &(_, tail, head)) in arcs.iter().enumerate() {
            out_arcs[tail].push(a);
            in_arcs[head].push(a);
        }
        let row = |ids: &[usize], coef: S| ids.iter().map(|&a| (a, coef)).collect::<Vec<_>>();
        p.add_eq(row(&out_arcs[s], S::one()), S::one(), RowLabel::Generic).unwrap();
        p.add_eq(row(&in_arcs[t], S::one()), S::one(), RowLabel::Generic).unwrap();
        for v in 0..n {
            if v == s || v == t {
                continue;
            }
            let mut coefs = row(&in_arcs[v], S::one());
            coefs.extend(row(&out_arcs[v], -S::one()));
            p.add_eq(coefs, S::zero(), RowLabel::Generic).unwrap();
            p.add_le(row(&in_arcs[v], S::one()), S::one(), RowLabel::Generic).unwrap();
        }
        // Both orientations of one edge exclude each other.
        let mut by_edge: Vec<Vec<usize>> = vec![Vec::new(); self.edges.len()];
        for (a, &(eid, _, _)) in arcs.iter().enumerate() {
            by_edge[eid].push(a);
        }
        for pair in by_edge.iter().filter(|p| p.len() == 2) {
            p.add_le(vec![(pair[0], S::one()), (pair[1], S::one())], S::one(), RowLabel::Generic).unwrap();
        }
        // Position ordering kills cycles: p_tail - p_head + n z <= n - 1.
        for (a, &(_, tail, head)) in arcs.iter().enumerate() {
            p.add_le(
                vec![(pos(tail), S::one()), (pos(head), -S::one()), (a, nn)],
                nn - S::one(),
                RowLabel::Generic,
            )
            .unwrap();
        }

        let milp_opts = MilpOptions {
            gap_tol: opts.milp_gap,
            time_limit: Some(opts.milp_time_limit),
            ..MilpOptions::default()
        };
        let bins: Vec<usize> = (0..na).collect();
        let sol = match milp::solve(&p, &bins, &milp_opts) {
            Ok(sol) if sol.status == MilpStatus::Infeasible => return None,
            Ok(sol) => sol,
            // Timed out with nothing in hand: fall back to the shortest
            // path as a certified-feasible incumbent and the trivial bound.
            Err(MilpError::TimeLimitNoIncumbent) => {
                let path = self.shortest_path(s, t)?;
                let ub: S = self.edges.iter().map(|e| e.weight).sum();
                return Some(LongestPathResult { path, upper_bound: ub, exact: false });
            }
            Err(e) => panic!("longest-path MILP failed: {e}"),
        };

        // Walk successor arcs from s to recover the path.
        let mut succ: Vec<Option<(usize, usize)>> = vec![None; n];
        for (a, &(eid, tail, head)) in arcs.iter().enumerate() {
            if sol.x[a] > S::val(0.5) {
                succ[tail] = Some((eid, head));
            }
        }
        let mut edges = Vec::new();
        let mut cur = s;
        while cur != t {
            let (eid, next) = succ[cur].expect("disconnected arc solution");
            edges.push(eid);
            cur = next;
        }
        let weight: S = edges.iter().map(|&e| self.edges[e].weight).sum();
        let nodes = self.nodes_of(s, &edges);
        let upper_bound = -sol.best_bound;
        let exact = (upper_bound - weight).abs() <= S::val(1e-9) * (S::one() + weight.abs());
        Some(LongestPathResult { path: Path { weight, edges, nodes }, upper_bound, exact })
    }

    fn nodes_of(&self, s: usize, edges: &[usize]) -> Vec<usize> {
        let mut nodes = vec![s];
        let mut cur = s;
        for &e in edges {
            cur = self.edges[e].other(cur);
            nodes.push(cur);
        }
        nodes
    }

    /// Edge ids (excluding `edge_id`) whose endpoints both sit within `k`
    /// hops of either endpoint of `edge_id`, with hop distance measured on
    /// the graph minus that edge.
    pub fn hop_neighborhood(&self, edge_id: usize, k: usize) -> Vec<usize> {
        let Edge { u: i, v: j, .. } = self.edges[edge_id];
        let mut dist = vec![usize::MAX; self.num_nodes];
        let mut queue = std::collections::VecDeque::new();
        dist[i] = 0;
        dist[j] = 0;
        queue.push_back(i);
        queue.push_back(j);
        while let Some(u) = queue.pop_front() {
            for &(eid, v) in &self.adj[u] {
                if eid == edge_id || dist[v] != usize::MAX {
                    continue;
                }
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
        (0..self.edges.len())
            .filter(|&e| {
                e != edge_id && {
                    let Edge { u, v, .. } = self.edges[e];
                    dist[u] <= k && dist[v] <= k
                }
            })
            .collect()
    }

    /// Whether the subgraph of edges where `active` holds connects every node.
    pub fn is_connected(&self, active: &[bool]) -> bool {
        if self.num_nodes == 0 {
            return true;
        }
        let mut seen = vec![false; self.num_nodes];
        let mut queue = std::collections::VecDeque::new();
        seen[0] = true;
        queue.push_back(0);
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &(eid, v) in &self.adj[u] {
                if active.get(eid).copied().unwrap_or(false) && !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.num_nodes
    }
}
