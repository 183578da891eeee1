//! Brute-force oracles and randomized instance generators shared by the
//! integration suites.
//!
//! Everything here trades speed for obviousness: answers are recomputed by
//! exhaustive enumeration (vertices of a polytope, binary assignments,
//! elementary paths, switching topologies) so the fast code paths in the
//! library have an independent reference to agree with. Nothing in this
//! module calls the routine it is meant to check.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use otskit::grid::{Branch, Bus, Generator, Network};
use otskit::lp::{LpStatus, RowLabel};
use otskit::opf::{solve_dcopf, OpfOutcome};
use otskit::paths::Graph;
use otskit::{LpProblem, SolverOptions};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `a x = b` by Gaussian elimination with partial pivoting; `None` when the
/// matrix is (numerically) singular.
pub fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))?;
        if a[piv][col].abs() < 1e-9 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[r][k] -= f * a[col][k];
                }
                b[r] -= f * b[col];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn dot(a: &[f64], x: &[f64]) -> f64 {
    a.iter().zip(x).map(|(ai, xi)| ai * xi).sum()
}

/// A dense, fully boxed linear program kept as plain data so the vertex
/// oracle and the solver under test are fed from the same source.
#[derive(Clone, Debug)]
pub struct RawLp {
    pub c: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Rows `a'x = b`.
    pub eq: Vec<(Vec<f64>, f64)>,
    /// Rows `a'x >= b`.
    pub ge: Vec<(Vec<f64>, f64)>,
}

impl RawLp {
    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn problem(&self) -> LpProblem {
        let n = self.num_vars();
        let mut p = LpProblem::new(n);
        for j in 0..n {
            p.set_objective(j, self.c[j]);
            p.set_bounds(j, self.lower[j], self.upper[j]);
        }
        let sparse = |row: &[f64]| {
            row.iter().enumerate().filter(|(_, &a)| a != 0.0).map(|(j, &a)| (j, a)).collect()
        };
        for (row, rhs) in &self.eq {
            p.add_eq(sparse(row), *rhs, RowLabel::Generic).unwrap();
        }
        for (row, rhs) in &self.ge {
            p.add_ge(sparse(row), *rhs, RowLabel::Generic).unwrap();
        }
        p
    }

    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        for j in 0..self.num_vars() {
            if x[j] < self.lower[j] - tol || x[j] > self.upper[j] + tol {
                return false;
            }
        }
        self.eq.iter().all(|(a, b)| (dot(a, x) - b).abs() <= tol)
            && self.ge.iter().all(|(a, b)| dot(a, x) >= b - tol)
    }

    /// Optimal objective by basic-feasible-solution enumeration.
    ///
    /// Every constraint that can be active — each `>=` row, each bound — is
    /// a candidate; all equality rows are always active. Each full-rank
    /// square combination yields a candidate point, each feasible candidate
    /// a vertex, and since the box makes the feasible region compact, the
    /// optimum (when the region is nonempty) is the best vertex. `None`
    /// therefore means infeasible.
    pub fn best_vertex(&self) -> Option<f64> {
        let n = self.num_vars();
        if self.eq.len() > n {
            // More equalities than variables never comes out of the
            // generators below.
            panic!("oracle expects at most {} equality rows", n);
        }
        let mut pool: Vec<(Vec<f64>, f64)> = self.ge.clone();
        for j in 0..n {
            let mut unit = vec![0.0; n];
            unit[j] = 1.0;
            pool.push((unit.clone(), self.lower[j]));
            pool.push((unit, self.upper[j]));
        }
        let need = n - self.eq.len();
        let mut best: Option<f64> = None;
        let mut combo: Vec<usize> = (0..need).collect();
        loop {
            let mut a: Vec<Vec<f64>> = self.eq.iter().map(|(row, _)| row.clone()).collect();
            let mut b: Vec<f64> = self.eq.iter().map(|&(_, rhs)| rhs).collect();
            for &i in &combo {
                a.push(pool[i].0.clone());
                b.push(pool[i].1);
            }
            if let Some(x) = solve_square(a, b) {
                if self.is_feasible(&x, 1e-7) {
                    let z = dot(&self.c, &x);
                    best = Some(best.map_or(z, |cur: f64| cur.min(z)));
                }
            }
            if !next_combination(&mut combo, pool.len()) {
                break;
            }
        }
        best
    }
}

/// Advances `combo` to the next k-subset of `0..n` in lexicographic order;
/// false once exhausted. An empty combo has no successor.
fn next_combination(combo: &mut [usize], n: usize) -> bool {
    let k = combo.len();
    if k == 0 {
        return false;
    }
    let mut i = k;
    while i > 0 {
        i -= 1;
        if combo[i] < n - (k - i) {
            combo[i] += 1;
            for j in i + 1..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn dense_row(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(-2.0..2.0) })
        .collect()
}

/// A random boxed LP that is feasible by construction: every row is anchored
/// at an interior point of the box. `force_infeasible` appends one row no
/// point of the box can satisfy.
pub fn random_box_lp(rng: &mut ChaCha8Rng, force_infeasible: bool) -> RawLp {
    let n = rng.gen_range(2..=5);
    let n_eq = rng.gen_range(0..=1);
    let n_ge = rng.gen_range(1..=3);
    let lower: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..0.0)).collect();
    let upper: Vec<f64> = lower.iter().map(|l| l + rng.gen_range(0.5..4.0)).collect();
    let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let x0: Vec<f64> = (0..n)
        .map(|j| lower[j] + (upper[j] - lower[j]) * rng.gen_range(0.25..0.75))
        .collect();
    let mut eq = Vec::new();
    for _ in 0..n_eq {
        // The oracle counts each equality as one unit of rank, so an
        // all-zero row (trivial but rank-free) must not be generated.
        let a = loop {
            let a = dense_row(rng, n);
            if a.iter().any(|&v| v != 0.0) {
                break a;
            }
        };
        let rhs = dot(&a, &x0);
        eq.push((a, rhs));
    }
    let mut ge = Vec::new();
    for _ in 0..n_ge {
        let a = dense_row(rng, n);
        let rhs = dot(&a, &x0) - rng.gen_range(0.0..1.5);
        ge.push((a, rhs));
    }
    if force_infeasible {
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let box_max: f64 = a
            .iter()
            .enumerate()
            .map(|(j, &aj)| (aj * lower[j]).max(aj * upper[j]))
            .sum();
        ge.push((a, box_max + 1.0));
    }
    RawLp { c, lower, upper, eq, ge }
}

/// Reference MILP optimum: fix every assignment of the binary columns in
/// turn and keep the best LP value. `None` when no assignment is feasible.
pub fn milp_enumeration(p: &LpProblem, binaries: &[usize]) -> Option<f64> {
    assert!(binaries.len() <= 16, "enumeration oracle is exponential");
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << binaries.len()) {
        let mut fixed = p.clone();
        for (pos, &j) in binaries.iter().enumerate() {
            let v = if mask >> pos & 1 == 1 { 1.0 } else { 0.0 };
            fixed.set_bounds(j, v, v);
        }
        let sol = fixed.solve(&SolverOptions::default()).unwrap();
        if matches!(sol.status, LpStatus::Optimal) {
            best = Some(best.map_or(sol.objective, |cur: f64| cur.min(sol.objective)));
        }
    }
    best
}

/// A random boxed LP with a random subset of columns restricted to {0, 1}.
pub fn random_box_milp(rng: &mut ChaCha8Rng, max_binaries: usize) -> (RawLp, Vec<usize>) {
    let mut raw = random_box_lp(rng, false);
    let n = raw.num_vars();
    let k = rng.gen_range(1..=n.min(max_binaries));
    let mut cols: Vec<usize> = (0..n).collect();
    cols.shuffle(rng);
    cols.truncate(k);
    cols.sort_unstable();
    for &j in &cols {
        raw.lower[j] = 0.0;
        raw.upper[j] = 1.0;
    }
    (raw, cols)
}

/// Every elementary `s -> t` path as `(weight, edge ids)`, found by
/// depth-first search over the full edge set.
pub fn all_elementary_paths(g: &Graph<f64>, s: usize, t: usize) -> Vec<(f64, Vec<usize>)> {
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); g.num_nodes()];
    for (id, e) in g.edges().iter().enumerate() {
        adj[e.u].push((id, e.v));
        adj[e.v].push((id, e.u));
    }
    let mut out = Vec::new();
    let mut visited = vec![false; g.num_nodes()];
    let mut trail = Vec::new();
    visited[s] = true;
    path_dfs(g, &adj, s, t, &mut visited, &mut trail, &mut out);
    out
}

fn path_dfs(
    g: &Graph<f64>,
    adj: &[Vec<(usize, usize)>],
    at: usize,
    t: usize,
    visited: &mut Vec<bool>,
    trail: &mut Vec<usize>,
    out: &mut Vec<(f64, Vec<usize>)>,
) {
    if at == t {
        let w = trail.iter().map(|&e| g.edge(e).weight).sum();
        out.push((w, trail.clone()));
        return;
    }
    for &(eid, next) in &adj[at] {
        if visited[next] {
            continue;
        }
        visited[next] = true;
        trail.push(eid);
        path_dfs(g, adj, next, t, visited, trail, out);
        trail.pop();
        visited[next] = false;
    }
}

/// A connected random graph: a random spanning tree plus extra distinct
/// pairs, weights uniform in [0.1, 2).
pub fn random_connected_graph(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Graph<f64> {
    let pairs = random_connected_pairs(rng, n, m);
    let mut g = Graph::new(n);
    for &(a, b) in &pairs {
        g.add_edge(a, b, rng.gen_range(0.1..2.0));
    }
    g
}

/// `m` distinct node pairs over `0..n` containing a spanning tree, sorted.
fn random_connected_pairs(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Vec<(usize, usize)> {
    assert!(m + 1 >= n, "too few edges for a spanning tree");
    assert!(m <= n * (n - 1) / 2, "too many edges for distinct pairs");
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut used: BTreeSet<(usize, usize)> = BTreeSet::new();
    for i in 1..n {
        let j = rng.gen_range(0..i);
        let (a, b) = (order[i].min(order[j]), order[i].max(order[j]));
        used.insert((a, b));
    }
    let mut extras: Vec<(usize, usize)> = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if !used.contains(&(a, b)) {
                extras.push((a, b));
            }
        }
    }
    extras.shuffle(rng);
    for &(a, b) in extras.iter().take(m.saturating_sub(used.len())) {
        used.insert((a, b));
    }
    used.into_iter().collect()
}

/// A random connected network with 6-10 buses, 8-14 branches (all
/// switchable), 2-3 generators, and a feasible nominal dispatch. Redraws
/// until the feasibility check passes, so the distribution is conditioned
/// on solvable base cases.
pub fn random_network(seed: u64) -> Network {
    let mut rng = rng(seed);
    loop {
        let n = rng.gen_range(6..=10);
        // Lower bound bumps to n-1 so a spanning tree always fits.
        let m = rng.gen_range(8.max(n - 1)..=14).min(n * (n - 1) / 2);
        let pairs = random_connected_pairs(&mut rng, n, m);
        let branches: Vec<Branch> = pairs
            .iter()
            .map(|&(a, b)| Branch {
                id: 0,
                from: a,
                to: b,
                susceptance: rng.gen_range(0.5..4.0),
                capacity: rng.gen_range(0.4..2.0),
                switchable: true,
            })
            .collect();
        let n_gen = rng.gen_range(2..=3);
        let mut gen_buses: Vec<usize> = (0..n).collect();
        gen_buses.shuffle(&mut rng);
        gen_buses.truncate(n_gen);
        let generators: Vec<Generator> = gen_buses
            .iter()
            .map(|&bus| Generator {
                bus,
                cost: rng.gen_range(1.0..10.0),
                p_min: 0.0,
                p_max: rng.gen_range(1.0..3.0),
            })
            .collect();
        let mut buses: Vec<Bus> =
            (0..n).map(|i| Bus { id: i, demand: 0.0, is_generator: false }).collect();
        for i in 0..n {
            if !gen_buses.contains(&i) && rng.gen_bool(0.75) {
                buses[i].demand = rng.gen_range(0.1..0.8);
            }
        }
        let total_demand: f64 = buses.iter().map(|b| b.demand).sum();
        if total_demand < 0.05 {
            continue;
        }
        let total_pmax: f64 = generators.iter().map(|g| g.p_max).sum();
        if total_demand > 0.8 * total_pmax {
            let scale = 0.8 * total_pmax / total_demand;
            for b in &mut buses {
                b.demand *= scale;
            }
        }
        let Ok(net) = Network::new(buses, branches, generators, 100.0) else {
            continue;
        };
        if solve_dcopf(&net, &[]).unwrap().is_feasible() {
            return net;
        }
    }
}

/// Reference switching optimum: evaluate the OPF on every topology that
/// keeps the network connected and switches off at most `max_off`
/// switchable branches, keeping the best feasible objective.
pub fn ots_enumeration(net: &Network, max_off: usize) -> Option<f64> {
    let switchable: Vec<usize> =
        net.branches().iter().filter(|b| b.switchable).map(|b| b.id).collect();
    assert!(switchable.len() <= 16, "enumeration oracle is exponential");
    let g = net.graph();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << switchable.len()) {
        if mask.count_ones() as usize > max_off {
            continue;
        }
        let mut active = vec![true; net.branches().len()];
        let mut removed = Vec::new();
        for (pos, &e) in switchable.iter().enumerate() {
            if mask >> pos & 1 == 1 {
                active[e] = false;
                removed.push(e);
            }
        }
        if !g.is_connected(&active) {
            continue;
        }
        if let OpfOutcome::Feasible(sol) = solve_dcopf(net, &removed).unwrap() {
            best = Some(best.map_or(sol.objective, |cur: f64| cur.min(sol.objective)));
        }
    }
    best
}

/// A copy of `net` with one bus demand replaced.
pub fn with_demand(net: &Network, bus: usize, demand: f64) -> Network {
    let mut buses = net.buses().to_vec();
    buses[bus].demand = demand;
    Network::new(buses, net.branches().to_vec(), net.generators().to_vec(), net.base_mva())
        .expect("modified demand still passes construction")
}

/// Absolute path of a fixture file, independent of the test working
/// directory.
pub fn fixture(name: &str) -> String {
    format!("{}/fixtures/{}", env!("CARGO_MANIFEST_DIR"), name)
}

pub fn load_fixture(name: &str) -> Network {
    let path = fixture(name);
    let text = std::fs::read_to_string(&path).unwrap();
    let format = if path.ends_with(".m") {
        otskit::grid::CaseFormat::MatpowerSubset
    } else {
        otskit::grid::CaseFormat::Json
    };
    otskit::grid::parse_network(&text, format).unwrap()
}

/// `|a - b|` within `tol`, scaled by the magnitude of the values.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

/// Small infeasible cases for the certificate machinery, each with the
/// branches already removed and whether the shortage routes through
/// Kirchhoff rows (so candidate branches exist) or is a pure balance or
/// cut-capacity deficit (empty candidate set).
pub fn infeasible_fixtures() -> Vec<(&'static str, Network, Vec<usize>, bool)> {
    let fig1 = otskit::grid::figure1_example();
    let overload = with_demand(&fig1, 0, 5.0);
    let ieee = load_fixture("ieee14.json");
    let bus3 = ieee.bus_index(3).unwrap();
    let heavy = with_demand(&ieee, bus3, ieee.buses()[bus3].demand * 2.9);
    let probe = ieee.branch_between(3, 4).unwrap();
    vec![
        // Routing-bound: the cut around the demand bus has capacity 6 for
        // demand 5, yet Kirchhoff splitting caps delivery at 3, so the
        // certificate must cite Kirchhoff rows.
        ("overloaded seven-bus", overload, vec![], true),
        ("seven-bus with its demand bus cut off", fig1, vec![0, 1], false),
        // Bus 3 at 2.9x demand exceeds its local generation plus the raw
        // import capacity of its cut: a balance-and-bounds certificate
        // suffices and no Kirchhoff row is needed.
        ("14-bus with bus 3 demand at 2.9x", heavy, vec![], false),
        ("14-bus with branch (3,4) out", ieee, vec![probe], true),
    ]
}
