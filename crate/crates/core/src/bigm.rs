//! Big-M bounds for the switching disjunction of each switchable branch.
//!
//! When a branch (i,j) is switched off, the MILP relaxes its flow-angle
//! coupling to `|f - B(theta_i - theta_j)| <= M`. The constant must be large
//! enough to keep every dispatch of the intended topology feasible, yet as
//! small as possible for a tight LP relaxation. Three bounds are provided:
//!
//! * [`lwp_bigm`] - the longest weighted path bound: the angle difference
//!   across (i,j) is at most the sum of capacity/susceptance ratios along
//!   any elementary i-j path, maximized over paths. Always valid; often
//!   loose.
//! * [`ksp_bigm`] - ranks the i-j paths shortest-first and probes with OPF
//!   solves and infeasibility certificates how many of the cheapest paths
//!   could plausibly be out of service at once; the bound is read off a
//!   slightly deeper path in the ranking. Heuristic: tighter, not
//!   guaranteed.
//! * [`knn_bigm`] - samples switch-off patterns in the hop-neighborhood of
//!   the branch, measures the realized angle spread, and extrapolates.
//!   Heuristic as well, capped by the longest-path bound.
//!
//! [`validate_bigm`] checks a vector against exhaustive topology
//! enumeration on small cases, and [`ratio_stats`] summarizes how two
//! vectors compare branch by branch.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::Network;
use crate::lp::LpStatus;
use crate::opf::{
    build_opf, dual_mis, shadow_prices, solve_dcopf, OpfError, OpfLayout, OpfOutcome,
};
use crate::paths::{Graph, LongestPathOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Longest weighted path bound.
    Lwp,
    /// Ranked shortest-path probing.
    Ksp,
    /// Hop-neighborhood sampling.
    Knn,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Lwp => "lwp",
            Method::Ksp => "ksp",
            Method::Knn => "knn",
        })
    }
}

/// One big-M constant per switchable branch, with a record of how each
/// value was obtained.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BigMVector {
    pub method: Method,
    /// Branch id -> bound. Strictly positive.
    pub m: BTreeMap<usize, f64>,
    pub provenance: BTreeMap<usize, Provenance>,
}

/// How a single bound came to be.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    /// Longest-path weight times susceptance. `exact` states whether the
    /// path search was certified; when it is not, the recorded value is the
    /// proven upper bound, which keeps the constant on the safe side.
    LongestPath { exact: bool, upper_bound: f64 },
    /// The ranked-path probe settled on the path with this 1-based index.
    RankedPath { index: usize, weight: f64, events: Vec<KspEvent> },
    /// The ranked-path probe needed a deeper path than the network has;
    /// the longest-path bound stands in.
    RankedPathExhausted { available: usize, events: Vec<KspEvent> },
    /// Neighborhood sampling measured this angle spread over the feasible
    /// rounds; `capped` reports whether the longest-path bound was smaller
    /// than the extrapolated spread and took precedence.
    AngleSpread { spread: f64, infeasible_rounds: usize, capped: bool },
    /// Sampling gave no usable spread (every round infeasible, or the
    /// spread was exactly zero); the longest-path bound stands in.
    AngleSpreadFallback { infeasible_rounds: usize, zero_spread: bool },
}

/// Trace entry of the ranked-path probe, sufficient to replay the bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum KspEvent {
    /// The k-th shortest path was examined. `live` records whether all its
    /// edges were still in the working edge set at that point.
    Path { k: usize, edges: Vec<usize>, live: bool },
    /// A single-branch removal was probed, in sensitivity order.
    Removal { edge: usize, feasible: bool },
    /// Every allowed single removal failed; the infeasibility certificate
    /// of the working set minus `dropped` shortlisted these partners,
    /// ranked ascending by sensitivity.
    Candidates { dropped: usize, ranked: Vec<usize> },
    /// A paired removal `{first, second}` was probed.
    PairRemoval { first: usize, second: usize, feasible: bool },
    /// No pair restored feasibility: the branch pattern must stay on
    /// service and the ranking stops advancing.
    MustOnService,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct KspParams {
    /// Ranking depth at which probing stops.
    pub k_max: usize,
    /// Single-removal attempts per path are capped at this many edges.
    pub e_max: usize,
    /// Safety offset: the bound is read `l` paths beyond the last rank
    /// reached.
    pub l: usize,
}

impl Default for KspParams {
    fn default() -> Self {
        Self { k_max: 5, e_max: 3, l: 1 }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct KnnParams {
    /// Hop radius of the sampled neighborhood.
    pub k: usize,
    /// Fraction of the neighborhood switched off per round (at least one
    /// edge when the neighborhood is nonempty).
    pub h: f64,
    /// Spread multiplier applied to the largest observed angle difference.
    pub s: f64,
    /// Number of sampling rounds.
    pub r: usize,
    pub seed: u64,
    /// Whether the probed branch itself is switched off together with each
    /// sample. Removing it measures the spread the big-M constraint has to
    /// absorb; keeping it measures the spread of the intact network.
    pub remove_probed_branch: bool,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self { k: 2, h: 0.2, s: 10.0, r: 30, seed: 0, remove_probed_branch: true }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BigMError {
    #[error(transparent)]
    Opf(#[from] OpfError),
    #[error("base optimal power flow is infeasible; sensitivities are undefined")]
    InfeasibleBaseCase,
    #[error("{0} switchable branches exceed the exhaustive validation limit of 12")]
    TooManySwitchable(usize),
}

fn switchable_ids(net: &Network) -> Vec<usize> {
    net.branches().iter().filter(|b| b.switchable).map(|b| b.id).collect()
}

/// Longest-path bound for one branch: weight of the longest elementary
/// path between its endpoints (the branch itself included as a candidate,
/// so bridges get their own capacity ratio), times the branch susceptance.
/// Returns `(bound, exact, certified upper bound)`.
fn lwp_bound(net: &Network, g: &Graph<f64>, branch: usize) -> (f64, bool, f64) {
    let br = &net.branches()[branch];
    let res = g
        .longest_path(br.from, br.to, &LongestPathOptions::default())
        .expect("endpoints of a branch are always joined by the branch itself");
    let weight = if res.exact { res.path.weight } else { res.upper_bound };
    (br.susceptance * weight, res.exact, br.susceptance * res.upper_bound)
}

/// Longest weighted path bounds for every switchable branch.
pub fn lwp_bigm(net: &Network) -> Result<BigMVector, BigMError> {
    let g = net.graph();
    let entries: Vec<(usize, f64, Provenance)> = switchable_ids(net)
        .into_par_iter()
        .map(|e| {
            let (m, exact, upper) = lwp_bound(net, &g, e);
            (e, m, Provenance::LongestPath { exact, upper_bound: upper })
        })
        .collect();
    Ok(collect_vector(Method::Lwp, entries))
}

fn collect_vector(method: Method, entries: Vec<(usize, f64, Provenance)>) -> BigMVector {
    let mut m = BTreeMap::new();
    let mut provenance = BTreeMap::new();
    for (e, value, p) in entries {
        m.insert(e, value);
        provenance.insert(e, p);
    }
    BigMVector { method, m, provenance }
}

/// Ascending sensitivity order, ties broken by branch id.
fn rank_ascending(alpha: &BTreeMap<usize, f64>, ids: impl IntoIterator<Item = usize>) -> Vec<usize> {
    let mut v: Vec<usize> = ids.into_iter().collect();
    v.sort_by(|a, b| alpha[a].total_cmp(&alpha[b]).then(a.cmp(b)));
    v
}

/// Ranked shortest-path bounds for every switchable branch.
///
/// Per branch, the i-j paths are ranked shortest-first and walked with a
/// working copy of the edge set. A live path (all edges in service) is
/// challenged: can one of its cheapest-sensitivity edges, or a pair
/// consisting of its cheapest edge and a partner from the infeasibility
/// certificate, be switched off with the dispatch staying feasible? Each
/// success deepens the plausible ranking by one; the first pattern that
/// must stay on service stops the walk. The bound is the weight of the
/// path `l` ranks beyond the stopping point. Requires a feasible base case.
pub fn ksp_bigm(net: &Network, params: &KspParams) -> Result<BigMVector, BigMError> {
    let base = match solve_dcopf(net, &[])? {
        OpfOutcome::Feasible(s) => s,
        OpfOutcome::Infeasible => return Err(BigMError::InfeasibleBaseCase),
    };
    let alpha0 = shadow_prices(net, &[], &base);
    let g = net.graph();
    let entries: Result<Vec<(usize, f64, Provenance)>, BigMError> = switchable_ids(net)
        .into_par_iter()
        .map(|e| ksp_branch(net, &g, &alpha0, e, params).map(|(m, p)| (e, m, p)))
        .collect();
    Ok(collect_vector(Method::Ksp, entries?))
}

fn ksp_branch(
    net: &Network,
    g: &Graph<f64>,
    alpha0: &BTreeMap<usize, f64>,
    branch: usize,
    params: &KspParams,
) -> Result<(f64, Provenance), BigMError> {
    let br = &net.branches()[branch];
    let paths = g.k_shortest_paths(br.from, br.to, params.k_max + params.l);
    let mut events = Vec::new();
    let mut alpha = alpha0.clone();
    let mut removed: Vec<usize> = Vec::new();
    let mut working: BTreeSet<usize> = net.branches().iter().map(|b| b.id).collect();
    let mut k = 1;

    'ranking: while k < params.k_max {
        let Some(path) = paths.get(k - 1) else {
            // The ranking is already deeper than the path count; nothing is
            // in the way of advancing.
            k += 1;
            continue;
        };
        let live = path.edges.iter().all(|e| working.contains(e));
        events.push(KspEvent::Path { k, edges: path.edges.clone(), live });
        if !live {
            k += 1;
            continue;
        }

        let ranked = rank_ascending(&alpha, path.edges.iter().copied());
        let singles = ranked.len().min(params.e_max);
        for &edge in &ranked[..singles] {
            let mut attempt = removed.clone();
            attempt.push(edge);
            match solve_dcopf(net, &attempt)? {
                OpfOutcome::Feasible(sol) => {
                    events.push(KspEvent::Removal { edge, feasible: true });
                    alpha = shadow_prices(net, &attempt, &sol);
                    working.remove(&edge);
                    removed = attempt;
                    k += 1;
                    continue 'ranking;
                }
                OpfOutcome::Infeasible => {
                    events.push(KspEvent::Removal { edge, feasible: false });
                }
            }
        }

        // Every single removal failed. Drop the cheapest edge anyway and ask
        // the certificate of the resulting infeasible problem which branches
        // carry the conflict; only they can restore feasibility as partners.
        let dropped = ranked[0];
        let mut base_attempt = removed.clone();
        base_attempt.push(dropped);
        let cert = dual_mis(net, &base_attempt)?
            .expect("the single-removal probe just found this reduction infeasible");
        let candidates = rank_ascending(&alpha, cert.e_mis.iter().copied());
        events.push(KspEvent::Candidates { dropped, ranked: candidates.clone() });
        for &partner in &candidates {
            let mut attempt = base_attempt.clone();
            attempt.push(partner);
            match solve_dcopf(net, &attempt)? {
                OpfOutcome::Feasible(sol) => {
                    events.push(KspEvent::PairRemoval {
                        first: dropped,
                        second: partner,
                        feasible: true,
                    });
                    alpha = shadow_prices(net, &attempt, &sol);
                    working.remove(&dropped);
                    working.remove(&partner);
                    removed = attempt;
                    k += 1;
                    continue 'ranking;
                }
                OpfOutcome::Infeasible => {
                    events.push(KspEvent::PairRemoval {
                        first: dropped,
                        second: partner,
                        feasible: false,
                    });
                }
            }
        }
        events.push(KspEvent::MustOnService);
        break;
    }

    let index = k + params.l;
    Ok(match paths.get(index - 1) {
        Some(path) => {
            let m = br.susceptance * path.weight;
            (m, Provenance::RankedPath { index, weight: path.weight, events })
        }
        None => {
            let (m, _, _) = lwp_bound(net, g, branch);
            (m, Provenance::RankedPathExhausted { available: paths.len(), events })
        }
    })
}

/// Recomputes the ranked-path bound for `branch` from its recorded trace,
/// re-deriving the path ranking from the network and checking the trace for
/// internal consistency along the way (path edges match the ranking,
/// liveness matches the simulated working set, removals only touch edges a
/// probe could have touched). Returns the replayed bound, or `None` when
/// the trace does not fit the network and parameters.
pub fn replay_ksp(
    net: &Network,
    branch: usize,
    provenance: &Provenance,
    params: &KspParams,
) -> Option<f64> {
    let (events, recorded) = match provenance {
        Provenance::RankedPath { events, index, weight } => (events, Some((*index, *weight))),
        Provenance::RankedPathExhausted { events, available } => {
            (events, { let _ = available; None })
        }
        _ => return None,
    };
    let br = &net.branches()[branch];
    let g = net.graph();
    let paths = g.k_shortest_paths(br.from, br.to, params.k_max + params.l);
    let mut working: BTreeSet<usize> = net.branches().iter().map(|b| b.id).collect();
    let mut cursor = events.iter().peekable();
    let mut k = 1;

    'ranking: while k < params.k_max {
        let Some(path) = paths.get(k - 1) else {
            k += 1;
            continue;
        };
        let live = path.edges.iter().all(|e| working.contains(e));
        match cursor.next()? {
            KspEvent::Path { k: ek, edges, live: elive }
                if *ek == k && *edges == path.edges && *elive == live => {}
            _ => return None,
        }
        if !live {
            k += 1;
            continue;
        }
        let mut dropped = None;
        loop {
            match cursor.next()? {
                KspEvent::Removal { edge, feasible } => {
                    if !path.edges.contains(edge) || !working.contains(edge) {
                        return None;
                    }
                    if *feasible {
                        working.remove(edge);
                        k += 1;
                        continue 'ranking;
                    }
                }
                KspEvent::Candidates { dropped: d, ranked } => {
                    if !path.edges.contains(d) || !ranked.iter().all(|e| working.contains(e)) {
                        return None;
                    }
                    dropped = Some(*d);
                }
                KspEvent::PairRemoval { first, second, feasible } => {
                    if dropped != Some(*first) || !working.contains(second) {
                        return None;
                    }
                    if *feasible {
                        working.remove(first);
                        working.remove(second);
                        k += 1;
                        continue 'ranking;
                    }
                }
                KspEvent::MustOnService => break 'ranking,
                KspEvent::Path { .. } => return None,
            }
        }
    }
    if cursor.next().is_some() {
        return None;
    }

    let index = k + params.l;
    match paths.get(index - 1) {
        Some(path) => {
            let (rec_index, rec_weight) = recorded?;
            if rec_index != index || (rec_weight - path.weight).abs() > 1e-12 {
                return None;
            }
            Some(br.susceptance * path.weight)
        }
        None => {
            if recorded.is_some() {
                return None;
            }
            Some(lwp_bound(net, &g, branch).0)
        }
    }
}

/// Stable per-round RNG seed: a split-mix style derivation from the master
/// seed, the branch, and the round, so results do not depend on thread
/// scheduling.
pub(crate) fn derive_seed(master: u64, branch: u64, round: u64) -> u64 {
    let mut z = master
        ^ branch.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ round.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hop-neighborhood sampling bounds for every switchable branch.
///
/// Per branch, `r` rounds each switch off a random fraction `h` of the
/// branch's k-hop neighborhood (plus the branch itself by default) and
/// record the angle difference across the branch endpoints when the
/// dispatch stays feasible. The bound extrapolates the worst observed
/// spread by the factor `s`, capped by the longest-path bound. Rounds are
/// seeded per (branch, round), so the result is independent of thread
/// scheduling and reproducible from the master seed.
pub fn knn_bigm(net: &Network, params: &KnnParams) -> Result<BigMVector, BigMError> {
    let g = net.graph();
    let entries: Result<Vec<(usize, f64, Provenance)>, BigMError> = switchable_ids(net)
        .into_par_iter()
        .map(|e| knn_branch(net, &g, e, params).map(|(m, p)| (e, m, p)))
        .collect();
    Ok(collect_vector(Method::Knn, entries?))
}

fn knn_branch(
    net: &Network,
    g: &Graph<f64>,
    branch: usize,
    params: &KnnParams,
) -> Result<(f64, Provenance), BigMError> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    let br = &net.branches()[branch];
    let neighborhood = g.hop_neighborhood(branch, params.k);
    let sample_size = if neighborhood.is_empty() {
        0
    } else {
        ((params.h * neighborhood.len() as f64).ceil() as usize).max(1)
    };

    let mut spread: f64 = 0.0;
    let mut infeasible_rounds = 0;
    for round in 0..params.r {
        let mut rng =
            rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(params.seed, branch as u64, round as u64));
        let mut removed: Vec<usize> =
            neighborhood.choose_multiple(&mut rng, sample_size).copied().collect();
        if params.remove_probed_branch {
            removed.push(branch);
        }
        match solve_dcopf(net, &removed)? {
            OpfOutcome::Feasible(sol) => {
                spread = spread.max((sol.theta[br.from] - sol.theta[br.to]).abs());
            }
            OpfOutcome::Infeasible => infeasible_rounds += 1,
        }
    }

    let (lwp, _, _) = lwp_bound(net, g, branch);
    if infeasible_rounds == params.r || spread == 0.0 {
        // No usable observation: either nothing was feasible or the angles
        // never spread. The bound must stay strictly positive, so fall back.
        return Ok((
            lwp,
            Provenance::AngleSpreadFallback {
                infeasible_rounds,
                zero_spread: infeasible_rounds < params.r,
            },
        ));
    }
    let extrapolated = br.susceptance * params.s * spread;
    let m = extrapolated.min(lwp);
    Ok((
        m,
        Provenance::AngleSpread { spread, infeasible_rounds, capped: lwp < extrapolated },
    ))
}

/// Exhaustive validation report for a bound vector on a small network.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Tightest valid bound estimate per branch: susceptance times the
    /// largest achievable endpoint angle difference over every connected
    /// topology that switches the branch off. Branches that never switch
    /// off in a connected topology are absent.
    pub m_opt: BTreeMap<usize, f64>,
    /// Branches whose vector entry is below its estimate (beyond tolerance).
    pub flagged: Vec<usize>,
    /// Number of connected topologies enumerated.
    pub topologies: usize,
}

/// Compares a bound vector against exhaustive enumeration of switching
/// topologies. Only connected topologies count: a disconnected island pins
/// no angle level, so its spread says nothing about the bound. Refuses
/// networks with more than 12 switchable branches.
pub fn validate_bigm(net: &Network, vector: &BigMVector) -> Result<ValidationReport, BigMError> {
    let switchable = switchable_ids(net);
    if switchable.len() > 12 {
        return Err(BigMError::TooManySwitchable(switchable.len()));
    }
    let g = net.graph();
    let m_all = net.branches().len();

    let mut connected_offs: Vec<Vec<usize>> = Vec::new();
    for mask in 0u32..(1 << switchable.len()) {
        let off: Vec<usize> = switchable
            .iter()
            .enumerate()
            .filter(|(bit, _)| mask & (1 << bit) != 0)
            .map(|(_, &e)| e)
            .collect();
        let mut active = vec![true; m_all];
        for &e in &off {
            active[e] = false;
        }
        if g.is_connected(&active) {
            connected_offs.push(off);
        }
    }

    let mut m_opt: BTreeMap<usize, f64> = BTreeMap::new();
    for off in &connected_offs {
        for &e in off {
            if !vector.m.contains_key(&e) {
                continue;
            }
            let br = &net.branches()[e];
            if let Some(spread) = max_angle_spread(net, off, br.from, br.to)? {
                let needed = br.susceptance * spread;
                let entry = m_opt.entry(e).or_insert(0.0);
                *entry = entry.max(needed);
            }
        }
    }

    let flagged: Vec<usize> = m_opt
        .iter()
        .filter(|(e, &opt)| vector.m[e] < opt - 1e-7 * (1.0 + opt.abs()))
        .map(|(&e, _)| e)
        .collect();
    Ok(ValidationReport { m_opt, flagged, topologies: connected_offs.len() })
}

/// Largest `|theta_i - theta_j|` over the feasible dispatches of the
/// reduced network (two LPs, one per sign). `None` when infeasible.
fn max_angle_spread(
    net: &Network,
    removed: &[usize],
    i: usize,
    j: usize,
) -> Result<Option<f64>, OpfError> {
    let layout = OpfLayout::new(net, removed)?;
    let mut best: Option<f64> = None;
    for sign in [1.0, -1.0] {
        let mut lp = build_opf(net, &layout);
        lp.set_bounds(layout.theta_col(0), 0.0, 0.0);
        for g in 0..layout.n_gen {
            lp.set_objective(layout.p_col(g), 0.0);
        }
        lp.set_objective(layout.theta_col(i), -sign);
        lp.set_objective(layout.theta_col(j), sign);
        let sol = lp.solve(&Default::default())?;
        match sol.status {
            LpStatus::Infeasible => return Ok(None),
            LpStatus::Unbounded => return Err(OpfError::Unbounded),
            LpStatus::Optimal => {
                let spread = -sol.objective;
                best = Some(best.map_or(spread, |b: f64| b.max(spread)));
            }
        }
    }
    Ok(best)
}

/// Branch-wise ratio summary of `candidate.m / reference.m` over the
/// branches both vectors cover. `None` when they share no branch. The
/// standard deviation uses the n-1 normalization and is 0 for a single
/// sample.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RatioStats {
    pub max: f64,
    pub avg: f64,
    pub min: f64,
    pub std: f64,
}

pub fn ratio_stats(candidate: &BigMVector, reference: &BigMVector) -> Option<RatioStats> {
    let ratios: Vec<f64> = candidate
        .m
        .iter()
        .filter_map(|(e, &m)| reference.m.get(e).map(|&r| m / r))
        .collect();
    if ratios.is_empty() {
        return None;
    }
    let n = ratios.len() as f64;
    let avg = ratios.iter().sum::<f64>() / n;
    let var = if ratios.len() > 1 {
        ratios.iter().map(|r| (r - avg).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Some(RatioStats {
        max: ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        avg,
        min: ratios.iter().copied().fold(f64::INFINITY, f64::min),
        std: var.sqrt(),
    })
}
