//! Power-network domain types, case-file ingestion, and load scenarios.
//!
//! A [`Network`] is an immutable, validated snapshot: buses with demands,
//! branches with susceptance/capacity/switchability, and generators with
//! linear costs. Branches reference buses by internal index (position in the
//! bus list); bus `id` keeps whatever external numbering the case file used.
//!
//! Two input formats are supported: the crate's own JSON schema (canonical,
//! round-trips bit-identically) and a reader for the common matrix-style
//! power-case text covering the bus/branch/gen/gencost sections. Susceptance
//! is derived as `base_mva / x` from branch reactance when not given
//! directly, and missing branch capacities are filled with a configurable
//! default.

use serde::{Deserialize, Serialize};

use crate::paths::Graph;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    /// External id from the case file; internal indexing is positional.
    pub id: usize,
    /// Power demand, nonnegative, in the case's power unit.
    pub demand: f64,
    pub is_generator: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    /// Internal bus index.
    pub bus: usize,
    /// Linear production cost per power unit.
    pub cost: f64,
    pub p_min: f64,
    pub p_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    /// Position in the branch list; doubles as the edge id in path queries.
    pub id: usize,
    /// Internal bus indices.
    pub from: usize,
    pub to: usize,
    pub susceptance: f64,
    pub capacity: f64,
    pub switchable: bool,
}

impl Branch {
    /// Path weight used throughout: capacity over susceptance.
    pub fn weight(&self) -> f64 {
        self.capacity / self.susceptance
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GridError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("duplicate bus id {0}")]
    DuplicateBus(usize),
    #[error("reference to unknown bus id {0}")]
    UnknownBus(usize),
    #[error("invalid branch {0}: {1}")]
    BadBranch(usize, String),
    #[error("invalid generator at bus {0}: {1}")]
    BadGenerator(usize, String),
    #[error("bus {0} has negative demand")]
    NegativeDemand(usize),
    #[error("network graph is not connected")]
    Disconnected,
    #[error("total demand {demand} outside dispatchable range [{p_min}, {p_max}]")]
    DemandUnservable { demand: f64, p_min: f64, p_max: f64 },
}

/// Immutable validated network. Construct via [`Network::new`] or a parser.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    generators: Vec<Generator>,
    base_mva: f64,
}

impl Network {
    /// Validates and canonicalizes: branch/generator bus references are
    /// internal indices, branch ids are rewritten to positions, and each
    /// bus's `is_generator` flag is recomputed from the generator list.
    pub fn new(
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
        base_mva: f64,
    ) -> Result<Self, GridError> {
        let mut buses = buses;
        let mut seen = std::collections::HashSet::new();
        for b in &buses {
            if !seen.insert(b.id) {
                return Err(GridError::DuplicateBus(b.id));
            }
            if b.demand < 0.0 {
                return Err(GridError::NegativeDemand(b.id));
            }
        }
        let n = buses.len();
        let mut branches = branches;
        for (pos, br) in branches.iter_mut().enumerate() {
            br.id = pos;
            if br.from >= n || br.to >= n {
                return Err(GridError::BadBranch(pos, "endpoint index out of range".into()));
            }
            if br.from == br.to {
                return Err(GridError::BadBranch(pos, "self-loop".into()));
            }
            if !(br.susceptance > 0.0) || !br.susceptance.is_finite() {
                return Err(GridError::BadBranch(pos, format!("susceptance {} not positive", br.susceptance)));
            }
            if !(br.capacity > 0.0) || !br.capacity.is_finite() {
                return Err(GridError::BadBranch(pos, format!("capacity {} not positive", br.capacity)));
            }
        }
        for b in buses.iter_mut() {
            b.is_generator = false;
        }
        for g in &generators {
            if g.bus >= n {
                return Err(GridError::UnknownBus(g.bus));
            }
            if g.p_min < 0.0 || g.p_min > g.p_max {
                return Err(GridError::BadGenerator(
                    buses[g.bus].id,
                    format!("need 0 <= p_min <= p_max, got [{}, {}]", g.p_min, g.p_max),
                ));
            }
            if g.cost < 0.0 {
                return Err(GridError::BadGenerator(buses[g.bus].id, "negative cost".into()));
            }
            buses[g.bus].is_generator = true;
        }

        let net = Self { buses, branches, generators, base_mva };
        if !net.graph().is_connected(&vec![true; net.branches.len()]) {
            return Err(GridError::Disconnected);
        }
        let demand = net.total_demand();
        let p_min: f64 = net.generators.iter().map(|g| g.p_min).sum();
        let p_max: f64 = net.generators.iter().map(|g| g.p_max).sum();
        if demand < p_min - 1e-9 || demand > p_max + 1e-9 {
            return Err(GridError::DemandUnservable { demand, p_min, p_max });
        }
        Ok(net)
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    pub fn num_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn total_demand(&self) -> f64 {
        self.buses.iter().map(|b| b.demand).sum()
    }

    /// Internal index of the bus with external id `id`.
    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    /// Branch id joining the buses with external ids `a` and `b` (either
    /// orientation; first match wins).
    pub fn branch_between(&self, a: usize, b: usize) -> Option<usize> {
        let ia = self.bus_index(a)?;
        let ib = self.bus_index(b)?;
        self.branches
            .iter()
            .find(|br| (br.from == ia && br.to == ib) || (br.from == ib && br.to == ia))
            .map(|br| br.id)
    }

    /// The network as a weighted multigraph: nodes are internal bus indices,
    /// edge ids are branch ids, weights are capacity/susceptance.
    pub fn graph(&self) -> Graph<f64> {
        let mut g = Graph::new(self.buses.len());
        for br in &self.branches {
            g.add_edge(br.from, br.to, br.weight());
        }
        g
    }

    /// Serializes to the canonical JSON schema (external bus ids).
    pub fn to_json(&self) -> String {
        let case = CaseJson {
            buses: self.buses.iter().map(|b| BusJson { id: b.id, d: b.demand }).collect(),
            branches: self
                .branches
                .iter()
                .map(|br| BranchJson {
                    from: self.buses[br.from].id,
                    to: self.buses[br.to].id,
                    b: Some(br.susceptance),
                    x: None,
                    fmax: Some(br.capacity),
                    switchable: br.switchable,
                })
                .collect(),
            generators: self
                .generators
                .iter()
                .map(|g| GenJson { bus: self.buses[g.bus].id, c: g.cost, pmin: g.p_min, pmax: g.p_max })
                .collect(),
            base_mva: self.base_mva,
        };
        serde_json::to_string_pretty(&case).expect("network serialization cannot fail")
    }
}

/// A multiplicative load perturbation: every bus demand is scaled by the
/// class factor times its per-bus multiplier. Reproducible from the seed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LoadScenario {
    pub class_factor: f64,
    /// Keyed by external bus id; buses absent from the map keep factor 1.
    pub per_bus_multipliers: std::collections::BTreeMap<usize, f64>,
    pub seed: u64,
}

impl LoadScenario {
    /// The identity scenario.
    pub fn nominal() -> Self {
        Self { class_factor: 1.0, per_bus_multipliers: Default::default(), seed: 0 }
    }

    /// Per-bus multipliers drawn uniformly from [0.95, 1.05], one per bus in
    /// stored order, deterministically from `seed`.
    pub fn sample(net: &Network, class_factor: f64, seed: u64) -> Self {
        use rand::distributions::{Distribution, Uniform};
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let dist = Uniform::new_inclusive(0.95, 1.05);
        let per_bus_multipliers = net
            .buses()
            .iter()
            .map(|b| (b.id, dist.sample(&mut rng)))
            .collect();
        Self { class_factor, per_bus_multipliers, seed }
    }
}

/// Returns a copy of `net` with demands scaled by the scenario. Topology,
/// generators, and all other data are untouched; the input is not mutated.
/// The result is intentionally not re-validated: a perturbed demand that
/// exceeds the dispatchable range surfaces as an infeasible solve, which the
/// benchmark harness records rather than aborts on.
pub fn apply_scenario(net: &Network, sc: &LoadScenario) -> Network {
    let mut out = net.clone();
    for b in out.buses.iter_mut() {
        let mult = sc.per_bus_multipliers.get(&b.id).copied().unwrap_or(1.0);
        b.demand *= sc.class_factor * mult;
    }
    out
}

#[derive(Clone, Copy, Debug)]
pub enum CaseFormat {
    Json,
    MatpowerSubset,
}

#[derive(Clone, Debug)]
pub struct ParseOptions {
    /// Capacity assigned to branches whose case entry has none (or zero).
    pub default_capacity: f64,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self { default_capacity: 27.0 }
    }
}

pub fn parse_network(case_text: &str, format: CaseFormat) -> Result<Network, GridError> {
    parse_network_with(case_text, format, &ParseOptions::default())
}

pub fn parse_network_with(
    case_text: &str,
    format: CaseFormat,
    opts: &ParseOptions,
) -> Result<Network, GridError> {
    match format {
        CaseFormat::Json => parse_json(case_text, opts),
        CaseFormat::MatpowerSubset => parse_matpower(case_text, opts),
    }
}

#[derive(Serialize, Deserialize)]
struct CaseJson {
    buses: Vec<BusJson>,
    branches: Vec<BranchJson>,
    generators: Vec<GenJson>,
    #[serde(default = "default_base_mva")]
    base_mva: f64,
}

fn default_base_mva() -> f64 {
    100.0
}

#[derive(Serialize, Deserialize)]
struct BusJson {
    id: usize,
    d: f64,
}

#[derive(Serialize, Deserialize)]
struct BranchJson {
    from: usize,
    to: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fmax: Option<f64>,
    #[serde(default = "default_true")]
    switchable: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Serialize, Deserialize)]
struct GenJson {
    bus: usize,
    c: f64,
    pmin: f64,
    pmax: f64,
}

fn parse_json(text: &str, opts: &ParseOptions) -> Result<Network, GridError> {
    let case: CaseJson = serde_json::from_str(text).map_err(|e| GridError::Parse(e.to_string()))?;
    let buses: Vec<Bus> = case
        .buses
        .iter()
        .map(|b| Bus { id: b.id, demand: b.d, is_generator: false })
        .collect();
    let index_of = |ext: usize| -> Result<usize, GridError> {
        buses.iter().position(|b| b.id == ext).ok_or(GridError::UnknownBus(ext))
    };
    let mut branches = Vec::with_capacity(case.branches.len());
    for (pos, br) in case.branches.iter().enumerate() {
        let susceptance = match (br.b, br.x) {
            (Some(b), _) => b,
            (None, Some(x)) if x != 0.0 => 1.0 / x,
            (None, Some(_)) => {
                return Err(GridError::BadBranch(pos, "zero reactance".into()));
            }
            (None, None) => {
                return Err(GridError::BadBranch(pos, "needs susceptance b or reactance x".into()));
            }
        };
        branches.push(Branch {
            id: pos,
            from: index_of(br.from)?,
            to: index_of(br.to)?,
            susceptance,
            capacity: br.fmax.unwrap_or(opts.default_capacity),
            switchable: br.switchable,
        });
    }
    let mut generators = Vec::with_capacity(case.generators.len());
    for g in &case.generators {
        generators.push(Generator { bus: index_of(g.bus)?, cost: g.c, p_min: g.pmin, p_max: g.pmax });
    }
    Network::new(buses, branches, generators, case.base_mva)
}

/// Extracts the rows of `mpc.<name> = [ ... ];` as numeric vectors.
fn matpower_section(text: &str, name: &str) -> Result<Vec<Vec<f64>>, GridError> {
    let needle = format!("mpc.{name}");
    let start = text
        .find(&needle)
        .ok_or_else(|| GridError::Parse(format!("missing section {needle}")))?;
    let open = text[start..]
        .find('[')
        .ok_or_else(|| GridError::Parse(format!("section {needle} has no opening bracket")))?;
    let close = text[start + open..]
        .find(']')
        .ok_or_else(|| GridError::Parse(format!("section {needle} has no closing bracket")))?;
    let body = &text[start + open + 1..start + open + close];
    let mut rows = Vec::new();
    for line in body.split([';', '\n']) {
        let line = line.split('%').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
        let row = row.map_err(|e| GridError::Parse(format!("bad number in {needle}: {e}")))?;
        rows.push(row);
    }
    Ok(rows)
}

fn matpower_scalar(text: &str, name: &str) -> Option<f64> {
    let needle = format!("mpc.{name}");
    let start = text.find(&needle)?;
    let rest = &text[start + needle.len()..];
    let eq = rest.find('=')?;
    let tail = rest[eq + 1..].trim_start();
    let end = tail.find(';')?;
    tail[..end].trim().parse().ok()
}

fn parse_matpower(text: &str, opts: &ParseOptions) -> Result<Network, GridError> {
    let base_mva = matpower_scalar(text, "baseMVA").unwrap_or(100.0);
    let bus_rows = matpower_section(text, "bus")?;
    let branch_rows = matpower_section(text, "branch")?;
    let gen_rows = matpower_section(text, "gen")?;
    let gencost_rows = matpower_section(text, "gencost").unwrap_or_default();

    let mut buses = Vec::with_capacity(bus_rows.len());
    for row in &bus_rows {
        if row.len() < 3 {
            return Err(GridError::Parse("bus row needs at least 3 columns".into()));
        }
        buses.push(Bus { id: row[0] as usize, demand: row[2], is_generator: false });
    }
    let index_of = |ext: usize| -> Result<usize, GridError> {
        buses.iter().position(|b| b.id == ext).ok_or(GridError::UnknownBus(ext))
    };

    let mut branches = Vec::new();
    for (pos, row) in branch_rows.iter().enumerate() {
        if row.len() < 11 {
            return Err(GridError::Parse(format!("branch row {pos} needs at least 11 columns")));
        }
        if row[10] == 0.0 {
            continue; // out of service
        }
        let x = row[3];
        if x <= 0.0 {
            return Err(GridError::BadBranch(pos, format!("reactance {x} not positive")));
        }
        let rate_a = row[5];
        branches.push(Branch {
            id: branches.len(),
            from: index_of(row[0] as usize)?,
            to: index_of(row[1] as usize)?,
            susceptance: base_mva / x,
            capacity: if rate_a > 0.0 { rate_a } else { opts.default_capacity },
            switchable: true,
        });
    }

    let mut generators = Vec::new();
    for (pos, row) in gen_rows.iter().enumerate() {
        if row.len() < 10 {
            return Err(GridError::Parse(format!("gen row {pos} needs at least 10 columns")));
        }
        let (status, p_max, p_min) = (row[7], row[8], row[9]);
        if status <= 0.0 || p_max <= 0.0 {
            continue; // decommitted or capacity-less unit
        }
        let cost = match gencost_rows.get(pos) {
            Some(c) => {
                // Polynomial cost rows: MODEL STARTUP SHUTDOWN NCOST cN-1 .. c0;
                // the linear coefficient is second from the end.
                if c.len() < 4 || c[0] != 2.0 {
                    return Err(GridError::Parse(format!("gencost row {pos}: only polynomial model 2 is supported")));
                }
                let ncost = c[3] as usize;
                if c.len() < 4 + ncost || ncost < 2 {
                    return Err(GridError::Parse(format!("gencost row {pos}: bad coefficient count")));
                }
                c[4 + ncost - 2]
            }
            None => 1.0,
        };
        generators.push(Generator {
            bus: index_of(row[0] as usize)?,
            cost,
            p_min: p_min.max(0.0),
            p_max,
        });
    }
    Network::new(buses, branches, generators, base_mva)
}

/// The seven-node illustrative network: demand 2.5 at bus t, two generator
/// buses g1 (cheap) and g2, all susceptances 1. Six backbone branches have
/// capacity 3; the two switchable shortcuts b-g1 and f-g2 have capacity 1.
///
/// Bus order (internal index = position): t=0, b=1, d=2, f=3, h=4, g1=5, g2=6.
pub fn figure1_example() -> Network {
    let names_demand = [2.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let buses: Vec<Bus> = names_demand
        .iter()
        .enumerate()
        .map(|(i, &d)| Bus { id: i, demand: d, is_generator: false })
        .collect();
    let (t, b, d, f, h, g1, g2) = (0, 1, 2, 3, 4, 5, 6);
    let mk = |from: usize, to: usize, capacity: f64, switchable: bool| Branch {
        id: 0,
        from,
        to,
        susceptance: 1.0,
        capacity,
        switchable,
    };
    let branches = vec![
        mk(t, b, 3.0, false),
        mk(t, f, 3.0, false),
        mk(f, h, 3.0, false),
        mk(h, g2, 3.0, false),
        mk(b, d, 3.0, false),
        mk(d, g1, 3.0, false),
        mk(b, g1, 1.0, true),
        mk(f, g2, 1.0, true),
    ];
    let generators = vec![
        Generator { bus: g1, cost: 1.0, p_min: 0.0, p_max: 3.0 },
        Generator { bus: g2, cost: 2.0, p_min: 0.0, p_max: 3.0 },
    ];
    Network::new(buses, branches, generators, 100.0).expect("fixture is valid by construction")
}
