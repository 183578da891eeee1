//! Benchmark harness: how do the bound methods trade solution quality for
//! solve time across randomized load scenarios?
//!
//! An [`ExperimentSpec`] names a case file, the methods to compare, a set
//! of load classes, and how many perturbed instances to draw per class.
//! Every instance scales each bus demand by its class factor times a
//! uniform multiplier from [0.95, 1.05], then solves the switching problem
//! once per method. Results land in a CSV (one row per instance and
//! method) and in an aggregate [`BenchSummary`]. Per-instance failures -
//! an infeasible base case, a timeout without incumbent - are recorded in
//! their row, never fatal.
//!
//! The heuristic methods are scored against the longest-path bound as the
//! reference: `rel_gap = (z_method - z_reference) / z_reference` measures
//! how much objective is given up (positive means worse), and the speedup
//! compares solve times on the instances both methods completed.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::bigm::{self, BigMVector, KnnParams, KspParams, Method};
use crate::grid::{self, apply_scenario, CaseFormat, GridError, LoadScenario, Network};
use crate::ots::{solve_ots, OtsError, OtsOptions};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("cannot read case file {path}: {source}")]
    CaseIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("csv output failure: {0}")]
    Csv(#[from] csv::Error),
    #[error("experiment lists no methods")]
    NoMethods,
}

/// Declarative description of one benchmark run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentSpec {
    /// Case file; `.m` files are read as the matrix format, anything else
    /// as the JSON schema.
    pub case_path: String,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Demand scaling factors; one batch of instances is drawn per class.
    #[serde(default = "default_classes")]
    pub classes: Vec<f64>,
    #[serde(default = "default_instances")]
    pub instances_per_class: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Switching allowance passed to every solve.
    #[serde(default = "default_max_off")]
    pub max_off: usize,
    #[serde(default = "default_gap")]
    pub gap_tol: f64,
    /// Per-solve time limit in seconds; absent means unlimited.
    #[serde(default)]
    pub time_limit_s: Option<f64>,
    #[serde(default)]
    pub ksp: KspParams,
    #[serde(default)]
    pub knn: KnnParams,
}

fn default_methods() -> Vec<Method> {
    vec![Method::Lwp, Method::Ksp, Method::Knn]
}

fn default_classes() -> Vec<f64> {
    vec![0.95, 1.0, 1.05]
}

fn default_instances() -> usize {
    20
}

fn default_max_off() -> usize {
    45
}

fn default_gap() -> f64 {
    1e-4
}

impl ExperimentSpec {
    pub fn load_network(&self) -> Result<Network, BenchError> {
        let text = std::fs::read_to_string(&self.case_path).map_err(|source| {
            BenchError::CaseIo { path: self.case_path.clone(), source }
        })?;
        let format = if self.case_path.ends_with(".m") {
            CaseFormat::MatpowerSubset
        } else {
            CaseFormat::Json
        };
        Ok(grid::parse_network(&text, format)?)
    }
}

/// One CSV row: a method's outcome on one instance. Optional fields stay
/// empty in the CSV when the stage that would produce them failed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricsRow {
    pub instance: String,
    pub method: String,
    pub z: Option<f64>,
    pub rel_gap: Option<f64>,
    pub time_s: Option<f64>,
    pub bigm_time_s: f64,
    pub solved: bool,
    pub opt_gap: Option<f64>,
    pub max_ratio: Option<f64>,
    pub avg_ratio: Option<f64>,
    pub min_ratio: Option<f64>,
    pub std_ratio: Option<f64>,
}

/// Distribution of the per-instance objective gaps of one method.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GapSummary {
    pub count: usize,
    pub mean: f64,
    pub mean_abs: f64,
    /// Sample standard deviation (n-1); zero for a single observation.
    pub std: f64,
    /// Gaps at or above 1e-5; smaller ones count as solver noise.
    pub non_negligible: usize,
}

pub fn summarize_gaps(gaps: &[f64]) -> Option<GapSummary> {
    if gaps.is_empty() {
        return None;
    }
    let n = gaps.len() as f64;
    let mean = gaps.iter().sum::<f64>() / n;
    let mean_abs = gaps.iter().map(|g| g.abs()).sum::<f64>() / n;
    let std = if gaps.len() > 1 {
        (gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some(GapSummary {
        count: gaps.len(),
        mean,
        mean_abs,
        std,
        non_negligible: gaps.iter().filter(|&&g| g >= 1e-5).count(),
    })
}

/// Solve-time comparison over instances both methods completed:
/// `reference time / candidate time`, so values above 1 mean the candidate
/// is faster.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Speedup {
    pub ratio_of_means: f64,
    pub geometric_mean: f64,
}

pub fn speedup(pairs: &[(f64, f64)]) -> Option<Speedup> {
    if pairs.is_empty() || pairs.iter().any(|&(r, c)| r <= 0.0 || c <= 0.0) {
        return None;
    }
    let ref_sum: f64 = pairs.iter().map(|&(r, _)| r).sum();
    let cand_sum: f64 = pairs.iter().map(|&(_, c)| c).sum();
    if cand_sum <= 0.0 {
        return None;
    }
    let log_mean =
        pairs.iter().map(|&(r, c)| (r / c).ln()).sum::<f64>() / pairs.len() as f64;
    Some(Speedup { ratio_of_means: ref_sum / cand_sum, geometric_mean: log_mean.exp() })
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct MethodSummary {
    pub instances: usize,
    pub solved: usize,
    pub gaps: Option<GapSummary>,
    pub mean_time_s: Option<f64>,
    pub mean_bigm_time_s: f64,
    pub speedup_vs_reference: Option<Speedup>,
    pub mean_avg_ratio: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchSummary {
    pub reference: String,
    pub per_method: BTreeMap<String, MethodSummary>,
}

pub struct BenchRun {
    pub rows: Vec<MetricsRow>,
    pub summary: BenchSummary,
}

#[derive(Clone)]
struct MethodOutcome {
    bigm_time_s: f64,
    vector: Option<BigMVector>,
    z: Option<f64>,
    time_s: Option<f64>,
    opt_gap: Option<f64>,
    solved: bool,
}

fn run_method(net: &Network, method: Method, spec: &ExperimentSpec) -> MethodOutcome {
    let bigm_start = Instant::now();
    let vector = match method {
        Method::Lwp => bigm::lwp_bigm(net),
        Method::Ksp => bigm::ksp_bigm(net, &spec.ksp),
        Method::Knn => bigm::knn_bigm(net, &spec.knn),
    };
    let bigm_time_s = bigm_start.elapsed().as_secs_f64();
    let vector = match vector {
        Ok(v) => v,
        Err(_) => {
            // Typically an infeasible base case under a heavy load draw;
            // the row records the failed stage and the run moves on.
            return MethodOutcome {
                bigm_time_s,
                vector: None,
                z: None,
                time_s: None,
                opt_gap: None,
                solved: false,
            };
        }
    };
    let opts = OtsOptions {
        gap_tol: spec.gap_tol,
        time_limit: spec.time_limit_s.map(Duration::from_secs_f64),
        log_every: 0,
    };
    match solve_ots(net, &vector, spec.max_off, &opts) {
        Ok(res) => MethodOutcome {
            bigm_time_s,
            vector: Some(vector),
            z: Some(res.objective),
            time_s: Some(res.wall_time_s),
            opt_gap: Some(res.opt_gap),
            solved: res.opt_gap <= spec.gap_tol,
        },
        Err(OtsError::Infeasible) | Err(OtsError::Milp(_)) | Err(OtsError::Lp(_))
        | Err(OtsError::MissingBound(_)) => MethodOutcome {
            bigm_time_s,
            vector: Some(vector),
            z: None,
            time_s: None,
            opt_gap: None,
            solved: false,
        },
    }
}

/// Runs the experiment, streaming one CSV row per (instance, method) to
/// `out` and returning all rows plus the aggregate summary. The exit is
/// clean even when individual instances fail; only setup problems (a
/// missing case file, malformed spec) abort.
pub fn run_experiment(spec: &ExperimentSpec, out: impl Write) -> Result<BenchRun, BenchError> {
    if spec.methods.is_empty() {
        return Err(BenchError::NoMethods);
    }
    let base_net = spec.load_network()?;
    let reference = if spec.methods.contains(&Method::Lwp) { Method::Lwp } else { spec.methods[0] };

    let mut writer = csv::Writer::from_writer(out);
    let mut rows: Vec<MetricsRow> = Vec::new();

    for (ci, &class) in spec.classes.iter().enumerate() {
        for ii in 0..spec.instances_per_class {
            let seed = bigm::derive_seed(spec.master_seed, ci as u64, ii as u64);
            let scenario = LoadScenario::sample(&base_net, class, seed);
            let net = apply_scenario(&base_net, &scenario);
            let instance = format!("{class:.2}-{ii:02}");

            // The reference method runs first so the others can be scored
            // against its objective and bound vector.
            let ref_outcome = run_method(&net, reference, spec);
            let ref_z = ref_outcome.z;
            let ref_vector = ref_outcome.vector.clone();

            for &method in &spec.methods {
                let outcome = if method == reference {
                    ref_outcome.clone()
                } else {
                    run_method(&net, method, spec)
                };
                let ratios = match (&outcome.vector, &ref_vector) {
                    (Some(v), Some(r)) => bigm::ratio_stats(v, r),
                    _ => None,
                };
                let rel_gap = match (outcome.z, ref_z) {
                    (Some(z), Some(zr)) if zr.abs() > 1e-12 => Some((z - zr) / zr),
                    _ => None,
                };
                let row = MetricsRow {
                    instance: instance.clone(),
                    method: method.to_string(),
                    z: outcome.z,
                    rel_gap,
                    time_s: outcome.time_s,
                    bigm_time_s: outcome.bigm_time_s,
                    solved: outcome.solved,
                    opt_gap: outcome.opt_gap,
                    max_ratio: ratios.map(|r| r.max),
                    avg_ratio: ratios.map(|r| r.avg),
                    min_ratio: ratios.map(|r| r.min),
                    std_ratio: ratios.map(|r| r.std),
                };
                writer.serialize(&row)?;
                rows.push(row);
            }
        }
    }
    writer.flush().map_err(csv::Error::from)?;

    let summary = summarize(&rows, reference);
    Ok(BenchRun { rows, summary })
}

fn summarize(rows: &[MetricsRow], reference: Method) -> BenchSummary {
    let ref_name = reference.to_string();
    let mut per_method: BTreeMap<String, MethodSummary> = BTreeMap::new();
    let methods: Vec<String> = {
        let mut seen = Vec::new();
        for r in rows {
            if !seen.contains(&r.method) {
                seen.push(r.method.clone());
            }
        }
        seen
    };
    let ref_times: BTreeMap<&str, f64> = rows
        .iter()
        .filter(|r| r.method == ref_name)
        .filter_map(|r| r.time_s.map(|t| (r.instance.as_str(), t)))
        .collect();

    for name in methods {
        let mine: Vec<&MetricsRow> = rows.iter().filter(|r| r.method == name).collect();
        let gaps: Vec<f64> = mine.iter().filter_map(|r| r.rel_gap).collect();
        let times: Vec<f64> = mine.iter().filter_map(|r| r.time_s).collect();
        let pairs: Vec<(f64, f64)> = mine
            .iter()
            .filter_map(|r| {
                let t = r.time_s?;
                let rt = ref_times.get(r.instance.as_str())?;
                Some((*rt, t))
            })
            .collect();
        let avg_ratios: Vec<f64> = mine.iter().filter_map(|r| r.avg_ratio).collect();
        per_method.insert(
            name.clone(),
            MethodSummary {
                instances: mine.len(),
                solved: mine.iter().filter(|r| r.solved).count(),
                gaps: summarize_gaps(&gaps),
                mean_time_s: if times.is_empty() {
                    None
                } else {
                    Some(times.iter().sum::<f64>() / times.len() as f64)
                },
                mean_bigm_time_s: mine.iter().map(|r| r.bigm_time_s).sum::<f64>()
                    / mine.len().max(1) as f64,
                speedup_vs_reference: if name == ref_name { None } else { speedup(&pairs) },
                mean_avg_ratio: if avg_ratios.is_empty() {
                    None
                } else {
                    Some(avg_ratios.iter().sum::<f64>() / avg_ratios.len() as f64)
                },
            },
        );
    }
    BenchSummary { reference: ref_name, per_method }
}
