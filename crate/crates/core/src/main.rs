//! Command-line front end: compute big-M bounds, solve switching problems,
//! run benchmark experiments, and validate bound vectors.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use otskit::bench::{run_experiment, ExperimentSpec};
use otskit::bigm::{self, BigMVector, KnnParams, KspParams};
use otskit::grid::{parse_network, CaseFormat, Network};
use otskit::ots::{solve_ots, OtsOptions};

#[derive(Parser)]
#[command(name = "otskit", version, about = "DC optimal transmission switching toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    /// Longest weighted path bound.
    Lwp,
    /// Ranked shortest-path probing.
    Ksp,
    /// Hop-neighborhood sampling.
    Knn,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compute big-M bounds for every switchable branch of a case.
    Bigm {
        /// Case file (.m is read as the matrix format, anything else as JSON).
        #[arg(long)]
        case: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Ranking depth of the path probe.
        #[arg(long, default_value_t = 5)]
        k_max: usize,
        /// Single-removal attempts per path.
        #[arg(long, default_value_t = 3)]
        e_max: usize,
        /// Paths to look beyond the stopping rank.
        #[arg(long, default_value_t = 1)]
        l: usize,
        /// Hop radius of the sampled neighborhood.
        #[arg(long, default_value_t = 2)]
        k: usize,
        /// Fraction of the neighborhood switched off per round.
        #[arg(long, default_value_t = 0.2)]
        h: f64,
        /// Spread multiplier on the observed angle difference.
        #[arg(long, default_value_t = 10.0)]
        s: f64,
        /// Sampling rounds per branch.
        #[arg(long, default_value_t = 30)]
        r: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sample only the neighborhood, leaving the probed branch in
        /// service during the sampling rounds.
        #[arg(long)]
        keep_probed_branch: bool,
        /// Write the bound vector here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the switching problem for a case with a precomputed bound
    /// vector.
    Solve {
        #[arg(long)]
        case: PathBuf,
        /// Bound vector produced by the bigm subcommand.
        #[arg(long)]
        bigm: PathBuf,
        /// Switching allowance: how many branches may go out of service.
        #[arg(long = "L", default_value_t = 45)]
        l: usize,
        /// Wall-clock limit in seconds.
        #[arg(long)]
        time_limit: Option<f64>,
        /// Relative optimality gap at which the search stops.
        #[arg(long, default_value_t = 1e-6)]
        gap: f64,
        /// Emit a progress line every this many search nodes.
        #[arg(long, default_value_t = 0)]
        log_every: usize,
    },
    /// Run a benchmark experiment described by a spec file.
    Bench {
        #[arg(long)]
        spec: PathBuf,
        /// CSV output path, one row per instance and method.
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a bound vector against exhaustive topology enumeration
    /// (small cases only). Exits nonzero when a bound is too small.
    Validate {
        #[arg(long)]
        case: PathBuf,
        #[arg(long)]
        bigm: PathBuf,
    },
}

fn load_case(path: &Path) -> anyhow::Result<Network> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read case file {}", path.display()))?;
    let format = if path.extension().is_some_and(|e| e == "m") {
        CaseFormat::MatpowerSubset
    } else {
        CaseFormat::Json
    };
    parse_network(&text, format).with_context(|| format!("cannot parse {}", path.display()))
}

fn load_bigm(path: &Path) -> anyhow::Result<BigMVector> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read bound vector {}", path.display()))?;
    serde_json::from_str(&text)
        .with_context(|| format!("cannot parse bound vector {}", path.display()))
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Bigm {
            case,
            method,
            k_max,
            e_max,
            l,
            k,
            h,
            s,
            r,
            seed,
            keep_probed_branch,
            out,
        } => {
            let net = load_case(&case)?;
            let vector = match method {
                MethodArg::Lwp => bigm::lwp_bigm(&net)?,
                MethodArg::Ksp => bigm::ksp_bigm(&net, &KspParams { k_max, e_max, l })?,
                MethodArg::Knn => bigm::knn_bigm(
                    &net,
                    &KnnParams {
                        k,
                        h,
                        s,
                        r,
                        seed,
                        remove_probed_branch: !keep_probed_branch,
                    },
                )?,
            };
            let text = serde_json::to_string_pretty(&vector)?;
            match out {
                Some(path) => std::fs::write(&path, text)
                    .with_context(|| format!("cannot write {}", path.display()))?,
                None => println!("{text}"),
            }
        }
        Cmd::Solve { case, bigm, l, time_limit, gap, log_every } => {
            let net = load_case(&case)?;
            let bounds = load_bigm(&bigm)?;
            let opts = OtsOptions {
                gap_tol: gap,
                time_limit: time_limit.map(Duration::from_secs_f64),
                log_every,
            };
            let result = solve_ots(&net, &bounds, l, &opts)?;
            println!("{}", serde_json::to_string_pretty(&result)?);
        }
        Cmd::Bench { spec, out } => {
            let text = std::fs::read_to_string(&spec)
                .with_context(|| format!("cannot read spec {}", spec.display()))?;
            let spec: ExperimentSpec = serde_json::from_str(&text)
                .with_context(|| "cannot parse experiment spec")?;
            let file = std::fs::File::create(&out)
                .with_context(|| format!("cannot create {}", out.display()))?;
            let run = run_experiment(&spec, file)?;
            println!("{}", serde_json::to_string_pretty(&run.summary)?);
        }
        Cmd::Validate { case, bigm } => {
            let net = load_case(&case)?;
            let bounds = load_bigm(&bigm)?;
            let report = bigm::validate_bigm(&net, &bounds)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if !report.flagged.is_empty() {
                std::process::exit(1);
            }
        }
    }
    Ok(())
}
