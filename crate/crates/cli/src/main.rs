//! `creopt`: batch runner for CRB-rate-energy region jobs.
//!
//! Exit codes: 0 on success, 1 on a fatal error or any failed solve,
//! 2 on a usage error, 3 when every requested point is infeasible.

mod jobs;
mod output;
mod scenario_file;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;
use creopt_core::benchmarks::TimeSplit;
use creopt_core::channel::Case;
use creopt_core::metrics::Status;
use creopt_core::region::{EdgeKind, VertexKind};
use creopt_core::scenario::ThresholdSpec;
use log::{error, info};

use jobs::{Design, JobSpec, Scheme, Task};
use output::Format;
use scenario_file::{load_preset, parse_scenario, parse_threshold, LoadedScenario};

const EXIT_FATAL: u8 = 1;
const EXIT_INFEASIBLE: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Parser, Debug)]
#[command(name = "creopt", version, about = "Transmit covariance design over the CRB-rate-energy region")]
struct Args {
    /// Job to run.
    #[arg(value_enum)]
    task: Task,

    /// Scenario file (TOML). Defaults to the built-in constants.
    #[arg(long, value_name = "FILE")]
    scenario: Option<PathBuf>,

    /// Named preset; a `preset` key in the scenario file takes precedence.
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,

    /// Output file.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,

    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,

    /// Surface grid as `N_EHxN_S`.
    #[arg(long, value_name = "NxM", value_parser = parse_grid, default_value = "10x10")]
    grid: (usize, usize),

    /// EH threshold: watts ("1e-3", "1 mW") or a fraction of E_max ("0.5*emax").
    #[arg(long, value_name = "V", value_parser = |s: &str| parse_threshold(s, true))]
    gamma_eh: Option<ThresholdSpec>,

    /// CRB threshold: absolute, "inf", or a multiple of CRB_min ("50*crbmin").
    #[arg(long, value_name = "V", value_parser = |s: &str| parse_threshold(s, false))]
    gamma_s: Option<ThresholdSpec>,

    /// Include covariance matrices in JSON output.
    #[arg(long)]
    emit_covariance: bool,

    /// Worker threads for sweeps.
    #[arg(long, value_name = "N")]
    workers: Option<usize>,

    /// Override the scenario seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,

    /// Override the target model.
    #[arg(long, value_name = "point|extended", value_parser = |s: &str| s.parse::<Case>())]
    case: Option<Case>,

    /// Vertex or edge kinds (vertex: R-max, E-max, C-min; edge: C-R, R-E, C-E). Default: all.
    #[arg(long, value_name = "KIND", value_delimiter = ',')]
    kind: Vec<String>,

    /// Points per edge or co-located sweep.
    #[arg(long, value_name = "N", default_value_t = 10)]
    count: usize,

    /// Benchmark schemes. Default: all.
    #[arg(long, value_enum, value_delimiter = ',')]
    scheme: Vec<Scheme>,

    /// Fixed time-division split `tau_id,tau_eh,tau_s`; optimized when absent.
    #[arg(long, value_name = "A,B,C", value_parser = parse_split)]
    split: Option<TimeSplit>,

    /// Simplex grid resolution for the optimized time-division split.
    #[arg(long, value_name = "N", default_value_t = 100)]
    td_grid: usize,

    /// Co-located receiver designs. Default: both.
    #[arg(long, value_enum, value_delimiter = ',')]
    design: Vec<Design>,

    /// Harvesting time fraction for the time-switching design.
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(|| format!("grid '{s}' must look like 10x10"))?;
    let n: usize = a.trim().parse().map_err(|_| format!("bad grid size '{a}'"))?;
    let m: usize = b.trim().parse().map_err(|_| format!("bad grid size '{b}'"))?;
    if n < 2 || m < 2 {
        return Err("grid dimensions must be at least 2".into());
    }
    Ok((n, m))
}

fn parse_split(s: &str) -> Result<TimeSplit, String> {
    let v: Vec<f64> = s.split(',').map(|x| x.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    match v[..] {
        [a, b, c] => TimeSplit::new(a, b, c).map_err(|e| e.to_string()),
        _ => Err("split needs three comma-separated fractions".into()),
    }
}

fn load_scenario(args: &Args) -> Result<LoadedScenario> {
    let base = match &args.preset {
        Some(name) => load_preset(name)?,
        None => LoadedScenario::defaults(),
    };
    let mut sc = match &args.scenario {
        Some(path) => {
            let src = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            parse_scenario(&src, base).with_context(|| format!("in {}", path.display()))?
        }
        None => base,
    };
    if let Some(seed) = args.seed {
        sc.config.seed = seed;
    }
    if let Some(case) = args.case {
        sc.config.target.case = case;
    }
    Ok(sc)
}

fn build_spec(args: &Args) -> Result<JobSpec> {
    let mut vertex_kinds = vec![VertexKind::RMax, VertexKind::EMax, VertexKind::CMin];
    let mut edge_kinds = vec![EdgeKind::CR, EdgeKind::RE, EdgeKind::CE];
    if !args.kind.is_empty() {
        match args.task {
            Task::Vertex => vertex_kinds = args.kind.iter().map(|k| k.parse()).collect::<Result<_, _>>()?,
            Task::Edge => edge_kinds = args.kind.iter().map(|k| k.parse()).collect::<Result<_, _>>()?,
            _ => bail!("--kind only applies to the vertex and edge tasks"),
        }
    }
    let schemes = if args.scheme.is_empty() {
        vec![Scheme::Optimal, Scheme::Td, Scheme::EmtId, Scheme::EmtCombined]
    } else {
        args.scheme.clone()
    };
    let designs = if args.design.is_empty() { vec![Design::Ts, Design::Ps] } else { args.design.clone() };
    Ok(JobSpec {
        scenario: load_scenario(args)?,
        task: args.task,
        vertex_kinds,
        edge_kinds,
        count: args.count,
        grid: args.grid,
        gamma_eh: args.gamma_eh,
        gamma_s: args.gamma_s,
        schemes,
        split: args.split,
        td_grid: args.td_grid,
        designs,
        tau: args.tau,
        emit_covariance: args.emit_covariance,
    })
}

fn run(args: &Args) -> Result<u8> {
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        if !parent.is_dir() {
            bail!("output directory {} does not exist", parent.display());
        }
    }
    if let Some(n) = args.workers {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the worker pool")?;
    }
    let format = match args.format {
        FormatArg::Csv => Format::Csv,
        FormatArg::Json => Format::Json,
    };
    if args.emit_covariance && format == Format::Csv {
        log::warn!("--emit-covariance has no effect on CSV output");
    }
    let spec = build_spec(args)?;
    let rows = jobs::run_job(&spec)?;
    output::emit(&args.out, &rows, format)?;
    info!("wrote {} rows to {}", rows.len(), args.out.display());

    let failed = rows.iter().filter(|r| r.is(Status::Failed)).count();
    let infeasible = rows.iter().filter(|r| r.is(Status::Infeasible)).count();
    if failed > 0 {
        error!("{failed} of {} points failed", rows.len());
        return Ok(EXIT_FATAL);
    }
    if !rows.is_empty() && infeasible == rows.len() {
        error!("every requested point is infeasible");
        return Ok(EXIT_INFEASIBLE);
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("CREOPT_LOG", "warn")).init();
    let args = Args::parse();
    match run(&args) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FATAL)
        }
    }
}
