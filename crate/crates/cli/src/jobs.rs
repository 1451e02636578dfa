use anyhow::{bail, Result};
use creopt_core::benchmarks::{emt_benchmark, time_division, EmtVariant, TdMode, TimeSplit};
use creopt_core::channel::{Case, ChannelSet};
use creopt_core::metrics::{CrePoint, Status, System, Thresholds};
use creopt_core::p2::{colocated_re, SplitDesign};
use creopt_core::region::{
    lin_space, solve_edge, solve_thresholds, solve_vertex, surface_cells, BoundaryPoint, EdgeKind, RegionConfig,
    ThresholdBox, VertexKind, Vertices,
};
use creopt_core::scenario::{Sweep, ThresholdSpec};
use creopt_core::Error;
use log::{info, warn};
use rayon::prelude::*;

use crate::output::Row;
use crate::scenario_file::LoadedScenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Task {
    Vertex,
    Edge,
    Surface,
    Solve,
    Benchmark,
    Colocated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Scheme {
    Optimal,
    Td,
    EmtId,
    EmtCombined,
}

impl Scheme {
    fn label(&self) -> &'static str {
        match self {
            Scheme::Optimal => "optimal",
            Scheme::Td => "td",
            Scheme::EmtId => "emt_id",
            Scheme::EmtCombined => "emt_combined",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Design {
    Ts,
    Ps,
}

#[derive(Debug, Clone)]
pub struct JobSpec {
    pub scenario: LoadedScenario,
    pub task: Task,
    pub vertex_kinds: Vec<VertexKind>,
    pub edge_kinds: Vec<EdgeKind>,
    pub count: usize,
    pub grid: (usize, usize),
    pub gamma_eh: Option<ThresholdSpec>,
    pub gamma_s: Option<ThresholdSpec>,
    pub schemes: Vec<Scheme>,
    pub split: Option<TimeSplit>,
    pub td_grid: usize,
    pub designs: Vec<Design>,
    pub tau: f64,
    pub emit_covariance: bool,
}

struct Ctx {
    case: Case,
    seed: u64,
    emit_covariance: bool,
}

impl Ctx {
    fn row(&self, task: impl Into<String>, gammas: (Option<f64>, Option<f64>), point: &CrePoint, s: Option<&creopt_core::linalg::CMatrix>) -> Row {
        let row = Row::new(self.case, task, self.seed, gammas, point);
        if self.emit_covariance {
            row.with_covariance(s)
        } else {
            row
        }
    }

    fn boundary(&self, task: &str, bp: &BoundaryPoint) -> Row {
        self.row(task, (Some(bp.gamma_eh), Some(bp.gamma_s)), &bp.point, bp.s.as_ref())
    }
}

fn failed_point(task: &str, e: &Error) -> CrePoint {
    match e {
        Error::Infeasible { .. } => {
            info!("{task}: {e}");
            CrePoint::failed(Status::Infeasible)
        }
        _ => {
            warn!("{task}: {e}");
            CrePoint::failed(Status::Failed)
        }
    }
}

/// Threshold pairs for `solve` and `benchmark`. A preset sweep expands
/// unless the swept threshold was given explicitly.
fn threshold_pairs(spec: &JobSpec, system: &System) -> Vec<Thresholds> {
    let sc = &spec.scenario;
    let eh = spec.gamma_eh.or(sc.gamma_eh).map_or(0.0, |t| t.resolve(system));
    let s = spec.gamma_s.or(sc.gamma_s).map_or(f64::INFINITY, |t| t.resolve(system));
    match &sc.sweep {
        Some(Sweep::EnergyFractions(fs)) if spec.gamma_eh.is_none() => {
            fs.iter().map(|f| Thresholds::new(f * system.energy_max(), s)).collect()
        }
        Some(Sweep::CrbMultiples(ms)) if spec.gamma_s.is_none() => {
            ms.iter().map(|k| Thresholds::new(eh, k * system.crb_min())).collect()
        }
        _ => vec![Thresholds::new(eh, s)],
    }
}

/// Replace the EH link by the ID link, as seen by a co-located receiver.
fn colocated_system(system: &System) -> Result<System> {
    let ch = &system.channels;
    if ch.h_id.nrows() != 1 {
        bail!("the colocated task needs a single-antenna ID receiver (id.n = 1)");
    }
    let mut sys = system.clone();
    sys.channels = ChannelSet::new(ch.h_id.clone(), ch.h_id.clone(), ch.target.clone())?;
    Ok(sys)
}

/// Run one job; rows come back in a deterministic order.
pub fn run_job(spec: &JobSpec) -> Result<Vec<Row>> {
    let mut config = spec.scenario.config.clone();
    if spec.task == Task::Colocated && config.target.case != Case::Extended {
        info!("colocated: switching the target to the extended model");
        config.target.case = Case::Extended;
    }
    let built = config.build()?;
    let system = if spec.task == Task::Colocated { colocated_system(&built)? } else { built };
    let ctx = Ctx { case: system.case(), seed: config.seed, emit_covariance: spec.emit_covariance };
    let region_cfg = RegionConfig::default();

    let rows = match spec.task {
        Task::Vertex => spec
            .vertex_kinds
            .iter()
            .map(|&k| {
                let task = format!("vertex:{}", k.as_str());
                match solve_vertex(k, &system) {
                    Ok(sol) => ctx.row(task, (None, None), &sol.point, Some(&sol.s)),
                    Err(e) => ctx.row(&task, (None, None), &failed_point(&task, &e), None),
                }
            })
            .collect(),
        Task::Edge => {
            let mut rows = Vec::new();
            for &k in &spec.edge_kinds {
                let task = format!("edge:{}", k.as_str());
                for bp in solve_edge(k, &system, spec.count, &region_cfg)? {
                    rows.push(ctx.boundary(&task, &bp));
                }
            }
            rows
        }
        Task::Surface => {
            let (n_eh, n_s) = spec.grid;
            let vertices = Vertices::compute(&system)?;
            let bounds = ThresholdBox::new(&system, &vertices, &region_cfg);
            let mut cells = surface_cells(&system, &bounds, n_eh, n_s, &region_cfg.solver);
            cells.sort_by_key(|c| (c.i, c.j));
            cells.iter().map(|c| ctx.boundary("surface", &c.cell)).collect()
        }
        Task::Solve => threshold_pairs(spec, &system)
            .par_iter()
            .map(|th| {
                let g = (Some(th.gamma_eh), Some(th.gamma_s));
                match solve_thresholds(&system, th, &region_cfg.solver) {
                    Ok(sol) => ctx.row("solve", g, &sol.point, Some(&sol.s)),
                    Err(e) => ctx.row("solve", g, &failed_point("solve", &e), None),
                }
            })
            .collect(),
        Task::Benchmark => {
            let jobs: Vec<(Thresholds, Scheme)> = threshold_pairs(spec, &system)
                .into_iter()
                .flat_map(|th| spec.schemes.iter().map(move |&sc| (th, sc)))
                .collect();
            let (params, tol) = match system.case() {
                Case::Point => (region_cfg.solver.p1.barrier, region_cfg.solver.p1.boundary_tol),
                Case::Extended => (region_cfg.solver.p2.barrier, region_cfg.solver.p2.boundary_tol),
            };
            let mode = match spec.split {
                Some(split) => TdMode::Fixed(split),
                None => TdMode::Optimize { grid: spec.td_grid },
            };
            jobs.par_iter()
                .map(|(th, scheme)| {
                    let task = format!("benchmark:{}", scheme.label());
                    let g = (Some(th.gamma_eh), Some(th.gamma_s));
                    let res = match scheme {
                        Scheme::Optimal => solve_thresholds(&system, th, &region_cfg.solver).map(|s| (s.point, Some(s.s))),
                        Scheme::Td => time_division(&system, mode, th).map(|t| (t.point, None)),
                        Scheme::EmtId | Scheme::EmtCombined => {
                            let v = if *scheme == Scheme::EmtId { EmtVariant::Id } else { EmtVariant::Combined };
                            emt_benchmark(v, &system, th, &params, tol).map(|r| (r.point, Some(r.s)))
                        }
                    };
                    match res {
                        Ok((p, s)) => ctx.row(task, g, &p, s.as_ref()),
                        Err(e) => ctx.row(&task, g, &failed_point(&task, &e), None),
                    }
                })
                .collect()
        }
        Task::Colocated => {
            let gamma_s = spec.gamma_s.or(spec.scenario.gamma_s).unwrap_or(ThresholdSpec::OfCrbMin(2.0)).resolve(&system);
            let mut rows = Vec::new();
            for &d in &spec.designs {
                match d {
                    Design::Ps => {
                        for rho in lin_space(0.0, 1.0, spec.count) {
                            let task = "colocated:PS";
                            match colocated_re(&system, SplitDesign::PowerSplitting { rho }, gamma_s) {
                                Ok(cp) => rows.push(ctx.row(task, (Some(cp.point.energy), Some(gamma_s)), &cp.point, cp.s.as_ref())),
                                Err(e) => rows.push(ctx.row(task, (None, Some(gamma_s)), &failed_point(task, &e), None)),
                            }
                        }
                    }
                    Design::Ts => {
                        let task = "colocated:TS";
                        let total = match colocated_re(&system, SplitDesign::PowerSplitting { rho: 1.0 }, gamma_s) {
                            Ok(cp) => cp.gamma_total,
                            Err(e) => {
                                rows.push(ctx.row(task, (None, Some(gamma_s)), &failed_point(task, &e), None));
                                continue;
                            }
                        };
                        for gamma2 in lin_space(0.0, total, spec.count) {
                            let design = SplitDesign::TimeSwitching { tau: spec.tau, gamma2 };
                            match colocated_re(&system, design, gamma_s) {
                                Ok(cp) => rows.push(ctx.row(task, (Some(gamma2), Some(gamma_s)), &cp.point, None)),
                                Err(e) => rows.push(ctx.row(task, (Some(gamma2), Some(gamma_s)), &failed_point(task, &e), None)),
                            }
                        }
                    }
                }
            }
            rows
        }
    };
    Ok(rows)
}
