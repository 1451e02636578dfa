//! Pareto boundary of the CRB-rate-energy region: the three single-objective
//! vertices, the three two-objective edges and a threshold grid over the
//! interior of the boundary surface.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{steering, Case, Target};
use crate::convex::barrier::{pack_hermitian, unpack_hermitian};
use crate::convex::{barrier_maximize, phase_one, Affine, AffineHermitian, BarrierParams, BarrierProblem, ConcaveFn, Lmi, LmiKind};
use crate::error::{Error, Result};
use crate::linalg::{self, cr, CMatrix, RVector};
use crate::metrics::{CrePoint, SolveMeta, Status, System, Thresholds};
use crate::p1::{solve_p1, P1Config, P1Problem};
use crate::p2::{solve_p2, P2Config};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VertexKind {
    #[serde(rename = "R-max")]
    RMax,
    #[serde(rename = "E-max")]
    EMax,
    #[serde(rename = "C-min")]
    CMin,
}

impl VertexKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            VertexKind::RMax => "R-max",
            VertexKind::EMax => "E-max",
            VertexKind::CMin => "C-min",
        }
    }
}

impl std::str::FromStr for VertexKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "r-max" | "rmax" => Ok(VertexKind::RMax),
            "e-max" | "emax" => Ok(VertexKind::EMax),
            "c-min" | "cmin" => Ok(VertexKind::CMin),
            _ => Err(Error::InvalidInput(format!("unknown vertex kind '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeKind {
    #[serde(rename = "C-R")]
    CR,
    #[serde(rename = "R-E")]
    RE,
    #[serde(rename = "C-E")]
    CE,
}

impl EdgeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EdgeKind::CR => "C-R",
            EdgeKind::RE => "R-E",
            EdgeKind::CE => "C-E",
        }
    }
}

impl std::str::FromStr for EdgeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "c-r" | "cr" => Ok(EdgeKind::CR),
            "r-e" | "re" => Ok(EdgeKind::RE),
            "c-e" | "ce" => Ok(EdgeKind::CE),
            _ => Err(Error::InvalidInput(format!("unknown edge kind '{s}'"))),
        }
    }
}

/// A covariance together with its metrics.
#[derive(Debug, Clone)]
pub struct Solved {
    pub s: CMatrix,
    pub point: CrePoint,
}

/// One threshold pair and what was achieved there. `s` is `None` for failed
/// or infeasible cells.
#[derive(Debug, Clone)]
pub struct BoundaryPoint {
    pub gamma_eh: f64,
    pub gamma_s: f64,
    pub s: Option<CMatrix>,
    pub point: CrePoint,
}

impl BoundaryPoint {
    fn from_result(gamma_eh: f64, gamma_s: f64, res: Result<Solved>) -> Self {
        match res {
            Ok(sol) => Self { gamma_eh, gamma_s, s: Some(sol.s), point: sol.point },
            Err(Error::Infeasible { .. }) => Self { gamma_eh, gamma_s, s: None, point: CrePoint::failed(Status::Infeasible) },
            Err(_) => Self { gamma_eh, gamma_s, s: None, point: CrePoint::failed(Status::Failed) },
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SolverConfig {
    pub p1: P1Config,
    pub p2: P2Config,
}

/// Rate maximization under thresholds for either target model.
pub fn solve_thresholds(system: &System, th: &Thresholds, cfg: &SolverConfig) -> Result<Solved> {
    match system.case() {
        Case::Point => solve_p1(system, th, &cfg.p1).map(|sol| Solved { s: sol.s, point: sol.point }),
        Case::Extended => solve_p2(system, th, &cfg.p2).map(|sol| Solved { s: sol.s, point: sol.point }),
    }
}

// ---------------------------------------------------------------------------
// Vertices

/// Water-filling over the eigenmodes of `H_ID`.
pub fn rate_max_covariance(system: &System) -> Result<CMatrix> {
    let dec = linalg::svd(&system.channels.h_id);
    let gains: Vec<f64> = dec.sigma.iter().map(|s| s * s).collect();
    let p = linalg::water_fill(&gains, system.sigma_id_sq, system.power)?;
    let v = dec.v.columns(0, p.len()).into_owned();
    Ok(linalg::from_eigen(&v, &p))
}

/// All power on the strongest eigenmode of `H_EH`.
pub fn energy_max_covariance(system: &System) -> CMatrix {
    let dec = linalg::svd(&system.channels.h_eh);
    let v = dec.v.column(0).into_owned();
    linalg::outer(&v, &v) * cr(system.power)
}

/// `(P/M) a_t* a_tᵀ` for a point target, `(P/M) I` for an extended one.
pub fn crb_min_covariance(system: &System) -> CMatrix {
    let m = system.m();
    let scale = cr(system.power / m as f64);
    match &system.channels.target {
        Target::Point(p) => {
            let a = steering(p.theta, m, 0).conjugate();
            linalg::outer(&a, &a) * scale
        }
        Target::Extended(_) => CMatrix::identity(m, m) * scale,
    }
}

pub fn solve_vertex(kind: VertexKind, system: &System) -> Result<Solved> {
    let s = match kind {
        VertexKind::RMax => rate_max_covariance(system)?,
        VertexKind::EMax => energy_max_covariance(system),
        VertexKind::CMin => crb_min_covariance(system),
    };
    let point = system.evaluate(&s, SolveMeta::closed_form());
    Ok(Solved { s, point })
}

#[derive(Debug, Clone)]
pub struct Vertices {
    pub r_max: Solved,
    pub e_max: Solved,
    pub c_min: Solved,
}

impl Vertices {
    pub fn compute(system: &System) -> Result<Self> {
        Ok(Self {
            r_max: solve_vertex(VertexKind::RMax, system)?,
            e_max: solve_vertex(VertexKind::EMax, system)?,
            c_min: solve_vertex(VertexKind::CMin, system)?,
        })
    }

    pub fn get(&self, kind: VertexKind) -> &Solved {
        match kind {
            VertexKind::RMax => &self.r_max,
            VertexKind::EMax => &self.e_max,
            VertexKind::CMin => &self.c_min,
        }
    }
}

// ---------------------------------------------------------------------------
// Edges

/// Maximize the harvested power under the CRB threshold and the budget.
pub fn max_energy(system: &System, gamma_s: f64, params: &BarrierParams, boundary_tol: f64) -> Result<Solved> {
    let m = system.m();
    let s_map = AffineHermitian::hermitian_variable(m, 0);
    let smax = linalg::spectral_norm(&system.channels.h_eh);
    let g = linalg::hermitian_part(&(system.channels.h_eh.adjoint() * &system.channels.h_eh)) * cr(1.0 / (smax * smax).max(f64::MIN_POSITIVE));
    let mut lmis = vec![Lmi { map: s_map.clone(), kind: LmiKind::Domain }];
    let mut constraints = Vec::new();
    match system.case() {
        Case::Point => {
            let problem = P1Problem::new(system, &Thresholds::new(0.0, gamma_s))?;
            let (cons, extra) = problem.primal_constraints(&s_map);
            constraints.extend(cons);
            lmis.extend(extra);
        }
        Case::Extended => {
            constraints.push(ConcaveFn::affine(Affine::constant(1.0).plus(&s_map.trace_with(&CMatrix::identity(m, m)).scaled(-1.0))));
            if gamma_s.is_finite() {
                let cap = system.gamma_s2(gamma_s) * system.power;
                let rel = cap / (m * m) as f64 - 1.0;
                if rel < -boundary_tol {
                    return Err(Error::Infeasible { reason: "Γ_S below the minimum CRB".into(), max_slack: rel });
                }
                if rel <= boundary_tol {
                    let s = crb_min_covariance(system);
                    let point = system.evaluate(&s, SolveMeta { status: Status::Boundary, iterations: 0, duality_gap: None });
                    return Ok(Solved { s, point });
                }
                constraints.push(ConcaveFn::affine(Affine::constant(1.0)).with_neg_trace_inv(1.0 / cap, s_map.clone()));
            }
        }
    }
    let start = RVector::from_vec(pack_hermitian(&(CMatrix::identity(m, m) * cr(0.5 / m as f64))));
    let mut prob = BarrierProblem { nvars: m * m, objective: ConcaveFn::affine(s_map.trace_with(&g)), constraints, lmis, start };
    let ph = phase_one(&prob, params, None)?;
    if ph.slack < -boundary_tol {
        return Err(Error::Infeasible { reason: "Γ_S below the minimum CRB".into(), max_slack: ph.slack });
    }
    let unpack = |x: &RVector| unpack_hermitian(&x.as_slice()[..m * m], m) * cr(system.power);
    if ph.slack <= boundary_tol {
        let s = unpack(&ph.x);
        let point = system.evaluate(&s, SolveMeta { status: Status::Boundary, iterations: ph.newton_steps, duality_gap: None });
        return Ok(Solved { s, point });
    }
    prob.start = ph.x;
    let sol = barrier_maximize(&prob, params)?;
    let s = unpack(&sol.x);
    let meta = SolveMeta { status: Status::Optimal, iterations: ph.newton_steps + sol.newton_steps, duality_gap: Some(sol.complementarity) };
    let point = system.evaluate(&s, meta);
    Ok(Solved { s, point })
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 || hi <= lo {
        return vec![lo; n];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|k| match k {
            0 => lo,
            _ if k + 1 == n => hi,
            _ => (a + (b - a) * k as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn lin_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|k| if k + 1 == n { hi } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 }).collect()
}

#[derive(Debug, Clone, Copy)]
pub struct RegionConfig {
    pub solver: SolverConfig,
    /// Upper CRB threshold as a multiple of `CRB_min` where the natural end
    /// point is infinite, and always in the extended case.
    pub crb_cap: f64,
}

impl Default for RegionConfig {
    fn default() -> Self {
        Self { solver: SolverConfig::default(), crb_cap: 1e4 }
    }
}

/// Threshold ranges that span the boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdBox {
    pub e_lo: f64,
    pub e_hi: f64,
    pub s_lo: f64,
    pub s_hi: f64,
    /// Upper CRB end of the C-R edge (CRB at the R-max vertex, capped).
    pub s_rate: f64,
    /// Upper CRB end of the C-E edge (CRB at the E-max vertex, capped).
    pub s_energy: f64,
}

impl ThresholdBox {
    pub fn new(system: &System, v: &Vertices, cfg: &RegionConfig) -> Self {
        let crb_min = system.crb_min();
        let cap = crb_min * cfg.crb_cap;
        let clip = |x: f64| {
            let x = x.max(crb_min);
            match system.case() {
                Case::Extended => x.min(cap),
                Case::Point if x.is_finite() => x,
                Case::Point => cap,
            }
        };
        let s_rate = clip(v.r_max.point.crb);
        let s_energy = clip(v.e_max.point.crb);
        Self {
            e_lo: v.r_max.point.energy.min(v.c_min.point.energy),
            e_hi: system.energy_max(),
            s_lo: crb_min,
            s_hi: s_rate.max(s_energy),
            s_rate,
            s_energy,
        }
    }
}

pub fn solve_edge(kind: EdgeKind, system: &System, count: usize, cfg: &RegionConfig) -> Result<Vec<BoundaryPoint>> {
    if count < 2 {
        return Err(Error::InvalidInput("an edge sweep needs at least two points".into()));
    }
    let v = Vertices::compute(system)?;
    let tb = ThresholdBox::new(system, &v, cfg);
    Ok(edge_points(kind, system, &v, &tb, count, cfg))
}

fn edge_points(kind: EdgeKind, system: &System, v: &Vertices, tb: &ThresholdBox, count: usize, cfg: &RegionConfig) -> Vec<BoundaryPoint> {
    let solver = &cfg.solver;
    let (params, tol) = match system.case() {
        Case::Point => (solver.p1.barrier, solver.p1.boundary_tol),
        Case::Extended => (solver.p2.barrier, solver.p2.boundary_tol),
    };
    match kind {
        EdgeKind::CR => log_space(tb.s_lo, tb.s_rate, count)
            .into_par_iter()
            .map(|gs| BoundaryPoint::from_result(0.0, gs, solve_thresholds(system, &Thresholds::new(0.0, gs), solver)))
            .collect(),
        EdgeKind::RE => lin_space(v.r_max.point.energy.min(tb.e_hi), tb.e_hi, count)
            .into_par_iter()
            .map(|ge| BoundaryPoint::from_result(ge, f64::INFINITY, solve_thresholds(system, &Thresholds::new(ge, f64::INFINITY), solver)))
            .collect(),
        EdgeKind::CE => log_space(tb.s_lo, tb.s_energy, count)
            .into_par_iter()
            .map(|gs| BoundaryPoint::from_result(0.0, gs, max_energy(system, gs, &params, tol)))
            .collect(),
    }
}

#[derive(Debug, Clone)]
pub struct Edges {
    pub c_r: Vec<BoundaryPoint>,
    pub r_e: Vec<BoundaryPoint>,
    pub c_e: Vec<BoundaryPoint>,
}

impl Edges {
    pub fn get(&self, kind: EdgeKind) -> &[BoundaryPoint] {
        match kind {
            EdgeKind::CR => &self.c_r,
            EdgeKind::RE => &self.r_e,
            EdgeKind::CE => &self.c_e,
        }
    }
}

// ---------------------------------------------------------------------------
// Surface

#[derive(Debug, Clone)]
pub struct SurfaceCell {
    /// Index along the energy axis.
    pub i: usize,
    /// Index along the CRB axis.
    pub j: usize,
    pub cell: BoundaryPoint,
}

#[derive(Debug, Clone)]
pub struct ParetoSurface {
    pub case: Case,
    pub vertices: Vertices,
    pub edges: Edges,
    pub bounds: ThresholdBox,
    pub grid: (usize, usize),
    /// Row-major over `(i, j)`.
    pub surface: Vec<SurfaceCell>,
}

impl ParetoSurface {
    pub fn infeasible_cells(&self) -> Vec<(usize, usize)> {
        self.surface.iter().filter(|c| !c.cell.point.is_solved()).map(|c| (c.i, c.j)).collect()
    }
}

/// Grid over `Γ_EH` (linear) and `Γ_S` (logarithmic) on the threshold box.
/// Cells are solved in parallel and returned in grid order.
pub fn sweep_surface(system: &System, n_eh: usize, n_s: usize, edge_count: usize, cfg: &RegionConfig) -> Result<ParetoSurface> {
    if n_eh < 2 || n_s < 2 {
        return Err(Error::InvalidInput("surface grid dimensions must be at least 2".into()));
    }
    let vertices = Vertices::compute(system)?;
    let bounds = ThresholdBox::new(system, &vertices, cfg);
    let edges = Edges {
        c_r: edge_points(EdgeKind::CR, system, &vertices, &bounds, edge_count.max(2), cfg),
        r_e: edge_points(EdgeKind::RE, system, &vertices, &bounds, edge_count.max(2), cfg),
        c_e: edge_points(EdgeKind::CE, system, &vertices, &bounds, edge_count.max(2), cfg),
    };
    let surface = surface_cells(system, &bounds, n_eh, n_s, &cfg.solver);
    Ok(ParetoSurface { case: system.case(), vertices, edges, bounds, grid: (n_eh, n_s), surface })
}

/// Just the grid cells, without vertices and edges.
pub fn surface_cells(system: &System, bounds: &ThresholdBox, n_eh: usize, n_s: usize, solver: &SolverConfig) -> Vec<SurfaceCell> {
    let es = lin_space(bounds.e_lo, bounds.e_hi, n_eh);
    let ss = log_space(bounds.s_lo, bounds.s_hi, n_s);
    let jobs: Vec<(usize, usize)> = (0..n_eh).flat_map(|i| (0..n_s).map(move |j| (i, j))).collect();
    jobs.into_par_iter()
        .map(|(i, j)| {
            let th = Thresholds::new(es[i], ss[j]);
            SurfaceCell { i, j, cell: BoundaryPoint::from_result(th.gamma_eh, th.gamma_s, solve_thresholds(system, &th, solver)) }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{correlated_los, ScenarioConfig};
    use approx::assert_relative_eq;

    #[test]
    fn spacing_endpoints() {
        let v = log_space(1e-3, 10.0, 5);
        assert_eq!(v[0], 1e-3);
        assert_eq!(v[4], 10.0);
        assert_relative_eq!(v[1], 1e-2, max_relative = 1e-12);
        assert_eq!(lin_space(0.0, 1.0, 3), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn energy_vertex_value() {
        let sys = ScenarioConfig::defaults().build().unwrap();
        let v = solve_vertex(VertexKind::EMax, &sys).unwrap();
        assert_relative_eq!(v.point.energy, sys.energy_max(), max_relative = 1e-12);
    }

    #[test]
    fn extended_vertices() {
        let sys = ScenarioConfig::defaults().with_case(Case::Extended).build().unwrap();
        let v = Vertices::compute(&sys).unwrap();
        assert!(v.e_max.point.crb.is_infinite());
        assert!(v.r_max.point.crb.is_infinite());
        assert_relative_eq!(v.c_min.point.crb, sys.crb_min(), max_relative = 1e-10);
    }

    #[test]
    fn edge_endpoints_meet_vertices() {
        let sys = correlated_los(0.6).build().unwrap();
        let cfg = RegionConfig::default();
        let v = Vertices::compute(&sys).unwrap();
        let cr_edge = solve_edge(EdgeKind::CR, &sys, 3, &cfg).unwrap();
        let last = cr_edge.last().unwrap().point;
        assert_relative_eq!(last.rate, v.r_max.point.rate, max_relative = 1e-4);
        let re_edge = solve_edge(EdgeKind::RE, &sys, 3, &cfg).unwrap();
        let last = re_edge.last().unwrap().point;
        assert_relative_eq!(last.energy, v.e_max.point.energy, max_relative = 1e-4);
        assert_relative_eq!(last.rate, v.e_max.point.rate, max_relative = 1e-4, epsilon = 1e-6);
        let ce_edge = solve_edge(EdgeKind::CE, &sys, 3, &cfg).unwrap();
        assert!(ce_edge[0].point.energy >= v.c_min.point.energy * (1.0 - 1e-6));
    }
}
