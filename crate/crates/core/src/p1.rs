//! Point-target problem: maximize the rate subject to an energy threshold, an
//! angle-CRB threshold and the power budget.
//!
//! The CRB constraint is written as a 2×2 linear matrix inequality on the
//! Fisher terms. The Lagrangian dual is minimized by the ellipsoid method
//! over `(λ, ν, z₁, Re z₂, Im z₂, z₃)`; for each dual point the inner
//! maximization is an eigenmode transmission over a whitened ID channel with
//! water-filling-like powers. A short Newton polish on the smooth part of the
//! dual sharpens the multipliers before the primal covariance is recovered.
//!
//! Internally everything is normalized: `Ŝ = S/P`, the ID channel absorbs
//! `√P/σ_ID`, the energy Gram matrix is divided by `σ_max(H_EH)²` and the
//! Fisher matrices by `‖ȧ_r‖²M`, so the thresholds become
//! `γ̂ = Γ_EH/E_max ∈ [0, 1]` and `ĉ = CRB_min/Γ_S ∈ (0, 1]`.

use std::f64::consts::LN_2;

use log::debug;

use crate::channel::{steering, Target};
use crate::convex::{
    barrier_maximize, ellipsoid_solve, phase_one, Affine, AffineHermitian, BarrierParams, BarrierProblem, ConcaveFn,
    Cut, EllipsoidParams, Lmi, LmiKind, Termination,
};
use crate::error::{Error, Result};
use crate::linalg::{self, c, cr, CMatrix, CVector, RMatrix, RVector, C64};
use crate::metrics::{CrePoint, SolveMeta, Status, System, Thresholds};

/// Dual variables in physical units. `Z = [[z₁, z₂*], [z₂, z₃]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct P1Dual {
    pub lambda: f64,
    pub nu: f64,
    pub z1: f64,
    pub z2: C64,
    pub z3: f64,
}

impl P1Dual {
    pub fn z_matrix(&self) -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[cr(self.z1), self.z2.conj(), self.z2, cr(self.z3)])
    }
}

#[derive(Debug, Clone)]
pub struct P1Solution {
    pub s: CMatrix,
    pub dual: Option<P1Dual>,
    pub point: CrePoint,
    /// Numerical rank of `D` at the recovered dual point (`M` when unknown).
    pub d_rank: usize,
    pub used_completion: bool,
    /// Dual objective value (an upper bound on the optimal rate).
    pub dual_value: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct P1Config {
    pub ellipsoid: EllipsoidParams,
    pub barrier: BarrierParams,
    /// Phase-I slack at or below which the thresholds count as infeasible
    /// (below `−boundary_tol`) or as sitting on the region boundary.
    pub boundary_tol: f64,
    pub polish: bool,
    /// Relative duality gap above which the recovered primal is refined by a
    /// barrier solve started at the Slater point.
    pub refine_gap: f64,
}

impl Default for P1Config {
    fn default() -> Self {
        Self {
            ellipsoid: EllipsoidParams { tol: 1e-11, ..Default::default() },
            barrier: BarrierParams { outer_tol: 1e-11, ..Default::default() },
            boundary_tol: 1e-9,
            polish: true,
            refine_gap: 1e-9,
        }
    }
}

/// `D = νI − λG − z₁T_dd − z₂T_da − z₂*T_daᴴ − z₃T_aa`.
///
/// With `G = H_EHᴴH_EH` and the Fisher matrices of the target this is the
/// composite matrix of the Lagrangian.
pub fn build_d(dual: &P1Dual, g: &CMatrix, t_dd: &CMatrix, t_da: &CMatrix, t_aa: &CMatrix) -> CMatrix {
    let m = g.nrows();
    let mut d = CMatrix::identity(m, m) * cr(dual.nu) - g * cr(dual.lambda) - t_dd * cr(dual.z1) - t_aa * cr(dual.z3);
    d -= t_da * dual.z2 + t_da.adjoint() * dual.z2.conj();
    linalg::hermitian_part(&d)
}

/// Maximizer of `log2 det(I + HSHᴴ/σ²) − tr(DS)` over `S ⪰ 0`.
#[derive(Debug, Clone)]
pub struct InnerSolution {
    pub s: CMatrix,
    pub value: f64,
    /// `Q̄`: eigenvectors of `D` with positive eigenvalues.
    pub range: CMatrix,
    /// `Q₀`: the numerical null space of `D`.
    pub null: CMatrix,
    /// `S₁₁` expressed in the `Q̄` coordinates.
    pub s11: CMatrix,
    pub powers: Vec<f64>,
}

#[derive(Debug, Clone)]
pub enum Inner {
    Bounded(InnerSolution),
    /// The supremum is infinite; `direction` is a unit vector along which the
    /// Lagrangian grows without bound.
    Unbounded { direction: CVector, negative: bool },
}

/// Inner solution with the default null-space tolerance.
pub fn inner_solution(d: &CMatrix, h: &CMatrix, sigma_sq: f64) -> Inner {
    inner_solution_with(d, h, sigma_sq, 1e-12)
}

/// Eigenvalues of `D` below `null_rel · λ_max(D)` in magnitude count as zero.
pub fn inner_solution_with(d: &CMatrix, h: &CMatrix, sigma_sq: f64, null_rel: f64) -> Inner {
    let m = d.nrows();
    let e = linalg::evd(d);
    let top = e.values[0];
    let tol = null_rel * top.max(0.0);
    let last = e.values[m - 1];
    if last < -tol {
        return Inner::Unbounded { direction: e.vectors.column(m - 1).into_owned(), negative: true };
    }
    let r = e.values.iter().filter(|&&v| v > tol).count();
    let range = e.vectors.columns(0, r).into_owned();
    let null = e.vectors.columns(r, m - r).into_owned();
    let hs = h * cr(1.0 / sigma_sq.sqrt());
    if m > r {
        let hn = &hs * &null;
        let scale = linalg::fro_norm(&hs).max(1e-300);
        let mut worst = 0;
        let mut worst_norm = 0.0;
        for k in 0..m - r {
            let v = hn.column(k).norm();
            if v > worst_norm {
                worst_norm = v;
                worst = k;
            }
        }
        if worst_norm > 1e-9 * scale {
            return Inner::Unbounded { direction: null.column(worst).into_owned(), negative: false };
        }
    }
    if r == 0 {
        return Inner::Bounded(InnerSolution {
            s: CMatrix::zeros(m, m),
            value: 0.0,
            range,
            null,
            s11: CMatrix::zeros(0, 0),
            powers: Vec::new(),
        });
    }
    let mut w = range.clone();
    for k in 0..r {
        let f = 1.0 / e.values[k].sqrt();
        for i in 0..m {
            w[(i, k)] *= f;
        }
    }
    let hb = &hs * &w;
    let svd = linalg::svd(&hb);
    let k_max = svd.sigma.len().min(r);
    let mut powers = Vec::with_capacity(k_max);
    let mut value = 0.0;
    let mut x = CMatrix::zeros(r, r);
    for k in 0..k_max {
        let l2 = svd.sigma[k] * svd.sigma[k];
        let p = if l2 > 0.0 { (1.0 / LN_2 - 1.0 / l2).max(0.0) } else { 0.0 };
        powers.push(p);
        if p > 0.0 {
            value += (1.0 + l2 * p).log2() - p;
            let v = svd.v.column(k);
            x += (&v * v.adjoint()) * cr(p);
        }
    }
    let mut s11 = x.clone();
    for i in 0..r {
        for j in 0..r {
            s11[(i, j)] *= cr(1.0 / (e.values[i] * e.values[j]).sqrt());
        }
    }
    let s = linalg::hermitian_part(&(&range * &s11 * range.adjoint()));
    Inner::Bounded(InnerSolution { s, value, range, null, s11: linalg::hermitian_part(&s11), powers })
}

/// Normalized Fisher matrices and the CRB threshold `ĉ`.
#[derive(Debug, Clone)]
struct Fisher {
    dd: CMatrix,
    da: CMatrix,
    aa: CMatrix,
    c: f64,
}

/// The normalized problem and its dual machinery.
#[derive(Debug, Clone)]
pub struct P1Problem {
    pub(crate) m: usize,
    pub(crate) power: f64,
    e_scale: f64,
    fisher_scale: f64,
    pub(crate) h: CMatrix,
    pub(crate) g: CMatrix,
    pub(crate) gamma_eh: f64,
    fisher: Option<Fisher>,
    /// `∂D/∂y_i` for the full coordinate vector.
    dmats: Vec<CMatrix>,
    /// Constant part of `∂L/∂y_i`.
    lin: [f64; 6],
    active: Vec<usize>,
}

const LAMBDA: usize = 0;
const NU: usize = 1;
const Z1: usize = 2;
const U: usize = 3;
const V: usize = 4;
const Z3: usize = 5;

fn z_basis(i: usize) -> CMatrix {
    let (a, b, cc, d) = match i {
        Z1 => (cr(1.0), cr(0.0), cr(0.0), cr(0.0)),
        U => (cr(0.0), cr(1.0), cr(1.0), cr(0.0)),
        V => (cr(0.0), c(0.0, -1.0), c(0.0, 1.0), cr(0.0)),
        Z3 => (cr(0.0), cr(0.0), cr(0.0), cr(1.0)),
        _ => unreachable!(),
    };
    CMatrix::from_row_slice(2, 2, &[a, b, cc, d])
}

/// What the dual oracle sees at a point.
enum DualEval {
    Cut { normal: [f64; 6], depth: f64 },
    Value { value: f64, grad: [f64; 6], inner: InnerSolution },
}

impl P1Problem {
    pub fn new(system: &System, th: &Thresholds) -> Result<Self> {
        if th.gamma_eh.is_nan() || th.gamma_s.is_nan() || !(th.gamma_s > 0.0) {
            return Err(Error::InvalidInput("need Γ_S > 0 and finite-or-infinite thresholds".into()));
        }
        let sensing = system
            .point_sensing()
            .ok_or_else(|| Error::InvalidScenario("the point-target solver needs a point target".into()))?;
        let m = system.m();
        let power = system.power;
        let h = &system.channels.h_id * cr((power / system.sigma_id_sq).sqrt());
        let smax = linalg::spectral_norm(&system.channels.h_eh);
        let g_scale = if smax > 0.0 { smax * smax } else { 1.0 };
        let g = linalg::hermitian_part(&(system.channels.h_eh.adjoint() * &system.channels.h_eh)) * cr(1.0 / g_scale);
        let e_scale = power * g_scale;
        let gamma_eh = th.gamma_eh / e_scale;
        let fisher_scale = sensing.dar_sq * m as f64;
        let (dd, da, aa) = sensing.fisher_matrices();
        let inv = cr(1.0 / fisher_scale);
        let fisher = if th.gamma_s.is_finite() {
            Some(Fisher {
                dd: linalg::hermitian_part(&(dd * inv)),
                da: da * inv,
                aa: linalg::hermitian_part(&(aa * inv)),
                c: system.crb_min() / th.gamma_s,
            })
        } else {
            None
        };
        let zero = CMatrix::zeros(m, m);
        let mut dmats = vec![-&g, CMatrix::identity(m, m), zero.clone(), zero.clone(), zero.clone(), zero];
        let mut lin = [-gamma_eh, 1.0, 0.0, 0.0, 0.0, 0.0];
        let mut active = vec![NU];
        if gamma_eh > 0.0 {
            active.insert(0, LAMBDA);
        }
        if let Some(f) = &fisher {
            dmats[Z1] = -&f.dd;
            dmats[U] = -(&f.da + f.da.adjoint());
            dmats[V] = -((&f.da - f.da.adjoint()) * c(0.0, 1.0));
            dmats[Z3] = -&f.aa;
            lin[Z1] = -f.c;
            active.extend([Z1, U, V, Z3]);
        }
        Ok(Self { m, power, e_scale, fisher_scale, h, g, gamma_eh, fisher, dmats, lin, active })
    }

    pub fn dim(&self) -> usize {
        self.active.len()
    }

    fn expand(&self, y: &RVector) -> [f64; 6] {
        let mut full = [0.0; 6];
        for (k, &i) in self.active.iter().enumerate() {
            full[i] = y[k];
        }
        full
    }

    fn reduce(&self, full: &[f64; 6]) -> RVector {
        RVector::from_iterator(self.active.len(), self.active.iter().map(|&i| full[i]))
    }

    fn d_of(&self, y: &[f64; 6]) -> CMatrix {
        let mut d = CMatrix::zeros(self.m, self.m);
        for (i, b) in self.dmats.iter().enumerate() {
            if y[i] != 0.0 {
                d += b * cr(y[i]);
            }
        }
        linalg::hermitian_part(&d)
    }

    fn z_of(y: &[f64; 6]) -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[cr(y[Z1]), c(y[U], -y[V]), c(y[U], y[V]), cr(y[Z3])])
    }

    /// `∂L/∂y_i` at `S`: the constraint residuals.
    fn residuals(&self, s: &CMatrix) -> [f64; 6] {
        let mut r = self.lin;
        for (i, b) in self.dmats.iter().enumerate() {
            r[i] -= linalg::re_trace_prod(b, s);
        }
        r
    }

    fn eval_dual(&self, y: &[f64; 6]) -> DualEval {
        let has = |i: usize| self.active.contains(&i);
        let mut normal = [0.0; 6];
        if has(LAMBDA) && y[LAMBDA] < 0.0 {
            normal[LAMBDA] = -1.0;
            return DualEval::Cut { normal, depth: -y[LAMBDA] };
        }
        if y[NU] < 0.0 {
            normal[NU] = -1.0;
            return DualEval::Cut { normal, depth: -y[NU] };
        }
        if self.fisher.is_some() {
            let z = Self::z_of(y);
            let e = linalg::evd(&z);
            if e.values[1] < -1e-13 * e.values[0].abs() {
                let q = e.vectors.column(1).into_owned();
                for i in [Z1, U, V, Z3] {
                    normal[i] = -(q.dotc(&(z_basis(i) * &q))).re;
                }
                return DualEval::Cut { normal, depth: -e.values[1] };
            }
        }
        let d = self.d_of(y);
        match inner_solution(&d, &self.h, 1.0) {
            Inner::Unbounded { direction: q, negative } => {
                for &i in &self.active {
                    normal[i] = -(q.dotc(&(&self.dmats[i] * &q))).re;
                }
                let depth = if negative { -(q.dotc(&(&d * &q))).re } else { 0.0 };
                DualEval::Cut { normal, depth: depth.max(0.0) }
            }
            Inner::Bounded(inner) => {
                let value = inner.value + y.iter().zip(&self.lin).map(|(a, b)| a * b).sum::<f64>();
                let grad = self.residuals(&inner.s);
                DualEval::Value { value, grad, inner }
            }
        }
    }

    /// The dual function `g(λ, ν, Z)` (`None` outside its domain).
    pub fn dual_value(&self, dual: &P1Dual) -> Option<f64> {
        match self.eval_dual(&self.normalize_dual(dual)) {
            DualEval::Value { value, .. } => Some(value),
            DualEval::Cut { .. } => None,
        }
    }

    fn normalize_dual(&self, d: &P1Dual) -> [f64; 6] {
        let k = self.fisher_scale * self.power;
        [d.lambda * self.e_scale, d.nu * self.power, d.z1 * k, d.z2.re * k, d.z2.im * k, d.z3 * k]
    }

    fn physical_dual(&self, y: &[f64; 6]) -> P1Dual {
        let k = self.fisher_scale * self.power;
        P1Dual { lambda: y[LAMBDA] / self.e_scale, nu: y[NU] / self.power, z1: y[Z1] / k, z2: c(y[U] / k, y[V] / k), z3: y[Z3] / k }
    }

    /// One oracle response in the reduced coordinates.
    pub fn oracle(&self, y: &RVector) -> Cut {
        match self.eval_dual(&self.expand(y)) {
            DualEval::Cut { normal, depth } => Cut::Feasibility { normal: self.reduce(&normal), depth },
            DualEval::Value { value, grad, .. } => Cut::Objective { value, subgradient: self.reduce(&grad) },
        }
    }

    /// Normalized rate of `Ŝ`.
    fn rate(&self, s: &CMatrix) -> f64 {
        crate::metrics::rate_unchecked(s, &self.h, 1.0)
    }

    fn schur_block(&self, s: &CMatrix) -> Option<CMatrix> {
        self.fisher.as_ref().map(|f| {
            let dd = linalg::re_trace_prod(&f.dd, s) - f.c;
            let da = linalg::trace_prod(&f.da, s);
            let aa = linalg::re_trace_prod(&f.aa, s);
            CMatrix::from_row_slice(2, 2, &[cr(dd), da, da.conj(), cr(aa)])
        })
    }

    /// Smallest constraint margin of `Ŝ`, with the same meaning as the
    /// phase-I slack.
    pub fn slack(&self, s: &CMatrix) -> f64 {
        let mut v = 1.0 - linalg::trace_re(s);
        if self.gamma_eh > 0.0 {
            v = v.min(linalg::re_trace_prod(&self.g, s) - self.gamma_eh);
        }
        if let Some(b) = self.schur_block(s) {
            v = v.min(linalg::min_eigenvalue(&b));
        }
        v
    }

    /// Largest relative violation of the energy and CRB constraints.
    fn violation(&self, s: &CMatrix) -> f64 {
        let mut v: f64 = 0.0;
        if self.gamma_eh > 0.0 {
            v = v.max((self.gamma_eh - linalg::re_trace_prod(&self.g, s)) / self.gamma_eh);
        }
        if let Some(f) = &self.fisher {
            let dd = linalg::re_trace_prod(&f.dd, s);
            let da = linalg::trace_prod(&f.da, s);
            let aa = linalg::re_trace_prod(&f.aa, s);
            let schur = if aa > 0.0 { dd - da.norm_sqr() / aa } else { 0.0 };
            v = v.max(if schur > 0.0 { f.c / schur - 1.0 } else { f64::INFINITY });
        }
        v
    }

    fn schur_map(&self, s_map: &AffineHermitian) -> AffineHermitian {
        let f = self.fisher.as_ref().expect("CRB constraint present");
        let block = |x: &CMatrix, shift: f64| {
            let dd = linalg::re_trace_prod(&f.dd, x) - shift;
            let da = linalg::trace_prod(&f.da, x);
            let aa = linalg::re_trace_prod(&f.aa, x);
            CMatrix::from_row_slice(2, 2, &[cr(dd), da, da.conj(), cr(aa)])
        };
        AffineHermitian {
            constant: block(&s_map.constant, f.c),
            terms: s_map.terms.iter().map(|(i, b)| (*i, block(b, 0.0))).collect(),
        }
    }

    /// Constraints and LMIs of the normalized primal for a given affine
    /// parameterization of `Ŝ`.
    pub(crate) fn primal_constraints(&self, s_map: &AffineHermitian) -> (Vec<ConcaveFn>, Vec<Lmi>) {
        let m = self.m;
        let mut cons = vec![ConcaveFn::affine(Affine::constant(1.0).plus(&s_map.trace_with(&CMatrix::identity(m, m)).scaled(-1.0)))];
        if self.gamma_eh > 0.0 {
            cons.push(ConcaveFn::affine(s_map.trace_with(&self.g).plus(&Affine::constant(-self.gamma_eh))));
        }
        let mut lmis = Vec::new();
        if self.fisher.is_some() {
            lmis.push(Lmi { map: self.schur_map(s_map), kind: LmiKind::Constraint });
        }
        (cons, lmis)
    }

    /// Rate maximization over packed `Ŝ` as a barrier problem.
    pub fn primal_problem(&self) -> BarrierProblem {
        let m = self.m;
        let s_map = AffineHermitian::hermitian_variable(m, 0);
        let (constraints, mut lmis) = self.primal_constraints(&s_map);
        lmis.push(Lmi { map: s_map.clone(), kind: LmiKind::Domain });
        let k = self.h.nrows();
        let rate_map = s_map.congruence(&self.h).plus_constant(&CMatrix::identity(k, k));
        let objective = ConcaveFn::default().with_log_det(1.0 / LN_2, rate_map);
        let start = RVector::from_vec(crate::convex::barrier::pack_hermitian(&(CMatrix::identity(m, m) * cr(0.5 / m as f64))));
        BarrierProblem { nvars: m * m, objective, constraints, lmis, start }
    }

    pub(crate) fn unpack(&self, x: &RVector) -> CMatrix {
        crate::convex::barrier::unpack_hermitian(x.as_slice(), self.m)
    }

    /// Water-filling optimum of the normalized problem without side constraints.
    fn rate_max(&self) -> (f64, f64) {
        let svd = linalg::svd(&self.h);
        let gains: Vec<f64> = svd.sigma.iter().map(|s| s * s).collect();
        match linalg::water_fill(&gains, 1.0, 1.0) {
            Ok(p) => {
                let r: f64 = gains.iter().zip(&p).map(|(g, p)| (1.0 + g * p).log2()).sum();
                let (k, pk) = p.iter().enumerate().find(|(_, p)| **p > 0.0).expect("some power");
                let level = pk + 1.0 / gains[k];
                (r, 1.0 / (level * LN_2))
            }
            Err(_) => (0.0, 0.0),
        }
    }

    /// Mix `Ŝ` with the Slater point until every constraint holds exactly.
    fn repair(&self, s: &CMatrix, slater: &CMatrix) -> (CMatrix, bool) {
        let mut s = clip_psd(s);
        let tr = linalg::trace_re(&s);
        if tr > 1.0 {
            s *= cr(1.0 / tr);
        }
        if self.violation(&s) <= 1e-9 {
            return (s, false);
        }
        let mix = |t: f64| &s * cr(1.0 - t) + slater * cr(t);
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if self.slack(&mix(mid)) >= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        (mix(hi), true)
    }
}

fn clip_psd(s: &CMatrix) -> CMatrix {
    let e = linalg::evd(s);
    if e.values[e.values.len() - 1] >= 0.0 {
        return linalg::hermitian_part(s);
    }
    let p: Vec<f64> = e.values.iter().map(|v| v.max(0.0)).collect();
    linalg::from_eigen(&e.vectors, &p)
}

/// Result of the feasibility probe.
enum Probe {
    Interior { slater: CMatrix, slack: f64 },
    Boundary(CMatrix),
}

fn probe(problem: &P1Problem, cfg: &P1Config) -> Result<Probe> {
    let prob = problem.primal_problem();
    let ph = phase_one(&prob, &cfg.barrier, None)?;
    let s = problem.unpack(&ph.x);
    let slack = problem.slack(&s);
    debug!("p1 phase-I slack {:.3e}", slack);
    if slack < -cfg.boundary_tol {
        return Err(Error::Infeasible { reason: "thresholds exceed the achievable region".into(), max_slack: slack });
    }
    if slack <= cfg.boundary_tol {
        return Ok(Probe::Boundary(s));
    }
    Ok(Probe::Interior { slater: s, slack })
}

/// Max-slack completion of `(C, S₀₀)` on the null space of `D` with `S₁₁` fixed.
pub fn complete_solution(problem: &P1Problem, inner: &InnerSolution, cfg: &P1Config) -> Option<CMatrix> {
    let r = inner.range.ncols();
    let n0 = inner.null.ncols();
    if n0 == 0 {
        return Some(inner.s.clone());
    }
    let root = linalg::hermitian_power(&inner.s11, 0.5);
    let nk = 2 * r * n0;
    let nvars = nk + n0 * n0;
    let q = &inner.range;
    let q0 = &inner.null;
    let mut terms = Vec::with_capacity(nvars);
    let mut block_terms = Vec::with_capacity(nvars);
    let mut idx = 0;
    for i in 0..r {
        for j in 0..n0 {
            for unit in [cr(1.0), c(0.0, 1.0)] {
                let mut e = CMatrix::zeros(r, n0);
                e[(i, j)] = unit;
                let cross = q * &root * &e * q0.adjoint();
                terms.push((idx, &cross + cross.adjoint()));
                let mut b = CMatrix::zeros(r + n0, r + n0);
                b[(i, r + j)] = unit;
                b[(r + j, i)] = unit.conj();
                block_terms.push((idx, b));
                idx += 1;
            }
        }
    }
    for (k, b) in crate::convex::barrier::hermitian_basis(n0).into_iter().enumerate() {
        terms.push((nk + k, q0 * &b * q0.adjoint()));
        let mut big = CMatrix::zeros(r + n0, r + n0);
        big.view_mut((r, r), (n0, n0)).copy_from(&b);
        block_terms.push((nk + k, big));
    }
    let s_map = AffineHermitian { constant: inner.s.clone(), terms };
    let mut block_const = CMatrix::zeros(r + n0, r + n0);
    block_const.view_mut((0, 0), (r, r)).copy_from(&CMatrix::identity(r, r));
    let block = AffineHermitian { constant: block_const, terms: block_terms };
    let (constraints, mut lmis) = problem.primal_constraints(&s_map);
    lmis.push(Lmi { map: block, kind: LmiKind::Domain });
    let mut start = RVector::zeros(nvars);
    let tr0 = linalg::trace_re(&inner.s);
    let fill = ((1.0 - tr0).max(1e-3) / (2.0 * n0 as f64)).max(1e-6);
    for k in 0..n0 {
        start[nk + k] = fill;
    }
    let prob = BarrierProblem { nvars, objective: ConcaveFn::default(), constraints, lmis, start };
    let ph = phase_one(&prob, &cfg.barrier, None).ok()?;
    Some(linalg::hermitian_part(&s_map.eval(&ph.x)))
}

fn numerical_rank_herm(d: &CMatrix, rel: f64) -> usize {
    let e = linalg::evd(d);
    let top = e.values[0].max(0.0);
    e.values.iter().filter(|&&v| v > rel * top).count()
}

/// Solve the point-target problem by the dual ellipsoid method.
pub fn solve_p1(system: &System, th: &Thresholds, cfg: &P1Config) -> Result<P1Solution> {
    let problem = P1Problem::new(system, th)?;
    let (slater, slack) = match probe(&problem, cfg)? {
        Probe::Boundary(s) => {
            let s = clip_psd(&s) * cr(problem.power);
            let point = system.evaluate(&s, SolveMeta { status: Status::Boundary, iterations: 0, duality_gap: None });
            return Ok(P1Solution { s, dual: None, point, d_rank: problem.m, used_completion: false, dual_value: None });
        }
        Probe::Interior { slater, slack } => (slater, slack),
    };
    let n = problem.dim();
    let (r_max, nu_wf) = problem.rate_max();
    let bound = (r_max - problem.rate(&slater)).max(1e-6 * r_max.max(1.0)) / slack;
    let mut center_full = [0.0; 6];
    center_full[NU] = nu_wf;
    let radius0 = 2.0 * bound + nu_wf;
    let mut center = problem.reduce(&center_full);
    let mut radius = radius0;
    let mut best: Option<(f64, RVector)> = None;
    let mut iterations = 0;
    let mut converged = false;
    let budget = cfg.ellipsoid.max_iter.unwrap_or(2000 * n * n);
    for _ in 0..6 {
        let params = EllipsoidParams { max_iter: Some(budget.saturating_sub(iterations).max(1)), ..cfg.ellipsoid };
        let out = ellipsoid_solve(center.clone(), radius, |y| problem.oracle(y), params);
        iterations += out.iterations;
        if let Some(p) = &out.point {
            if best.as_ref().map_or(true, |(v, _)| out.value < *v) {
                best = Some((out.value, p.clone()));
            }
        }
        match out.termination {
            Termination::Converged => {
                converged = true;
                break;
            }
            Termination::MaxIter => break,
            Termination::IllConditioned => {
                let Some((_, p)) = &best else { break };
                center = p.clone();
                let widest = linalg_max_eig(&out.final_state.shape).sqrt();
                radius = (4.0 * widest).clamp(1e-10 * radius0, radius0);
                if iterations >= budget {
                    break;
                }
            }
        }
    }
    let (mut g_best, y_red) = best.ok_or_else(|| Error::Internal("ellipsoid found no dual-feasible point".into()))?;
    let mut y = problem.expand(&y_red);
    if cfg.polish {
        if let Some((gp, yp)) = polish(&problem, &y) {
            if gp <= g_best + 1e-12 * g_best.abs().max(1.0) {
                g_best = g_best.min(gp);
                y = yp;
                converged = true;
            }
        }
    }
    let DualEval::Value { inner, .. } = problem.eval_dual(&y) else {
        return Err(Error::Internal("recovered dual point left the dual domain".into()));
    };
    let d = problem.d_of(&y);
    let mut d_rank = numerical_rank_herm(&d, 1e-9);
    let mut candidates: Vec<(CMatrix, bool)> = Vec::new();
    let (fixed, _) = problem.repair(&inner.s, &slater);
    candidates.push((fixed, false));
    let mut tried = Vec::new();
    for null_rel in [1e-6, 1e-5, 1e-4, 1e-3, 1e-2] {
        let rank = numerical_rank_herm(&d, null_rel);
        if rank >= problem.m || tried.contains(&rank) {
            continue;
        }
        tried.push(rank);
        if let Inner::Bounded(loose) = inner_solution_with(&d, &problem.h, 1.0, null_rel) {
            if let Some(full) = complete_solution(&problem, &loose, cfg) {
                let (fixed, _) = problem.repair(&full, &slater);
                candidates.push((fixed, true));
                d_rank = d_rank.min(loose.range.ncols());
            }
        }
    }
    candidates.push((slater.clone(), false));
    let (s_hat, used_completion) = candidates
        .into_iter()
        .map(|(s, comp)| (problem.rate(&s), s, comp))
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, s, comp)| (s, comp))
        .expect("non-empty");
    let mut s_hat = s_hat;
    let mut rate = problem.rate(&s_hat);
    if g_best - rate > cfg.refine_gap * rate.max(1.0) {
        let mut prob = problem.primal_problem();
        prob.start = RVector::from_vec(crate::convex::barrier::pack_hermitian(&slater));
        if let Ok(sol) = barrier_maximize(&prob, &cfg.barrier) {
            let refined = clip_psd(&problem.unpack(&sol.x));
            let r = problem.rate(&refined);
            debug!("p1 primal refinement: rate {:.9} → {:.9}", rate, r);
            if r > rate && problem.violation(&refined) <= 1e-9 {
                s_hat = refined;
                rate = r;
            }
        }
    }
    let gap = (g_best - rate).max(0.0);
    let s = s_hat * cr(problem.power);
    let status = if converged { Status::Optimal } else { Status::Truncated };
    let point = system.evaluate(&s, SolveMeta { status, iterations, duality_gap: Some(gap) });
    debug!("p1 solved: rate {:.6} gap {:.2e} iterations {}", rate, gap, iterations);
    Ok(P1Solution { s, dual: Some(problem.physical_dual(&y)), point, d_rank, used_completion, dual_value: Some(g_best) })
}

fn linalg_max_eig(a: &RMatrix) -> f64 {
    a.clone().symmetric_eigen().eigenvalues.max()
}

/// Coordinates of the Newton polish: `ν`, optionally `λ`, and optionally a
/// rank-one `Z = w wᴴ` with `w = (a, b + i c)`.
struct PolishMap {
    lambda: bool,
    z: bool,
}

impl PolishMap {
    fn to_full(&self, x: &[f64]) -> [f64; 6] {
        let mut y = [0.0; 6];
        y[NU] = x[0];
        let mut k = 1;
        if self.lambda {
            y[LAMBDA] = x[k].max(0.0);
            k += 1;
        }
        if self.z {
            let (a, b, cc) = (x[k], x[k + 1], x[k + 2]);
            y[Z1] = a * a;
            y[U] = a * b;
            y[V] = a * cc;
            y[Z3] = b * b + cc * cc;
        }
        y
    }

    fn chain(&self, x: &[f64], g: &[f64; 6]) -> Vec<f64> {
        let mut out = vec![g[NU]];
        let mut k = 1;
        if self.lambda {
            out.push(g[LAMBDA]);
            k += 1;
        }
        if self.z {
            let (a, b, cc) = (x[k], x[k + 1], x[k + 2]);
            out.push(2.0 * a * g[Z1] + b * g[U] + cc * g[V]);
            out.push(a * g[U] + 2.0 * b * g[Z3]);
            out.push(a * g[V] + 2.0 * cc * g[Z3]);
        }
        out
    }
}

/// Newton refinement of the dual on the active constraint manifold. Returns
/// the refined value and point when it stays in the dual domain.
fn polish(problem: &P1Problem, y0: &[f64; 6]) -> Option<(f64, [f64; 6])> {
    let DualEval::Value { value: g0, inner, .. } = problem.eval_dual(y0) else { return None };
    let s0 = &inner.s;
    let scale = y0[NU].abs().max(1e-12);
    let lambda = problem.gamma_eh > 0.0 && {
        let resid = linalg::re_trace_prod(&problem.g, s0) - problem.gamma_eh;
        !(y0[LAMBDA] <= 1e-9 * scale && resid > 1e-8)
    };
    let z = problem.fisher.is_some() && {
        let zm = P1Problem::z_of(y0);
        let tr = linalg::trace_re(&zm);
        let margin = problem.schur_block(s0).map(|b| linalg::min_eigenvalue(&b)).unwrap_or(1.0);
        !(tr <= 1e-9 * scale && margin > 1e-8)
    };
    let map = PolishMap { lambda, z };
    let mut x = vec![y0[NU]];
    if lambda {
        x.push(y0[LAMBDA].max(0.0));
    }
    if z {
        let e = linalg::evd(&P1Problem::z_of(y0));
        let root = e.values[0].max(0.0).sqrt();
        let w0 = e.vectors[(0, 0)];
        let phase = if w0.norm() > 0.0 { w0.conj() / w0.norm() } else { cr(1.0) };
        let w = e.vectors.column(0) * phase * cr(root);
        if root == 0.0 {
            x.extend([1e-6 * scale.sqrt(), 0.0, 0.0]);
        } else {
            x.extend([w[0].re, w[1].re, w[1].im]);
        }
    }
    let n = x.len();
    let eval = |x: &[f64]| -> Option<(f64, Vec<f64>)> {
        match problem.eval_dual(&map.to_full(x)) {
            DualEval::Value { value, grad, .. } => Some((value, map.chain(x, &grad))),
            DualEval::Cut { .. } => None,
        }
    };
    let (mut gv, mut grad) = eval(&x)?;
    let gnorm = |g: &[f64]| g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let start_norm = gnorm(&grad);
    for _ in 0..40 {
        if gnorm(&grad) <= 1e-14 {
            break;
        }
        let mut hess = RMatrix::zeros(n, n);
        for j in 0..n {
            let h = 1e-6 * x[j].abs().max(1e-3 * scale.sqrt().min(1.0)).max(1e-9);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let (_, gp) = eval(&xp)?;
            let (_, gm) = eval(&xm)?;
            for i in 0..n {
                hess[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
            }
        }
        let hess = (&hess + hess.transpose()) * 0.5;
        let gvec = RVector::from_vec(grad.clone());
        let diag_scale = hess.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        let mut step = None;
        let mut reg = 0.0;
        for _ in 0..10 {
            let mut m = hess.clone();
            for i in 0..n {
                m[(i, i)] += reg * diag_scale;
            }
            if let Some(ch) = m.cholesky() {
                step = Some(-ch.solve(&gvec));
                break;
            }
            reg = if reg == 0.0 { 1e-12 } else { reg * 100.0 };
        }
        let step = step?;
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-8 {
            let cand: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a + t * d).collect();
            if let Some((cv, cg)) = eval(&cand) {
                if cv < gv - 1e-4 * t * step.dot(&gvec).abs() || (cv <= gv + 1e-13 * gv.abs().max(1.0) && gnorm(&cg) < gnorm(&grad)) {
                    x = cand;
                    gv = cv;
                    grad = cg;
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    if map.lambda {
        x[1] = x[1].max(0.0);
    }
    debug!("p1 polish: |∇| {:.2e} → {:.2e}, g {:.12} → {:.12}", start_norm, gnorm(&grad), g0, gv);
    Some((gv, map.to_full(&x)))
}

/// Direct barrier solve of the Schur-form primal, used as a cross-check.
pub fn solve_p1_direct(system: &System, th: &Thresholds, params: &BarrierParams) -> Result<P1Solution> {
    let problem = P1Problem::new(system, th)?;
    let prob = problem.primal_problem();
    let sol = barrier_maximize(&prob, params)?;
    let s = problem.unpack(&sol.x) * cr(problem.power);
    let gap = sol.complementarity;
    let point = system.evaluate(&s, SolveMeta { status: Status::Optimal, iterations: sol.newton_steps, duality_gap: Some(gap) });
    Ok(P1Solution { s, dual: None, point, d_rank: problem.m, used_completion: false, dual_value: None })
}

/// The two co-located reductions of the point-target problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColocatedKind {
    /// The ID receiver is the target.
    CommSensing,
    /// The EH receiver is the target.
    EnergySensing,
}

/// Rows of `h` are multiples of `a_tᵀ(θ)`.
fn aligned_with(h: &CMatrix, at: &CVector) -> bool {
    let m = at.len() as f64;
    let proj = CMatrix::identity(at.len(), at.len()) - (at.conjugate() * at.transpose()) * cr(1.0 / m);
    let resid = h * proj;
    linalg::fro_norm(&resid) <= 1e-9 * linalg::fro_norm(h).max(1e-300)
}

/// Solve the co-located C-R or C-E reduction by a barrier method on the
/// stated quadratic-form program.
pub fn colocated_point_reduction(kind: ColocatedKind, system: &System, th: &Thresholds, params: &BarrierParams) -> Result<P1Solution> {
    let Target::Point(target) = &system.channels.target else {
        return Err(Error::InvalidScenario("co-located reductions need a point target".into()));
    };
    let problem = P1Problem::new(system, th)?;
    let m = system.m();
    let at = steering(target.theta, m, 0);
    let at_conj = at.conjugate();
    let aa = &at_conj * at_conj.adjoint() * cr(1.0 / m as f64);
    let s_map = AffineHermitian::hermitian_variable(m, 0);
    let power = ConcaveFn::affine(Affine::constant(1.0).plus(&s_map.trace_with(&CMatrix::identity(m, m)).scaled(-1.0)));
    let sensing_floor = problem.fisher.as_ref().map_or(0.0, |f| f.c);
    let (objective, constraints) = match kind {
        ColocatedKind::CommSensing => {
            if !aligned_with(&system.channels.h_id, &at) {
                return Err(Error::InvalidScenario("C-R reduction needs a LoS ID channel at the target angle".into()));
            }
            let mut cons = vec![power];
            if problem.gamma_eh > 0.0 {
                cons.push(ConcaveFn::affine(s_map.trace_with(&problem.g).plus(&Affine::constant(-problem.gamma_eh))));
            }
            (ConcaveFn::affine(s_map.trace_with(&aa)), cons)
        }
        ColocatedKind::EnergySensing => {
            if !aligned_with(&system.channels.h_eh, &at) {
                return Err(Error::InvalidScenario("C-E reduction needs a LoS EH channel at the target angle".into()));
            }
            if system.channels.h_id.nrows() != 1 {
                return Err(Error::InvalidScenario("C-E reduction needs a single-antenna ID receiver".into()));
            }
            // E(S) = α²N_EH aᵀSa* and E_max = α²N_EH·P·M, so Γ_EH/(α²N_EH) is γ̂ in units of aᵀŜa*/M.
            let floor = problem.gamma_eh.max(sensing_floor);
            let hv = problem.h.adjoint();
            let hh = &hv * hv.adjoint();
            let cons = vec![power, ConcaveFn::affine(s_map.trace_with(&aa).plus(&Affine::constant(-floor)))];
            (ConcaveFn::affine(s_map.trace_with(&hh)), cons)
        }
    };
    let start = RVector::from_vec(crate::convex::barrier::pack_hermitian(&(CMatrix::identity(m, m) * cr(0.5 / m as f64))));
    let prob = BarrierProblem {
        nvars: m * m,
        objective,
        constraints,
        lmis: vec![Lmi { map: s_map, kind: LmiKind::Domain }],
        start,
    };
    let sol = barrier_maximize(&prob, params)?;
    let raw = problem.unpack(&sol.x);
    // The optimum is rank one; drop the barrier's residual interior part.
    let e = linalg::evd(&raw);
    let v = e.vectors.column(0).into_owned();
    let s_hat = linalg::outer(&v, &v) * cr(linalg::trace_re(&raw));
    if kind == ColocatedKind::CommSensing {
        let gain = linalg::re_trace_prod(&aa, &s_hat);
        if gain < sensing_floor * (1.0 - 1e-9) {
            return Err(Error::Infeasible { reason: "CRB threshold unreachable on the co-located C-R edge".into(), max_slack: gain - sensing_floor });
        }
    }
    let s = s_hat * cr(problem.power);
    let point = system.evaluate(&s, SolveMeta { status: Status::Optimal, iterations: sol.newton_steps, duality_gap: None });
    Ok(P1Solution { s, dual: None, point, d_rank: m, used_completion: false, dual_value: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ArrayGeometry, ChannelSet, PointTarget};
    use crate::scenario::{correlated_los, preset};
    use approx::assert_relative_eq;

    fn small_system(seed: u64) -> System {
        let mut s = preset("paper-fig8").unwrap().scenario;
        s.seed = seed;
        s.build().unwrap()
    }

    #[test]
    fn d_examples() {
        let g = CMatrix::from_row_slice(2, 2, &[cr(2.0), c(0.0, 1.0), c(0.0, -1.0), cr(3.0)]);
        let z = CMatrix::zeros(2, 2);
        let eye = build_d(&P1Dual { lambda: 0.0, nu: 1.0, z1: 0.0, z2: cr(0.0), z3: 0.0 }, &g, &z, &z, &z);
        assert!((eye - CMatrix::identity(2, 2)).norm() < 1e-15);
        let neg = build_d(&P1Dual { lambda: 1.0, nu: 0.0, z1: 0.0, z2: cr(0.0), z3: 0.0 }, &g, &z, &z, &z);
        assert!((neg + &g).norm() < 1e-15);
    }

    #[test]
    fn inner_water_level() {
        let d = CMatrix::identity(2, 2);
        let h = CMatrix::from_row_slice(1, 2, &[cr(2.0), cr(0.0)]);
        let Inner::Bounded(sol) = inner_solution(&d, &h, 1.0) else { panic!("bounded") };
        assert_relative_eq!(sol.powers[0], 1.0 / LN_2 - 0.25, epsilon = 1e-12);
        assert_relative_eq!(sol.s[(0, 0)].re, 1.0 / LN_2 - 0.25, epsilon = 1e-12);

        let weak = CMatrix::from_row_slice(1, 2, &[cr(0.5), cr(0.0)]);
        let Inner::Bounded(sol) = inner_solution(&d, &weak, 1.0) else { panic!("bounded") };
        assert!(sol.s.norm() == 0.0);

        let singular = CMatrix::from_row_slice(2, 2, &[cr(1.0), cr(0.0), cr(0.0), cr(0.0)]);
        let across = CMatrix::from_row_slice(1, 2, &[cr(0.0), cr(1.0)]);
        assert!(matches!(inner_solution(&singular, &across, 1.0), Inner::Unbounded { .. }));
    }

    #[test]
    fn oracle_at_zero_covariance() {
        let sys = small_system(3);
        let th = Thresholds { gamma_eh: 0.3 * sys.energy_max(), gamma_s: 10.0 * sys.crb_min() };
        let p = P1Problem::new(&sys, &th).unwrap();
        let r = p.residuals(&CMatrix::zeros(sys.m(), sys.m()));
        assert_relative_eq!(r[LAMBDA], -0.3, epsilon = 1e-12);
        assert_relative_eq!(r[NU], 1.0);
        assert_relative_eq!(r[Z1], -0.1, epsilon = 1e-12);
        assert_eq!([r[U], r[V], r[Z3]], [0.0, 0.0, 0.0]);
    }

    #[test]
    fn unconstrained_is_water_filling() {
        let sys = small_system(1);
        let sol = solve_p1(&sys, &Thresholds { gamma_eh: 0.0, gamma_s: f64::INFINITY }, &P1Config::default()).unwrap();
        let p = P1Problem::new(&sys, &Thresholds { gamma_eh: 0.0, gamma_s: f64::INFINITY }).unwrap();
        assert_relative_eq!(sol.point.rate, p.rate_max().0, max_relative = 1e-9);
    }

    #[test]
    fn matches_direct_barrier() {
        for seed in 0..3 {
            let sys = small_system(seed);
            let th = Thresholds { gamma_eh: 0.4 * sys.energy_max(), gamma_s: 5.0 * sys.crb_min() };
            let a = solve_p1(&sys, &th, &P1Config::default()).unwrap();
            let b = solve_p1_direct(&sys, &th, &BarrierParams::default()).unwrap();
            assert!((a.point.rate - b.point.rate).abs() <= 1e-6 * b.point.rate, "{} vs {}", a.point.rate, b.point.rate);
            assert!(a.point.meta.duality_gap.unwrap() < 1e-6);
        }
    }

    #[test]
    fn infeasible_thresholds_rejected() {
        let sys = small_system(0);
        let th = Thresholds { gamma_eh: 1.01 * sys.energy_max(), gamma_s: f64::INFINITY };
        assert!(matches!(solve_p1(&sys, &th, &P1Config::default()), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn aligned_channels_collapse() {
        let sys = correlated_los(0.0).build().unwrap();
        let th = Thresholds { gamma_eh: 0.0, gamma_s: sys.crb_min() };
        let sol = solve_p1(&sys, &th, &P1Config::default()).unwrap();
        let free = solve_p1(&sys, &Thresholds { gamma_eh: 0.0, gamma_s: f64::INFINITY }, &P1Config::default()).unwrap();
        assert_relative_eq!(sol.point.rate, free.point.rate, max_relative = 1e-6);
    }

    #[test]
    fn completion_fills_sensing_null_space() {
        // θ = 0, M = 4: rows orthogonal to a_t* and ȧ_t* leave the sensing
        // directions to the null space of D.
        let geometry = ArrayGeometry::new(4, 8).unwrap();
        let h_id = CMatrix::from_row_slice(1, 4, &[cr(1e-4), cr(-1e-4), cr(-1e-4), cr(1e-4)]);
        let h_eh = CMatrix::from_row_slice(1, 4, &[cr(1e-2), cr(-3e-2), cr(3e-2), cr(-1e-2)]);
        let target = Target::Point(PointTarget { alpha: cr(1e-6), theta: 0.0 });
        let sys = System::new(geometry, ChannelSet::new(h_id, h_eh, target).unwrap(), 1.0, 1e-12, 1e-12, 256.0, 0.5).unwrap();
        let a = steering(0.0, 4, 0);
        let da = steering(0.0, 4, 1);
        for h in [&sys.channels.h_id, &sys.channels.h_eh] {
            assert!((h * a.conjugate()).norm() < 1e-15 && (h * da.conjugate()).norm() < 1e-15);
        }
        let th = Thresholds { gamma_eh: 0.3 * sys.energy_max(), gamma_s: 2.0 * sys.crb_min() };
        let sol = solve_p1(&sys, &th, &P1Config::default()).unwrap();
        let direct = solve_p1_direct(&sys, &th, &BarrierParams::default()).unwrap();
        assert!(sol.point.crb <= th.gamma_s * (1.0 + 1e-6));
        assert!(sol.point.energy >= th.gamma_eh * (1.0 - 1e-6));
        assert!(sol.used_completion);
        assert!((sol.point.rate - direct.point.rate).abs() <= 1e-3 * direct.point.rate);
        let bound = sol.dual_value.unwrap();
        assert!(bound >= direct.point.rate - 1e-6 * direct.point.rate);
    }
}
