//! Extended-target problem: maximize the rate subject to an energy threshold,
//! a trace-CRB threshold and the power budget.
//!
//! The combined channel `H = [H_IDᵀ H_EHᵀ]ᵀ` splits the transmit space into
//! its row space (dimension `r`) and null space. The optimal covariance is
//! block diagonal in that basis with an isotropic null block,
//! `S = V̄ S₁ V̄ᴴ + p₀ V₀V₀ᴴ`, so only the `r × r` block `S₁` and the scalar
//! `p₀` are optimized.
//!
//! Internal units: `Ŝ = S/P`, energies are divided by `P σ_max(H_EH)²` and the
//! trace-inverse constraint by `Γ_S,2 P`.

use std::f64::consts::LN_2;

use log::debug;

use crate::channel::ChannelSet;
use crate::convex::barrier::{pack_hermitian, unpack_hermitian};
use crate::convex::{
    barrier_maximize, ellipsoid_solve, phase_one, Affine, AffineHermitian, BarrierParams, BarrierProblem, ConcaveFn,
    Cut, EllipsoidParams, Lmi, LmiKind, Termination,
};
use crate::error::{Error, Result};
use crate::linalg::{self, cr, CMatrix, CVector, RVector};
use crate::metrics::{CrePoint, SolveMeta, Status, System, Thresholds};

/// Row-space / null-space split of the combined channel.
#[derive(Debug, Clone)]
pub struct P2Reduction {
    /// `M × r`, orthonormal columns spanning the row space of `H`.
    pub v_range: CMatrix,
    /// `M × (M − r)`.
    pub v_null: CMatrix,
    /// `H_ID V̄`.
    pub h_id: CMatrix,
    /// `H_EH V̄`.
    pub h_eh: CMatrix,
    pub r: usize,
}

impl P2Reduction {
    pub fn m(&self) -> usize {
        self.v_range.nrows()
    }

    pub fn null_dim(&self) -> usize {
        self.v_null.ncols()
    }

    /// `V̄ S₁ V̄ᴴ + p₀ V₀V₀ᴴ`.
    pub fn assemble(&self, s1: &CMatrix, p0: f64) -> CMatrix {
        let mut s = &self.v_range * s1 * self.v_range.adjoint();
        if self.null_dim() > 0 && p0 != 0.0 {
            s += &self.v_null * self.v_null.adjoint() * cr(p0);
        }
        linalg::hermitian_part(&s)
    }
}

pub fn reduce_p2(channels: &ChannelSet) -> Result<P2Reduction> {
    let h = stack_rows(&channels.h_id, &channels.h_eh);
    let dec = linalg::svd(&h);
    let r = linalg::numerical_rank(&dec.sigma, h.nrows(), h.ncols());
    if r == 0 {
        return Err(Error::InvalidScenario("combined ID/EH channel is zero".into()));
    }
    let m = h.ncols();
    let v_range = dec.v.columns(0, r).into_owned();
    let v_null = dec.v.columns(r, m - r).into_owned();
    Ok(P2Reduction { h_id: &channels.h_id * &v_range, h_eh: &channels.h_eh * &v_range, v_range, v_null, r })
}

pub(crate) fn stack_rows(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let mut h = CMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
    h.view_mut((0, 0), a.shape()).copy_from(a);
    h.view_mut((a.nrows(), 0), b.shape()).copy_from(b);
    h
}

/// Multipliers of the energy, trace-inverse and power constraints, in
/// bits per W, bits per unit of `tr(S⁻¹)` and bits per W.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct P2Multipliers {
    pub lambda: f64,
    pub mu: f64,
    pub nu: f64,
}

#[derive(Debug, Clone)]
pub struct P2Solution {
    pub s: CMatrix,
    pub s1: CMatrix,
    pub p0: f64,
    pub multipliers: Option<P2Multipliers>,
    pub point: CrePoint,
}

#[derive(Debug, Clone, Copy)]
pub struct P2Config {
    pub barrier: BarrierParams,
    pub boundary_tol: f64,
}

impl Default for P2Config {
    fn default() -> Self {
        Self { barrier: BarrierParams::default(), boundary_tol: 1e-9 }
    }
}

/// Normalized data shared by the reduced, unreduced and low-SNR solvers.
#[derive(Debug, Clone, Copy)]
struct Scaled {
    gamma_s2: f64,
    /// `P σ_max(H_EH)²`.
    e_scale: f64,
    gamma_eh: f64,
    /// `Γ_S,2 P`, or `∞`.
    crb_cap: f64,
}

impl Scaled {
    fn new(system: &System, th: &Thresholds) -> Result<Self> {
        if th.gamma_eh.is_nan() || !(th.gamma_s > 0.0) {
            return Err(Error::InvalidInput("need Γ_S > 0 and a numeric Γ_EH".into()));
        }
        let smax = linalg::spectral_norm(&system.channels.h_eh);
        let e_scale = system.power * if smax > 0.0 { smax * smax } else { 1.0 };
        let gamma_s2 = if th.gamma_s.is_finite() { system.gamma_s2(th.gamma_s) } else { f64::INFINITY };
        Ok(Self { gamma_s2, e_scale, gamma_eh: th.gamma_eh / e_scale, crb_cap: gamma_s2 * system.power })
    }

    fn energy_active(&self) -> bool {
        self.gamma_eh > 0.0
    }

    fn crb_active(&self) -> bool {
        self.crb_cap.is_finite()
    }
}

/// The reduced problem over `(Ŝ₁, p̂₀)` as a barrier program.
struct Reduced<'a> {
    red: &'a P2Reduction,
    sc: Scaled,
    h: CMatrix,
    g: CMatrix,
    with_p0: bool,
}

impl<'a> Reduced<'a> {
    fn new(system: &System, red: &'a P2Reduction, th: &Thresholds) -> Result<Self> {
        let sc = Scaled::new(system, th)?;
        let h = &red.h_id * cr((system.power / system.sigma_id_sq).sqrt());
        let g = linalg::hermitian_part(&(red.h_eh.adjoint() * &red.h_eh)) * cr(system.power / sc.e_scale);
        let with_p0 = sc.crb_active() && red.null_dim() > 0;
        Ok(Self { red, sc, h, g, with_p0 })
    }

    fn nvars(&self) -> usize {
        self.red.r * self.red.r + usize::from(self.with_p0)
    }

    fn p0_index(&self) -> usize {
        self.red.r * self.red.r
    }

    fn problem(&self) -> BarrierProblem {
        let r = self.red.r;
        let k = self.red.null_dim() as f64;
        let s_map = AffineHermitian::hermitian_variable(r, 0);
        let mut power = Affine::constant(1.0).plus(&s_map.trace_with(&CMatrix::identity(r, r)).scaled(-1.0));
        let mut lmis = vec![Lmi { map: s_map.clone(), kind: LmiKind::Domain }];
        if self.with_p0 {
            power = power.plus(&Affine::var(self.p0_index(), -k));
            lmis.push(Lmi { map: AffineHermitian::scalar_variable(self.p0_index(), 1.0), kind: LmiKind::Domain });
        }
        let mut constraints = vec![ConcaveFn::affine(power)];
        if self.sc.energy_active() {
            constraints.push(ConcaveFn::affine(s_map.trace_with(&self.g).plus(&Affine::constant(-self.sc.gamma_eh))));
        }
        if self.sc.crb_active() {
            let mut crb = ConcaveFn::affine(Affine::constant(1.0)).with_neg_trace_inv(1.0 / self.sc.crb_cap, s_map.clone());
            if self.with_p0 {
                crb = crb.with_neg_trace_inv(k / self.sc.crb_cap, AffineHermitian::scalar_variable(self.p0_index(), 1.0));
            }
            constraints.push(crb);
        }
        let n_id = self.h.nrows();
        let objective = ConcaveFn::default().with_log_det(1.0 / LN_2, s_map.congruence(&self.h).plus_constant(&CMatrix::identity(n_id, n_id)));
        let share = if self.with_p0 { 0.5 } else { 1.0 };
        let mut start = pack_hermitian(&(CMatrix::identity(r, r) * cr(0.5 * share / r as f64)));
        if self.with_p0 {
            start.push(0.5 * (1.0 - share) / k);
        }
        BarrierProblem { nvars: self.nvars(), objective, constraints, lmis, start: RVector::from_vec(start) }
    }

    fn unpack(&self, x: &RVector) -> (CMatrix, f64) {
        let s1 = unpack_hermitian(&x.as_slice()[..self.red.r * self.red.r], self.red.r);
        let p0 = if self.with_p0 { x[self.p0_index()] } else { 0.0 };
        (s1, p0)
    }
}

/// Isotropic fallback when `Γ_S,2` sits at its lower limit `M²/P`.
fn isotropic_boundary(system: &System, th: &Thresholds, red: &P2Reduction) -> Result<P2Solution> {
    let m = system.m();
    let p = system.power / m as f64;
    let s = CMatrix::identity(m, m) * cr(p);
    let point = system.evaluate(&s, SolveMeta { status: Status::Boundary, iterations: 0, duality_gap: None });
    if th.gamma_eh > 0.0 && point.energy < th.gamma_eh * (1.0 - 1e-9) {
        return Err(Error::Infeasible { reason: "isotropic covariance misses the energy threshold".into(), max_slack: -1.0 });
    }
    let s1 = CMatrix::identity(red.r, red.r) * cr(p);
    Ok(P2Solution { s, s1, p0: p, multipliers: None, point })
}

/// Beamforming toward the strongest EH mode when `Γ_EH` sits at `E_max` and
/// no CRB constraint is imposed. The barrier cannot reach this rank-one point.
fn energy_limit_boundary(system: &System, th: &Thresholds, red: &P2Reduction, cfg: &P2Config) -> Option<P2Solution> {
    let e_max = system.energy_max();
    if th.gamma_s.is_finite() || (th.gamma_eh / e_max - 1.0).abs() > cfg.boundary_tol {
        return None;
    }
    let dec = linalg::svd(&system.channels.h_eh);
    let v = dec.v.column(0).into_owned();
    let s = linalg::outer(&v, &v) * cr(system.power);
    let s1 = red.v_range.adjoint() * &s * &red.v_range;
    let point = system.evaluate(&s, SolveMeta { status: Status::Boundary, iterations: 0, duality_gap: None });
    Some(P2Solution { s, s1, p0: 0.0, multipliers: None, point })
}

fn check_crb_limit(system: &System, sc: &Scaled, cfg: &P2Config) -> Result<bool> {
    if !sc.crb_active() {
        return Ok(false);
    }
    let m2 = (system.m() * system.m()) as f64;
    let rel = sc.crb_cap / m2 - 1.0;
    if rel < -cfg.boundary_tol {
        return Err(Error::Infeasible { reason: format!("Γ_S,2 = {:.4e} is below M²/P", sc.gamma_s2), max_slack: rel });
    }
    Ok(rel <= cfg.boundary_tol)
}

/// Solve the extended-target problem through the reduced program.
pub fn solve_p2(system: &System, th: &Thresholds, cfg: &P2Config) -> Result<P2Solution> {
    let red = reduce_p2(&system.channels)?;
    solve_p2_reduced(system, &red, th, cfg)
}

pub fn solve_p2_reduced(system: &System, red: &P2Reduction, th: &Thresholds, cfg: &P2Config) -> Result<P2Solution> {
    let rp = Reduced::new(system, red, th)?;
    if check_crb_limit(system, &rp.sc, cfg)? {
        return isotropic_boundary(system, th, red);
    }
    if let Some(sol) = energy_limit_boundary(system, th, red, cfg) {
        return Ok(sol);
    }
    let mut prob = rp.problem();
    let ph = phase_one(&prob, &cfg.barrier, None)?;
    debug!("p2 phase-I slack {:.3e}", ph.slack);
    if ph.slack < -cfg.boundary_tol {
        return Err(Error::Infeasible { reason: "thresholds exceed the achievable region".into(), max_slack: ph.slack });
    }
    if ph.slack <= cfg.boundary_tol {
        let (s1, p0) = rp.unpack(&ph.x);
        let (s1, p0) = (s1 * cr(system.power), p0 * system.power);
        let s = red.assemble(&s1, p0);
        let point = system.evaluate(&s, SolveMeta { status: Status::Boundary, iterations: ph.newton_steps, duality_gap: None });
        return Ok(P2Solution { s, s1, p0, multipliers: None, point });
    }
    prob.start = ph.x;
    let sol = barrier_maximize(&prob, &cfg.barrier)?;
    let (s1, p0) = rp.unpack(&sol.x);
    let (s1, p0) = (s1 * cr(system.power), p0 * system.power);
    let s = red.assemble(&s1, p0);
    let mut mult = sol.multipliers.iter().copied();
    let nu = mult.next().unwrap_or(0.0) / system.power;
    let lambda = if rp.sc.energy_active() { mult.next().unwrap_or(0.0) / rp.sc.e_scale } else { 0.0 };
    let mu = if rp.sc.crb_active() { mult.next().unwrap_or(0.0) / rp.sc.gamma_s2 } else { 0.0 };
    let meta = SolveMeta { status: Status::Optimal, iterations: ph.newton_steps + sol.newton_steps, duality_gap: Some(sol.complementarity) };
    let point = system.evaluate(&s, meta);
    Ok(P2Solution { s, s1, p0, multipliers: Some(P2Multipliers { lambda, mu, nu }), point })
}

/// Barrier solve over the full `M × M` covariance, without the reduction.
pub fn solve_p2_direct(system: &System, th: &Thresholds, cfg: &P2Config) -> Result<P2Solution> {
    let sc = Scaled::new(system, th)?;
    let m = system.m();
    let full = P2Reduction {
        v_range: CMatrix::identity(m, m),
        v_null: CMatrix::zeros(m, 0),
        h_id: system.channels.h_id.clone(),
        h_eh: system.channels.h_eh.clone(),
        r: m,
    };
    if check_crb_limit(system, &sc, cfg)? {
        return isotropic_boundary(system, th, &full);
    }
    let mut sol = solve_p2_reduced(system, &full, th, cfg)?;
    sol.p0 = 0.0;
    Ok(sol)
}

/// Equivalent ID/EH channels of a power-splitting receiver with ratio `rho`
/// routed to the harvester.
pub fn power_splitting_system(system: &System, rho: f64) -> Result<System> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidInput("power-splitting ratio must lie in [0, 1]".into()));
    }
    let g = &system.channels.h_id;
    let mut out = system.clone();
    out.channels.h_id = g * cr((1.0 - rho).sqrt());
    out.channels.h_eh = g * cr(rho.sqrt());
    Ok(out)
}

// ---------------------------------------------------------------------------
// Low-SNR problem: linear rate surrogate, closed-form inner maximization.

/// Dual variables of the low-SNR problem in physical units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct P3Dual {
    pub lambda: f64,
    pub mu: f64,
    pub nu: f64,
}

/// Closed-form maximizer of `−tr(E S₁) − μ tr(S₁⁻¹) − k(μ/p₀ + ν p₀)` for
/// `E = Q diag(σ_e) Qᴴ ≻ 0`: `p̃_k = √(μ/σ_e,k)` and `p₀ = √(μ/ν)`.
pub fn p3_inner_powers(sigma_e: &[f64], mu: f64, nu: f64) -> (Vec<f64>, f64) {
    let p = sigma_e.iter().map(|&s| (mu / s).sqrt()).collect();
    (p, (mu / nu).sqrt())
}

/// Value of the inner Lagrangian at diagonal powers `p` and `p0`.
pub fn p3_inner_objective(sigma_e: &[f64], mu: f64, nu: f64, null_dim: usize, p: &[f64], p0: f64) -> f64 {
    let mut v = -sigma_e.iter().zip(p).map(|(s, x)| s * x + mu / x).sum::<f64>();
    if null_dim > 0 {
        v -= null_dim as f64 * (mu / p0 + nu * p0);
    }
    v
}

#[derive(Debug, Clone, Copy)]
pub struct P3Config {
    pub ellipsoid: EllipsoidParams,
    pub boundary_tol: f64,
}

impl Default for P3Config {
    fn default() -> Self {
        Self { ellipsoid: EllipsoidParams { tol: 1e-10, max_iter: None, max_condition: 1e14 }, boundary_tol: 1e-9 }
    }
}

#[derive(Debug, Clone)]
pub struct P3Solution {
    pub solution: P2Solution,
    pub dual: P3Dual,
    pub dual_value: f64,
    pub termination: Termination,
}

struct LowSnr<'a> {
    red: &'a P2Reduction,
    sc: Scaled,
    /// `H̃_IDᴴH̃_ID / κ` with `κ = λ_max`.
    k: CMatrix,
    kappa: f64,
    g: CMatrix,
    /// Indices of `(λ, μ', ν)` kept in the search.
    active: Vec<usize>,
}

struct P3Inner {
    s1: CMatrix,
    p0: f64,
    value: f64,
    grad: [f64; 3],
}

impl LowSnr<'_> {
    fn expand(&self, y: &RVector) -> [f64; 3] {
        let mut full = [0.0; 3];
        for (i, &a) in self.active.iter().enumerate() {
            full[a] = y[i];
        }
        full
    }

    fn e_matrix(&self, lambda: f64, nu: f64) -> CMatrix {
        let r = self.red.r;
        linalg::hermitian_part(&(CMatrix::identity(r, r) * cr(nu) - &self.k - &self.g * cr(lambda)))
    }

    /// `Err((normal, depth))` for a violated dual constraint.
    fn eval(&self, y: &[f64; 3]) -> std::result::Result<P3Inner, ([f64; 3], f64)> {
        let [lambda, mu_n, nu] = *y;
        if lambda < 0.0 {
            return Err(([-1.0, 0.0, 0.0], -lambda));
        }
        if mu_n <= 0.0 {
            return Err(([0.0, -1.0, 0.0], -mu_n));
        }
        let e = linalg::evd(&self.e_matrix(lambda, nu));
        let r = self.red.r;
        let smin = e.values[r - 1];
        if smin <= 1e-14 * e.values[0].abs().max(1.0) {
            let q: CVector = e.vectors.column(r - 1).into_owned();
            let qgq = (q.adjoint() * &self.g * &q)[(0, 0)].re;
            return Err(([qgq, 0.0, -1.0], -smin));
        }
        let k = self.red.null_dim();
        if k > 0 && nu <= 0.0 {
            return Err(([0.0, 0.0, -1.0], -nu));
        }
        let mu = mu_n / self.sc.crb_cap;
        let sig: Vec<f64> = e.values.iter().copied().collect();
        let (p, p0) = p3_inner_powers(&sig, mu, nu);
        let s1 = linalg::from_eigen(&e.vectors, &p);
        let inner = p3_inner_objective(&sig, mu, nu, k, &p, p0);
        let tr_inv: f64 = p.iter().map(|x| 1.0 / x).sum::<f64>() + if k > 0 { k as f64 / p0 } else { 0.0 };
        let tr: f64 = p.iter().sum::<f64>() + if k > 0 { k as f64 * p0 } else { 0.0 };
        let eh = linalg::re_trace_prod(&self.g, &s1);
        let gl = if self.sc.energy_active() { self.sc.gamma_eh } else { 0.0 };
        let value = inner - lambda * gl + mu_n + nu;
        let grad = [eh - gl, 1.0 - tr_inv / self.sc.crb_cap, 1.0 - tr];
        Ok(P3Inner { s1, p0, value, grad })
    }

    fn oracle(&self, y: &RVector) -> Cut {
        let full = self.expand(y);
        let pick = |v: [f64; 3]| RVector::from_iterator(self.active.len(), self.active.iter().map(|&a| v[a]));
        match self.eval(&full) {
            Ok(inner) => Cut::Objective { value: inner.value, subgradient: pick(inner.grad) },
            Err((normal, depth)) => Cut::Feasibility { normal: pick(normal), depth },
        }
    }

    fn objective(&self, s1: &CMatrix) -> f64 {
        linalg::re_trace_prod(&self.k, s1)
    }

    /// Smallest normalized constraint margin.
    fn slack(&self, s1: &CMatrix, p0: f64) -> f64 {
        let k = self.red.null_dim() as f64;
        let mut v = 1.0 - linalg::trace_re(s1) - k * p0;
        if self.sc.energy_active() {
            v = v.min(linalg::re_trace_prod(&self.g, s1) - self.sc.gamma_eh);
        }
        let tr_inv = match linalg::inv_pd(s1) {
            Some(inv) => linalg::trace_re(&inv) + if k > 0.0 { k / p0 } else { 0.0 },
            None => f64::INFINITY,
        };
        v.min(1.0 - tr_inv / self.sc.crb_cap)
    }
}

/// Solve the low-SNR surrogate by the ellipsoid method over `(λ, μ, ν)`.
///
/// The rate surrogate is `tr(H̃_ID S₁ H̃_IDᴴ)`; the reported point carries the
/// exact rate of the recovered covariance.
pub fn solve_p3_lowsnr(system: &System, red: &P2Reduction, th: &Thresholds, cfg: &P3Config) -> Result<P3Solution> {
    let sc = Scaled::new(system, th)?;
    if !sc.crb_active() {
        return Err(Error::InvalidInput("the low-SNR solver needs a finite CRB threshold".into()));
    }
    let pcfg = P2Config { boundary_tol: cfg.boundary_tol, ..Default::default() };
    if check_crb_limit(system, &sc, &pcfg)? {
        return Err(Error::Infeasible { reason: "Γ_S,2 at its limit M²/P leaves no interior".into(), max_slack: 0.0 });
    }
    let kmat = linalg::hermitian_part(&(red.h_id.adjoint() * &red.h_id));
    let kappa = linalg::max_eigenvalue(&kmat).max(f64::MIN_POSITIVE);
    let g = linalg::hermitian_part(&(red.h_eh.adjoint() * &red.h_eh)) * cr(system.power / sc.e_scale);
    let mut active = vec![1, 2];
    if sc.energy_active() {
        active.insert(0, 0);
    }
    let low = LowSnr { red, k: kmat * cr(1.0 / kappa), kappa, g, sc, active };

    // Strictly feasible point from the exact problem's phase I, used for the
    // dual bound and as the fallback in recovery.
    let rp = Reduced::new(system, red, th)?;
    let ph = phase_one(&rp.problem(), &pcfg.barrier, None)?;
    let (s_sl, p_sl) = rp.unpack(&ph.x);
    let p_sl = if rp.with_p0 { p_sl } else { 0.0 };
    let slack = low.slack(&s_sl, p_sl);
    if !(slack > cfg.boundary_tol) {
        return Err(Error::Infeasible { reason: "thresholds leave no strictly feasible covariance".into(), max_slack: slack });
    }
    // Objective lies in [0, 1]; dual optimum bounded by (f* − f(slater))/slack.
    let bound = (1.0 - low.objective(&s_sl)).max(1e-6) / slack;
    let mut center = RVector::zeros(low.active.len());
    let pos = |a: usize| low.active.iter().position(|&x| x == a).expect("active");
    center[pos(1)] = 0.5 * bound;
    center[pos(2)] = 1.0 + bound;
    let radius = 4.0 * (bound + 1.0);
    let out = ellipsoid_solve(center, radius, |y| low.oracle(y), cfg.ellipsoid);
    let y = out.point.clone().ok_or_else(|| Error::Internal("low-SNR ellipsoid found no dual-feasible point".into()))?;
    let full = low.expand(&y);
    let inner = low.eval(&full).map_err(|_| Error::Internal("best low-SNR dual point left the domain".into()))?;

    // Mix toward the strictly feasible point until every constraint holds.
    let mut t = 1.0;
    let mix = |t: f64| (&inner.s1 * cr(t) + &s_sl * cr(1.0 - t), t * inner.p0 + (1.0 - t) * p_sl);
    let (mut s1, mut p0) = mix(t);
    if low.slack(&s1, p0) < 0.0 {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let (a, b) = mix(mid);
            if low.slack(&a, b) >= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        t = lo;
        (s1, p0) = mix(t);
    }
    let primal = low.objective(&s1);
    let gap = (out.value - primal).max(0.0);
    debug!("p3: dual {:.6e} primal {:.6e} mix {:.6} iterations {}", out.value, primal, t, out.iterations);
    let (s1, p0) = (s1 * cr(system.power), p0 * system.power);
    let p0 = if red.null_dim() > 0 { p0 } else { 0.0 };
    let s = red.assemble(&s1, p0);
    let status = if out.truncated() { Status::Truncated } else { Status::Optimal };
    let point = system.evaluate(&s, SolveMeta { status, iterations: out.iterations, duality_gap: Some(gap) });
    let dual = P3Dual {
        lambda: full[0] * low.kappa / sc.e_scale * system.power,
        mu: full[1] * low.kappa * system.power / sc.gamma_s2,
        nu: full[2] * low.kappa,
    };
    Ok(P3Solution {
        solution: P2Solution { s, s1, p0, multipliers: None, point },
        dual,
        dual_value: out.value * low.kappa * system.power,
        termination: out.termination,
    })
}

// ---------------------------------------------------------------------------
// Co-located ID/EH receiver with a single antenna.

/// Receiver architecture of a co-located single-antenna ID/EH receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitDesign {
    /// Fraction `tau` of the time is spent harvesting; `gamma2` is the energy
    /// delivered in that slot.
    TimeSwitching { tau: f64, gamma2: f64 },
    /// Fraction `rho` of the received power goes to the harvester.
    PowerSplitting { rho: f64 },
}

/// Closed-form point of the co-located boundary, with the covariance for
/// the power-splitting design.
#[derive(Debug, Clone)]
pub struct ColocatedPoint {
    pub point: CrePoint,
    /// Total received power `Γ = ‖g‖² p₁`.
    pub gamma_total: f64,
    pub s: Option<CMatrix>,
}

/// `P(x) = x + (M−1)²/(Γ_S,2 − 1/x)` is the power needed to put `x` on the
/// channel direction with the rest spread isotropically. It is U-shaped with
/// minimum `M²/Γ_S,2` at `x = M/Γ_S,2`; the boundary uses the largest root.
pub fn colocated_direction_power(m: usize, gamma_s2: f64, power: f64) -> Result<f64> {
    if m == 1 {
        return Ok(power);
    }
    let mf = m as f64;
    let f = |x: f64| x + (mf - 1.0).powi(2) / (gamma_s2 - 1.0 / x);
    let lo0 = mf / gamma_s2;
    if f(lo0) > power * (1.0 + 1e-12) {
        return Err(Error::Infeasible { reason: "power identity has no root: Γ_S,2 below M²/P".into(), max_slack: power - f(lo0) });
    }
    let (mut lo, mut hi) = (lo0, power);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) <= power {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

fn single_antenna_channel(system: &System) -> Result<CVector> {
    let ch = &system.channels;
    if ch.h_id.nrows() != 1 || ch.h_eh.nrows() != 1 {
        return Err(Error::InvalidScenario("co-located closed forms need a single-antenna receiver".into()));
    }
    let diff = linalg::fro_norm(&(&ch.h_id - &ch.h_eh));
    if diff > 1e-12 * linalg::fro_norm(&ch.h_id).max(f64::MIN_POSITIVE) {
        return Err(Error::InvalidScenario("co-located receiver needs identical ID and EH channels".into()));
    }
    Ok(ch.h_id.row(0).adjoint())
}

/// Boundary point of the co-located receiver at CRB threshold `gamma_s`.
pub fn colocated_re(system: &System, design: SplitDesign, gamma_s: f64) -> Result<ColocatedPoint> {
    let g = single_antenna_channel(system)?;
    let g2 = g.norm_squared();
    let m = system.m();
    let gamma_s2 = system.gamma_s2(gamma_s);
    let p1 = colocated_direction_power(m, gamma_s2, system.power)?;
    let gamma_total = g2 * p1;
    let crb = system.sigma_s_sq * system.geometry.n_s as f64 * gamma_s2 / system.block_len;
    let sid = system.sigma_id_sq;
    match design {
        SplitDesign::PowerSplitting { rho } => {
            if !(0.0..=1.0).contains(&rho) {
                return Err(Error::InvalidInput("power-splitting ratio must lie in [0, 1]".into()));
            }
            let rate = (1.0 + (1.0 - rho) * gamma_total / sid).log2();
            let energy = rho * gamma_total;
            let p0 = if m > 1 { (system.power - p1) / (m - 1) as f64 } else { 0.0 };
            let proj = &g * g.adjoint() * cr(1.0 / g2);
            let s = &proj * cr(p1) + (CMatrix::identity(m, m) - &proj) * cr(p0);
            let point = CrePoint { crb, rate, energy, energy_dc: system.zeta * energy, meta: SolveMeta::closed_form() };
            Ok(ColocatedPoint { point, gamma_total, s: Some(s) })
        }
        SplitDesign::TimeSwitching { tau, gamma2 } => {
            if !(tau > 0.0 && tau < 1.0) {
                return Err(Error::InvalidInput("time-switching fraction must lie in (0, 1)".into()));
            }
            if !(gamma2 >= 0.0 && gamma2 <= gamma_total) {
                return Err(Error::Infeasible { reason: "harvested energy exceeds the total received power".into(), max_slack: gamma_total - gamma2 });
            }
            let gamma1 = gamma_total - gamma2;
            let rate = (1.0 - tau) * (1.0 + gamma1 / ((1.0 - tau) * sid)).log2();
            let point = CrePoint { crb, rate, energy: gamma2, energy_dc: system.zeta * gamma2, meta: SolveMeta::closed_form() };
            Ok(ColocatedPoint { point, gamma_total, s: None })
        }
    }
}

/// Numerical solve of the single-antenna time-switching program over the
/// time-averaged powers `q₁ = (1−τ)p₁,₁`, `q₂ = τp₂,₁` on the channel
/// direction and `q₀` on each orthogonal direction.
pub fn time_switching_numeric(system: &System, tau: f64, gamma_eh: f64, gamma_s: f64, params: &BarrierParams) -> Result<CrePoint> {
    let g = single_antenna_channel(system)?;
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidInput("time-switching fraction must lie in (0, 1)".into()));
    }
    let g2 = g.norm_squared();
    let m = system.m();
    let k = (m - 1) as f64;
    let p = system.power;
    let gamma_s2 = system.gamma_s2(gamma_s);
    let cap = gamma_s2 * p;
    let snr = g2 * p / system.sigma_id_sq;
    // Variables (normalized by P): q1, q2, q0.
    let rate_map = AffineHermitian::constant(CMatrix::identity(1, 1)).with_term(0, CMatrix::from_element(1, 1, cr(snr / (1.0 - tau))));
    let objective = ConcaveFn::default().with_log_det((1.0 - tau) / LN_2, rate_map);
    let total = AffineHermitian::scalar_variable(0, 1.0).with_term(1, CMatrix::from_element(1, 1, cr(1.0)));
    let mut constraints = vec![
        ConcaveFn::affine(Affine { constant: 1.0, coeffs: vec![(0, -1.0), (1, -1.0), (2, -k)] }),
        ConcaveFn::affine(Affine { constant: -gamma_eh / (g2 * p), coeffs: vec![(1, 1.0)] }),
    ];
    let mut crb = ConcaveFn::affine(Affine::constant(1.0)).with_neg_trace_inv(1.0 / cap, total);
    let mut lmis = vec![
        Lmi { map: AffineHermitian::scalar_variable(0, 1.0), kind: LmiKind::Domain },
        Lmi { map: AffineHermitian::scalar_variable(1, 1.0), kind: LmiKind::Domain },
    ];
    if m > 1 {
        crb = crb.with_neg_trace_inv(k / cap, AffineHermitian::scalar_variable(2, 1.0));
        lmis.push(Lmi { map: AffineHermitian::scalar_variable(2, 1.0), kind: LmiKind::Domain });
    }
    constraints.push(crb);
    let nvars = if m > 1 { 3 } else { 2 };
    let mut start = vec![0.25, 0.25];
    if m > 1 {
        start.push(0.25 / k);
    }
    let prob = BarrierProblem { nvars, objective, constraints, lmis, start: RVector::from_vec(start) };
    let sol = barrier_maximize(&prob, params)?;
    let (q1, q2) = (sol.x[0] * p, sol.x[1] * p);
    let q0 = if m > 1 { sol.x[2] * p } else { 0.0 };
    let rate = (1.0 - tau) * (1.0 + g2 * q1 / ((1.0 - tau) * system.sigma_id_sq)).log2();
    let energy = g2 * q2;
    let tr_inv = 1.0 / (q1 + q2) + if m > 1 { k / q0 } else { 0.0 };
    let crb = system.sigma_s_sq * system.geometry.n_s as f64 * tr_inv / system.block_len;
    let meta = SolveMeta { status: Status::Optimal, iterations: sol.newton_steps, duality_gap: Some(sol.complementarity) };
    Ok(CrePoint { crb, rate, energy, energy_dc: system.zeta * energy, meta })
}
