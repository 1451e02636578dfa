//! Log-barrier Newton method for smooth concave programs over real vectors.
//!
//! Functions are built from three concave atoms composed with affine
//! Hermitian maps `X(x) = X₀ + Σ x_k B_k`: affine terms, `w·ln det X(x)` and
//! `−w·tr(X(x)⁻¹)`. Hermitian matrix variables are packed into `d²` reals
//! (diagonal, then real/imaginary parts of the strict upper triangle), so a
//! single Newton core serves every problem.

use nalgebra::Cholesky;

use crate::error::{Error, Result};
use crate::linalg::{c, cr, CMatrix, RMatrix, RVector};

/// Number of reals that encode a `d × d` Hermitian matrix.
pub fn hermitian_len(d: usize) -> usize {
    d * d
}

/// The basis matrices of the packing, in order.
pub fn hermitian_basis(d: usize) -> Vec<CMatrix> {
    let mut out = Vec::with_capacity(d * d);
    for i in 0..d {
        let mut b = CMatrix::zeros(d, d);
        b[(i, i)] = cr(1.0);
        out.push(b);
    }
    for i in 0..d {
        for j in i + 1..d {
            let mut re = CMatrix::zeros(d, d);
            re[(i, j)] = cr(1.0);
            re[(j, i)] = cr(1.0);
            out.push(re);
            let mut im = CMatrix::zeros(d, d);
            im[(i, j)] = c(0.0, 1.0);
            im[(j, i)] = c(0.0, -1.0);
            out.push(im);
        }
    }
    out
}

pub fn pack_hermitian(s: &CMatrix) -> Vec<f64> {
    let d = s.nrows();
    let mut out = Vec::with_capacity(d * d);
    for i in 0..d {
        out.push(s[(i, i)].re);
    }
    for i in 0..d {
        for j in i + 1..d {
            let z = (s[(i, j)] + s[(j, i)].conj()) * 0.5;
            out.push(z.re);
            out.push(z.im);
        }
    }
    out
}

pub fn unpack_hermitian(x: &[f64], d: usize) -> CMatrix {
    let mut s = CMatrix::zeros(d, d);
    for i in 0..d {
        s[(i, i)] = cr(x[i]);
    }
    let mut k = d;
    for i in 0..d {
        for j in i + 1..d {
            s[(i, j)] = c(x[k], x[k + 1]);
            s[(j, i)] = c(x[k], -x[k + 1]);
            k += 2;
        }
    }
    s
}

/// `X(x) = X₀ + Σ_k x_{i_k} B_k` with Hermitian `X₀`, `B_k`.
#[derive(Debug, Clone)]
pub struct AffineHermitian {
    pub constant: CMatrix,
    pub terms: Vec<(usize, CMatrix)>,
}

impl AffineHermitian {
    pub fn constant(x0: CMatrix) -> Self {
        Self { constant: x0, terms: Vec::new() }
    }

    /// The packed Hermitian variable stored at `x[offset .. offset + d²]`.
    pub fn hermitian_variable(d: usize, offset: usize) -> Self {
        let terms = hermitian_basis(d).into_iter().enumerate().map(|(k, b)| (offset + k, b)).collect();
        Self { constant: CMatrix::zeros(d, d), terms }
    }

    /// The `1 × 1` map `x ↦ scale · x[idx]`.
    pub fn scalar_variable(idx: usize, scale: f64) -> Self {
        Self { constant: CMatrix::zeros(1, 1), terms: vec![(idx, CMatrix::from_element(1, 1, cr(scale)))] }
    }

    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }

    pub fn with_term(mut self, idx: usize, b: CMatrix) -> Self {
        self.terms.push((idx, b));
        self
    }

    pub fn plus(mut self, other: &AffineHermitian) -> Self {
        self.constant += &other.constant;
        self.terms.extend(other.terms.iter().cloned());
        self
    }

    pub fn plus_constant(mut self, x0: &CMatrix) -> Self {
        self.constant += x0;
        self
    }

    /// `G X(x) Gᴴ`.
    pub fn congruence(&self, g: &CMatrix) -> Self {
        let gh = g.adjoint();
        Self {
            constant: g * &self.constant * &gh,
            terms: self.terms.iter().map(|(i, b)| (*i, g * b * &gh)).collect(),
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            constant: &self.constant * cr(a),
            terms: self.terms.iter().map(|(i, b)| (*i, b * cr(a))).collect(),
        }
    }

    pub fn eval(&self, x: &RVector) -> CMatrix {
        let mut out = self.constant.clone();
        for (i, b) in &self.terms {
            if x[*i] != 0.0 {
                out += b * cr(x[*i]);
            }
        }
        out
    }

    /// The affine functional `x ↦ Re tr(W X(x))`.
    pub fn trace_with(&self, w: &CMatrix) -> Affine {
        Affine {
            constant: crate::linalg::re_trace_prod(w, &self.constant),
            coeffs: self.terms.iter().map(|(i, b)| (*i, crate::linalg::re_trace_prod(w, b))).collect(),
        }
    }

    /// `x ↦ Re X(x)[i, j]`-style extraction via `tr(E X)`.
    pub fn entry(&self, i: usize, j: usize) -> (Affine, Affine) {
        let d = self.dim();
        let mut e = CMatrix::zeros(d, d);
        e[(j, i)] = cr(1.0);
        let re = self.trace_with(&e);
        e[(j, i)] = c(0.0, -1.0);
        let im = self.trace_with(&e);
        (re, im)
    }
}

/// `x ↦ constant + Σ coeff_k x_{i_k}`.
#[derive(Debug, Clone, Default)]
pub struct Affine {
    pub constant: f64,
    pub coeffs: Vec<(usize, f64)>,
}

impl Affine {
    pub fn constant(v: f64) -> Self {
        Self { constant: v, coeffs: Vec::new() }
    }

    pub fn var(idx: usize, coeff: f64) -> Self {
        Self { constant: 0.0, coeffs: vec![(idx, coeff)] }
    }

    pub fn plus(mut self, other: &Affine) -> Self {
        self.constant += other.constant;
        self.coeffs.extend(other.coeffs.iter().cloned());
        self
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self { constant: self.constant * a, coeffs: self.coeffs.iter().map(|(i, v)| (*i, v * a)).collect() }
    }

    pub fn value(&self, x: &RVector) -> f64 {
        self.constant + self.coeffs.iter().map(|(i, v)| v * x[*i]).sum::<f64>()
    }
}

/// Sum of concave atoms.
#[derive(Debug, Clone, Default)]
pub struct ConcaveFn {
    pub affine: Affine,
    /// `w · ln det X(x)`, `w ≥ 0`.
    pub log_dets: Vec<(f64, AffineHermitian)>,
    /// `−w · tr(X(x)⁻¹)`, `w ≥ 0`.
    pub neg_trace_invs: Vec<(f64, AffineHermitian)>,
}

/// Value with optional first and second derivatives.
#[derive(Debug, Clone)]
pub struct Eval {
    pub value: f64,
    pub grad: RVector,
    pub hess: RMatrix,
}

impl ConcaveFn {
    pub fn affine(a: Affine) -> Self {
        Self { affine: a, ..Default::default() }
    }

    pub fn with_affine(mut self, a: &Affine) -> Self {
        self.affine = self.affine.plus(a);
        self
    }

    pub fn with_log_det(mut self, w: f64, map: AffineHermitian) -> Self {
        assert!(w >= 0.0, "log-det weight must be non-negative");
        self.log_dets.push((w, map));
        self
    }

    pub fn with_neg_trace_inv(mut self, w: f64, map: AffineHermitian) -> Self {
        assert!(w >= 0.0, "trace-inverse weight must be non-negative");
        self.neg_trace_invs.push((w, map));
        self
    }

    /// Value only; `None` outside the domain.
    pub fn value(&self, x: &RVector) -> Option<f64> {
        let mut v = self.affine.value(x);
        for (w, map) in &self.log_dets {
            v += w * crate::linalg::ln_det_pd(&map.eval(x))?;
        }
        for (w, map) in &self.neg_trace_invs {
            let inv = crate::linalg::inv_pd(&map.eval(x))?;
            v -= w * crate::linalg::trace_re(&inv);
        }
        Some(v)
    }

    /// Value, gradient and Hessian; `None` outside the domain.
    pub fn eval(&self, x: &RVector, with_hess: bool) -> Option<Eval> {
        let n = x.len();
        let mut grad = RVector::zeros(n);
        let mut hess = RMatrix::zeros(if with_hess { n } else { 0 }, if with_hess { n } else { 0 });
        let mut value = self.affine.value(x);
        for (i, v) in &self.affine.coeffs {
            grad[*i] += v;
        }
        for (w, map) in &self.log_dets {
            value += add_log_det(*w, map, x, &mut grad, &mut hess, with_hess)?;
        }
        for (w, map) in &self.neg_trace_invs {
            let xm = map.eval(x);
            let inv = crate::linalg::inv_pd(&xm)?;
            value -= w * crate::linalg::trace_re(&inv);
            let ys: Vec<CMatrix> = map.terms.iter().map(|(_, b)| &inv * b).collect();
            let zs: Vec<CMatrix> = ys.iter().map(|y| y * &inv).collect();
            for (k, (i, _)) in map.terms.iter().enumerate() {
                grad[*i] += w * zs[k].trace().re;
            }
            if with_hess {
                accumulate_pairs(&mut hess, &map.terms, &ys, &zs, -2.0 * w, false);
            }
        }
        Some(Eval { value, grad, hess })
    }
}

/// Adds `w·ln det X(x)` derivatives into `grad`/`hess`; returns the value.
fn add_log_det(w: f64, map: &AffineHermitian, x: &RVector, grad: &mut RVector, hess: &mut RMatrix, with_hess: bool) -> Option<f64> {
    let xm = map.eval(x);
    let l = crate::linalg::cholesky(&xm)?;
    let inv = crate::linalg::inv_from_cholesky(&l);
    let ld = crate::linalg::ln_det_from_cholesky(&l);
    let ys: Vec<CMatrix> = map.terms.iter().map(|(_, b)| &inv * b).collect();
    for (k, (i, _)) in map.terms.iter().enumerate() {
        grad[*i] += w * ys[k].trace().re;
    }
    if with_hess {
        accumulate_pairs(hess, &map.terms, &ys, &ys, -w, true);
    }
    Some(w * ld)
}

/// `hess[i_k, i_l] += scale · Re tr(left_k right_l)`, symmetrized when asked.
fn accumulate_pairs(hess: &mut RMatrix, terms: &[(usize, CMatrix)], left: &[CMatrix], right: &[CMatrix], scale: f64, symmetric: bool) {
    let t = terms.len();
    for k in 0..t {
        let start = if symmetric { k } else { 0 };
        for l in start..t {
            let v = scale * crate::linalg::re_trace_prod(&left[k], &right[l]);
            let (i, j) = (terms[k].0, terms[l].0);
            if symmetric && l != k {
                hess[(i, j)] += v;
                hess[(j, i)] += v;
            } else {
                hess[(i, j)] += v;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmiKind {
    /// Must hold strictly everywhere (e.g. `S ≻ 0`); never relaxed in phase I.
    Domain,
    /// A genuine constraint; phase I relaxes it to `X(x) ⪰ s·I`.
    Constraint,
}

#[derive(Debug, Clone)]
pub struct Lmi {
    pub map: AffineHermitian,
    pub kind: LmiKind,
}

/// `maximize f(x)` s.t. `g_i(x) ≥ 0`, `X_j(x) ⪰ 0`.
#[derive(Debug, Clone)]
pub struct BarrierProblem {
    pub nvars: usize,
    pub objective: ConcaveFn,
    pub constraints: Vec<ConcaveFn>,
    pub lmis: Vec<Lmi>,
    /// Strictly feasible start, or a point inside the domain LMIs from which
    /// phase I can begin.
    pub start: RVector,
}

#[derive(Debug, Clone, Copy)]
pub struct BarrierParams {
    pub t0: f64,
    pub mu_factor: f64,
    /// Newton stops when `λ²/2 ≤ newton_tol`.
    pub newton_tol: f64,
    /// Outer loop stops when the barrier gap `m/t ≤ outer_tol`.
    pub outer_tol: f64,
    pub max_newton: usize,
}

impl Default for BarrierParams {
    fn default() -> Self {
        Self { t0: 1.0, mu_factor: 10.0, newton_tol: 1e-10, outer_tol: 1e-8, max_newton: 200 }
    }
}

#[derive(Debug, Clone)]
pub struct BarrierSolution {
    pub x: RVector,
    pub value: f64,
    /// `1/(t g_i)` per scalar constraint.
    pub multipliers: Vec<f64>,
    /// `X_j⁻¹/t` per LMI.
    pub lmi_duals: Vec<CMatrix>,
    pub constraint_values: Vec<f64>,
    /// `‖∇f + Σμ_i∇g_i + Σ⟨Λ_j, ∂X_j⟩‖ / (1 + ‖∇f‖)`.
    pub stationarity: f64,
    /// `Σ μ_i g_i + Σ tr(Λ_j X_j)`.
    pub complementarity: f64,
    /// `λ²/2` at the last centering step.
    pub newton_decrement: f64,
    /// False when the last centering ended because the line search could no
    /// longer change the barrier value in double precision.
    pub centered: bool,
    pub newton_steps: usize,
}

struct Barrier<'a> {
    p: &'a BarrierProblem,
}

impl Barrier<'_> {
    fn degree(&self) -> f64 {
        (self.p.constraints.len() + self.p.lmis.iter().map(|l| l.map.dim()).sum::<usize>()) as f64
    }

    fn in_domain(&self, x: &RVector) -> bool {
        self.p.lmis.iter().all(|l| crate::linalg::cholesky(&l.map.eval(x)).is_some())
            && self.p.constraints.iter().all(|g| matches!(g.value(x), Some(v) if v > 0.0))
            && self.p.objective.value(x).is_some()
    }

    fn phi(&self, x: &RVector, t: f64) -> Option<f64> {
        let mut v = t * self.p.objective.value(x)?;
        for g in &self.p.constraints {
            let gv = g.value(x)?;
            if !(gv > 0.0) {
                return None;
            }
            v += gv.ln();
        }
        for l in &self.p.lmis {
            v += crate::linalg::ln_det_pd(&l.map.eval(x))?;
        }
        Some(v)
    }

    fn derivatives(&self, x: &RVector, t: f64) -> Option<(RVector, RMatrix, RVector)> {
        let n = x.len();
        let f = self.p.objective.eval(x, true)?;
        let mut grad = &f.grad * t;
        let mut hess = &f.hess * t;
        for g in &self.p.constraints {
            let e = g.eval(x, true)?;
            if !(e.value > 0.0) {
                return None;
            }
            grad += &e.grad / e.value;
            hess += &e.hess / e.value - (&e.grad * e.grad.transpose()) / (e.value * e.value);
        }
        for l in &self.p.lmis {
            add_log_det(1.0, &l.map, x, &mut grad, &mut hess, true)?;
        }
        debug_assert_eq!(grad.len(), n);
        Some((grad, hess, f.grad))
    }
}

fn newton_direction(hess: &RMatrix, grad: &RVector) -> Option<RVector> {
    let neg = -hess;
    let scale = neg.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut reg = 0.0;
    for _ in 0..12 {
        let mut m = neg.clone();
        if reg > 0.0 {
            for i in 0..m.nrows() {
                m[(i, i)] += reg * scale;
            }
        }
        if let Some(ch) = Cholesky::new(m) {
            return Some(ch.solve(grad));
        }
        reg = if reg == 0.0 { 1e-14 } else { reg * 100.0 };
    }
    None
}

/// Run the barrier method from a strictly feasible start.
pub fn barrier_maximize(problem: &BarrierProblem, params: &BarrierParams) -> Result<BarrierSolution> {
    let b = Barrier { p: problem };
    let mut x = problem.start.clone();
    if !b.in_domain(&x) {
        let ph = phase_one(problem, params, None)?;
        if !(ph.slack > 0.0) {
            return Err(Error::Infeasible { reason: "no strictly feasible point".into(), max_slack: ph.slack });
        }
        x = ph.x;
    }
    let m = b.degree().max(1.0);
    let mut t = params.t0;
    let mut steps = 0usize;
    let mut last_dec;
    let mut centered;
    loop {
        let (xn, dec, used, ok) = centering(&b, x, t, params)?;
        x = xn;
        steps += used;
        last_dec = dec;
        centered = ok;
        if m / t <= params.outer_tol {
            break;
        }
        t *= params.mu_factor;
    }
    finish(&b, x, t, last_dec, centered, steps)
}

fn centering(b: &Barrier<'_>, mut x: RVector, t: f64, params: &BarrierParams) -> Result<(RVector, f64, usize, bool)> {
    let mut dec = f64::INFINITY;
    for it in 0..params.max_newton {
        let (grad, hess, _) = b
            .derivatives(&x, t)
            .ok_or_else(|| Error::Internal("barrier iterate left the domain".into()))?;
        let dir = match newton_direction(&hess, &grad) {
            Some(d) => d,
            None => return Err(Error::IllConditioned("barrier Newton system is singular".into())),
        };
        let lam2 = grad.dot(&dir);
        dec = lam2.max(0.0);
        if dec / 2.0 <= params.newton_tol {
            return Ok((x, dec, it, true));
        }
        let phi0 = b.phi(&x, t).expect("current iterate is in the domain");
        let mut step = 1.0;
        let mut accepted = false;
        while step > 1e-14 {
            let cand = &x + &dir * step;
            if let Some(v) = b.phi(&cand, t) {
                if v >= phi0 + 0.25 * step * lam2 || (v >= phi0 && step < 1e-6) {
                    x = cand;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            // Barrier values no longer resolve the progress; fall back to
            // steps that shrink the decrement itself.
            let mut step = 1.0;
            while step > 1e-3 {
                let cand = &x + &dir * step;
                if let Some((g, h, _)) = b.derivatives(&cand, t) {
                    if let Some(d) = newton_direction(&h, &g) {
                        if g.dot(&d).max(0.0) < lam2 {
                            x = cand;
                            accepted = true;
                            break;
                        }
                    }
                }
                step *= 0.5;
            }
        }
        if !accepted {
            // No measurable progress left at double precision.
            return Ok((x, dec, it, false));
        }
    }
    Ok((x, dec, params.max_newton, false))
}

fn finish(b: &Barrier<'_>, x: RVector, t: f64, dec: f64, centered: bool, steps: usize) -> Result<BarrierSolution> {
    let p = b.p;
    let f = p.objective.eval(&x, false).ok_or_else(|| Error::Internal("objective undefined at solution".into()))?;
    let mut resid = f.grad.clone();
    let mut multipliers = Vec::new();
    let mut values = Vec::new();
    let mut comp = 0.0;
    for g in &p.constraints {
        let e = g.eval(&x, false).expect("feasible");
        let mu = 1.0 / (t * e.value);
        resid += &e.grad * mu;
        multipliers.push(mu);
        values.push(e.value);
        comp += mu * e.value;
    }
    let mut duals = Vec::new();
    for l in &p.lmis {
        let xm = l.map.eval(&x);
        let inv = crate::linalg::inv_pd(&xm).expect("strictly feasible");
        let lam = inv * cr(1.0 / t);
        for (i, bk) in &l.map.terms {
            resid[*i] += crate::linalg::re_trace_prod(&lam, bk);
        }
        comp += crate::linalg::re_trace_prod(&lam, &xm);
        duals.push(lam);
    }
    Ok(BarrierSolution {
        value: f.value,
        stationarity: resid.norm() / (1.0 + f.grad.norm()),
        complementarity: comp,
        multipliers,
        lmi_duals: duals,
        constraint_values: values,
        newton_decrement: dec / 2.0,
        centered,
        newton_steps: steps,
        x,
    })
}

/// Result of the max-slack phase-I program.
#[derive(Debug, Clone)]
pub struct PhaseOne {
    pub x: RVector,
    /// Largest `s` with `g_i(x) ≥ s` and `X_j(x) ⪰ s·I` for constraint LMIs.
    pub slack: f64,
    pub newton_steps: usize,
}

const SLACK_CAP: f64 = 1e3;

/// Maximize the common slack `s`. With `stop_above = Some(v)` the search ends
/// as soon as a point with slack `> v` is found.
pub fn phase_one(problem: &BarrierProblem, params: &BarrierParams, stop_above: Option<f64>) -> Result<PhaseOne> {
    let n = problem.nvars;
    let sidx = n;
    let x0 = &problem.start;
    for l in problem.lmis.iter().filter(|l| l.kind == LmiKind::Domain) {
        if crate::linalg::cholesky(&l.map.eval(x0)).is_none() {
            return Err(Error::InvalidInput("phase I start violates a domain constraint".into()));
        }
    }
    let mut s0 = f64::INFINITY;
    for g in &problem.constraints {
        let v = g.value(x0).ok_or_else(|| Error::InvalidInput("phase I start outside a constraint domain".into()))?;
        s0 = s0.min(v);
    }
    for l in problem.lmis.iter().filter(|l| l.kind == LmiKind::Constraint) {
        s0 = s0.min(crate::linalg::min_eigenvalue(&l.map.eval(x0)));
    }
    if problem.objective.value(x0).is_none() {
        return Err(Error::InvalidInput("phase I start outside the objective domain".into()));
    }
    if !s0.is_finite() {
        // Nothing to satisfy beyond the domain.
        return Ok(PhaseOne { x: x0.clone(), slack: SLACK_CAP, newton_steps: 0 });
    }
    let s_start = s0 - 1.0_f64.max(s0.abs());
    let neg_s = Affine::var(sidx, -1.0);
    let mut constraints: Vec<ConcaveFn> = problem.constraints.iter().map(|g| g.clone().with_affine(&neg_s)).collect();
    constraints.push(ConcaveFn::affine(Affine { constant: SLACK_CAP, coeffs: vec![(sidx, -1.0)] }));
    let lmis = problem
        .lmis
        .iter()
        .map(|l| match l.kind {
            LmiKind::Domain => l.clone(),
            LmiKind::Constraint => {
                let d = l.map.dim();
                Lmi { map: l.map.clone().with_term(sidx, CMatrix::identity(d, d) * cr(-1.0)), kind: LmiKind::Constraint }
            }
        })
        .collect();
    // The objective's domain still has to be respected.
    let mut domain_guard = problem.objective.clone();
    domain_guard.affine = Affine::var(sidx, 1.0);
    for (w, _) in domain_guard.log_dets.iter_mut() {
        *w = 0.0;
    }
    for (w, _) in domain_guard.neg_trace_invs.iter_mut() {
        *w = 0.0;
    }
    let mut start = RVector::zeros(n + 1);
    start.rows_mut(0, n).copy_from(x0);
    start[sidx] = s_start;
    let aug = BarrierProblem { nvars: n + 1, objective: domain_guard, constraints, lmis, start };
    let b = Barrier { p: &aug };
    let m = b.degree();
    let mut x = aug.start.clone();
    let mut t = params.t0;
    let mut steps = 0;
    loop {
        let (xn, _, used, _) = centering(&b, x, t, params)?;
        x = xn;
        steps += used;
        if let Some(v) = stop_above {
            if x[sidx] > v {
                break;
            }
        }
        if m / t <= params.outer_tol {
            break;
        }
        t *= params.mu_factor;
    }
    let slack = x[sidx];
    Ok(PhaseOne { x: x.rows(0, n).into_owned(), slack, newton_steps: steps })
}
