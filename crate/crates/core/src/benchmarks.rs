//! Reference schemes: time division between the three single-objective
//! covariances, and eigenmode transmission over a fixed basis with optimized
//! diagonal powers.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::channel::Case;
use crate::convex::{barrier_maximize, phase_one, Affine, AffineHermitian, BarrierParams, BarrierProblem, ConcaveFn, Lmi, LmiKind};
use crate::error::{Error, Result};
use crate::linalg::{self, cr, CMatrix, RVector};
use crate::metrics::{CrePoint, SolveMeta, Status, System, Thresholds};
use crate::p1::P1Problem;
use crate::p2::{reduce_p2, stack_rows};
use crate::region::Vertices;

/// Fractions of the block spent on the R-max, E-max and C-min covariances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSplit {
    pub tau_id: f64,
    pub tau_eh: f64,
    pub tau_s: f64,
}

impl TimeSplit {
    pub fn new(tau_id: f64, tau_eh: f64, tau_s: f64) -> Result<Self> {
        let sum = tau_id + tau_eh + tau_s;
        if tau_id < 0.0 || tau_eh < 0.0 || tau_s < 0.0 || (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput("time split must be non-negative and sum to one".into()));
        }
        Ok(Self { tau_id, tau_eh, tau_s })
    }

    /// `τ_EH` absorbs rounding so the fractions sum to one exactly.
    fn from_id_eh(tau_id: f64, tau_eh: f64) -> Self {
        let tau_s = (1.0 - tau_id - tau_eh).max(0.0);
        Self { tau_id, tau_eh, tau_s }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum TdMode {
    Fixed(TimeSplit),
    /// Simplex grid at resolution `1/grid`, then a continuous refinement of
    /// the best cell.
    Optimize { grid: usize },
}

#[derive(Debug, Clone)]
pub struct TdResult {
    pub split: TimeSplit,
    pub point: CrePoint,
}

/// Per-slot covariances and their metrics, evaluated once.
struct TdSlots {
    s: [CMatrix; 3],
    rate_id: f64,
    energy: [f64; 3],
}

impl TdSlots {
    fn new(system: &System) -> Result<Self> {
        let v = Vertices::compute(system)?;
        Ok(Self {
            rate_id: v.r_max.point.rate,
            energy: [v.r_max.point.energy, v.e_max.point.energy, v.c_min.point.energy],
            s: [v.r_max.s, v.e_max.s, v.c_min.s],
        })
    }

    fn averaged(&self, t: &TimeSplit) -> CMatrix {
        &self.s[0] * cr(t.tau_id) + &self.s[1] * cr(t.tau_eh) + &self.s[2] * cr(t.tau_s)
    }

    fn point(&self, system: &System, t: &TimeSplit, meta: SolveMeta) -> CrePoint {
        let energy = t.tau_id * self.energy[0] + t.tau_eh * self.energy[1] + t.tau_s * self.energy[2];
        CrePoint {
            crb: system.crb(&self.averaged(t)),
            rate: t.tau_id * self.rate_id,
            energy,
            energy_dc: system.zeta * energy,
            meta,
        }
    }

    /// Smallest relative threshold margin; `≥ 0` means feasible.
    fn margin(&self, system: &System, th: &Thresholds, t: &TimeSplit) -> f64 {
        let mut m = f64::INFINITY;
        if th.gamma_eh > 0.0 {
            let e = t.tau_id * self.energy[0] + t.tau_eh * self.energy[1] + t.tau_s * self.energy[2];
            m = m.min((e - th.gamma_eh) / th.gamma_eh);
        }
        if th.gamma_s.is_finite() {
            let c = system.crb(&self.averaged(t));
            m = m.min(if c.is_finite() { (th.gamma_s - c) / th.gamma_s } else { f64::NEG_INFINITY });
        }
        m
    }

    /// Best margin over `τ_EH ∈ [0, 1 − τ_ID]`; both margins are concave in
    /// the split, so a golden-section search suffices.
    fn best_margin(&self, system: &System, th: &Thresholds, tau_id: f64) -> (f64, TimeSplit) {
        let span = 1.0 - tau_id;
        let f = |x: f64| self.margin(system, th, &TimeSplit::from_id_eh(tau_id, x));
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        let (mut a, mut b) = (0.0, span);
        let mut c = b - phi * (b - a);
        let mut d = a + phi * (b - a);
        let (mut fc, mut fd) = (f(c), f(d));
        for _ in 0..80 {
            if fc >= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - phi * (b - a);
                fc = f(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + phi * (b - a);
                fd = f(d);
            }
        }
        let candidates = [0.0, span, 0.5 * (a + b)];
        candidates
            .iter()
            .map(|&x| (f(x), TimeSplit::from_id_eh(tau_id, x)))
            .max_by(|p, q| p.0.total_cmp(&q.0))
            .expect("non-empty")
    }
}

pub fn time_division(system: &System, mode: TdMode, th: &Thresholds) -> Result<TdResult> {
    let slots = TdSlots::new(system)?;
    match mode {
        TdMode::Fixed(split) => Ok(TdResult { split, point: slots.point(system, &split, SolveMeta::closed_form()) }),
        TdMode::Optimize { grid } => {
            let n = grid.max(1);
            let step = 1.0 / n as f64;
            let mut best: Option<TimeSplit> = None;
            let mut evals = 0usize;
            'outer: for i in (0..=n).rev() {
                for j in 0..=(n - i) {
                    let t = TimeSplit::from_id_eh(i as f64 * step, j as f64 * step);
                    evals += 1;
                    if slots.margin(system, th, &t) >= 0.0 {
                        best = Some(t);
                        break 'outer;
                    }
                }
            }
            let Some(mut split) = best else {
                return Err(Error::Infeasible { reason: "no time split meets the thresholds".into(), max_slack: -1.0 });
            };
            // Rate is τ_ID·R(S_ID): push τ_ID up within the next grid cell.
            let (mut lo, mut hi) = (split.tau_id, (split.tau_id + step).min(1.0));
            for _ in 0..50 {
                let mid = 0.5 * (lo + hi);
                let (m, t) = slots.best_margin(system, th, mid);
                evals += 1;
                if m >= 0.0 {
                    lo = mid;
                    split = t;
                } else {
                    hi = mid;
                }
            }
            if hi >= 1.0 && lo < 1.0 {
                let (m, t) = slots.best_margin(system, th, 1.0);
                if m >= 0.0 {
                    split = t;
                }
            }
            let meta = SolveMeta { status: Status::Optimal, iterations: evals, duality_gap: None };
            Ok(TdResult { split, point: slots.point(system, &split, meta) })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmtVariant {
    /// Eigenbasis of the ID channel.
    Id,
    /// Eigenbasis of the stacked ID and EH channels.
    Combined,
}

impl EmtVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            EmtVariant::Id => "emt_id",
            EmtVariant::Combined => "emt_combined",
        }
    }
}

/// A fixed transmit basis with optimized powers.
#[derive(Debug, Clone)]
pub struct DiagonalDesign {
    /// `M × k` with orthonormal columns.
    pub basis: CMatrix,
    pub powers: Vec<f64>,
    /// Power per null-space direction (extended case only).
    pub p0: f64,
    /// `M × (M − k)` completion, used only with `p0`.
    pub null_basis: CMatrix,
}

impl DiagonalDesign {
    pub fn covariance(&self) -> CMatrix {
        let mut s = linalg::from_eigen(&self.basis, &self.powers);
        if self.null_basis.ncols() > 0 && self.p0 != 0.0 {
            s += &self.null_basis * self.null_basis.adjoint() * cr(self.p0);
        }
        linalg::hermitian_part(&s)
    }
}

#[derive(Debug, Clone)]
pub struct EmtResult {
    pub design: DiagonalDesign,
    pub s: CMatrix,
    pub point: CrePoint,
}

/// `(basis, null basis)` of the variant.
fn emt_basis(variant: EmtVariant, system: &System) -> Result<(CMatrix, CMatrix)> {
    let m = system.m();
    match system.case() {
        Case::Point => match variant {
            EmtVariant::Id => Ok((linalg::svd(&system.channels.h_id).v, CMatrix::zeros(m, 0))),
            EmtVariant::Combined => {
                let red = reduce_p2(&system.channels)?;
                Ok((red.v_range, CMatrix::zeros(m, 0)))
            }
        },
        Case::Extended => {
            let red = reduce_p2(&system.channels)?;
            let inner = match variant {
                EmtVariant::Id => linalg::svd(&red.h_id).v,
                EmtVariant::Combined => linalg::svd(&stack_rows(&red.h_id, &red.h_eh)).v,
            };
            Ok((&red.v_range * inner, red.v_null))
        }
    }
}

/// Optimize the diagonal powers of the variant's basis under the same
/// thresholds as the optimal design.
pub fn emt_benchmark(variant: EmtVariant, system: &System, th: &Thresholds, params: &BarrierParams, boundary_tol: f64) -> Result<EmtResult> {
    let (basis, null_basis) = emt_basis(variant, system)?;
    let m = system.m();
    let k = basis.ncols();
    let kn = null_basis.ncols();
    let power = system.power;
    let projectors: Vec<CMatrix> = (0..k).map(|i| {
        let b = basis.column(i).into_owned();
        linalg::outer(&b, &b)
    }).collect();
    let mut s_map = AffineHermitian::constant(CMatrix::zeros(m, m));
    for (i, p) in projectors.iter().enumerate() {
        s_map = s_map.with_term(i, p.clone());
    }
    let diag_map = {
        let mut d = AffineHermitian::constant(CMatrix::zeros(k, k));
        for i in 0..k {
            let mut e = CMatrix::zeros(k, k);
            e[(i, i)] = cr(1.0);
            d = d.with_term(i, e);
        }
        d
    };
    let mut lmis = vec![Lmi { map: diag_map.clone(), kind: LmiKind::Domain }];
    let mut constraints = Vec::new();
    let h = &system.channels.h_id * cr((power / system.sigma_id_sq).sqrt());
    let mut nvars = k;
    let mut p0_index = None;
    match system.case() {
        Case::Point => {
            let problem = P1Problem::new(system, th)?;
            let (cons, extra) = problem.primal_constraints(&s_map);
            constraints.extend(cons);
            lmis.extend(extra);
        }
        Case::Extended => {
            let smax = linalg::spectral_norm(&system.channels.h_eh);
            let e_scale = power * (smax * smax).max(f64::MIN_POSITIVE);
            let with_p0 = th.gamma_s.is_finite() && kn > 0;
            let mut budget = Affine::constant(1.0).plus(&Affine { constant: 0.0, coeffs: (0..k).map(|i| (i, -1.0)).collect() });
            if with_p0 {
                p0_index = Some(k);
                nvars += 1;
                budget = budget.plus(&Affine::var(k, -(kn as f64)));
                s_map = s_map.with_term(k, &null_basis * null_basis.adjoint());
                lmis.push(Lmi { map: AffineHermitian::scalar_variable(k, 1.0), kind: LmiKind::Domain });
            }
            constraints.push(ConcaveFn::affine(budget));
            if th.gamma_eh > 0.0 {
                let g = linalg::hermitian_part(&(system.channels.h_eh.adjoint() * &system.channels.h_eh)) * cr(power / e_scale);
                constraints.push(ConcaveFn::affine(s_map.trace_with(&g).plus(&Affine::constant(-th.gamma_eh / e_scale))));
            }
            if th.gamma_s.is_finite() {
                let cap = system.gamma_s2(th.gamma_s) * power;
                let mut crb = ConcaveFn::affine(Affine::constant(1.0)).with_neg_trace_inv(1.0 / cap, diag_map.clone());
                if let Some(i0) = p0_index {
                    crb = crb.with_neg_trace_inv(kn as f64 / cap, AffineHermitian::scalar_variable(i0, 1.0));
                } else if kn > 0 {
                    return Err(Error::Infeasible { reason: "basis leaves directions without power".into(), max_slack: -1.0 });
                }
                constraints.push(crb);
            }
        }
    }
    let n_id = h.nrows();
    let objective = ConcaveFn::default().with_log_det(1.0 / LN_2, s_map.congruence(&h).plus_constant(&CMatrix::identity(n_id, n_id)));
    let total_dirs = (k + if p0_index.is_some() { kn } else { 0 }) as f64;
    let start = RVector::from_element(nvars, 0.5 / total_dirs);
    let mut prob = BarrierProblem { nvars, objective, constraints, lmis, start };
    let ph = phase_one(&prob, params, None)?;
    if ph.slack < -boundary_tol {
        return Err(Error::Infeasible { reason: "thresholds unreachable with this basis".into(), max_slack: ph.slack });
    }
    let (x, meta) = if ph.slack <= boundary_tol {
        (ph.x, SolveMeta { status: Status::Boundary, iterations: ph.newton_steps, duality_gap: None })
    } else {
        prob.start = ph.x;
        let sol = barrier_maximize(&prob, params)?;
        let meta = SolveMeta { status: Status::Optimal, iterations: ph.newton_steps + sol.newton_steps, duality_gap: Some(sol.complementarity) };
        (sol.x, meta)
    };
    let powers: Vec<f64> = (0..k).map(|i| x[i] * power).collect();
    let p0 = p0_index.map_or(0.0, |i| x[i] * power);
    let design = DiagonalDesign { basis, powers, p0, null_basis };
    let s = design.covariance();
    let point = system.evaluate(&s, meta);
    Ok(EmtResult { design, s, point })
}
