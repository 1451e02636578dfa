//! CRB, rate and harvested energy of a transmit covariance.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::channel::{ArrayGeometry, Case, ChannelSet, PointSensing, PointTarget, Target};
use crate::error::{Error, Result};
use crate::linalg::{self, cr, CMatrix};

pub const PSD_TOL: f64 = 1e-9;
const DET_TOL: f64 = 1e-14;
const SING_TOL: f64 = 1e-12;

/// A validated Hermitian PSD transmit covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmitCovariance {
    s: CMatrix,
}

impl TransmitCovariance {
    pub fn new(s: CMatrix) -> Result<Self> {
        check_psd(&s)?;
        Ok(Self { s: linalg::hermitian_part(&s) })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.s
    }

    pub fn into_matrix(self) -> CMatrix {
        self.s
    }

    pub fn trace(&self) -> f64 {
        linalg::trace_re(&self.s)
    }

    pub fn within_budget(&self, power: f64) -> bool {
        self.trace() <= power * (1.0 + 1e-9)
    }
}

fn check_psd(s: &CMatrix) -> Result<()> {
    if !s.is_square() || !linalg::is_finite(s) {
        return Err(Error::InvalidInput("covariance must be square and finite".into()));
    }
    if !linalg::is_hermitian(s, 1e-9) {
        return Err(Error::InvalidInput("covariance is not Hermitian".into()));
    }
    if !linalg::is_psd(s, PSD_TOL) {
        return Err(Error::InvalidInput("covariance is not PSD".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    /// Thresholds sit on the feasibility boundary; the max-slack point is returned.
    Boundary,
    /// Iteration budget exhausted before the stopping rule fired.
    Truncated,
    ClosedForm,
    Infeasible,
    Failed,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Optimal => "optimal",
            Status::Boundary => "boundary",
            Status::Truncated => "truncated",
            Status::ClosedForm => "closed_form",
            Status::Infeasible => "infeasible",
            Status::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveMeta {
    pub status: Status,
    pub iterations: usize,
    pub duality_gap: Option<f64>,
}

impl SolveMeta {
    pub fn closed_form() -> Self {
        Self { status: Status::ClosedForm, iterations: 0, duality_gap: None }
    }
}

/// An achieved `(CRB, rate, energy)` triple. `crb` may be `f64::INFINITY`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrePoint {
    pub crb: f64,
    pub rate: f64,
    pub energy: f64,
    pub energy_dc: f64,
    pub meta: SolveMeta,
}

impl CrePoint {
    pub fn failed(status: Status) -> Self {
        Self {
            crb: f64::NAN,
            rate: f64::NAN,
            energy: f64::NAN,
            energy_dc: f64::NAN,
            meta: SolveMeta { status, iterations: 0, duality_gap: None },
        }
    }

    pub fn is_solved(&self) -> bool {
        !matches!(self.meta.status, Status::Infeasible | Status::Failed)
    }
}

/// Point-target angle CRB; `+∞` when the Fisher determinant degenerates.
pub fn crb_point(s: &CMatrix, target: &PointTarget, geometry: &ArrayGeometry, sigma_s_sq: f64, block_len: f64) -> Result<f64> {
    check_psd(s)?;
    Ok(crb_point_with(s, &PointSensing::new(geometry, target, sigma_s_sq, block_len)))
}

pub(crate) fn crb_point_with(s: &CMatrix, sensing: &PointSensing) -> f64 {
    let (t_dd, t_da, t_aa) = sensing.fisher_terms(s);
    let det = t_dd * t_aa - t_da.norm_sqr();
    let scale = (t_dd * t_aa).abs();
    if !(t_aa > 0.0) || det <= DET_TOL * scale {
        return f64::INFINITY;
    }
    sensing.crb_scale * t_aa / det
}

/// `(σ_S² N_S / L) tr(S⁻¹)`; `+∞` for (numerically) singular `S`.
pub fn crb_extended(s: &CMatrix, sigma_s_sq: f64, n_s: usize, block_len: f64) -> Result<f64> {
    check_psd(s)?;
    Ok(crb_extended_unchecked(s, sigma_s_sq, n_s, block_len))
}

pub(crate) fn crb_extended_unchecked(s: &CMatrix, sigma_s_sq: f64, n_s: usize, block_len: f64) -> f64 {
    sigma_s_sq * n_s as f64 / block_len * trace_inverse(s)
}

/// `tr(S⁻¹)` through the spectrum, `+∞` when `λ_min ≤ 1e-12·λ_max`.
pub fn trace_inverse(s: &CMatrix) -> f64 {
    let e = linalg::evd(s);
    let max = e.values[0];
    let min = e.values[e.values.len() - 1];
    if !(max > 0.0) || min <= SING_TOL * max {
        return f64::INFINITY;
    }
    e.values.iter().map(|v| 1.0 / v).sum()
}

/// `log2 det(I + H S Hᴴ / σ²)`.
pub fn rate(s: &CMatrix, h_id: &CMatrix, sigma_id_sq: f64) -> Result<f64> {
    check_psd(s)?;
    Ok(rate_unchecked(s, h_id, sigma_id_sq))
}

pub(crate) fn rate_unchecked(s: &CMatrix, h_id: &CMatrix, sigma_id_sq: f64) -> f64 {
    let g = h_id * s * h_id.adjoint() * cr(1.0 / sigma_id_sq);
    let e = linalg::evd(&g);
    e.values.iter().map(|&v| (1.0 + v.max(0.0)).ln()).sum::<f64>() / LN_2
}

/// RF power `tr(H S Hᴴ)` at the harvester.
pub fn energy(s: &CMatrix, h_eh: &CMatrix) -> Result<f64> {
    check_psd(s)?;
    Ok(energy_unchecked(s, h_eh))
}

pub(crate) fn energy_unchecked(s: &CMatrix, h_eh: &CMatrix) -> f64 {
    linalg::re_trace_prod(&(h_eh.adjoint() * h_eh), s).max(0.0)
}

/// Rate-maximization thresholds. `gamma_eh ≤ 0` disables the energy
/// constraint and `gamma_s = ∞` the CRB constraint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub gamma_eh: f64,
    pub gamma_s: f64,
}

impl Thresholds {
    pub fn new(gamma_eh: f64, gamma_s: f64) -> Self {
        Self { gamma_eh, gamma_s }
    }

    pub fn unconstrained() -> Self {
        Self { gamma_eh: 0.0, gamma_s: f64::INFINITY }
    }
}

/// Everything a solver needs besides thresholds.
#[derive(Debug, Clone)]
pub struct System {
    pub geometry: ArrayGeometry,
    pub channels: ChannelSet,
    /// Transmit power budget `P` in W.
    pub power: f64,
    pub sigma_s_sq: f64,
    pub sigma_id_sq: f64,
    /// Block length `L`.
    pub block_len: f64,
    /// RF-to-DC efficiency, used for reporting only.
    pub zeta: f64,
}

impl System {
    pub fn new(
        geometry: ArrayGeometry,
        channels: ChannelSet,
        power: f64,
        sigma_s_sq: f64,
        sigma_id_sq: f64,
        block_len: f64,
        zeta: f64,
    ) -> Result<Self> {
        if channels.m() != geometry.m {
            return Err(Error::InvalidScenario("channel width differs from M".into()));
        }
        if !(power > 0.0 && sigma_s_sq > 0.0 && sigma_id_sq > 0.0 && block_len >= 1.0) {
            return Err(Error::InvalidScenario("need P > 0, noise powers > 0, L >= 1".into()));
        }
        if !(zeta > 0.0 && zeta <= 1.0) {
            return Err(Error::InvalidScenario("zeta must lie in (0, 1]".into()));
        }
        if let Target::Point(p) = &channels.target {
            if !(p.alpha.norm() > 0.0) {
                return Err(Error::InvalidScenario("point target needs |alpha| > 0".into()));
            }
        }
        Ok(Self { geometry, channels, power, sigma_s_sq, sigma_id_sq, block_len, zeta })
    }

    pub fn m(&self) -> usize {
        self.geometry.m
    }

    pub fn case(&self) -> Case {
        self.channels.target.case()
    }

    pub fn point_target(&self) -> Option<&PointTarget> {
        match &self.channels.target {
            Target::Point(p) => Some(p),
            Target::Extended(_) => None,
        }
    }

    pub fn point_sensing(&self) -> Option<PointSensing> {
        self.point_target().map(|p| PointSensing::new(&self.geometry, p, self.sigma_s_sq, self.block_len))
    }

    /// Same system with the other target model (channels unchanged).
    pub fn with_target(&self, target: Target) -> Self {
        let mut out = self.clone();
        out.channels.target = target;
        out
    }

    pub fn crb(&self, s: &CMatrix) -> f64 {
        match &self.channels.target {
            Target::Point(_) => crb_point_with(s, &self.point_sensing().expect("point target")),
            Target::Extended(_) => crb_extended_unchecked(s, self.sigma_s_sq, self.geometry.n_s, self.block_len),
        }
    }

    pub fn rate(&self, s: &CMatrix) -> f64 {
        rate_unchecked(s, &self.channels.h_id, self.sigma_id_sq)
    }

    pub fn energy(&self, s: &CMatrix) -> f64 {
        energy_unchecked(s, &self.channels.h_eh)
    }

    /// All three metrics of `s` tagged with `meta`.
    pub fn evaluate(&self, s: &CMatrix, meta: SolveMeta) -> CrePoint {
        let energy = self.energy(s);
        CrePoint { crb: self.crb(s), rate: self.rate(s), energy, energy_dc: self.zeta * energy, meta }
    }

    /// `σ_S²/(2|α|²L‖ȧ_r‖²PM)` or `σ_S² N_S M²/(LP)`.
    pub fn crb_min(&self) -> f64 {
        let m = self.m() as f64;
        match &self.channels.target {
            Target::Point(_) => {
                let ps = self.point_sensing().expect("point target");
                ps.crb_scale / (ps.dar_sq * self.power * m)
            }
            Target::Extended(_) => self.sigma_s_sq * self.geometry.n_s as f64 * m * m / (self.block_len * self.power),
        }
    }

    /// `P σ_max(H_EH)²`.
    pub fn energy_max(&self) -> f64 {
        let s = linalg::spectral_norm(&self.channels.h_eh);
        self.power * s * s
    }

    /// `Γ_S,1 = (2|α|²L/σ_S²) Γ_S`.
    pub fn gamma_s1(&self, gamma_s: f64) -> f64 {
        let ps = self.point_sensing().expect("point target");
        gamma_s / ps.crb_scale
    }

    /// `Γ_S,2 = (L/(σ_S² N_S)) Γ_S`.
    pub fn gamma_s2(&self, gamma_s: f64) -> f64 {
        self.block_len / (self.sigma_s_sq * self.geometry.n_s as f64) * gamma_s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{steering, PointSensing};
    use crate::linalg::{c, CVector};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn geometry() -> ArrayGeometry {
        ArrayGeometry::new(2, 3).unwrap()
    }

    #[test]
    fn crb_min_closed_form_unit_constants() {
        let t = PointTarget { alpha: cr(1.0), theta: 0.0 };
        let at = steering(0.0, 2, 0);
        let s = &at.conjugate() * at.transpose() * cr(0.5);
        let crb = crb_point(&s, &t, &geometry(), 1.0, 1.0).unwrap();
        assert_relative_eq!(crb, 1.0 / (8.0 * PI * PI), max_relative = 1e-12);
        assert_relative_eq!(crb, 0.0126651479552, max_relative = 1e-9);
    }

    #[test]
    fn crb_rank_one_closed_form() {
        let g = ArrayGeometry::new(4, 7).unwrap();
        let t = PointTarget { alpha: c(0.3, -0.2), theta: 0.4 };
        let x = CVector::from_vec(vec![c(0.3, 0.1), c(-0.5, 0.2), c(0.9, 0.0), c(0.1, -0.4)]);
        let s = &x * x.adjoint();
        let ps = PointSensing::new(&g, &t, 2.0, 16.0);
        let q = ps.at_conj.dotc(&(&s * &ps.at_conj)).re;
        let expected = ps.crb_scale / (ps.dar_sq * q);
        assert_relative_eq!(crb_point(&s, &t, &g, 2.0, 16.0).unwrap(), expected, max_relative = 1e-8);
    }

    #[test]
    fn crb_point_unidentifiable() {
        let g = geometry();
        let t = PointTarget { alpha: cr(1.0), theta: 0.0 };
        // Orthogonal to a_t*: no echo at all.
        let x = CVector::from_vec(vec![cr(1.0), cr(-1.0)]);
        let s = &x * x.adjoint();
        assert!(crb_point(&s, &t, &g, 1.0, 1.0).unwrap().is_infinite());
    }

    #[test]
    fn crb_extended_examples() {
        let s = CMatrix::identity(2, 2);
        assert_relative_eq!(crb_extended(&s, 1.0, 4, 1.0).unwrap(), 8.0, epsilon = 1e-14);
        let p = 3.0;
        let s = CMatrix::identity(3, 3) * cr(p / 3.0);
        assert_relative_eq!(crb_extended(&s, 0.5, 5, 2.0).unwrap(), 0.5 * 5.0 * 9.0 / (2.0 * p), max_relative = 1e-14);
        let s = CMatrix::from_diagonal(&CVector::from_vec(vec![cr(1.0), cr(0.0)]));
        assert!(crb_extended(&s, 1.0, 4, 1.0).unwrap().is_infinite());
    }

    #[test]
    fn rate_examples() {
        let h = CMatrix::from_row_slice(1, 2, &[cr(1.0), cr(0.0)]);
        let s = CMatrix::from_diagonal(&CVector::from_vec(vec![cr(3.0), cr(5.0)]));
        assert_relative_eq!(rate(&s, &h, 1.0).unwrap(), 2.0, epsilon = 1e-14);
        assert_eq!(rate(&CMatrix::zeros(2, 2), &h, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn rate_matches_explicit_determinant() {
        let h = CMatrix::from_row_slice(2, 2, &[c(0.3, 0.4), c(-1.0, 0.2), c(0.5, 0.0), c(0.1, -0.9)]);
        let s = CMatrix::from_row_slice(2, 2, &[cr(1.2), c(0.2, 0.1), c(0.2, -0.1), cr(0.7)]);
        let x = CMatrix::identity(2, 2) + &h * &s * h.adjoint() * cr(1.0 / 0.5);
        let det = x[(0, 0)] * x[(1, 1)] - x[(0, 1)] * x[(1, 0)];
        assert_relative_eq!(rate(&s, &h, 0.5).unwrap(), det.re.log2(), max_relative = 1e-9);
    }

    #[test]
    fn energy_examples() {
        let s = CMatrix::from_diagonal(&CVector::from_vec(vec![cr(1.0), cr(2.0)]));
        assert_relative_eq!(energy(&s, &CMatrix::identity(2, 2)).unwrap(), 3.0, epsilon = 1e-14);
        assert_eq!(energy(&CMatrix::zeros(2, 2), &CMatrix::identity(2, 2)).unwrap(), 0.0);
        let h = CMatrix::from_row_slice(2, 3, &[c(0.3, 0.4), c(-1.0, 0.2), cr(0.1), c(0.5, 0.0), c(0.1, -0.9), cr(2.0)]);
        let d = linalg::svd(&h);
        let v = d.v.column(0).into_owned();
        let s = &v * v.adjoint() * cr(2.5);
        assert_relative_eq!(energy(&s, &h).unwrap(), 2.5 * d.sigma[0] * d.sigma[0], max_relative = 1e-12);
    }

    #[test]
    fn non_psd_rejected() {
        let s = CMatrix::from_diagonal(&CVector::from_vec(vec![cr(1.0), cr(-1.0)]));
        assert!(rate(&s, &CMatrix::identity(2, 2), 1.0).is_err());
        assert!(energy(&s, &CMatrix::identity(2, 2)).is_err());
        assert!(crb_extended(&s, 1.0, 3, 1.0).is_err());
        let t = PointTarget { alpha: cr(1.0), theta: 0.0 };
        assert!(crb_point(&s, &t, &geometry(), 1.0, 1.0).is_err());
    }
}
