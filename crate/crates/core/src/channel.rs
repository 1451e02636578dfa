//! ULA steering vectors, target responses and ID/EH channel matrices.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{c, cr, CMatrix, CVector, C64};

/// Half-wavelength ULA at the transmitter (`m` antennas) and the sensing
/// receiver (`n_s` antennas).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry {
    pub m: usize,
    pub n_s: usize,
}

impl ArrayGeometry {
    pub fn new(m: usize, n_s: usize) -> Result<Self> {
        if m < 2 || n_s <= m {
            return Err(Error::InvalidScenario(format!("need N_S > M >= 2, got M={m}, N_S={n_s}")));
        }
        Ok(Self { m, n_s })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointTarget {
    pub alpha: C64,
    /// Radians.
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedTarget {
    /// `(α_q, θ_q)` pairs.
    pub scatterers: Vec<(C64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Point(PointTarget),
    Extended(ExtendedTarget),
}

impl Target {
    pub fn case(&self) -> Case {
        match self {
            Target::Point(_) => Case::Point,
            Target::Extended(_) => Case::Extended,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Case {
    Point,
    Extended,
}

impl Case {
    pub fn as_str(&self) -> &'static str {
        match self {
            Case::Point => "point",
            Case::Extended => "extended",
        }
    }
}

impl std::str::FromStr for Case {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "point" => Ok(Case::Point),
            "extended" => Ok(Case::Extended),
            other => Err(Error::InvalidInput(format!("unknown case '{other}'"))),
        }
    }
}

/// `H_ID`, `H_EH` and the sensing target.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    pub h_id: CMatrix,
    pub h_eh: CMatrix,
    pub target: Target,
}

impl ChannelSet {
    pub fn new(h_id: CMatrix, h_eh: CMatrix, target: Target) -> Result<Self> {
        if h_id.ncols() != h_eh.ncols() {
            return Err(Error::InvalidScenario("H_ID and H_EH column counts differ".into()));
        }
        Ok(Self { h_id, h_eh, target })
    }

    pub fn m(&self) -> usize {
        self.h_id.ncols()
    }
}

fn offset(k: usize, n: usize) -> f64 {
    (2.0 * k as f64 - n as f64 + 1.0) / 2.0
}

/// Steering vector (`order = 0`) or its derivative in θ (`order = 1`).
pub fn steering(theta: f64, n: usize, order: u8) -> CVector {
    let (s, co) = theta.sin_cos();
    CVector::from_iterator(
        n,
        (0..n).map(|k| {
            let d = offset(k, n) * PI;
            let a = C64::from_polar(1.0, d * s);
            if order == 0 {
                a
            } else {
                a * c(0.0, d * co)
            }
        }),
    )
}

/// Steering vector given the spatial frequency `u = sin θ` directly.
pub fn steering_sin(u: f64, n: usize) -> CVector {
    CVector::from_iterator(n, (0..n).map(|k| C64::from_polar(1.0, offset(k, n) * PI * u)))
}

/// `α a_r(θ) a_tᵀ(θ)` for a point target, `Σ_q α_q a_r(θ_q) a_tᵀ(θ_q)` otherwise.
pub fn target_response(geometry: &ArrayGeometry, target: &Target) -> CMatrix {
    let one = |alpha: C64, theta: f64| {
        steering(theta, geometry.n_s, 0) * steering(theta, geometry.m, 0).transpose() * alpha
    };
    match target {
        Target::Point(p) => one(p.alpha, p.theta),
        Target::Extended(e) => e
            .scatterers
            .iter()
            .fold(CMatrix::zeros(geometry.n_s, geometry.m), |acc, &(a, t)| acc + one(a, t)),
    }
}

/// `α a_rx(θ) a_tᵀ(θ)`.
pub fn los_channel(alpha: f64, theta: f64, n_rx: usize, m: usize) -> CMatrix {
    los_channel_sin(alpha, theta.sin(), n_rx, m)
}

pub fn los_channel_sin(alpha: f64, u: f64, n_rx: usize, m: usize) -> CMatrix {
    steering_sin(u, n_rx) * steering_sin(u, m).transpose() * cr(alpha)
}

/// I.i.d. complex Gaussian entries with per-entry variance `alpha²`.
pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, alpha: f64, rng: &mut R) -> CMatrix {
    let s = alpha / 2f64.sqrt();
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(s * re, s * im)
    })
}

/// `√(κ/(κ+1)) H_los + √(1/(κ+1)) H_w`.
pub fn rician_channel<R: Rng + ?Sized>(alpha: f64, u: f64, kappa: f64, n_rx: usize, m: usize, rng: &mut R) -> CMatrix {
    let los = los_channel_sin(alpha, u, n_rx, m);
    let w = gaussian_matrix(n_rx, m, alpha, rng);
    los * cr((kappa / (kappa + 1.0)).sqrt()) + w * cr((1.0 / (kappa + 1.0)).sqrt())
}

/// Quantities of a point target reused by the CRB and the (P1) dual.
#[derive(Debug, Clone)]
pub struct PointSensing {
    /// `a_t*`: quadratic forms `a_tᵀ S a_t*` are `xᴴ S x` with this `x`.
    pub at_conj: CVector,
    /// `ȧ_t*`.
    pub dat_conj: CVector,
    /// `‖a_r‖² = N_S`.
    pub ar_sq: f64,
    /// `‖ȧ_r‖²`.
    pub dar_sq: f64,
    /// `σ_S² / (2|α|²L)`.
    pub crb_scale: f64,
}

impl PointSensing {
    pub fn new(geometry: &ArrayGeometry, target: &PointTarget, sigma_s_sq: f64, block_len: f64) -> Self {
        let dar = steering(target.theta, geometry.n_s, 1);
        Self {
            at_conj: steering(target.theta, geometry.m, 0).conjugate(),
            dat_conj: steering(target.theta, geometry.m, 1).conjugate(),
            ar_sq: geometry.n_s as f64,
            dar_sq: dar.norm_squared(),
            crb_scale: sigma_s_sq / (2.0 * target.alpha.norm_sqr() * block_len),
        }
    }

    /// `ȦᴴȦ`, `ȦᴴA`, `AᴴA`.
    pub fn fisher_matrices(&self) -> (CMatrix, CMatrix, CMatrix) {
        let aa = outer(&self.at_conj, &self.at_conj);
        let dd = outer(&self.dat_conj, &self.dat_conj) * cr(self.ar_sq) + &aa * cr(self.dar_sq);
        let da = outer(&self.dat_conj, &self.at_conj) * cr(self.ar_sq);
        (dd, da, aa * cr(self.ar_sq))
    }

    /// `(tr(ȦᴴȦS), tr(ȦᴴAS), tr(AᴴAS))`.
    pub fn fisher_terms(&self, s: &CMatrix) -> (f64, C64, f64) {
        let sa = s * &self.at_conj;
        let sd = s * &self.dat_conj;
        let qa = self.at_conj.dotc(&sa).re;
        let qd = self.dat_conj.dotc(&sd).re;
        // Cross term of the Hermitian part, so skew components cancel.
        let cross = (self.at_conj.dotc(&sd) + self.dat_conj.dotc(&sa).conj()) * 0.5;
        (self.ar_sq * qd + self.dar_sq * qa, cross * self.ar_sq, self.ar_sq * qa)
    }
}

fn outer(u: &CVector, v: &CVector) -> CMatrix {
    u * v.adjoint()
}
