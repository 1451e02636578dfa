//! Closed-form matrix gradients of the smooth terms used by the solvers.
//!
//! For a real function `f` of a Hermitian argument the gradient `G` is the
//! Hermitian matrix with `f(S + Δ) ≈ f(S) + Re tr(G Δ)`.

use std::f64::consts::LN_2;

use crate::linalg::{cr, inv_pd, CMatrix};

/// `∇_S log2 det(I + H S Hᴴ/σ²) = Hᴴ(σ²I + H S Hᴴ)⁻¹H / ln 2`.
pub fn rate_gradient(s: &CMatrix, h: &CMatrix, sigma_sq: f64) -> Option<CMatrix> {
    let n = h.nrows();
    let x = CMatrix::identity(n, n) * cr(sigma_sq) + h * s * h.adjoint();
    let inv = inv_pd(&x)?;
    Some(h.adjoint() * inv * h * cr(1.0 / LN_2))
}

/// `∇_S tr(S⁻¹) = −S⁻²`.
pub fn trace_inverse_gradient(s: &CMatrix) -> Option<CMatrix> {
    let inv = inv_pd(s)?;
    Some(-(&inv * &inv))
}

/// `∇_S tr(G S Gᴴ) = Gᴴ G`.
pub fn quadratic_gradient(g: &CMatrix) -> CMatrix {
    g.adjoint() * g
}

/// `∇_S ln det S = S⁻¹`.
pub fn log_det_gradient(s: &CMatrix) -> Option<CMatrix> {
    inv_pd(s)
}
