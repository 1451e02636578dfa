//! Dense complex linear algebra: Hermitian EVD, SVD with a full right basis,
//! PSD predicates and water-filling.
//!
//! Decompositions are backed by `nalgebra`. Everything here returns spectra
//! in descending order.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;
pub type RMatrix = DMatrix<f64>;
pub type RVector = DVector<f64>;

pub const HERMITIAN_TOL: f64 = 1e-12;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn cr(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Eigen-decomposition of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct Evd {
    /// Descending.
    pub values: RVector,
    /// Column k pairs with `values[k]`.
    pub vectors: CMatrix,
}

/// Singular value decomposition `A = U Σ Vᴴ`.
///
/// `u` is thin (`rows × k`, `k = min(rows, cols)`); `v` is the full
/// `cols × cols` unitary, so its trailing columns span the null space of `A`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMatrix,
    /// Descending, length `k`.
    pub sigma: RVector,
    pub v: CMatrix,
}

impl Svd {
    pub fn rank(&self) -> usize {
        numerical_rank(&self.sigma, self.u.nrows(), self.v.nrows())
    }
}

pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().fold(0.0, |m, z| m.max(z.norm()))
}

pub fn fro_norm(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn is_finite(a: &CMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn is_hermitian(a: &CMatrix, tol: f64) -> bool {
    if !a.is_square() {
        return false;
    }
    let scale = max_abs(a).max(f64::MIN_POSITIVE);
    let n = a.nrows();
    for i in 0..n {
        for j in i..n {
            if (a[(i, j)] - a[(j, i)].conj()).norm() > tol * scale {
                return false;
            }
        }
    }
    true
}

/// `(A + Aᴴ)/2`.
pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()) * cr(0.5)
}

/// EVD of a matrix that must already be Hermitian within [`HERMITIAN_TOL`].
pub fn hermitian_evd(a: &CMatrix) -> Result<Evd> {
    if !is_finite(a) {
        return Err(Error::InvalidInput("non-finite matrix entries".into()));
    }
    if !is_hermitian(a, HERMITIAN_TOL) {
        return Err(Error::InvalidInput("matrix is not Hermitian".into()));
    }
    Ok(evd(a))
}

/// EVD of the Hermitian part of `a`, no validation.
pub fn evd(a: &CMatrix) -> Evd {
    let n = a.nrows();
    if n == 0 {
        return Evd { values: RVector::zeros(0), vectors: CMatrix::zeros(0, 0) };
    }
    let eig = hermitian_part(a).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = RVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = CMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    Evd { values, vectors }
}

pub fn min_eigenvalue(a: &CMatrix) -> f64 {
    let e = evd(a);
    e.values[e.values.len() - 1]
}

pub fn max_eigenvalue(a: &CMatrix) -> f64 {
    evd(a).values[0]
}

/// SVD with descending singular values and a full right basis.
pub fn svd(a: &CMatrix) -> Svd {
    let (rows, cols) = a.shape();
    let k = rows.min(cols);
    if k == 0 {
        return Svd { u: CMatrix::zeros(rows, 0), sigma: RVector::zeros(0), v: CMatrix::identity(cols, cols) };
    }
    // Pad with zero rows so the thin decomposition yields a complete V.
    let padded = if rows < cols {
        let mut p = CMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let dec = padded.svd(true, true);
    let u_all = dec.u.expect("U requested");
    let vt = dec.v_t.expect("Vᴴ requested");
    let n = dec.singular_values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| dec.singular_values[j].total_cmp(&dec.singular_values[i]));
    let sigma = RVector::from_iterator(k, order.iter().take(k).map(|&i| dec.singular_values[i]));
    let mut u = CMatrix::zeros(rows, k);
    let mut v = CMatrix::zeros(cols, cols);
    for (pos, &i) in order.iter().enumerate() {
        if pos < k {
            u.set_column(pos, &u_all.column(i).rows(0, rows));
        }
        v.set_column(pos, &vt.row(i).adjoint());
    }
    Svd { u, sigma, v }
}

/// Count of singular values above `1e-10 · σ_max · max(rows, cols)`.
pub fn numerical_rank(sigma: &RVector, rows: usize, cols: usize) -> usize {
    if sigma.is_empty() {
        return 0;
    }
    let tol = 1e-10 * sigma[0] * rows.max(cols) as f64;
    sigma.iter().filter(|&&s| s > tol).count()
}

pub fn spectral_norm(a: &CMatrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    svd(a).sigma[0]
}

/// True iff `λ_min(A) ≥ −tol · max(1, ‖A‖)`.
pub fn is_psd(a: &CMatrix, tol: f64) -> bool {
    if a.is_empty() {
        return true;
    }
    let e = evd(a);
    let norm = e.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    e.values[e.values.len() - 1] >= -tol * norm.max(1.0)
}

/// Lower Cholesky factor of a Hermitian matrix; `None` unless strictly PD.
pub fn cholesky(a: &CMatrix) -> Option<CMatrix> {
    let n = a.nrows();
    let mut l = CMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = cr(d);
        for i in j + 1..n {
            let mut s = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

/// Inverse of a Hermitian PD matrix via Cholesky; `None` if not PD.
pub fn inv_pd(a: &CMatrix) -> Option<CMatrix> {
    let l = cholesky(a)?;
    Some(inv_from_cholesky(&l))
}

/// `(L Lᴴ)⁻¹` from the lower factor.
pub fn inv_from_cholesky(l: &CMatrix) -> CMatrix {
    let n = l.nrows();
    // Forward substitution for L⁻¹.
    let mut li = CMatrix::zeros(n, n);
    for col in 0..n {
        for i in col..n {
            let mut s = if i == col { cr(1.0) } else { cr(0.0) };
            for k in col..i {
                s -= l[(i, k)] * li[(k, col)];
            }
            li[(i, col)] = s / l[(i, i)];
        }
    }
    hermitian_part(&(li.adjoint() * li))
}

/// `ln det A` for Hermitian PD `A`; `None` if not PD.
pub fn ln_det_pd(a: &CMatrix) -> Option<f64> {
    let l = cholesky(a)?;
    Some(ln_det_from_cholesky(&l))
}

pub fn ln_det_from_cholesky(l: &CMatrix) -> f64 {
    (0..l.nrows()).map(|i| 2.0 * l[(i, i)].re.ln()).sum()
}

/// `tr(A B)` without forming the product.
pub fn trace_prod(a: &CMatrix, b: &CMatrix) -> C64 {
    let mut s = C64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            s += a[(i, j)] * b[(j, i)];
        }
    }
    s
}

/// `Re tr(A B)`.
pub fn re_trace_prod(a: &CMatrix, b: &CMatrix) -> f64 {
    trace_prod(a, b).re
}

pub fn trace_re(a: &CMatrix) -> f64 {
    (0..a.nrows()).map(|i| a[(i, i)].re).sum()
}

pub fn outer(u: &CVector, v: &CVector) -> CMatrix {
    u * v.adjoint()
}

/// `A^p` for Hermitian PSD `A`, applied on the spectrum (negative parts clipped).
pub fn hermitian_power(a: &CMatrix, p: f64) -> CMatrix {
    let e = evd(a);
    let n = a.nrows();
    let mut scaled = e.vectors.clone();
    for k in 0..n {
        let lam = e.values[k].max(0.0);
        let f = if lam > 0.0 { lam.powf(p) } else { 0.0 };
        for i in 0..n {
            scaled[(i, k)] *= f;
        }
    }
    hermitian_part(&(scaled * e.vectors.adjoint()))
}

/// Build `V diag(p) Vᴴ`.
pub fn from_eigen(v: &CMatrix, p: &[f64]) -> CMatrix {
    let mut scaled = v.clone();
    for (k, &pk) in p.iter().enumerate() {
        for i in 0..v.nrows() {
            scaled[(i, k)] *= pk;
        }
    }
    hermitian_part(&(scaled * v.adjoint()))
}

/// Maximize `Σ log2(1 + g_k p_k / noise)` subject to `Σ p_k ≤ budget`, `p ≥ 0`.
///
/// Closed-form water level: with thresholds `c_k = noise/g_k` sorted ascending,
/// the level for `n` active channels is `(budget + Σ_{k<n} c_k)/n`.
pub fn water_fill(gains: &[f64], noise: f64, budget: f64) -> Result<Vec<f64>> {
    if !(budget > 0.0) || !(noise > 0.0) {
        return Err(Error::InvalidInput("water_fill needs positive budget and noise".into()));
    }
    if gains.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
        return Err(Error::InvalidInput("gains must be finite and non-negative".into()));
    }
    let mut idx: Vec<usize> = (0..gains.len()).filter(|&i| gains[i] > 0.0).collect();
    if idx.is_empty() {
        return Err(Error::NoUsableSubchannel);
    }
    idx.sort_by(|&i, &j| gains[j].total_cmp(&gains[i]));
    let thresholds: Vec<f64> = idx.iter().map(|&i| noise / gains[i]).collect();
    let mut level = 0.0;
    let mut acc = 0.0;
    for n in 1..=thresholds.len() {
        acc += thresholds[n - 1];
        let mu = (budget + acc) / n as f64;
        if n == thresholds.len() || mu <= thresholds[n] {
            level = mu;
            break;
        }
    }
    let mut p = vec![0.0; gains.len()];
    for (&i, &t) in idx.iter().zip(&thresholds) {
        p[i] = (level - t).max(0.0);
    }
    Ok(p)
}
