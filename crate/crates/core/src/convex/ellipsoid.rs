//! Cutting-plane ellipsoid method for non-smooth convex minimization.
//!
//! The ellipsoid is `{x : (x − c)ᵀ P⁻¹ (x − c) ≤ 1}`. Each oracle call at the
//! center returns either an objective cut (value plus subgradient) or a
//! feasibility cut (a half-space that contains the feasible set).

use crate::linalg::{RMatrix, RVector};

/// What the oracle reports at a query point.
#[derive(Debug, Clone)]
pub enum Cut {
    /// Objective value and a subgradient at the query point.
    Objective { value: f64, subgradient: RVector },
    /// Keep `{x : aᵀ(x − c) + depth ≤ 0}`; `depth ≥ 0` gives a deep cut.
    Feasibility { normal: RVector, depth: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct EllipsoidParams {
    /// Stop when `best − lower ≤ tol · max(1, |best|)`.
    pub tol: f64,
    /// Defaults to `2000 · dim²` when `None`.
    pub max_iter: Option<usize>,
    pub max_condition: f64,
}

impl Default for EllipsoidParams {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: None, max_condition: 1e14 }
    }
}

#[derive(Debug, Clone)]
pub struct EllipsoidState {
    pub center: RVector,
    pub shape: RMatrix,
    pub iteration: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIter,
    IllConditioned,
}

#[derive(Debug, Clone)]
pub struct EllipsoidOutcome {
    /// Best objective-cut point, if any was seen.
    pub point: Option<RVector>,
    pub value: f64,
    /// Certified lower bound on the minimum.
    pub lower_bound: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// `½ ln det P` after each update, starting with the initial ball.
    pub log_volume: Vec<f64>,
    pub final_state: EllipsoidState,
}

impl EllipsoidOutcome {
    pub fn gap(&self) -> f64 {
        self.value - self.lower_bound
    }

    pub fn truncated(&self) -> bool {
        self.termination != Termination::Converged
    }
}

/// Minimize over the ball `‖x − center‖ ≤ radius`.
///
/// Returns an ill-conditioned termination (not a panic) if the shape matrix
/// degenerates; callers decide whether the best iterate is usable.
pub fn ellipsoid_solve<F>(center: RVector, radius: f64, mut oracle: F, params: EllipsoidParams) -> EllipsoidOutcome
where
    F: FnMut(&RVector) -> Cut,
{
    let n = center.len();
    assert!(n >= 1, "ellipsoid needs a positive dimension");
    let max_iter = params.max_iter.unwrap_or(2000 * n * n);
    let mut state = EllipsoidState { center, shape: RMatrix::identity(n, n) * (radius * radius), iteration: 0 };
    let mut log_vol = n as f64 * radius.ln();
    let mut log_volume = vec![log_vol];
    let mut best: Option<RVector> = None;
    let mut best_value = f64::INFINITY;
    let mut lower = f64::NEG_INFINITY;
    let nf = n as f64;
    let mut termination = Termination::MaxIter;

    while state.iteration < max_iter {
        state.iteration += 1;
        let (a, depth, is_obj) = match oracle(&state.center) {
            Cut::Objective { value, subgradient } => {
                let pa = &state.shape * &subgradient;
                let width = subgradient.dot(&pa).max(0.0).sqrt();
                lower = lower.max(value - width);
                if value < best_value {
                    best_value = value;
                    best = Some(state.center.clone());
                }
                if best_value - lower <= params.tol * best_value.abs().max(1.0) {
                    termination = Termination::Converged;
                    break;
                }
                if width == 0.0 {
                    termination = Termination::Converged;
                    break;
                }
                (subgradient, value - best_value, true)
            }
            Cut::Feasibility { normal, depth } => (normal, depth.max(0.0), false),
        };
        let pa = &state.shape * &a;
        let apa = a.dot(&pa);
        if !(apa > 0.0) || !apa.is_finite() {
            termination = Termination::IllConditioned;
            break;
        }
        let root = apa.sqrt();
        let alpha = depth / root;
        if alpha >= 1.0 {
            if is_obj {
                // Whole ellipsoid lies above the incumbent: certificate closes.
                lower = lower.max(best_value);
                termination = Termination::Converged;
            } else {
                termination = Termination::IllConditioned;
            }
            break;
        }
        let g = pa / root;
        if n == 1 {
            state.center -= &g * ((1.0 + alpha) / 2.0);
            let f = (1.0 - alpha) / 2.0;
            state.shape *= f * f;
            log_vol += f.ln();
        } else {
            let step = (1.0 + nf * alpha) / (nf + 1.0);
            state.center -= &g * step;
            let scale = nf * nf * (1.0 - alpha * alpha) / (nf * nf - 1.0);
            let shrink = 2.0 * step / (1.0 + alpha);
            let gg = &g * g.transpose();
            state.shape = (&state.shape - gg * shrink) * scale;
            state.shape = (&state.shape + state.shape.transpose()) * 0.5;
            log_vol += 0.5 * (nf * scale.ln() + (1.0 - shrink).ln());
        }
        log_volume.push(log_vol);
        if n > 1 && state.iteration % 8 == 0 {
            let eig = state.shape.clone().symmetric_eigen();
            let max = eig.eigenvalues.max();
            let min = eig.eigenvalues.min();
            if !(min > 0.0) || max / min > params.max_condition {
                termination = Termination::IllConditioned;
                break;
            }
        }
    }
    EllipsoidOutcome {
        point: best,
        value: best_value,
        lower_bound: lower,
        iterations: state.iteration,
        termination,
        log_volume,
        final_state: state,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn abs_in_one_dimension() {
        let out = ellipsoid_solve(
            RVector::from_vec(vec![0.0]),
            10.0,
            |x| Cut::Objective { value: (x[0] - 3.0).abs(), subgradient: RVector::from_vec(vec![(x[0] - 3.0).signum()]) },
            EllipsoidParams::default(),
        );
        assert_eq!(out.termination, Termination::Converged);
        assert!((out.point.unwrap()[0] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn quadratic_in_two_dimensions() {
        let target = RVector::from_vec(vec![1.0, 2.0]);
        let out = ellipsoid_solve(
            RVector::zeros(2),
            10.0,
            |x| {
                let d = x - &target;
                Cut::Objective { value: d.norm_squared(), subgradient: d * 2.0 }
            },
            EllipsoidParams { tol: 1e-13, ..Default::default() },
        );
        let p = out.point.unwrap();
        assert!((p - target).norm() < 1e-6);
    }

    #[test]
    fn feasibility_cuts_respected() {
        // minimize x + y subject to x ≥ 1, y ≥ 2.
        let out = ellipsoid_solve(
            RVector::zeros(2),
            20.0,
            |x| {
                if x[0] < 1.0 {
                    Cut::Feasibility { normal: RVector::from_vec(vec![-1.0, 0.0]), depth: 1.0 - x[0] }
                } else if x[1] < 2.0 {
                    Cut::Feasibility { normal: RVector::from_vec(vec![0.0, -1.0]), depth: 2.0 - x[1] }
                } else {
                    Cut::Objective { value: x[0] + x[1], subgradient: RVector::from_vec(vec![1.0, 1.0]) }
                }
            },
            EllipsoidParams { tol: 1e-9, ..Default::default() },
        );
        assert!((out.value - 3.0).abs() < 1e-7);
    }

    #[test]
    fn volume_decreases_at_classical_rate() {
        let target = RVector::from_vec(vec![0.3, -0.2, 0.9]);
        let out = ellipsoid_solve(
            RVector::zeros(3),
            5.0,
            |x| {
                let d = x - &target;
                Cut::Objective { value: d.norm(), subgradient: d.normalize() }
            },
            EllipsoidParams { tol: 1e-10, ..Default::default() },
        );
        let bound = -1.0 / (2.0 * 4.0);
        for w in out.log_volume.windows(2) {
            assert!(w[1] - w[0] <= bound + 1e-12);
        }
    }
}
