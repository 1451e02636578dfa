mod common;

use std::f64::consts::PI;

use common::{random_matrix, random_pd, random_scenario};
use creopt_core::channel::{steering, Case};
use creopt_core::linalg::{self, cr, CMatrix};
use creopt_core::metrics::System;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn system(seed: u64, case: Case) -> System {
    random_scenario(&mut rng(seed), case).build().unwrap()
}

/// Random PD covariance with `tr S = P`.
fn covariance(seed: u64, sys: &System) -> CMatrix {
    let s = random_pd(&mut rng(seed ^ 0x5eed), sys.m());
    let tr = linalg::trace_re(&s);
    s * cr(sys.power / tr)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

#[test]
fn derivative_norm_three_elements() {
    let d = steering(0.0, 3, 1);
    assert!((d.norm_squared() - 2.0 * PI * PI).abs() < 1e-12);
}

proptest! {
    #[test]
    fn steering_is_unit_modulus_and_orthogonal(theta in -PI / 2.0..PI / 2.0, n in 2usize..32) {
        let a = steering(theta, n, 0);
        let d = steering(theta, n, 1);
        prop_assert!((a.norm_squared() - n as f64).abs() <= 1e-10 * n as f64);
        prop_assert!(a.dotc(&d).norm() <= 1e-10 * n as f64);
    }

    #[test]
    fn metrics_see_only_the_hermitian_part(seed in any::<u64>(), extended in any::<bool>()) {
        let sys = system(seed, if extended { Case::Extended } else { Case::Point });
        let s = covariance(seed, &sys);
        let skew = {
            let k = random_matrix(&mut rng(seed ^ 7), sys.m(), sys.m());
            (&k - k.adjoint()) * cr(1e-3 * sys.power)
        };
        let t = &s + skew;
        let herm = linalg::hermitian_part(&t);
        prop_assert!(rel(sys.rate(&t), sys.rate(&herm)) <= 1e-12);
        prop_assert!(rel(sys.energy(&t), sys.energy(&herm)) <= 1e-12);
        prop_assert!(rel(sys.crb(&t), sys.crb(&herm)) <= 1e-10);
    }

    #[test]
    fn rate_and_energy_are_monotone(seed in any::<u64>()) {
        let sys = system(seed, Case::Point);
        let small = covariance(seed, &sys) * cr(0.5);
        let g = random_matrix(&mut rng(seed ^ 11), sys.m(), 2) * cr((0.1 * sys.power).sqrt());
        let big = &small + &g * g.adjoint();
        prop_assert!(sys.rate(&big) >= sys.rate(&small));
        prop_assert!(sys.energy(&big) >= sys.energy(&small));
    }

    #[test]
    fn extended_crb_is_convex(seed in any::<u64>(), t in 0.0f64..1.0) {
        let sys = system(seed, Case::Extended);
        let a = covariance(seed, &sys);
        let b = covariance(seed ^ 3, &sys);
        let mix = &a * cr(t) + &b * cr(1.0 - t);
        let chord = t * sys.crb(&a) + (1.0 - t) * sys.crb(&b);
        prop_assert!(sys.crb(&mix) <= chord * (1.0 + 1e-12));
    }

    #[test]
    fn rank_one_point_crb(seed in any::<u64>()) {
        let sys = system(seed, Case::Point);
        let target = *sys.point_target().unwrap();
        let v = random_matrix(&mut rng(seed ^ 5), sys.m(), 1);
        let s = &v * v.adjoint() * cr(sys.power / v.norm_squared());
        let at = steering(target.theta, sys.m(), 0);
        let dr = steering(target.theta, sys.geometry.n_s, 1);
        let gain = (at.transpose() * &s * at.conjugate())[(0, 0)].re;
        let closed = sys.sigma_s_sq / (2.0 * target.alpha.norm_sqr() * sys.block_len * dr.norm_squared() * gain);
        prop_assert!(rel(sys.crb(&s), closed) <= 1e-8);
    }

    #[test]
    fn metric_signs(seed in any::<u64>(), extended in any::<bool>()) {
        let sys = system(seed, if extended { Case::Extended } else { Case::Point });
        let s = covariance(seed, &sys);
        prop_assert!(sys.rate(&s) >= 0.0);
        prop_assert!(sys.energy(&s) >= 0.0);
        prop_assert!(sys.crb(&s) > 0.0);
        let zero = CMatrix::zeros(sys.m(), sys.m());
        prop_assert_eq!(sys.rate(&zero), 0.0);
        prop_assert!(sys.crb(&zero).is_infinite());
    }
}
