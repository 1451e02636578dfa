mod common;

use common::{random_scenario, random_thresholds};
use creopt_core::benchmarks::{emt_benchmark, time_division, EmtVariant, TdMode, TimeSplit};
use creopt_core::channel::Case;
use creopt_core::linalg;
use creopt_core::metrics::Thresholds;
use creopt_core::p1::P1Config;
use creopt_core::region::{solve_thresholds, SolverConfig, Vertices};
use creopt_core::scenario::preset;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn benchmarks_never_beat_the_optimum(seed in any::<u64>(), extended in any::<bool>()) {
        let case = if extended { Case::Extended } else { Case::Point };
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let sys = random_scenario(&mut r, case).build().unwrap();
        let th = random_thresholds(&mut r, &sys);
        let Ok(opt) = solve_thresholds(&sys, &th, &SolverConfig::default()) else { return Ok(()) };
        let bound = opt.point.rate * (1.0 + 1e-6) + 1e-9;
        if let Ok(td) = time_division(&sys, TdMode::Optimize { grid: 100 }, &th) {
            let t = td.split;
            prop_assert!(t.tau_id >= 0.0 && t.tau_eh >= 0.0 && t.tau_s >= 0.0);
            prop_assert!((t.tau_id + t.tau_eh + t.tau_s - 1.0).abs() <= 1e-12);
            prop_assert!(td.point.rate <= bound);
            prop_assert!(td.point.energy >= th.gamma_eh * (1.0 - 1e-9));
            prop_assert!(td.point.crb <= th.gamma_s * (1.0 + 1e-9));
        }
        let cfg = P1Config::default();
        for variant in [EmtVariant::Id, EmtVariant::Combined] {
            let Ok(e) = emt_benchmark(variant, &sys, &th, &cfg.barrier, cfg.boundary_tol) else { continue };
            let d = &e.design;
            let used = d.powers.iter().sum::<f64>() + d.null_basis.ncols() as f64 * d.p0;
            prop_assert!(used <= sys.power * (1.0 + 1e-9));
            prop_assert!(d.powers.iter().all(|p| *p >= 0.0));
            prop_assert!(e.point.rate <= bound);
        }
    }
}

#[test]
fn split_validation() {
    assert!(TimeSplit::new(0.5, 0.5, 0.0).is_ok());
    assert!(TimeSplit::new(0.5, 0.6, 0.0).is_err());
    assert!(TimeSplit::new(-0.1, 0.6, 0.5).is_err());
}

#[test]
fn time_division_crb_is_below_the_average() {
    // With M = N_ID = 2 the R-max covariance is full rank.
    let sys = preset("paper-fig7b").unwrap().scenario.build().unwrap();
    let v = Vertices::compute(&sys).unwrap();
    assert!(v.r_max.point.crb.is_finite());
    for k in 1..10 {
        let tau = k as f64 / 10.0;
        let split = TimeSplit::new(tau, 0.0, 1.0 - tau).unwrap();
        let td = time_division(&sys, TdMode::Fixed(split), &Thresholds::unconstrained()).unwrap();
        let avg = tau * v.r_max.point.crb + (1.0 - tau) * v.c_min.point.crb;
        assert!(td.point.crb <= avg * (1.0 + 1e-12));
        assert!((td.point.rate - tau * v.r_max.point.rate).abs() <= 1e-12 * v.r_max.point.rate);
    }
}

#[test]
fn combined_basis_is_orthonormal() {
    for case in [Case::Point, Case::Extended] {
        let sys = preset("paper-fig8").unwrap().scenario.with_case(case).build().unwrap();
        let th = Thresholds::new(0.2 * sys.energy_max(), f64::INFINITY);
        let cfg = P1Config::default();
        let e = emt_benchmark(EmtVariant::Combined, &sys, &th, &cfg.barrier, cfg.boundary_tol).unwrap();
        let b = &e.design.basis;
        let gram = b.adjoint() * b;
        assert!(linalg::max_abs(&(gram - linalg::CMatrix::identity(b.ncols(), b.ncols()))) <= 1e-10);
    }
}
