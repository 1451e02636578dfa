#![allow(dead_code)]

use std::f64::consts::PI;

use creopt_core::channel::Case;
use creopt_core::linalg::{c, cr, CMatrix};
use creopt_core::metrics::{System, Thresholds};
use creopt_core::scenario::{Direction, LinkConfig, ScenarioConfig};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn random_scenario<R: Rng>(rng: &mut R, case: Case) -> ScenarioConfig {
    let mut s = ScenarioConfig::defaults().with_case(case);
    s.m = rng.gen_range(2..=6);
    s.n_s = s.m + rng.gen_range(1..=10);
    s.target.theta = rng.gen_range(-PI / 3.0..PI / 3.0);
    s.id = LinkConfig {
        n: rng.gen_range(1..=3),
        alpha: 1e-4,
        direction: Direction::Angle(rng.gen_range(-PI / 2.0..PI / 2.0)),
        kappa: Some(rng.gen_range(0.0..20.0)),
    };
    s.eh = LinkConfig {
        n: rng.gen_range(1..=3),
        alpha: 1e-2,
        direction: Direction::Angle(rng.gen_range(-PI / 2.0..PI / 2.0)),
        kappa: Some(rng.gen_range(0.0..20.0)),
    };
    s.seed = rng.gen();
    s
}

/// `Γ_EH` up to 70% of `E_max`, `Γ_S` log-uniform in `[1.5, 200]·CRB_min`.
pub fn random_thresholds<R: Rng>(rng: &mut R, system: &System) -> Thresholds {
    let f = rng.gen_range(0.0..0.7);
    let k = (rng.gen_range(1.5f64.ln()..200f64.ln())).exp();
    Thresholds::new(f * system.energy_max(), k * system.crb_min())
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| c(rng.sample(StandardNormal), rng.sample(StandardNormal)))
}

/// `XXᴴ + εI` with a random condition number.
pub fn random_pd<R: Rng>(rng: &mut R, n: usize) -> CMatrix {
    let x = random_matrix(rng, n, n);
    let eps = 10f64.powf(rng.gen_range(-2.0..1.0));
    &x * x.adjoint() + CMatrix::identity(n, n) * cr(eps)
}

pub fn random_hermitian<R: Rng>(rng: &mut R, n: usize) -> CMatrix {
    let x = random_matrix(rng, n, n);
    (&x + x.adjoint()) * cr(0.5)
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
