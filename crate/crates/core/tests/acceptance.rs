//! Acceptance suite. Prints one PASS/FAIL line per criterion. Exits
//! non-zero on failure only when `CREOPT_ACCEPTANCE_STRICT` is set, so a
//! workspace test run still reaches the remaining test binaries.

mod common;

use std::time::Instant;

use creopt_core::benchmarks::{emt_benchmark, time_division, EmtVariant, TdMode};
use creopt_core::channel::{steering, ArrayGeometry, Case, ChannelSet, ExtendedTarget, Target};
use creopt_core::convex::barrier::{hermitian_basis, hermitian_len, pack_hermitian};
use creopt_core::convex::gradients::{log_det_gradient, quadratic_gradient, rate_gradient, trace_inverse_gradient};
use creopt_core::convex::{AffineHermitian, ConcaveFn};
use creopt_core::linalg::{self, c, cr, CMatrix, RVector};
use creopt_core::metrics::{trace_inverse, System, Thresholds};
use creopt_core::p1::{solve_p1, solve_p1_direct, P1Config};
use creopt_core::p2::{
    colocated_re, p3_inner_objective, p3_inner_powers, power_splitting_system, solve_p2, solve_p2_direct,
    time_switching_numeric, P2Config, SplitDesign,
};
use creopt_core::region::{solve_thresholds, solve_vertex, sweep_surface, RegionConfig, SolverConfig, VertexKind, Vertices};
use creopt_core::scenario::{dbm_to_watt, preset, ScenarioConfig, Sweep};
use common::{random_hermitian, random_matrix, random_pd, random_scenario, random_thresholds, rel_diff};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = (bool, String);

fn rng(stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0xC0FFEE ^ stream)
}

fn c_min_closed_forms() -> Outcome {
    let mut r = rng(1);
    let mut configs = vec![ScenarioConfig::defaults(), ScenarioConfig::defaults().with_case(Case::Extended)];
    for k in 0..20 {
        let mut s = ScenarioConfig::defaults().with_case(if k % 2 == 0 { Case::Point } else { Case::Extended });
        s.m = r.gen_range(2..=8);
        s.n_s = s.m + r.gen_range(1..=16);
        s.power = dbm_to_watt(r.gen_range(20.0..40.0));
        s.sigma_s_sq = dbm_to_watt(r.gen_range(-100.0..-80.0));
        s.block_len = r.gen_range(64..=1024) as f64;
        s.target.alpha = c(0.0, 0.0) + linalg::C64::from_polar(10f64.powf(r.gen_range(-7.0..-5.0)), r.gen_range(0.0..6.28));
        s.target.theta = r.gen_range(-1.0..1.0);
        s.seed = r.gen();
        configs.push(s);
    }
    let mut worst = 0.0f64;
    for cfg in &configs {
        let sys = cfg.build().expect("scenario");
        let crb = solve_vertex(VertexKind::CMin, &sys).expect("vertex").point.crb;
        let (m, p, l) = (cfg.m as f64, cfg.power, cfg.block_len);
        let oracle = match cfg.target.case {
            Case::Point => {
                // Derivative of the receive steering vector by central differences.
                let h = 1e-6;
                let th = cfg.target.theta;
                let d = (steering(th + h, cfg.n_s, 0) - steering(th - h, cfg.n_s, 0)) * cr(0.5 / h);
                cfg.sigma_s_sq / (2.0 * cfg.target.alpha.norm_sqr() * l * d.norm_squared() * p * m)
            }
            Case::Extended => cfg.sigma_s_sq * cfg.n_s as f64 * m * m / (l * p),
        };
        let err = rel_diff(crb, oracle);
        // The finite-difference oracle carries ~1e-10 error of its own.
        worst = worst.max(err);
    }
    (worst <= 1e-8, format!("{} scenarios, max rel err {worst:.2e}", configs.len()))
}

fn p1_strong_duality() -> Outcome {
    let mut r = rng(2);
    let cfg = P1Config::default();
    let (mut solved, mut worst, mut missing) = (0, 0.0f64, 0);
    let mut attempts = 0;
    while solved < 50 && attempts < 500 {
        attempts += 1;
        let sys = random_scenario(&mut r, Case::Point).build().expect("scenario");
        let th = random_thresholds(&mut r, &sys);
        let Ok(sol) = solve_p1(&sys, &th, &cfg) else { continue };
        solved += 1;
        match sol.dual_value {
            Some(d) => worst = worst.max(d - sol.point.rate),
            None => missing += 1,
        }
    }
    let ok = solved == 50 && missing == 0 && worst <= 1e-4;
    (ok, format!("{solved} instances, max gap {worst:.2e} bps/Hz, {missing} without dual"))
}

fn cross_solver() -> Outcome {
    let mut r = rng(3);
    let cfg = SolverConfig::default();
    let mut worst = [0.0f64; 2];
    let mut counts = [0usize; 2];
    for (idx, case) in [Case::Point, Case::Extended].into_iter().enumerate() {
        let mut attempts = 0;
        while counts[idx] < 30 && attempts < 300 {
            attempts += 1;
            let sys = random_scenario(&mut r, case).build().expect("scenario");
            let th = random_thresholds(&mut r, &sys);
            let pair = match case {
                Case::Point => solve_p1(&sys, &th, &cfg.p1).and_then(|a| solve_p1_direct(&sys, &th, &cfg.p1.barrier).map(|b| (a.point.rate, b.point.rate))),
                Case::Extended => solve_p2(&sys, &th, &cfg.p2).and_then(|a| solve_p2_direct(&sys, &th, &cfg.p2).map(|b| (a.point.rate, b.point.rate))),
            };
            let Ok((a, b)) = pair else { continue };
            counts[idx] += 1;
            worst[idx] = worst[idx].max(rel_diff(a, b));
        }
    }
    let ok = counts == [30, 30] && worst[0] <= 1e-3 && worst[1] <= 1e-3;
    (ok, format!("p1 {} instances max rel {:.2e}; p2 {} instances max rel {:.2e}", counts[0], worst[0], counts[1], worst[1]))
}

fn extended_tightness() -> Outcome {
    let mut r = rng(4);
    let cfg = P2Config::default();
    let (mut checked_crb, mut checked_power, mut worst) = (0, 0, 0.0f64);
    for _ in 0..60 {
        let sys = random_scenario(&mut r, Case::Extended).build().expect("scenario");
        let th = random_thresholds(&mut r, &sys);
        let Ok(sol) = solve_p2(&sys, &th, &cfg) else { continue };
        let Some(mult) = sol.multipliers else { continue };
        let scale = sol.point.rate.max(1.0);
        let gamma_s2 = sys.gamma_s2(th.gamma_s);
        if mult.mu * gamma_s2 > 1e-6 * scale {
            checked_crb += 1;
            worst = worst.max(rel_diff(trace_inverse(&sol.s), gamma_s2));
        }
        if mult.nu * sys.power > 1e-6 * scale {
            checked_power += 1;
            worst = worst.max(rel_diff(linalg::trace_re(&sol.s), sys.power));
        }
    }
    let ok = checked_crb > 0 && checked_power > 0 && worst <= 1e-6;
    (ok, format!("{checked_crb} active CRB, {checked_power} active power, max rel err {worst:.2e}"))
}

fn block_lemmas() -> Outcome {
    let mut r = rng(5);
    let mut violations = 0;
    let mut worst_eq = 0.0f64;
    for _ in 0..1000 {
        let (n1, n0) = (r.gen_range(1..=4), r.gen_range(1..=4));
        let a = random_pd(&mut r, n1 + n0);
        let s1 = a.view((0, 0), (n1, n1)).into_owned();
        let s0 = a.view((n1, n1), (n0, n0)).into_owned();
        let full = trace_inverse(&a);
        let split = trace_inverse(&s1) + trace_inverse(&s0);
        if full < split * (1.0 - 1e-10) {
            violations += 1;
        }
        let mut blockdiag = a.clone();
        blockdiag.view_mut((0, n1), (n1, n0)).fill(cr(0.0));
        blockdiag.view_mut((n1, 0), (n0, n1)).fill(cr(0.0));
        worst_eq = worst_eq.max(rel_diff(trace_inverse(&blockdiag), split));
    }
    for _ in 0..1000 {
        let n = r.gen_range(1..=6);
        let s0 = random_pd(&mut r, n);
        let diag_bound: f64 = (0..n).map(|k| 1.0 / s0[(k, k)].re).sum();
        if trace_inverse(&s0) < diag_bound * (1.0 - 1e-10) {
            violations += 1;
        }
        let d = CMatrix::from_diagonal(&s0.diagonal());
        worst_eq = worst_eq.max(rel_diff(trace_inverse(&d), diag_bound));
    }
    let ok = violations == 0 && worst_eq <= 1e-10;
    (ok, format!("2000 instances, {violations} violations, equality cases max rel err {worst_eq:.2e}"))
}

fn p3_inner_solution() -> Outcome {
    let mut r = rng(6);
    let mut worst = f64::NEG_INFINITY;
    let scales = [1e-1, 1e-2, 1e-3, 1e-4, 1e-6];
    for _ in 0..100 {
        let k = r.gen_range(1..=6);
        let sigma_e: Vec<f64> = (0..k).map(|_| 10f64.powf(r.gen_range(-2.0..2.0))).collect();
        let mu = 10f64.powf(r.gen_range(-2.0..2.0));
        let nu = 10f64.powf(r.gen_range(-2.0..2.0));
        let null_dim = r.gen_range(0..=3);
        let (p, p0) = p3_inner_powers(&sigma_e, mu, nu);
        let best = p3_inner_objective(&sigma_e, mu, nu, null_dim, &p, p0);
        let mut q = p.clone();
        for t in 0..1_000_000 {
            let delta = scales[t % scales.len()];
            for (qk, pk) in q.iter_mut().zip(&p) {
                *qk = pk * (delta * r.sample::<f64, _>(rand_distr::StandardNormal)).exp();
            }
            let q0 = p0 * (delta * r.sample::<f64, _>(rand_distr::StandardNormal)).exp();
            let v = p3_inner_objective(&sigma_e, mu, nu, null_dim, &q, q0);
            worst = worst.max((v - best) / best.abs());
        }
        // Off-diagonal perturbations of S₁ in the eigenbasis of E.
        let e = CMatrix::from_diagonal(&RVector::from_vec(sigma_e.clone()).map(cr));
        let s_opt = CMatrix::from_diagonal(&RVector::from_vec(p.clone()).map(cr));
        let inner = |s: &CMatrix| -linalg::trace_re(&(&e * s)) - mu * trace_inverse(s);
        let base = inner(&s_opt);
        for t in 0..2_000 {
            let delta = scales[t % scales.len()] * p.iter().cloned().fold(f64::INFINITY, f64::min);
            let s = &s_opt + random_hermitian(&mut r, k) * cr(delta);
            if linalg::min_eigenvalue(&s) <= 0.0 {
                continue;
            }
            worst = worst.max((inner(&s) - base) / base.abs());
        }
    }
    (worst <= 1e-9, format!("100 instances x 1e6 perturbations, max rel improvement {worst:.2e}"))
}

fn fig6_collapse() -> Outcome {
    let cfg = RegionConfig::default();
    let sys = preset("paper-fig6-gamma0").unwrap().scenario.build().unwrap();
    let surf = sweep_surface(&sys, 6, 6, 4, &cfg).expect("surface");
    let r_max = surf.vertices.r_max.point.rate;
    let rates: Vec<f64> = surf.surface.iter().filter(|c| c.cell.point.is_solved()).map(|c| c.cell.point.rate).collect();
    let spread = rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - rates.iter().cloned().fold(f64::INFINITY, f64::min);
    let sys1 = preset("paper-fig6-gamma1").unwrap().scenario.build().unwrap();
    let v1 = Vertices::compute(&sys1).unwrap();
    let ratio = v1.e_max.point.rate / v1.r_max.point.rate;
    let ok = !rates.is_empty() && spread <= 1e-4 * r_max && ratio <= 0.05;
    (ok, format!("gamma=0: {} cells, spread {:.2e} x R_max; gamma=1: E-max rate {ratio:.3} x R_max", rates.len(), spread / r_max))
}

fn extended_sentinel() -> Outcome {
    let a = Vertices::compute(&preset("paper-fig7a").unwrap().scenario.build().unwrap()).unwrap();
    let b = Vertices::compute(&preset("paper-fig7b").unwrap().scenario.build().unwrap()).unwrap();
    let ok = a.r_max.point.crb.is_infinite() && a.e_max.point.crb.is_infinite() && b.r_max.point.crb.is_finite();
    (
        ok,
        format!("M=6: R-max CRB {}, E-max CRB {}; M=N_ID=2: R-max CRB {:.3e}", a.r_max.point.crb, a.e_max.point.crb, b.r_max.point.crb),
    )
}

fn benchmark_dominance() -> Outcome {
    let cfg = SolverConfig::default();
    let (mut violations, mut combined_fail, mut loose_fail) = (0, 0, Vec::new());
    let mut compared = 0;
    for name in ["paper-fig8", "paper-fig9"] {
        let pre = preset(name).unwrap();
        for seed in 0..5u64 {
            let mut sc = pre.scenario.clone();
            sc.seed = seed;
            let sys = sc.build().unwrap();
            let r_max = Vertices::compute(&sys).unwrap().r_max.point.rate;
            let pairs: Vec<Thresholds> = match pre.sweep.as_ref().unwrap() {
                Sweep::EnergyFractions(f) => {
                    let gs = pre.gamma_s.unwrap().resolve(&sys);
                    f.iter().map(|x| Thresholds::new(x * sys.energy_max(), gs)).collect()
                }
                Sweep::CrbMultiples(k) => {
                    let ge = pre.gamma_eh.unwrap().resolve(&sys);
                    k.iter().map(|x| Thresholds::new(ge, x * sys.crb_min())).collect()
                }
            };
            let loosest = match pre.sweep.as_ref().unwrap() {
                Sweep::EnergyFractions(_) => 0,
                Sweep::CrbMultiples(_) => pairs.len() - 1,
            };
            for (idx, th) in pairs.iter().enumerate() {
                let Ok(opt) = solve_thresholds(&sys, th, &cfg) else { continue };
                let td = time_division(&sys, TdMode::Optimize { grid: 100 }, th).ok().map(|t| t.point.rate);
                let id = emt_benchmark(EmtVariant::Id, &sys, th, &cfg.p1.barrier, cfg.p1.boundary_tol).ok().map(|e| e.point.rate);
                let comb = emt_benchmark(EmtVariant::Combined, &sys, th, &cfg.p1.barrier, cfg.p1.boundary_tol).ok().map(|e| e.point.rate);
                for rate in [td, id, comb].into_iter().flatten() {
                    compared += 1;
                    if rate > opt.point.rate * (1.0 + 1e-6) {
                        violations += 1;
                    }
                }
                if name == "paper-fig8" && idx == pairs.len() - 1 && comb.unwrap_or(0.0) < id.unwrap_or(0.0) * (1.0 - 1e-6) {
                    combined_fail += 1;
                }
                if idx == loosest {
                    let labels = ["optimal", "time_division", "emt_id", "emt_combined"];
                    for (label, rate) in labels.iter().zip([Some(opt.point.rate), td, id, comb]) {
                        let gap = rate.map_or(1.0, |x| (r_max - x) / r_max);
                        if gap > 1e-3 {
                            loose_fail.push(format!("{name}/{seed}/{label} {gap:.1e}"));
                        }
                    }
                }
            }
        }
    }
    let ok = violations == 0 && combined_fail == 0 && loose_fail.is_empty();
    let mut detail = format!("{compared} comparisons, {violations} above optimal, {combined_fail} combined<ID at top Γ_EH");
    if !loose_fail.is_empty() {
        detail += &format!("; loosest-threshold gaps to R_max: {}", loose_fail.join(", "));
    }
    (ok, detail)
}

fn colocated_system<R: Rng>(r: &mut R) -> System {
    let m = r.gen_range(2..=6);
    let g = random_matrix(r, 1, m) * cr(10f64.powf(r.gen_range(-1.0..0.0)));
    let target = Target::Extended(ExtendedTarget { scatterers: vec![(cr(1.0), 0.0)] });
    let channels = ChannelSet::new(g.clone(), g, target).unwrap();
    let geometry = ArrayGeometry::new(m, m + r.gen_range(1..=8)).unwrap();
    System::new(geometry, channels, r.gen_range(1.0..10.0), 1.0, 10f64.powf(r.gen_range(-2.0..0.0)), 1.0, 0.5).unwrap()
}

fn colocated_closed_forms() -> Outcome {
    let mut r = rng(10);
    let p2 = P2Config::default();
    let mut worst = 0.0f64;
    let mut worst_env = 0.0f64;
    for _ in 0..20 {
        let sys = colocated_system(&mut r);
        let gamma_s = r.gen_range(1.2..10.0) * sys.crb_min();
        let tau = r.gen_range(0.1..0.9);
        let total = colocated_re(&sys, SplitDesign::PowerSplitting { rho: 0.0 }, gamma_s).unwrap().gamma_total;
        let gamma2 = r.gen_range(0.05..0.95) * total;
        let ts = colocated_re(&sys, SplitDesign::TimeSwitching { tau, gamma2 }, gamma_s).unwrap().point;
        let num = time_switching_numeric(&sys, tau, gamma2, gamma_s, &p2.barrier).unwrap();
        for (a, b) in [(ts.rate, num.rate), (ts.energy, num.energy), (ts.crb, num.crb)] {
            worst = worst.max(rel_diff(a, b));
        }
        let rho = r.gen_range(0.05..0.95);
        let ps = colocated_re(&sys, SplitDesign::PowerSplitting { rho }, gamma_s).unwrap().point;
        let split = power_splitting_system(&sys, rho).unwrap();
        let num = solve_p2(&split, &Thresholds::new(0.5 * ps.energy, gamma_s), &p2).unwrap().point;
        for (a, b) in [(ps.rate, num.rate), (ps.energy, num.energy), (ps.crb, num.crb)] {
            worst = worst.max(rel_diff(a, b));
        }
        for k in 1..20 {
            let rho = k as f64 / 20.0;
            let ps = colocated_re(&sys, SplitDesign::PowerSplitting { rho }, gamma_s).unwrap().point;
            let ts = colocated_re(&sys, SplitDesign::TimeSwitching { tau: 1e-7, gamma2: ps.energy }, gamma_s).unwrap().point;
            worst_env = worst_env.max(rel_diff(ts.rate, ps.rate));
        }
    }
    let ok = worst <= 1e-3 && worst_env <= 1e-3;
    (ok, format!("20 channels, closed form vs numeric max rel {worst:.2e}, tau->0 envelope max rel {worst_env:.2e}"))
}

fn gradient_checks() -> Outcome {
    let mut r = rng(11);
    let h = 1e-6;
    let mut worst = 0.0f64;
    let check = |f: &dyn Fn(&CMatrix) -> f64, grad: &CMatrix, s: &CMatrix, dir: &CMatrix| {
        let fd = (f(&(s + dir * cr(h))) - f(&(s - dir * cr(h)))) / (2.0 * h);
        let an = linalg::re_trace_prod(grad, dir);
        let scale = linalg::fro_norm(grad) * linalg::fro_norm(dir);
        (fd - an).abs() / scale.max(f64::MIN_POSITIVE)
    };
    for _ in 0..20 {
        let m = r.gen_range(2..=6);
        let s = random_pd(&mut r, m);
        let rows = r.gen_range(1..=3);
        let hm = random_matrix(&mut r, rows, m);
        let sigma = r.gen_range(0.1..2.0);
        let rows = r.gen_range(1..=3);
        let g = random_matrix(&mut r, rows, m);
        let dir = random_hermitian(&mut r, m);
        let dir = &dir * cr(1.0 / linalg::fro_norm(&dir));
        let rate = |x: &CMatrix| creopt_core::metrics::rate(x, &hm, sigma).unwrap();
        worst = worst.max(check(&rate, &rate_gradient(&s, &hm, sigma).unwrap(), &s, &dir));
        worst = worst.max(check(&trace_inverse, &trace_inverse_gradient(&s).unwrap(), &s, &dir));
        let quad = |x: &CMatrix| linalg::trace_re(&(&g * x * g.adjoint()));
        worst = worst.max(check(&quad, &quadratic_gradient(&g), &s, &dir));
        let ld = |x: &CMatrix| linalg::ln_det_pd(x).unwrap();
        worst = worst.max(check(&ld, &log_det_gradient(&s).unwrap(), &s, &dir));

        // The barrier engine's packed-coordinate gradient and Hessian.
        let map = AffineHermitian::hermitian_variable(m, 0);
        let f = ConcaveFn::default()
            .with_log_det(0.7, map.congruence(&hm).plus_constant(&CMatrix::identity(hm.nrows(), hm.nrows())))
            .with_neg_trace_inv(1.3, map.clone())
            .with_affine(&map.trace_with(&(g.adjoint() * &g)));
        let x = RVector::from_vec(pack_hermitian(&s));
        let ev = f.eval(&x, true).unwrap();
        let n = hermitian_len(m);
        let d = RVector::from_vec(pack_hermitian(&dir));
        let fd = (f.value(&(&x + &d * h)).unwrap() - f.value(&(&x - &d * h)).unwrap()) / (2.0 * h);
        worst = worst.max((fd - ev.grad.dot(&d)).abs() / (ev.grad.norm() * d.norm()));
        let gp = f.eval(&(&x + &d * h), false).unwrap().grad;
        let gm = f.eval(&(&x - &d * h), false).unwrap().grad;
        let fd_h = (gp - gm) / (2.0 * h);
        let an_h = &ev.hess * &d;
        worst = worst.max((fd_h - &an_h).norm() / (ev.hess.norm() * d.norm()));
        assert_eq!(hermitian_basis(m).len(), n);
    }
    (worst <= 1e-4, format!("20 points, max rel err {worst:.2e}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("c_min_closed_forms", c_min_closed_forms),
        ("p1_strong_duality", p1_strong_duality),
        ("cross_solver_oracle", cross_solver),
        ("extended_tightness", extended_tightness),
        ("block_inverse_lemmas", block_lemmas),
        ("p3_inner_solution", p3_inner_solution),
        ("correlated_los_collapse", fig6_collapse),
        ("extended_sentinel", extended_sentinel),
        ("benchmark_dominance", benchmark_dominance),
        ("colocated_closed_forms", colocated_closed_forms),
        ("gradient_checks", gradient_checks),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let (mut ran, mut failed) = (0, 0);
    for (name, f) in criteria {
        if !only.is_empty() && !only.iter().any(|o| name.contains(o.as_str())) {
            continue;
        }
        ran += 1;
        let t = Instant::now();
        let (ok, detail) = f();
        if !ok {
            failed += 1;
        }
        println!("{} {name}: {detail} [{:.1}s]", if ok { "PASS" } else { "FAIL" }, t.elapsed().as_secs_f64());
    }
    println!("{} passed, {failed} failed", ran - failed);
    if failed > 0 && std::env::var_os("CREOPT_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
