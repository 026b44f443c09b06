use std::sync::Arc;

use lgh_core::dynamics::PhaseSpec;
use lgh_core::eg::{eg_step, lasalle_audit, line_search, optimize, EGConfig, StopReason};
use lgh_core::extremal::PhaseSolver;
use lgh_core::hmp::{hamiltonian, minimize_hamiltonian, solve_mu, HybridProblem, ValueFunction};
use lgh_core::lie::{AlgebraVector, CoVector, GroupElement, LieGroupSpec};
use lgh_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Both phases fully actuated on a two-unit horizon; the optimal switching
/// states lie on the geodesic from `g0` to `gf`.
fn full_problem() -> HybridProblem {
    let lie = Arc::new(LieGroupSpec::so3());
    let gf = lie.exp_alg(&AlgebraVector::new(0.8, 0.3, -0.2));
    HybridProblem::new(
        lie,
        PhaseSpec::quadratic("a", vec![0, 1, 2]).unwrap(),
        PhaseSpec::quadratic("b", vec![0, 1, 2]).unwrap(),
        (0.0, 2.0),
        GroupElement::identity(),
        gf,
    )
    .unwrap()
}

/// Phase 1 on {e1, e2}, phase 2 on {e1, e3}; the target needs a turn about
/// e2 followed by one about e3, so the optimal switch is interior.
fn split_problem() -> HybridProblem {
    let lie = Arc::new(LieGroupSpec::so3());
    let gf = lie.exp_alg(&AlgebraVector::new(0.0, 0.6, 0.0)) * lie.exp_alg(&AlgebraVector::new(0.0, 0.0, 0.4));
    HybridProblem::new(
        lie,
        PhaseSpec::quadratic("a", vec![0, 1]).unwrap(),
        PhaseSpec::quadratic("b", vec![0, 2]).unwrap(),
        (0.0, 2.0),
        GroupElement::identity(),
        gf,
    )
    .unwrap()
}

fn solver(p: &HybridProblem) -> PhaseSolver {
    PhaseSolver::new(p.lie.clone(), 1e-3)
}

fn start(p: &HybridProblem) -> (GroupElement, f64) {
    (p.lie.exp_alg(&AlgebraVector::new(0.15, 0.45, -0.1)), 0.8)
}

fn long_run(beta: f64) -> EGConfig {
    EGConfig {
        beta,
        max_iters: 1500,
        ..EGConfig::default()
    }
}

#[test]
fn gradient_matches_central_differences() {
    let cases = [
        (full_problem(), AlgebraVector::zeros(), 0.6, 0.5..1.5),
        (split_problem(), AlgebraVector::new(0.15, 0.45, -0.1), 0.15, 0.7..1.1),
    ];
    for (p, center, r, ts) in cases {
        let s = solver(&p);
        let mut vf = ValueFunction::new(&p, &s);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let x = center + AlgebraVector::new(rng.gen_range(-r..r), rng.gen_range(-r..r), rng.gen_range(-r..r));
            let g = p.lie.exp_alg(&x);
            let t = rng.gen_range(ts.clone());
            let vg = vf.value_and_gradient(&g, t, None).unwrap_or_else(|e| panic!("{x:?} {t} {e}"));
            let (fd, fd_t) = vf.fd_gradient(&vg.evaluation).unwrap();
            let err = ((vg.dv_body - fd).0.norm_squared() + (vg.dv_dts - fd_t).powi(2)).sqrt();
            let scale = (fd.0.norm_squared() + fd_t * fd_t).sqrt();
            assert!(err <= 1e-3 * scale, "relative error {}", err / scale);
        }
    }
}

#[test]
fn symmetric_split_has_zero_time_derivative() {
    let lie = Arc::new(LieGroupSpec::so3());
    let g0 = lie.exp_alg(&AlgebraVector::new(0.3, 0.2, -0.1));
    let q = PhaseSpec::quadratic("q", vec![0, 1]).unwrap();
    let p = HybridProblem::new(lie, q.clone(), q, (0.0, 2.0), g0, g0).unwrap();
    let s = solver(&p);
    let mut vf = ValueFunction::new(&p, &s);
    let vg = vf.value_and_gradient(&g0, 1.0, None).unwrap();
    assert!(vg.dv_dts.abs() <= 1e-6);
    assert!(vg.v.abs() <= 1e-12);
}

#[test]
fn optimizer_reaches_stationarity() {
    let p = split_problem();
    let s = solver(&p);
    let (g, t) = start(&p);
    let cfg = long_run(1e-6);
    let run = optimize(&p, &s, &g, t, &cfg).unwrap();
    assert_eq!(run.stop, StopReason::Stationary);
    let last = run.history.last().unwrap();
    assert!(last.stationarity < cfg.beta);
    assert!((last.t_s - 1.2366).abs() < 0.01, "t_s {}", last.t_s);
    // The stop test bounds the Hamiltonian gap only through dv_dts.
    assert_eq!(run.residuals.hamiltonian_gap, last.dv_dts.abs());
    assert!(run.residuals.hamiltonian_gap.powi(2) <= last.stationarity);
    assert!(run.residuals.minimization_gap <= 1e-10);
    assert!(run.residuals.jump_alignment.is_none());
    let audit = lasalle_audit(&run.history, cfg.beta);
    assert!(audit.clean() && audit.stop_test_reached, "{:?}", audit.violations);
    for it in &run.history {
        assert!(it.g_s.orthogonality_defect() < 1e-9);
    }

    let again = optimize(&p, &s, &last.g_s, last.t_s, &cfg).unwrap();
    assert_eq!(again.history.len(), 1);
    assert_eq!(again.stop, StopReason::Stationary);
}

#[test]
fn near_stationarity_implies_hamiltonian_continuity() {
    let p = split_problem();
    let s = solver(&p);
    let (g, t) = start(&p);
    let run = optimize(&p, &s, &g, t, &long_run(1e-10)).unwrap();
    assert_eq!(run.stop, StopReason::Stationary);
    assert!(run.residuals.hamiltonian_gap <= 1e-4, "gap {}", run.residuals.hamiltonian_gap);
}

#[test]
fn premature_stop_is_reported_not_flagged() {
    let p = split_problem();
    let s = solver(&p);
    let (g, t) = start(&p);
    let cfg = EGConfig { max_iters: 3, ..EGConfig::default() };
    let run = optimize(&p, &s, &g, t, &cfg).unwrap();
    assert_eq!(run.stop, StopReason::MaxIters);
    assert_eq!(run.history.len(), 4);
    let audit = lasalle_audit(&run.history, cfg.beta);
    assert!(audit.clean());
    assert!(!audit.stop_test_reached);
    assert!(run.history.windows(2).all(|w| w[1].v < w[0].v));
}

#[test]
fn tighter_beta_tightens_the_limit() {
    let p = split_problem();
    let s = solver(&p);
    let (g, t) = start(&p);
    let mut finals = Vec::new();
    for beta in [1e-3, 1e-5, 1e-7] {
        let run = optimize(&p, &s, &g, t, &long_run(beta)).unwrap();
        assert_eq!(run.stop, StopReason::Stationary);
        finals.push(run.history.last().unwrap().clone());
    }
    for w in finals.windows(2) {
        assert!(w[1].stationarity < w[0].stationarity);
    }
    let dist = |a: &lgh_core::eg::EGIterate, b: &lgh_core::eg::EGIterate| {
        let dg = p.lie.group_distance(&a.g_s, &b.g_s).unwrap();
        (dg * dg + (a.t_s - b.t_s).powi(2)).sqrt()
    };
    assert!(dist(&finals[1], &finals[2]) < dist(&finals[0], &finals[1]));
}

#[test]
fn ascent_direction_fails_line_search() {
    let p = split_problem();
    let s = solver(&p);
    let (g, t) = start(&p);
    let mut vf = ValueFunction::new(&p, &s);
    let vg = vf.value_and_gradient(&g, t, None).unwrap();
    let err = line_search(&vf, &vg, &-vg.grad_body, -vg.dv_dts, 0.25, &EGConfig::default(), 0).unwrap_err();
    assert_eq!(err, Error::LineSearchFailed { iteration: 0 });
    let (theta, eval) = line_search(&vf, &vg, &vg.grad_body, vg.dv_dts, 0.25, &EGConfig::default(), 0).unwrap();
    assert!(theta > 0.0 && eval.v < vg.v);
}

#[test]
fn eg_step_examples() {
    let lie = LieGroupSpec::so3();
    let g = lie.exp_alg(&AlgebraVector::new(0.1, 0.2, 0.3));
    let pg = AlgebraVector::new(0.4, -0.5, 0.6);
    let (same, dt) = eg_step(&lie, &g, &pg, 0.7, 0.0, 1.0);
    assert_eq!(same.0, g.0);
    assert_eq!(dt, 0.0);
    let (a, _) = eg_step(&lie, &g, &AlgebraVector::unit(0), 0.0, 0.3, 1.0);
    assert!((a.0 - (g * lie.exp_alg(&AlgebraVector::new(-0.3, 0.0, 0.0))).0).amax() < 1e-15);
    let (one, _) = eg_step(&lie, &g, &pg, 0.0, 0.2, 1.0);
    let (two, _) = eg_step(&lie, &one, &pg, 0.0, 0.5, 1.0);
    let (direct, dt) = eg_step(&lie, &g, &pg, 2.0, 0.7, 0.5);
    assert!((two.0 - direct.0).amax() < 1e-14);
    assert!((dt + 0.7).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn multiplier_roots_satisfy_continuity(
        l in (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64),
        n in (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64),
    ) {
        let lie = LieGroupSpec::so3();
        let p1 = PhaseSpec::quadratic("a", vec![0, 1]).unwrap();
        let p2 = PhaseSpec::quadratic("b", vec![0, 2]).unwrap();
        let lambda = CoVector::new(l.0, l.1, l.2);
        let nu = AlgebraVector::new(n.0, n.1, n.2);
        prop_assume!(nu.norm() > 1e-3);
        let h = |phase: &PhaseSpec, l: &CoVector| {
            let u = minimize_hamiltonian(phase, l).unwrap();
            hamiltonian(phase, l, &u).unwrap()
        };
        if let Ok(sol) = solve_mu(&lie, &p1, &p2, &lambda, &nu, 1e3) {
            for mu in sol.roots {
                let pre = lambda + lie.metric_lower(&nu) * mu;
                prop_assert!((h(&p1, &pre) - h(&p2, &lambda)).abs() <= 1e-10);
            }
        }
    }
}
