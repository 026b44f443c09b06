use std::sync::Arc;

use lgh_core::dynamics::{propagate_pairing, PhaseSpec};
use lgh_core::extremal::{CostateLaw, PhaseSolver};
use lgh_core::lie::{AlgebraVector, CoVector, LieGroupSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn solver() -> PhaseSolver {
    PhaseSolver::new(Arc::new(LieGroupSpec::so3()), 1e-3)
}

fn phases() -> [PhaseSpec; 2] {
    [
        PhaseSpec::quadratic("q1", vec![0, 1]).unwrap(),
        PhaseSpec::quadratic("q2", vec![0, 2]).unwrap(),
    ]
}

fn vec3(r: f64) -> impl Strategy<Value = AlgebraVector> {
    (-r..r, -r..r, -r..r).prop_map(|(a, b, c)| AlgebraVector::new(a, b, c))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn extremals_conserve(l in vec3(1.5), x in vec3(2.0), which in 0usize..2) {
        let s = solver();
        let phase = &phases()[which];
        let g0 = s.lie.exp_alg(&x);
        let traj = s.integrate_extremal(phase, &g0, &CoVector(l.0), 0.0, 3.0).unwrap();
        let h = traj.hamiltonian[0];
        prop_assert!(traj.hamiltonian_drift() <= 1e-8 * (1.0 + h.abs()));
        prop_assert!(traj.costate_norm_drift() <= 1e-8);
        prop_assert!(traj.component_drift(2 - which) <= 1e-8);
        prop_assert!(traj.max_orthogonality_defect() < 1e-9);
    }

    #[test]
    fn cost_hamiltonian_identity(l in vec3(1.5), which in 0usize..2) {
        let s = solver();
        let phase = &phases()[which];
        let traj = s.integrate_extremal(phase, &s.lie.exp_alg(&AlgebraVector::zeros()), &CoVector(l.0), 0.0, 2.0).unwrap();
        let j = s.phase_cost(phase, &traj);
        prop_assert!((j + traj.hamiltonian[0] * 2.0).abs() <= 1e-6);
    }

    #[test]
    fn hamiltonian_is_left_invariant(l in vec3(1.5), x in vec3(2.0), a in vec3(3.0)) {
        let s = solver();
        let phase = &phases()[0];
        let g0 = s.lie.exp_alg(&x);
        let shifted = s.lie.exp_alg(&a) * g0;
        let t1 = s.integrate_extremal(phase, &g0, &CoVector(l.0), 0.0, 1.0).unwrap();
        let t2 = s.integrate_extremal(phase, &shifted, &CoVector(l.0), 0.0, 1.0).unwrap();
        prop_assert_eq!(&t1.hamiltonian, &t2.hamiltonian);
    }

    #[test]
    fn pairing_is_constant(l in vec3(2.0), w in vec3(2.0), xi in vec3(2.0)) {
        let lie = LieGroupSpec::so3();
        let out = propagate_pairing(&lie, CostateLaw::Coadjoint, &CoVector(l.0), &w, &xi, 1.0);
        prop_assert!(out.drift < 1e-10);
    }
}

#[test]
fn flipped_law_still_conserves_hamiltonian() {
    let s = solver().with_law(CostateLaw::NegCoadjoint);
    let phase = &phases()[0];
    let traj = s
        .integrate_extremal(phase, &s.lie.exp_alg(&AlgebraVector::zeros()), &CoVector::new(0.3, -0.7, 0.9), 0.0, 5.0)
        .unwrap();
    assert!(traj.hamiltonian_drift() <= 1e-8 * (1.0 + traj.hamiltonian[0].abs()));
}

#[test]
fn planted_costates_are_recovered() {
    let s = solver();
    let phs = phases();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut hits = 0;
    for k in 0..100 {
        let phase = &phs[k % 2];
        let planted = CoVector::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let g0 = s.lie.exp_alg(&AlgebraVector::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let end = *s.integrate_extremal(phase, &g0, &planted, 0.0, 1.0).unwrap().g.last().unwrap();
        let guess = planted + CoVector::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1));
        if let Ok(res) = s.shoot(phase, &g0, &end, 0.0, 1.0, &guess) {
            if res.converged && (res.lambda0 - planted).norm() <= 1e-6 {
                hits += 1;
            }
        }
    }
    assert!(hits >= 95, "recovered {hits} of 100");
}
