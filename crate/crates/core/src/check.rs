//! Invariant battery shared by the `check` command and the acceptance runs.
//! Every item reports the measured quantity next to its tolerance.

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dynamics::{integrate_phase, needle_endpoint_derivative, propagate_pairing, PhaseSpec, PiecewiseConstant};
use crate::error::Result;
use crate::extremal::PhaseSolver;
use crate::hmp::{HybridProblem, ValueFunction};
use crate::lie::{AlgebraVector, CoVector, GroupElement, LieGroupSpec};
use crate::strategy::CommutatorFree4;

#[derive(Debug, Clone, Serialize)]
pub struct CheckItem {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

impl CheckItem {
    /// Passes when `measured <= tolerance` (NaN fails).
    pub fn at_most(name: &str, measured: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            measured,
            tolerance,
            passed: measured <= tolerance,
            detail: detail.into(),
        }
    }

    pub fn failed(name: &str, tolerance: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            measured: f64::NAN,
            tolerance,
            passed: false,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub passed: bool,
    pub items: Vec<CheckItem>,
}

impl CheckReport {
    pub fn new(items: Vec<CheckItem>) -> Self {
        Self {
            passed: items.iter().all(|i| i.passed),
            items,
        }
    }
}

/// Bracket table of so(3) in the standard basis.
pub fn expected_brackets() -> [[AlgebraVector; 3]; 3] {
    let z = AlgebraVector::zeros();
    let e = AlgebraVector::unit;
    [[z, e(2), -e(1)], [-e(2), z, e(0)], [e(1), -e(0), z]]
}

/// `ad_{e_i}` with columns `[e_i, e_j]`.
pub fn expected_ad(i: usize) -> Matrix3<f64> {
    match i {
        0 => Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0),
        1 => Matrix3::new(0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0),
        _ => Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0),
    }
}

pub fn algebra_tables(lie: &LieGroupSpec) -> Vec<CheckItem> {
    let table = expected_brackets();
    let mut bracket: f64 = 0.0;
    let mut commutator: f64 = 0.0;
    let mut ad: f64 = 0.0;
    for i in 0..3 {
        let ei = AlgebraVector::unit(i);
        ad = ad.max((lie.ad_matrix(&ei) - expected_ad(i)).amax());
        for (j, want) in table[i].iter().enumerate() {
            let ej = AlgebraVector::unit(j);
            bracket = bracket.max((lie.bracket(&ei, &ej) - *want).norm());
            commutator = commutator.max((lie.bracket_commutator(&ei, &ej) - *want).norm());
        }
    }
    let killing = (lie.killing_matrix() - Matrix3::from_diagonal_element(2.0)).amax();
    let (anti, jacobi) = lie.structure_defects();
    vec![
        CheckItem::at_most("bracket_table", bracket.max(commutator), 0.0, "structure constants and matrix commutators"),
        CheckItem::at_most("ad_matrices", ad, 0.0, "ad_e1, ad_e2, ad_e3"),
        CheckItem::at_most("killing_matrix", killing, 0.0, "tr(ad_x ad_y) against diag(2,2,2)"),
        CheckItem::at_most("structure_identities", anti.max(jacobi), 1e-15, "antisymmetry and Jacobi"),
    ]
}

fn random_vec(rng: &mut ChaCha8Rng, r: f64) -> AlgebraVector {
    AlgebraVector::new(rng.gen_range(-r..r), rng.gen_range(-r..r), rng.gen_range(-r..r))
}

/// Conserved costate component of a phase: the single inactive channel, if
/// there is exactly one.
fn conserved_component(phase: &PhaseSpec) -> Option<usize> {
    let inactive: Vec<usize> = (0..3).filter(|c| !phase.active_channels.contains(c)).collect();
    (inactive.len() == 1 && phase.drift.norm() == 0.0).then(|| inactive[0])
}

/// Conservation laws along random extremals of both phases on `[0, window]`.
pub fn conservation(
    solver: &PhaseSolver,
    phases: [&PhaseSpec; 2],
    count: usize,
    window: f64,
    seed: u64,
) -> Result<Vec<CheckItem>> {
    let lie = &solver.lie;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut dh, mut dn, mut orth) = (0.0_f64, 0.0_f64, 0.0_f64);
    let mut comp = [0.0_f64; 2];
    for (p, phase) in phases.iter().enumerate() {
        for _ in 0..count {
            let g0 = lie.exp_alg(&random_vec(&mut rng, 2.0));
            let l0 = CoVector(random_vec(&mut rng, 1.0).0);
            let traj = solver.integrate_extremal(phase, &g0, &l0, 0.0, window)?;
            let h = traj.hamiltonian[0];
            dh = dh.max(traj.hamiltonian_drift() / (1.0 + h.abs()));
            dn = dn.max(traj.costate_norm_drift());
            orth = orth.max(traj.max_orthogonality_defect());
            if let Some(c) = conserved_component(phase) {
                comp[p] = comp[p].max(traj.component_drift(c));
            }
        }
    }
    let mut items = vec![
        CheckItem::at_most("hamiltonian_conservation", dh, 1e-8, format!("max |dH|/(1+|H|) over {count} extremals per phase")),
        CheckItem::at_most("costate_norm_conservation", dn, 1e-8, "max drift of |lambda|"),
    ];
    for (p, phase) in phases.iter().enumerate() {
        if let Some(c) = conserved_component(phase) {
            items.push(CheckItem::at_most(
                &format!("costate_component_{}_{}", phase.id, c + 1),
                comp[p],
                1e-8,
                format!("lambda_{} is constant when e_{} carries no control", c + 1, c + 1),
            ));
        }
    }
    items.push(CheckItem::at_most("extremal_orthogonality", orth, 1e-9, "max |g g^T - I| along extremals"));
    Ok(items)
}

/// `|<lambda, w>(1) - <lambda, w>(0)|` over random transports.
pub fn pairing(solver: &PhaseSolver, count: usize, seed: u64) -> CheckItem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let l0 = CoVector(random_vec(&mut rng, 2.0).0);
        let w0 = random_vec(&mut rng, 2.0);
        let xi = random_vec(&mut rng, 2.0);
        worst = worst.max(propagate_pairing(&solver.lie, solver.law, &l0, &w0, &xi, 1.0).drift);
    }
    CheckItem::at_most("pairing_constancy", worst, 1e-10, format!("{count} random transports over unit windows"))
}

/// Needle-variation endpoint derivative against forward differences.
pub fn needle(lie: &LieGroupSpec, phases: [&PhaseSpec; 2], count: usize, eps: f64, seed: u64) -> Result<CheckItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for k in 0..count {
        let phase = phases[k % 2];
        let n = phase.n_controls();
        let full = |u: &[f64]| {
            let v = phase.embed(u);
            [v[0], v[1], v[2]]
        };
        let u0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let u1: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let t1 = rng.gen_range(0.0..1.0);
        let t = t1 + rng.gen_range(0.1..2.0);
        let g0 = lie.exp_alg(&random_vec(&mut rng, 2.0));
        let nominal = PiecewiseConstant::new(vec![0.0], vec![full(&u0)])?;
        let varied = PiecewiseConstant::new(vec![0.0, t1, t1 + eps], vec![full(&u0), full(&u1), full(&u0)])?;
        let a = integrate_phase(lie, &CommutatorFree4, phase, &g0, &nominal, 0.0, t, 1e-3)?;
        let b = integrate_phase(lie, &CommutatorFree4, phase, &g0, &varied, 0.0, t, 1e-3)?;
        let (ga, gb) = (a.g.last().expect("samples"), b.g.last().expect("samples"));
        let fd = lie.log_group(&(ga.inverse() * *gb))? * (1.0 / eps);
        let formula = needle_endpoint_derivative(lie, phase, &u0, t1, &u1, t)?;
        worst = worst.max((fd - formula).norm() / formula.norm().max(1e-12));
    }
    Ok(CheckItem::at_most(
        "needle_vs_forward_difference",
        worst,
        1e-3,
        format!("max relative error over {count} scenarios, eps = {eps:e}"),
    ))
}

/// Relative error of the costate-difference gradient
/// `(lambda_post - lambda_pre, H_pre - H_post)` against central differences
/// of the value, with no sign calibration.
pub fn gradient_error(vf: &ValueFunction<'_>, g_s: &GroupElement, t_s: f64) -> Result<f64> {
    let eval = vf.evaluate(g_s, t_s, None)?;
    let (fd, fd_t) = vf.fd_gradient(&eval)?;
    let body = eval.lambda_post() - eval.lambda_pre();
    let dt = eval.h_pre() - eval.h_post();
    let err = ((body - fd).0.norm_squared() + (dt - fd_t).powi(2)).sqrt();
    let scale = (fd.0.norm_squared() + fd_t * fd_t).sqrt().max(1e-12);
    Ok(err / scale)
}

/// Random switching data: `g_s` near `center`, `t_s` in the middle of the
/// horizon.
pub fn random_switches(problem: &HybridProblem, center: &GroupElement, count: usize, seed: u64) -> Vec<(GroupElement, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = problem.tf - problem.t0;
    (0..count)
        .map(|_| {
            let g = *center * problem.lie.exp_alg(&random_vec(&mut rng, 0.6));
            (g, problem.t0 + span * rng.gen_range(0.2..0.8))
        })
        .collect()
}

pub fn gradient(
    problem: &HybridProblem,
    solver: &PhaseSolver,
    center: &GroupElement,
    count: usize,
    seed: u64,
) -> CheckItem {
    let vf = ValueFunction::new(problem, solver);
    let mut worst: f64 = 0.0;
    for (g, t) in random_switches(problem, center, count, seed) {
        match gradient_error(&vf, &g, t) {
            Ok(e) => worst = worst.max(e),
            Err(e) => return CheckItem::failed("gradient_vs_central_difference", 1e-3, e.to_string()),
        }
    }
    CheckItem::at_most(
        "gradient_vs_central_difference",
        worst,
        1e-3,
        format!("max relative error over {count} switching choices"),
    )
}

/// Battery size for the `check` command.
#[derive(Debug, Clone, Copy)]
pub struct BatterySize {
    pub extremals: usize,
    pub window: f64,
    pub pairings: usize,
    pub needles: usize,
    pub gradients: usize,
}

impl Default for BatterySize {
    fn default() -> Self {
        Self {
            extremals: 100,
            window: 5.0,
            pairings: 100,
            needles: 50,
            gradients: 3,
        }
    }
}

/// Runs every suite against `problem` with the solver's costate law.
pub fn run_battery(problem: &HybridProblem, solver: &PhaseSolver, center: &GroupElement, size: BatterySize) -> CheckReport {
    let lie = &problem.lie;
    let phases = [&problem.phase1, &problem.phase2];
    let mut items = algebra_tables(lie);
    match conservation(solver, phases, size.extremals, size.window, 1) {
        Ok(v) => items.extend(v),
        Err(e) => items.push(CheckItem::failed("hamiltonian_conservation", 1e-8, e.to_string())),
    }
    items.push(pairing(solver, size.pairings, 2));
    match needle(lie, phases, size.needles, 1e-5, 3) {
        Ok(i) => items.push(i),
        Err(e) => items.push(CheckItem::failed("needle_vs_forward_difference", 1e-3, e.to_string())),
    }
    items.push(gradient(problem, solver, center, size.gradients, 4));
    CheckReport::new(items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extremal::CostateLaw;
    use std::sync::Arc;

    #[test]
    fn tables_pass() {
        assert!(algebra_tables(&LieGroupSpec::so3()).iter().all(|i| i.passed));
    }

    #[test]
    fn conserved_components() {
        let p = HybridProblem::satellite();
        assert_eq!(conserved_component(&p.phase1), Some(2));
        assert_eq!(conserved_component(&p.phase2), Some(1));
    }

    #[test]
    fn flipped_law_breaks_pairing() {
        let lie = Arc::new(LieGroupSpec::so3());
        let solver = PhaseSolver::new(lie, 1e-3).with_law(CostateLaw::NegCoadjoint);
        let item = pairing(&solver, 20, 2);
        assert!(!item.passed && item.measured > 1e-3);
    }
}
