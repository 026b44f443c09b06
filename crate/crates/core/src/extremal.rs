//! Per-phase minimum-energy boundary value problems: the coupled state and
//! costate extremal system under the minimized Hamiltonian, and shooting on
//! the initial costate.

use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{fmt_f64, PhaseSpec, STEP_ERROR_LIMIT};
use crate::error::{Error, Result};
use crate::hmp::hamiltonian;
use crate::lie::{AlgebraVector, CoVector, GroupElement, LieGroupSpec};
use crate::quadrature::simpson;
use crate::strategy::{CommutatorFree4, PhaseStepper};

/// Sign of the costate transport `λ̇ = ±ad*_ξ λ` along an extremal.
///
/// `Coadjoint` is the law that keeps `⟨λ, w⟩` constant for tangent vectors
/// `w` carried by the left-invariant flow, so costate differences are
/// gradients of the optimal cost. `NegCoadjoint` is kept for comparison;
/// both conserve the Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostateLaw {
    #[default]
    Coadjoint,
    NegCoadjoint,
}

impl CostateLaw {
    pub fn sign(self) -> f64 {
        match self {
            CostateLaw::Coadjoint => 1.0,
            CostateLaw::NegCoadjoint => -1.0,
        }
    }
}

/// Shooting tolerances and multi-start settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShootingControls {
    pub tol: f64,
    pub max_iters: usize,
    pub fd_step: f64,
    pub n_starts: usize,
    pub seed: u64,
    /// Random starts are uniform in `[−guess_range, guess_range]³`.
    pub guess_range: f64,
}

impl Default for ShootingControls {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 60,
            fd_step: 1e-6,
            n_starts: 4,
            seed: 0,
            guess_range: 3.0,
        }
    }
}

/// Sampled extremal of one phase.
#[derive(Debug, Clone, Default)]
pub struct ExtremalTrajectory {
    pub phase_id: String,
    pub h: f64,
    pub t: Vec<f64>,
    pub g: Vec<GroupElement>,
    pub lambda: Vec<CoVector>,
    /// Minimizing control in full algebra coordinates.
    pub u: Vec<[f64; 3]>,
    pub hamiltonian: Vec<f64>,
}

impl ExtremalTrajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    fn max_deviation(values: impl Iterator<Item = f64>) -> f64 {
        let mut first = None;
        let mut dev: f64 = 0.0;
        for v in values {
            let f = *first.get_or_insert(v);
            dev = dev.max((v - f).abs());
        }
        dev
    }

    pub fn hamiltonian_drift(&self) -> f64 {
        Self::max_deviation(self.hamiltonian.iter().copied())
    }

    pub fn costate_norm_drift(&self) -> f64 {
        Self::max_deviation(self.lambda.iter().map(CoVector::norm))
    }

    /// Drift of costate component `i` (zero-based).
    pub fn component_drift(&self, i: usize) -> f64 {
        Self::max_deviation(self.lambda.iter().map(|l| l[i]))
    }

    pub fn max_orthogonality_defect(&self) -> f64 {
        self.g
            .iter()
            .map(GroupElement::orthogonality_defect)
            .fold(0.0, f64::max)
    }

    /// CSV with header `t,g11..g33,lambda1..lambda3,u1..u3,H`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "t,g11,g12,g13,g21,g22,g23,g31,g32,g33,lambda1,lambda2,lambda3,u1,u2,u3,H"
        )?;
        for k in 0..self.len() {
            let mut row = vec![fmt_f64(self.t[k])];
            row.extend(self.g[k].to_row_vec().into_iter().map(fmt_f64));
            row.extend(self.lambda[k].as_array().into_iter().map(fmt_f64));
            row.extend(self.u[k].iter().copied().map(fmt_f64));
            row.push(fmt_f64(self.hamiltonian[k]));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Outcome of a single shooting run.
#[derive(Debug, Clone)]
pub struct ShootingResult {
    pub lambda0: CoVector,
    /// `log(g(tb)⁻¹ g_target)`.
    pub residual: AlgebraVector,
    pub iterations: usize,
    pub converged: bool,
    pub cost: f64,
    pub trajectory: ExtremalTrajectory,
}

/// JSON summary of a [`ShootingResult`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ShootingSummary {
    pub lambda0: [f64; 3],
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub cost: f64,
}

impl ShootingResult {
    pub fn summary(&self) -> ShootingSummary {
        ShootingSummary {
            lambda0: self.lambda0.as_array(),
            residual_norm: self.residual.norm(),
            iterations: self.iterations,
            converged: self.converged,
            cost: self.cost,
        }
    }

    pub fn final_costate(&self) -> CoVector {
        *self.trajectory.lambda.last().expect("trajectory is nonempty")
    }

    pub fn final_hamiltonian(&self) -> f64 {
        *self.trajectory.hamiltonian.last().expect("trajectory is nonempty")
    }

    pub fn initial_hamiltonian(&self) -> f64 {
        self.trajectory.hamiltonian[0]
    }
}

/// One start of a multi-start run.
#[derive(Debug, Clone, Serialize)]
pub struct BranchSummary {
    pub start: usize,
    pub guess: [f64; 3],
    pub converged: bool,
    pub lambda0: Option<[f64; 3]>,
    pub cost: Option<f64>,
    pub residual_norm: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct MultiStartOutcome {
    pub best: ShootingResult,
    pub best_start: usize,
    pub branches: Vec<BranchSummary>,
}

/// Integrator and shooting driver for phase extremals.
#[derive(Debug, Clone)]
pub struct PhaseSolver {
    pub lie: Arc<LieGroupSpec>,
    pub stepper: Arc<dyn PhaseStepper>,
    pub law: CostateLaw,
    /// Nominal integration step.
    pub h: f64,
    pub controls: ShootingControls,
}

impl PhaseSolver {
    pub fn new(lie: Arc<LieGroupSpec>, h: f64) -> Self {
        Self {
            lie,
            stepper: Arc::new(CommutatorFree4),
            law: CostateLaw::Coadjoint,
            h,
            controls: ShootingControls::default(),
        }
    }

    pub fn with_law(mut self, law: CostateLaw) -> Self {
        self.law = law;
        self
    }

    pub fn with_controls(mut self, controls: ShootingControls) -> Self {
        self.controls = controls;
        self
    }

    pub fn with_stepper(mut self, stepper: Arc<dyn PhaseStepper>) -> Self {
        self.stepper = stepper;
        self
    }

    /// Minimizing control (active channels), body velocity and costate rate.
    pub fn extremal_rhs(
        &self,
        phase: &PhaseSpec,
        lambda: &CoVector,
    ) -> Result<(Vec<f64>, AlgebraVector, CoVector)> {
        let la = phase.restrict(&lambda.as_array());
        let mut u = vec![0.0; la.len()];
        phase.running_cost.minimize(&la, phase.bounds(), &mut u)?;
        let xi = phase.velocity(&u);
        let rate = self.lie.ad_star_apply(&xi, lambda) * self.law.sign();
        Ok((u, xi, rate))
    }

    /// Allocation-free form of [`Self::extremal_rhs`] used by the integrator.
    fn velocity_and_rate(&self, phase: &PhaseSpec, lambda: &CoVector) -> Result<(AlgebraVector, CoVector)> {
        let n = phase.n_controls();
        let (mut la, mut u) = ([0.0; 3], [0.0; 3]);
        for (slot, &c) in la.iter_mut().zip(&phase.active_channels) {
            *slot = lambda[c];
        }
        phase.running_cost.minimize(&la[..n], phase.bounds(), &mut u[..n])?;
        let xi = phase.velocity(&u[..n]);
        let rate = self.lie.ad_star_apply(&xi, lambda) * self.law.sign();
        Ok((xi, rate))
    }

    fn steps(&self, ta: f64, tb: f64) -> Result<(usize, f64)> {
        if !(tb > ta) {
            return Err(Error::config("window", format!("need tb > ta (got {ta}, {tb})")));
        }
        if !(self.h > 0.0) || self.h > tb - ta {
            return Err(Error::config("h", format!("need 0 < h <= tb - ta (h {})", self.h)));
        }
        let n = 2 * (((tb - ta) / (2.0 * self.h)) - 1e-9).ceil().max(1.0) as usize;
        Ok((n, (tb - ta) / n as f64))
    }

    /// One order-four step: classic Runge-Kutta on the costate, group
    /// stepping with the stage velocities.
    fn step(
        &self,
        phase: &PhaseSpec,
        g: &GroupElement,
        lambda: &CoVector,
        h: f64,
    ) -> Result<(GroupElement, CoVector)> {
        let (x1, k1) = self.velocity_and_rate(phase, lambda)?;
        let (x2, k2) = self.velocity_and_rate(phase, &(*lambda + k1 * (0.5 * h)))?;
        let (x3, k3) = self.velocity_and_rate(phase, &(*lambda + k2 * (0.5 * h)))?;
        let (x4, k4) = self.velocity_and_rate(phase, &(*lambda + k3 * h))?;
        let g_next = self.stepper.step(&self.lie, g, &[x1, x2, x3, x4], h);
        let l_next = *lambda + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
        Ok((g_next, l_next))
    }

    fn integrate<F>(
        &self,
        phase: &PhaseSpec,
        g0: &GroupElement,
        lambda0: &CoVector,
        ta: f64,
        tb: f64,
        mut sink: F,
    ) -> Result<(GroupElement, CoVector)>
    where
        F: FnMut(usize, f64, &GroupElement, &CoVector) -> Result<()>,
    {
        let (n, step) = self.steps(ta, tb)?;
        let (mut g, mut lambda) = (*g0, *lambda0);
        sink(0, ta, &g, &lambda)?;
        for k in 0..n {
            let (g_next, l_next) = self.step(phase, &g, &lambda, step)?;
            if k % 256 == 0 {
                let (gh, lh) = self.step(phase, &g, &lambda, 0.5 * step)?;
                let (gh, lh) = self.step(phase, &gh, &lh, 0.5 * step)?;
                let estimate = (gh.0 - g_next.0).amax().max((lh - l_next).0.amax());
                if estimate > STEP_ERROR_LIMIT {
                    return Err(Error::StepTooLarge {
                        t: ta + k as f64 * step,
                        estimate,
                        limit: STEP_ERROR_LIMIT,
                    });
                }
            }
            g = g_next;
            lambda = l_next;
            let t = if k + 1 == n { tb } else { ta + (k + 1) as f64 * step };
            sink(k + 1, t, &g, &lambda)?;
        }
        Ok((g, lambda))
    }

    /// Integrates the extremal from `(g0, λ0)` over `[ta, tb]`, recording the
    /// state, costate, minimizing control and Hamiltonian.
    pub fn integrate_extremal(
        &self,
        phase: &PhaseSpec,
        g0: &GroupElement,
        lambda0: &CoVector,
        ta: f64,
        tb: f64,
    ) -> Result<ExtremalTrajectory> {
        let (n, step) = self.steps(ta, tb)?;
        let mut traj = ExtremalTrajectory {
            phase_id: phase.id.clone(),
            h: step,
            ..Default::default()
        };
        traj.t.reserve(n + 1);
        self.integrate(phase, g0, lambda0, ta, tb, |_, t, g, l| {
            let (u, _, _) = self.extremal_rhs(phase, l)?;
            traj.t.push(t);
            traj.g.push(*g);
            traj.lambda.push(*l);
            traj.hamiltonian.push(hamiltonian(phase, l, &u)?);
            let mut full = [0.0; 3];
            for (&c, x) in phase.active_channels.iter().zip(&u) {
                full[c] = *x;
            }
            traj.u.push(full);
            Ok(())
        })?;
        Ok(traj)
    }

    fn endpoint(
        &self,
        phase: &PhaseSpec,
        g0: &GroupElement,
        lambda0: &CoVector,
        ta: f64,
        tb: f64,
    ) -> Result<GroupElement> {
        Ok(self.integrate(phase, g0, lambda0, ta, tb, |_, _, _, _| Ok(()))?.0)
    }

    fn residual(
        &self,
        phase: &PhaseSpec,
        g_start: &GroupElement,
        g_target: &GroupElement,
        lambda0: &CoVector,
        ta: f64,
        tb: f64,
    ) -> Result<AlgebraVector> {
        let end = self.endpoint(phase, g_start, lambda0, ta, tb)?;
        self.lie.log_group(&(end.inverse() * *g_target))
    }

    /// Cost of an extremal by Simpson quadrature of the running cost.
    pub fn phase_cost(&self, phase: &PhaseSpec, traj: &ExtremalTrajectory) -> f64 {
        let l: Vec<f64> = traj.u.iter().map(|u| phase.running_cost_full(u)).collect();
        simpson(&traj.t, &l)
    }

    /// Costate whose minimizing control reproduces the constant body
    /// velocity `log(g_start⁻¹ g_target) / T` on the active channels.
    pub fn initial_guess(
        &self,
        phase: &PhaseSpec,
        g_start: &GroupElement,
        g_target: &GroupElement,
        ta: f64,
        tb: f64,
    ) -> CoVector {
        let x = match self.lie.log_group(&(g_start.inverse() * *g_target)) {
            Ok(x) => x,
            Err(_) => return CoVector::zeros(),
        };
        let v = x * (1.0 / (tb - ta)) - phase.drift;
        let mut guess = CoVector::zeros();
        for &c in &phase.active_channels {
            guess[c] = -v[c];
        }
        guess
    }

    /// Damped Newton (Levenberg-Marquardt) on the initial costate so the
    /// extremal from `g_start` reaches `g_target` at `tb`.
    pub fn shoot(
        &self,
        phase: &PhaseSpec,
        g_start: &GroupElement,
        g_target: &GroupElement,
        ta: f64,
        tb: f64,
        guess: &CoVector,
    ) -> Result<ShootingResult> {
        let c = &self.controls;
        if !guess.0.iter().all(|x| x.is_finite()) {
            return Err(Error::config("guess", "must be finite"));
        }
        let mut lambda = *guess;
        let mut r = self.residual(phase, g_start, g_target, &lambda, ta, tb)?;
        let mut damping = 1e-8;
        let mut iterations = 0;
        while r.norm() > c.tol && iterations < c.max_iters {
            iterations += 1;
            let mut jac = nalgebra::Matrix3::zeros();
            for j in 0..3 {
                let mut lp = lambda;
                lp[j] += c.fd_step;
                let rp = self.residual(phase, g_start, g_target, &lp, ta, tb)?;
                jac.set_column(j, &((rp - r).0 / c.fd_step));
            }
            let jtj = jac.transpose() * jac;
            let jtr = jac.transpose() * r.0;
            let mut accepted = false;
            while damping <= 1e2 {
                let sys = jtj + nalgebra::Matrix3::identity() * damping;
                if let Some(delta) = sys.lu().solve(&(-jtr)) {
                    let trial = lambda + CoVector(delta);
                    if let Ok(rt) = self.residual(phase, g_start, g_target, &trial, ta, tb) {
                        if rt.norm() < r.norm() {
                            lambda = trial;
                            r = rt;
                            damping = (damping / 10.0).max(1e-8);
                            accepted = true;
                            break;
                        }
                    }
                }
                damping *= 10.0;
            }
            if !accepted {
                return Err(Error::SingularJacobian { residual: r.norm() });
            }
        }
        let trajectory = self.integrate_extremal(phase, g_start, &lambda, ta, tb)?;
        let cost = self.phase_cost(phase, &trajectory);
        Ok(ShootingResult {
            lambda0: lambda,
            residual: r,
            iterations,
            converged: r.norm() <= c.tol,
            cost,
            trajectory,
        })
    }

    /// Guesses used by [`Self::multi_start_shoot`]: the heuristic guess first,
    /// then seeded uniform draws.
    pub fn start_guesses(
        &self,
        phase: &PhaseSpec,
        g_start: &GroupElement,
        g_target: &GroupElement,
        ta: f64,
        tb: f64,
    ) -> Vec<CoVector> {
        let c = &self.controls;
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        let mut guesses = vec![self.initial_guess(phase, g_start, g_target, ta, tb)];
        for _ in 1..c.n_starts.max(1) {
            let mut v = CoVector::zeros();
            for i in 0..3 {
                v[i] = rng.gen_range(-c.guess_range..=c.guess_range);
            }
            guesses.push(v);
        }
        guesses
    }

    /// Shoots from each `(index, guess)` and keeps the converged result of
    /// least cost; ties go to smaller `‖λ₀‖`, then lower index.
    pub fn shoot_from_starts(
        &self,
        phase: &PhaseSpec,
        g_start: &GroupElement,
        g_target: &GroupElement,
        ta: f64,
        tb: f64,
        starts: &[(usize, CoVector)],
    ) -> Result<MultiStartOutcome> {
        let mut best: Option<(usize, ShootingResult)> = None;
        let mut branches = Vec::with_capacity(starts.len());
        let mut best_residual = f64::INFINITY;
        for &(index, guess) in starts {
            let outcome = self.shoot(phase, g_start, g_target, ta, tb, &guess);
            let mut branch = BranchSummary {
                start: index,
                guess: guess.as_array(),
                converged: false,
                lambda0: None,
                cost: None,
                residual_norm: None,
                error: None,
            };
            match outcome {
                Ok(res) => {
                    best_residual = best_residual.min(res.residual.norm());
                    branch.converged = res.converged;
                    branch.lambda0 = Some(res.lambda0.as_array());
                    branch.cost = Some(res.cost);
                    branch.residual_norm = Some(res.residual.norm());
                    if res.converged {
                        let better = match &best {
                            None => true,
                            Some((bi, b)) => {
                                let key = (res.cost, res.lambda0.norm(), index);
                                let cur = (b.cost, b.lambda0.norm(), *bi);
                                key.partial_cmp(&cur) == Some(std::cmp::Ordering::Less)
                            }
                        };
                        if better {
                            best = Some((index, res));
                        }
                    }
                }
                Err(e) => branch.error = Some(e.to_string()),
            }
            branches.push(branch);
        }
        branches.sort_by_key(|b| b.start);
        match best {
            Some((best_start, best)) => Ok(MultiStartOutcome {
                best,
                best_start,
                branches,
            }),
            None => Err(Error::NoConvergedStart {
                starts: starts.len(),
                best_residual,
            }),
        }
    }

    pub fn multi_start_shoot(
        &self,
        phase: &PhaseSpec,
        g_start: &GroupElement,
        g_target: &GroupElement,
        ta: f64,
        tb: f64,
    ) -> Result<MultiStartOutcome> {
        let starts: Vec<(usize, CoVector)> = self
            .start_guesses(phase, g_start, g_target, ta, tb)
            .into_iter()
            .enumerate()
            .collect();
        self.shoot_from_starts(phase, g_start, g_target, ta, tb, &starts)
    }
}
