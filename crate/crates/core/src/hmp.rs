//! Hybrid minimum principle: Hamiltonians, the costate jump at a switch, and
//! the value function over switching state and time with its gradient.

use std::sync::Arc;

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{apply_jump, surface_normal_body, PhaseSpec, SwitchingSurface};
use crate::error::{Error, Result};
use crate::extremal::{PhaseSolver, ShootingResult};
use crate::lie::{AlgebraVector, CoVector, GroupElement, LieGroupSpec, TOL_ORTH};
use crate::strategy::{IdentityJump, JumpMap, TerminalCost, ZeroTerminalCost};

/// Shooting tolerance used inside value evaluations.
pub const VALUE_TOL: f64 = 1e-11;
/// Finite-difference step for gradient calibration.
pub const FD_DELTA: f64 = 1e-5;

/// `H = ⟨λ, f(e, u)⟩ + l(u)` for a control on the active channels.
pub fn hamiltonian(phase: &PhaseSpec, lambda: &CoVector, u: &[f64]) -> Result<f64> {
    if u.len() != phase.n_controls() {
        return Err(Error::DimensionMismatch {
            expected: phase.n_controls(),
            got: u.len(),
        });
    }
    Ok(lambda.pair(&phase.velocity(u)) + phase.running_cost.cost(u))
}

fn sample_admissible(phase: &PhaseSpec, center: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    match phase.bounds() {
        Some(b) => b.iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)).collect(),
        None => {
            let r = 1.0 + center.iter().map(|x| x.abs()).fold(0.0, f64::max);
            center.iter().map(|c| c + rng.gen_range(-r..=r)).collect()
        }
    }
}

/// Pointwise minimizer of the Hamiltonian, checked against 100 sampled
/// admissible controls.
pub fn minimize_hamiltonian(phase: &PhaseSpec, lambda: &CoVector) -> Result<Vec<f64>> {
    let la = phase.restrict(&lambda.as_array());
    let mut u = vec![0.0; la.len()];
    phase.running_cost.minimize(&la, phase.bounds(), &mut u)?;
    let h_star = hamiltonian(phase, lambda, &u)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..100 {
        let v = sample_admissible(phase, &u, &mut rng);
        if h_star > hamiltonian(phase, lambda, &v)? + 1e-12 {
            return Err(Error::MissingMinimizer(format!(
                "minimizer of `{}` is beaten by a sampled control",
                phase.running_cost.name()
            )));
        }
    }
    Ok(u)
}

/// `λ_pre = λ_post + μ·I(ν, ·)`.
pub fn adjoint_jump(lie: &LieGroupSpec, lambda_post: &CoVector, mu: f64, nu: &AlgebraVector) -> CoVector {
    *lambda_post + lie.metric_lower(nu) * mu
}

/// Roots of the Hamiltonian-continuity equation in the jump multiplier.
#[derive(Debug, Clone, Serialize)]
pub struct MuSolution {
    /// Root of least magnitude.
    pub mu: f64,
    pub roots: Vec<f64>,
}

/// Solves `H₁(λ_post + μ·I(ν,·), u₁*) = H₂(λ_post, u₂*)` for `μ` in
/// `[−μ_max, μ_max]`.
pub fn solve_mu(
    lie: &LieGroupSpec,
    phase1: &PhaseSpec,
    phase2: &PhaseSpec,
    lambda_post: &CoVector,
    nu: &AlgebraVector,
    mu_max: f64,
) -> Result<MuSolution> {
    if nu.norm() == 0.0 {
        return Err(Error::NoRoot("normal vector is zero".into()));
    }
    let h_min = |phase: &PhaseSpec, l: &CoVector| -> Result<f64> {
        let la = phase.restrict(&l.as_array());
        let mut u = vec![0.0; la.len()];
        phase.running_cost.minimize(&la, phase.bounds(), &mut u)?;
        hamiltonian(phase, l, &u)
    };
    let h2 = h_min(phase2, lambda_post)?;
    let phi = |mu: f64| -> Result<f64> { Ok(h_min(phase1, &adjoint_jump(lie, lambda_post, mu, nu))? - h2) };

    let mut roots = Vec::new();
    let quadratic = phase1.running_cost.is_unit_quadratic() && phase1.bounds().is_none();
    if quadratic {
        let (fm, f0, fp) = (phi(-1.0)?, phi(0.0)?, phi(1.0)?);
        let a = 0.5 * (fp + fm) - f0;
        let b = 0.5 * (fp - fm);
        let scale = fm.abs().max(f0.abs()).max(fp.abs()).max(1.0);
        if a.abs() <= 1e-14 * scale {
            if b != 0.0 {
                roots.push(-f0 / b);
            } else if f0 == 0.0 {
                roots.push(0.0);
            }
        } else {
            let disc = b * b - 4.0 * a * f0;
            if disc >= 0.0 {
                let q = -0.5 * (b + b.signum() * disc.sqrt());
                if q == 0.0 {
                    roots.push(0.0);
                } else {
                    roots.push(q / a);
                    roots.push(f0 / q);
                }
            }
        }
        roots.retain(|r| r.abs() <= mu_max);
    } else {
        let n = 4000;
        let grid: Vec<f64> = (0..=n).map(|k| -mu_max + 2.0 * mu_max * k as f64 / n as f64).collect();
        let vals = grid.iter().map(|&m| phi(m)).collect::<Result<Vec<f64>>>()?;
        for k in 0..n {
            let (a, b, fa, fb) = (grid[k], grid[k + 1], vals[k], vals[k + 1]);
            if fa == 0.0 {
                roots.push(a);
            } else if fa.signum() != fb.signum() && fb != 0.0 {
                let (mut lo, mut hi, mut flo) = (a, b, fa);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    let fm = phi(mid)?;
                    if fm == 0.0 || hi - lo < 1e-15 * mid.abs().max(1.0) {
                        lo = mid;
                        hi = mid;
                        break;
                    }
                    if fm.signum() == flo.signum() {
                        lo = mid;
                        flo = fm;
                    } else {
                        hi = mid;
                    }
                }
                roots.push(0.5 * (lo + hi));
            }
        }
        if vals[n] == 0.0 {
            roots.push(grid[n]);
        }
    }
    roots.sort_by(|a, b| a.partial_cmp(b).expect("finite roots"));
    let mu = roots
        .iter()
        .copied()
        .min_by(|a, b| a.abs().partial_cmp(&b.abs()).expect("finite roots"))
        .ok_or_else(|| Error::NoRoot(format!("no multiplier in [-{mu_max}, {mu_max}]")))?;
    Ok(MuSolution { mu, roots })
}

/// Two-phase problem with fixed endpoints and a free switching state and time.
#[derive(Debug, Clone)]
pub struct HybridProblem {
    pub lie: Arc<LieGroupSpec>,
    pub phase1: PhaseSpec,
    pub phase2: PhaseSpec,
    pub t0: f64,
    pub tf: f64,
    pub g0: GroupElement,
    pub gf: GroupElement,
    pub surface: Option<SwitchingSurface>,
    pub jump: Arc<dyn JumpMap>,
    pub terminal_cost: Arc<dyn TerminalCost>,
}

impl HybridProblem {
    pub fn new(
        lie: Arc<LieGroupSpec>,
        phase1: PhaseSpec,
        phase2: PhaseSpec,
        (t0, tf): (f64, f64),
        g0: GroupElement,
        gf: GroupElement,
    ) -> Result<Self> {
        if !(t0 < tf) || !t0.is_finite() || !tf.is_finite() {
            return Err(Error::config("problem.t0", format!("need t0 < tf (got {t0}, {tf})")));
        }
        for (field, g) in [("problem.g0", &g0), ("problem.gf", &gf)] {
            GroupElement::try_new(g.0, TOL_ORTH).map_err(|e| Error::config(field, e.to_string()))?;
        }
        Ok(Self {
            lie,
            phase1,
            phase2,
            t0,
            tf,
            g0,
            gf,
            surface: None,
            jump: Arc::new(IdentityJump),
            terminal_cost: Arc::new(ZeroTerminalCost),
        })
    }

    pub fn with_surface(mut self, surface: SwitchingSurface) -> Self {
        self.surface = Some(surface);
        self
    }

    pub fn with_jump(mut self, jump: Arc<dyn JumpMap>) -> Self {
        self.jump = jump;
        self
    }

    pub fn with_terminal_cost(mut self, cost: Arc<dyn TerminalCost>) -> Self {
        self.terminal_cost = cost;
        self
    }

    /// Attitude manoeuvre on SO(3): channels {e₁, e₂} then {e₁, e₃}, ten
    /// time units, minimum energy.
    pub fn satellite() -> Self {
        let g0 = GroupElement(Matrix3::new(0.0, 0.0, 1.0, 0.0, -1.0, 0.0, 1.0, 0.0, 0.0));
        Self::new(
            Arc::new(LieGroupSpec::so3()),
            PhaseSpec::quadratic("q1", vec![0, 1]).expect("valid channels"),
            PhaseSpec::quadratic("q2", vec![0, 2]).expect("valid channels"),
            (0.0, 10.0),
            g0,
            GroupElement::identity(),
        )
        .expect("valid problem")
    }

    /// Pulls `g` back onto the switching surface along its normal.
    pub fn retract_to_surface(&self, g: &GroupElement) -> Result<GroupElement> {
        let Some(surface) = &self.surface else {
            return Ok(*g);
        };
        let mut cur = *g;
        for _ in 0..50 {
            let level = surface.level.level(&cur);
            if level.abs() <= surface.tol_zero {
                return Ok(cur);
            }
            let p = surface.body_differential(&self.lie, &cur);
            let nu = self.lie.metric_raise(&p);
            let slope = p.pair(&nu);
            if slope.abs() < 1e-14 {
                return Err(Error::DegenerateNormal { norm: p.norm() });
            }
            cur = cur * self.lie.exp_alg(&(nu * (-level / slope)));
        }
        Err(Error::config("surface", "state could not be returned to the switching surface"))
    }
}

/// Initial switching data of the satellite manoeuvre.
pub fn satellite_initial_switch() -> (GroupElement, f64) {
    (GroupElement(Matrix3::new(0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 1.0)), 5.8)
}

/// Published converged switching time of the satellite manoeuvre.
pub const SATELLITE_REFERENCE_TS: f64 = 5.9733;

/// Published converged switching state of the satellite manoeuvre.
pub fn satellite_reference_gs() -> Matrix3<f64> {
    Matrix3::new(
        0.3039, 0.9574, -0.1194, //
        -0.3688, 0.1508, -0.9165, //
        -0.8604, 0.3156, 0.3988,
    )
}

/// Both phase solves for one switching choice.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub g_s: GroupElement,
    pub t_s: f64,
    pub v: f64,
    pub phase1: ShootingResult,
    pub phase2: ShootingResult,
}

impl Evaluation {
    pub fn lambda_pre(&self) -> CoVector {
        self.phase1.final_costate()
    }

    pub fn lambda_post(&self) -> CoVector {
        self.phase2.lambda0
    }

    pub fn h_pre(&self) -> f64 {
        self.phase1.final_hamiltonian()
    }

    pub fn h_post(&self) -> f64 {
        self.phase2.initial_hamiltonian()
    }

    /// Initial costates for warm-starting nearby evaluations.
    pub fn warm(&self) -> [CoVector; 2] {
        [self.phase1.lambda0, self.phase2.lambda0]
    }
}

/// Sign choices fixed by comparing costate formulas with finite differences.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Calibration {
    pub sign_g: f64,
    pub sign_t: f64,
    pub fd_dv_body: [f64; 3],
    pub fd_dv_dts: f64,
    pub formula_dv_body: [f64; 3],
    pub formula_dv_dts: f64,
    pub angle_deg: f64,
    pub magnitude_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct ValueGradient {
    pub v: f64,
    /// Body-frame differential of `v` in `g_s`.
    pub dv_body: CoVector,
    /// Metric gradient `I⁻¹ dv_body`.
    pub grad_body: AlgebraVector,
    pub dv_dts: f64,
    pub lambda_pre: CoVector,
    pub lambda_post: CoVector,
    pub h_pre: f64,
    pub h_post: f64,
    pub evaluation: Evaluation,
}

#[derive(Debug, Clone, Serialize)]
pub struct HmpResiduals {
    pub hamiltonian_gap: f64,
    pub minimization_gap: f64,
    /// `None` when the problem has no switching surface.
    pub jump_alignment: Option<f64>,
    /// Multiplier `μ` from Hamiltonian continuity, when a surface is present
    /// and a root exists.
    pub jump_multiplier: Option<f64>,
}

/// Value `v(g_s, t_s) = J₁ + J₂ + h(g(t_f))` realized by two shooting solves.
#[derive(Debug, Clone)]
pub struct ValueFunction<'a> {
    pub problem: &'a HybridProblem,
    pub solver: PhaseSolver,
    pub fd_delta: f64,
    /// Search bound for the jump multiplier.
    pub mu_max: f64,
    calibration: Option<Calibration>,
}

impl<'a> ValueFunction<'a> {
    pub fn new(problem: &'a HybridProblem, solver: &PhaseSolver) -> Self {
        let mut solver = solver.clone();
        solver.controls.tol = solver.controls.tol.min(VALUE_TOL);
        Self {
            problem,
            solver,
            fd_delta: FD_DELTA,
            mu_max: 1e3,
            calibration: None,
        }
    }

    pub fn calibration(&self) -> Option<&Calibration> {
        self.calibration.as_ref()
    }

    pub fn set_calibration(&mut self, calibration: Calibration) {
        self.calibration = Some(calibration);
    }

    fn solve_phase(
        &self,
        phase: &PhaseSpec,
        ga: &GroupElement,
        gb: &GroupElement,
        ta: f64,
        tb: f64,
        warm: Option<CoVector>,
    ) -> Result<ShootingResult> {
        if let Some(w) = warm {
            if let Ok(res) = self.solver.shoot(phase, ga, gb, ta, tb, &w) {
                if res.converged {
                    return Ok(res);
                }
            }
        }
        Ok(self.solver.multi_start_shoot(phase, ga, gb, ta, tb)?.best)
    }

    pub fn evaluate(&self, g_s: &GroupElement, t_s: f64, warm: Option<[CoVector; 2]>) -> Result<Evaluation> {
        let p = self.problem;
        if !(p.t0 < t_s && t_s < p.tf) {
            return Err(Error::config("t_s", format!("must lie in ({}, {}), got {t_s}", p.t0, p.tf)));
        }
        let g_post = apply_jump(p.jump.as_ref(), g_s)?;
        let (r1, r2) = std::thread::scope(|s| {
            let h1 = s.spawn(|| self.solve_phase(&p.phase1, &p.g0, g_s, p.t0, t_s, warm.map(|w| w[0])));
            let r2 = self.solve_phase(&p.phase2, &g_post, &p.gf, t_s, p.tf, warm.map(|w| w[1]));
            (h1.join().expect("phase solve panicked"), r2)
        });
        let (phase1, phase2) = (r1?, r2?);
        let end = phase2.trajectory.g.last().expect("nonempty trajectory");
        let v = phase1.cost + phase2.cost + p.terminal_cost.value(&p.lie, end);
        Ok(Evaluation {
            g_s: *g_s,
            t_s,
            v,
            phase1,
            phase2,
        })
    }

    /// Central differences of `v` along `g_s·exp(±δ e_i)` and `t_s ± δ`.
    pub fn fd_gradient(&self, eval: &Evaluation) -> Result<(CoVector, f64)> {
        let d = self.fd_delta;
        let lie = &self.problem.lie;
        let warm = Some(eval.warm());
        let mut dv = CoVector::zeros();
        for i in 0..3 {
            let step = AlgebraVector::unit(i) * d;
            let plus = self.evaluate(&(eval.g_s * lie.exp_alg(&step)), eval.t_s, warm)?.v;
            let minus = self.evaluate(&(eval.g_s * lie.exp_alg(&-step)), eval.t_s, warm)?.v;
            dv[i] = (plus - minus) / (2.0 * d);
        }
        let plus = self.evaluate(&eval.g_s, eval.t_s + d, warm)?.v;
        let minus = self.evaluate(&eval.g_s, eval.t_s - d, warm)?.v;
        Ok((dv, (plus - minus) / (2.0 * d)))
    }

    /// Fixes the gradient signs from finite differences at `eval`.
    pub fn calibrate(&mut self, eval: &Evaluation) -> Result<Calibration> {
        let (fd, fd_t) = self.fd_gradient(eval)?;
        let formula = eval.lambda_pre() - eval.lambda_post();
        let formula_t = eval.h_pre() - eval.h_post();
        let tiny = 1e-6;

        let (sign_g, angle_deg, magnitude_ratio) = if fd.norm() < tiny && formula.norm() < tiny {
            (-1.0, 0.0, 1.0)
        } else {
            let cos = fd.0.dot(&formula.0) / (fd.norm() * formula.norm()).max(f64::MIN_POSITIVE);
            let sign = if cos >= 0.0 { 1.0 } else { -1.0 };
            let angle = (cos.abs().min(1.0)).acos().to_degrees();
            let ratio = formula.norm() / fd.norm().max(f64::MIN_POSITIVE);
            if angle > 45.0 || (ratio - 1.0).abs() > 0.1 {
                return Err(Error::GradientCalibrationFailed(format!(
                    "switching-state gradient: angle {angle:.2} deg, magnitude ratio {ratio:.4}"
                )));
            }
            (sign, angle, ratio)
        };
        let sign_t = if fd_t.abs() < tiny && formula_t.abs() < tiny {
            1.0
        } else {
            let ratio = formula_t.abs() / fd_t.abs().max(f64::MIN_POSITIVE);
            if (ratio - 1.0).abs() > 0.1 {
                return Err(Error::GradientCalibrationFailed(format!(
                    "switching-time derivative: magnitude ratio {ratio:.4}"
                )));
            }
            if fd_t * formula_t >= 0.0 {
                1.0
            } else {
                -1.0
            }
        };
        let cal = Calibration {
            sign_g,
            sign_t,
            fd_dv_body: fd.as_array(),
            fd_dv_dts: fd_t,
            formula_dv_body: formula.as_array(),
            formula_dv_dts: formula_t,
            angle_deg,
            magnitude_ratio,
        };
        self.calibration = Some(cal.clone());
        Ok(cal)
    }

    /// Gradient from an existing evaluation, calibrating on first use.
    pub fn gradient(&mut self, evaluation: Evaluation) -> Result<ValueGradient> {
        if self.calibration.is_none() {
            self.calibrate(&evaluation)?;
        }
        let cal = self.calibration.as_ref().expect("calibrated");
        let (lambda_pre, lambda_post) = (evaluation.lambda_pre(), evaluation.lambda_post());
        let (h_pre, h_post) = (evaluation.h_pre(), evaluation.h_post());
        let dv_body = (lambda_pre - lambda_post) * cal.sign_g;
        Ok(ValueGradient {
            v: evaluation.v,
            dv_body,
            grad_body: self.problem.lie.metric_raise(&dv_body),
            dv_dts: cal.sign_t * (h_pre - h_post),
            lambda_pre,
            lambda_post,
            h_pre,
            h_post,
            evaluation,
        })
    }

    pub fn value_and_gradient(
        &mut self,
        g_s: &GroupElement,
        t_s: f64,
        warm: Option<[CoVector; 2]>,
    ) -> Result<ValueGradient> {
        let evaluation = self.evaluate(g_s, t_s, warm)?;
        self.gradient(evaluation)
    }

    pub fn hmp_residuals(&self, eval: &Evaluation) -> HmpResiduals {
        let p = self.problem;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut gap: f64 = 0.0;
        for (phase, traj) in [(&p.phase1, &eval.phase1.trajectory), (&p.phase2, &eval.phase2.trajectory)] {
            let n = traj.len();
            for j in 0..50 {
                let k = j * (n - 1) / 49;
                let lambda = traj.lambda[k];
                let u_star = phase.restrict(&traj.u[k]);
                let Ok(h_star) = hamiltonian(phase, &lambda, &u_star) else {
                    continue;
                };
                for _ in 0..100 {
                    let u = sample_admissible(phase, &u_star, &mut rng);
                    if let Ok(h) = hamiltonian(phase, &lambda, &u) {
                        gap = gap.max(h_star - h);
                    }
                }
            }
        }
        let nu = p.surface.as_ref().and_then(|s| surface_normal_body(&p.lie, s, &eval.g_s).ok());
        let jump_alignment = nu.map(|nu| {
            let n = p.lie.metric_lower(&nu);
            let d = eval.lambda_pre() - eval.lambda_post();
            (d - n * (n.pair(&AlgebraVector(d.0)) / n.0.norm_squared())).norm()
        });
        let jump_multiplier = nu.and_then(|nu| {
            solve_mu(&p.lie, &p.phase1, &p.phase2, &eval.lambda_post(), &nu, self.mu_max)
                .ok()
                .map(|m| m.mu)
        });
        HmpResiduals {
            hamiltonian_gap: (eval.h_pre() - eval.h_post()).abs(),
            minimization_gap: gap.max(0.0),
            jump_alignment,
            jump_multiplier,
        }
    }
}
