use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lie::{AlgebraVector, CoVector, GroupElement, LieGroupSpec, TOL_ORTH};
use crate::strategy::{JumpMap, LevelFunction};

use super::PhaseTrajectory;

/// How body differentials of the level function are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradMode {
    /// Use the level function's analytic differential when it has one.
    #[default]
    Analytic,
    /// Always use central differences along basis exponentials.
    DirectionalDifference,
}

/// Codimension-one switching surface `{ g : n(g) = 0 }`.
#[derive(Debug, Clone)]
pub struct SwitchingSurface {
    pub level: Arc<dyn LevelFunction>,
    pub grad_mode: GradMode,
    pub tol_zero: f64,
    pub eps_trans: f64,
    pub fd_step: f64,
}

impl SwitchingSurface {
    pub fn new(level: Arc<dyn LevelFunction>) -> Self {
        Self {
            level,
            grad_mode: GradMode::Analytic,
            tol_zero: 1e-10,
            eps_trans: 1e-8,
            fd_step: 1e-6,
        }
    }

    pub fn with_grad_mode(mut self, mode: GradMode) -> Self {
        self.grad_mode = mode;
        self
    }

    /// `p_i = d/ds n(g·exp(s e_i))|₀`.
    pub fn body_differential(&self, lie: &LieGroupSpec, g: &GroupElement) -> CoVector {
        if self.grad_mode == GradMode::Analytic {
            if let Some(p) = self.level.body_differential(lie, g) {
                return p;
            }
        }
        let mut p = CoVector::zeros();
        for i in 0..3 {
            p[i] = self.directional(lie, g, &AlgebraVector::unit(i));
        }
        p
    }

    fn directional(&self, lie: &LieGroupSpec, g: &GroupElement, x: &AlgebraVector) -> f64 {
        let s = self.fd_step;
        let plus = self.level.level(&(*g * lie.exp_alg(&(*x * s))));
        let minus = self.level.level(&(*g * lie.exp_alg(&(*x * -s))));
        (plus - minus) / (2.0 * s)
    }
}

/// `d/ds n(g·exp(s X))|₀`.
pub fn transversality(
    lie: &LieGroupSpec,
    surface: &SwitchingSurface,
    g: &GroupElement,
    x_body: &AlgebraVector,
) -> f64 {
    if surface.grad_mode == GradMode::Analytic {
        if let Some(p) = surface.level.body_differential(lie, g) {
            return p.pair(x_body);
        }
    }
    surface.directional(lie, g, x_body)
}

/// Body-frame metric normal `ν` with `I(ν, ·) = dn` in body coordinates.
pub fn surface_normal_body(
    lie: &LieGroupSpec,
    surface: &SwitchingSurface,
    g: &GroupElement,
) -> Result<AlgebraVector> {
    let level = surface.level.level(g);
    if level.abs() > surface.tol_zero * 10.0 {
        return Err(Error::config(
            "surface",
            format!("state is off the surface (level {level:.3e})"),
        ));
    }
    let p = surface.body_differential(lie, g);
    if p.norm() < 1e-10 {
        return Err(Error::DegenerateNormal { norm: p.norm() });
    }
    Ok(lie.metric_raise(&p))
}

/// A located crossing.
#[derive(Debug, Clone, Copy)]
pub struct SwitchEvent {
    pub t: f64,
    pub g_pre: GroupElement,
    pub g_post: GroupElement,
    pub transversality: f64,
    pub level: f64,
}

/// Finds the first transversal crossing of `surface` along sampled states.
///
/// Brackets are refined by bisection along the frozen-velocity exponential
/// between the bracketing samples. Tangential contact stops the scan with
/// [`Error::NonTransversal`]. The initial sample is never reported.
pub fn detect_switch(
    lie: &LieGroupSpec,
    traj: &PhaseTrajectory,
    surface: &SwitchingSurface,
) -> Result<Option<SwitchEvent>> {
    let n = traj.len();
    if n < 2 {
        return Ok(None);
    }
    let levels: Vec<f64> = traj.g.iter().map(|g| surface.level.level(g)).collect();
    let velocity = |k: usize| -> Result<AlgebraVector> {
        let dt = traj.t[k + 1] - traj.t[k];
        Ok(lie.log_group(&(traj.g[k].inverse() * traj.g[k + 1]))? * (1.0 / dt))
    };
    let event_at = |t: f64, g: GroupElement, x: &AlgebraVector| -> Result<Option<SwitchEvent>> {
        let trans = transversality(lie, surface, &g, x);
        if trans.abs() < surface.eps_trans {
            return Err(Error::NonTransversal { t, value: trans });
        }
        Ok(Some(SwitchEvent {
            t,
            g_pre: g,
            g_post: g,
            transversality: trans,
            level: surface.level.level(&g),
        }))
    };

    for k in 1..n {
        let (l0, l1) = (levels[k - 1], levels[k]);
        if l1.abs() <= surface.tol_zero {
            let x = velocity(k - 1)?;
            return event_at(traj.t[k], traj.g[k], &x);
        }
        if l0.abs() > surface.tol_zero && l0.signum() != l1.signum() {
            let x = velocity(k - 1)?;
            let (ta, ga) = (traj.t[k - 1], traj.g[k - 1]);
            let at = |s: f64| ga * lie.exp_alg(&(x * (s - ta)));
            let (mut lo, mut hi) = (ta, traj.t[k]);
            let sign_lo = l0.signum();
            while hi - lo > 1e-12 * hi.abs().max(1.0) {
                let mid = 0.5 * (lo + hi);
                let lm = surface.level.level(&at(mid));
                if lm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if lm.signum() == sign_lo {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let t = 0.5 * (lo + hi);
            return event_at(t, at(t), &x);
        }
        // Grazing contact between samples: the parabola through three
        // same-signed samples reaches zero at its vertex.
        if k + 1 < n && l0.signum() == l1.signum() && levels[k + 1].signum() == l1.signum() {
            let (f0, f1, f2) = (l0, l1, levels[k + 1]);
            if f1.abs() <= f0.abs() && f1.abs() < f2.abs() {
                let (h0, h1) = (traj.t[k] - traj.t[k - 1], traj.t[k + 1] - traj.t[k]);
                let c = ((f2 - f1) / h1 + (f0 - f1) / h0) / (h0 + h1);
                let b = (f2 - f1) / h1 - c * h1;
                if c != 0.0 {
                    let s = -b / (2.0 * c);
                    let vertex = f1 + b * s + c * s * s;
                    if vertex.signum() != f1.signum() || vertex.abs() <= surface.tol_zero {
                        let x = velocity(k)?;
                        let g = traj.g[k] * lie.exp_alg(&(x * s));
                        return Err(Error::NonTransversal {
                            t: traj.t[k] + s,
                            value: transversality(lie, surface, &g, &x),
                        });
                    }
                }
            }
        }
    }
    Ok(None)
}

/// Applies the jump and checks the result is on the group.
pub fn apply_jump(jump: &dyn JumpMap, g_pre: &GroupElement) -> Result<GroupElement> {
    let m = jump.apply(g_pre);
    GroupElement::try_new(m, TOL_ORTH).map_err(|e| match e {
        Error::OffGroup { orth, det } => Error::ResultOffGroup { orth, det },
        other => other,
    })
}
