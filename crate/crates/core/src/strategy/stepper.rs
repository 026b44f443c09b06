use std::fmt::Debug;
use std::sync::Arc;

use serde_json::Value;

use crate::error::Result;
use crate::lie::{AlgebraVector, GroupElement, LieGroupSpec};

/// One step of `ġ = g·ξ(t)` on the group.
///
/// `stages` are the body velocities at the classic Runge-Kutta stage
/// nodes `t, t+h/2, t+h/2, t+h`. For a velocity that depends only on time
/// the middle two coincide; for extremals they are the Runge-Kutta stage
/// values of the costate.
pub trait PhaseStepper: Debug + Send + Sync {
    fn name(&self) -> &str;
    fn order(&self) -> u32;
    fn step(
        &self,
        lie: &LieGroupSpec,
        g: &GroupElement,
        stages: &[AlgebraVector; 4],
        h: f64,
    ) -> GroupElement;
}

/// Fourth-order commutator-free method: two exponentials per step.
#[derive(Debug, Clone, Copy, Default)]
pub struct CommutatorFree4;

impl PhaseStepper for CommutatorFree4 {
    fn name(&self) -> &str {
        "cf4"
    }

    fn order(&self) -> u32 {
        4
    }

    fn step(
        &self,
        lie: &LieGroupSpec,
        g: &GroupElement,
        s: &[AlgebraVector; 4],
        h: f64,
    ) -> GroupElement {
        let first = (s[0] * 0.25 + (s[1] + s[2]) * (1.0 / 6.0) - s[3] * (1.0 / 12.0)) * h;
        let second = (s[0] * (-1.0 / 12.0) + (s[1] + s[2]) * (1.0 / 6.0) + s[3] * 0.25) * h;
        *g * lie.exp_alg(&first) * lie.exp_alg(&second)
    }
}

/// Exponential midpoint rule, second order.
#[derive(Debug, Clone, Copy, Default)]
pub struct LieMidpoint;

impl PhaseStepper for LieMidpoint {
    fn name(&self) -> &str {
        "midpoint"
    }

    fn order(&self) -> u32 {
        2
    }

    fn step(
        &self,
        lie: &LieGroupSpec,
        g: &GroupElement,
        s: &[AlgebraVector; 4],
        h: f64,
    ) -> GroupElement {
        *g * lie.exp_alg(&((s[1] + s[2]) * (0.5 * h)))
    }
}

pub(super) fn cf4_from_json(_: &Value) -> Result<Arc<dyn PhaseStepper>> {
    Ok(Arc::new(CommutatorFree4))
}

pub(super) fn midpoint_from_json(_: &Value) -> Result<Arc<dyn PhaseStepper>> {
    Ok(Arc::new(LieMidpoint))
}
