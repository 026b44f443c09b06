use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::Matrix3;
use serde_json::Value;

use super::f64_array;
use crate::error::Result;
use crate::lie::GroupElement;

/// Discrete state map applied at a switching instant. Returns a raw matrix;
/// callers check that it is back on the group.
pub trait JumpMap: Debug + Send + Sync {
    fn name(&self) -> &str;
    fn apply(&self, g: &GroupElement) -> Matrix3<f64>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityJump;

impl JumpMap for IdentityJump {
    fn name(&self) -> &str {
        "identity"
    }

    fn apply(&self, g: &GroupElement) -> Matrix3<f64> {
        g.0
    }
}

/// `g ↦ a·g`.
#[derive(Debug, Clone)]
pub struct LeftTranslateJump {
    pub by: GroupElement,
}

impl JumpMap for LeftTranslateJump {
    fn name(&self) -> &str {
        "left_translate"
    }

    fn apply(&self, g: &GroupElement) -> Matrix3<f64> {
        self.by.0 * g.0
    }
}

pub struct FnJump<F>(pub F);

impl<F> Debug for FnJump<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("FnJump")
    }
}

impl<F> JumpMap for FnJump<F>
where
    F: Fn(&GroupElement) -> Matrix3<f64> + Send + Sync,
{
    fn name(&self) -> &str {
        "closure"
    }

    fn apply(&self, g: &GroupElement) -> Matrix3<f64> {
        (self.0)(g)
    }
}

pub(super) fn identity_from_json(_: &Value) -> Result<Arc<dyn JumpMap>> {
    Ok(Arc::new(IdentityJump))
}

pub(super) fn left_translate_from_json(v: &Value) -> Result<Arc<dyn JumpMap>> {
    let by = GroupElement::from_row_slice(&f64_array(v, "by", Some(9))?)?;
    Ok(Arc::new(LeftTranslateJump { by }))
}
