//! Interchangeable pieces of a hybrid problem, each behind a trait object and
//! registered by name so configurations can select them at runtime.
//!
//! A configuration entry is a JSON object whose `kind` field names the
//! strategy; the remaining fields are handed to its factory.

mod cost;
mod jump;
mod stepper;
mod surface;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::Value;

use crate::error::{Error, Result};

pub use cost::{QuadraticCost, RunningCost, SquaredDistanceCost, TerminalCost, ZeroTerminalCost};
pub use jump::{FnJump, IdentityJump, JumpMap, LeftTranslateJump};
pub use stepper::{CommutatorFree4, LieMidpoint, PhaseStepper};
pub use surface::{AffineLevel, FnLevel, LevelFunction, MatrixEntryLevel};

/// Builds a strategy from its JSON description.
pub type Factory<T> = fn(&Value) -> Result<Arc<T>>;

/// Name → factory table for one strategy family.
pub struct Registry<T: ?Sized> {
    kind: &'static str,
    factories: BTreeMap<String, Factory<T>>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            factories: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &str, factory: Factory<T>) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn build(&self, name: &str, params: &Value) -> Result<Arc<T>> {
        let factory = self.factories.get(name).ok_or_else(|| Error::UnknownStrategy {
            kind: self.kind,
            name: name.to_string(),
        })?;
        factory(params)
    }

    /// Builds from an object with a `kind` field.
    pub fn build_tagged(&self, value: &Value) -> Result<Arc<T>> {
        let name = value
            .get("kind")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::config(self.kind, "missing string field `kind`"))?;
        self.build(name, value)
    }
}

/// All built-in strategy families.
pub struct Registries {
    pub running_costs: Registry<dyn RunningCost>,
    pub terminal_costs: Registry<dyn TerminalCost>,
    pub levels: Registry<dyn LevelFunction>,
    pub jumps: Registry<dyn JumpMap>,
    pub steppers: Registry<dyn PhaseStepper>,
}

impl Registries {
    pub fn builtin() -> Self {
        let mut running_costs = Registry::new("running cost");
        running_costs.register("quadratic_half_norm", cost::quadratic_from_json);

        let mut terminal_costs = Registry::new("terminal cost");
        terminal_costs.register("zero", cost::zero_terminal_from_json);
        terminal_costs.register("squared_distance", cost::squared_distance_from_json);

        let mut levels = Registry::new("level function");
        levels.register("matrix_entry", surface::matrix_entry_from_json);
        levels.register("affine", surface::affine_from_json);

        let mut jumps = Registry::new("jump map");
        jumps.register("identity", jump::identity_from_json);
        jumps.register("left_translate", jump::left_translate_from_json);

        let mut steppers = Registry::new("phase stepper");
        steppers.register("cf4", stepper::cf4_from_json);
        steppers.register("midpoint", stepper::midpoint_from_json);

        Self {
            running_costs,
            terminal_costs,
            levels,
            jumps,
            steppers,
        }
    }
}

pub(crate) fn f64_field(value: &Value, field: &str) -> Result<f64> {
    value
        .get(field)
        .and_then(Value::as_f64)
        .ok_or_else(|| Error::config(field, "expected a number"))
}

pub(crate) fn f64_array(value: &Value, field: &str, len: Option<usize>) -> Result<Vec<f64>> {
    let arr = value
        .get(field)
        .and_then(Value::as_array)
        .ok_or_else(|| Error::config(field, "expected an array of numbers"))?;
    let out: Option<Vec<f64>> = arr.iter().map(Value::as_f64).collect();
    let out = out.ok_or_else(|| Error::config(field, "expected an array of numbers"))?;
    if let Some(n) = len {
        if out.len() != n {
            return Err(Error::config(field, format!("expected {n} numbers, got {}", out.len())));
        }
    }
    Ok(out)
}
