use std::fmt::Debug;
use std::sync::Arc;

use serde_json::Value;

use super::{f64_array, f64_field};
use crate::error::{Error, Result};
use crate::lie::{GroupElement, LieGroupSpec};

/// Running cost `l(u)` over the active control channels of a phase.
pub trait RunningCost: Debug + Send + Sync {
    fn name(&self) -> &str;

    fn cost(&self, u: &[f64]) -> f64;

    /// Writes `argmin_u ⟨λ, u⟩ + l(u)` (subject to `bounds`) into `out`.
    fn minimize(
        &self,
        lambda_active: &[f64],
        bounds: Option<&[(f64, f64)]>,
        out: &mut [f64],
    ) -> Result<()> {
        let _ = (lambda_active, bounds, out);
        Err(Error::MissingMinimizer(self.name().to_string()))
    }

    /// True when the minimizer is `u = −λ` and the cost is `½‖u‖²`.
    fn is_unit_quadratic(&self) -> bool {
        false
    }
}

/// `½ Σ w_c u_c²`; the separable minimizer is `−λ_c / w_c`, clipped.
#[derive(Debug, Clone)]
pub struct QuadraticCost {
    pub weights: Option<Vec<f64>>,
}

impl QuadraticCost {
    pub fn unit() -> Self {
        Self { weights: None }
    }

    fn weight(&self, c: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[c])
    }
}

impl RunningCost for QuadraticCost {
    fn name(&self) -> &str {
        "quadratic_half_norm"
    }

    fn cost(&self, u: &[f64]) -> f64 {
        0.5 * u
            .iter()
            .enumerate()
            .map(|(c, x)| self.weight(c) * x * x)
            .sum::<f64>()
    }

    fn minimize(
        &self,
        lambda_active: &[f64],
        bounds: Option<&[(f64, f64)]>,
        out: &mut [f64],
    ) -> Result<()> {
        if out.len() != lambda_active.len() {
            return Err(Error::DimensionMismatch {
                expected: lambda_active.len(),
                got: out.len(),
            });
        }
        for (c, (o, l)) in out.iter_mut().zip(lambda_active).enumerate() {
            let mut u = -l / self.weight(c);
            if let Some(b) = bounds {
                u = u.clamp(b[c].0, b[c].1);
            }
            *o = u;
        }
        Ok(())
    }

    fn is_unit_quadratic(&self) -> bool {
        self.weights
            .as_ref()
            .map_or(true, |w| w.iter().all(|&x| x == 1.0))
    }
}

pub(super) fn quadratic_from_json(v: &Value) -> Result<Arc<dyn RunningCost>> {
    let weights = match v.get("weights") {
        None | Some(Value::Null) => None,
        Some(_) => {
            let w = f64_array(v, "weights", None)?;
            if w.iter().any(|&x| !(x > 0.0)) {
                return Err(Error::config("weights", "must be positive"));
            }
            Some(w)
        }
    };
    Ok(Arc::new(QuadraticCost { weights }))
}

/// Terminal cost `h(g)`.
pub trait TerminalCost: Debug + Send + Sync {
    fn name(&self) -> &str;
    fn value(&self, lie: &LieGroupSpec, g: &GroupElement) -> f64;
}

#[derive(Debug, Clone, Copy)]
pub struct ZeroTerminalCost;

impl TerminalCost for ZeroTerminalCost {
    fn name(&self) -> &str {
        "zero"
    }

    fn value(&self, _: &LieGroupSpec, _: &GroupElement) -> f64 {
        0.0
    }
}

/// `w/2 · d(g, target)²`. Saturates at the cut locus.
#[derive(Debug, Clone)]
pub struct SquaredDistanceCost {
    pub target: GroupElement,
    pub weight: f64,
}

impl TerminalCost for SquaredDistanceCost {
    fn name(&self) -> &str {
        "squared_distance"
    }

    fn value(&self, lie: &LieGroupSpec, g: &GroupElement) -> f64 {
        let d = lie
            .group_distance(&self.target, g)
            .unwrap_or(std::f64::consts::PI);
        0.5 * self.weight * d * d
    }
}

pub(super) fn zero_terminal_from_json(_: &Value) -> Result<Arc<dyn TerminalCost>> {
    Ok(Arc::new(ZeroTerminalCost))
}

pub(super) fn squared_distance_from_json(v: &Value) -> Result<Arc<dyn TerminalCost>> {
    let target = GroupElement::from_row_slice(&f64_array(v, "target", Some(9))?)?;
    let weight = if v.get("weight").is_some() {
        f64_field(v, "weight")?
    } else {
        1.0
    };
    Ok(Arc::new(SquaredDistanceCost { target, weight }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn quadratic_minimizer_clips() {
        let q = QuadraticCost::unit();
        let mut out = [0.0; 2];
        q.minimize(&[5.0, 0.0], Some(&[(-1.0, 1.0), (-1.0, 1.0)]), &mut out)
            .unwrap();
        assert_eq!(out, [-1.0, 0.0]);
        q.minimize(&[0.5, 2.0], None, &mut out).unwrap();
        assert_eq!(out, [-0.5, -2.0]);
        assert_eq!(q.cost(&[1.0, 2.0]), 2.5);
    }

    #[test]
    fn weighted_quadratic() {
        let q = quadratic_from_json(&json!({"weights": [2.0, 4.0]})).unwrap();
        let mut out = [0.0; 2];
        q.minimize(&[1.0, 1.0], None, &mut out).unwrap();
        assert_eq!(out, [-0.5, -0.25]);
        assert!(!q.is_unit_quadratic());
        assert!(quadratic_from_json(&json!({"weights": [0.0]})).is_err());
    }

    #[derive(Debug)]
    struct Abs;
    impl RunningCost for Abs {
        fn name(&self) -> &str {
            "abs"
        }
        fn cost(&self, u: &[f64]) -> f64 {
            u.iter().map(|x| x.abs()).sum()
        }
    }

    #[test]
    fn custom_cost_without_hook() {
        let mut out = [0.0];
        assert_eq!(
            Abs.minimize(&[1.0], None, &mut out),
            Err(Error::MissingMinimizer("abs".into()))
        );
    }
}
