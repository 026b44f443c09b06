use std::fmt::Debug;
use std::sync::Arc;

use serde_json::Value;

use super::{f64_array, f64_field};
use crate::error::{Error, Result};
use crate::lie::{CoVector, GroupElement, LieGroupSpec};

/// Scalar level function `n(g)` whose zero set is a switching surface.
pub trait LevelFunction: Debug + Send + Sync {
    fn name(&self) -> &str;

    fn level(&self, g: &GroupElement) -> f64;

    /// Analytic body differential `p_i = d/ds n(g·exp(s e_i))|₀`, if known.
    fn body_differential(&self, _lie: &LieGroupSpec, _g: &GroupElement) -> Option<CoVector> {
        None
    }
}

/// `g[row][col] − offset` (zero-based indices).
#[derive(Debug, Clone)]
pub struct MatrixEntryLevel {
    pub row: usize,
    pub col: usize,
    pub offset: f64,
}

impl LevelFunction for MatrixEntryLevel {
    fn name(&self) -> &str {
        "matrix_entry"
    }

    fn level(&self, g: &GroupElement) -> f64 {
        g.0[(self.row, self.col)] - self.offset
    }

    fn body_differential(&self, lie: &LieGroupSpec, g: &GroupElement) -> Option<CoVector> {
        let mut p = CoVector::zeros();
        for i in 0..3 {
            p[i] = (g.0 * lie.basis(i))[(self.row, self.col)];
        }
        Some(p)
    }
}

/// `Σ c_ij g_ij − offset`.
#[derive(Debug, Clone)]
pub struct AffineLevel {
    pub coeffs: nalgebra::Matrix3<f64>,
    pub offset: f64,
}

impl LevelFunction for AffineLevel {
    fn name(&self) -> &str {
        "affine"
    }

    fn level(&self, g: &GroupElement) -> f64 {
        self.coeffs.dot(&g.0) - self.offset
    }

    fn body_differential(&self, lie: &LieGroupSpec, g: &GroupElement) -> Option<CoVector> {
        let mut p = CoVector::zeros();
        for i in 0..3 {
            p[i] = self.coeffs.dot(&(g.0 * lie.basis(i)));
        }
        Some(p)
    }
}

/// Wraps a closure; differentials fall back to directional differences.
pub struct FnLevel<F>(pub F);

impl<F> Debug for FnLevel<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("FnLevel")
    }
}

impl<F> LevelFunction for FnLevel<F>
where
    F: Fn(&GroupElement) -> f64 + Send + Sync,
{
    fn name(&self) -> &str {
        "closure"
    }

    fn level(&self, g: &GroupElement) -> f64 {
        (self.0)(g)
    }
}

fn index_field(v: &Value, field: &str) -> Result<usize> {
    let i = v
        .get(field)
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::config(field, "expected an integer in 1..=3"))?;
    if !(1..=3).contains(&i) {
        return Err(Error::config(field, "expected an integer in 1..=3"));
    }
    Ok(i as usize - 1)
}

/// `{"kind":"matrix_entry","row":3,"col":3,"offset":0.5}` with 1-based indices.
pub(super) fn matrix_entry_from_json(v: &Value) -> Result<Arc<dyn LevelFunction>> {
    Ok(Arc::new(MatrixEntryLevel {
        row: index_field(v, "row")?,
        col: index_field(v, "col")?,
        offset: if v.get("offset").is_some() {
            f64_field(v, "offset")?
        } else {
            0.0
        },
    }))
}

pub(super) fn affine_from_json(v: &Value) -> Result<Arc<dyn LevelFunction>> {
    let c = f64_array(v, "coeffs", Some(9))?;
    Ok(Arc::new(AffineLevel {
        coeffs: nalgebra::Matrix3::from_row_slice(&c),
        offset: if v.get("offset").is_some() {
            f64_field(v, "offset")?
        } else {
            0.0
        },
    }))
}
