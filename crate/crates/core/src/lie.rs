//! Matrix Lie group kernel for SO(3).
//!
//! The group is described by data: a basis of the algebra, the structure
//! constants derived from it, and an inner product on the algebra that
//! induces the left-invariant metric. The shipped instance uses the basis
//!
//! ```text
//! e1 = [[0,1,0],[-1,0,0],[0,0,0]]
//! e2 = [[0,0,0],[0,0,1],[0,-1,0]]
//! e3 = [[0,0,1],[0,0,0],[-1,0,0]]
//! ```
//!
//! so `hat(x)` places `x1` at (1,2), `x2` at (2,3) and `x3` at (1,3). This is
//! not the cross-product layout; with it `[e1,e2] = e3`, `[e1,e3] = -e2` and
//! `[e2,e3] = e1`, and the Killing inner product is `diag(2,2,2)`.
//!
//! Algebra vectors are body-frame (left-trivialized) coordinates; covectors
//! are coordinates in the dual basis, paired by the plain dot product.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default orthogonality tolerance for freshly constructed elements.
pub const TOL_ORTH: f64 = 1e-9;
/// Skewness tolerance accepted by [`LieGroupSpec::vee`].
pub const TOL_SKEW: f64 = 1e-10;
/// Rotation angles closer than this to pi are refused by the logarithm.
pub const CUT_LOCUS_MARGIN: f64 = 1e-6;
/// Below this angle exp/log switch to Taylor series.
const SMALL_ANGLE: f64 = 1e-4;

macro_rules! vector_newtype {
    ($name:ident) => {
        #[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub Vector3<f64>);

        impl $name {
            pub const fn new(x: f64, y: f64, z: f64) -> Self {
                Self(Vector3::new(x, y, z))
            }

            pub fn zeros() -> Self {
                Self(Vector3::zeros())
            }

            /// Unit coordinate vector; `i` is zero-based.
            pub fn unit(i: usize) -> Self {
                let mut v = Vector3::zeros();
                v[i] = 1.0;
                Self(v)
            }

            pub fn from_slice(s: &[f64]) -> Result<Self> {
                if s.len() != 3 {
                    return Err(Error::DimensionMismatch {
                        expected: 3,
                        got: s.len(),
                    });
                }
                Ok(Self::new(s[0], s[1], s[2]))
            }

            pub fn norm(&self) -> f64 {
                self.0.norm()
            }

            pub fn as_array(&self) -> [f64; 3] {
                [self.0[0], self.0[1], self.0[2]]
            }
        }

        impl std::ops::Index<usize> for $name {
            type Output = f64;
            fn index(&self, i: usize) -> &f64 {
                &self.0[i]
            }
        }

        impl std::ops::IndexMut<usize> for $name {
            fn index_mut(&mut self, i: usize) -> &mut f64 {
                &mut self.0[i]
            }
        }

        impl Add for $name {
            type Output = Self;
            fn add(self, rhs: Self) -> Self {
                Self(self.0 + rhs.0)
            }
        }

        impl AddAssign for $name {
            fn add_assign(&mut self, rhs: Self) {
                self.0 += rhs.0;
            }
        }

        impl Sub for $name {
            type Output = Self;
            fn sub(self, rhs: Self) -> Self {
                Self(self.0 - rhs.0)
            }
        }

        impl Neg for $name {
            type Output = Self;
            fn neg(self) -> Self {
                Self(-self.0)
            }
        }

        impl Mul<f64> for $name {
            type Output = Self;
            fn mul(self, rhs: f64) -> Self {
                Self(self.0 * rhs)
            }
        }

        impl Mul<$name> for f64 {
            type Output = $name;
            fn mul(self, rhs: $name) -> $name {
                $name(rhs.0 * self)
            }
        }
    };
}

vector_newtype!(AlgebraVector);
vector_newtype!(CoVector);

impl CoVector {
    /// The natural pairing with an algebra vector.
    pub fn pair(&self, v: &AlgebraVector) -> f64 {
        self.0.dot(&v.0)
    }
}

/// A point of the matrix group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupElement(pub Matrix3<f64>);

impl GroupElement {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Wraps a matrix after checking it lies on SO(3) within `tol`.
    pub fn try_new(m: Matrix3<f64>, tol: f64) -> Result<Self> {
        let g = Self(m);
        let (orth, det) = (g.orthogonality_defect(), m.determinant());
        if orth > tol || (det - 1.0).abs() > tol || !m.iter().all(|x| x.is_finite()) {
            return Err(Error::OffGroup { orth, det });
        }
        Ok(g)
    }

    /// Row-major construction, checked with [`TOL_ORTH`].
    pub fn from_row_slice(rows: &[f64]) -> Result<Self> {
        if rows.len() != 9 {
            return Err(Error::DimensionMismatch {
                expected: 9,
                got: rows.len(),
            });
        }
        Self::try_new(Matrix3::from_row_slice(rows), TOL_ORTH)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn to_row_vec(&self) -> Vec<f64> {
        (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .map(|(i, j)| self.0[(i, j)])
            .collect()
    }

    /// Group inverse. Elements are orthogonal, so this is the transpose.
    pub fn inverse(&self) -> Self {
        Self(self.0.transpose())
    }

    /// `max |(g gᵀ − I)_ij|`.
    pub fn orthogonality_defect(&self) -> f64 {
        (self.0 * self.0.transpose() - Matrix3::identity()).amax()
    }

    pub fn det(&self) -> f64 {
        self.0.determinant()
    }

    /// Nearest rotation in the Frobenius sense (polar factor).
    pub fn polar_project(m: &Matrix3<f64>) -> Self {
        let svd = m.svd(true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut r = u * vt;
        if r.determinant() < 0.0 {
            let mut u = u;
            u.column_mut(2).neg_mut();
            r = u * vt;
        }
        Self(r)
    }
}

impl Mul for GroupElement {
    type Output = GroupElement;
    fn mul(self, rhs: GroupElement) -> GroupElement {
        GroupElement(self.0 * rhs.0)
    }
}

impl Mul<&GroupElement> for &GroupElement {
    type Output = GroupElement;
    fn mul(self, rhs: &GroupElement) -> GroupElement {
        GroupElement(self.0 * rhs.0)
    }
}

/// JSON form of a group description. Structure constants are derived.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LieGroupDoc {
    pub dim: usize,
    pub matrix_size: usize,
    /// `dim` matrices, each 9 numbers row-major.
    pub basis: Vec<Vec<f64>>,
    pub inner_product: Vec<Vec<f64>>,
}

/// Basis, structure constants and inner product of a three-dimensional
/// matrix Lie algebra acting on 3×3 matrices.
#[derive(Debug, Clone)]
pub struct LieGroupSpec {
    basis: [Matrix3<f64>; 3],
    /// `structure[i][j][k]` is the coefficient of `e_k` in `[e_i, e_j]`.
    structure: [[[f64; 3]; 3]; 3],
    inner: Matrix3<f64>,
    inner_inv: Matrix3<f64>,
    gram_inv: Matrix3<f64>,
}

impl Default for LieGroupSpec {
    fn default() -> Self {
        Self::so3()
    }
}

impl LieGroupSpec {
    /// so(3) in the basis documented at module level, with the Killing
    /// inner product as metric.
    pub fn so3() -> Self {
        let e1 = Matrix3::new(0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let e2 = Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, -1.0, 0.0);
        let e3 = Matrix3::new(0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0);
        let mut spec = Self::with_basis([e1, e2, e3], Matrix3::identity())
            .expect("built-in so(3) basis is valid");
        let killing = spec.killing_matrix();
        spec.set_inner_product(killing)
            .expect("Killing form of so(3) is positive definite");
        spec
    }

    /// Builds a spec from a skew-symmetric basis and an SPD inner product.
    pub fn with_basis(basis: [Matrix3<f64>; 3], inner: Matrix3<f64>) -> Result<Self> {
        for (i, b) in basis.iter().enumerate() {
            if (b + b.transpose()).amax() > TOL_SKEW {
                return Err(Error::InvalidGroup(format!("basis matrix {} is not skew", i + 1)));
            }
        }
        let gram = Matrix3::from_fn(|i, j| basis[i].dot(&basis[j]));
        let gram_inv = gram
            .try_inverse()
            .ok_or_else(|| Error::InvalidGroup("basis is linearly dependent".into()))?;
        let mut spec = Self {
            basis,
            structure: [[[0.0; 3]; 3]; 3],
            inner: Matrix3::identity(),
            inner_inv: Matrix3::identity(),
            gram_inv,
        };
        for i in 0..3 {
            for j in 0..3 {
                let c = basis[i] * basis[j] - basis[j] * basis[i];
                let coords = spec.project(&c);
                if (spec.hat_raw(&coords) - c).amax() > 1e-12 {
                    return Err(Error::InvalidGroup(format!(
                        "span of the basis is not closed under [e{}, e{}]",
                        i + 1,
                        j + 1
                    )));
                }
                spec.structure[i][j] = [coords[0], coords[1], coords[2]];
            }
        }
        spec.set_inner_product(inner)?;
        Ok(spec)
    }

    fn set_inner_product(&mut self, inner: Matrix3<f64>) -> Result<()> {
        if (inner - inner.transpose()).amax() > 1e-12 {
            return Err(Error::InvalidGroup("inner product is not symmetric".into()));
        }
        if inner.cholesky().is_none() {
            return Err(Error::InvalidGroup("inner product is not positive definite".into()));
        }
        self.inner_inv = inner.try_inverse().expect("SPD matrix is invertible");
        self.inner = inner;
        Ok(())
    }

    pub fn from_doc(doc: &LieGroupDoc) -> Result<Self> {
        if doc.dim != 3 || doc.matrix_size != 3 {
            return Err(Error::InvalidGroup(format!(
                "only dim = 3 on 3x3 matrices is supported (got dim {}, matrix_size {})",
                doc.dim, doc.matrix_size
            )));
        }
        if doc.basis.len() != 3 || doc.basis.iter().any(|b| b.len() != 9) {
            return Err(Error::InvalidGroup("basis must be 3 row-major 3x3 matrices".into()));
        }
        if doc.inner_product.len() != 3 || doc.inner_product.iter().any(|r| r.len() != 3) {
            return Err(Error::InvalidGroup("inner_product must be 3x3".into()));
        }
        let basis = [0, 1, 2].map(|i| Matrix3::from_row_slice(&doc.basis[i]));
        let inner = Matrix3::from_fn(|i, j| doc.inner_product[i][j]);
        Self::with_basis(basis, inner)
    }

    pub fn to_doc(&self) -> LieGroupDoc {
        LieGroupDoc {
            dim: 3,
            matrix_size: 3,
            basis: self
                .basis
                .iter()
                .map(|b| GroupElement(*b).to_row_vec())
                .collect(),
            inner_product: (0..3)
                .map(|i| (0..3).map(|j| self.inner[(i, j)]).collect())
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        3
    }

    pub fn basis(&self, i: usize) -> &Matrix3<f64> {
        &self.basis[i]
    }

    pub fn structure_constant(&self, i: usize, j: usize, k: usize) -> f64 {
        self.structure[i][j][k]
    }

    pub fn inner_product(&self) -> &Matrix3<f64> {
        &self.inner
    }

    fn hat_raw(&self, v: &Vector3<f64>) -> Matrix3<f64> {
        self.basis[0] * v[0] + self.basis[1] * v[1] + self.basis[2] * v[2]
    }

    fn project(&self, x: &Matrix3<f64>) -> Vector3<f64> {
        let b = Vector3::from_fn(|i, _| self.basis[i].dot(x));
        self.gram_inv * b
    }

    pub fn hat(&self, v: &AlgebraVector) -> Matrix3<f64> {
        self.hat_raw(&v.0)
    }

    pub fn vee(&self, x: &Matrix3<f64>) -> Result<AlgebraVector> {
        let asym = (x + x.transpose()).amax() * 0.5;
        if asym > TOL_SKEW * x.amax().max(1.0) {
            return Err(Error::NotSkew {
                asym,
                tol: TOL_SKEW,
            });
        }
        Ok(AlgebraVector(self.project(x)))
    }

    /// Skew part projected onto the algebra; no tolerance check.
    fn vee_unchecked(&self, x: &Matrix3<f64>) -> AlgebraVector {
        AlgebraVector(self.project(&((x - x.transpose()) * 0.5)))
    }

    pub fn bracket(&self, x: &AlgebraVector, y: &AlgebraVector) -> AlgebraVector {
        AlgebraVector(self.ad_matrix(x) * y.0)
    }

    /// Commutator route to the bracket, used to cross-check the structure
    /// constants.
    pub fn bracket_commutator(&self, x: &AlgebraVector, y: &AlgebraVector) -> AlgebraVector {
        let (hx, hy) = (self.hat(x), self.hat(y));
        self.vee_unchecked(&(hx * hy - hy * hx))
    }

    /// Matrix exponential of `hat(x)` in closed form (Rodrigues).
    pub fn exp_alg(&self, x: &AlgebraVector) -> GroupElement {
        let k = self.hat(x);
        let theta2 = 0.5 * k.norm_squared();
        let theta = theta2.sqrt();
        let (a, b) = if theta < SMALL_ANGLE {
            (
                1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0,
                0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0,
            )
        } else {
            (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
        };
        GroupElement(Matrix3::identity() + k * a + k * k * b)
    }

    /// Principal logarithm. Refuses angles within [`CUT_LOCUS_MARGIN`] of pi.
    pub fn log_group(&self, g: &GroupElement) -> Result<AlgebraVector> {
        let (theta, skew) = rotation_angle(g);
        if std::f64::consts::PI - theta < CUT_LOCUS_MARGIN {
            return Err(Error::NearCutLocus {
                angle: theta,
                margin: CUT_LOCUS_MARGIN,
            });
        }
        let scale = if theta < SMALL_ANGLE {
            1.0 + theta * theta / 6.0 + 7.0 * theta.powi(4) / 360.0
        } else {
            theta / theta.sin()
        };
        Ok(AlgebraVector(self.project(&(skew * scale))))
    }

    /// Condition factor `θ / sin θ` of the logarithm at `g`.
    pub fn log_condition(&self, g: &GroupElement) -> f64 {
        let (theta, _) = rotation_angle(g);
        if theta < SMALL_ANGLE {
            1.0
        } else {
            theta / theta.sin()
        }
    }

    /// `ad_matrix(x)[k][j] = Σ_i x_i c^k_{ij}`.
    pub fn ad_matrix(&self, x: &AlgebraVector) -> Matrix3<f64> {
        Matrix3::from_fn(|k, j| (0..3).map(|i| x[i] * self.structure[i][j][k]).sum())
    }

    /// Coordinates of `λ ∘ ad_x`.
    pub fn ad_star_apply(&self, x: &AlgebraVector, p: &CoVector) -> CoVector {
        let mut out = CoVector::zeros();
        for j in 0..3 {
            let mut acc = 0.0;
            for i in 0..3 {
                if x[i] != 0.0 {
                    let c = &self.structure[i][j];
                    acc += x[i] * (c[0] * p[0] + c[1] * p[1] + c[2] * p[2]);
                }
            }
            out[j] = acc;
        }
        out
    }

    pub fn adjoint(&self, g: &GroupElement, x: &AlgebraVector) -> AlgebraVector {
        self.vee_unchecked(&(g.0 * self.hat(x) * g.0.transpose()))
    }

    /// Matrix of `Ad_g` in the basis (columns are `Ad_g e_j`).
    pub fn adjoint_matrix(&self, g: &GroupElement) -> Matrix3<f64> {
        let cols = [0, 1, 2].map(|j| self.adjoint(g, &AlgebraVector::unit(j)).0);
        Matrix3::from_columns(&cols)
    }

    /// Dual of [`Self::adjoint`]: `⟨Ad*_g λ, x⟩ = ⟨λ, Ad_g x⟩`.
    pub fn coadjoint(&self, g: &GroupElement, p: &CoVector) -> CoVector {
        CoVector(self.adjoint_matrix(g).transpose() * p.0)
    }

    pub fn killing_inner(&self, x: &AlgebraVector, y: &AlgebraVector) -> f64 {
        -(self.ad_matrix(x) * self.ad_matrix(y)).trace()
    }

    pub fn killing_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| {
            self.killing_inner(&AlgebraVector::unit(i), &AlgebraVector::unit(j))
        })
    }

    /// Metric inner product `I(x, y)`.
    pub fn inner(&self, x: &AlgebraVector, y: &AlgebraVector) -> f64 {
        x.0.dot(&(self.inner * y.0))
    }

    pub fn metric_raise(&self, p: &CoVector) -> AlgebraVector {
        AlgebraVector(self.inner_inv * p.0)
    }

    pub fn metric_lower(&self, x: &AlgebraVector) -> CoVector {
        CoVector(self.inner * x.0)
    }

    /// Body-frame coordinates of a tangent vector `v` at `g`.
    pub fn trivialize(&self, g: &GroupElement, v: &Matrix3<f64>) -> Result<AlgebraVector> {
        let body = g.inverse().0 * v;
        let asym = (body + body.transpose()).amax() * 0.5;
        if asym > 1e-8 * body.amax().max(1.0) {
            return Err(Error::NotSkew { asym, tol: 1e-8 });
        }
        Ok(self.vee_unchecked(&body))
    }

    pub fn untrivialize(&self, g: &GroupElement, x: &AlgebraVector) -> Matrix3<f64> {
        g.0 * self.hat(x)
    }

    /// `‖log(g1⁻¹ g2)‖` in algebra coordinates.
    pub fn group_distance(&self, g1: &GroupElement, g2: &GroupElement) -> Result<f64> {
        Ok(self.log_group(&(g1.inverse() * *g2))?.norm())
    }

    /// Structure-constant antisymmetry and Jacobi defects (max abs).
    pub fn structure_defects(&self) -> (f64, f64) {
        let c = &self.structure;
        let mut anti: f64 = 0.0;
        let mut jacobi: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    anti = anti.max((c[i][j][k] + c[j][i][k]).abs());
                    for m in 0..3 {
                        let s: f64 = (0..3)
                            .map(|l| {
                                c[j][k][l] * c[i][l][m]
                                    + c[k][i][l] * c[j][l][m]
                                    + c[i][j][l] * c[k][l][m]
                            })
                            .sum();
                        jacobi = jacobi.max(s.abs());
                    }
                }
            }
        }
        (anti, jacobi)
    }
}

/// Rotation angle in [0, pi] and the skew part `(R − Rᵀ)/2`.
fn rotation_angle(g: &GroupElement) -> (f64, Matrix3<f64>) {
    let skew = (g.0 - g.0.transpose()) * 0.5;
    let sin = skew.norm() / std::f64::consts::SQRT_2;
    let cos = 0.5 * (g.0.trace() - 1.0);
    (sin.atan2(cos), skew)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, scale: f64) -> Vector3<f64> {
        Vector3::from_fn(|_, _| rng.gen_range(-scale..scale))
    }

    #[test]
    fn hat_matches_basis_layout() {
        let lie = LieGroupSpec::so3();
        let e1 = lie.hat(&AlgebraVector::new(1.0, 0.0, 0.0));
        assert_eq!(e1, Matrix3::new(0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0));
        let x = lie.hat(&AlgebraVector::new(1.0, 2.0, 3.0));
        assert_eq!(x[(0, 1)], 1.0);
        assert_eq!(x[(1, 2)], 2.0);
        assert_eq!(x[(0, 2)], 3.0);
        assert_eq!(lie.hat(&AlgebraVector::zeros()), Matrix3::zeros());
        assert_eq!(lie.vee(&x).unwrap(), AlgebraVector::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn vee_rejects_symmetric_input() {
        let lie = LieGroupSpec::so3();
        let mut x = lie.hat(&AlgebraVector::new(1.0, 2.0, 3.0));
        x[(1, 0)] += 1e-6;
        assert!(matches!(lie.vee(&x), Err(Error::NotSkew { .. })));
    }

    #[test]
    fn bracket_table() {
        let lie = LieGroupSpec::so3();
        let e = |i| AlgebraVector::unit(i);
        assert_eq!(lie.bracket(&e(0), &e(1)), e(2));
        assert_eq!(lie.bracket(&e(0), &e(2)), -e(1));
        assert_eq!(lie.bracket(&e(1), &e(2)), e(0));
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(lie.bracket(&e(i), &e(j)), lie.bracket_commutator(&e(i), &e(j)));
            }
        }
        let x = AlgebraVector::new(0.3, -1.2, 2.0);
        assert_eq!(lie.bracket(&x, &x).norm(), 0.0);
        let (anti, jacobi) = lie.structure_defects();
        assert_eq!((anti, jacobi), (0.0, 0.0));
    }

    #[test]
    fn ad_matrices_and_killing() {
        let lie = LieGroupSpec::so3();
        let a1 = Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        let a2 = Matrix3::new(0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0);
        let a3 = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert_eq!(lie.ad_matrix(&AlgebraVector::unit(0)), a1);
        assert_eq!(lie.ad_matrix(&AlgebraVector::unit(1)), a2);
        assert_eq!(lie.ad_matrix(&AlgebraVector::unit(2)), a3);
        assert_eq!(lie.killing_matrix(), Matrix3::from_diagonal_element(2.0));
        assert_eq!(*lie.inner_product(), Matrix3::from_diagonal_element(2.0));
    }

    #[test]
    fn killing_is_invariant() {
        let lie = LieGroupSpec::so3();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x = AlgebraVector(rand_vec(&mut rng, 2.0));
            let y = AlgebraVector(rand_vec(&mut rng, 2.0));
            let z = AlgebraVector(rand_vec(&mut rng, 2.0));
            assert!(lie.killing_inner(&x, &lie.bracket(&x, &y)).abs() < 1e-12);
            let lhs = lie.killing_inner(&lie.bracket(&x, &y), &z);
            let rhs = lie.killing_inner(&x, &lie.bracket(&y, &z));
            assert!((lhs - rhs).abs() < 1e-12);
            assert!((lie.killing_inner(&x, &y) - 2.0 * x.0.dot(&y.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn exp_matches_scaling_and_squaring() {
        let lie = LieGroupSpec::so3();
        for &theta in &[0.0, 1e-6, 1e-3, 0.5, 1.7, 3.0, 9.0] {
            let g = lie.exp_alg(&AlgebraVector::new(theta, 0.0, 0.0));
            let (c, s) = (theta.cos(), theta.sin());
            let expect = Matrix3::new(c, s, 0.0, -s, c, 0.0, 0.0, 0.0, 1.0);
            assert!((g.0 - expect).amax() < 1e-14, "theta {theta}");
            assert!((g.0 - oracle::expm(&lie.hat(&AlgebraVector::new(theta, 0.0, 0.0)))).amax() < 1e-12);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let x = AlgebraVector(rand_vec(&mut rng, 5.0));
            let g = lie.exp_alg(&x);
            assert!((g.0 - oracle::expm(&lie.hat(&x))).amax() < 1e-11);
            assert!(g.orthogonality_defect() < 1e-12);
            let (a, b) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let lhs = lie.exp_alg(&(x * (a + b)));
            let rhs = lie.exp_alg(&(x * a)) * lie.exp_alg(&(x * b));
            assert!((lhs.0 - rhs.0).amax() < 1e-13);
        }
        assert_eq!(lie.exp_alg(&AlgebraVector::zeros()), GroupElement::identity());
    }

    #[test]
    fn log_roundtrip_and_cut_locus() {
        let lie = LieGroupSpec::so3();
        assert_eq!(lie.log_group(&GroupElement::identity()).unwrap(), AlgebraVector::zeros());
        let x = AlgebraVector::new(0.3, -0.2, 0.1);
        let back = lie.log_group(&lie.exp_alg(&x)).unwrap();
        assert!((back - x).norm() < 1e-14);

        let near = lie.exp_alg(&AlgebraVector::new(std::f64::consts::PI * 0.999999, 0.0, 0.0));
        let back = lie.log_group(&near).unwrap();
        assert!((back[0] - std::f64::consts::PI * 0.999999).abs() < 1e-9);
        assert!(lie.log_condition(&near) > 1e5);

        let at_pi = lie.exp_alg(&AlgebraVector::new(std::f64::consts::PI - 1e-8, 0.0, 0.0));
        assert!(matches!(lie.log_group(&at_pi), Err(Error::NearCutLocus { .. })));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let mut v = rand_vec(&mut rng, 1.0);
            v *= rng.gen_range(0.0..3.1) / v.norm();
            let g = lie.exp_alg(&AlgebraVector(v));
            let back = lie.exp_alg(&lie.log_group(&g).unwrap());
            assert!((back.0 - g.0).amax() < 1e-9);
        }
    }

    #[test]
    fn duality_identities() {
        let lie = LieGroupSpec::so3();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let x = AlgebraVector(rand_vec(&mut rng, 2.0));
            let y = AlgebraVector(rand_vec(&mut rng, 2.0));
            let p = CoVector(rand_vec(&mut rng, 2.0));
            let g = lie.exp_alg(&AlgebraVector(rand_vec(&mut rng, 3.0)));
            let lhs = lie.ad_star_apply(&x, &p).pair(&y);
            assert!((lhs - p.pair(&lie.bracket(&x, &y))).abs() < 1e-12);
            let lhs = lie.coadjoint(&g, &p).pair(&x);
            assert!((lhs - p.pair(&lie.adjoint(&g, &x))).abs() < 1e-12);
            let lhs = lie.adjoint(&g, &lie.bracket(&x, &y));
            let rhs = lie.bracket(&lie.adjoint(&g, &x), &lie.adjoint(&g, &y));
            assert!((lhs - rhs).norm() < 1e-12);
        }
        let x = AlgebraVector::new(1.0, 2.0, -0.5);
        assert_eq!(lie.adjoint(&GroupElement::identity(), &x), x);
    }

    #[test]
    fn adjoint_of_exp_solves_linear_ode() {
        let lie = LieGroupSpec::so3();
        let x = AlgebraVector::new(0.7, -0.4, 1.1);
        let y0 = Vector3::new(0.2, 1.0, -0.3);
        let ad = lie.ad_matrix(&x);
        let n = 1000;
        let h = 1.0 / n as f64;
        let mut y = y0;
        for k in 1..=n {
            y = oracle::rk4_linear(&ad, &y, h);
            let t = k as f64 * h;
            let z = lie.adjoint(&lie.exp_alg(&(x * t)), &AlgebraVector(y0));
            assert!((z.0 - y).norm() < 1e-8);
        }
    }

    #[test]
    fn metric_raise_lower() {
        let lie = LieGroupSpec::so3();
        let p = CoVector::new(1.0, -2.0, 4.0);
        assert_eq!(lie.metric_raise(&p), AlgebraVector::new(0.5, -1.0, 2.0));
        assert_eq!(lie.metric_lower(&lie.metric_raise(&p)), p);
        assert_eq!(lie.metric_raise(&CoVector::zeros()), AlgebraVector::zeros());
    }

    #[test]
    fn trivialization() {
        let lie = LieGroupSpec::so3();
        let x = AlgebraVector::new(0.1, 0.2, 0.3);
        assert_eq!(lie.trivialize(&GroupElement::identity(), &lie.hat(&x)).unwrap(), x);
        let g = lie.exp_alg(&AlgebraVector::unit(1));
        let v = lie.untrivialize(&g, &AlgebraVector::unit(0));
        assert!((v - g.0 * lie.hat(&AlgebraVector::unit(0))).amax() == 0.0);
        let back = lie.trivialize(&g, &v).unwrap();
        assert!((back - AlgebraVector::unit(0)).norm() < 1e-15);
        assert!(lie.trivialize(&g, &Matrix3::identity()).is_err());
    }

    #[test]
    fn distance() {
        let lie = LieGroupSpec::so3();
        let g = lie.exp_alg(&AlgebraVector::new(0.4, 0.1, -0.9));
        assert!(lie.group_distance(&g, &g).unwrap() < 1e-15);
        let d = lie
            .group_distance(&GroupElement::identity(), &lie.exp_alg(&AlgebraVector::new(0.5, 0.0, 0.0)))
            .unwrap();
        assert!((d - 0.5).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let [a, b, c] = [0; 3].map(|_| lie.exp_alg(&AlgebraVector(rand_vec(&mut rng, 0.9))));
            let (ab, bc, ac) = (
                lie.group_distance(&a, &b).unwrap(),
                lie.group_distance(&b, &c).unwrap(),
                lie.group_distance(&a, &c).unwrap(),
            );
            assert!(ac <= ab + bc + 1e-12);
            assert!((ab - lie.group_distance(&b, &a).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn doc_roundtrip_and_validation() {
        let lie = LieGroupSpec::so3();
        let json = serde_json::to_string(&lie.to_doc()).unwrap();
        let doc: LieGroupDoc = serde_json::from_str(&json).unwrap();
        let back = LieGroupSpec::from_doc(&doc).unwrap();
        assert_eq!(back.killing_matrix(), lie.killing_matrix());
        let mut bad = doc.clone();
        bad.inner_product[0][0] = -1.0;
        assert!(LieGroupSpec::from_doc(&bad).is_err());
        let mut bad = doc;
        bad.dim = 4;
        assert!(LieGroupSpec::from_doc(&bad).is_err());
    }

    #[test]
    fn polar_projection() {
        let lie = LieGroupSpec::so3();
        let g = lie.exp_alg(&AlgebraVector::new(0.3, 1.0, -2.0));
        let noisy = g.0 + Matrix3::from_element(1e-7);
        let p = GroupElement::polar_project(&noisy);
        assert!(p.orthogonality_defect() < 1e-14);
        assert!((p.0 - g.0).amax() < 1e-6);
    }
}
