//! Independent reference computations for unit tests.

use nalgebra::{Matrix3, Vector3};

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
pub fn expm(a: &Matrix3<f64>) -> Matrix3<f64> {
    let norm = a.amax() * 3.0;
    let mut s = 0;
    while norm / f64::powi(2.0, s) > 0.25 {
        s += 1;
    }
    let b = a / f64::powi(2.0, s);
    let mut term = Matrix3::identity();
    let mut sum = Matrix3::identity();
    for k in 1..=20 {
        term = term * b / k as f64;
        sum += term;
    }
    for _ in 0..s {
        sum = sum * sum;
    }
    sum
}

/// One classic Runge-Kutta step of `y' = a y`.
pub fn rk4_linear(a: &Matrix3<f64>, y: &Vector3<f64>, h: f64) -> Vector3<f64> {
    let k1 = a * y;
    let k2 = a * (y + k1 * (h / 2.0));
    let k3 = a * (y + k2 * (h / 2.0));
    let k4 = a * (y + k3 * h);
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}
