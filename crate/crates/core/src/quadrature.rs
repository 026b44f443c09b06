//! Composite Simpson quadrature on possibly non-uniform grids.

/// Integrates samples `(t_k, f_k)` by fitting a parabola through each pair of
/// consecutive intervals. An odd trailing interval is integrated with the
/// parabola through the last three points. Exact for quadratics.
pub fn simpson(t: &[f64], f: &[f64]) -> f64 {
    assert_eq!(t.len(), f.len());
    match t.len() {
        0 | 1 => 0.0,
        2 => 0.5 * (t[1] - t[0]) * (f[0] + f[1]),
        n => {
            let mut sum = 0.0;
            let mut k = 0;
            while k + 2 < n {
                sum += pair(t[k], t[k + 1], t[k + 2], f[k], f[k + 1], f[k + 2]);
                k += 2;
            }
            if k + 1 < n {
                sum += tail(t[k - 1], t[k], t[k + 1], f[k - 1], f[k], f[k + 1]);
            }
            sum
        }
    }
}

/// Parabola through three points, centred at the middle node.
fn fit(x0: f64, x1: f64, x2: f64, f0: f64, f1: f64, f2: f64) -> (f64, f64) {
    let (h0, h1) = (x1 - x0, x2 - x1);
    let c = ((f2 - f1) / h1 + (f0 - f1) / h0) / (h0 + h1);
    let b = (f2 - f1) / h1 - c * h1;
    (b, c)
}

fn pair(x0: f64, x1: f64, x2: f64, f0: f64, f1: f64, f2: f64) -> f64 {
    let (h0, h1) = (x1 - x0, x2 - x1);
    let (b, c) = fit(x0, x1, x2, f0, f1, f2);
    f1 * (h0 + h1) + 0.5 * b * (h1 * h1 - h0 * h0) + c * (h1.powi(3) + h0.powi(3)) / 3.0
}

fn tail(x0: f64, x1: f64, x2: f64, f0: f64, f1: f64, f2: f64) -> f64 {
    let h1 = x2 - x1;
    let (b, c) = fit(x0, x1, x2, f0, f1, f2);
    f1 * h1 + 0.5 * b * h1 * h1 + c * h1.powi(3) / 3.0
}
