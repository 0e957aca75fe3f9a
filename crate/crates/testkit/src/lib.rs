//! Independent reference implementations used as test oracles.
//!
//! Everything here is deliberately simple and shares no code with the main
//! crate's solver path: a cyclic coordinate-descent lasso, central finite
//! differences, a dense eigendecomposition for spectral norms, and random
//! problem generators.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, p), |_| rng.sample(StandardNormal))
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    Array1::from_iter((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Random -1/+1 labels with both classes guaranteed.
pub fn random_labels(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    assert!(n >= 2);
    let mut y = Array1::from_iter((0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }));
    y[0] = 1.0;
    y[1] = -1.0;
    y
}

fn soft(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Lasso objective `1/(2n) ||y - Xw - b||^2 + lambda ||w||_1`.
pub fn lasso_objective(
    x: &Array2<f64>,
    y: &Array1<f64>,
    w: &Array1<f64>,
    b: f64,
    lambda: f64,
) -> f64 {
    let n = x.nrows() as f64;
    let r = y - &x.dot(w) - b;
    r.dot(&r) / (2.0 * n) + lambda * w.iter().map(|v| v.abs()).sum::<f64>()
}

/// Cyclic coordinate descent for the lasso objective above. Runs until the
/// largest parameter change in a sweep drops below `tol` or the sweep budget
/// is exhausted. Returns `(w, b)`.
pub fn cd_lasso(
    x: &Array2<f64>,
    y: &Array1<f64>,
    lambda: f64,
    fit_intercept: bool,
    max_sweeps: usize,
    tol: f64,
) -> (Array1<f64>, f64) {
    let n = x.nrows() as f64;
    let p = x.ncols();
    let col_sq: Vec<f64> = (0..p).map(|j| x.column(j).dot(&x.column(j))).collect();
    let mut w = Array1::zeros(p);
    let mut b = 0.0;
    let mut residual = y.clone(); // y - Xw - b
    for _ in 0..max_sweeps {
        let mut max_change = 0.0f64;
        if fit_intercept {
            let shift = residual.sum() / n;
            b += shift;
            residual -= shift;
            max_change = max_change.max(shift.abs());
        }
        for j in 0..p {
            if col_sq[j] == 0.0 {
                continue;
            }
            let old = w[j];
            let col = x.column(j);
            // partial correlation with w_j removed from the residual
            let rho = col.dot(&residual) / n + col_sq[j] * old / n;
            let new = soft(rho, lambda) / (col_sq[j] / n);
            if new != old {
                let delta = new - old;
                residual.scaled_add(-delta, &col);
                w[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change <= tol {
            break;
        }
    }
    (w, b)
}

/// Exact largest eigenvalue of X^T X via dense symmetric eigendecomposition.
pub fn dense_sigma_max_sq(x: &Array2<f64>) -> f64 {
    let p = x.ncols();
    let gram = x.t().dot(x);
    let m = nalgebra::DMatrix::from_fn(p, p, |i, j| gram[(i, j)]);
    m.symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, &v| acc.max(v))
}

/// Central finite differences of a scalar function, step `h` per coordinate.
pub fn finite_diff_gradient(
    f: &dyn Fn(&Array1<f64>) -> f64,
    at: &Array1<f64>,
    h: f64,
) -> Array1<f64> {
    let mut grad = Array1::zeros(at.len());
    let mut probe = at.clone();
    for i in 0..at.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = f(&probe);
        probe[i] = orig - h;
        let down = f(&probe);
        probe[i] = orig;
        grad[i] = (up - down) / (2.0 * h);
    }
    grad
}

/// Brute-force two-class ANOVA F statistic from group means, used to check
/// the screening scores.
pub fn f_statistic_reference(col: &[f64], y: &[f64]) -> f64 {
    let groups: Vec<Vec<f64>> = [-1.0, 1.0]
        .iter()
        .map(|&c| {
            col.iter()
                .zip(y.iter())
                .filter(|(_, &label)| label == c)
                .map(|(&v, _)| v)
                .collect()
        })
        .collect();
    let n = col.len() as f64;
    let grand = col.iter().sum::<f64>() / n;
    let mut between = 0.0;
    let mut within = 0.0;
    for group in &groups {
        let gn = group.len() as f64;
        let mean = group.iter().sum::<f64>() / gn;
        between += gn * (mean - grand) * (mean - grand);
        within += group.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    }
    if within == 0.0 {
        return if between > 0.0 { f64::INFINITY } else { 0.0 };
    }
    (between / 1.0) / (within / (n - 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cd_lasso_solves_a_separable_problem() {
        // orthonormal design: the lasso solution is soft-thresholding of X^T y / n
        let x = Array2::eye(4);
        let y = Array1::from(vec![2.0, -1.0, 0.1, 0.6]);
        let lambda = 0.1;
        let (w, _) = cd_lasso(&x, &y, lambda, false, 10_000, 1e-14);
        // per coordinate: (w_i - y_i)/n + lambda sign(w_i) = 0, so w = soft(y, n lambda)
        let expected: Vec<f64> = y.iter().map(|&v| soft(v, 4.0 * lambda)).collect();
        for (a, e) in w.iter().zip(expected.iter()) {
            assert!((a - e).abs() < 1e-12, "{a} vs {e}");
        }
    }

    #[test]
    fn finite_differences_match_a_quadratic() {
        let f = |v: &Array1<f64>| v.dot(v) / 2.0;
        let at = Array1::from(vec![1.0, -2.0, 3.0]);
        let g = finite_diff_gradient(&f, &at, 1e-6);
        for (a, e) in g.iter().zip(at.iter()) {
            assert!((a - e).abs() < 1e-9);
        }
    }

    #[test]
    fn dense_spectral_norm_of_identity() {
        let x = Array2::eye(3);
        assert!((dense_sigma_max_sq(&x) - 1.0).abs() < 1e-12);
    }
}
