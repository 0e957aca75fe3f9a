//! Accelerated proximal-gradient solver (FISTA) generic over loss and
//! shrinkage operator, plus prediction helpers.
//!
//! Each iteration takes a gradient step on the smooth loss at the
//! extrapolated point, applies the shrinkage operator at threshold
//! `lambda / L`, and extrapolates with the momentum schedule
//! `t_k = (1 + sqrt(1 + 4 t_{k-1}^2)) / 2` starting from `t_0 = 0`. The
//! momentum coefficient after the first shrinkage step is therefore zero,
//! i.e. momentum kicks in from the second step. The intercept takes the same
//! gradient step as the weights but bypasses the shrinkage.
//!
//! Termination: `||w_k - w_{k-1}||_inf <= tol * ||w_k||_inf` (which also
//! stops an all-zero fixed point, where both sides are zero), the iteration
//! cap, or early stopping on a validation set whose prediction error has not
//! improved for `patience` consecutive checks.

use ndarray::{Array1, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::losses::{loss_gradient, loss_value, zero_model_intercept, LossKind, LossSpec};
use crate::shrinkage::Shrinkage;
use crate::volume::{Dataset, WeightMap};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Relative cutoff on the maximum weight change.
    pub tol: f64,
    pub max_iter: usize,
    /// Early stopping evaluates the validation error every `check_every`
    /// iterations and gives up after `patience` checks without improvement.
    pub check_every: usize,
    pub patience: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-4,
            max_iter: 10_000,
            check_every: 10,
            patience: 3,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArg(format!(
                "solver tolerance must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArg("max_iter must be at least 1".into()));
        }
        if self.check_every == 0 {
            return Err(Error::InvalidArg("check_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Left-out data for early stopping.
#[derive(Debug, Clone, Copy)]
pub struct Validation<'a> {
    pub x: ArrayView2<'a, f64>,
    pub y: ArrayView1<'a, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    MaxIterations,
    EarlyStopped,
}

#[derive(Debug, Clone)]
pub struct Diagnostics {
    pub iterations: usize,
    pub stop: StopReason,
    /// Data-fit loss at each iterate.
    pub objective_trace: Vec<f64>,
}

fn momentum_next(t: f64) -> f64 {
    0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt())
}

/// Run FISTA for one penalty level.
///
/// `init` supplies a warm start `(w0, b0)`; when absent the solve starts from
/// the zero weight vector with the zero-model optimal intercept. `lipschitz`
/// is the gradient Lipschitz bound that sets the step size `1/L`.
pub fn fista(
    loss: &LossSpec,
    data: &Dataset,
    shrink: &Shrinkage,
    lambda: f64,
    init: Option<(ArrayView1<f64>, f64)>,
    lipschitz: f64,
    cfg: &SolverConfig,
    validation: Option<&Validation>,
) -> Result<(WeightMap, Diagnostics)> {
    cfg.validate()?;
    if lambda < 0.0 {
        return Err(Error::InvalidArg(format!(
            "penalty level must be nonnegative, got {lambda}"
        )));
    }
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(Error::InvalidArg(format!(
            "Lipschitz constant must be positive and finite, got {lipschitz}"
        )));
    }
    let p = data.n_features();
    if let Some(expected) = shrink.expected_len() {
        if expected != p {
            return Err(Error::DimMismatch(format!(
                "shrinkage operator built for p={expected}, data has p={p}"
            )));
        }
    }
    let (mut w_prev, mut b_prev) = match init {
        Some((w0, b0)) => {
            if w0.len() != p {
                return Err(Error::DimMismatch(format!(
                    "warm start has {} entries, data has p={p}",
                    w0.len()
                )));
            }
            (w0.to_owned(), if loss.fit_intercept { b0 } else { 0.0 })
        }
        None => (Array1::zeros(p), zero_model_intercept(loss, data)?),
    };

    let step = 1.0 / lipschitz;
    let threshold = lambda / lipschitz;
    let mut v = w_prev.clone();
    let mut b_v = b_prev;
    let mut t_prev = 1.0; // t_1; t_0 = 0 yields t_1 = 1
    let mut trace = Vec::new();
    let mut best_val_err = f64::INFINITY;
    let mut stalled_checks = 0usize;
    let mut iterations = 0usize;
    let mut stop = StopReason::MaxIterations;

    for k in 1..=cfg.max_iter {
        iterations = k;
        let (grad, grad_b) = loss_gradient(loss, data, &v.view(), b_v)
            .map_err(|_| Error::NonFiniteIterate { iteration: k })?;
        let stepped = &v - &(grad * step);
        let w = shrink.apply(&stepped.view(), threshold);
        let b = if loss.fit_intercept {
            b_v - grad_b * step
        } else {
            0.0
        };
        if !w.iter().all(|x| x.is_finite()) || !b.is_finite() {
            return Err(Error::NonFiniteIterate { iteration: k });
        }
        debug_assert!(
            w.iter().zip(stepped.iter()).all(|(o, i)| {
                o.abs() <= i.abs() && (*o == 0.0 || o.signum() == i.signum())
            }),
            "shrinkage output must be non-expansive and sign-preserving"
        );

        trace.push(
            loss_value(loss, data, &w.view(), b)
                .map_err(|_| Error::NonFiniteIterate { iteration: k })?,
        );

        let mut delta_inf = 0.0f64;
        let mut w_inf = 0.0f64;
        for (new, old) in w.iter().zip(w_prev.iter()) {
            delta_inf = delta_inf.max((new - old).abs());
            w_inf = w_inf.max(new.abs());
        }

        let t_cur = momentum_next(t_prev);
        let beta = (t_prev - 1.0) / t_cur;
        v = &w + &((&w - &w_prev) * beta);
        b_v = b + beta * (b - b_prev);
        w_prev = w;
        b_prev = b;
        t_prev = t_cur;

        if delta_inf <= cfg.tol * w_inf {
            stop = StopReason::Converged;
            break;
        }
        if let Some(val) = validation {
            if k % cfg.check_every == 0 {
                let err = validation_error(loss.kind, &val.x, &val.y, &w_prev.view(), b_prev);
                if err < best_val_err {
                    best_val_err = err;
                    stalled_checks = 0;
                } else {
                    stalled_checks += 1;
                    if stalled_checks >= cfg.patience {
                        stop = StopReason::EarlyStopped;
                        break;
                    }
                }
            }
        }
    }

    let wm = WeightMap::new(w_prev, b_prev, data.grid.clone())?;
    Ok((
        wm,
        Diagnostics {
            iterations,
            stop,
            objective_trace: trace,
        },
    ))
}

/// Raw decision scores `Xw + b`.
pub fn predict_scores(wm: &WeightMap, x: &ArrayView2<f64>) -> Result<Array1<f64>> {
    if x.ncols() != wm.values.len() {
        return Err(Error::DimMismatch(format!(
            "model has {} coefficients, data has {} columns",
            wm.values.len(),
            x.ncols()
        )));
    }
    Ok(x.dot(&wm.values) + wm.intercept)
}

/// Class labels from scores: sign with zero mapped to +1.
pub fn scores_to_labels(scores: &ArrayView1<f64>) -> Array1<f64> {
    scores.mapv(|s| if s >= 0.0 { 1.0 } else { -1.0 })
}

pub fn accuracy(predicted: &ArrayView1<f64>, actual: &ArrayView1<f64>) -> f64 {
    let hits = predicted
        .iter()
        .zip(actual.iter())
        .filter(|(a, b)| a == b)
        .count();
    hits as f64 / actual.len() as f64
}

pub fn mean_squared_error(scores: &ArrayView1<f64>, actual: &ArrayView1<f64>) -> f64 {
    scores
        .iter()
        .zip(actual.iter())
        .map(|(s, y)| (s - y) * (s - y))
        .sum::<f64>()
        / actual.len() as f64
}

/// Coefficient of determination; 0 when the targets are constant.
pub fn r_squared(scores: &ArrayView1<f64>, actual: &ArrayView1<f64>) -> f64 {
    let mean = actual.sum() / actual.len() as f64;
    let ss_tot: f64 = actual.iter().map(|y| (y - mean) * (y - mean)).sum();
    if ss_tot == 0.0 {
        return 0.0;
    }
    let ss_res: f64 = scores
        .iter()
        .zip(actual.iter())
        .map(|(s, y)| (s - y) * (s - y))
        .sum();
    1.0 - ss_res / ss_tot
}

/// Early-stopping metric: misclassification rate for classification, mean
/// squared error for regression. Lower is better.
pub fn validation_error(
    kind: LossKind,
    x: &ArrayView2<f64>,
    y: &ArrayView1<f64>,
    w: &ArrayView1<f64>,
    b: f64,
) -> f64 {
    let scores = x.dot(w) + b;
    match kind {
        LossKind::Logistic => 1.0 - accuracy(&scores_to_labels(&scores.view()).view(), y),
        LossKind::Squared => mean_squared_error(&scores.view(), y),
    }
}

/// Model-selection score: accuracy for classification, R^2 for regression.
/// Higher is better.
pub fn validation_score(
    kind: LossKind,
    x: &ArrayView2<f64>,
    y: &ArrayView1<f64>,
    w: &ArrayView1<f64>,
    b: f64,
) -> f64 {
    let scores = x.dot(w) + b;
    match kind {
        LossKind::Logistic => accuracy(&scores_to_labels(&scores.view()).view(), y),
        LossKind::Squared => r_squared(&scores.view(), y),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use std::sync::Arc;

    use crate::shrinkage::Shrinkage;
    use crate::volume::VolumeGrid;

    fn dataset(x: Array2<f64>, y: Array1<f64>) -> Dataset {
        let p = x.ncols();
        let grid = Arc::new(VolumeGrid::full((p, 1, 1)));
        Dataset::new(x, y, grid).unwrap()
    }

    #[test]
    fn momentum_schedule_grows_at_least_linearly() {
        let mut t = 0.0;
        for k in 1..=1000usize {
            t = momentum_next(t);
            if k == 1 {
                assert_eq!(t, 1.0);
            }
            assert!(t >= (k as f64 + 1.0) / 2.0, "t_{k} = {t} too small");
        }
    }

    #[test]
    fn unregularized_squared_reaches_least_squares() {
        let x = array![
            [1.0, 0.2, -0.3],
            [0.1, 1.1, 0.4],
            [-0.2, 0.3, 0.9],
            [0.7, -0.5, 0.2],
            [0.3, 0.8, -0.6],
        ];
        let y = array![1.0, -0.5, 2.0, 0.3, -1.2];
        let d = dataset(x.clone(), y.clone());
        let spec = LossSpec::squared().without_intercept();
        let l = crate::losses::lipschitz_constant(&spec, &d, 100, 0);
        let cfg = SolverConfig {
            tol: 1e-12,
            max_iter: 50_000,
            ..SolverConfig::default()
        };
        let (wm, diag) = fista(&spec, &d, &Shrinkage::L1, 0.0, None, l, &cfg, None).unwrap();
        let residual = x.dot(&wm.values) - y;
        let grad_inf = x
            .t()
            .dot(&residual)
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(grad_inf < 1e-6, "normal equations violated by {grad_inf}");
        assert_eq!(diag.stop, StopReason::Converged);
    }

    #[test]
    fn solver_is_deterministic() {
        let x = array![[1.0, 0.5], [-0.3, 0.8], [0.2, -1.1], [0.9, 0.1]];
        let y = array![1.0, -1.0, -1.0, 1.0];
        let d = dataset(x, y);
        let spec = LossSpec::logistic();
        let l = crate::losses::lipschitz_constant(&spec, &d, 100, 7);
        let cfg = SolverConfig::default();
        let run = || {
            fista(&spec, &d, &Shrinkage::L1, 0.01, None, l, &cfg, None)
                .unwrap()
                .0
        };
        let a = run();
        let b = run();
        assert_eq!(a.values, b.values);
        assert!(a.intercept == b.intercept);
    }

    #[test]
    fn all_zero_fixed_point_stops_immediately() {
        // lambda far above lambda_max: first shrinkage keeps w at zero and
        // the 0 <= 0 stopping comparison fires.
        let x = array![[1.0, -0.5], [0.3, 0.2], [-0.7, 0.9], [0.4, -0.1]];
        let y = array![1.0, -1.0, 1.0, -1.0];
        let d = dataset(x, y);
        let spec = LossSpec::logistic();
        let l = crate::losses::lipschitz_constant(&spec, &d, 100, 0);
        let (wm, diag) = fista(
            &spec,
            &d,
            &Shrinkage::L1,
            1e6,
            None,
            l,
            &SolverConfig::default(),
            None,
        )
        .unwrap();
        assert!(wm.values.iter().all(|&v| v == 0.0));
        assert_eq!(diag.stop, StopReason::Converged);
        assert_eq!(diag.iterations, 1);
    }

    #[test]
    fn pathological_step_size_reports_iteration() {
        let x = array![[1.0], [2.0]];
        let y = array![10.0, -10.0];
        let d = dataset(x, y);
        let spec = LossSpec::squared();
        // absurdly small Lipschitz constant -> exploding steps -> overflow
        let err = fista(
            &spec,
            &d,
            &Shrinkage::L1,
            0.0,
            None,
            1e-300,
            &SolverConfig {
                tol: 1e-12,
                max_iter: 10_000,
                ..SolverConfig::default()
            },
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFiniteIterate { iteration } if iteration > 0));
    }

    #[test]
    fn negative_lambda_is_a_usage_error() {
        let x = array![[1.0]];
        let y = array![1.0];
        let d = dataset(x, y);
        let spec = LossSpec::squared();
        assert!(matches!(
            fista(
                &spec,
                &d,
                &Shrinkage::L1,
                -1.0,
                None,
                1.0,
                &SolverConfig::default(),
                None
            ),
            Err(Error::InvalidArg(_))
        ));
    }

    #[test]
    fn predict_zero_model_breaks_ties_up() {
        let grid = Arc::new(VolumeGrid::full((2, 1, 1)));
        let wm = WeightMap::zeros(grid);
        let x = array![[1.0, 2.0], [-3.0, 0.5]];
        let scores = predict_scores(&wm, &x.view()).unwrap();
        assert!(scores.iter().all(|&s| s == 0.0));
        let labels = scores_to_labels(&scores.view());
        assert!(labels.iter().all(|&l| l == 1.0));
    }

    #[test]
    fn predict_sign_example() {
        let grid = Arc::new(VolumeGrid::full((1, 1, 1)));
        let wm = WeightMap::new(array![1.0], 0.0, grid).unwrap();
        let x = array![[2.0], [-3.0]];
        let scores = predict_scores(&wm, &x.view()).unwrap();
        assert_eq!(scores, array![2.0, -3.0]);
        assert_eq!(scores_to_labels(&scores.view()), array![1.0, -1.0]);
    }

    #[test]
    fn predict_rejects_dimension_mismatch() {
        let grid = Arc::new(VolumeGrid::full((2, 1, 1)));
        let wm = WeightMap::zeros(grid);
        let x = Array2::zeros((2, 3));
        assert!(matches!(
            predict_scores(&wm, &x.view()),
            Err(Error::DimMismatch(_))
        ));
    }

    #[test]
    fn separable_training_fit_is_perfect() {
        // two well-separated clusters along the first coordinate
        let x = array![
            [2.0, 0.1],
            [2.5, -0.2],
            [3.0, 0.3],
            [-2.0, 0.2],
            [-2.5, -0.1],
            [-3.0, 0.0],
        ];
        let y = array![1.0, 1.0, 1.0, -1.0, -1.0, -1.0];
        let d = dataset(x.clone(), y.clone());
        let spec = LossSpec::logistic();
        let l = crate::losses::lipschitz_constant(&spec, &d, 100, 0);
        let (wm, _) = fista(
            &spec,
            &d,
            &Shrinkage::L1,
            1e-4,
            None,
            l,
            &SolverConfig {
                tol: 1e-8,
                max_iter: 50_000,
                ..SolverConfig::default()
            },
            None,
        )
        .unwrap();
        let scores = predict_scores(&wm, &x.view()).unwrap();
        let labels = scores_to_labels(&scores.view());
        assert_eq!(accuracy(&labels.view(), &y.view()), 1.0);
    }
}
