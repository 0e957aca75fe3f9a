//! Differentiable data-fit terms with gradients and a Lipschitz constant for
//! the gradient.
//!
//! Both losses are means over samples: squared `1/(2n) sum (y - Xw - b)^2`,
//! logistic `1/n sum log(1 + exp(-y (Xw + b)))` with -1/+1 targets. The mean
//! normalization keeps the regularization level free of the sample count.
//! The intercept is fit but never penalized.

use ndarray::{Array1, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, STREAM_POWER_ITERATION};
use crate::volume::{Dataset, TaskKind};

/// Safety factor applied to the power-iteration estimate of the spectral norm
/// so the returned constant stays an upper bound.
const LIPSCHITZ_SAFETY: f64 = 1.01;
/// Positive floor so step sizes stay finite on degenerate (all-zero) designs.
const LIPSCHITZ_FLOOR: f64 = 1e-12;
/// Default power-iteration budget.
pub const POWER_ITERATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Logistic,
    Squared,
}

impl LossKind {
    pub fn task(self) -> TaskKind {
        match self {
            LossKind::Logistic => TaskKind::Classification,
            LossKind::Squared => TaskKind::Regression,
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(LossKind::Logistic),
            "squared" => Ok(LossKind::Squared),
            other => Err(Error::InvalidArg(format!(
                "unknown loss '{other}' (expected logistic or squared)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossSpec {
    pub kind: LossKind,
    pub fit_intercept: bool,
}

impl LossSpec {
    pub fn logistic() -> Self {
        LossSpec {
            kind: LossKind::Logistic,
            fit_intercept: true,
        }
    }

    pub fn squared() -> Self {
        LossSpec {
            kind: LossKind::Squared,
            fit_intercept: true,
        }
    }

    pub fn without_intercept(mut self) -> Self {
        self.fit_intercept = false;
        self
    }
}

impl Default for LossSpec {
    fn default() -> Self {
        LossSpec::logistic()
    }
}

fn check_inputs(data: &Dataset, w: &ArrayView1<f64>, b: f64) -> Result<()> {
    if w.len() != data.n_features() {
        return Err(Error::DimMismatch(format!(
            "weight vector has {} entries, design matrix has {} columns",
            w.len(),
            data.n_features()
        )));
    }
    if !w.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("weight vector"));
    }
    if !b.is_finite() {
        return Err(Error::NonFinite("intercept"));
    }
    Ok(())
}

/// Numerically stable `log(1 + exp(z))`.
fn log1p_exp(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Stable logistic sigmoid `1 / (1 + exp(-z))`.
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn loss_value(spec: &LossSpec, data: &Dataset, w: &ArrayView1<f64>, b: f64) -> Result<f64> {
    check_inputs(data, w, b)?;
    let n = data.n_samples() as f64;
    let scores = data.x.dot(w);
    let value = match spec.kind {
        LossKind::Squared => {
            let mut sum = 0.0;
            for (s, y) in scores.iter().zip(data.y.iter()) {
                let r = y - s - b;
                sum += r * r;
            }
            sum / (2.0 * n)
        }
        LossKind::Logistic => {
            let mut sum = 0.0;
            for (s, y) in scores.iter().zip(data.y.iter()) {
                sum += log1p_exp(-y * (s + b));
            }
            sum / n
        }
    };
    Ok(value)
}

/// Analytic gradient of `loss_value` with respect to `(w, b)`. The intercept
/// component is zero when the spec does not fit an intercept.
pub fn loss_gradient(
    spec: &LossSpec,
    data: &Dataset,
    w: &ArrayView1<f64>,
    b: f64,
) -> Result<(Array1<f64>, f64)> {
    check_inputs(data, w, b)?;
    let n = data.n_samples() as f64;
    let scores = data.x.dot(w);
    // per-sample derivative of the loss with respect to the score
    let mut residual = Array1::zeros(data.n_samples());
    match spec.kind {
        LossKind::Squared => {
            for (r, (s, y)) in residual.iter_mut().zip(scores.iter().zip(data.y.iter())) {
                *r = (s + b - y) / n;
            }
        }
        LossKind::Logistic => {
            for (r, (s, y)) in residual.iter_mut().zip(scores.iter().zip(data.y.iter())) {
                *r = -y * sigmoid(-y * (s + b)) / n;
            }
        }
    }
    // accumulate X^T residual by rows: cache-friendly for row-major X
    let mut grad = Array1::zeros(data.n_features());
    for (i, row) in data.x.rows().into_iter().enumerate() {
        let r = residual[i];
        if r != 0.0 {
            grad.scaled_add(r, &row);
        }
    }
    let grad_b = if spec.fit_intercept {
        residual.sum()
    } else {
        0.0
    };
    Ok((grad, grad_b))
}

/// Intercept minimizing the loss when all weights are zero: the target mean
/// for the squared loss, `log(n+/n-)` for the logistic loss. Zero when no
/// intercept is fit.
pub fn zero_model_intercept(spec: &LossSpec, data: &Dataset) -> Result<f64> {
    if !spec.fit_intercept {
        return Ok(0.0);
    }
    match spec.kind {
        LossKind::Squared => Ok(data.y.sum() / data.n_samples() as f64),
        LossKind::Logistic => {
            let (pos, neg) = data.class_counts();
            if pos == 0 || neg == 0 {
                return Err(Error::SingleClass);
            }
            Ok((pos as f64 / neg as f64).ln())
        }
    }
}

/// Upper bound on the Lipschitz constant of the loss gradient:
/// `sigma_max(X)^2 / n` for the squared loss and `sigma_max(X)^2 / (4n)` for
/// the logistic loss, with the spectral norm estimated by power iteration and
/// inflated by a 1% safety factor.
pub fn lipschitz_constant(spec: &LossSpec, data: &Dataset, iters: usize, seed: u64) -> f64 {
    assert!(iters >= 1, "power iteration needs at least one step");
    let sigma_sq = spectral_norm_sq(data, iters, seed);
    let n = data.n_samples() as f64;
    let base = match spec.kind {
        LossKind::Squared => sigma_sq / n,
        LossKind::Logistic => sigma_sq / (4.0 * n),
    };
    (base * LIPSCHITZ_SAFETY).max(LIPSCHITZ_FLOOR)
}

/// Largest eigenvalue of X^T X by power iteration with a seeded start vector.
/// Stops early once the Rayleigh quotient stabilizes.
fn spectral_norm_sq(data: &Dataset, iters: usize, seed: u64) -> f64 {
    let p = data.n_features();
    let mut rng = stream_rng(seed, STREAM_POWER_ITERATION);
    let mut v: Array1<f64> = Array1::from_iter((0..p).map(|_| rng.sample(StandardNormal)));
    let norm = v.dot(&v).sqrt();
    if norm == 0.0 {
        return 0.0;
    }
    v /= norm;
    let mut rayleigh = 0.0;
    for _ in 0..iters {
        let u = data.x.dot(&v);
        let next = u.dot(&u);
        if next == 0.0 {
            return 0.0;
        }
        let mut vt = Array1::zeros(p);
        for (i, row) in data.x.rows().into_iter().enumerate() {
            if u[i] != 0.0 {
                vt.scaled_add(u[i], &row);
            }
        }
        let vt_norm = vt.dot(&vt).sqrt();
        if vt_norm == 0.0 {
            return next;
        }
        v = vt / vt_norm;
        if (next - rayleigh).abs() <= 1e-12 * next {
            return next;
        }
        rayleigh = next;
    }
    rayleigh
}
