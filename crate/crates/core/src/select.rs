//! Model selection: univariate screening, the penalty path with warm starts,
//! and nested cross-validation with fold-averaged final coefficients.
//!
//! The path starts at `lambda_max`, the smallest penalty at which the
//! l1-regularized solution is exactly zero, and visits `n_lambdas` values on
//! a logarithmic scale down to `lambda_min_ratio * lambda_max`. Structured
//! penalties reuse the l1 path start: penalty levels that empty an l1 model
//! also keep the structured models essentially empty, so the shared grid is a
//! convention for comparability rather than a correctness condition.

use std::sync::Arc;
use std::time::Instant;

use ndarray::Array1;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::losses::{
    lipschitz_constant, loss_gradient, zero_model_intercept, LossKind, LossSpec, POWER_ITERATIONS,
};
use crate::rng::{stream_rng, STREAM_FOLDS};
use crate::shrinkage::{PenaltyKind, Shrinkage};
use crate::solver::{fista, validation_score, Diagnostics, SolverConfig, Validation};
use crate::volume::{Dataset, TaskKind, WeightMap};

/// Full estimation-protocol configuration. The defaults are the protocol
/// constants: 8 folds, 5 penalty levels down to 1/20 of the path start, 20%
/// univariate screening, and a 1e-4 relative stopping cutoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub n_folds: usize,
    pub n_lambdas: usize,
    pub lambda_min_ratio: f64,
    pub screening_fraction: f64,
    pub loss: LossSpec,
    pub solver: SolverConfig,
    /// Early stopping on the left-out prediction error during the path scan.
    pub early_stopping: bool,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            n_folds: 8,
            n_lambdas: 5,
            lambda_min_ratio: 1.0 / 20.0,
            screening_fraction: 0.20,
            loss: LossSpec::logistic(),
            solver: SolverConfig::default(),
            early_stopping: true,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self, n_samples: usize) -> Result<()> {
        self.solver.validate()?;
        if self.n_lambdas < 2 {
            return Err(Error::InvalidArg(format!(
                "need at least 2 penalty levels, got {}",
                self.n_lambdas
            )));
        }
        if !(self.lambda_min_ratio > 0.0 && self.lambda_min_ratio < 1.0) {
            return Err(Error::InvalidArg(format!(
                "lambda_min_ratio must lie in (0, 1), got {}",
                self.lambda_min_ratio
            )));
        }
        if !(self.screening_fraction > 0.0 && self.screening_fraction <= 1.0) {
            return Err(Error::InvalidArg(format!(
                "screening fraction must lie in (0, 1], got {}",
                self.screening_fraction
            )));
        }
        if self.n_folds < 2 || self.n_folds > n_samples {
            return Err(Error::InvalidArg(format!(
                "fold count must lie in [2, n={n_samples}], got {}",
                self.n_folds
            )));
        }
        Ok(())
    }
}

/// Smallest penalty level at which the l1-regularized model is exactly zero:
/// the max-norm of the loss gradient at the zero weight vector with its
/// optimal intercept. For the squared loss this is `||X^T y_c||_inf / n`
/// (y centered when an intercept is fit); for the logistic loss the optimal
/// intercept `log(n+/n-)` yields the class-balanced pseudo-response.
pub fn lambda_max(loss: &LossSpec, data: &Dataset) -> Result<f64> {
    data.validate_for(loss.kind.task())?;
    let b = zero_model_intercept(loss, data)?;
    let zero = Array1::zeros(data.n_features());
    let (grad, _) = loss_gradient(loss, data, &zero.view(), b)?;
    let value = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    if value == 0.0 {
        return Err(Error::DegeneratePath);
    }
    Ok(value)
}

/// Logarithmically spaced, strictly decreasing penalty grid from
/// `lambda_max` down to `min_ratio * lambda_max`.
pub fn lambda_grid(lambda_max: f64, n_lambdas: usize, min_ratio: f64) -> Vec<f64> {
    let last = (n_lambdas - 1) as f64;
    (0..n_lambdas)
        .map(|i| lambda_max * min_ratio.powf(i as f64 / last))
        .collect()
}

fn f_score_two_class(col: &[f64], y: &[f64]) -> f64 {
    // exact constant columns score zero by definition
    let (min, max) = col
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if min == max {
        return 0.0;
    }
    let n = col.len() as f64;
    let mut sums = [0.0f64; 2];
    let mut counts = [0usize; 2];
    for (&v, &label) in col.iter().zip(y.iter()) {
        let c = usize::from(label > 0.0);
        sums[c] += v;
        counts[c] += 1;
    }
    let means = [sums[0] / counts[0] as f64, sums[1] / counts[1] as f64];
    let grand = (sums[0] + sums[1]) / n;
    let mut ss_within = 0.0;
    for (&v, &label) in col.iter().zip(y.iter()) {
        let d = v - means[usize::from(label > 0.0)];
        ss_within += d * d;
    }
    let ss_between = counts[0] as f64 * (means[0] - grand) * (means[0] - grand)
        + counts[1] as f64 * (means[1] - grand) * (means[1] - grand);
    if ss_within > 0.0 && n > 2.0 {
        (ss_between / 1.0) / (ss_within / (n - 2.0))
    } else if ss_between > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

fn squared_correlation(col: &[f64], y: &[f64]) -> f64 {
    let (min, max) = col
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if min == max {
        return 0.0;
    }
    let n = col.len() as f64;
    let mean_x = col.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&x, &yv) in col.iter().zip(y.iter()) {
        sxy += (x - mean_x) * (yv - mean_y);
        sxx += (x - mean_x) * (x - mean_x);
        syy += (yv - mean_y) * (yv - mean_y);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    (sxy * sxy) / (sxx * syy)
}

/// Per-voxel association scores with the targets: one-way ANOVA F for
/// classification, squared Pearson correlation for regression. Constant
/// columns score 0, never NaN.
pub fn univariate_scores(data: &Dataset, task: TaskKind) -> Vec<f64> {
    let y: Vec<f64> = data.y.to_vec();
    (0..data.n_features())
        .map(|j| {
            let col: Vec<f64> = data.x.column(j).to_vec();
            match task {
                TaskKind::Classification => f_score_two_class(&col, &y),
                TaskKind::Regression => squared_correlation(&col, &y),
            }
        })
        .collect()
}

/// Keep the `ceil(fraction * p)` voxels with the strongest univariate
/// association, ties broken toward the lower voxel index. Returns the
/// reduced dataset (on a sub-masked grid) and the kept masked indices in
/// ascending order.
pub fn univariate_screening(
    data: &Dataset,
    fraction: f64,
    task: TaskKind,
) -> Result<(Dataset, Vec<usize>)> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArg(format!(
            "screening fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let p = data.n_features();
    // epsilon guards against float noise in fraction * p (e.g. 0.2 * 10)
    let keep = (((fraction * p as f64) - 1e-9).ceil().max(1.0) as usize).min(p);
    let mut order: Vec<usize> = (0..p).collect();
    if keep < p {
        let scores = univariate_scores(data, task);
        order.sort_by(|&a, &b| {
            scores[b]
                .partial_cmp(&scores[a])
                .expect("scores are never NaN")
                .then(a.cmp(&b))
        });
    }
    let mut kept: Vec<usize> = order[..keep].to_vec();
    kept.sort_unstable();
    let sub_grid = Arc::new(data.grid.submask(&kept)?);
    let reduced = data.restrict_columns(&kept, sub_grid)?;
    Ok((reduced, kept))
}

/// Deterministic, seeded fold assignment. For classification the folds are
/// stratified: each class is shuffled and dealt round-robin, so per-fold
/// class proportions differ from the global ones by at most one sample and a
/// redraw is never needed. Returns per-fold validation index lists.
pub fn stratified_folds(
    y: &Array1<f64>,
    n_folds: usize,
    task: TaskKind,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    let n = y.len();
    if n_folds < 2 || n_folds > n {
        return Err(Error::InvalidArg(format!(
            "fold count must lie in [2, n={n}], got {n_folds}"
        )));
    }
    let mut rng = stream_rng(seed, STREAM_FOLDS);
    let mut shuffle = |mut idx: Vec<usize>| {
        use rand::Rng;
        for i in (1..idx.len()).rev() {
            idx.swap(i, rng.random_range(0..=i));
        }
        idx
    };
    let strata: Vec<Vec<usize>> = match task {
        TaskKind::Classification => {
            let pos: Vec<usize> = (0..n).filter(|&i| y[i] > 0.0).collect();
            let neg: Vec<usize> = (0..n).filter(|&i| y[i] <= 0.0).collect();
            // a class with a single sample cannot appear in every training
            // split, whatever the assignment
            if pos.len() < 2 || neg.len() < 2 {
                return Err(Error::InvalidArg(
                    "each class needs at least 2 samples for cross-validation".into(),
                ));
            }
            vec![shuffle(pos), shuffle(neg)]
        }
        TaskKind::Regression => vec![shuffle((0..n).collect())],
    };
    let mut folds = vec![Vec::new(); n_folds];
    for stratum in strata {
        for (k, &i) in stratum.iter().enumerate() {
            folds[k % n_folds].push(i);
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

/// One penalty level of a path fit.
#[derive(Debug, Clone)]
pub struct LambdaFit {
    pub lambda: f64,
    /// Coefficients in the (reduced) feature space of the training data.
    pub weights: Array1<f64>,
    pub intercept: f64,
    /// Accuracy (classification) or R^2 (regression) on the validation set.
    pub val_score: Option<f64>,
    pub diagnostics: Diagnostics,
}

/// A full path scan over one train/validation split.
#[derive(Debug, Clone)]
pub struct PathFit {
    pub lambdas: Vec<f64>,
    pub fits: Vec<LambdaFit>,
}

/// Scan the penalty grid from large to small values with warm starts.
///
/// The grid is anchored at `lambda_max` of the training data (screening, when
/// wanted, happens before this call). The first solve starts from the zero
/// model; every later solve starts from the previous solution. When a
/// validation set is supplied its prediction error drives both early stopping
/// (if enabled) and the recorded per-level scores.
pub fn fit_path(
    train: &Dataset,
    val: Option<&Dataset>,
    shrink: &Shrinkage,
    cfg: &FitConfig,
) -> Result<PathFit> {
    train.validate_for(cfg.loss.kind.task())?;
    let lmax = lambda_max(&cfg.loss, train)?;
    let lambdas = lambda_grid(lmax, cfg.n_lambdas, cfg.lambda_min_ratio);
    let lipschitz = lipschitz_constant(&cfg.loss, train, POWER_ITERATIONS, cfg.seed);

    let mut fits = Vec::with_capacity(lambdas.len());
    let mut warm: Option<(Array1<f64>, f64)> = None;
    for &lambda in &lambdas {
        let validation = if cfg.early_stopping {
            val.map(|v| Validation {
                x: v.x.view(),
                y: v.y.view(),
            })
        } else {
            None
        };
        let init = warm.as_ref().map(|(w, b)| (w.view(), *b));
        let (wm, diagnostics) = fista(
            &cfg.loss,
            train,
            shrink,
            lambda,
            init,
            lipschitz,
            &cfg.solver,
            validation.as_ref(),
        )
        .map_err(|e| Error::AtLambda {
            lambda,
            source: Box::new(e),
        })?;
        let val_score = val.map(|v| {
            validation_score(
                cfg.loss.kind,
                &v.x.view(),
                &v.y.view(),
                &wm.values.view(),
                wm.intercept,
            )
        });
        warm = Some((wm.values.clone(), wm.intercept));
        fits.push(LambdaFit {
            lambda,
            weights: wm.values,
            intercept: wm.intercept,
            val_score,
            diagnostics,
        });
    }
    Ok(PathFit { lambdas, fits })
}

/// One cross-validation fold of the full protocol.
#[derive(Debug, Clone)]
pub struct FoldFit {
    pub fold: usize,
    /// Masked indices kept by screening (fit on this fold's training data).
    pub kept: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub val_scores: Vec<f64>,
    /// Index of the chosen penalty level in `lambdas`.
    pub chosen: usize,
    /// Coefficients at the chosen level, expanded to the full masked space.
    pub coefficients: Array1<f64>,
    pub intercept: f64,
    pub iterations: Vec<usize>,
    pub objective_traces: Vec<Vec<f64>>,
    pub wall_time_seconds: f64,
}

impl FoldFit {
    pub fn chosen_lambda(&self) -> f64 {
        self.lambdas[self.chosen]
    }

    pub fn chosen_score(&self) -> f64 {
        self.val_scores[self.chosen]
    }
}

/// Result of the nested cross-validation protocol.
#[derive(Debug, Clone)]
pub struct PathResult {
    pub folds: Vec<FoldFit>,
    /// Coordinate-wise mean of the fold coefficients at each fold's chosen
    /// penalty level, with the mean fold intercept.
    pub weights: WeightMap,
    /// Mean validation score at the chosen levels.
    pub cv_score: f64,
    pub wall_time_seconds: f64,
}

/// The full protocol: seeded stratified folds; per-fold univariate screening
/// fit on the training split only; a warm-started penalty path per fold with
/// early stopping against the fold's validation split; per-fold selection of
/// the level with the best validation score (ties toward the sparser, larger
/// penalty); final coefficients averaged over folds.
pub fn fit_cv(data: &Dataset, penalty: &PenaltyKind, cfg: &FitConfig) -> Result<PathResult> {
    let started = Instant::now();
    let task = cfg.loss.kind.task();
    data.validate_for(task)?;
    cfg.validate(data.n_samples())?;

    let folds = stratified_folds(&data.y, cfg.n_folds, task, cfg.seed)?;
    let fold_fits: Vec<FoldFit> = folds
        .par_iter()
        .enumerate()
        .map(|(f, val_idx)| fit_fold(data, penalty, cfg, f, val_idx))
        .collect::<Result<Vec<_>>>()?;

    let p = data.n_features();
    let mut mean_w = Array1::zeros(p);
    let mut mean_b = 0.0;
    let mut cv_score = 0.0;
    for fold in &fold_fits {
        mean_w += &fold.coefficients;
        mean_b += fold.intercept;
        cv_score += fold.chosen_score();
    }
    let k = fold_fits.len() as f64;
    mean_w /= k;
    mean_b /= k;
    cv_score /= k;

    Ok(PathResult {
        folds: fold_fits,
        weights: WeightMap::new(mean_w, mean_b, data.grid.clone())?,
        cv_score,
        wall_time_seconds: started.elapsed().as_secs_f64(),
    })
}

fn fit_fold(
    data: &Dataset,
    penalty: &PenaltyKind,
    cfg: &FitConfig,
    fold: usize,
    val_idx: &[usize],
) -> Result<FoldFit> {
    let started = Instant::now();
    let in_val = {
        let mut flags = vec![false; data.n_samples()];
        for &i in val_idx {
            flags[i] = true;
        }
        flags
    };
    let train_idx: Vec<usize> = (0..data.n_samples()).filter(|&i| !in_val[i]).collect();
    let train = data.select_rows(&train_idx);
    let val = data.select_rows(val_idx);

    let task = cfg.loss.kind.task();
    let (train_red, kept) = univariate_screening(&train, cfg.screening_fraction, task)?;
    let val_red = val.restrict_columns(&kept, train_red.grid.clone())?;
    let shrink = penalty.build(&train_red.grid);

    let path = fit_path(&train_red, Some(&val_red), &shrink, cfg)?;

    // best validation score; on ties the scan order keeps the larger penalty
    let mut chosen = 0usize;
    for (i, fit) in path.fits.iter().enumerate() {
        let score = fit.val_score.expect("validation scores are present");
        if score > path.fits[chosen].val_score.unwrap() {
            chosen = i;
        }
    }

    let mut coefficients = Array1::zeros(data.n_features());
    for (r, &m) in kept.iter().enumerate() {
        coefficients[m] = path.fits[chosen].weights[r];
    }

    Ok(FoldFit {
        fold,
        kept,
        lambdas: path.lambdas.clone(),
        val_scores: path
            .fits
            .iter()
            .map(|f| f.val_score.unwrap())
            .collect(),
        chosen,
        coefficients,
        intercept: path.fits[chosen].intercept,
        iterations: path.fits.iter().map(|f| f.diagnostics.iterations).collect(),
        objective_traces: path
            .fits
            .iter()
            .map(|f| f.diagnostics.objective_trace.clone())
            .collect(),
        wall_time_seconds: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::{array, Array2};

    use crate::volume::VolumeGrid;

    fn dataset(x: Array2<f64>, y: Array1<f64>) -> Dataset {
        let p = x.ncols();
        let grid = Arc::new(VolumeGrid::full((p, 1, 1)));
        Dataset::new(x, y, grid).unwrap()
    }

    #[test]
    fn lambda_max_hand_value_no_intercept() {
        let x = array![[1.0, 0.0], [0.0, 2.0]];
        let y = array![1.0, 1.0];
        let d = dataset(x, y);
        let spec = LossSpec::squared().without_intercept();
        assert_relative_eq!(lambda_max(&spec, &d).unwrap(), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn lambda_max_orthogonal_targets_is_degenerate() {
        let x = array![[1.0], [-1.0]];
        let y = array![1.0, 1.0];
        let d = dataset(x, y);
        let spec = LossSpec::squared().without_intercept();
        assert!(matches!(
            lambda_max(&spec, &d),
            Err(Error::DegeneratePath)
        ));
    }

    #[test]
    fn lambda_max_rejects_single_class() {
        let x = array![[1.0], [2.0]];
        let y = array![1.0, 1.0];
        let d = dataset(x, y);
        assert!(matches!(
            lambda_max(&LossSpec::logistic(), &d),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn lambda_grid_endpoints_and_log_spacing() {
        let grid = lambda_grid(2.0, 5, 0.05);
        assert_eq!(grid.len(), 5);
        assert_relative_eq!(grid[0], 2.0, max_relative = 1e-15);
        assert_relative_eq!(grid[4], 0.1, max_relative = 1e-12);
        let ratio = 0.05f64.powf(0.25);
        for w in grid.windows(2) {
            assert!(w[1] < w[0]);
            assert_relative_eq!(w[1] / w[0], ratio, max_relative = 1e-12);
        }
    }

    #[test]
    fn screening_full_fraction_is_identity() {
        let x = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [8.0, 7.0, 9.0], [1.0, 3.0, 2.0]];
        let y = array![1.0, -1.0, 1.0, -1.0];
        let d = dataset(x.clone(), y);
        let (reduced, kept) = univariate_screening(&d, 1.0, TaskKind::Classification).unwrap();
        assert_eq!(kept, vec![0, 1, 2]);
        assert_eq!(reduced.x, x);
    }

    #[test]
    fn screening_keeps_ceil_fraction() {
        let x = Array2::from_shape_fn((6, 10), |(i, j)| ((i * 7 + j * 3) % 11) as f64);
        let y = array![1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        let d = dataset(x, y);
        let (reduced, kept) = univariate_screening(&d, 0.2, TaskKind::Classification).unwrap();
        assert_eq!(kept.len(), 2);
        assert_eq!(reduced.n_features(), 2);
    }

    #[test]
    fn screening_finds_planted_voxel() {
        // voxel 7 carries the class signal, everything else is a fixed
        // pseudo-random pattern
        let n = 16;
        let p = 10;
        let y = Array1::from_iter((0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }));
        let x = Array2::from_shape_fn((n, p), |(i, j)| {
            if j == 7 {
                y[i] * 2.0 + ((i * 13 % 7) as f64) * 0.01
            } else {
                (((i * 31 + j * 17) % 23) as f64 - 11.0) * 0.1
            }
        });
        let d = dataset(x, y);
        let (_, kept) = univariate_screening(&d, 0.2, TaskKind::Classification).unwrap();
        assert!(kept.contains(&7), "kept = {kept:?}");
    }

    #[test]
    fn screening_scores_constant_columns_zero() {
        let x = array![[5.0, 1.0], [5.0, -1.0], [5.0, 2.0], [5.0, -2.0]];
        let y = array![1.0, -1.0, 1.0, -1.0];
        let d = dataset(x, y);
        let scores = univariate_scores(&d, TaskKind::Classification);
        assert_eq!(scores[0], 0.0);
        assert!(scores[1] > 0.0);
        let reg = univariate_scores(&d, TaskKind::Regression);
        assert_eq!(reg[0], 0.0);
        assert!(reg[1].is_finite());
    }

    #[test]
    fn screening_breaks_ties_toward_lower_index() {
        // two identical informative columns: the lower index must win
        let x = array![
            [1.0, 1.0, 0.3],
            [-1.0, -1.0, 0.1],
            [1.0, 1.0, 0.2],
            [-1.0, -1.0, 0.4]
        ];
        let y = array![1.0, -1.0, 1.0, -1.0];
        let d = dataset(x, y);
        let (_, kept) = univariate_screening(&d, 0.4, TaskKind::Classification).unwrap();
        assert_eq!(kept, vec![0, 1]);
    }

    #[test]
    fn folds_are_stratified_and_deterministic() {
        let n = 16;
        let y = Array1::from_iter((0..n).map(|i| if i < 10 { 1.0 } else { -1.0 }));
        let folds = stratified_folds(&y, 8, TaskKind::Classification, 3).unwrap();
        let again = stratified_folds(&y, 8, TaskKind::Classification, 3).unwrap();
        assert_eq!(folds, again);
        assert_eq!(folds.len(), 8);
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..n).collect::<Vec<_>>());
        for fold in &folds {
            assert_eq!(fold.len(), 2, "16 samples over 8 folds is 2 per fold");
            let pos = fold.iter().filter(|&&i| y[i] > 0.0).count();
            // global rate 10/16; per-fold counts may differ by one sample
            assert!(pos >= 1 && pos <= 2, "fold {fold:?} has {pos} positives");
        }
    }

    #[test]
    fn folds_reject_a_singleton_class() {
        let y = array![1.0, -1.0, -1.0, -1.0];
        assert!(stratified_folds(&y, 2, TaskKind::Classification, 0).is_err());
    }

    #[test]
    fn default_config_carries_protocol_constants() {
        let cfg = FitConfig::default();
        assert_eq!(cfg.n_folds, 8);
        assert_eq!(cfg.n_lambdas, 5);
        assert_eq!(cfg.lambda_min_ratio, 0.05);
        assert_eq!(cfg.screening_fraction, 0.20);
        assert_eq!(cfg.solver.tol, 1e-4);
    }
}
