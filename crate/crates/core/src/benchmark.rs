//! Outer evaluation loop: repeated random stratified 80/20 splits, one full
//! nested-CV fit per estimator per split, timed end to end (the wall time of
//! a row covers the whole fit including parameter selection).

use rand::Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::rng::{stream_rng, STREAM_OUTER_SPLIT};
use crate::select::{fit_cv, FitConfig};
use crate::shrinkage::PenaltyKind;
use crate::solver::validation_score;
use crate::volume::{Dataset, TaskKind};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub estimator: &'static str,
    /// Outer repeat index.
    pub fold: usize,
    /// Held-out accuracy (classification) or R^2 (regression).
    pub accuracy: f64,
    pub wall_time_seconds: f64,
    pub n_nonzero: usize,
    /// Geometric mean of the per-fold chosen penalty levels.
    pub chosen_lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSummary {
    pub estimator: &'static str,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub wall_time_mean: f64,
    pub wall_time_std: f64,
}

/// Deterministic stratified 80/20 split for one repeat. Returns
/// (train, test) index lists in ascending order.
pub fn stratified_split(
    y: &ndarray::Array1<f64>,
    task: TaskKind,
    test_fraction: f64,
    seed: u64,
    repeat: usize,
) -> (Vec<usize>, Vec<usize>) {
    let n = y.len();
    let mut rng = stream_rng(seed, STREAM_OUTER_SPLIT + repeat as u64);
    let mut shuffle = |mut idx: Vec<usize>| {
        for i in (1..idx.len()).rev() {
            idx.swap(i, rng.random_range(0..=i));
        }
        idx
    };
    let strata: Vec<Vec<usize>> = match task {
        TaskKind::Classification => {
            let pos = (0..n).filter(|&i| y[i] > 0.0).collect();
            let neg = (0..n).filter(|&i| y[i] <= 0.0).collect();
            vec![shuffle(pos), shuffle(neg)]
        }
        TaskKind::Regression => vec![shuffle((0..n).collect())],
    };
    let mut train = Vec::new();
    let mut test = Vec::new();
    for stratum in strata {
        let n_test = ((stratum.len() as f64 * test_fraction).floor() as usize)
            .max(1)
            .min(stratum.len().saturating_sub(1));
        test.extend_from_slice(&stratum[..n_test]);
        train.extend_from_slice(&stratum[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Run every estimator over `repeats` outer splits. Rows are ordered by
/// estimator (in the given order), then repeat; the computation itself may be
/// parallel, results are reduced in that fixed order.
pub fn run_benchmark(
    data: &Dataset,
    estimators: &[PenaltyKind],
    repeats: usize,
    cfg: &FitConfig,
) -> Result<Vec<BenchmarkRow>> {
    let task = cfg.loss.kind.task();
    data.validate_for(task)?;
    let jobs: Vec<(usize, usize)> = (0..estimators.len())
        .flat_map(|e| (0..repeats).map(move |r| (e, r)))
        .collect();
    jobs.par_iter()
        .map(|&(e, r)| {
            let penalty = &estimators[e];
            let (train_idx, test_idx) = stratified_split(&data.y, task, 0.2, cfg.seed, r);
            let train = data.select_rows(&train_idx);
            let test = data.select_rows(&test_idx);
            let fit = fit_cv(&train, penalty, cfg)?;
            let accuracy = validation_score(
                cfg.loss.kind,
                &test.x.view(),
                &test.y.view(),
                &fit.weights.values.view(),
                fit.weights.intercept,
            );
            let log_mean = fit
                .folds
                .iter()
                .map(|f| f.chosen_lambda().ln())
                .sum::<f64>()
                / fit.folds.len() as f64;
            Ok(BenchmarkRow {
                estimator: penalty.name(),
                fold: r,
                accuracy,
                wall_time_seconds: fit.wall_time_seconds,
                n_nonzero: fit.weights.n_nonzero(),
                chosen_lambda: log_mean.exp(),
            })
        })
        .collect()
}

/// Mean and sample standard deviation per estimator, in first-appearance
/// order. The standard deviation of a single repeat is reported as 0.
pub fn summarize(rows: &[BenchmarkRow]) -> Vec<EstimatorSummary> {
    let mut names: Vec<&'static str> = Vec::new();
    for row in rows {
        if !names.contains(&row.estimator) {
            names.push(row.estimator);
        }
    }
    names
        .into_iter()
        .map(|name| {
            let acc: Vec<f64> = rows
                .iter()
                .filter(|r| r.estimator == name)
                .map(|r| r.accuracy)
                .collect();
            let wall: Vec<f64> = rows
                .iter()
                .filter(|r| r.estimator == name)
                .map(|r| r.wall_time_seconds)
                .collect();
            let (am, astd) = mean_std(&acc);
            let (wm, wstd) = mean_std(&wall);
            EstimatorSummary {
                estimator: name,
                accuracy_mean: am,
                accuracy_std: astd,
                wall_time_mean: wm,
                wall_time_std: wstd,
            }
        })
        .collect()
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;

    #[test]
    fn split_is_stratified_and_deterministic() {
        let y = Array1::from_iter((0..50).map(|i| if i < 30 { 1.0 } else { -1.0 }));
        let (train, test) = stratified_split(&y, TaskKind::Classification, 0.2, 9, 0);
        let (train2, test2) = stratified_split(&y, TaskKind::Classification, 0.2, 9, 0);
        assert_eq!(train, train2);
        assert_eq!(test, test2);
        assert_eq!(test.len(), 10);
        assert_eq!(train.len(), 40);
        let test_pos = test.iter().filter(|&&i| y[i] > 0.0).count();
        assert_eq!(test_pos, 6);
        let (_, other_repeat) = stratified_split(&y, TaskKind::Classification, 0.2, 9, 1);
        assert_ne!(test, other_repeat);
    }

    #[test]
    fn mean_std_of_single_value_is_zero_std() {
        let (m, s) = mean_std(&[2.5]);
        assert_eq!(m, 2.5);
        assert_eq!(s, 0.0);
    }
}
