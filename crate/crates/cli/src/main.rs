//! Batch front end for the socialsparse decoder.
//!
//! Subcommands: `fit` (nested-CV decoder fit, writes a weight-map volume),
//! `predict` (score a package with a fitted map), `simulate` (synthetic
//! package generator), and `benchmark` (estimator comparison over repeated
//! outer splits). Machine-readable results go to standard output as single
//! JSON lines; reports are CSV. Exit codes: 0 success, 2 usage error,
//! 3 format error, 4 numeric failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use socialsparse::benchmark::{run_benchmark, summarize, BenchmarkRow};
use socialsparse::io::{
    encode_labels, load_package, read_labels_csv, resolve_package_path, weight_map_from_package,
    weight_map_package, FitMetadata, VolumePackage,
};
use socialsparse::solver::{predict_scores, scores_to_labels, r_squared};
use socialsparse::{
    fit_cv, generate_synthetic, Dataset, Error, FitConfig, LossKind, LossSpec, PenaltyKind,
    SolverConfig, SyntheticSpec, TaskKind,
};

#[derive(Parser)]
#[command(name = "ssdec", version, about = "Structured-sparse linear decoder for 3D volumes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a decoder with nested cross-validation and write the weight map
    Fit(FitArgs),
    /// Score a volume package with a fitted weight map
    Predict(PredictArgs),
    /// Generate a synthetic spatial-decoding package
    Simulate(SimulateArgs),
    /// Compare estimators over repeated outer train/test splits
    Benchmark(BenchmarkArgs),
}

#[derive(Args)]
struct ProtocolArgs {
    /// Loss: logistic (classification) or squared (regression)
    #[arg(long, default_value = "logistic")]
    loss: String,
    /// Cross-validation folds
    #[arg(long, default_value_t = 8)]
    folds: usize,
    /// Penalty levels on the path
    #[arg(long = "n-lambdas", default_value_t = 5)]
    n_lambdas: usize,
    /// Smallest penalty level as a fraction of the path start
    #[arg(long = "lambda-min-ratio", default_value_t = 0.05)]
    lambda_min_ratio: f64,
    /// Fraction of voxels kept by univariate screening
    #[arg(long = "screen", default_value_t = 0.20)]
    screening: f64,
    /// Relative weight of the six face neighbors in the social penalty
    #[arg(long = "neighbor-weight", default_value_t = 0.7)]
    neighbor_weight: f64,
    /// Relative stopping cutoff on the weight change
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
}

impl ProtocolArgs {
    fn config(&self) -> Result<FitConfig, Error> {
        let kind: LossKind = self.loss.parse()?;
        Ok(FitConfig {
            n_folds: self.folds,
            n_lambdas: self.n_lambdas,
            lambda_min_ratio: self.lambda_min_ratio,
            screening_fraction: self.screening,
            loss: LossSpec {
                kind,
                fit_intercept: true,
            },
            solver: SolverConfig {
                tol: self.tol,
                ..SolverConfig::default()
            },
            early_stopping: true,
            seed: self.seed,
        })
    }

    fn penalty(&self, name: &str) -> Result<PenaltyKind, Error> {
        match name {
            "social" => Ok(PenaltyKind::Social {
                neighbor_weight: self.neighbor_weight,
            }),
            other => other.parse(),
        }
    }

    fn run_in_pool<T: Send>(&self, job: impl FnOnce() -> T + Send) -> T {
        match self.threads {
            Some(t) if t > 0 => rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .expect("thread pool")
                .install(job),
            _ => job(),
        }
    }
}

#[derive(Args)]
struct FitArgs {
    /// Input volume package (.ssvol.json path or stem)
    #[arg(long)]
    data: PathBuf,
    /// Label table (sample,label); defaults to the package's own labels
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Output weight-map package path
    #[arg(long)]
    out: PathBuf,
    /// Penalty: social, l1, or group
    #[arg(long, default_value = "social")]
    penalty: String,
    #[command(flatten)]
    protocol: ProtocolArgs,
}

#[derive(Args)]
struct PredictArgs {
    /// Fitted weight-map package
    #[arg(long)]
    model: PathBuf,
    /// Volume package to score
    #[arg(long)]
    data: PathBuf,
    /// Output CSV (sample,score,label)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Grid dimensions as nx,ny,nz
    #[arg(long, default_value = "20,20,20")]
    dims: String,
    #[arg(long = "n-samples", default_value_t = 200)]
    n_samples: usize,
    #[arg(long = "n-blobs", default_value_t = 2)]
    n_blobs: usize,
    /// Blob radius in voxels
    #[arg(long = "blob-radius", default_value_t = 3)]
    blob_radius: usize,
    /// Signal-to-noise ratio of the targets
    #[arg(long, default_value_t = 4.0)]
    snr: f64,
    /// Smoothing kernel width (FWHM) in voxels
    #[arg(long, default_value_t = 2.0)]
    fwhm: f64,
    /// Task: classification or regression
    #[arg(long, default_value = "classification")]
    task: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output package path or stem; the ground truth goes to <stem>_truth
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Input volume package
    #[arg(long)]
    data: PathBuf,
    /// Label table; defaults to the package's own labels
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Outer split repeats
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    /// Comma-separated estimator list
    #[arg(long, default_value = "social,l1,group")]
    estimators: String,
    /// Output CSV report
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    protocol: ProtocolArgs,
}

#[derive(Serialize)]
struct FitStdout {
    cv_accuracy: f64,
    wall_time: f64,
    n_nonzero: usize,
}

#[derive(Serialize)]
struct SummaryStdout<'a> {
    summaries: Vec<SummaryEntry<'a>>,
}

#[derive(Serialize)]
struct SummaryEntry<'a> {
    estimator: &'a str,
    accuracy_mean: f64,
    accuracy_std: f64,
    wall_time_mean: f64,
    wall_time_std: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Benchmark(args) => cmd_benchmark(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let mut source = std::error::Error::source(&err);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidArg(_) | Error::SingleClass | Error::DegeneratePath => 2,
        Error::DimMismatch(_) | Error::Format { .. } | Error::Io { .. } => 3,
        Error::NonFinite(_) | Error::NonFiniteIterate { .. } => 4,
        Error::AtLambda { source, .. } => exit_code(source),
    }
}

fn load_dataset(
    data: &Path,
    labels: Option<&Path>,
    task: TaskKind,
) -> Result<(VolumePackage, Dataset), Error> {
    let pkg = VolumePackage::load(data)?;
    let dataset = match labels {
        Some(path) => {
            let raw = read_labels_csv(path)?;
            if raw.len() != pkg.header.n_samples {
                return Err(Error::format(
                    path,
                    format!(
                        "{} labels for {} samples",
                        raw.len(),
                        pkg.header.n_samples
                    ),
                ));
            }
            let grid = std::sync::Arc::new(pkg.grid()?);
            let x = pkg.design_matrix(&grid);
            Dataset::new(x, encode_labels(&raw, task)?, grid)?
        }
        None => pkg.dataset(task)?.1,
    };
    Ok((pkg, dataset))
}

fn cmd_fit(args: FitArgs) -> Result<(), Error> {
    let cfg = args.protocol.config()?;
    let penalty = args.protocol.penalty(&args.penalty)?;
    let (_, dataset) = load_dataset(
        &args.data,
        args.labels.as_deref(),
        cfg.loss.kind.task(),
    )?;
    let fit = args.protocol.run_in_pool(|| fit_cv(&dataset, &penalty, &cfg))?;

    let metadata = FitMetadata {
        lambda_grid: fit.folds.iter().map(|f| f.lambdas.clone()).collect(),
        fold_lambdas: fit.folds.iter().map(|f| f.chosen_lambda()).collect(),
        intercept: fit.weights.intercept,
        runtime_seconds: fit.wall_time_seconds,
    };
    weight_map_package(&fit.weights, Some(metadata)).save(&args.out)?;

    let line = FitStdout {
        cv_accuracy: fit.cv_score,
        wall_time: fit.wall_time_seconds,
        n_nonzero: fit.weights.n_nonzero(),
    };
    println!("{}", serde_json::to_string(&line).expect("serializable"));
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<(), Error> {
    let model_pkg = VolumePackage::load(&args.model)?;
    let model = weight_map_from_package(&model_pkg)?;
    let data_pkg = VolumePackage::load(&args.data)?;
    let grid = data_pkg.grid()?;
    if !model.grid.same_geometry(&grid) {
        return Err(Error::DimMismatch(format!(
            "model grid {:?} with {} in-mask voxels does not match data grid {:?} with {}",
            model.grid.dims(),
            model.grid.masked_len(),
            grid.dims(),
            grid.masked_len()
        )));
    }
    let x = data_pkg.design_matrix(&grid);
    let scores = predict_scores(&model, &x.view())?;
    let labels = scores_to_labels(&scores.view());

    let mut out = String::from("sample,score,label\n");
    for (i, (s, l)) in scores.iter().zip(labels.iter()).enumerate() {
        out.push_str(&format!("{i},{s},{}\n", if *l > 0.0 { "1" } else { "-1" }));
    }
    fs::write(&args.out, out).map_err(|e| Error::io(&args.out, e))?;

    if let Some(raw) = &data_pkg.labels {
        if let Ok(y) = encode_labels(raw, TaskKind::Classification) {
            let hits = labels
                .iter()
                .zip(y.iter())
                .filter(|(a, b)| a == b)
                .count();
            println!(
                "{}",
                serde_json::json!({ "accuracy": hits as f64 / y.len() as f64 })
            );
        } else if let Ok(y) = encode_labels(raw, TaskKind::Regression) {
            println!(
                "{}",
                serde_json::json!({ "r_squared": r_squared(&scores.view(), &y.view()) })
            );
        }
    }
    Ok(())
}

fn parse_dims(s: &str) -> Result<(usize, usize, usize), Error> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|v| v.trim().parse())
        .collect::<Result<_, _>>()
        .map_err(|_| Error::InvalidArg(format!("cannot parse dims '{s}' as nx,ny,nz")))?;
    if parts.len() != 3 {
        return Err(Error::InvalidArg(format!(
            "dims need exactly three components, got '{s}'"
        )));
    }
    Ok((parts[0], parts[1], parts[2]))
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Error> {
    let task = match args.task.as_str() {
        "classification" => TaskKind::Classification,
        "regression" => TaskKind::Regression,
        other => {
            return Err(Error::InvalidArg(format!(
                "unknown task '{other}' (expected classification or regression)"
            )))
        }
    };
    let spec = SyntheticSpec {
        dims: parse_dims(&args.dims)?,
        n_samples: args.n_samples,
        n_blobs: args.n_blobs,
        blob_radius: args.blob_radius,
        snr: args.snr,
        smoothing_fwhm: args.fwhm,
        task,
        seed: args.seed,
    };
    let data = generate_synthetic(&spec)?;
    let package_path = resolve_package_path(&args.out);
    data.package.save(&package_path)?;

    let stem = package_path
        .to_string_lossy()
        .strip_suffix(".ssvol.json")
        .expect("resolved path carries the suffix")
        .to_string();
    let truth_path = PathBuf::from(format!("{stem}_truth.ssvol.json"));
    weight_map_package(&data.truth, None).save(&truth_path)?;

    println!(
        "{}",
        serde_json::json!({
            "package": package_path.to_string_lossy(),
            "truth": truth_path.to_string_lossy(),
            "n_samples": spec.n_samples,
            "true_nonzero": data.truth.n_nonzero(),
        })
    );
    Ok(())
}

fn write_benchmark_csv(path: &Path, rows: &[BenchmarkRow]) -> Result<(), Error> {
    let mut out = String::from("estimator,fold,accuracy,wall_time_seconds,n_nonzero,chosen_lambda\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.estimator, r.fold, r.accuracy, r.wall_time_seconds, r.n_nonzero, r.chosen_lambda
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn cmd_benchmark(args: BenchmarkArgs) -> Result<(), Error> {
    let cfg = args.protocol.config()?;
    let estimators: Vec<PenaltyKind> = args
        .estimators
        .split(',')
        .map(|name| args.protocol.penalty(name.trim()))
        .collect::<Result<_, _>>()?;
    if estimators.is_empty() {
        return Err(Error::InvalidArg("estimator list is empty".into()));
    }
    let (_, dataset) = load_dataset(
        &args.data,
        args.labels.as_deref(),
        cfg.loss.kind.task(),
    )?;
    let rows = args
        .protocol
        .run_in_pool(|| run_benchmark(&dataset, &estimators, args.repeats, &cfg))?;
    write_benchmark_csv(&args.out, &rows)?;

    let summaries = summarize(&rows);
    let line = SummaryStdout {
        summaries: summaries
            .iter()
            .map(|s| SummaryEntry {
                estimator: s.estimator,
                accuracy_mean: s.accuracy_mean,
                accuracy_std: s.accuracy_std,
                wall_time_mean: s.wall_time_mean,
                wall_time_std: s.wall_time_std,
            })
            .collect(),
    };
    println!("{}", serde_json::to_string(&line).expect("serializable"));
    Ok(())
}
