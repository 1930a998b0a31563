//! `rgc` command-line tool: fit closed-form classifier heads, calibrate
//! them against reference weights, train and evaluate logistic-regression
//! baselines, run covariance-similarity studies, and generate synthetic
//! datasets.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/format error,
//! 3 numerical error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rgc::calibration;
use rgc::cmd::cmd_study;
use rgc::logreg::{self, BatchSize, InitStddev, TrainConfig};
use rgc::solver::{self, EpsilonMode, RgcConfig};
use rgc::stats::{self, ClassStatistics};
use rgc::store;
use rgc::synth::{self, CovarianceMode, SynthSpec};
use rgc::types::{FeatureMatrix, LabelVector, LinearClassifier};

mod report;

use report::{BenchReport, MethodRecord};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "rgc",
    version,
    about = "Closed-form initialization for softmax linear classifier heads"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a closed-form classifier from features and labels.
    Fit(FitArgs),
    /// Rescale a model to match the weight moments of a reference model.
    Calibrate(CalibrateArgs),
    /// Evaluate a model on labeled features.
    Eval(EvalArgs),
    /// Train a softmax linear classifier by gradient descent.
    TrainLr(TrainLrArgs),
    /// Measure how class-independent per-class covariances are.
    CmdStudy(CmdStudyArgs),
    /// Generate a seeded synthetic Gaussian dataset with ground truth.
    Synth(SynthArgs),
    /// Compare initialization methods under one training configuration.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FitMethod {
    Rgc,
    Ncc,
}

#[derive(Clone, Copy, ValueEnum)]
enum EpsilonModeArg {
    /// Ridge is epsilon itself.
    Absolute,
    /// Ridge is epsilon times the mean covariance eigenvalue.
    Relative,
}

impl From<EpsilonModeArg> for EpsilonMode {
    fn from(m: EpsilonModeArg) -> Self {
        match m {
            EpsilonModeArg::Absolute => EpsilonMode::Absolute,
            EpsilonModeArg::Relative => EpsilonMode::RelativeToMeanEigenvalue,
        }
    }
}

#[derive(Args)]
struct DataArgs {
    /// Feature file (FMAT binary, or CSV detected by content).
    #[arg(long)]
    features: PathBuf,
    /// Label file (LVEC binary).
    #[arg(long)]
    labels: PathBuf,
    /// Treat the first CSV line as a header row.
    #[arg(long, default_value_t = false)]
    csv_header: bool,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum)]
    method: FitMethod,
    /// Ridge added to the covariance diagonal (default 0.1).
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, value_enum, default_value = "absolute")]
    epsilon_mode: EpsilonModeArg,
    /// Output model path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Use the inverted variance-ratio form of the scale factor
    /// (compatibility variant; does not match reference moments).
    #[arg(long = "eq19-as-printed", default_value_t = false)]
    eq19_as_printed: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Also write the metrics as a JSON document.
    #[arg(long)]
    out_json: Option<PathBuf>,
}

#[derive(Args)]
struct TrainLrArgs {
    /// Initialization: "rgc", "ncc", "random", or a model file path.
    #[arg(long)]
    init: String,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    /// Mini-batch size, or "full".
    #[arg(long, default_value = "full")]
    batch: String,
    #[arg(long, default_value_t = 0.0005)]
    weight_decay: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    log_every: usize,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    test_features: Option<PathBuf>,
    #[arg(long)]
    test_labels: Option<PathBuf>,
    /// Where to write the training trace CSV.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Output model path.
    #[arg(long)]
    out: PathBuf,
    /// Ridge for rgc initialization.
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, value_enum, default_value = "absolute")]
    epsilon_mode: EpsilonModeArg,
}

#[derive(Args)]
struct CmdStudyArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 2)]
    pca_dims: usize,
    /// Output report path (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum CovArg {
    Shared,
    Distinct,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    classes: usize,
    #[arg(long)]
    dim: usize,
    #[arg(long)]
    per_class: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "shared")]
    cov: CovArg,
    #[arg(long, default_value_t = 10.0)]
    cond: f64,
    #[arg(long, default_value_t = 1.0)]
    mean_scale: f64,
    /// Prefix for the .fmat / .lvec / .truth.json outputs.
    #[arg(long)]
    out_prefix: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    test_features: Option<PathBuf>,
    #[arg(long)]
    test_labels: Option<PathBuf>,
    /// Comma-separated list from: rgc, ncc, random.
    #[arg(long, default_value = "rgc,ncc,random")]
    methods: String,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    /// The loss threshold is the best final loss times (1 + margin).
    #[arg(long, default_value_t = 0.05)]
    threshold_margin: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    log_every: usize,
    #[arg(long, default_value_t = 0.0005)]
    weight_decay: f64,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, value_enum, default_value = "absolute")]
    epsilon_mode: EpsilonModeArg,
    /// Output report path (JSON).
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help and version are successful outputs, not usage errors
            let benign = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if benign {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_USAGE)
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &rgc::Error) -> u8 {
    use rgc::Error::*;
    match e {
        Config(_) => EXIT_USAGE,
        Io { .. } | Format(_) | Length(_) | Validation(_) => EXIT_DATA,
        NotPositiveDefinite { .. } | NoConvergence(_) | DegenerateWeights(_)
        | Diverged { .. } => EXIT_NUMERICAL,
    }
}

fn run(command: Command) -> rgc::Result<()> {
    match command {
        Command::Fit(a) => run_fit(a),
        Command::Calibrate(a) => run_calibrate(a),
        Command::Eval(a) => run_eval(a),
        Command::TrainLr(a) => run_train_lr(a),
        Command::CmdStudy(a) => run_cmd_study(a),
        Command::Synth(a) => run_synth(a),
        Command::Bench(a) => run_bench(a),
    }
}

/// Load features from FMAT (by magic sniff) or CSV.
fn load_features(path: &Path, csv_header: bool) -> rgc::Result<FeatureMatrix> {
    let head = std::fs::read(path).map_err(|e| rgc::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    if head.starts_with(b"FMAT") {
        store::read_features(path)
    } else {
        store::read_csv_features(path, csv_header)
    }
}

fn load_dataset(data: &DataArgs) -> rgc::Result<(FeatureMatrix, LabelVector)> {
    let x = load_features(&data.features, data.csv_header)?;
    let y = store::read_labels(&data.labels)?;
    Ok((x, y))
}

fn run_fit(a: FitArgs) -> rgc::Result<()> {
    let (x, y) = load_dataset(&a.data)?;
    if matches!(a.method, FitMethod::Ncc) && a.epsilon.is_some() {
        eprintln!("warning: --epsilon is ignored by --method ncc");
    }
    let t0 = Instant::now();
    let s = stats::fit_statistics(&x, &y)?;
    warn_rank(&s);
    let model = match a.method {
        FitMethod::Rgc => solver::fit_rgc(
            &s,
            &RgcConfig {
                epsilon: a.epsilon.unwrap_or(0.1),
                epsilon_mode: a.epsilon_mode.into(),
            },
        )?,
        FitMethod::Ncc => solver::fit_ncc(&s),
    };
    let fit_seconds = t0.elapsed().as_secs_f64();
    store::write_model(&model, &a.out)?;
    println!("fit_seconds: {fit_seconds}");
    println!("model: {}", a.out.display());
    Ok(())
}

fn warn_rank(s: &ClassStatistics) {
    if let Some(w) = s.rank_warning() {
        eprintln!("warning: {w}");
    }
}

fn run_calibrate(a: CalibrateArgs) -> rgc::Result<()> {
    let model = store::read_model(&a.model)?;
    let reference = store::read_model(&a.reference)?;
    let matched = calibration::compute_calibration(&model, &reference)?;
    let inverted = calibration::compute_calibration_inverted(&model, &reference)?;
    let (used, alternate_alpha) = if a.eq19_as_printed {
        (inverted, matched.alpha)
    } else {
        (matched, inverted.alpha)
    };
    let mut out = calibration::apply_calibration(&model, &used)?;
    if let Some(rec) = out.metadata_mut().calibration.as_mut() {
        rec.alpha_alternate = Some(alternate_alpha);
    }
    store::write_model(&out, &a.out)?;
    let v_norm = used.v.iter().map(|v| v * v).sum::<f64>().sqrt();
    println!("alpha: {}", used.alpha);
    println!("beta: {}", used.beta);
    println!("v_norm: {v_norm}");
    println!("model: {}", a.out.display());
    Ok(())
}

fn run_eval(a: EvalArgs) -> rgc::Result<()> {
    let model = store::read_model(&a.model)?;
    let (x, y) = load_dataset(&a.data)?;
    let e = logreg::evaluate(&model, &x, &y)?;
    println!("accuracy: {}", e.accuracy);
    println!("mean_ce: {}", e.mean_ce);
    if let Some(path) = a.out_json {
        report::write_eval_json(&path, e.accuracy, e.mean_ce, x.rows())?;
        println!("report: {}", path.display());
    }
    Ok(())
}

fn parse_batch(s: &str) -> rgc::Result<BatchSize> {
    if s.eq_ignore_ascii_case("full") {
        return Ok(BatchSize::Full);
    }
    s.parse::<usize>()
        .map(BatchSize::Size)
        .map_err(|_| rgc::Error::Config(format!("--batch must be a count or \"full\", got {s:?}")))
}

fn run_train_lr(a: TrainLrArgs) -> rgc::Result<()> {
    let (x, y) = load_dataset(&a.data)?;
    let test = match (&a.test_features, &a.test_labels) {
        (Some(f), Some(l)) => Some((load_features(f, a.data.csv_header)?, store::read_labels(l)?)),
        (None, None) => None,
        _ => {
            return Err(rgc::Error::Config(
                "--test-features and --test-labels must be given together".into(),
            ))
        }
    };
    let init = build_init(
        &a.init,
        &x,
        &y,
        a.epsilon,
        a.epsilon_mode.into(),
        a.seed,
    )?;
    let cfg = TrainConfig {
        learning_rate: a.lr,
        iterations: a.iters,
        batch_size: parse_batch(&a.batch)?,
        weight_decay: a.weight_decay,
        seed: a.seed,
        log_every: a.log_every,
    };
    let test_ref = test.as_ref().map(|(f, l)| (f, l));
    let (model, trace) = logreg::train(&init, &x, &y, test_ref, &cfg)?;
    store::write_model(&model, &a.out)?;
    if let Some(path) = &a.trace_out {
        trace.write_csv(path)?;
    }
    let last = trace.final_record().expect("trace has the initial point");
    println!("final_train_loss: {}", last.train_loss);
    println!("final_train_accuracy: {}", last.train_accuracy);
    if let (Some(l), Some(acc)) = (last.test_loss, last.test_accuracy) {
        println!("final_test_loss: {l}");
        println!("final_test_accuracy: {acc}");
    }
    println!("model: {}", a.out.display());
    Ok(())
}

/// Initialization for train-lr and bench: a named method or a model file.
fn build_init(
    name: &str,
    x: &FeatureMatrix,
    y: &LabelVector,
    epsilon: f64,
    epsilon_mode: EpsilonMode,
    seed: u64,
) -> rgc::Result<LinearClassifier> {
    match name {
        "rgc" => {
            let s = stats::fit_statistics(x, y)?;
            warn_rank(&s);
            solver::fit_rgc(
                &s,
                &RgcConfig {
                    epsilon,
                    epsilon_mode,
                },
            )
        }
        "ncc" => {
            let s = stats::fit_statistics(x, y)?;
            warn_rank(&s);
            Ok(solver::fit_ncc(&s))
        }
        "random" => Ok(logreg::random_init(
            y.num_classes(),
            x.cols(),
            InitStddev::Msra,
            seed,
        )),
        path => store::read_model(Path::new(path)),
    }
}

fn run_cmd_study(a: CmdStudyArgs) -> rgc::Result<()> {
    let (x, y) = load_dataset(&a.data)?;
    let rep = cmd_study(&x, &y, a.pca_dims)?;
    rep.write_json(&a.out)?;
    println!("mean_cmd: {}", rep.mean_cmd);
    println!("var_cmd: {}", rep.var_cmd);
    println!("explained_variance_ratio: {}", rep.explained_variance_ratio);
    println!("report: {}", a.out.display());
    Ok(())
}

fn run_synth(a: SynthArgs) -> rgc::Result<()> {
    let spec = SynthSpec {
        num_classes: a.classes,
        dim: a.dim,
        samples_per_class: a.per_class,
        seed: a.seed,
        mean_scale: a.mean_scale,
        covariance_mode: match a.cov {
            CovArg::Shared => CovarianceMode::Shared,
            CovArg::Distinct => CovarianceMode::Distinct,
        },
        condition_number: a.cond,
    };
    let (x, y, truth) = synth::generate(&spec)?;
    let fmat = with_suffix(&a.out_prefix, ".fmat");
    let lvec = with_suffix(&a.out_prefix, ".lvec");
    let truth_path = with_suffix(&a.out_prefix, ".truth.json");
    store::write_features(&x, &fmat)?;
    store::write_labels(&y, &lvec)?;
    synth::write_truth(&truth, &truth_path)?;
    println!("features: {}", fmat.display());
    println!("labels: {}", lvec.display());
    println!("truth: {}", truth_path.display());
    Ok(())
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn run_bench(a: BenchArgs) -> rgc::Result<()> {
    let methods: Vec<String> = a
        .methods
        .split(',')
        .map(|m| m.trim().to_string())
        .filter(|m| !m.is_empty())
        .collect();
    if methods.is_empty() {
        return Err(rgc::Error::Config("--methods must name at least one method".into()));
    }
    for m in &methods {
        if !matches!(m.as_str(), "rgc" | "ncc" | "random") {
            return Err(rgc::Error::Config(format!(
                "unknown method {m:?}; expected rgc, ncc, or random"
            )));
        }
    }
    let mut dedup = methods.clone();
    dedup.sort();
    dedup.dedup();
    if dedup.len() != methods.len() {
        return Err(rgc::Error::Config("duplicate method in --methods".into()));
    }

    let (x, y) = load_dataset(&a.data)?;
    let test = match (&a.test_features, &a.test_labels) {
        (Some(f), Some(l)) => Some((load_features(f, a.data.csv_header)?, store::read_labels(l)?)),
        (None, None) => None,
        _ => {
            return Err(rgc::Error::Config(
                "--test-features and --test-labels must be given together".into(),
            ))
        }
    };
    let cfg = TrainConfig {
        learning_rate: a.lr,
        iterations: a.iters,
        batch_size: BatchSize::Full,
        weight_decay: a.weight_decay,
        seed: a.seed,
        log_every: a.log_every,
    };
    let epsilon_mode: EpsilonMode = a.epsilon_mode.into();

    let threads: usize = std::env::var("RGC_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1);

    // evaluations are independent and deterministic, so running them on
    // worker threads cannot change the report
    let mut results: Vec<(String, MethodRecord, rgc::logreg::TrainTrace)> = Vec::new();
    for chunk in methods.chunks(threads) {
        let mut batch: Vec<_> = Vec::new();
        std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|m| {
                    let x = &x;
                    let y = &y;
                    let test = &test;
                    let cfg = &cfg;
                    scope.spawn(move || {
                        bench_method(m, x, y, test.as_ref(), cfg, a.epsilon, epsilon_mode, a.seed)
                    })
                })
                .collect();
            for (m, h) in chunk.iter().zip(handles) {
                batch.push((m.clone(), h.join().expect("bench worker panicked")));
            }
        });
        for (m, r) in batch {
            let (record, trace) = r?;
            results.push((m, record, trace));
        }
    }

    // threshold: best final train loss across methods, times (1 + margin)
    let best_final = results
        .iter()
        .map(|(_, _, t)| t.final_record().expect("non-empty trace").train_loss)
        .fold(f64::INFINITY, f64::min);
    let threshold = best_final * (1.0 + a.threshold_margin);
    let mut records = Vec::new();
    for (name, mut record, trace) in results {
        record.iters_to_threshold = trace
            .first_iteration_below(threshold)
            .map(report::ItersToThreshold::Reached)
            .unwrap_or(report::ItersToThreshold::not_reached());
        println!(
            "{name}: init_accuracy {} final_accuracy {} iters_to_threshold {}",
            record.init_accuracy, record.final_accuracy, record.iters_to_threshold
        );
        records.push(record);
    }

    let report = BenchReport {
        seed: a.seed,
        threshold,
        threshold_margin: a.threshold_margin,
        learning_rate: a.lr,
        iterations: a.iters,
        weight_decay: a.weight_decay,
        epsilon: a.epsilon,
        methods: records,
    };
    report.write_json(&a.out)?;
    println!("report: {}", a.out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn bench_method(
    method: &str,
    x: &FeatureMatrix,
    y: &LabelVector,
    test: Option<&(FeatureMatrix, LabelVector)>,
    cfg: &TrainConfig,
    epsilon: f64,
    epsilon_mode: EpsilonMode,
    seed: u64,
) -> rgc::Result<(MethodRecord, rgc::logreg::TrainTrace)> {
    // timed region covers exactly the fit from features to weights
    let t0 = Instant::now();
    let init = build_init(method, x, y, epsilon, epsilon_mode, seed)?;
    let wallclock_fit_seconds = t0.elapsed().as_secs_f64();

    let (ex, ey) = match test {
        Some((f, l)) => (f, l),
        None => (x, y),
    };
    let init_eval = logreg::evaluate(&init, ex, ey)?;
    let test_ref = test.map(|(f, l)| (f, l));
    let (final_model, trace) = logreg::train(&init, x, y, test_ref, cfg)?;
    let final_eval = logreg::evaluate(&final_model, ex, ey)?;
    Ok((
        MethodRecord {
            method: method.to_string(),
            init_accuracy: init_eval.accuracy,
            init_ce: init_eval.mean_ce,
            final_accuracy: final_eval.accuracy,
            final_ce: final_eval.mean_ce,
            iters_to_threshold: report::ItersToThreshold::not_reached(),
            wallclock_fit_seconds,
        },
        trace,
    ))
}
