//! Multinomial logistic regression on fixed features: softmax scores,
//! cross-entropy loss and gradient, a plain (S)GD trainer, and evaluation.
//!
//! The optimizer minimizes mean cross-entropy plus an L2 penalty
//! `(weight_decay/2) * (|W|^2 + |b|^2)` on both weights and bias. Logged
//! trace losses are the unregularized mean cross-entropy, so traces from
//! runs with different decay settings stay comparable.

use std::io::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::numerics::{stable_sum, CompensatedSum};
use crate::rng::{GaussianSource, SplitMix64};
use crate::solver::argmax_rows;
use crate::types::{FeatureMatrix, LabelVector, LinearClassifier, ModelMetadata};

/// Mini-batch size: the whole training set, or a fixed count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchSize {
    Full,
    Size(usize),
}

/// Gradient-descent settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    pub batch_size: BatchSize,
    /// L2 coefficient applied to both weights and bias.
    pub weight_decay: f64,
    pub seed: u64,
    /// Trace every this many iterations (iteration 0 is always traced).
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            iterations: 1000,
            batch_size: BatchSize::Full,
            weight_decay: 0.0005,
            seed: 0,
            log_every: 100,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if self.weight_decay < 0.0 || !self.weight_decay.is_finite() {
            return Err(Error::Config(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        if self.log_every == 0 {
            return Err(Error::Config("log_every must be at least 1".into()));
        }
        if let BatchSize::Size(0) = self.batch_size {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// One logged point of a training run. Losses are unregularized mean
/// cross-entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_loss: Option<f64>,
    pub test_accuracy: Option<f64>,
    /// `train_loss / test_loss`; absent without test data or when the test
    /// loss is exactly zero.
    pub loss_ratio: Option<f64>,
}

/// Logged curve of a training run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
}

impl TrainTrace {
    pub const CSV_HEADER: &'static str =
        "iter,train_loss,train_acc,test_loss,test_acc,loss_ratio";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.iteration,
                r.train_loss,
                r.train_accuracy,
                opt(r.test_loss),
                opt(r.test_accuracy),
                opt(r.loss_ratio),
            ));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv().as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    /// First logged iteration whose train loss is at or below `threshold`.
    pub fn first_iteration_below(&self, threshold: f64) -> Option<usize> {
        self.records
            .iter()
            .find(|r| r.train_loss <= threshold)
            .map(|r| r.iteration)
    }

    pub fn final_record(&self) -> Option<&TraceRecord> {
        self.records.last()
    }
}

/// Row-wise softmax of classifier scores, overflow-safe via max-logit
/// subtraction. Rows sum to 1.
pub fn softmax_probs(c: &LinearClassifier, x: &FeatureMatrix) -> Result<Array2<f64>> {
    if x.cols() != c.dim() {
        return Err(Error::Validation(format!(
            "feature dim {} does not match classifier dim {}",
            x.cols(),
            c.dim()
        )));
    }
    let mut scores = c.scores(x.as_array());
    softmax_rows_in_place(&mut scores);
    Ok(scores)
}

fn softmax_rows_in_place(scores: &mut Array2<f64>) {
    for mut row in scores.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            denom += *v;
        }
        for v in row.iter_mut() {
            *v /= denom;
        }
    }
}

/// Probabilities below this are floored before taking logs, keeping the
/// loss finite for arbitrarily confident wrong predictions.
const PROB_FLOOR: f64 = 1e-300;

/// Mean cross-entropy plus `(weight_decay/2) * (|W|^2 + |b|^2)`.
pub fn cross_entropy(
    c: &LinearClassifier,
    x: &FeatureMatrix,
    y: &LabelVector,
    weight_decay: f64,
) -> Result<f64> {
    check_pair(c, x, y)?;
    let probs = softmax_probs(c, x)?;
    let mut acc = CompensatedSum::new();
    for i in 0..x.rows() {
        acc.add(-probs[[i, y.label(i)]].max(PROB_FLOOR).ln());
    }
    let mut loss = acc.value() / x.rows() as f64;
    if weight_decay > 0.0 {
        let wsq = stable_sum(c.weights().iter().map(|v| v * v));
        let bsq = stable_sum(c.bias().iter().map(|v| v * v));
        loss += 0.5 * weight_decay * (wsq + bsq);
    }
    Ok(loss)
}

/// Analytic gradient of [`cross_entropy`] with respect to weights and bias.
pub fn cross_entropy_grad(
    c: &LinearClassifier,
    x: &FeatureMatrix,
    y: &LabelVector,
    weight_decay: f64,
) -> Result<(Array2<f64>, Array1<f64>)> {
    check_pair(c, x, y)?;
    let n = x.rows();
    let mut delta = softmax_probs(c, x)?;
    for i in 0..n {
        delta[[i, y.label(i)]] -= 1.0;
    }
    delta /= n as f64;
    let mut grad_w = delta.t().dot(x.as_array());
    let mut grad_b = delta.sum_axis(ndarray::Axis(0));
    if weight_decay > 0.0 {
        grad_w = grad_w + c.weights() * weight_decay;
        grad_b = grad_b + c.bias() * weight_decay;
    }
    Ok((grad_w, grad_b))
}

fn check_pair(c: &LinearClassifier, x: &FeatureMatrix, y: &LabelVector) -> Result<()> {
    if x.cols() != c.dim() {
        return Err(Error::Validation(format!(
            "feature dim {} does not match classifier dim {}",
            x.cols(),
            c.dim()
        )));
    }
    if y.len() != x.rows() {
        return Err(Error::Validation(format!(
            "{} labels for {} feature rows",
            y.len(),
            x.rows()
        )));
    }
    if y.num_classes() > c.num_classes() {
        return Err(Error::Validation(format!(
            "labels declare {} classes, classifier has {}",
            y.num_classes(),
            c.num_classes()
        )));
    }
    Ok(())
}

/// Top-1 accuracy and unregularized mean cross-entropy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mean_ce: f64,
}

pub fn evaluate(c: &LinearClassifier, x: &FeatureMatrix, y: &LabelVector) -> Result<Evaluation> {
    check_pair(c, x, y)?;
    let scores = c.scores(x.as_array());
    let pred = argmax_rows(&scores);
    let correct = pred
        .iter()
        .zip(y.labels())
        .filter(|(p, t)| p == t)
        .count();
    let mean_ce = cross_entropy(c, x, y, 0.0)?;
    Ok(Evaluation {
        accuracy: correct as f64 / x.rows() as f64,
        mean_ce,
    })
}

/// Weight standard deviation for [`random_init`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitStddev {
    /// `sqrt(2 / d)`.
    Msra,
    Fixed(f64),
}

/// Gaussian random weights (bias exactly zero), deterministic in the seed.
pub fn random_init(num_classes: usize, dim: usize, stddev: InitStddev, seed: u64) -> LinearClassifier {
    let sd = match stddev {
        InitStddev::Msra => (2.0 / dim as f64).sqrt(),
        InitStddev::Fixed(s) => s,
    };
    let mut g = GaussianSource::new(seed);
    let weights = Array2::from_shape_fn((num_classes, dim), |_| sd * g.next_normal());
    let bias = Array1::zeros(num_classes);
    LinearClassifier::new(weights, bias, ModelMetadata::new("random"))
        .expect("generated weights are finite")
}

/// Gradient descent on the regularized cross-entropy from `init`.
///
/// Full-batch mode is deterministic outright; mini-batch order is a seeded
/// Fisher-Yates permutation per epoch, so runs are deterministic in
/// `cfg.seed`. Returns the trained classifier and the logged trace
/// (iteration 0 plus every `log_every`-th iteration).
pub fn train(
    init: &LinearClassifier,
    x_train: &FeatureMatrix,
    y_train: &LabelVector,
    test: Option<(&FeatureMatrix, &LabelVector)>,
    cfg: &TrainConfig,
) -> Result<(LinearClassifier, TrainTrace)> {
    cfg.validate()?;
    check_pair(init, x_train, y_train)?;
    if let Some((xt, yt)) = test {
        check_pair(init, xt, yt)?;
    }

    let n = x_train.rows();
    let mut current = init.clone();
    let mut trace = TrainTrace::default();
    trace
        .records
        .push(log_point(0, &current, x_train, y_train, test)?);

    let batch = match cfg.batch_size {
        BatchSize::Full => n,
        BatchSize::Size(b) => b.min(n),
    };
    let full_batch = batch == n;

    let mut shuffler = SplitMix64::new(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n; // forces a shuffle before the first mini-batch

    let mut weights = current.weights().clone();
    let mut bias = current.bias().clone();
    let mut batch_x = Array2::zeros((batch, x_train.cols()));
    let mut batch_y = vec![0usize; batch];

    for t in 1..=cfg.iterations {
        let (bx, by): (&Array2<f64>, &[usize]) = if full_batch {
            batch_y.clear();
            batch_y.extend(y_train.labels().iter().map(|&l| l as usize));
            (x_train.as_array(), &batch_y)
        } else {
            if cursor + batch > n {
                fisher_yates(&mut order, &mut shuffler);
                cursor = 0;
            }
            for (slot, &src) in order[cursor..cursor + batch].iter().enumerate() {
                batch_x.row_mut(slot).assign(&x_train.as_array().row(src));
                batch_y[slot] = y_train.label(src);
            }
            cursor += batch;
            (&batch_x, &batch_y[..])
        };

        // softmax gradient: (p - onehot) / batch
        let mut delta = bx.dot(&weights.t());
        for mut row in delta.rows_mut() {
            row += &bias;
        }
        softmax_rows_in_place(&mut delta);
        for (i, &label) in by.iter().enumerate() {
            delta[[i, label]] -= 1.0;
        }
        delta /= bx.nrows() as f64;

        let mut grad_w = delta.t().dot(bx);
        let mut grad_b = delta.sum_axis(ndarray::Axis(0));
        if cfg.weight_decay > 0.0 {
            grad_w = grad_w + &weights * cfg.weight_decay;
            grad_b = grad_b + &bias * cfg.weight_decay;
        }
        weights = weights - grad_w * cfg.learning_rate;
        bias = bias - grad_b * cfg.learning_rate;

        if weights.iter().any(|v| !v.is_finite()) || bias.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                iteration: t,
                learning_rate: cfg.learning_rate,
            });
        }

        if t % cfg.log_every == 0 {
            current = LinearClassifier::new(
                weights.clone(),
                bias.clone(),
                current.metadata().clone(),
            )?;
            let rec = log_point(t, &current, x_train, y_train, test)?;
            if !rec.train_loss.is_finite() {
                return Err(Error::Diverged {
                    iteration: t,
                    learning_rate: cfg.learning_rate,
                });
            }
            trace.records.push(rec);
        }
    }

    let mut metadata = init.metadata().clone();
    metadata.source = "trained".into();
    let trained = LinearClassifier::new(weights, bias, metadata)?;
    Ok((trained, trace))
}

fn log_point(
    iteration: usize,
    c: &LinearClassifier,
    x: &FeatureMatrix,
    y: &LabelVector,
    test: Option<(&FeatureMatrix, &LabelVector)>,
) -> Result<TraceRecord> {
    let train = evaluate(c, x, y)?;
    let (test_loss, test_accuracy, loss_ratio) = match test {
        Some((xt, yt)) => {
            let e = evaluate(c, xt, yt)?;
            let ratio = if e.mean_ce > 0.0 {
                Some(train.mean_ce / e.mean_ce)
            } else {
                None
            };
            (Some(e.mean_ce), Some(e.accuracy), ratio)
        }
        None => (None, None, None),
    };
    Ok(TraceRecord {
        iteration,
        train_loss: train.mean_ce,
        train_accuracy: train.accuracy,
        test_loss,
        test_accuracy,
        loss_ratio,
    })
}

fn fisher_yates(order: &mut [usize], rng: &mut SplitMix64) {
    for i in (1..order.len()).rev() {
        let j = rng.next_below(i as u64 + 1) as usize;
        order.swap(i, j);
    }
}
