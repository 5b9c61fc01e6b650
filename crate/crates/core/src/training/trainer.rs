use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Target;
use crate::error::{Error, Result};
use crate::metrics::{mean_metric_set, metric_set, MetricSet};
use crate::model::network::{forward, input_tensor, loss_and_grad, positive_probability, softmax_cross_entropy, update_running_stats};
use crate::model::{build, ModelConfig, ModelParams};
use crate::preprocess::WindowBatch;
use crate::training::adam::Adam;
use crate::training::split::{cv_fold_split, split_kfold, SplitSpec, TrialSplit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub target: Target,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Epochs without a validation-loss improvement before stopping.
    pub early_stop_patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            target: Target::Valence,
            epochs: 50,
            batch_size: 64,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            early_stop_patience: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.early_stop_patience == 0 {
            return Err(Error::InvalidConfig(
                "epochs, batch_size and early_stop_patience must be >= 1".into(),
            ));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.adam_beta1)
            || !(0.0..1.0).contains(&self.adam_beta2)
            || !(self.adam_epsilon > 0.0)
        {
            return Err(Error::InvalidConfig("invalid Adam hyperparameters".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub wall_ms: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl RunHistory {
    /// `epoch, train_loss, val_loss, val_acc` as tab-separated text. Timing is
    /// excluded so the table is reproducible; see [`timing_log`](Self::timing_log).
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("epoch\ttrain_loss\tval_loss\tval_acc\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{}\t{:e}\t{:e}\t{:e}\n",
                e.epoch, e.train_loss, e.val_loss, e.val_acc
            ));
        }
        out
    }

    pub fn timing_log(&self) -> String {
        self.epochs
            .iter()
            .map(|e| format!("epoch {} took {} ms\n", e.epoch, e.wall_ms))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub params: ModelParams,
    pub history: RunHistory,
}

/// SplitMix64 finalizer used to derive independent stream seeds.
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut z = base ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn check_windows(windows: &WindowBatch, cfg: &ModelConfig) -> Result<()> {
    if windows.channels != cfg.channels || windows.window_samples != cfg.window_samples {
        return Err(Error::Shape(format!(
            "windows are {}x{} but the model expects {}x{}",
            windows.channels, windows.window_samples, cfg.channels, cfg.window_samples
        )));
    }
    Ok(())
}

const EVAL_CHUNK: usize = 256;

/// Inference-mode mean loss and accuracy (threshold 0.5) over `rows`.
pub fn inference_loss(
    params: &ModelParams,
    cfg: &ModelConfig,
    windows: &WindowBatch,
    rows: &[usize],
    target: Target,
) -> Result<(f64, f64)> {
    let labels = windows.labels(target);
    let (mut total, mut correct) = (0.0, 0usize);
    for chunk in rows.chunks(EVAL_CHUNK) {
        let x = input_tensor(windows, chunk);
        let y: Vec<u8> = chunk.iter().map(|&r| labels[r]).collect();
        let (logits, _) = forward(params, cfg, &x, false, 0)?;
        total += softmax_cross_entropy(&logits, &y).0 * chunk.len() as f64;
        correct += positive_probability(&logits)
            .iter()
            .zip(&y)
            .filter(|(p, &t)| u8::from(**p >= 0.5) == t)
            .count();
    }
    let n = rows.len() as f64;
    Ok((total / n, correct as f64 / n))
}

/// Mini-batch Adam on softmax cross-entropy. Keeps the parameters of the
/// epoch with the lowest validation loss and stops after
/// `early_stop_patience` epochs without improvement.
pub fn train(
    windows: &WindowBatch,
    split: &TrialSplit,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_windows(windows, model_cfg)?;
    let (mut params, _) = build(model_cfg, cfg.seed)?;
    let train_rows = windows.rows_for_trials(&split.train);
    let val_rows = windows.rows_for_trials(&split.val);
    if train_rows.is_empty() {
        return Err(Error::Empty("training split has no windows".into()));
    }
    if val_rows.is_empty() {
        return Err(Error::Empty("validation split has no windows".into()));
    }
    let labels = windows.labels(cfg.target);
    let mut adam = Adam::new(
        &params,
        cfg.learning_rate,
        cfg.adam_beta1,
        cfg.adam_beta2,
        cfg.adam_epsilon,
    );

    let mut history = RunHistory {
        epochs: Vec::new(),
        best_epoch: 0,
    };
    let mut best: Option<(f64, ModelParams)> = None;
    let mut stale = 0;
    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let mut order = train_rows.clone();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1, epoch as u64)));
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let x = input_tensor(windows, chunk);
            let y: Vec<u8> = chunk.iter().map(|&r| labels[r]).collect();
            let dropout_seed = derive_seed(cfg.seed, 2 + epoch as u64, b as u64);
            let step = loss_and_grad(&params, model_cfg, &x, &y, dropout_seed)?;
            if !step.loss.is_finite() {
                return Err(Error::Divergence { epoch, batch: b });
            }
            loss_sum += step.loss * chunk.len() as f64;
            adam.step(&mut params, &step.grads);
            update_running_stats(&mut params, &step.bn_stats, model_cfg.bn_momentum);
            params.round_to_f32();
        }
        let train_loss = loss_sum / order.len() as f64;
        let (val_loss, val_acc) = inference_loss(&params, model_cfg, windows, &val_rows, cfg.target)?;
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_acc,
            wall_ms: started.elapsed().as_millis(),
        });
        let improved = best.as_ref().is_none_or(|(l, _)| val_loss < *l);
        if improved {
            best = Some((val_loss, params.clone()));
            history.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.early_stop_patience {
                break;
            }
        }
    }
    let (_, params) = best.expect("at least one epoch ran");
    Ok(TrainOutcome { params, history })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Window rows in batch order.
    pub rows: Vec<usize>,
    /// Positive-class probability per window.
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
}

impl Evaluation {
    pub fn metrics(&self, threshold: f64) -> Result<MetricSet> {
        metric_set(&self.scores, &self.labels, threshold)
    }
}

/// Inference over every window of `trials`.
pub fn evaluate(
    params: &ModelParams,
    cfg: &ModelConfig,
    windows: &WindowBatch,
    trials: &[usize],
    target: Target,
) -> Result<Evaluation> {
    check_windows(windows, cfg)?;
    let rows = windows.rows_for_trials(trials);
    let labels_all = windows.labels(target);
    let mut scores = Vec::with_capacity(rows.len());
    for chunk in rows.chunks(EVAL_CHUNK) {
        let (logits, _) = forward(params, cfg, &input_tensor(windows, chunk), false, 0)?;
        scores.extend(positive_probability(&logits));
    }
    let labels = rows.iter().map(|&r| labels_all[r]).collect();
    Ok(Evaluation {
        rows,
        scores,
        labels,
    })
}

#[derive(Debug, Clone)]
pub struct CvFold {
    pub split: TrialSplit,
    pub history: RunHistory,
    pub metrics: MetricSet,
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub folds: Vec<CvFold>,
    /// Arithmetic mean over folds.
    pub mean: MetricSet,
}

/// Trains and tests one model per fold. Fold `f` trains with seed
/// `train_cfg.seed + f`.
pub fn run_cv(
    windows: &WindowBatch,
    n_trials: usize,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    spec: &SplitSpec,
) -> Result<CvOutcome> {
    let folds = split_kfold(n_trials, spec)?;
    let mut out = Vec::with_capacity(folds.len());
    for f in 0..folds.len() {
        let split = cv_fold_split(&folds, f, spec);
        let cfg = TrainConfig {
            seed: train_cfg.seed.wrapping_add(f as u64),
            ..train_cfg.clone()
        };
        let trained = train(windows, &split, model_cfg, &cfg)?;
        let metrics = evaluate(&trained.params, model_cfg, windows, &split.test, cfg.target)?
            .metrics(0.5)?;
        out.push(CvFold {
            split,
            history: trained.history,
            metrics,
        });
    }
    let sets: Vec<MetricSet> = out.iter().map(|f| f.metrics.clone()).collect();
    Ok(CvOutcome {
        mean: mean_metric_set(&sets)?,
        folds: out,
    })
}
