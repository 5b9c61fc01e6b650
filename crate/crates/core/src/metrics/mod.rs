//! Binary classification metrics from a confusion matrix, a threshold-sweep
//! AUROC, and report rendering.
//!
//! Zero-denominator cases return 0 and record the metric name in
//! [`MetricSet::degenerate_flags`]. A score equal to the threshold predicts
//! the positive class.

pub mod report;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        Self { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }

    /// The confusion obtained by relabelling 0 <-> 1.
    pub fn swapped(&self) -> Self {
        Self::new(self.tn, self.fn_, self.tp, self.fp)
    }
}

fn check_pairs(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::Metric(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::Empty("no predictions to score".into()));
    }
    if let Some(s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::Metric(format!("score {s} outside [0, 1]")));
    }
    if let Some(y) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::Metric(format!("label {y} is not binary")));
    }
    Ok(())
}

pub fn confusion(scores: &[f64], labels: &[u8], threshold: f64) -> Result<Confusion> {
    check_pairs(scores, labels)?;
    let mut c = Confusion::default();
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// A metric value plus whether a zero-denominator convention produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub value: f64,
    pub degenerate: bool,
}

fn ratio(num: f64, den: f64) -> Score {
    if den == 0.0 {
        Score {
            value: 0.0,
            degenerate: true,
        }
    } else {
        Score {
            value: num / den,
            degenerate: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasicMetrics {
    pub precision: Score,
    pub recall: Score,
    pub f1: Score,
    pub accuracy: Score,
}

fn non_empty(c: &Confusion) -> Result<()> {
    if c.total() == 0 {
        return Err(Error::Empty("confusion matrix has no entries".into()));
    }
    Ok(())
}

/// Precision, recall, their harmonic mean, and accuracy.
pub fn basic_metrics(c: &Confusion) -> Result<BasicMetrics> {
    non_empty(c)?;
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = {
        let s = ratio(
            2.0 * precision.value * recall.value,
            precision.value + recall.value,
        );
        Score {
            degenerate: s.degenerate || precision.degenerate || recall.degenerate,
            ..s
        }
    };
    Ok(BasicMetrics {
        precision,
        recall,
        f1,
        accuracy: ratio(tp + tn, tp + tn + fp + fn_),
    })
}

/// Matthews correlation coefficient; 0 when any marginal is empty.
pub fn mcc(c: &Confusion) -> Result<Score> {
    non_empty(c)?;
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    Ok(ratio(tp * tn - fp * fn_, den))
}

/// Cohen's kappa in its two-by-two closed form.
pub fn kappa(c: &Confusion) -> Result<Score> {
    non_empty(c)?;
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    Ok(ratio(
        2.0 * (tp * tn - fp * fn_),
        (tp + fp) * (fp + tn) + (tp + fn_) * (fn_ + tn),
    ))
}

/// Mean of sensitivity and specificity at a single threshold. Requires both
/// classes to be present.
pub fn balanced_rate_paper(c: &Confusion) -> Result<f64> {
    if c.positives() == 0 || c.negatives() == 0 {
        return Err(Error::Metric(
            "balanced rate needs both classes present".into(),
        ));
    }
    let tpr = c.tp as f64 / c.positives() as f64;
    let tnr = c.tn as f64 / c.negatives() as f64;
    Ok(0.5 * (tpr + tnr))
}

/// Trapezoidal area under the ROC curve over all distinct score thresholds.
/// Equals P(s_pos > s_neg) + P(s_pos = s_neg) / 2.
pub fn auroc_sweep(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Metric(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let pos = labels.iter().filter(|&&y| y == 1).count() as f64;
    let neg = labels.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return Err(Error::Metric("AUROC needs both classes present".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Metric("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let (mut tp, mut fp) = (0.0, 0.0);
    let mut area = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (tp_prev, fp_prev) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        area += (fp - fp_prev) * (tp + tp_prev) / 2.0;
    }
    Ok(area / (pos * neg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub confusion: Confusion,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub mcc: f64,
    pub kappa: f64,
    /// `None` when only one class is present.
    pub auroc_sweep: Option<f64>,
    /// `None` when only one class is present.
    pub balanced_rate_paper: Option<f64>,
    pub degenerate_flags: BTreeSet<String>,
}

pub fn metric_set(scores: &[f64], labels: &[u8], threshold: f64) -> Result<MetricSet> {
    let c = confusion(scores, labels, threshold)?;
    let basic = basic_metrics(&c)?;
    let m = mcc(&c)?;
    let k = kappa(&c)?;
    let mut flags = BTreeSet::new();
    for (name, s) in [
        ("precision", basic.precision),
        ("recall", basic.recall),
        ("f1", basic.f1),
        ("accuracy", basic.accuracy),
        ("mcc", m),
        ("kappa", k),
    ] {
        if s.degenerate {
            flags.insert(name.to_string());
        }
    }
    let auroc = auroc_sweep(scores, labels).ok();
    let balanced = balanced_rate_paper(&c).ok();
    if auroc.is_none() {
        flags.insert("auroc_sweep".into());
    }
    if balanced.is_none() {
        flags.insert("balanced_rate_paper".into());
    }
    Ok(MetricSet {
        confusion: c,
        precision: basic.precision.value,
        recall: basic.recall.value,
        f1: basic.f1.value,
        accuracy: basic.accuracy.value,
        mcc: m.value,
        kappa: k.value,
        auroc_sweep: auroc,
        balanced_rate_paper: balanced,
        degenerate_flags: flags,
    })
}

/// Field-wise arithmetic mean. Optional fields average the runs where they
/// are defined; flags are the union. Confusion counts are summed.
pub fn mean_metric_set(sets: &[MetricSet]) -> Result<MetricSet> {
    if sets.is_empty() {
        return Err(Error::Empty("no metric sets to average".into()));
    }
    let n = sets.len() as f64;
    let mean = |f: fn(&MetricSet) -> f64| sets.iter().map(f).sum::<f64>() / n;
    let mean_opt = |f: fn(&MetricSet) -> Option<f64>| {
        let defined: Vec<f64> = sets.iter().filter_map(f).collect();
        (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
    };
    let mut confusion = Confusion::default();
    let mut flags = BTreeSet::new();
    for s in sets {
        confusion.tp += s.confusion.tp;
        confusion.fp += s.confusion.fp;
        confusion.tn += s.confusion.tn;
        confusion.fn_ += s.confusion.fn_;
        flags.extend(s.degenerate_flags.iter().cloned());
    }
    Ok(MetricSet {
        confusion,
        precision: mean(|s| s.precision),
        recall: mean(|s| s.recall),
        f1: mean(|s| s.f1),
        accuracy: mean(|s| s.accuracy),
        mcc: mean(|s| s.mcc),
        kappa: mean(|s| s.kappa),
        auroc_sweep: mean_opt(|s| s.auroc_sweep),
        balanced_rate_paper: mean_opt(|s| s.balanced_rate_paper),
        degenerate_flags: flags,
    })
}
