//! Baseline removal, per-window z-scoring, channel ordering, segmentation and
//! label binarization, composed into [`build_windows`].

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::interchange::{decode_f32_le, encode_f32_le, sha256_hex};
use crate::data::{ChannelLayout, Dataset, Signal, Target, Trial};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    /// Subtract the channel x time template averaged over baseline windows.
    #[default]
    Template,
    /// Subtract one scalar mean per channel (ablation).
    ChannelMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub window_samples: usize,
    pub window_stride: usize,
    pub binarize_threshold: u8,
    pub zscore_epsilon: f64,
    pub baseline_mode: BaselineMode,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            window_samples: 128,
            window_stride: 128,
            binarize_threshold: 3,
            zscore_epsilon: 1e-8,
            baseline_mode: BaselineMode::Template,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_samples == 0 || self.window_stride == 0 {
            return Err(Error::InvalidConfig(
                "window_samples and window_stride must be >= 1".into(),
            ));
        }
        if !(1..=5).contains(&self.binarize_threshold) {
            return Err(Error::InvalidConfig(format!(
                "binarize_threshold {} outside 1..5",
                self.binarize_threshold
            )));
        }
        if !(self.zscore_epsilon > 0.0) {
            return Err(Error::InvalidConfig("zscore_epsilon must be positive".into()));
        }
        Ok(())
    }
}

fn signal_matrix(sig: &Signal) -> Array2<f64> {
    Array2::from_shape_fn((sig.channels(), sig.samples()), |(c, t)| {
        sig.channel(c)[t] as f64
    })
}

/// Elementwise mean of every complete non-overlapping baseline window.
pub fn baseline_template(trial: &Trial, window_samples: usize) -> Result<Array2<f64>> {
    let base = &trial.baseline;
    let n_windows = base.samples() / window_samples.max(1);
    if window_samples == 0 || n_windows == 0 {
        return Err(Error::TooShort(format!(
            "trial {}/{}: baseline has {} samples, need at least {window_samples}",
            trial.subject_id,
            trial.clip_id,
            base.samples()
        )));
    }
    let mut template = Array2::<f64>::zeros((base.channels(), window_samples));
    for c in 0..base.channels() {
        let ch = base.channel(c);
        for (t, out) in template.row_mut(c).iter_mut().enumerate() {
            let sum: f64 = (0..n_windows)
                .map(|w| ch[w * window_samples + t] as f64)
                .sum();
            *out = sum / n_windows as f64;
        }
    }
    Ok(template)
}

/// Per-channel scalar means of the whole baseline, broadcast to a window.
pub fn baseline_channel_means(trial: &Trial, window_samples: usize) -> Result<Array2<f64>> {
    let base = &trial.baseline;
    if base.samples() == 0 {
        return Err(Error::TooShort(format!(
            "trial {}/{}: empty baseline",
            trial.subject_id, trial.clip_id
        )));
    }
    let means = signal_matrix(base)
        .mean_axis(Axis(1))
        .expect("non-empty baseline");
    Ok(Array2::from_shape_fn((base.channels(), window_samples), |(c, _)| means[c]))
}

pub fn baseline_remove(stimulus_window: &Array2<f64>, template: &Array2<f64>) -> Result<Array2<f64>> {
    if stimulus_window.dim() != template.dim() {
        return Err(Error::Shape(format!(
            "window {:?} vs template {:?}",
            stimulus_window.dim(),
            template.dim()
        )));
    }
    Ok(stimulus_window - template)
}

/// Per-channel z-score with population statistics; sigma is clamped below by
/// `epsilon`.
pub fn zscore(window: &Array2<f64>, epsilon: f64) -> Array2<f64> {
    let mut out = window.clone();
    let n = window.ncols() as f64;
    for mut row in out.rows_mut() {
        let mean = row.sum() / n;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sigma = var.sqrt().max(epsilon);
        row.mapv_inplace(|v| (v - mean) / sigma);
    }
    out
}

/// Permute rows from the layout's order into anti-clockwise order.
pub fn order_channels(layout: &ChannelLayout, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    if x.nrows() != layout.len() {
        return Err(Error::Shape(format!(
            "{} rows but layout has {} channels",
            x.nrows(),
            layout.len()
        )));
    }
    let perm = layout.canonical_permutation()?;
    Ok(x.select(Axis(0), &perm))
}

/// Stimulus windows at offsets 0, stride, 2*stride, ... while a full window fits.
pub fn segment(trial: &Trial, cfg: &PreprocessConfig) -> Result<Vec<Array2<f64>>> {
    let len = trial.stimulus.samples();
    let w = cfg.window_samples;
    if w == 0 || cfg.window_stride == 0 {
        return Err(Error::InvalidConfig("window and stride must be >= 1".into()));
    }
    if len < w {
        return Err(Error::TooShort(format!(
            "trial {}/{}: stimulus has {len} samples, need at least {w}",
            trial.subject_id, trial.clip_id
        )));
    }
    let count = (len - w) / cfg.window_stride + 1;
    let full = signal_matrix(&trial.stimulus);
    Ok((0..count)
        .map(|i| {
            let off = i * cfg.window_stride;
            full.slice(ndarray::s![.., off..off + w]).to_owned()
        })
        .collect())
}

pub fn binarize(score: u8, threshold: u8) -> Result<u8> {
    if !(1..=5).contains(&score) {
        return Err(Error::InvalidScore(score.into()));
    }
    Ok(u8::from(score >= threshold))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WindowOrigin {
    pub subject_id: String,
    pub clip_id: u32,
    pub window_index: usize,
    /// Position of the source trial in the dataset.
    pub trial_index: usize,
}

/// Preprocessed windows, shape `[n, 1, channels, window_samples]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowBatch {
    pub channels: usize,
    pub window_samples: usize,
    pub x: Vec<f32>,
    pub y_valence: Vec<u8>,
    pub y_arousal: Vec<u8>,
    pub y_dominance: Vec<u8>,
    pub provenance: Vec<WindowOrigin>,
}

impl WindowBatch {
    pub fn len(&self) -> usize {
        self.provenance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.provenance.is_empty()
    }

    pub fn window_len(&self) -> usize {
        self.channels * self.window_samples
    }

    pub fn window(&self, i: usize) -> &[f32] {
        let w = self.window_len();
        &self.x[i * w..(i + 1) * w]
    }

    pub fn labels(&self, target: Target) -> &[u8] {
        match target {
            Target::Valence => &self.y_valence,
            Target::Arousal => &self.y_arousal,
            Target::Dominance => &self.y_dominance,
        }
    }

    /// Window rows whose source trial is in `trials`, in batch order.
    pub fn rows_for_trials(&self, trials: &[usize]) -> Vec<usize> {
        let mut member = vec![false; self.provenance.iter().map(|p| p.trial_index + 1).max().unwrap_or(0)];
        for &t in trials {
            if t < member.len() {
                member[t] = true;
            }
        }
        (0..self.len())
            .filter(|&i| member[self.provenance[i].trial_index])
            .collect()
    }
}

/// Full chain per trial: template, then for each window baseline removal,
/// z-score and channel ordering. Rows follow trial order, then offset.
pub fn build_windows(d: &Dataset, cfg: &PreprocessConfig) -> Result<WindowBatch> {
    cfg.validate()?;
    let perm = d.layout.canonical_permutation()?;
    let mut batch = WindowBatch {
        channels: d.channels(),
        window_samples: cfg.window_samples,
        x: Vec::new(),
        y_valence: Vec::new(),
        y_arousal: Vec::new(),
        y_dominance: Vec::new(),
        provenance: Vec::new(),
    };
    for (ti, trial) in d.trials.iter().enumerate() {
        let template = match cfg.baseline_mode {
            BaselineMode::Template => baseline_template(trial, cfg.window_samples)?,
            BaselineMode::ChannelMean => baseline_channel_means(trial, cfg.window_samples)?,
        };
        let labels = [
            binarize(trial.valence, cfg.binarize_threshold)?,
            binarize(trial.arousal, cfg.binarize_threshold)?,
            binarize(trial.dominance, cfg.binarize_threshold)?,
        ];
        for (wi, window) in segment(trial, cfg)?.into_iter().enumerate() {
            let z = zscore(&baseline_remove(&window, &template)?, cfg.zscore_epsilon);
            let ordered = z.select(Axis(0), &perm);
            batch.x.extend(ordered.iter().map(|&v| v as f32));
            batch.y_valence.push(labels[0]);
            batch.y_arousal.push(labels[1]);
            batch.y_dominance.push(labels[2]);
            batch.provenance.push(WindowOrigin {
                subject_id: trial.subject_id.clone(),
                clip_id: trial.clip_id,
                window_index: wi,
                trial_index: ti,
            });
        }
    }
    Ok(batch)
}

pub const WINDOWS_FORMAT_VERSION: &str = "emoscale-windows-v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WindowsManifest {
    format_version: String,
    channels: usize,
    window_samples: usize,
    x_file: String,
    x_sha256: String,
    rows: Vec<WindowRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WindowRow {
    #[serde(flatten)]
    origin: WindowOrigin,
    valence: u8,
    arousal: u8,
    dominance: u8,
}

/// Persist a batch as `windows.json` plus a binary32 tensor file.
pub fn write_windows(batch: &WindowBatch, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let bytes = encode_f32_le(&batch.x);
    let x_path = dir.join("windows.f32");
    fs::write(&x_path, &bytes).map_err(|e| Error::io(&x_path, e))?;
    let rows = (0..batch.len())
        .map(|i| WindowRow {
            origin: batch.provenance[i].clone(),
            valence: batch.y_valence[i],
            arousal: batch.y_arousal[i],
            dominance: batch.y_dominance[i],
        })
        .collect();
    let manifest = WindowsManifest {
        format_version: WINDOWS_FORMAT_VERSION.into(),
        channels: batch.channels,
        window_samples: batch.window_samples,
        x_file: "windows.f32".into(),
        x_sha256: sha256_hex(&bytes),
        rows,
    };
    let path = dir.join("windows.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&path, e))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn read_windows(path: impl AsRef<Path>) -> Result<WindowBatch> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let m: WindowsManifest = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    if m.format_version != WINDOWS_FORMAT_VERSION {
        return Err(Error::UnknownFormatVersion {
            expected: WINDOWS_FORMAT_VERSION.into(),
            found: m.format_version,
        });
    }
    let x_path = path.parent().unwrap_or(Path::new(".")).join(&m.x_file);
    let bytes = fs::read(&x_path).map_err(|e| Error::io(&x_path, e))?;
    let expected = m.rows.len() * m.channels * m.window_samples * 4;
    if bytes.len() != expected || sha256_hex(&bytes) != m.x_sha256 {
        return Err(Error::InvalidDataset(format!(
            "{} is corrupt ({} bytes, expected {expected})",
            x_path.display(),
            bytes.len()
        )));
    }
    let mut batch = WindowBatch {
        channels: m.channels,
        window_samples: m.window_samples,
        x: decode_f32_le(&bytes),
        y_valence: Vec::with_capacity(m.rows.len()),
        y_arousal: Vec::with_capacity(m.rows.len()),
        y_dominance: Vec::with_capacity(m.rows.len()),
        provenance: Vec::with_capacity(m.rows.len()),
    };
    for r in m.rows {
        batch.y_valence.push(r.valence);
        batch.y_arousal.push(r.arousal);
        batch.y_dominance.push(r.dominance);
        batch.provenance.push(r.origin);
    }
    Ok(batch)
}
