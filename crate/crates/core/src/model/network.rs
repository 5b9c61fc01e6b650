use crate::error::{Error, Result};
use crate::model::blocks::{
    classify, classify_backward, fusion_backward, fusion_block, spatial_backward, spatial_block,
    temporal_backward, temporal_block, FusionCache, HeadCache, SpatialCache, TemporalCache,
};
use crate::model::config::{DerivedShapes, ModelConfig};
use crate::model::layers::{bn_update_running, BnStats};
use crate::model::params::ModelParams;
use crate::model::tensor::Tensor;
use crate::preprocess::WindowBatch;

/// Build the network: validate `cfg`, derive every shape and initialize
/// parameters from `seed`.
pub fn build(cfg: &ModelConfig, seed: u64) -> Result<(ModelParams, DerivedShapes)> {
    let shapes = cfg.derive()?;
    Ok((ModelParams::init(cfg, &shapes, seed), shapes))
}

/// Everything the backward pass needs from a training-mode forward.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: Tensor,
    pub temporal: TemporalCache,
    pub temporal_out: Tensor,
    pub spatial: SpatialCache,
    pub spatial_out: Tensor,
    pub fusion: FusionCache,
    pub fusion_out: Tensor,
    pub head: HeadCache,
}

impl ForwardCache {
    /// Batch statistics of the three batch-norm layers.
    pub fn bn_stats(&self) -> [BnStats; 3] {
        let get = |c: &crate::model::layers::BnCache| {
            c.stats.clone().expect("training-mode forward records statistics")
        };
        [
            get(&self.temporal.bn),
            get(&self.spatial.bn),
            get(&self.fusion.bn),
        ]
    }
}

fn forward_full(
    params: &ModelParams,
    cfg: &ModelConfig,
    shapes: &DerivedShapes,
    x: &Tensor,
    training: bool,
    seed: u64,
) -> Result<(Tensor, ForwardCache)> {
    let (t_out, t_cache) = temporal_block(params, cfg, shapes, x, training)?;
    let (s_out, s_cache) = spatial_block(params, cfg, shapes, &t_out, training)?;
    let (f_out, f_cache) = fusion_block(params, cfg, shapes, &s_out, training)?;
    let (logits, h_cache) = classify(params, cfg, shapes, &f_out, training, seed)?;
    Ok((
        logits,
        ForwardCache {
            input: x.clone(),
            temporal: t_cache,
            temporal_out: t_out,
            spatial: s_cache,
            spatial_out: s_out,
            fusion: f_cache,
            fusion_out: f_out,
            head: h_cache,
        },
    ))
}

/// Logits `[n, 2]`; the cache is returned iff `training`.
pub fn forward(
    params: &ModelParams,
    cfg: &ModelConfig,
    x: &Tensor,
    training: bool,
    seed: u64,
) -> Result<(Tensor, Option<ForwardCache>)> {
    let shapes = cfg.derive()?;
    let (logits, cache) = forward_full(params, cfg, &shapes, x, training, seed)?;
    Ok((logits, training.then_some(cache)))
}

/// Analytic gradient of a scalar loss given `d_logits`.
pub fn backward(
    params: &ModelParams,
    cfg: &ModelConfig,
    shapes: &DerivedShapes,
    cache: &ForwardCache,
    d_logits: &Tensor,
) -> ModelParams {
    let mut grads = ModelParams::zeros(cfg, shapes);
    let d_f = classify_backward(params, cfg, shapes, &cache.fusion_out, &cache.head, d_logits, &mut grads);
    let d_s = fusion_backward(params, cfg, shapes, &cache.spatial_out, &cache.fusion, &d_f, &mut grads);
    let d_t = spatial_backward(params, cfg, shapes, &cache.temporal_out, &cache.spatial, &d_s, &mut grads);
    temporal_backward(params, cfg, shapes, &cache.input, &cache.temporal, &d_t, &mut grads);
    grads
}

/// Mean softmax cross-entropy and its gradient w.r.t. the logits.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[u8]) -> (f64, Tensor) {
    let n = labels.len();
    let mut d = Tensor::zeros(&[n, 2]);
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let (a, b) = (logits.data[2 * i], logits.data[2 * i + 1]);
        let m = a.max(b);
        let lse = m + ((a - m).exp() + (b - m).exp()).ln();
        let picked = if y == 1 { b } else { a };
        loss += lse - picked;
        let p1 = (b - lse).exp();
        let p0 = (a - lse).exp();
        d.data[2 * i] = (p0 - f64::from(y == 0)) / n as f64;
        d.data[2 * i + 1] = (p1 - f64::from(y == 1)) / n as f64;
    }
    (loss / n as f64, d)
}

/// Positive-class probability per row.
pub fn positive_probability(logits: &Tensor) -> Vec<f64> {
    logits
        .data
        .chunks_exact(2)
        .map(|r| 1.0 / (1.0 + (r[0] - r[1]).exp()))
        .collect()
}

#[derive(Debug, Clone)]
pub struct LossAndGrad {
    pub loss: f64,
    pub grads: ModelParams,
    /// Batch statistics for the running-estimate update.
    pub bn_stats: [BnStats; 3],
}

fn check_labels(x: &Tensor, labels: &[u8]) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::Empty("loss_and_grad needs at least one sample".into()));
    }
    if x.shape.first() != Some(&labels.len()) {
        return Err(Error::Shape(format!(
            "{} labels for input {:?}",
            labels.len(),
            x.shape
        )));
    }
    if let Some(y) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::Shape(format!("label {y} is not binary")));
    }
    Ok(())
}

/// Training-mode loss and exact gradients of every trainable tensor.
pub fn loss_and_grad(
    params: &ModelParams,
    cfg: &ModelConfig,
    x: &Tensor,
    labels: &[u8],
    seed: u64,
) -> Result<LossAndGrad> {
    check_labels(x, labels)?;
    let shapes = cfg.derive()?;
    let (logits, cache) = forward_full(params, cfg, &shapes, x, true, seed)?;
    let (loss, d_logits) = softmax_cross_entropy(&logits, labels);
    let grads = backward(params, cfg, &shapes, &cache, &d_logits);
    Ok(LossAndGrad {
        loss,
        grads,
        bn_stats: cache.bn_stats(),
    })
}

/// Loss only, in either mode.
pub fn loss(
    params: &ModelParams,
    cfg: &ModelConfig,
    x: &Tensor,
    labels: &[u8],
    training: bool,
    seed: u64,
) -> Result<f64> {
    check_labels(x, labels)?;
    let (logits, _) = forward(params, cfg, x, training, seed)?;
    Ok(softmax_cross_entropy(&logits, labels).0)
}

pub fn update_running_stats(params: &mut ModelParams, stats: &[BnStats; 3], momentum: f64) {
    bn_update_running(&mut params.temporal_bn, &stats[0], momentum);
    bn_update_running(&mut params.spatial_bn, &stats[1], momentum);
    bn_update_running(&mut params.fusion_bn, &stats[2], momentum);
}

/// Gather `rows` of a window batch into an `[n, 1, C, W]` tensor.
pub fn input_tensor(batch: &WindowBatch, rows: &[usize]) -> Tensor {
    let w = batch.window_len();
    let mut data = Vec::with_capacity(rows.len() * w);
    for &r in rows {
        data.extend(batch.window(r).iter().map(|&v| v as f64));
    }
    Tensor::from_vec(&[rows.len(), 1, batch.channels, batch.window_samples], data)
}
