//! The four stages of the network: multi-scale temporal convolution,
//! asymmetric spatial convolution, fusion, and the dense classifier head.
//!
//! Each stage has a forward pass returning its output and a cache, and a
//! backward pass that consumes the cache.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::config::{DerivedShapes, ModelConfig};
use crate::model::layers::{
    bn_backward, bn_forward, leaky, leaky_grad, leaky_pool_backward, leaky_pool_into,
    row_conv_backward, row_conv_forward, BnCache, Tap,
};
use crate::model::params::{ModelParams, Conv};
use crate::model::tensor::{axpy, dot, Tensor};

fn expect_shape(what: &str, t: &Tensor, want: &[usize]) -> Result<()> {
    if t.shape != want {
        return Err(Error::Shape(format!(
            "{what}: expected {want:?}, got {:?}",
            t.shape
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TemporalCache {
    /// Per-ratio convolution outputs before the rectifier, `[n, T, C, L_r]`.
    pub pre: Vec<Tensor>,
    /// Concatenated pooled maps, `[n, T, C, T_cat]`.
    pub pre_bn: Tensor,
    pub bn: BnCache,
}

/// `[n, 1, C, W]` -> `[n, num_T, C, T_cat]`.
pub fn temporal_block(
    params: &ModelParams,
    cfg: &ModelConfig,
    shapes: &DerivedShapes,
    x: &Tensor,
    training: bool,
) -> Result<(Tensor, TemporalCache)> {
    let n = x.shape.first().copied().unwrap_or(0);
    expect_shape(
        "temporal input",
        x,
        &[n, 1, cfg.channels, cfg.window_samples],
    )?;
    let (maps, c, w) = (cfg.num_temporal_maps, cfg.channels, cfg.window_samples);
    let mut concat = Tensor::zeros(&shapes.temporal_output(n, cfg));
    let mut pre_all = Vec::with_capacity(shapes.kernel_lengths.len());
    let mut offset = 0;
    for (b, conv) in params.temporal.iter().enumerate() {
        let k = shapes.kernel_lengths[b];
        let l = shapes.conv_lengths[b];
        let mut pre = Tensor::zeros(&[n, maps, c, l]);
        for i in 0..n {
            for m in 0..maps {
                let kernel = &conv.weight.data[m * k..(m + 1) * k];
                for ch in 0..c {
                    let src = &x.data[(i * c + ch) * w..][..w];
                    let acc = &mut pre.data[((i * maps + m) * c + ch) * l..][..l];
                    acc.fill(conv.bias.data[m]);
                    for (j, &wj) in kernel.iter().enumerate() {
                        axpy(wj, &src[j..j + l], acc);
                    }
                }
            }
        }
        leaky_pool_into(&pre, cfg.leaky_slope, cfg.temporal_pool, &mut concat, 0, offset);
        offset += shapes.pooled_lengths[b];
        pre_all.push(pre);
    }
    let (out, bn) = bn_forward(&concat, &params.temporal_bn, cfg.bn_epsilon, training);
    Ok((
        out,
        TemporalCache {
            pre: pre_all,
            pre_bn: concat,
            bn,
        },
    ))
}

/// The temporal block is the first layer, so no input gradient is produced.
pub fn temporal_backward(
    params: &ModelParams,
    cfg: &ModelConfig,
    shapes: &DerivedShapes,
    x: &Tensor,
    cache: &TemporalCache,
    d_out: &Tensor,
    grads: &mut ModelParams,
) {
    let d_concat = bn_backward(d_out, &params.temporal_bn, &cache.bn, &mut grads.temporal_bn);
    let [n, maps, c, _] = d_out.dims4();
    let w = cfg.window_samples;
    let mut offset = 0;
    for (b, pre) in cache.pre.iter().enumerate() {
        let k = shapes.kernel_lengths[b];
        let l = shapes.conv_lengths[b];
        let d_pre = leaky_pool_backward(pre, cfg.leaky_slope, cfg.temporal_pool, &d_concat, 0, offset);
        offset += shapes.pooled_lengths[b];
        let Conv { weight, bias } = &mut grads.temporal[b];
        for i in 0..n {
            for m in 0..maps {
                for ch in 0..c {
                    let d = &d_pre.data[((i * maps + m) * c + ch) * l..][..l];
                    bias.data[m] += d.iter().sum::<f64>();
                    let src = &x.data[(i * c + ch) * w..][..w];
                    for j in 0..k {
                        weight.data[m * k + j] += dot(d, &src[j..j + l]);
                    }
                }
            }
        }
    }
}

/// Tap tables for the global, hemisphere and quadrant kernels.
///
/// The quadrant kernel sees each hemisphere padded with trailing zero rows to
/// `2q` rows; padded rows have no tap.
pub fn spatial_groups(channels: usize, shapes: &DerivedShapes) -> [Vec<Vec<Tap>>; 3] {
    let h = shapes.hemisphere_height;
    let q = shapes.quadrant_height;
    let global = vec![(0..channels)
        .map(|r| Tap {
            kernel_row: r,
            input_row: r,
        })
        .collect()];
    let hemisphere = (0..2)
        .map(|g| {
            (0..h)
                .map(|j| Tap {
                    kernel_row: j,
                    input_row: g * h + j,
                })
                .collect()
        })
        .collect();
    let quadrant = (0..4)
        .map(|g| {
            (0..q)
                .filter_map(|j| {
                    let padded = g * q + j;
                    let (block, within) = (padded / (2 * q), padded % (2 * q));
                    (within < h).then_some(Tap {
                        kernel_row: j,
                        input_row: block * h + within,
                    })
                })
                .collect()
        })
        .collect();
    [global, hemisphere, quadrant]
}

#[derive(Debug, Clone)]
pub struct SpatialCache {
    /// Pre-rectifier outputs of the global, hemisphere and quadrant branches.
    pub pre: [Tensor; 3],
    pub pre_bn: Tensor,
    pub bn: BnCache,
}

fn spatial_convs(params: &ModelParams) -> [&Conv; 3] {
    [
        &params.spatial_global,
        &params.spatial_hemisphere,
        &params.spatial_quadrant,
    ]
}

const SPATIAL_ROW_OFFSETS: [usize; 3] = [0, 1, 3];

/// `[n, num_T, C, T_cat]` -> `[n, num_S, 7, T_sp]`, rows ordered global,
/// hemisphere (2), quadrant (4).
pub fn spatial_block(
    params: &ModelParams,
    cfg: &ModelConfig,
    shapes: &DerivedShapes,
    z: &Tensor,
    training: bool,
) -> Result<(Tensor, SpatialCache)> {
    let n = z.shape.first().copied().unwrap_or(0);
    expect_shape("spatial input", z, &shapes.temporal_output(n, cfg))?;
    let groups = spatial_groups(cfg.channels, shapes);
    let mut concat = Tensor::zeros(&shapes.spatial_output(n, cfg));
    let pre: Vec<Tensor> = spatial_convs(params)
        .iter()
        .zip(&groups)
        .zip(SPATIAL_ROW_OFFSETS)
        .map(|((conv, g), row)| {
            let p = row_conv_forward(z, &conv.weight, &conv.bias, g);
            leaky_pool_into(&p, cfg.leaky_slope, cfg.spatial_pool, &mut concat, row, 0);
            p
        })
        .collect();
    let (out, bn) = bn_forward(&concat, &params.spatial_bn, cfg.bn_epsilon, training);
    let pre: [Tensor; 3] = pre.try_into().expect("three branches");
    Ok((
        out,
        SpatialCache {
            pre,
            pre_bn: concat,
            bn,
        },
    ))
}

pub fn spatial_backward(
    params: &ModelParams,
    cfg: &ModelConfig,
    shapes: &DerivedShapes,
    z: &Tensor,
    cache: &SpatialCache,
    d_out: &Tensor,
    grads: &mut ModelParams,
) -> Tensor {
    let d_concat = bn_backward(d_out, &params.spatial_bn, &cache.bn, &mut grads.spatial_bn);
    let groups = spatial_groups(cfg.channels, shapes);
    let mut dz = Tensor::zeros(&z.shape);
    let grad_convs = [
        &mut grads.spatial_global,
        &mut grads.spatial_hemisphere,
        &mut grads.spatial_quadrant,
    ];
    for (b, g_conv) in grad_convs.into_iter().enumerate() {
        let d_pre = leaky_pool_backward(
            &cache.pre[b],
            cfg.leaky_slope,
            cfg.spatial_pool,
            &d_concat,
            SPATIAL_ROW_OFFSETS[b],
            0,
        );
        let conv = spatial_convs(params)[b];
        let part = row_conv_backward(
            z,
            &conv.weight,
            &groups[b],
            &d_pre,
            &mut g_conv.weight,
            &mut g_conv.bias,
            true,
        )
        .expect("input gradient requested");
        for (a, p) in dz.data.iter_mut().zip(&part.data) {
            *a += p;
        }
    }
    dz
}

fn fusion_groups(shapes: &DerivedShapes) -> Vec<Vec<Tap>> {
    // Kernel rows past the spatial rows multiply zero padding and get no tap.
    vec![(0..shapes.spatial_rows)
        .map(|r| Tap {
            kernel_row: r,
            input_row: r,
        })
        .collect()]
}

#[derive(Debug, Clone)]
pub struct FusionCache {
    pub pre: Tensor,
    pub pre_bn: Tensor,
    pub bn: BnCache,
}

/// `[n, num_S, 7, T_sp]` -> `[n, num_S, 1, T_f]`.
pub fn fusion_block(
    params: &ModelParams,
    cfg: &ModelConfig,
    shapes: &DerivedShapes,
    s: &Tensor,
    training: bool,
) -> Result<(Tensor, FusionCache)> {
    let n = s.shape.first().copied().unwrap_or(0);
    expect_shape("fusion input", s, &shapes.spatial_output(n, cfg))?;
    let pre = row_conv_forward(s, &params.fusion.weight, &params.fusion.bias, &fusion_groups(shapes));
    let mut pooled = Tensor::zeros(&shapes.fusion_output(n, cfg));
    leaky_pool_into(&pre, cfg.leaky_slope, cfg.fusion_pool, &mut pooled, 0, 0);
    let (out, bn) = bn_forward(&pooled, &params.fusion_bn, cfg.bn_epsilon, training);
    Ok((
        out,
        FusionCache {
            pre,
            pre_bn: pooled,
            bn,
        },
    ))
}

pub fn fusion_backward(
    params: &ModelParams,
    cfg: &ModelConfig,
    shapes: &DerivedShapes,
    s: &Tensor,
    cache: &FusionCache,
    d_out: &Tensor,
    grads: &mut ModelParams,
) -> Tensor {
    let d_pooled = bn_backward(d_out, &params.fusion_bn, &cache.bn, &mut grads.fusion_bn);
    let d_pre = leaky_pool_backward(&cache.pre, cfg.leaky_slope, cfg.fusion_pool, &d_pooled, 0, 0);
    row_conv_backward(
        s,
        &params.fusion.weight,
        &fusion_groups(shapes),
        &d_pre,
        &mut grads.fusion.weight,
        &mut grads.fusion.bias,
        true,
    )
    .expect("input gradient requested")
}

#[derive(Debug, Clone)]
pub struct HeadCache {
    /// `[n, hidden]` affine output before the rectifier.
    pub hidden_pre: Tensor,
    /// Inverted-dropout multipliers, present in training mode with p > 0.
    pub mask: Option<Vec<f64>>,
    /// `[n, hidden]` rectified and dropped-out activations.
    pub hidden_out: Tensor,
}

/// Inverted-dropout mask: each unit kept with probability `1 - p` and scaled
/// by `1 / (1 - p)`.
pub fn dropout_mask(len: usize, p: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = 1.0 / (1.0 - p);
    (0..len)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect()
}

/// `[n, num_S, 1, T_f]` -> logits `[n, 2]`.
pub fn classify(
    params: &ModelParams,
    cfg: &ModelConfig,
    shapes: &DerivedShapes,
    f: &Tensor,
    training: bool,
    seed: u64,
) -> Result<(Tensor, HeadCache)> {
    let n = f.shape.first().copied().unwrap_or(0);
    expect_shape("classifier input", f, &shapes.fusion_output(n, cfg))?;
    let width = shapes.flat_width;
    let hidden = cfg.hidden_units;
    let mut hidden_pre = Tensor::zeros(&[n, hidden]);
    for i in 0..n {
        let x = &f.data[i * width..(i + 1) * width];
        for u in 0..hidden {
            hidden_pre.data[i * hidden + u] = params.hidden.bias.data[u]
                + dot(&params.hidden.weight.data[u * width..(u + 1) * width], x);
        }
    }
    let mask = (training && cfg.dropout_rate > 0.0)
        .then(|| dropout_mask(n * hidden, cfg.dropout_rate, seed));
    let mut hidden_out = Tensor::zeros(&[n, hidden]);
    for (k, o) in hidden_out.data.iter_mut().enumerate() {
        let a = leaky(hidden_pre.data[k], cfg.leaky_slope);
        *o = mask.as_ref().map_or(a, |m| a * m[k]);
    }
    let mut logits = Tensor::zeros(&[n, 2]);
    for i in 0..n {
        let h = &hidden_out.data[i * hidden..(i + 1) * hidden];
        for o in 0..2 {
            logits.data[i * 2 + o] = params.output.bias.data[o]
                + dot(&params.output.weight.data[o * hidden..(o + 1) * hidden], h);
        }
    }
    Ok((
        logits,
        HeadCache {
            hidden_pre,
            mask,
            hidden_out,
        },
    ))
}

pub fn classify_backward(
    params: &ModelParams,
    cfg: &ModelConfig,
    shapes: &DerivedShapes,
    f: &Tensor,
    cache: &HeadCache,
    d_logits: &Tensor,
    grads: &mut ModelParams,
) -> Tensor {
    let n = d_logits.shape[0];
    let width = shapes.flat_width;
    let hidden = cfg.hidden_units;
    let mut d_hidden_pre = vec![0.0; n * hidden];
    for i in 0..n {
        let h = &cache.hidden_out.data[i * hidden..(i + 1) * hidden];
        for o in 0..2 {
            let d = d_logits.data[i * 2 + o];
            grads.output.bias.data[o] += d;
            axpy(d, h, &mut grads.output.weight.data[o * hidden..(o + 1) * hidden]);
        }
        for u in 0..hidden {
            let k = i * hidden + u;
            let mut d = params.output.weight.data[u] * d_logits.data[i * 2]
                + params.output.weight.data[hidden + u] * d_logits.data[i * 2 + 1];
            if let Some(m) = &cache.mask {
                d *= m[k];
            }
            d_hidden_pre[k] = d * leaky_grad(cache.hidden_pre.data[k], cfg.leaky_slope);
        }
    }
    let mut d_f = Tensor::zeros(&f.shape);
    for i in 0..n {
        let x = &f.data[i * width..(i + 1) * width];
        for u in 0..hidden {
            let d = d_hidden_pre[i * hidden + u];
            grads.hidden.bias.data[u] += d;
            let row = u * width..(u + 1) * width;
            axpy(d, x, &mut grads.hidden.weight.data[row.clone()]);
            axpy(
                d,
                &params.hidden.weight.data[row],
                &mut d_f.data[i * width..(i + 1) * width],
            );
        }
    }
    d_f
}
