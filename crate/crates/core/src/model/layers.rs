//! Layer primitives on `[n, maps, rows, time]` tensors with hand-written
//! backward passes.

use crate::model::params::BatchNorm;
use crate::model::tensor::{axpy, dot, Tensor};

#[inline]
pub fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

#[inline]
pub fn leaky_grad(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        slope
    }
}

/// Leaky rectifier followed by floor average pooling along time, written into
/// `dest` at the given row and time offsets.
pub fn leaky_pool_into(
    pre: &Tensor,
    slope: f64,
    pool: usize,
    dest: &mut Tensor,
    row_offset: usize,
    time_offset: usize,
) {
    let [n, c, h, w] = pre.dims4();
    let [dn, dc, dh, dw] = dest.dims4();
    debug_assert_eq!((n, c), (dn, dc));
    let wp = w / pool;
    debug_assert!(row_offset + h <= dh && time_offset + wp <= dw);
    let inv = 1.0 / pool as f64;
    for i in 0..n {
        for m in 0..c {
            for r in 0..h {
                let src = &pre.data[((i * c + m) * h + r) * w..][..w];
                let base = ((i * c + m) * dh + r + row_offset) * dw + time_offset;
                let out = &mut dest.data[base..base + wp];
                for (t, o) in out.iter_mut().enumerate() {
                    let s: f64 = src[t * pool..(t + 1) * pool]
                        .iter()
                        .map(|&v| leaky(v, slope))
                        .sum();
                    *o = s * inv;
                }
            }
        }
    }
}

/// Gradient w.r.t. `pre` of [`leaky_pool_into`], given the gradient of `dest`.
/// Samples dropped by the floor pool receive zero gradient.
pub fn leaky_pool_backward(
    pre: &Tensor,
    slope: f64,
    pool: usize,
    d_dest: &Tensor,
    row_offset: usize,
    time_offset: usize,
) -> Tensor {
    let [n, c, h, w] = pre.dims4();
    let [_, _, dh, dw] = d_dest.dims4();
    let wp = w / pool;
    let inv = 1.0 / pool as f64;
    let mut d_pre = Tensor::zeros(&pre.shape);
    for i in 0..n {
        for m in 0..c {
            for r in 0..h {
                let off = ((i * c + m) * h + r) * w;
                let base = ((i * c + m) * dh + r + row_offset) * dw + time_offset;
                let g = &d_dest.data[base..base + wp];
                for (t, &gt) in g.iter().enumerate() {
                    for k in t * pool..(t + 1) * pool {
                        d_pre.data[off + k] = gt * inv * leaky_grad(pre.data[off + k], slope);
                    }
                }
            }
        }
    }
    d_pre
}

/// Per-map batch statistics (biased variance over all other axes).
#[derive(Debug, Clone, PartialEq)]
pub struct BnStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: usize,
}

#[derive(Debug, Clone)]
pub struct BnCache {
    pub x_hat: Tensor,
    pub inv_std: Vec<f64>,
    pub stats: Option<BnStats>,
}

/// Batch normalization over axis 1. Training mode normalizes with batch
/// statistics; inference uses the running estimates.
pub fn bn_forward(x: &Tensor, bn: &BatchNorm, eps: f64, training: bool) -> (Tensor, BnCache) {
    let [n, c, h, w] = x.dims4();
    let plane = h * w;
    let count = n * plane;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    if training {
        for m in 0..c {
            let mut s = 0.0;
            for i in 0..n {
                s += x.data[(i * c + m) * plane..][..plane].iter().sum::<f64>();
            }
            mean[m] = s / count as f64;
            let mut v = 0.0;
            for i in 0..n {
                v += x.data[(i * c + m) * plane..][..plane]
                    .iter()
                    .map(|&a| (a - mean[m]).powi(2))
                    .sum::<f64>();
            }
            var[m] = v / count as f64;
        }
    } else {
        mean.copy_from_slice(&bn.running_mean.data);
        var.copy_from_slice(&bn.running_var.data);
    }
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let mut x_hat = Tensor::zeros(&x.shape);
    let mut y = Tensor::zeros(&x.shape);
    for i in 0..n {
        for m in 0..c {
            let off = (i * c + m) * plane;
            let (g, b) = (bn.scale.data[m], bn.shift.data[m]);
            for k in off..off + plane {
                let xh = (x.data[k] - mean[m]) * inv_std[m];
                x_hat.data[k] = xh;
                y.data[k] = g * xh + b;
            }
        }
    }
    let stats = training.then_some(BnStats { mean, var, count });
    (
        y,
        BnCache {
            x_hat,
            inv_std,
            stats,
        },
    )
}

/// Training-mode batch-norm backward; accumulates scale/shift gradients into
/// `grad` and returns the input gradient.
pub fn bn_backward(dy: &Tensor, bn: &BatchNorm, cache: &BnCache, grad: &mut BatchNorm) -> Tensor {
    let [n, c, h, w] = dy.dims4();
    let plane = h * w;
    let count = (n * plane) as f64;
    let mut dx = Tensor::zeros(&dy.shape);
    for m in 0..c {
        let (mut sum_dy, mut sum_dy_xh) = (0.0, 0.0);
        for i in 0..n {
            let off = (i * c + m) * plane;
            let d = &dy.data[off..off + plane];
            sum_dy += d.iter().sum::<f64>();
            sum_dy_xh += dot(d, &cache.x_hat.data[off..off + plane]);
        }
        grad.scale.data[m] += sum_dy_xh;
        grad.shift.data[m] += sum_dy;
        let k = bn.scale.data[m] * cache.inv_std[m] / count;
        for i in 0..n {
            let off = (i * c + m) * plane;
            for j in off..off + plane {
                dx.data[j] = k * (count * dy.data[j] - sum_dy - cache.x_hat.data[j] * sum_dy_xh);
            }
        }
    }
    dx
}

/// Blend batch statistics into running estimates. Variance uses the unbiased
/// correction when more than one value contributed.
pub fn bn_update_running(bn: &mut BatchNorm, stats: &BnStats, momentum: f64) {
    let correction = if stats.count > 1 {
        stats.count as f64 / (stats.count - 1) as f64
    } else {
        1.0
    };
    for m in 0..stats.mean.len() {
        let rm = &mut bn.running_mean.data[m];
        *rm = (1.0 - momentum) * *rm + momentum * stats.mean[m];
        let rv = &mut bn.running_var.data[m];
        *rv = (1.0 - momentum) * *rv + momentum * stats.var[m] * correction;
    }
}

/// One input row feeding one kernel row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tap {
    pub kernel_row: usize,
    pub input_row: usize,
}

/// Convolution whose kernel spans whole input rows: output row `g` is
/// `bias[s] + sum_m sum_tap weight[s, m, tap.kernel_row] * z[m, tap.input_row, t]`.
/// Kernel rows without a tap see implicit zero padding.
pub fn row_conv_forward(z: &Tensor, weight: &Tensor, bias: &Tensor, groups: &[Vec<Tap>]) -> Tensor {
    let [n, maps_in, rows, t] = z.dims4();
    let (s_out, k_rows) = (weight.shape[0], weight.shape[2]);
    debug_assert_eq!(weight.shape[1], maps_in);
    let g_out = groups.len();
    let mut out = Tensor::zeros(&[n, s_out, g_out, t]);
    for i in 0..n {
        for s in 0..s_out {
            for (g, taps) in groups.iter().enumerate() {
                let base = ((i * s_out + s) * g_out + g) * t;
                let acc = &mut out.data[base..base + t];
                acc.fill(bias.data[s]);
                for m in 0..maps_in {
                    for tap in taps {
                        let wv = weight.data[(s * maps_in + m) * k_rows + tap.kernel_row];
                        let src = &z.data[((i * maps_in + m) * rows + tap.input_row) * t..][..t];
                        axpy(wv, src, acc);
                    }
                }
            }
        }
    }
    out
}

/// Backward of [`row_conv_forward`]: accumulates weight and bias gradients
/// and, if requested, returns the input gradient.
pub fn row_conv_backward(
    z: &Tensor,
    weight: &Tensor,
    groups: &[Vec<Tap>],
    d_pre: &Tensor,
    d_weight: &mut Tensor,
    d_bias: &mut Tensor,
    want_input_grad: bool,
) -> Option<Tensor> {
    let [n, maps_in, rows, t] = z.dims4();
    let (s_out, k_rows) = (weight.shape[0], weight.shape[2]);
    let g_out = groups.len();
    let mut dz = want_input_grad.then(|| Tensor::zeros(&z.shape));
    for i in 0..n {
        for s in 0..s_out {
            for (g, taps) in groups.iter().enumerate() {
                let d = &d_pre.data[((i * s_out + s) * g_out + g) * t..][..t];
                d_bias.data[s] += d.iter().sum::<f64>();
                for m in 0..maps_in {
                    for tap in taps {
                        let widx = (s * maps_in + m) * k_rows + tap.kernel_row;
                        let zoff = ((i * maps_in + m) * rows + tap.input_row) * t;
                        d_weight.data[widx] += dot(d, &z.data[zoff..zoff + t]);
                        if let Some(dz) = dz.as_mut() {
                            axpy(weight.data[widx], d, &mut dz.data[zoff..zoff + t]);
                        }
                    }
                }
            }
        }
    }
    dz
}
