use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::config::{DerivedShapes, ModelConfig};
use crate::model::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Trainable,
    /// Batch-norm running statistics: saved, never differentiated.
    Buffer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub scale: Tensor,
    pub shift: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `[out, in]`
    pub weight: Tensor,
    pub bias: Tensor,
}

/// All learnable tensors plus batch-norm buffers. Also used as the gradient
/// container, in which case buffers stay zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub temporal: Vec<Conv>,
    pub temporal_bn: BatchNorm,
    pub spatial_global: Conv,
    pub spatial_hemisphere: Conv,
    pub spatial_quadrant: Conv,
    pub spatial_bn: BatchNorm,
    pub fusion: Conv,
    pub fusion_bn: BatchNorm,
    pub hidden: Dense,
    pub output: Dense,
}

impl BatchNorm {
    fn new(maps: usize) -> Self {
        Self {
            scale: Tensor::filled(&[maps], 1.0),
            shift: Tensor::zeros(&[maps]),
            running_mean: Tensor::zeros(&[maps]),
            running_var: Tensor::filled(&[maps], 1.0),
        }
    }

    fn zeros(maps: usize) -> Self {
        Self {
            scale: Tensor::zeros(&[maps]),
            shift: Tensor::zeros(&[maps]),
            running_mean: Tensor::zeros(&[maps]),
            running_var: Tensor::zeros(&[maps]),
        }
    }
}

impl ModelParams {
    /// Zero-filled tensors with the shapes implied by `cfg`.
    pub fn zeros(cfg: &ModelConfig, shapes: &DerivedShapes) -> Self {
        let (nt, ns) = (cfg.num_temporal_maps, cfg.num_spatial_maps);
        let conv = |w: &[usize], out: usize| Conv {
            weight: Tensor::zeros(w),
            bias: Tensor::zeros(&[out]),
        };
        Self {
            temporal: shapes
                .kernel_lengths
                .iter()
                .map(|&k| conv(&[nt, 1, 1, k], nt))
                .collect(),
            temporal_bn: BatchNorm::zeros(nt),
            spatial_global: conv(&[ns, nt, cfg.channels, 1], ns),
            spatial_hemisphere: conv(&[ns, nt, shapes.hemisphere_height, 1], ns),
            spatial_quadrant: conv(&[ns, nt, shapes.quadrant_height, 1], ns),
            spatial_bn: BatchNorm::zeros(ns),
            fusion: conv(&[ns, ns, shapes.fusion_kernel, 1], ns),
            fusion_bn: BatchNorm::zeros(ns),
            hidden: Dense {
                weight: Tensor::zeros(&[cfg.hidden_units, shapes.flat_width]),
                bias: Tensor::zeros(&[cfg.hidden_units]),
            },
            output: Dense {
                weight: Tensor::zeros(&[2, cfg.hidden_units]),
                bias: Tensor::zeros(&[2]),
            },
        }
    }

    /// Seeded uniform fan-in initialization: weights and biases drawn from
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, rounded to binary32 so that
    /// checkpoints round-trip exactly. Batch norm starts at scale 1, shift 0,
    /// running mean 0 and running variance 1.
    pub fn init(cfg: &ModelConfig, shapes: &DerivedShapes, seed: u64) -> Self {
        let mut p = Self::zeros(cfg, shapes);
        p.temporal_bn = BatchNorm::new(cfg.num_temporal_maps);
        p.spatial_bn = BatchNorm::new(cfg.num_spatial_maps);
        p.fusion_bn = BatchNorm::new(cfg.num_spatial_maps);

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |t: &mut Tensor, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in &mut t.data {
                *v = rng.random_range(-bound..bound) as f32 as f64;
            }
        };
        let (nt, ns) = (cfg.num_temporal_maps, cfg.num_spatial_maps);
        for (conv, &k) in p.temporal.iter_mut().zip(&shapes.kernel_lengths) {
            fill(&mut conv.weight, k);
            fill(&mut conv.bias, k);
        }
        for (conv, height) in [
            (&mut p.spatial_global, cfg.channels),
            (&mut p.spatial_hemisphere, shapes.hemisphere_height),
            (&mut p.spatial_quadrant, shapes.quadrant_height),
        ] {
            fill(&mut conv.weight, nt * height);
            fill(&mut conv.bias, nt * height);
        }
        fill(&mut p.fusion.weight, ns * shapes.fusion_kernel);
        fill(&mut p.fusion.bias, ns * shapes.fusion_kernel);
        fill(&mut p.hidden.weight, shapes.flat_width);
        fill(&mut p.hidden.bias, shapes.flat_width);
        fill(&mut p.output.weight, cfg.hidden_units);
        fill(&mut p.output.bias, cfg.hidden_units);
        p
    }

    fn bn_entries<'a>(
        prefix: &str,
        bn: &'a BatchNorm,
        out: &mut Vec<(String, &'a Tensor, ParamKind)>,
    ) {
        out.push((format!("{prefix}.scale"), &bn.scale, ParamKind::Trainable));
        out.push((format!("{prefix}.shift"), &bn.shift, ParamKind::Trainable));
        out.push((format!("{prefix}.running_mean"), &bn.running_mean, ParamKind::Buffer));
        out.push((format!("{prefix}.running_var"), &bn.running_var, ParamKind::Buffer));
    }

    fn bn_entries_mut<'a>(
        prefix: &str,
        bn: &'a mut BatchNorm,
        out: &mut Vec<(String, &'a mut Tensor, ParamKind)>,
    ) {
        let BatchNorm {
            scale,
            shift,
            running_mean,
            running_var,
        } = bn;
        out.push((format!("{prefix}.scale"), scale, ParamKind::Trainable));
        out.push((format!("{prefix}.shift"), shift, ParamKind::Trainable));
        out.push((format!("{prefix}.running_mean"), running_mean, ParamKind::Buffer));
        out.push((format!("{prefix}.running_var"), running_var, ParamKind::Buffer));
    }

    /// Every tensor with its stable name, in checkpoint order.
    pub fn tensors(&self) -> Vec<(String, &Tensor, ParamKind)> {
        use ParamKind::Trainable as T;
        let mut out = Vec::new();
        for (i, c) in self.temporal.iter().enumerate() {
            out.push((format!("temporal.{i}.weight"), &c.weight, T));
            out.push((format!("temporal.{i}.bias"), &c.bias, T));
        }
        Self::bn_entries("temporal_bn", &self.temporal_bn, &mut out);
        for (name, c) in [
            ("spatial_global", &self.spatial_global),
            ("spatial_hemisphere", &self.spatial_hemisphere),
            ("spatial_quadrant", &self.spatial_quadrant),
        ] {
            out.push((format!("{name}.weight"), &c.weight, T));
            out.push((format!("{name}.bias"), &c.bias, T));
        }
        Self::bn_entries("spatial_bn", &self.spatial_bn, &mut out);
        out.push(("fusion.weight".into(), &self.fusion.weight, T));
        out.push(("fusion.bias".into(), &self.fusion.bias, T));
        Self::bn_entries("fusion_bn", &self.fusion_bn, &mut out);
        out.push(("hidden.weight".into(), &self.hidden.weight, T));
        out.push(("hidden.bias".into(), &self.hidden.bias, T));
        out.push(("output.weight".into(), &self.output.weight, T));
        out.push(("output.bias".into(), &self.output.bias, T));
        out
    }

    /// Mutable counterpart of [`tensors`](Self::tensors), same order.
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor, ParamKind)> {
        use ParamKind::Trainable as T;
        let mut out: Vec<(String, &mut Tensor, ParamKind)> = Vec::new();
        for (i, c) in self.temporal.iter_mut().enumerate() {
            out.push((format!("temporal.{i}.weight"), &mut c.weight, T));
            out.push((format!("temporal.{i}.bias"), &mut c.bias, T));
        }
        Self::bn_entries_mut("temporal_bn", &mut self.temporal_bn, &mut out);
        for (name, c) in [
            ("spatial_global", &mut self.spatial_global),
            ("spatial_hemisphere", &mut self.spatial_hemisphere),
            ("spatial_quadrant", &mut self.spatial_quadrant),
        ] {
            out.push((format!("{name}.weight"), &mut c.weight, T));
            out.push((format!("{name}.bias"), &mut c.bias, T));
        }
        Self::bn_entries_mut("spatial_bn", &mut self.spatial_bn, &mut out);
        out.push(("fusion.weight".into(), &mut self.fusion.weight, T));
        out.push(("fusion.bias".into(), &mut self.fusion.bias, T));
        Self::bn_entries_mut("fusion_bn", &mut self.fusion_bn, &mut out);
        out.push(("hidden.weight".into(), &mut self.hidden.weight, T));
        out.push(("hidden.bias".into(), &mut self.hidden.bias, T));
        out.push(("output.weight".into(), &mut self.output.weight, T));
        out.push(("output.bias".into(), &mut self.output.bias, T));
        out
    }

    pub fn trainable_len(&self) -> usize {
        self.tensors()
            .iter()
            .filter(|(_, _, k)| *k == ParamKind::Trainable)
            .map(|(_, t, _)| t.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t, _)| t.data.iter().all(|v| v.is_finite()))
    }

    /// Round every value to the nearest binary32.
    pub fn round_to_f32(&mut self) {
        for (_, t, _) in self.tensors_mut() {
            for v in &mut t.data {
                *v = *v as f32 as f64;
            }
        }
    }

    pub fn bit_eq(&self, other: &Self) -> bool {
        let (a, b) = (self.tensors(), other.tensors());
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.0 == y.0 && x.1.bit_eq(y.1))
    }

    /// Bit equality restricted to trainable tensors.
    pub fn trainable_bit_eq(&self, other: &Self) -> bool {
        let (a, b) = (self.tensors(), other.tensors());
        a.len() == b.len()
            && a.iter()
                .zip(&b)
                .filter(|(x, _)| x.2 == ParamKind::Trainable)
                .all(|(x, y)| x.0 == y.0 && x.1.bit_eq(y.1))
    }
}
