use serde::{Deserialize, Serialize};

use crate::data::interchange::sha256_hex;
use crate::data::layout::quadrant_height;
use crate::error::{Error, Result};

/// Rows produced by the spatial block: one global, two hemisphere, four quadrant.
pub const SPATIAL_ROWS: usize = 1 + 2 + 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub fs: f64,
    pub channels: usize,
    pub window_samples: usize,
    pub ratios: Vec<f64>,
    pub num_temporal_maps: usize,
    pub num_spatial_maps: usize,
    pub temporal_pool: usize,
    pub spatial_pool: usize,
    pub fusion_pool: usize,
    pub hidden_units: usize,
    pub dropout_rate: f64,
    pub leaky_slope: f64,
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
    pub fusion_kernel_override: Option<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            fs: 128.0,
            channels: 14,
            window_samples: 128,
            ratios: vec![0.5, 0.25, 0.125, 0.0625, 0.03125],
            num_temporal_maps: 15,
            num_spatial_maps: 15,
            temporal_pool: 8,
            spatial_pool: 2,
            fusion_pool: 4,
            hidden_units: 32,
            dropout_rate: 0.5,
            leaky_slope: 0.01,
            bn_momentum: 0.1,
            bn_epsilon: 1e-5,
            fusion_kernel_override: None,
        }
    }
}

impl ModelConfig {
    /// The small network used for finite-difference gradient checks.
    ///
    /// Pools are 2/2/2 so that a 32-sample window still leaves a non-empty
    /// feature map after the fusion block.
    pub fn tiny() -> Self {
        Self {
            fs: 32.0,
            channels: 4,
            window_samples: 32,
            ratios: vec![0.5, 0.25],
            num_temporal_maps: 2,
            num_spatial_maps: 2,
            temporal_pool: 2,
            spatial_pool: 2,
            fusion_pool: 2,
            hidden_units: 4,
            dropout_rate: 0.0,
            ..Self::default()
        }
    }

    pub fn kernel_length(&self, ratio: f64) -> usize {
        // Guard against products like 0.1 * 30 = 3.0000000000000004.
        ((ratio * self.fs - 1e-9).ceil() as usize).max(1)
    }

    /// Hex digest of the canonical JSON encoding of this config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        sha256_hex(json.as_bytes())[..16].to_string()
    }

    pub fn derive(&self) -> Result<DerivedShapes> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return bad(format!("fs must be positive, got {}", self.fs));
        }
        if self.channels < 4 || !self.channels.is_multiple_of(2) {
            return bad(format!(
                "channels must be even and >= 4 for the hemisphere kernel, got {}",
                self.channels
            ));
        }
        if self.ratios.is_empty() {
            return bad("at least one temporal ratio is required".into());
        }
        for w in self.ratios.windows(2) {
            if w[1] >= w[0] {
                return bad(format!("ratios must be strictly decreasing: {:?}", self.ratios));
            }
        }
        if let Some(r) = self.ratios.iter().find(|&&r| !(r > 0.0 && r <= 1.0)) {
            return bad(format!("ratio {r} outside (0, 1]"));
        }
        for (name, v) in [
            ("num_temporal_maps", self.num_temporal_maps),
            ("num_spatial_maps", self.num_spatial_maps),
            ("temporal_pool", self.temporal_pool),
            ("spatial_pool", self.spatial_pool),
            ("fusion_pool", self.fusion_pool),
            ("hidden_units", self.hidden_units),
        ] {
            if v == 0 {
                return bad(format!("{name} must be >= 1"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        if !(self.bn_epsilon > 0.0) || !(0.0..=1.0).contains(&self.bn_momentum) {
            return bad("bn_epsilon must be positive and bn_momentum in [0, 1]".into());
        }

        let kernel_lengths: Vec<usize> =
            self.ratios.iter().map(|&r| self.kernel_length(r)).collect();
        if let Some(&k) = kernel_lengths.iter().find(|&&k| k > self.window_samples) {
            return bad(format!(
                "temporal kernel of {k} samples exceeds the {}-sample window",
                self.window_samples
            ));
        }
        let conv_lengths: Vec<usize> = kernel_lengths
            .iter()
            .map(|&k| self.window_samples - k + 1)
            .collect();
        let pooled_lengths: Vec<usize> = conv_lengths
            .iter()
            .map(|&l| l / self.temporal_pool)
            .collect();
        if pooled_lengths.contains(&0) {
            return bad(format!(
                "temporal pool {} leaves an empty branch (conv lengths {conv_lengths:?})",
                self.temporal_pool
            ));
        }
        let t_cat: usize = pooled_lengths.iter().sum();
        let t_sp = t_cat / self.spatial_pool;
        if t_sp == 0 {
            return bad(format!("spatial pool {} exceeds T_cat {t_cat}", self.spatial_pool));
        }
        let fusion_kernel = match self.fusion_kernel_override {
            Some(k) if k < SPATIAL_ROWS => {
                return bad(format!(
                    "fusion_kernel_override {k} is smaller than the {SPATIAL_ROWS} spatial rows"
                ))
            }
            Some(k) => k,
            None => SPATIAL_ROWS,
        };
        let t_f = t_sp / self.fusion_pool;
        if t_f == 0 {
            return bad(format!("fusion pool {} exceeds T_sp {t_sp}", self.fusion_pool));
        }
        let hemisphere_height = self.channels / 2;
        let q = quadrant_height(self.channels);
        Ok(DerivedShapes {
            kernel_lengths,
            conv_lengths,
            pooled_lengths,
            t_cat,
            hemisphere_height,
            quadrant_height: q,
            quadrant_padded_rows: 4 * q,
            spatial_rows: SPATIAL_ROWS,
            t_sp,
            fusion_kernel,
            t_f,
            flat_width: self.num_spatial_maps * t_f,
        })
    }
}

/// Every intermediate extent, computed from a [`ModelConfig`] alone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DerivedShapes {
    pub kernel_lengths: Vec<usize>,
    pub conv_lengths: Vec<usize>,
    pub pooled_lengths: Vec<usize>,
    pub t_cat: usize,
    pub hemisphere_height: usize,
    pub quadrant_height: usize,
    pub quadrant_padded_rows: usize,
    pub spatial_rows: usize,
    pub t_sp: usize,
    pub fusion_kernel: usize,
    pub t_f: usize,
    pub flat_width: usize,
}

impl DerivedShapes {
    pub fn temporal_output(&self, n: usize, cfg: &ModelConfig) -> [usize; 4] {
        [n, cfg.num_temporal_maps, cfg.channels, self.t_cat]
    }

    pub fn spatial_output(&self, n: usize, cfg: &ModelConfig) -> [usize; 4] {
        [n, cfg.num_spatial_maps, self.spatial_rows, self.t_sp]
    }

    pub fn fusion_output(&self, n: usize, cfg: &ModelConfig) -> [usize; 4] {
        [n, cfg.num_spatial_maps, 1, self.t_f]
    }
}
