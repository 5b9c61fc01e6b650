use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use emoscale::data::SynthConfig;
use emoscale::metrics::report::AurocMode;
use emoscale::model::ModelConfig;
use emoscale::preprocess::PreprocessConfig;
use emoscale::training::{SplitSpec, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportConfig {
    pub auroc_mode: AurocMode,
    pub threshold: f64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            auroc_mode: AurocMode::Sweep,
            threshold: 0.5,
        }
    }
}

/// Everything a run needs, loaded from one TOML file. Missing keys take
/// their defaults; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// When set, replaces the seed of every section.
    pub seed: Option<u64>,
    pub synth: SynthConfig,
    pub preprocess: PreprocessConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub split: SplitSpec,
    pub report: ReportConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn apply_seed(&mut self) {
        if let Some(seed) = self.seed {
            self.synth.seed = seed;
            self.train.seed = seed;
            self.split.seed = seed;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.preprocess.validate()?;
        self.model.derive()?;
        self.train.validate()?;
        self.split.validate()?;
        anyhow::ensure!(
            (0.0..=1.0).contains(&self.report.threshold),
            "report.threshold must lie in [0, 1]"
        );
        Ok(())
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn dataset_path(&self) -> Result<&Path> {
        self.dataset
            .as_deref()
            .context("no dataset given; pass --dataset or set `dataset` in the config")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_all_defaults() {
        let c: RunConfig = toml::from_str("").unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("bogus = 1").is_err());
        assert!(toml::from_str::<RunConfig>("[train]\nepoch = 3").is_err());
    }

    #[test]
    fn sections_parse() {
        let c: RunConfig = toml::from_str(
            r#"
            seed = 11
            dataset = "data"
            [train]
            target = "arousal"
            epochs = 3
            [split]
            mode = "tvt"
            [model]
            fusion_kernel_override = 8
            [report]
            auroc_mode = "paper_parity"
            "#,
        )
        .unwrap();
        let mut c = c;
        c.apply_seed();
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.train.seed, 11);
        assert_eq!(c.synth.seed, 11);
        assert_eq!(c.model.fusion_kernel_override, Some(8));
        assert_eq!(c.report.auroc_mode, AurocMode::PaperParity);
        c.validate().unwrap();
    }

    #[test]
    fn shipped_example_is_the_default() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/example.toml");
        let c = RunConfig::load(&path).unwrap();
        assert_eq!(c, RunConfig::default());
    }
}
