//! Trial-level split protocols. Every window inherits its trial's side, so
//! no recording contributes to more than one side of a split.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    #[default]
    Kfold,
    Tvt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub mode: SplitMode,
    pub k: usize,
    /// Train, validation and test fractions.
    pub tvt_fractions: [f64; 3],
    /// Share of each cross-validation training portion held out for early stopping.
    pub cv_validation_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            mode: SplitMode::Kfold,
            k: 5,
            tvt_fractions: [0.64, 0.16, 0.20],
            cv_validation_fraction: 0.2,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidConfig(format!("k must be >= 2, got {}", self.k)));
        }
        let sum: f64 = self.tvt_fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.tvt_fractions.iter().any(|f| *f < 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tvt fractions {:?} must be non-negative and sum to 1",
                self.tvt_fractions
            )));
        }
        if !(0.0..1.0).contains(&self.cv_validation_fraction) {
            return Err(Error::InvalidConfig(
                "cv_validation_fraction must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Disjoint trial-index sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Round half up, robust to products such as 0.36 * 100 = 35.99999999999999.
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5 + 1e-9).floor().max(0.0) as usize
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}

/// Seeded shuffle, then `k` contiguous folds whose sizes differ by at most one.
pub fn split_kfold(n_trials: usize, spec: &SplitSpec) -> Result<Vec<Vec<usize>>> {
    spec.validate()?;
    if n_trials < spec.k {
        return Err(Error::TooFewTrials {
            needed: spec.k,
            found: n_trials,
        });
    }
    let idx = shuffled(n_trials, spec.seed);
    let (base, extra) = (n_trials / spec.k, n_trials % spec.k);
    let mut folds = Vec::with_capacity(spec.k);
    let mut start = 0;
    for f in 0..spec.k {
        let size = base + usize::from(f < extra);
        folds.push(sorted(idx[start..start + size].to_vec()));
        start += size;
    }
    Ok(folds)
}

/// Seeded shuffle; the first share goes to test, the next to validation and
/// the rest to training. Boundaries round half up on cumulative fractions.
pub fn split_tvt(n_trials: usize, spec: &SplitSpec) -> Result<TrialSplit> {
    spec.validate()?;
    if n_trials < 5 {
        return Err(Error::TooFewTrials {
            needed: 5,
            found: n_trials,
        });
    }
    let idx = shuffled(n_trials, spec.seed);
    let [_, val_f, test_f] = spec.tvt_fractions;
    let b1 = round_half_up(test_f * n_trials as f64).min(n_trials);
    let b2 = round_half_up((test_f + val_f) * n_trials as f64).clamp(b1, n_trials);
    Ok(TrialSplit {
        test: sorted(idx[..b1].to_vec()),
        val: sorted(idx[b1..b2].to_vec()),
        train: sorted(idx[b2..].to_vec()),
    })
}

/// Hold out a seeded share of `trials` for validation.
pub fn carve_validation(trials: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx = trials.to_vec();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = round_half_up(fraction * idx.len() as f64).min(idx.len());
    let val = sorted(idx[..n_val].to_vec());
    let train = sorted(idx[n_val..].to_vec());
    (train, val)
}

/// The split used by fold `fold` of cross-validation.
pub fn cv_fold_split(folds: &[Vec<usize>], fold: usize, spec: &SplitSpec) -> TrialSplit {
    let rest: Vec<usize> = folds
        .iter()
        .enumerate()
        .filter(|(f, _)| *f != fold)
        .flat_map(|(_, v)| v.iter().copied())
        .collect();
    let (train, val) = carve_validation(
        &sorted(rest),
        spec.cv_validation_fraction,
        spec.seed.wrapping_add(1 + fold as u64),
    );
    TrialSplit {
        train,
        val,
        test: folds[fold].clone(),
    }
}
