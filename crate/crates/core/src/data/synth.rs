//! Seeded synthetic EEG with class-conditioned carriers.
//!
//! Every trial draws one binary label per target. The stimulus is white
//! Gaussian noise plus, for each class rule, a sinusoid whose frequency and
//! amplitude depend on that target's label, added on the rule's channels.
//! The baseline is noise only. Scores are emitted as 1 (label 0) or 5 (label 1).

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::dataset::{Dataset, Signal, Target, Trial};
use crate::data::layout::ChannelLayout;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Carrier {
    pub frequency_hz: f64,
    /// Sinusoid amplitude as a multiple of `noise_std`.
    pub amplitude: f64,
    pub channels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassRule {
    pub target: Target,
    pub negative: Carrier,
    pub positive: Carrier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub n_trials_per_subject: usize,
    pub n_channels: usize,
    pub fs: f64,
    pub duration_s: f64,
    pub baseline_s: f64,
    pub class_rules: Vec<ClassRule>,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    /// 4 subjects x 18 clips of 8 s, 14 channels at 128 Hz, carriers at 3x the
    /// noise level.
    fn default() -> Self {
        let rule = |target, f0, f1, channels: &[usize]| ClassRule {
            target,
            negative: Carrier {
                frequency_hz: f0,
                amplitude: 3.0,
                channels: channels.to_vec(),
            },
            positive: Carrier {
                frequency_hz: f1,
                amplitude: 3.0,
                channels: channels.to_vec(),
            },
        };
        Self {
            n_subjects: 4,
            n_trials_per_subject: 18,
            n_channels: 14,
            fs: 128.0,
            duration_s: 8.0,
            baseline_s: 4.0,
            class_rules: vec![
                rule(Target::Valence, 6.0, 20.0, &[0, 1, 2, 11, 12, 13]),
                rule(Target::Arousal, 10.0, 28.0, &[3, 4, 9, 10]),
                rule(Target::Dominance, 8.0, 16.0, &[5, 6, 7, 8]),
            ],
            noise_std: 1.0,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn stimulus_samples(&self) -> usize {
        (self.duration_s * self.fs).round() as usize
    }

    pub fn baseline_samples(&self) -> usize {
        (self.baseline_s * self.fs).round() as usize
    }

    /// Scale every carrier amplitude to `multiplier`.
    pub fn with_amplitude(mut self, multiplier: f64) -> Self {
        for r in &mut self.class_rules {
            r.negative.amplitude = multiplier;
            r.positive.amplitude = multiplier;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return bad(format!("fs must be positive, got {}", self.fs));
        }
        if self.stimulus_samples() == 0 || self.baseline_samples() == 0 {
            return bad("stimulus and baseline durations must cover at least one sample".into());
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad(format!("noise_std must be non-negative, got {}", self.noise_std));
        }
        for r in &self.class_rules {
            for c in [&r.negative, &r.positive] {
                if !(c.frequency_hz >= 0.0 && c.frequency_hz < self.fs / 2.0) {
                    return bad(format!(
                        "{} carrier {} Hz must lie in [0, fs/2 = {})",
                        r.target,
                        c.frequency_hz,
                        self.fs / 2.0
                    ));
                }
                if let Some(&ch) = c.channels.iter().find(|&&ch| ch >= self.n_channels) {
                    return bad(format!(
                        "{} carrier channel {ch} out of range for {} channels",
                        r.target, self.n_channels
                    ));
                }
            }
        }
        Ok(())
    }
}

fn noise(rng: &mut ChaCha8Rng, std: f64, channels: usize, samples: usize) -> Vec<f64> {
    (0..channels * samples)
        .map(|_| std * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn to_signal(channels: usize, samples: usize, v: Vec<f64>) -> Signal {
    Signal::new(channels, samples, v.into_iter().map(|x| x as f32).collect())
        .expect("sizes agree by construction")
}

/// Deterministic in `cfg` (including the seed).
pub fn synth_generate(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let layout = ChannelLayout::synthetic(cfg.n_channels)?;
    let c = cfg.n_channels;
    let n_stim = cfg.stimulus_samples();
    let n_base = cfg.baseline_samples();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut trials = Vec::with_capacity(cfg.n_subjects * cfg.n_trials_per_subject);
    for s in 0..cfg.n_subjects {
        for j in 0..cfg.n_trials_per_subject {
            let labels: Vec<bool> = Target::ALL.iter().map(|_| rng.random_bool(0.5)).collect();
            let label_of = |t: Target| labels[Target::ALL.iter().position(|&x| x == t).unwrap()];

            let baseline = noise(&mut rng, cfg.noise_std, c, n_base);
            let mut stimulus = noise(&mut rng, cfg.noise_std, c, n_stim);
            for rule in &cfg.class_rules {
                let carrier = if label_of(rule.target) {
                    &rule.positive
                } else {
                    &rule.negative
                };
                let amp = carrier.amplitude * cfg.noise_std;
                let omega = 2.0 * PI * carrier.frequency_hz / cfg.fs;
                for &ch in &carrier.channels {
                    let phase = rng.random::<f64>() * 2.0 * PI;
                    let row = &mut stimulus[ch * n_stim..(ch + 1) * n_stim];
                    for (t, v) in row.iter_mut().enumerate() {
                        *v += amp * (omega * t as f64 + phase).sin();
                    }
                }
            }
            let score = |t| if label_of(t) { 5 } else { 1 };
            trials.push(Trial {
                subject_id: format!("S{:02}", s + 1),
                clip_id: j as u32 + 1,
                baseline: to_signal(c, n_base, baseline),
                stimulus: to_signal(c, n_stim, stimulus),
                fs: cfg.fs,
                valence: score(Target::Valence),
                arousal: score(Target::Arousal),
                dominance: score(Target::Dominance),
            });
        }
    }
    Dataset::new(layout, trials, cfg.fs)
}
