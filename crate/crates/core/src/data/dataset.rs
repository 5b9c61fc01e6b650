use crate::data::layout::ChannelLayout;
use crate::error::{Error, Result};

/// A multichannel recording stored channel-major: all samples of channel 0,
/// then channel 1, and so on. Values are microvolts.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    channels: usize,
    samples: usize,
    data: Vec<f32>,
}

impl Signal {
    pub fn new(channels: usize, samples: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * samples {
            return Err(Error::Shape(format!(
                "signal of {channels}x{samples} needs {} values, got {}",
                channels * samples,
                data.len()
            )));
        }
        Ok(Self {
            channels,
            samples,
            data,
        })
    }

    pub fn zeros(channels: usize, samples: usize) -> Self {
        Self {
            channels,
            samples,
            data: vec![0.0; channels * samples],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        &self.data[c * self.samples..(c + 1) * self.samples]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        &mut self.data[c * self.samples..(c + 1) * self.samples]
    }

    /// Bit-level equality, so that NaN payloads compare equal to themselves.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.channels == other.channels
            && self.samples == other.samples
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// The three affect dimensions rated by each subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Valence,
    Arousal,
    Dominance,
}

impl Target {
    pub const ALL: [Target; 3] = [Target::Valence, Target::Arousal, Target::Dominance];

    pub fn name(self) -> &'static str {
        match self {
            Target::Valence => "valence",
            Target::Arousal => "arousal",
            Target::Dominance => "dominance",
        }
    }
}

impl std::fmt::Display for Target {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "valence" => Ok(Target::Valence),
            "arousal" => Ok(Target::Arousal),
            "dominance" => Ok(Target::Dominance),
            other => Err(Error::InvalidConfig(format!("unknown target {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub subject_id: String,
    pub clip_id: u32,
    pub baseline: Signal,
    pub stimulus: Signal,
    pub fs: f64,
    pub valence: u8,
    pub arousal: u8,
    pub dominance: u8,
}

impl Trial {
    pub fn score(&self, target: Target) -> u8 {
        match target {
            Target::Valence => self.valence,
            Target::Arousal => self.arousal,
            Target::Dominance => self.dominance,
        }
    }

    pub fn bit_eq(&self, other: &Self) -> bool {
        self.subject_id == other.subject_id
            && self.clip_id == other.clip_id
            && self.fs.to_bits() == other.fs.to_bits()
            && self.valence == other.valence
            && self.arousal == other.arousal
            && self.dominance == other.dominance
            && self.baseline.bit_eq(&other.baseline)
            && self.stimulus.bit_eq(&other.stimulus)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub layout: ChannelLayout,
    pub trials: Vec<Trial>,
    pub fs: f64,
}

impl Dataset {
    /// Checks the structural invariants: positive rate, and every trial
    /// sharing the dataset's rate and channel count.
    pub fn new(layout: ChannelLayout, trials: Vec<Trial>, fs: f64) -> Result<Self> {
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(Error::InvalidDataset(format!("sampling rate {fs} must be positive")));
        }
        for t in &trials {
            if t.fs != fs {
                return Err(Error::InvalidDataset(format!(
                    "trial {}/{} has fs {} but dataset fs is {fs}",
                    t.subject_id, t.clip_id, t.fs
                )));
            }
            for (name, sig) in [("baseline", &t.baseline), ("stimulus", &t.stimulus)] {
                if sig.channels() != layout.len() {
                    return Err(Error::InvalidDataset(format!(
                        "trial {}/{} {name} has {} channels, layout has {}",
                        t.subject_id,
                        t.clip_id,
                        sig.channels(),
                        layout.len()
                    )));
                }
            }
        }
        Ok(Self { layout, trials, fs })
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.layout.len()
    }

    pub fn bit_eq(&self, other: &Self) -> bool {
        self.layout == other.layout
            && self.fs.to_bits() == other.fs.to_bits()
            && self.trials.len() == other.trials.len()
            && self.trials.iter().zip(&other.trials).all(|(a, b)| a.bit_eq(b))
    }
}
