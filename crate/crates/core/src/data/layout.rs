//! Electrode layouts and the anti-clockwise channel ordering used by the
//! hemisphere and quadrant kernels.

use std::collections::HashSet;
use std::ops::Range;

use crate::error::{Error, Result};

/// Native channel order of the Emotiv EPOC headset as distributed in DREAMER.
pub const DREAMER_CHANNELS: [&str; 14] = [
    "AF3", "F7", "F3", "FC5", "T7", "P7", "O1", "O2", "P8", "T8", "FC6", "F4", "F8", "AF4",
];

/// Left-hemisphere 10-10 electrodes, front to back. The right hemisphere is
/// the mirror image traversed back to front, so the full sequence runs
/// nasion -> left -> inion -> right.
const LEFT_ARC: [&str; 26] = [
    "Fp1", "AF7", "AF3", "F7", "F5", "F3", "F1", "FT7", "FC5", "FC3", "FC1", "T7", "C5", "C3",
    "C1", "TP7", "CP5", "CP3", "CP1", "P7", "P5", "P3", "P1", "PO7", "PO3", "O1",
];

/// Mirror a left electrode label onto the right hemisphere (odd digit n -> n + 1).
fn mirror(label: &str) -> String {
    let split = label.find(|c: char| c.is_ascii_digit()).unwrap_or(label.len());
    let (stem, digits) = label.split_at(split);
    let n: u32 = digits.parse().unwrap_or(0);
    format!("{stem}{}", n + 1)
}

/// The full anti-clockwise electrode sequence (52 labels).
pub fn anticlockwise_sequence() -> Vec<String> {
    let mut seq: Vec<String> = LEFT_ARC.iter().map(|s| s.to_string()).collect();
    seq.extend(LEFT_ARC.iter().rev().map(|s| mirror(s)));
    seq
}

fn anticlockwise_rank(label: &str) -> Option<usize> {
    anticlockwise_sequence().iter().position(|s| s == label)
}

/// Whether a 10-10 label sits over the left hemisphere (odd trailing digit).
pub fn is_left_hemisphere(label: &str) -> Option<bool> {
    let digit = label.chars().last()?.to_digit(10)?;
    Some(digit % 2 == 1)
}

/// Half-width of one quadrant after padding each hemisphere to an even row count.
pub fn quadrant_height(channels: usize) -> usize {
    (channels / 2).div_ceil(2)
}

/// Quadrant ranges in unpadded channel indices for an even channel count:
/// front-left, back-left, back-right, front-right.
pub fn quadrant_ranges(channels: usize) -> [Range<usize>; 4] {
    let h = channels / 2;
    let q = quadrant_height(channels);
    [0..q, q..h, h..h + q, h + q..channels]
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelLayout {
    names: Vec<String>,
    hemisphere_split: usize,
    quadrant_boundaries: [Range<usize>; 4],
}

impl ChannelLayout {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let names: Vec<String> = names.iter().map(|s| s.as_ref().to_string()).collect();
        if names.len() < 4 || !names.len().is_multiple_of(2) {
            return Err(Error::InvalidLayout(format!(
                "need an even number of channels >= 4, got {}",
                names.len()
            )));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::InvalidLayout(format!("duplicate electrode {n:?}")));
            }
        }
        let c = names.len();
        Ok(Self {
            names,
            hemisphere_split: c / 2,
            quadrant_boundaries: quadrant_ranges(c),
        })
    }

    pub fn dreamer() -> Self {
        Self::new(&DREAMER_CHANNELS).expect("static layout is valid")
    }

    /// A canonical-order layout of `channels` electrodes drawn from the
    /// anti-clockwise sequence; the 14-channel case is the DREAMER montage.
    pub fn synthetic(channels: usize) -> Result<Self> {
        if channels == 14 {
            return Ok(Self::dreamer());
        }
        if channels < 4 || !channels.is_multiple_of(2) || channels > 2 * LEFT_ARC.len() {
            return Err(Error::InvalidLayout(format!(
                "cannot build a synthetic layout with {channels} channels"
            )));
        }
        let half = channels / 2;
        let mut names: Vec<String> = LEFT_ARC[..half].iter().map(|s| s.to_string()).collect();
        names.extend(LEFT_ARC[..half].iter().rev().map(|s| mirror(s)));
        Self::new(&names)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn hemisphere_split(&self) -> usize {
        self.hemisphere_split
    }

    pub fn quadrant_boundaries(&self) -> &[Range<usize>; 4] {
        &self.quadrant_boundaries
    }

    /// `perm[i]` is the row of the current layout that lands at canonical row `i`.
    pub fn canonical_permutation(&self) -> Result<Vec<usize>> {
        let mut ranked = Vec::with_capacity(self.names.len());
        for (row, name) in self.names.iter().enumerate() {
            let rank =
                anticlockwise_rank(name).ok_or_else(|| Error::UnknownElectrode(name.clone()))?;
            ranked.push((rank, row));
        }
        ranked.sort_unstable();
        Ok(ranked.into_iter().map(|(_, row)| row).collect())
    }

    /// This layout with its names rearranged into anti-clockwise order.
    pub fn canonical(&self) -> Result<Self> {
        let perm = self.canonical_permutation()?;
        let names: Vec<&String> = perm.iter().map(|&i| &self.names[i]).collect();
        Self::new(&names)
    }
}
