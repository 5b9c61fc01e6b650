//! The `emoscale-v1` on-disk interchange format.
//!
//! A dataset is a directory holding `manifest.json` plus one raw binary file
//! per signal. Signal files are headerless little-endian binary32, laid out
//! channel-major. Paths in the manifest are relative to the manifest.
//!
//! The optional `*_sha256` trial fields are written by [`write_dataset`] and
//! verified on load when present; producers that omit them still load.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::dataset::{Dataset, Signal, Trial};
use crate::data::layout::ChannelLayout;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: &str = "emoscale-v1";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: String,
    pub fs: f64,
    pub channel_names: Vec<String>,
    pub trials: Vec<TrialEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialEntry {
    pub subject_id: String,
    pub clip_id: u32,
    pub baseline_file: String,
    pub stimulus_file: String,
    pub baseline_samples: usize,
    pub stimulus_samples: usize,
    pub valence: i64,
    pub arousal: i64,
    pub dominance: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stimulus_sha256: Option<String>,
}

pub fn encode_f32_le(values: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_f32_le(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn check_score(entry: &TrialEntry, field: &'static str, value: i64) -> Result<u8> {
    if (1..=5).contains(&value) {
        Ok(value as u8)
    } else {
        Err(Error::ScoreOutOfRange {
            subject: entry.subject_id.clone(),
            clip: entry.clip_id,
            field,
            value,
        })
    }
}

fn read_signal(
    root: &Path,
    entry: &TrialEntry,
    signal: &'static str,
    channels: usize,
) -> Result<Signal> {
    let (file, samples, digest) = match signal {
        "baseline" => (
            &entry.baseline_file,
            entry.baseline_samples,
            &entry.baseline_sha256,
        ),
        _ => (
            &entry.stimulus_file,
            entry.stimulus_samples,
            &entry.stimulus_sha256,
        ),
    };
    let path = root.join(file);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let expected = channels * samples * 4;
    if bytes.len() != expected {
        return Err(Error::LengthMismatch {
            subject: entry.subject_id.clone(),
            clip: entry.clip_id,
            signal,
            expected,
            actual: bytes.len(),
        });
    }
    if let Some(d) = digest {
        if !sha256_hex(&bytes).eq_ignore_ascii_case(d) {
            return Err(Error::Checksum {
                subject: entry.subject_id.clone(),
                clip: entry.clip_id,
                signal,
            });
        }
    }
    Signal::new(channels, samples, decode_f32_le(&bytes))
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::UnknownFormatVersion {
            expected: FORMAT_VERSION.into(),
            found: manifest.format_version,
        });
    }
    Ok(manifest)
}

/// Load a dataset from a manifest path, or from a directory containing
/// `manifest.json`.
pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<Dataset> {
    let mut path = manifest_path.as_ref().to_path_buf();
    if path.is_dir() {
        path = path.join(MANIFEST_FILE);
    }
    let manifest = read_manifest(&path)?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let layout = ChannelLayout::new(&manifest.channel_names)?;
    let channels = layout.len();

    let mut trials = Vec::with_capacity(manifest.trials.len());
    for entry in &manifest.trials {
        let valence = check_score(entry, "valence", entry.valence)?;
        let arousal = check_score(entry, "arousal", entry.arousal)?;
        let dominance = check_score(entry, "dominance", entry.dominance)?;
        let baseline = read_signal(&root, entry, "baseline", channels)?;
        let stimulus = read_signal(&root, entry, "stimulus", channels)?;
        trials.push(Trial {
            subject_id: entry.subject_id.clone(),
            clip_id: entry.clip_id,
            baseline,
            stimulus,
            fs: manifest.fs,
            valence,
            arousal,
            dominance,
        });
    }
    Dataset::new(layout, trials, manifest.fs)
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Write `d` under `dir` and return the manifest path.
pub fn write_dataset(d: &Dataset, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let signals = dir.join("signals");
    fs::create_dir_all(&signals).map_err(|e| Error::io(&signals, e))?;

    let mut entries = Vec::with_capacity(d.trials.len());
    for (i, t) in d.trials.iter().enumerate() {
        let stem = format!("{i:05}_{}_{}", sanitize(&t.subject_id), t.clip_id);
        let write = |kind: &str, sig: &Signal| -> Result<(String, String)> {
            let rel = format!("signals/{stem}_{kind}.f32");
            let bytes = encode_f32_le(sig.data());
            let path = dir.join(&rel);
            fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
            Ok((rel, sha256_hex(&bytes)))
        };
        let (baseline_file, baseline_sha) = write("baseline", &t.baseline)?;
        let (stimulus_file, stimulus_sha) = write("stimulus", &t.stimulus)?;
        entries.push(TrialEntry {
            subject_id: t.subject_id.clone(),
            clip_id: t.clip_id,
            baseline_file,
            stimulus_file,
            baseline_samples: t.baseline.samples(),
            stimulus_samples: t.stimulus.samples(),
            valence: t.valence.into(),
            arousal: t.arousal.into(),
            dominance: t.dominance.into(),
            baseline_sha256: Some(baseline_sha),
            stimulus_sha256: Some(stimulus_sha),
        });
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION.into(),
        fs: d.fs,
        channel_names: d.layout.names().to_vec(),
        trials: entries,
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&path, e))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_dataset(n_trials: usize) -> Dataset {
        let layout = ChannelLayout::synthetic(4).unwrap();
        let trials = (0..n_trials)
            .map(|i| Trial {
                subject_id: format!("s{i}"),
                clip_id: i as u32 + 1,
                baseline: Signal::new(4, 3, (0..12).map(|v| v as f32 * 0.5).collect()).unwrap(),
                stimulus: Signal::new(4, 5, (0..20).map(|v| -(v as f32) / 3.0).collect())
                    .unwrap(),
                fs: 32.0,
                valence: 1,
                arousal: 3,
                dominance: 5,
            })
            .collect();
        Dataset::new(layout, trials, 32.0).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut d = tiny_dataset(3);
        d.trials[1].stimulus.data_mut()[2] = f32::from_bits(0x7fc0_1234);
        d.trials[2].baseline.data_mut()[0] = -0.0;
        let m = write_dataset(&d, dir.path()).unwrap();
        let back = load_dataset(&m).unwrap();
        assert!(back.bit_eq(&d));
    }

    #[test]
    fn empty_dataset_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let d = tiny_dataset(0);
        let m = write_dataset(&d, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert!(back.is_empty());
        assert!(back.bit_eq(&d));
        assert!(m.ends_with(MANIFEST_FILE));
    }

    #[test]
    fn truncated_payload_names_the_trial() {
        let dir = tempfile::tempdir().unwrap();
        let d = tiny_dataset(2);
        let m = write_dataset(&d, dir.path()).unwrap();
        let manifest = read_manifest(&m).unwrap();
        let stim = dir.path().join(&manifest.trials[1].stimulus_file);
        let bytes = fs::read(&stim).unwrap();
        fs::write(&stim, &bytes[..bytes.len() - 4]).unwrap();
        match load_dataset(&m) {
            Err(Error::LengthMismatch {
                subject,
                clip,
                signal,
                expected,
                actual,
            }) => {
                assert_eq!((subject.as_str(), clip, signal), ("s1", 2, "stimulus"));
                assert_eq!((expected, actual), (80, 76));
            }
            other => panic!("expected length mismatch, got {other:?}"),
        }
    }

    #[test]
    fn flipped_byte_fails_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let d = tiny_dataset(1);
        let m = write_dataset(&d, dir.path()).unwrap();
        let manifest = read_manifest(&m).unwrap();
        let base = dir.path().join(&manifest.trials[0].baseline_file);
        let mut bytes = fs::read(&base).unwrap();
        bytes[5] ^= 0x01;
        fs::write(&base, &bytes).unwrap();
        assert!(matches!(
            load_dataset(&m),
            Err(Error::Checksum { signal: "baseline", .. })
        ));
    }

    #[test]
    fn rejects_unknown_version_and_bad_scores() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_dataset(&tiny_dataset(1), dir.path()).unwrap();
        let text = fs::read_to_string(&m).unwrap();

        fs::write(&m, text.replace("emoscale-v1", "emoscale-v9")).unwrap();
        assert!(matches!(
            load_dataset(&m),
            Err(Error::UnknownFormatVersion { .. })
        ));

        fs::write(&m, text.replace("\"arousal\": 3", "\"arousal\": 6")).unwrap();
        match load_dataset(&m) {
            Err(Error::ScoreOutOfRange {
                subject,
                field,
                value,
                ..
            }) => assert_eq!((subject.as_str(), field, value), ("s0", "arousal", 6)),
            other => panic!("expected score error, got {other:?}"),
        }
    }

    #[test]
    fn missing_manifest_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_dataset(dir.path().join("nope.json")),
            Err(Error::Io { .. })
        ));
    }
}
