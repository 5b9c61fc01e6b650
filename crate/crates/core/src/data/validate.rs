use serde::Serialize;

use crate::data::dataset::{Dataset, Signal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Issue {
    pub severity: Severity,
    pub trial: usize,
    pub subject_id: String,
    pub clip_id: u32,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Warning)
    }
}

fn scan_signal(name: &str, sig: &Signal, mut push: impl FnMut(Severity, String)) {
    for c in 0..sig.channels() {
        let ch = sig.channel(c);
        if let Some(offset) = ch.iter().position(|v| !v.is_finite()) {
            let bad = ch.iter().filter(|v| !v.is_finite()).count();
            push(
                Severity::Error,
                format!(
                    "{name} channel {c} offset {offset}: non-finite sample ({} total in channel)",
                    bad
                ),
            );
            continue;
        }
        if let Some(first) = ch.first() {
            if ch.iter().all(|v| v == first) {
                push(Severity::Warning, format!("{name} channel {c}: zero variance"));
            }
        }
    }
}

/// Report non-finite samples, flat channels and out-of-range scores.
/// Flat channels are warnings; the report is valid iff there are no errors.
pub fn validate_dataset(d: &Dataset) -> ValidationReport {
    let mut issues = Vec::new();
    for (i, t) in d.trials.iter().enumerate() {
        let mut push = |severity, message| {
            issues.push(Issue {
                severity,
                trial: i,
                subject_id: t.subject_id.clone(),
                clip_id: t.clip_id,
                message,
            })
        };
        for (field, v) in [
            ("valence", t.valence),
            ("arousal", t.arousal),
            ("dominance", t.dominance),
        ] {
            if !(1..=5).contains(&v) {
                push(Severity::Error, format!("{field} score {v} outside 1..5"));
            }
        }
        scan_signal("baseline", &t.baseline, &mut push);
        scan_signal("stimulus", &t.stimulus, &mut push);
    }
    let valid = !issues.iter().any(|i| i.severity == Severity::Error);
    ValidationReport { valid, issues }
}
