//! Report emission in the column order Precision, Recall, F1-score,
//! Accuracy, MCC, AUROC, Kappa, as a tab-separated table and as JSON.

use serde::{Deserialize, Serialize};

use crate::metrics::{Confusion, MetricSet};

pub const COLUMNS: [&str; 7] = [
    "Precision",
    "Recall",
    "F1-score",
    "Accuracy",
    "MCC",
    "AUROC",
    "Kappa",
];

/// Which value fills the AUROC column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AurocMode {
    /// Area under the ROC curve over all thresholds.
    #[default]
    Sweep,
    /// Mean of sensitivity and specificity at the decision threshold.
    PaperParity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    #[serde(rename = "Precision")]
    pub precision: f64,
    #[serde(rename = "Recall")]
    pub recall: f64,
    #[serde(rename = "F1-score")]
    pub f1: f64,
    #[serde(rename = "Accuracy")]
    pub accuracy: f64,
    #[serde(rename = "MCC")]
    pub mcc: f64,
    #[serde(rename = "AUROC")]
    pub auroc: Option<f64>,
    #[serde(rename = "Kappa")]
    pub kappa: f64,
    pub auroc_sweep: Option<f64>,
    pub balanced_rate_paper: Option<f64>,
    pub confusion: Confusion,
    pub degenerate_flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub title: String,
    pub auroc_mode: AurocMode,
    pub columns: Vec<String>,
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn new(title: impl Into<String>, auroc_mode: AurocMode) -> Self {
        Self {
            title: title.into(),
            auroc_mode,
            columns: COLUMNS.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, label: impl Into<String>, m: &MetricSet) {
        let auroc = match self.auroc_mode {
            AurocMode::Sweep => m.auroc_sweep,
            AurocMode::PaperParity => m.balanced_rate_paper,
        };
        self.rows.push(ReportRow {
            label: label.into(),
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            accuracy: m.accuracy,
            mcc: m.mcc,
            auroc,
            kappa: m.kappa,
            auroc_sweep: m.auroc_sweep,
            balanced_rate_paper: m.balanced_rate_paper,
            confusion: m.confusion,
            degenerate_flags: m.degenerate_flags.iter().cloned().collect(),
        });
    }

    /// Tab-separated table: a `run` column, the seven metric columns and the
    /// degenerate flags. Values use six decimals; undefined values are `NA`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        out.push_str("run\t");
        out.push_str(&COLUMNS.join("\t"));
        out.push_str("\tflags\n");
        let fmt = |v: f64| format!("{v:.6}");
        for r in &self.rows {
            let cells = [
                fmt(r.precision),
                fmt(r.recall),
                fmt(r.f1),
                fmt(r.accuracy),
                fmt(r.mcc),
                r.auroc.map_or_else(|| "NA".to_string(), fmt),
                fmt(r.kappa),
            ];
            let flags = if r.degenerate_flags.is_empty() {
                "-".to_string()
            } else {
                r.degenerate_flags.join(",")
            };
            out.push_str(&format!("{}\t{}\t{flags}\n", r.label, cells.join("\t")));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::metric_set;

    #[test]
    fn column_order() {
        let m = metric_set(&[0.9, 0.2, 0.6, 0.4], &[1, 0, 0, 1], 0.5).unwrap();
        let mut r = Report::new("t", AurocMode::Sweep);
        r.push("fold1", &m);
        let tsv = r.to_tsv();
        let header = tsv.lines().next().unwrap();
        assert_eq!(
            header,
            "run\tPrecision\tRecall\tF1-score\tAccuracy\tMCC\tAUROC\tKappa\tflags"
        );
        let json = r.to_json();
        let pos: Vec<usize> = COLUMNS
            .iter()
            .map(|c| json.find(&format!("\"{c}\"")).unwrap())
            .collect();
        // The header list comes first; row keys then follow in order.
        let row_start = json.find("\"label\"").unwrap();
        let row_pos: Vec<usize> = COLUMNS
            .iter()
            .map(|c| row_start + json[row_start..].find(&format!("\"{c}\"")).unwrap())
            .collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert!(row_pos.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn paper_parity_switches_auroc_column() {
        let m = metric_set(&[0.9, 0.2, 0.6, 0.4], &[1, 0, 0, 1], 0.5).unwrap();
        let mut sweep = Report::new("t", AurocMode::Sweep);
        sweep.push("a", &m);
        let mut parity = Report::new("t", AurocMode::PaperParity);
        parity.push("a", &m);
        assert_eq!(sweep.rows[0].auroc, m.auroc_sweep);
        assert_eq!(parity.rows[0].auroc, m.balanced_rate_paper);
    }
}
