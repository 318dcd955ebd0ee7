use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::bases::BasisKind;

/// Confusion counts with rows = observed (expert) category and columns =
/// predicted category, in label order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementTable {
    pub labels: Vec<i64>,
    pub confusion: Vec<Vec<usize>>,
    pub total: usize,
    /// `100 · trace / total` (0 for an empty table).
    pub agreement: f64,
}

impl AgreementTable {
    pub fn from_confusion(labels: Vec<i64>, confusion: Vec<Vec<usize>>) -> Self {
        let total: usize = confusion.iter().flatten().sum();
        let trace: usize = (0..confusion.len()).map(|i| confusion[i][i]).sum();
        let agreement = if total == 0 {
            0.0
        } else {
            100.0 * trace as f64 / total as f64
        };
        Self {
            labels,
            confusion,
            total,
            agreement,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{:>10} |", "obs\\pred");
        for l in &self.labels {
            let _ = write!(s, " {l:>6}");
        }
        s.push('\n');
        for (l, row) in self.labels.iter().zip(&self.confusion) {
            let _ = write!(s, "{l:>10} |");
            for c in row {
                let _ = write!(s, " {c:>6}");
            }
            s.push('\n');
        }
        let _ = writeln!(s, "agreement {:.2}% of {}", self.agreement, self.total);
        s
    }
}

pub fn agreement_table(
    predicted: &[i64],
    truth: &[i64],
    labels: &[i64],
) -> Result<AgreementTable, PipelineError> {
    if predicted.len() != truth.len() {
        return Err(PipelineError::Data(format!(
            "{} predictions for {} observations",
            predicted.len(),
            truth.len()
        )));
    }
    let index = |l: i64| {
        labels
            .iter()
            .position(|&x| x == l)
            .ok_or_else(|| PipelineError::Data(format!("label {l} is not one of {labels:?}")))
    };
    let j = labels.len();
    let mut confusion = vec![vec![0usize; j]; j];
    for (&p, &t) in predicted.iter().zip(truth) {
        confusion[index(t)?][index(p)?] += 1;
    }
    Ok(AgreementTable::from_confusion(labels.to_vec(), confusion))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub subject: String,
    pub lambda: Option<f64>,
    pub r: Option<usize>,
    /// Held-out rows of this subject.
    pub rows: usize,
    /// Reason the fold was skipped, when it was.
    pub skipped: Option<String>,
    /// Basis bit-identical under perturbation of the held-out current
    /// (`None` when the check was disabled or the fold was skipped).
    pub leakage_ok: Option<bool>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub subject: String,
    pub covariates: Vec<f64>,
    pub truth: i64,
    pub predicted: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CVReport {
    pub kind: BasisKind,
    pub table: AgreementTable,
    pub dataset_rows: usize,
    pub skipped_rows: usize,
    pub folds: Vec<FoldRecord>,
    pub predictions: Vec<PredictionRecord>,
    pub config: serde_json::Value,
}

impl CVReport {
    pub fn agreement(&self) -> f64 {
        self.table.agreement
    }

    pub fn leakage_ok(&self) -> bool {
        self.folds.iter().all(|f| f.leakage_ok != Some(false))
    }

    /// Deterministic machine-readable form (no timings or host details).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text)
            .map_err(|e| PipelineError::Data(format!("invalid CV report: {e}")))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "basis: {}", self.kind);
        s.push_str(&self.table.to_text());
        let skipped: Vec<&FoldRecord> = self.folds.iter().filter(|f| f.skipped.is_some()).collect();
        let _ = writeln!(
            s,
            "rows: {} in dataset, {} skipped, {} predicted",
            self.dataset_rows, self.skipped_rows, self.table.total
        );
        for f in skipped {
            let _ = writeln!(
                s,
                "  skipped fold {}: {}",
                f.subject,
                f.skipped.as_deref().unwrap_or("")
            );
        }
        let _ = writeln!(
            s,
            "leakage check: {}",
            if self.leakage_ok() { "ok" } else { "FAILED" }
        );
        s
    }
}
