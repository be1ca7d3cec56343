use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Prediction;
use crate::labeling::{LabeledRecord, Scheme};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("missing predictions for {} task(s): {}", .0.len(), .0.join(", "))]
    MissingPredictions(Vec<String>),
    #[error("duplicate prediction for task {0:?}")]
    DuplicatePrediction(String),
    #[error("test set is empty")]
    Empty,
    #[error("task {task_id:?}: level {level} outside scheme {scheme}")]
    LevelOutOfRange { task_id: String, level: u8, scheme: Scheme },
}

/// Counts indexed `[true level][predicted level]`, offset by the scheme's
/// lowest level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub scheme: Scheme,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(scheme: Scheme) -> Self {
        let n = scheme.level_count();
        ConfusionMatrix {
            scheme,
            counts: vec![vec![0; n]; n],
        }
    }

    fn index(&self, level: u8) -> usize {
        (level - self.scheme.min_level()) as usize
    }

    pub fn record(&mut self, truth: u8, predicted: u8) {
        let (t, p) = (self.index(truth), self.index(predicted));
        self.counts[t][p] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.correct(), self.total())
    }

    pub fn offdiag_rate(&self) -> f64 {
        ratio(self.total() - self.correct(), self.total())
    }

    /// Share of tasks predicted below their true level, i.e. routed to a tier
    /// that is expected to be too weak.
    pub fn type_ii_rate(&self) -> f64 {
        let under: u64 = self
            .counts
            .iter()
            .enumerate()
            .map(|(t, row)| row[..t].iter().sum::<u64>())
            .sum();
        ratio(under, self.total())
    }

    /// Share predicted above the true level (over-provisioned).
    pub fn over_rate(&self) -> f64 {
        self.offdiag_rate() - self.type_ii_rate()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn per_level_recall(&self) -> Vec<Option<f64>> {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let n: u64 = row.iter().sum();
                (n > 0).then(|| ratio(row[i], n))
            })
            .collect()
    }

    pub fn per_level_precision(&self) -> Vec<Option<f64>> {
        (0..self.counts.len())
            .map(|j| {
                let n: u64 = self.counts.iter().map(|r| r[j]).sum();
                (n > 0).then(|| ratio(self.counts[j][j], n))
            })
            .collect()
    }

    pub fn report(&self) -> EvalReport {
        EvalReport {
            scheme: self.scheme,
            levels: self.scheme.levels().collect(),
            matrix: self.counts.clone(),
            accuracy: self.accuracy(),
            per_level_recall: self.per_level_recall(),
            per_level_precision: self.per_level_precision(),
            type_ii_rate: self.type_ii_rate(),
            n: self.total(),
        }
    }

    /// Plain-text table with truth levels as rows.
    pub fn render_table(&self) -> String {
        let levels: Vec<u8> = self.scheme.levels().collect();
        let mut out = String::from("truth\\pred");
        for l in &levels {
            out.push_str(&format!("{l:>6}"));
        }
        out.push_str("  recall\n");
        let recall = self.per_level_recall();
        for (i, l) in levels.iter().enumerate() {
            out.push_str(&format!("{l:>10}"));
            for c in &self.counts[i] {
                out.push_str(&format!("{c:>6}"));
            }
            match recall[i] {
                Some(r) => out.push_str(&format!("  {r:.3}\n")),
                None => out.push_str("      -\n"),
            }
        }
        out.push_str(&format!(
            "n = {}  accuracy = {:.4}  type II rate = {:.4}\n",
            self.total(),
            self.accuracy(),
            self.type_ii_rate()
        ));
        out
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scheme: Scheme,
    pub levels: Vec<u8>,
    pub matrix: Vec<Vec<u64>>,
    pub accuracy: f64,
    pub per_level_recall: Vec<Option<f64>>,
    pub per_level_precision: Vec<Option<f64>>,
    pub type_ii_rate: f64,
    pub n: u64,
}

/// Scores predictions against labeled truth. Every truth task needs exactly
/// one prediction; predictions for tasks outside the test set are ignored.
pub fn evaluate(
    truth: &[LabeledRecord],
    predictions: &[Prediction],
    scheme: Scheme,
) -> Result<ConfusionMatrix, EvalError> {
    if truth.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut by_task: HashMap<&str, u8> = HashMap::with_capacity(predictions.len());
    for p in predictions {
        if by_task.insert(p.task_id.as_str(), p.predicted_level).is_some() {
            return Err(EvalError::DuplicatePrediction(p.task_id.clone()));
        }
    }
    let missing: Vec<String> = truth
        .iter()
        .filter(|r| !by_task.contains_key(r.task_id.as_str()))
        .map(|r| r.task_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(EvalError::MissingPredictions(missing));
    }
    let mut matrix = ConfusionMatrix::new(scheme);
    for r in truth {
        let predicted = by_task[r.task_id.as_str()];
        for (task_id, level) in [(&r.task_id, r.level), (&r.task_id, predicted)] {
            if !scheme.contains(level) {
                return Err(EvalError::LevelOutOfRange {
                    task_id: task_id.clone(),
                    level,
                    scheme,
                });
            }
        }
        matrix.record(r.level, predicted);
    }
    Ok(matrix)
}
