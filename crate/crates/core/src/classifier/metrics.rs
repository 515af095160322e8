use serde::{Deserialize, Serialize};

use super::model::MlpModel;
use super::train::Dataset;
use crate::state::{AttentionState, NUM_STATES};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub per_class: [ClassMetrics; NUM_STATES],
    /// `confusion[true][predicted]`.
    pub confusion: [[usize; NUM_STATES]; NUM_STATES],
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error(transparent)]
    Contract(#[from] super::model::ModelContractError),
}

/// Metrics from paired true/predicted class indices. Precision or recall
/// with an empty denominator is reported as 0.
pub fn metrics_from_predictions(truth: &[usize], pred: &[usize]) -> Result<Metrics, EvalError> {
    if truth.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let mut confusion = [[0usize; NUM_STATES]; NUM_STATES];
    for (&t, &p) in truth.iter().zip(pred) {
        confusion[t][p] += 1;
    }
    let correct: usize = (0..NUM_STATES).map(|c| confusion[c][c]).sum();
    let mut per_class = [ClassMetrics::default(); NUM_STATES];
    for (c, m) in per_class.iter_mut().enumerate() {
        let tp = confusion[c][c] as f64;
        let predicted: usize = (0..NUM_STATES).map(|t| confusion[t][c]).sum();
        let support: usize = confusion[c].iter().sum();
        let ratio = |a: f64, b: usize| if b == 0 { 0.0 } else { a / b as f64 };
        m.precision = ratio(tp, predicted);
        m.recall = ratio(tp, support);
        m.f1 = if m.precision + m.recall > 0.0 {
            2.0 * m.precision * m.recall / (m.precision + m.recall)
        } else {
            0.0
        };
        m.support = support;
    }
    Ok(Metrics {
        accuracy: correct as f64 / truth.len() as f64,
        per_class,
        confusion,
        n: truth.len(),
    })
}

pub fn evaluate(model: &MlpModel, data: &Dataset) -> Result<Metrics, EvalError> {
    if data.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let pred = data
        .x
        .iter()
        .map(|x| model.predict(x))
        .collect::<Result<Vec<_>, _>>()?;
    metrics_from_predictions(&data.y, &pred)
}

impl Metrics {
    /// Plain-text table of per-class scores and the confusion matrix.
    pub fn table(&self) -> String {
        let mut s = format!("accuracy {:.4} (n = {})\n", self.accuracy, self.n);
        s.push_str(&format!(
            "{:<20} {:>9} {:>9} {:>9} {:>8}\n",
            "state", "precision", "recall", "f1", "support"
        ));
        for (state, m) in AttentionState::ALL.iter().zip(&self.per_class) {
            s.push_str(&format!(
                "{:<20} {:>9.4} {:>9.4} {:>9.4} {:>8}\n",
                state.name(),
                m.precision,
                m.recall,
                m.f1,
                m.support
            ));
        }
        s.push_str("confusion (rows = true, cols = predicted)\n");
        for row in &self.confusion {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:>6}")).collect();
            s.push_str(&cells.join(""));
            s.push('\n');
        }
        s
    }
}
