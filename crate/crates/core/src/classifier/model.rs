use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::train::TrainConfig;
use crate::state::{AttentionState, NUM_STATES};
use crate::stream::Micros;

/// Normalized inputs are clamped to this many standard deviations.
pub const Z_CLAMP: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelContractError {
    #[error("feature vector has {got} dimensions, model expects {expected}")]
    Dimension { got: usize, expected: usize },
    #[error("feature order mismatch: model was trained on [{model}], got [{given}]")]
    FeatureOrder { model: String, given: String },
}

/// Per-feature z-score statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Features whose training spread was zero; their std is stored as 1.
    pub degenerate: Vec<bool>,
}

impl NormStats {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
            degenerate: vec![false; dim],
        }
    }

    pub fn fit(rows: &[&[f64]], dim: usize) -> Self {
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
                *s += (v - m).powi(2);
            }
        }
        let mut degenerate = vec![false; dim];
        let std = var
            .iter()
            .zip(degenerate.iter_mut())
            .map(|(s, d)| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 && sd.is_finite() {
                    sd
                } else {
                    *d = true;
                    1.0
                }
            })
            .collect();
        Self {
            mean,
            std,
            degenerate,
        }
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for (((o, v), m), s) in out.iter_mut().zip(x).zip(&self.mean).zip(&self.std) {
            *o = ((v - m) / s).clamp(-Z_CLAMP, Z_CLAMP);
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.apply_into(x, &mut out);
        out
    }
}

/// One-hidden-layer perceptron: z-score → affine → ReLU → affine → softmax.
///
/// Weight layout: `w1[i * hidden + h]` maps input `i` to hidden unit `h`;
/// `w2[h * NUM_STATES + c]` maps hidden unit `h` to class `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub input_dim: usize,
    pub hidden: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub norm: NormStats,
    pub feature_names: Vec<String>,
    pub config: TrainConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub state: AttentionState,
    pub probs: [f64; NUM_STATES],
    pub window_end_us: Micros,
    /// Wall-clock inference time; not part of replay comparisons.
    pub latency_us: u64,
}

impl Classification {
    /// Same decision and distribution, ignoring timing.
    pub fn same_decision(&self, other: &Self) -> bool {
        self.state == other.state
            && self.window_end_us == other.window_end_us
            && self
                .probs
                .iter()
                .zip(&other.probs)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64; NUM_STATES]) -> [f64; NUM_STATES] {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; NUM_STATES];
    let mut sum = 0.0;
    for (o, l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        sum += *o;
    }
    for o in &mut out {
        *o /= sum;
    }
    out
}

/// Index of the largest probability; ties go to the lowest index.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

impl MlpModel {
    /// All-zero weights, identity normalization.
    pub fn zeros(input_dim: usize, hidden: usize, feature_names: Vec<String>) -> Self {
        Self {
            input_dim,
            hidden,
            w1: vec![0.0; input_dim * hidden],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden * NUM_STATES],
            b2: vec![0.0; NUM_STATES],
            norm: NormStats::identity(input_dim),
            feature_names,
            config: TrainConfig::default(),
            seed: 0,
        }
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// Logits for an already normalized input. `hidden_out` receives the
    /// post-activation hidden layer.
    pub(crate) fn logits_normalized(&self, z: &[f64], hidden_out: &mut [f64]) -> [f64; NUM_STATES] {
        let h = self.hidden;
        hidden_out.copy_from_slice(&self.b1);
        for (i, zi) in z.iter().enumerate() {
            let row = &self.w1[i * h..(i + 1) * h];
            for (a, w) in hidden_out.iter_mut().zip(row) {
                *a += zi * w;
            }
        }
        for a in hidden_out.iter_mut() {
            *a = a.max(0.0);
        }
        let mut logits = [0.0; NUM_STATES];
        logits.copy_from_slice(&self.b2);
        for (j, a) in hidden_out.iter().enumerate() {
            let row = &self.w2[j * NUM_STATES..(j + 1) * NUM_STATES];
            for (l, w) in logits.iter_mut().zip(row) {
                *l += a * w;
            }
        }
        logits
    }

    pub fn probs(&self, x: &[f64]) -> Result<[f64; NUM_STATES], ModelContractError> {
        if x.len() != self.input_dim {
            return Err(ModelContractError::Dimension {
                got: x.len(),
                expected: self.input_dim,
            });
        }
        let z = self.norm.apply(x);
        let mut hidden = vec![0.0; self.hidden];
        Ok(softmax(&self.logits_normalized(&z, &mut hidden)))
    }

    pub fn forward(&self, x: &[f64], window_end_us: Micros) -> Result<Classification, ModelContractError> {
        let t0 = Instant::now();
        let probs = self.probs(x)?;
        Ok(Classification {
            state: AttentionState::from_index(argmax(&probs)).expect("five classes"),
            probs,
            window_end_us,
            latency_us: t0.elapsed().as_micros() as u64,
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize, ModelContractError> {
        self.probs(x).map(|p| argmax(&p))
    }

    /// Confirms that `names` matches the stored feature order.
    pub fn check_features(&self, names: &[&str]) -> Result<(), ModelContractError> {
        if names.len() != self.input_dim || names.iter().zip(&self.feature_names).any(|(a, b)| a != b) {
            return Err(ModelContractError::FeatureOrder {
                model: self.feature_names.join(","),
                given: names.join(","),
            });
        }
        Ok(())
    }
}
