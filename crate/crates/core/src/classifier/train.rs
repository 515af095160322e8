use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::metrics::{evaluate, Metrics};
use super::model::{argmax, softmax, MlpModel, NormStats};
use crate::state::NUM_STATES;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            batch_size: 32,
            learning_rate: 1e-3,
            max_epochs: 500,
            patience: 10,
            validation_fraction: 0.2,
            seed: 0,
        }
    }
}

/// Labeled feature rows.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>) -> Self {
        Self {
            feature_names,
            ..Default::default()
        }
    }

    pub fn push(&mut self, x: Vec<f64>, y: usize) {
        self.x.push(x);
        self.y.push(y);
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn class_counts(&self) -> [usize; NUM_STATES] {
        let mut c = [0; NUM_STATES];
        for &y in &self.y {
            c[y] += 1;
        }
        c
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            feature_names: self.feature_names.clone(),
            x: idx.iter().map(|&i| self.x[i].clone()).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("need at least {need} examples, got {got}")]
    TooFewExamples { got: usize, need: usize },
    #[error("degenerate dataset: only one class present")]
    DegenerateDataset,
    #[error("row {row} has {got} features, expected {expected}")]
    RaggedRow { row: usize, got: usize, expected: usize },
    #[error("label {0} out of range")]
    BadLabel(usize),
    #[error("invalid training config: {0}")]
    Config(String),
}

pub const MIN_EXAMPLES: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub validation: Metrics,
    pub train_size: usize,
    pub val_size: usize,
    pub degenerate_features: Vec<String>,
}

/// Mean cross-entropy and its gradient with respect to the flat parameter
/// vector `[w1, b1, w2, b2]`, over already normalized inputs.
pub fn loss_and_grad(model: &MlpModel, z: &[&[f64]], y: &[usize]) -> (f64, Vec<f64>) {
    let (d, h) = (model.input_dim, model.hidden);
    let n_w1 = d * h;
    let n_b1 = h;
    let n_w2 = h * NUM_STATES;
    let mut grad = vec![0.0; model.param_count()];
    let (gw1, rest) = grad.split_at_mut(n_w1);
    let (gb1, rest) = rest.split_at_mut(n_b1);
    let (gw2, gb2) = rest.split_at_mut(n_w2);
    let mut hidden = vec![0.0; h];
    let mut dh = vec![0.0; h];
    let mut loss = 0.0;
    let inv_n = 1.0 / z.len() as f64;
    for (x, &label) in z.iter().zip(y) {
        let logits = model.logits_normalized(x, &mut hidden);
        let p = softmax(&logits);
        loss -= p[label].max(1e-300).ln();
        let mut dl = p;
        dl[label] -= 1.0;
        for (j, a) in hidden.iter().enumerate() {
            let row = &model.w2[j * NUM_STATES..(j + 1) * NUM_STATES];
            let mut back = 0.0;
            for c in 0..NUM_STATES {
                gw2[j * NUM_STATES + c] += a * dl[c] * inv_n;
                back += row[c] * dl[c];
            }
            dh[j] = if *a > 0.0 { back } else { 0.0 };
        }
        for c in 0..NUM_STATES {
            gb2[c] += dl[c] * inv_n;
        }
        for (i, xi) in x.iter().enumerate() {
            let row = &mut gw1[i * h..(i + 1) * h];
            for (g, dj) in row.iter_mut().zip(&dh) {
                *g += xi * dj * inv_n;
            }
        }
        for (g, dj) in gb1.iter_mut().zip(&dh) {
            *g += dj * inv_n;
        }
    }
    (loss * inv_n, grad)
}

/// Mean cross-entropy over normalized inputs.
pub fn mean_loss(model: &MlpModel, z: &[&[f64]], y: &[usize]) -> f64 {
    let mut hidden = vec![0.0; model.hidden];
    let total: f64 = z
        .iter()
        .zip(y)
        .map(|(x, &l)| -softmax(&model.logits_normalized(x, &mut hidden))[l].max(1e-300).ln())
        .sum();
    total / z.len().max(1) as f64
}

pub(crate) fn params_mut(model: &mut MlpModel) -> [&mut Vec<f64>; 4] {
    [&mut model.w1, &mut model.b1, &mut model.w2, &mut model.b2]
}

/// Reads parameter `k` of the flat `[w1, b1, w2, b2]` vector.
pub fn param(model: &MlpModel, k: usize) -> f64 {
    let mut k = k;
    for v in [&model.w1, &model.b1, &model.w2, &model.b2] {
        if k < v.len() {
            return v[k];
        }
        k -= v.len();
    }
    panic!("parameter index out of range")
}

pub fn set_param(model: &mut MlpModel, k: usize, value: f64) {
    let mut k = k;
    for v in params_mut(model) {
        if k < v.len() {
            v[k] = value;
            return;
        }
        k -= v.len();
    }
    panic!("parameter index out of range")
}

/// He-initialized hidden layer, Glorot-initialized output layer, zero biases.
pub fn init_model(
    input_dim: usize,
    hidden: usize,
    feature_names: Vec<String>,
    rng: &mut ChaCha8Rng,
) -> MlpModel {
    let mut m = MlpModel::zeros(input_dim, hidden, feature_names);
    let he = Normal::new(0.0, (2.0 / input_dim as f64).sqrt()).expect("finite");
    for w in &mut m.w1 {
        *w = he.sample(rng);
    }
    let glorot = Normal::new(0.0, (2.0 / (hidden + NUM_STATES) as f64).sqrt()).expect("finite");
    for w in &mut m.w2 {
        *w = glorot.sample(rng);
    }
    m
}

/// Per-class shuffled split; each class with at least two members
/// contributes `round(fraction · n)` (at least one) rows to validation.
pub fn stratified_split(y: &[usize], fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for c in 0..NUM_STATES {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == c).collect();
        idx.shuffle(rng);
        let n_val = if idx.len() >= 2 {
            ((idx.len() as f64 * fraction).round() as usize).clamp(1, idx.len() - 1)
        } else {
            0
        };
        val.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
        }
    }

    fn step(&mut self, model: &mut MlpModel, grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        let mut k = 0;
        for p in params_mut(model) {
            for w in p.iter_mut() {
                let g = grad[k];
                self.m[k] = Self::B1 * self.m[k] + (1.0 - Self::B1) * g;
                self.v[k] = Self::B2 * self.v[k] + (1.0 - Self::B2) * g * g;
                *w -= self.lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + Self::EPS);
                k += 1;
            }
        }
    }
}

fn validate_dataset(data: &Dataset) -> Result<(), TrainError> {
    if data.len() < MIN_EXAMPLES {
        return Err(TrainError::TooFewExamples {
            got: data.len(),
            need: MIN_EXAMPLES,
        });
    }
    for (row, x) in data.x.iter().enumerate() {
        if x.len() != data.dim() {
            return Err(TrainError::RaggedRow {
                row,
                got: x.len(),
                expected: data.dim(),
            });
        }
    }
    if let Some(&bad) = data.y.iter().find(|&&y| y >= NUM_STATES) {
        return Err(TrainError::BadLabel(bad));
    }
    if data.class_counts().iter().filter(|&&c| c > 0).count() < 2 {
        return Err(TrainError::DegenerateDataset);
    }
    Ok(())
}

/// Adam mini-batch training with early stopping on a stratified validation split.
pub fn train(data: &Dataset, cfg: &TrainConfig) -> Result<(MlpModel, TrainingReport), TrainError> {
    if cfg.hidden == 0 || cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(TrainError::Config("hidden, batch_size and learning_rate must be positive".into()));
    }
    if !(0.0..1.0).contains(&cfg.validation_fraction) {
        return Err(TrainError::Config("validation_fraction must lie in [0, 1)".into()));
    }
    validate_dataset(data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (train_idx, val_idx) = stratified_split(&data.y, cfg.validation_fraction, &mut rng);

    let train_rows: Vec<&[f64]> = train_idx.iter().map(|&i| data.x[i].as_slice()).collect();
    let norm = NormStats::fit(&train_rows, data.dim());
    let z_train: Vec<Vec<f64>> = train_rows.iter().map(|r| norm.apply(r)).collect();
    let y_train: Vec<usize> = train_idx.iter().map(|&i| data.y[i]).collect();
    let z_val: Vec<Vec<f64>> = val_idx.iter().map(|&i| norm.apply(&data.x[i])).collect();
    let y_val: Vec<usize> = val_idx.iter().map(|&i| data.y[i]).collect();
    let z_val_refs: Vec<&[f64]> = z_val.iter().map(Vec::as_slice).collect();
    let z_train_refs: Vec<&[f64]> = z_train.iter().map(Vec::as_slice).collect();

    let mut model = init_model(data.dim(), cfg.hidden, data.feature_names.clone(), &mut rng);
    model.norm = norm;
    model.config = *cfg;
    model.seed = cfg.seed;

    let mut adam = Adam::new(model.param_count(), cfg.learning_rate);
    let mut order: Vec<usize> = (0..z_train.len()).collect();
    let mut train_loss = Vec::new();
    let mut val_loss = Vec::new();
    let mut best = (f64::INFINITY, 0usize, model.clone());
    let mut since_best = 0;
    let mut batch_z: Vec<&[f64]> = Vec::with_capacity(cfg.batch_size);
    let mut batch_y: Vec<usize> = Vec::with_capacity(cfg.batch_size);

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            batch_z.clear();
            batch_y.clear();
            for &i in chunk {
                batch_z.push(&z_train[i]);
                batch_y.push(y_train[i]);
            }
            let (loss, grad) = loss_and_grad(&model, &batch_z, &batch_y);
            epoch_loss += loss * chunk.len() as f64;
            adam.step(&mut model, &grad);
        }
        train_loss.push(epoch_loss / z_train.len() as f64);
        // without a validation split, early stopping watches the training loss
        let monitored = if z_val.is_empty() {
            mean_loss(&model, &z_train_refs, &y_train)
        } else {
            mean_loss(&model, &z_val_refs, &y_val)
        };
        val_loss.push(monitored);
        if monitored < best.0 {
            best = (monitored, epoch, model.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }

    let epochs_run = train_loss.len();
    let (_, best_epoch, model) = best;
    let val_set = if val_idx.is_empty() {
        data.subset(&train_idx)
    } else {
        data.subset(&val_idx)
    };
    let validation = evaluate(&model, &val_set).expect("non-empty evaluation set");
    let degenerate_features = model
        .norm
        .degenerate
        .iter()
        .zip(&model.feature_names)
        .filter(|(d, _)| **d)
        .map(|(_, n)| n.clone())
        .collect();
    Ok((
        model,
        TrainingReport {
            train_loss,
            val_loss,
            best_epoch,
            epochs_run,
            validation,
            train_size: train_idx.len(),
            val_size: val_idx.len(),
            degenerate_features,
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    pub fold_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
}

/// Stratified k-fold: each class is shuffled and dealt round-robin into folds.
pub fn kfold_indices(y: &[usize], k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for c in 0..NUM_STATES {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == c).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            folds[next % k].push(i);
            next += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    folds
}

pub fn cross_validate(data: &Dataset, k: usize, cfg: &TrainConfig) -> Result<CrossValidation, TrainError> {
    assert!(k >= 2, "need at least two folds");
    validate_dataset(data)?;
    let folds = kfold_indices(&data.y, k, cfg.seed);
    let mut fold_accuracy = Vec::with_capacity(k);
    for (f, test) in folds.iter().enumerate() {
        let train_idx: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != f)
            .flat_map(|(_, v)| v.iter().copied())
            .collect();
        let (model, _) = train(&data.subset(&train_idx), cfg)?;
        let m = evaluate(&model, &data.subset(test)).expect("non-empty fold");
        fold_accuracy.push(m.accuracy);
    }
    let mean_accuracy = fold_accuracy.iter().sum::<f64>() / k as f64;
    Ok(CrossValidation {
        fold_accuracy,
        mean_accuracy,
    })
}

/// Accuracy of argmax decisions over normalized-or-raw rows, used in tests.
pub fn accuracy(model: &MlpModel, data: &Dataset) -> f64 {
    let hits = data
        .x
        .iter()
        .zip(&data.y)
        .filter(|(x, y)| model.probs(x).map(|p| argmax(&p)) == Ok(**y))
        .count();
    hits as f64 / data.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn blobs(per_class: usize, sigma: f64, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sigma).unwrap();
        let mut d = Dataset::new((0..3).map(|i| format!("f{i}")).collect());
        for c in 0..NUM_STATES {
            for _ in 0..per_class {
                let x = (0..3)
                    .map(|j| if j == c % 3 { c as f64 } else { 0.0 } + noise.sample(&mut rng))
                    .collect();
                d.push(x, c);
            }
        }
        d
    }

    #[test]
    fn uniform_prediction_loss_is_ln5() {
        let m = MlpModel::zeros(3, 4, vec![]);
        let z = [[0.3, 0.1, -2.0]];
        let refs: Vec<&[f64]> = z.iter().map(|r| r.as_slice()).collect();
        assert!((mean_loss(&m, &refs, &[2]) - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn rejects_single_class_and_tiny_sets() {
        let mut d = Dataset::new(vec!["a".into()]);
        for i in 0..60 {
            d.push(vec![i as f64], 1);
        }
        assert_eq!(train(&d, &TrainConfig::default()).unwrap_err(), TrainError::DegenerateDataset);
        let small = d.subset(&(0..10).collect::<Vec<_>>());
        assert!(matches!(
            train(&small, &TrainConfig::default()),
            Err(TrainError::TooFewExamples { .. })
        ));
    }

    #[test]
    fn split_is_stratified() {
        let y: Vec<usize> = (0..500).map(|i| i % 5).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (tr, va) = stratified_split(&y, 0.2, &mut rng);
        assert_eq!(va.len(), 100);
        assert_eq!(tr.len(), 400);
        for c in 0..5 {
            assert_eq!(va.iter().filter(|&&i| y[i] == c).count(), 20);
        }
    }

    #[test]
    fn folds_partition_the_data() {
        let y: Vec<usize> = (0..103).map(|i| i % 5).collect();
        let folds = kfold_indices(&y, 5, 3);
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..103).collect::<Vec<_>>());
        assert!(folds.iter().all(|f| (20..=21).contains(&f.len())));
    }

    #[test]
    fn training_is_deterministic() {
        let d = blobs(40, 0.3, 5);
        let cfg = TrainConfig { max_epochs: 30, ..Default::default() };
        let (a, _) = train(&d, &cfg).unwrap();
        let (b, _) = train(&d, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn early_stopping_restores_best() {
        let d = blobs(40, 0.3, 6);
        let cfg = TrainConfig { max_epochs: 400, ..Default::default() };
        let (_, report) = train(&d, &cfg).unwrap();
        let best = report.val_loss[report.best_epoch];
        assert!(report.val_loss.iter().all(|&v| v >= best));
        if report.epochs_run < cfg.max_epochs {
            assert_eq!(report.epochs_run, report.best_epoch + 1 + cfg.patience);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = init_model(4, 6, vec![], &mut rng);
        let z: Vec<Vec<f64>> = (0..8).map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let refs: Vec<&[f64]> = z.iter().map(Vec::as_slice).collect();
        let y: Vec<usize> = (0..8).map(|i| i % 5).collect();
        let (_, g) = loss_and_grad(&m, &refs, &y);
        let h = 1e-3;
        let mut num = vec![0.0; g.len()];
        for k in 0..g.len() {
            let mut p = m.clone();
            let w = param(&m, k);
            set_param(&mut p, k, w + h);
            let up = mean_loss(&p, &refs, &y);
            set_param(&mut p, k, w - h);
            let down = mean_loss(&p, &refs, &y);
            num[k] = (up - down) / (2.0 * h);
        }
        let diff: f64 = g.iter().zip(&num).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = g.iter().zip(&num).map(|(a, b)| a.powi(2) + b.powi(2)).sum::<f64>().sqrt();
        assert!(diff / norm < 1e-4, "relative error {}", diff / norm);
    }
}
