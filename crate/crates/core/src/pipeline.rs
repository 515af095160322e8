//! Window → features → classification, plus helpers that drive the merger
//! from a simulated session and turn the result into a training set.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::classifier::{
    train, Classification, Dataset, MlpModel, ModelContractError, TrainConfig, TrainError,
    TrainingReport,
};
use crate::features::{FeatureConfig, FeatureError, FeatureExtractor, WindowFeatures};
use crate::preprocess::{clean_window, CleanWindow, LowPassFir, PreprocessError};
use crate::sim::{
    Delivery, ScenarioPlayer, ScenarioScript, SimEvent, EEG_STREAM, EYE_STREAM, MARKER_STREAM,
    PROBE_STREAM,
};
use crate::state::AttentionState;
use crate::stream::{
    AlignedWindow, Merger, MergerConfig, Micros, StreamDescriptor, StreamError, StreamHandle,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Contract(#[from] ModelContractError),
}

/// Wall-clock time spent in each stage for one window, in microseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub preprocess_us: u64,
    pub features_us: u64,
    pub forward_us: u64,
}

impl StageTimings {
    pub fn total_us(&self) -> u64 {
        self.preprocess_us + self.features_us + self.forward_us
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowResult {
    pub clean: CleanWindow,
    pub features: WindowFeatures,
    pub classification: Option<Classification>,
    pub timings: StageTimings,
}

/// Stateless per-window processing chain.
#[derive(Debug, Clone)]
pub struct Pipeline {
    fir: LowPassFir,
    extractor: FeatureExtractor,
}

impl Pipeline {
    pub fn new(cfg: FeatureConfig) -> Self {
        Self {
            fir: LowPassFir::eeg_default(),
            extractor: FeatureExtractor::new(cfg, 250.0),
        }
    }

    pub fn feature_config(&self) -> &FeatureConfig {
        self.extractor.config()
    }

    pub fn fir(&self) -> &LowPassFir {
        &self.fir
    }

    pub fn process(
        &self,
        window: &AlignedWindow,
        model: Option<&MlpModel>,
    ) -> Result<WindowResult, PipelineError> {
        let t0 = Instant::now();
        let clean = clean_window(&self.fir, window)?;
        let t1 = Instant::now();
        let features = self.extractor.extract(&clean)?;
        let t2 = Instant::now();
        let classification = model
            .map(|m| m.forward(&features.vector.to_vec(), window.end_us))
            .transpose()?;
        let t3 = Instant::now();
        Ok(WindowResult {
            clean,
            features,
            classification,
            timings: StageTimings {
                preprocess_us: (t1 - t0).as_micros() as u64,
                features_us: (t2 - t1).as_micros() as u64,
                forward_us: (t3 - t2).as_micros() as u64,
            },
        })
    }
}

/// Feature layout a model was trained on.
pub fn feature_config_for(model: &MlpModel) -> FeatureConfig {
    FeatureConfig {
        include_fixation_count: model.input_dim > 9,
        ..FeatureConfig::default()
    }
}

/// Handles for the four simulated streams.
#[derive(Debug, Clone, Copy)]
pub struct SimStreams {
    pub eeg: StreamHandle,
    pub eye: StreamHandle,
    pub markers: StreamHandle,
    pub probes: StreamHandle,
}

impl SimStreams {
    pub fn open(m: &mut Merger) -> Result<Self, StreamError> {
        Ok(Self {
            eeg: m.open_stream(StreamDescriptor::eeg(EEG_STREAM))?,
            eye: m.open_stream(StreamDescriptor::eye(EYE_STREAM))?,
            markers: m.open_stream(StreamDescriptor::marker(MARKER_STREAM))?,
            probes: m.open_stream(StreamDescriptor::probe(PROBE_STREAM))?,
        })
    }

    pub fn handle_for(&self, stream: &str) -> Option<StreamHandle> {
        match stream {
            EEG_STREAM => Some(self.eeg),
            EYE_STREAM => Some(self.eye),
            MARKER_STREAM => Some(self.markers),
            PROBE_STREAM => Some(self.probes),
            _ => None,
        }
    }

    pub fn push(&self, m: &mut Merger, d: &Delivery) -> Result<(), StreamError> {
        let h = self.handle_for(d.stream).ok_or(StreamError::UnknownHandle)?;
        m.push(h, d.sample.clone())
    }
}

/// One window's features with its block label.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub window_end_us: Micros,
    pub features: Vec<f64>,
    pub label: Option<AttentionState>,
    pub quality: f64,
}

/// Runs a scripted session through the merger and feature pipeline.
/// Windows that fail preprocessing or have no valid eye data are skipped.
pub fn simulate_feature_rows(script: &ScenarioScript, cfg: FeatureConfig) -> Vec<FeatureRow> {
    let pipeline = Pipeline::new(cfg);
    let mut merger = Merger::new(MergerConfig::default());
    let streams = SimStreams::open(&mut merger).expect("fresh merger");
    let mut rows = Vec::new();
    for batch in ScenarioPlayer::new(script) {
        for event in batch {
            if let SimEvent::Sample(d) = event {
                let _ = streams.push(&mut merger, &d);
            }
        }
        for w in merger.poll().into_iter().flatten() {
            if let Ok(r) = pipeline.process(&w, None) {
                rows.push(FeatureRow {
                    window_end_us: w.end_us,
                    features: r.features.vector.to_vec(),
                    label: w.label,
                    quality: r.clean.quality,
                });
            }
        }
    }
    rows
}

pub fn dataset_from_rows<'a>(rows: impl IntoIterator<Item = &'a FeatureRow>, cfg: &FeatureConfig) -> Dataset {
    let mut d = Dataset::new(cfg.names().iter().map(|s| s.to_string()).collect());
    for r in rows {
        if let Some(l) = r.label {
            d.push(r.features.clone(), l.index());
        }
    }
    d
}

/// Labeled windows from the default five-block script, one simulated
/// participant per seed.
pub fn default_training_set(seeds: impl IntoIterator<Item = u64>, cfg: FeatureConfig) -> Dataset {
    let mut d = Dataset::new(cfg.names().iter().map(|s| s.to_string()).collect());
    for seed in seeds {
        let rows = simulate_feature_rows(&ScenarioScript::default_script(seed), cfg);
        let part = dataset_from_rows(&rows, &cfg);
        d.x.extend(part.x);
        d.y.extend(part.y);
    }
    d
}

/// Seeds used for the model a session falls back to when none is given.
pub const DEFAULT_MODEL_SEEDS: std::ops::Range<u64> = 0..3;

/// Trains on [`default_training_set`] with the default hyperparameters.
pub fn train_default_model(
    seeds: impl IntoIterator<Item = u64>,
    cfg: FeatureConfig,
) -> Result<(MlpModel, TrainingReport), TrainError> {
    train(&default_training_set(seeds, cfg), &TrainConfig::default())
}
