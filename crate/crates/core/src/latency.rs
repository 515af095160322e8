//! Window-ready to classification latency, measured per stage.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::classifier::MlpModel;
use crate::pipeline::{feature_config_for, Pipeline, SimStreams, StageTimings};
use crate::sim::{ScenarioPlayer, SimEvent};
use crate::state::AttentionState;
use crate::stream::{Merger, MergerConfig};

/// Seconds spent in each state while generating bench windows.
const DWELL_BATCHES: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p50_us: u64,
    pub p95_us: u64,
    pub p99_us: u64,
    pub max_us: u64,
}

impl Percentiles {
    /// Nearest-rank percentiles.
    pub fn of(samples: &[u64]) -> Self {
        let mut v = samples.to_vec();
        v.sort_unstable();
        let rank = |p: f64| {
            if v.is_empty() {
                return 0;
            }
            let r = ((p / 100.0) * v.len() as f64).ceil() as usize;
            v[r.clamp(1, v.len()) - 1]
        };
        Self {
            p50_us: rank(50.0),
            p95_us: rank(95.0),
            p99_us: rank(99.0),
            max_us: v.last().copied().unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub windows: usize,
    pub failed: usize,
    pub preprocess: Percentiles,
    pub features: Percentiles,
    pub forward: Percentiles,
    pub total: Percentiles,
}

impl LatencyReport {
    pub fn from_timings(timings: &[StageTimings], failed: usize) -> Self {
        let col = |f: fn(&StageTimings) -> u64| timings.iter().map(f).collect::<Vec<_>>();
        Self {
            windows: timings.len(),
            failed,
            preprocess: Percentiles::of(&col(|t| t.preprocess_us)),
            features: Percentiles::of(&col(|t| t.features_us)),
            forward: Percentiles::of(&col(|t| t.forward_us)),
            total: Percentiles::of(&col(StageTimings::total_us)),
        }
    }

    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<12}{:>10}{:>10}{:>10}{:>10}\n",
            "stage", "p50 ms", "p95 ms", "p99 ms", "max ms"
        );
        for (name, p) in [
            ("filter", &self.preprocess),
            ("features", &self.features),
            ("forward", &self.forward),
            ("total", &self.total),
        ] {
            let ms = |us: u64| us as f64 / 1000.0;
            let _ = writeln!(
                s,
                "{name:<12}{:>10.3}{:>10.3}{:>10.3}{:>10.3}",
                ms(p.p50_us),
                ms(p.p95_us),
                ms(p.p99_us),
                ms(p.max_us)
            );
        }
        let _ = write!(s, "windows: {}  failed: {}", self.windows, self.failed);
        s
    }
}

/// Streams a steered live simulation through the merger and times
/// [`Pipeline::process`] on the first `n` windows. Windows are processed as
/// they appear, so memory stays flat.
pub fn measure(model: &MlpModel, n: usize, seed: u64) -> LatencyReport {
    let pipeline = Pipeline::new(feature_config_for(model));
    let mut merger = Merger::new(MergerConfig::default());
    let streams = SimStreams::open(&mut merger).expect("fresh merger");
    let mut player = ScenarioPlayer::live(AttentionState::StableAttention, seed, 2.0);
    let mut timings = Vec::with_capacity(n);
    let mut failed = 0;
    let mut batch_no = 0usize;
    while timings.len() + failed < n {
        if batch_no % DWELL_BATCHES == 0 {
            let state = AttentionState::ALL[(batch_no / DWELL_BATCHES) % AttentionState::ALL.len()];
            player.steer(Some(state));
        }
        batch_no += 1;
        let Some(batch) = player.next_batch() else { break };
        for ev in batch {
            if let SimEvent::Sample(d) = ev {
                let _ = streams.push(&mut merger, &d);
            }
        }
        for w in merger.poll().into_iter().flatten() {
            if timings.len() + failed >= n {
                break;
            }
            match pipeline.process(&w, Some(model)) {
                Ok(r) => timings.push(r.timings),
                Err(_) => failed += 1,
            }
        }
    }
    LatencyReport::from_timings(&timings, failed)
}
