use serde::{Deserialize, Serialize};

use crate::adapt::{AdaptationDirective, ChatTurn};
use crate::state::{AttentionState, NUM_STATES};
use crate::stream::Micros;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SessionMode {
    /// Directives follow the tracked state.
    Adaptive,
    /// The stable-attention directive throughout; sensing still runs.
    Baseline,
}

impl std::str::FromStr for SessionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "adaptive" => Ok(Self::Adaptive),
            "baseline" => Ok(Self::Baseline),
            _ => Err(format!("unknown mode `{s}` (expected adaptive or baseline)")),
        }
    }
}

/// Per-window summary; enough to recompute the gaze metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSummary {
    pub start_us: Micros,
    pub end_us: Micros,
    pub n_eeg: usize,
    pub n_eye: usize,
    pub label: Option<AttentionState>,
    pub quality: f64,
    pub low_quality: bool,
    pub features: Vec<f64>,
    pub engagement_saturated: bool,
    pub fixation_count: usize,
    pub fixation_mean_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    /// A scripted segment began; `state` is `None` for rest.
    Segment {
        start_us: Micros,
        state: Option<AttentionState>,
    },
    Window(WindowSummary),
    Classification {
        window_end_us: Micros,
        state: AttentionState,
        probs: [f64; NUM_STATES],
        emitted: AttentionState,
    },
    /// No usable classification for this window; the tracker held its state.
    Degraded {
        window_end_us: Micros,
        reason: String,
        emitted: AttentionState,
    },
    StateChange {
        window_end_us: Micros,
        from: AttentionState,
        to: AttentionState,
    },
    Directive(AdaptationDirective),
    Chat { turn: ChatTurn },
    Probe { onset_us: Micros, deadline_us: Micros },
    ProbeResponse {
        onset_us: Micros,
        rating: u8,
        expired: bool,
    },
    Steer { state: Option<AttentionState> },
    Pause { paused: bool },
    SessionEnd { clock_us: Micros },
}

impl EventKind {
    /// Events computed from the raw samples alone. Replay must reproduce these.
    pub fn is_sensing(&self) -> bool {
        matches!(
            self,
            EventKind::Window(_)
                | EventKind::Classification { .. }
                | EventKind::Degraded { .. }
                | EventKind::StateChange { .. }
        )
    }

    /// Events the replay re-derives and compares: sensing plus state-driven directives.
    pub fn is_derived(&self) -> bool {
        self.is_sensing() || matches!(self, EventKind::Directive(_))
    }

    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Segment { .. } => "segment",
            EventKind::Window(_) => "window",
            EventKind::Classification { .. } => "classification",
            EventKind::Degraded { .. } => "degraded",
            EventKind::StateChange { .. } => "state_change",
            EventKind::Directive(_) => "directive",
            EventKind::Chat { .. } => "chat",
            EventKind::Probe { .. } => "probe",
            EventKind::ProbeResponse { .. } => "probe_response",
            EventKind::Steer { .. } => "steer",
            EventKind::Pause { .. } => "pause",
            EventKind::SessionEnd { .. } => "session_end",
        }
    }
}

/// One log entry. `(ts_us, seq)` is a total order; `ts_us` never decreases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub ts_us: Micros,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// Append-only, ts-ordered event log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    events: Vec<Event>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends at `ts_us`, clamped so the log never goes backwards.
    pub fn append(&mut self, ts_us: Micros, kind: EventKind) -> &Event {
        let ts_us = self.events.last().map_or(ts_us, |e| ts_us.max(e.ts_us));
        let seq = self.events.len() as u64;
        self.events.push(Event { seq, ts_us, kind });
        self.events.last().expect("just pushed")
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn directive_changes(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::Directive(_)))
            .count()
    }

    pub fn from_events(events: Vec<Event>) -> Result<Self, String> {
        for (i, w) in events.windows(2).enumerate() {
            if w[1].ts_us < w[0].ts_us || w[1].seq <= w[0].seq {
                return Err(format!("event {} is out of order", i + 1));
            }
        }
        Ok(Self { events })
    }
}
