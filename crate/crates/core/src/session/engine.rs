use std::sync::Arc;
use std::time::Instant;

use super::archive::{Archive, ArchiveHeader, ArchiveItem, ArchiveWriter, ARCHIVE_VERSION};
use super::events::{Event, EventKind, EventLog, SessionMode, WindowSummary};
use super::metrics::{compute_metrics, EngagementMetrics};
use super::wire::{DirectiveMsg, ServerMessage};
use crate::adapt::{
    compose_prompt, AdaptationDirective, BackendError, ChatBackend, ChatRequest, ChatTurn,
    DirectiveSet, PromptError, Role, StateTracker, DEFAULT_HISTORY_TURNS, DEFAULT_K,
};
use crate::classifier::{MlpModel, ModelContractError};
use crate::pipeline::{feature_config_for, Pipeline, SimStreams, StageTimings};
use crate::sim::{ScenarioPlayer, ScenarioScript, SimEvent, MARKER_STREAM};
use crate::state::AttentionState;
use crate::stream::{AlignedWindow, Merger, MergerConfig, Micros, StreamError, TimestampedSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionConfig {
    pub mode: SessionMode,
    pub k: usize,
    pub history_turns: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            mode: SessionMode::Adaptive,
            k: DEFAULT_K,
            history_turns: DEFAULT_HISTORY_TURNS,
        }
    }
}

/// Where samples come from.
#[derive(Debug, Clone)]
pub enum SessionSource {
    Scripted(ScenarioScript),
    /// Open-ended simulation driven by steering.
    Live {
        initial: AttentionState,
        seed: u64,
        jitter_ms: f64,
    },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SessionError {
    #[error(transparent)]
    Contract(#[from] ModelContractError),
    #[error("scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("no probe with onset {0}")]
    UnknownProbe(Micros),
    #[error("probe rating must be 1-5, got {0}")]
    BadRating(u8),
    #[error("session is closed")]
    Closed,
    #[error("session has no sample source")]
    NoSource,
    #[error("archive: {0}")]
    Archive(String),
}

#[derive(Debug, Clone, Copy)]
struct OpenProbe {
    onset_us: Micros,
    deadline_us: Micros,
    answered: bool,
}

/// One running session: pulls samples from its source, cuts windows,
/// classifies, tracks state, selects directives and logs everything.
/// Every public mutation returns the feed messages it produced, in order.
pub struct Session {
    id: String,
    cfg: SessionConfig,
    model: Arc<MlpModel>,
    directives: Arc<DirectiveSet>,
    pipeline: Pipeline,
    merger: Merger,
    streams: SimStreams,
    tracker: StateTracker,
    directive_state: AttentionState,
    player: Option<ScenarioPlayer>,
    scenario: Option<ScenarioScript>,
    log: EventLog,
    archive: Option<ArchiveWriter<Vec<u8>>>,
    archive_bytes: Option<Vec<u8>>,
    clock_us: Micros,
    paused: bool,
    closed: bool,
    conversation: Vec<ChatTurn>,
    probes: Vec<OpenProbe>,
    latencies_us: Vec<u64>,
    timings: Vec<StageTimings>,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("id", &self.id)
            .field("mode", &self.cfg.mode)
            .field("clock_us", &self.clock_us)
            .field("events", &self.log.len())
            .finish()
    }
}

impl Session {
    pub fn new(
        id: impl Into<String>,
        cfg: SessionConfig,
        model: Arc<MlpModel>,
        directives: Arc<DirectiveSet>,
        source: SessionSource,
    ) -> Result<Self, SessionError> {
        let (player, scenario) = match source {
            SessionSource::Scripted(script) => {
                script
                    .validate()
                    .map_err(|e| SessionError::Scenario(e.to_string()))?;
                (ScenarioPlayer::new(&script), Some(script))
            }
            SessionSource::Live {
                initial,
                seed,
                jitter_ms,
            } => (ScenarioPlayer::live(initial, seed, jitter_ms), None),
        };
        let mut s = Self::bare(id.into(), cfg, model, directives, scenario)?;
        s.player = Some(player);
        let header = s.header();
        s.archive =
            Some(ArchiveWriter::new(Vec::new(), &header).map_err(|e| SessionError::Archive(e.to_string()))?);
        Ok(s)
    }

    fn bare(
        id: String,
        cfg: SessionConfig,
        model: Arc<MlpModel>,
        directives: Arc<DirectiveSet>,
        scenario: Option<ScenarioScript>,
    ) -> Result<Self, SessionError> {
        let fcfg = feature_config_for(&model);
        model.check_features(fcfg.names())?;
        let mut merger = Merger::new(MergerConfig::default());
        let streams = SimStreams::open(&mut merger).expect("fresh merger accepts the four streams");
        let initial = AttentionState::StableAttention;
        Ok(Self {
            id,
            cfg,
            model,
            directives,
            pipeline: Pipeline::new(fcfg),
            merger,
            streams,
            tracker: StateTracker::new(initial, cfg.k),
            directive_state: initial,
            player: None,
            scenario,
            log: EventLog::new(),
            archive: None,
            archive_bytes: None,
            clock_us: 0,
            paused: false,
            closed: false,
            conversation: Vec::new(),
            probes: Vec::new(),
            latencies_us: Vec::new(),
            timings: Vec::new(),
        })
    }

    pub fn header(&self) -> ArchiveHeader {
        ArchiveHeader {
            v: ARCHIVE_VERSION,
            session_id: self.id.clone(),
            mode: self.cfg.mode,
            k: self.cfg.k,
            history_turns: self.cfg.history_turns,
            features: *self.pipeline.feature_config(),
            model_sha256: self.model.hash_hex(),
            scenario: self.scenario.clone(),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn mode(&self) -> SessionMode {
        self.cfg.mode
    }

    pub fn clock_us(&self) -> Micros {
        self.clock_us
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn current_state(&self) -> AttentionState {
        self.tracker.current()
    }

    pub fn active_directive(&self) -> &AdaptationDirective {
        self.directives.directive_for(self.directive_state)
    }

    pub fn events(&self) -> &[Event] {
        self.log.events()
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn conversation(&self) -> &[ChatTurn] {
        &self.conversation
    }

    /// Window-ready to state-update latency per classified window.
    pub fn latencies_us(&self) -> &[u64] {
        &self.latencies_us
    }

    pub fn stage_timings(&self) -> &[StageTimings] {
        &self.timings
    }

    pub fn metrics(&self) -> EngagementMetrics {
        compute_metrics(self.log.events(), self.clock_us)
    }

    /// The finished archive, once the session is closed.
    pub fn archive(&self) -> Option<&[u8]> {
        self.archive_bytes.as_deref()
    }

    /// Greeting for a newly attached feed client.
    pub fn hello(&self) -> ServerMessage {
        ServerMessage::Hello {
            session_id: self.id.clone(),
            mode: self.cfg.mode,
            state: self.tracker.current(),
            directive: DirectiveMsg::from(self.active_directive()),
        }
    }

    /// Whether the scripted source has run out.
    pub fn source_finished(&self) -> bool {
        self.player.as_ref().is_none_or(|p| {
            p.length_us().is_some_and(|l| p.generated_through_us() >= l)
        })
    }

    fn record(&mut self, kind: EventKind, changed: bool, out: &mut Vec<ServerMessage>) {
        let e = self.log.append(self.clock_us, kind);
        if let Some(m) = ServerMessage::from_event(e, changed) {
            out.push(m);
        }
        if let Some(a) = &mut self.archive {
            a.event(e).expect("in-memory archive");
        }
    }

    /// Advances the simulation by one batch (one second of session time).
    /// Returns `None` once the source is exhausted. Does nothing while paused.
    pub fn step(&mut self) -> Result<Option<Vec<ServerMessage>>, SessionError> {
        if self.closed {
            return Err(SessionError::Closed);
        }
        let mut out = Vec::new();
        if self.paused {
            return Ok(Some(out));
        }
        let player = self.player.as_mut().ok_or(SessionError::NoSource)?;
        let Some(batch) = player.next_batch() else {
            return Ok(None);
        };
        let through = player.generated_through_us();
        for ev in batch {
            match ev {
                SimEvent::Sample(d) => self.ingest(d.stream, d.sample, &mut out),
                SimEvent::ProbeOnset(p) => {
                    self.probes.push(OpenProbe {
                        onset_us: p.ts_us,
                        deadline_us: p.deadline_us,
                        answered: false,
                    });
                    self.record(
                        EventKind::Probe {
                            onset_us: p.ts_us,
                            deadline_us: p.deadline_us,
                        },
                        false,
                        &mut out,
                    );
                }
            }
        }
        self.tick(through, &mut out);
        Ok(Some(out))
    }

    /// Steps until the source is exhausted; returns every message produced.
    pub fn run_to_end(&mut self) -> Result<Vec<ServerMessage>, SessionError> {
        let mut all = Vec::new();
        while let Some(msgs) = self.step()? {
            all.extend(msgs);
        }
        Ok(all)
    }

    fn ingest(&mut self, stream: &str, sample: TimestampedSample, out: &mut Vec<ServerMessage>) {
        if stream == MARKER_STREAM {
            let code = sample.values.first().copied().unwrap_or(-1.0);
            let state = (code >= 0.0)
                .then(|| AttentionState::from_index(code as usize))
                .flatten();
            self.record(
                EventKind::Segment {
                    start_us: sample.ts_us,
                    state,
                },
                false,
                out,
            );
        }
        if let Some(a) = &mut self.archive {
            a.sample(stream, &sample).expect("in-memory archive");
        }
        if let Some(h) = self.streams.handle_for(stream) {
            // out-of-order samples are counted by the merger and dropped
            let _ = self.merger.push(h, sample);
        }
    }

    fn tick(&mut self, clock_us: Micros, out: &mut Vec<ServerMessage>) {
        self.clock_us = self.clock_us.max(clock_us);
        if let Some(a) = &mut self.archive {
            a.tick(clock_us).expect("in-memory archive");
        }
        self.merger.advance_clock(clock_us);
        for w in self.merger.poll() {
            self.on_window(w, out);
        }
    }

    fn on_window(&mut self, w: Result<AlignedWindow, StreamError>, out: &mut Vec<ServerMessage>) {
        let t0 = Instant::now();
        let window_end_us = match &w {
            Ok(w) => w.end_us,
            Err(StreamError::StreamStalled { window_end_us, .. }) => *window_end_us,
            Err(_) => self.clock_us,
        };
        let processed = w
            .map_err(|e| e.to_string())
            .and_then(|w| {
                self.pipeline
                    .process(&w, Some(&self.model))
                    .map(|r| (w, r))
                    .map_err(|e| e.to_string())
            });
        let (w, r) = match processed {
            Ok(x) => x,
            Err(reason) => {
                self.tracker.mark_degraded();
                let emitted = self.tracker.current();
                self.record(
                    EventKind::Degraded {
                        window_end_us,
                        reason,
                        emitted,
                    },
                    false,
                    out,
                );
                return;
            }
        };
        self.record(
            EventKind::Window(WindowSummary {
                start_us: w.start_us,
                end_us: w.end_us,
                n_eeg: w.eeg.len(),
                n_eye: w.eye.len(),
                label: w.label,
                quality: r.clean.quality,
                low_quality: r.clean.low_quality,
                features: r.features.vector.to_vec(),
                engagement_saturated: r.features.engagement_saturated,
                fixation_count: r.features.fixations.len(),
                fixation_mean_ms: r.features.vector.fixation_mean_ms,
            }),
            false,
            out,
        );
        let c = r.classification.expect("model supplied");
        let before = self.tracker.current();
        let up = self.tracker.update(&c);
        self.record(
            EventKind::Classification {
                window_end_us: c.window_end_us,
                state: c.state,
                probs: c.probs,
                emitted: up.emitted,
            },
            up.changed,
            out,
        );
        self.latencies_us.push(t0.elapsed().as_micros() as u64);
        self.timings.push(r.timings);
        if up.changed {
            self.record(
                EventKind::StateChange {
                    window_end_us: c.window_end_us,
                    from: before,
                    to: up.emitted,
                },
                false,
                out,
            );
            if self.cfg.mode == SessionMode::Adaptive {
                self.directive_state = up.emitted;
                let d = self.directives.directive_for(up.emitted).clone();
                self.record(EventKind::Directive(d), false, out);
            }
        }
    }

    /// Logs the user's turn and builds the backend request under the directive
    /// in force right now. The backend call itself happens outside the session.
    pub fn begin_chat(&mut self, text: &str) -> Result<(ChatRequest, Vec<ServerMessage>), SessionError> {
        if self.closed {
            return Err(SessionError::Closed);
        }
        let directive = self.active_directive();
        let req = compose_prompt(directive, &self.conversation, text, self.cfg.history_turns)?;
        let turn = ChatTurn {
            role: Role::User,
            content: text.to_string(),
            ts_us: self.clock_us,
            state_at_send: self.tracker.current(),
            directive_id: req.directive_id.clone(),
            failed: false,
        };
        self.conversation.push(turn.clone());
        let mut out = Vec::new();
        self.record(EventKind::Chat { turn }, false, &mut out);
        Ok((req, out))
    }

    /// Logs the backend's answer, or a failed system turn if it had none.
    pub fn finish_chat(
        &mut self,
        req: &ChatRequest,
        reply: Result<String, BackendError>,
    ) -> Vec<ServerMessage> {
        let mut out = Vec::new();
        if self.closed {
            return out;
        }
        let (role, content, failed) = match reply {
            Ok(text) if !text.trim().is_empty() => (Role::Assistant, text, false),
            Ok(_) => (Role::System, "backend returned an empty reply".to_string(), true),
            Err(e) => (Role::System, e.to_string(), true),
        };
        let turn = ChatTurn {
            role,
            content,
            ts_us: self.clock_us,
            state_at_send: self.tracker.current(),
            directive_id: req.directive_id.clone(),
            failed,
        };
        if !failed {
            self.conversation.push(turn.clone());
        }
        self.record(EventKind::Chat { turn }, false, &mut out);
        out
    }

    /// Synchronous chat round trip.
    pub fn chat(&mut self, text: &str, backend: &dyn ChatBackend) -> Result<Vec<ServerMessage>, SessionError> {
        let (req, mut out) = self.begin_chat(text)?;
        let reply = backend.complete(&req);
        out.extend(self.finish_chat(&req, reply));
        Ok(out)
    }

    /// Accepts a self-report; late answers are kept but marked expired.
    pub fn probe_response(&mut self, onset_us: Micros, rating: u8) -> Result<Vec<ServerMessage>, SessionError> {
        if self.closed {
            return Err(SessionError::Closed);
        }
        if !(1..=5).contains(&rating) {
            return Err(SessionError::BadRating(rating));
        }
        let clock = self.clock_us;
        let probe = self
            .probes
            .iter_mut()
            .find(|p| p.onset_us == onset_us && !p.answered)
            .ok_or(SessionError::UnknownProbe(onset_us))?;
        probe.answered = true;
        let expired = clock > probe.deadline_us;
        let mut out = Vec::new();
        self.record(
            EventKind::ProbeResponse {
                onset_us,
                rating,
                expired,
            },
            false,
            &mut out,
        );
        Ok(out)
    }

    pub fn steer(&mut self, state: Option<AttentionState>) -> Result<Vec<ServerMessage>, SessionError> {
        if self.closed {
            return Err(SessionError::Closed);
        }
        let player = self.player.as_mut().ok_or(SessionError::NoSource)?;
        player.steer(state);
        let mut out = Vec::new();
        self.record(EventKind::Steer { state }, false, &mut out);
        Ok(out)
    }

    pub fn set_paused(&mut self, paused: bool) -> Result<Vec<ServerMessage>, SessionError> {
        if self.closed {
            return Err(SessionError::Closed);
        }
        let mut out = Vec::new();
        if self.paused != paused {
            self.paused = paused;
            self.record(EventKind::Pause { paused }, false, &mut out);
        }
        Ok(out)
    }

    /// Ends the session and seals the archive. Idempotent.
    pub fn close(&mut self) -> Vec<ServerMessage> {
        let mut out = Vec::new();
        if self.closed {
            return out;
        }
        let clock_us = self.clock_us;
        self.record(EventKind::SessionEnd { clock_us }, false, &mut out);
        self.closed = true;
        if let Some(a) = self.archive.take() {
            self.archive_bytes = Some(a.finish().expect("in-memory archive"));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Match,
    /// `index` counts derived events from zero.
    Mismatch {
        index: usize,
        expected: Option<Box<Event>>,
        got: Option<Box<Event>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub verdict: Verdict,
    pub compared: usize,
    pub model_matches_header: bool,
}

impl ReplayReport {
    pub fn is_match(&self) -> bool {
        self.verdict == Verdict::Match
    }

    /// One line: `MATCH ...` or `MISMATCH ...` naming the first divergence.
    pub fn summary(&self) -> String {
        let brief = |e: &Option<Box<Event>>| match e {
            Some(e) => format!(
                "{} seq={} ts_us={} {}",
                e.kind.name(),
                e.seq,
                e.ts_us,
                serde_json::to_string(&e.kind).unwrap_or_default()
            ),
            None => "<none>".into(),
        };
        match &self.verdict {
            Verdict::Match => format!("MATCH {} derived events", self.compared),
            Verdict::Mismatch { index, expected, got } => format!(
                "MISMATCH at derived event {index}: expected {} got {}",
                brief(expected),
                brief(got)
            ),
        }
    }
}

/// Re-runs the archived raw samples through the pipeline with `model` and
/// compares every derived event against the archived ones.
pub fn replay(
    archive: &Archive,
    model: Arc<MlpModel>,
    directives: Arc<DirectiveSet>,
) -> Result<ReplayReport, SessionError> {
    let h = &archive.header;
    let cfg = SessionConfig {
        mode: h.mode,
        k: h.k,
        history_turns: h.history_turns,
    };
    let model_matches_header = model.hash_hex() == h.model_sha256;
    let mut s = Session::bare(h.session_id.clone(), cfg, model, directives, h.scenario.clone())?;
    let mut sink = Vec::new();
    for item in &archive.items {
        match item {
            ArchiveItem::Sample { stream, sample } => {
                if let Some(handle) = s.streams.handle_for(stream) {
                    let _ = s.merger.push(handle, sample.clone());
                }
            }
            ArchiveItem::Tick { clock_us } => {
                s.tick(*clock_us, &mut sink);
                sink.clear();
            }
            ArchiveItem::Event(_) => {}
        }
    }
    let expected: Vec<&Event> = archive.events().filter(|e| e.kind.is_derived()).collect();
    let got: Vec<&Event> = s.log.events().iter().filter(|e| e.kind.is_derived()).collect();
    let n = expected.len().max(got.len());
    for i in 0..n {
        let (a, b) = (expected.get(i), got.get(i));
        let same = match (a, b) {
            (Some(a), Some(b)) => a.ts_us == b.ts_us && a.kind == b.kind,
            _ => false,
        };
        if !same {
            return Ok(ReplayReport {
                verdict: Verdict::Mismatch {
                    index: i,
                    expected: a.map(|e| Box::new((*e).clone())),
                    got: b.map(|e| Box::new((*e).clone())),
                },
                compared: i,
                model_matches_header,
            });
        }
    }
    Ok(ReplayReport {
        verdict: Verdict::Match,
        compared: n,
        model_matches_header,
    })
}
