//! Scripted task blocks, thought probes, and the delivery-ordered player that
//! feeds a session.
//!
//! Script files are TOML:
//!
//! ```toml
//! seed = 7
//! jitter_ms = 2.0              # optional, delivery jitter amplitude
//! eeg_mode = "tones"           # optional: "tones" | "band_noise"
//! subject_variability = 0.1    # optional, relative spread of per-subject scaling
//!
//! [[block]]
//! state = "HighAttention"
//! duration_s = 60              # 60..=180
//! rest_after_s = 30            # optional, must be 30
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::generator::{EegMode, SimConfig, Simulator};
use super::profile::{StateSignalProfile, SubjectScale};
use crate::state::AttentionState;
use crate::stream::{Micros, StreamKind, TimestampedSample, US_PER_SEC};

pub const EEG_STREAM: &str = "eeg";
pub const EYE_STREAM: &str = "eye";
pub const MARKER_STREAM: &str = "markers";
pub const PROBE_STREAM: &str = "probes";

pub const MIN_BLOCK_S: u32 = 60;
pub const MAX_BLOCK_S: u32 = 180;
pub const REST_S: u32 = 30;
pub const PROBE_GAP_S: (f64, f64) = (30.0, 60.0);
pub const PROBE_DEADLINE_US: Micros = 3 * US_PER_SEC;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioBlock {
    pub state: AttentionState,
    pub duration_s: u32,
    pub rest_after_s: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScript {
    pub blocks: Vec<ScenarioBlock>,
    pub seed: u64,
    /// Delivery jitter amplitude; samples keep their acquisition timestamps.
    pub jitter_ms: f64,
    #[serde(default)]
    pub eeg_mode: EegMode,
    /// Relative standard deviation of the per-subject amplitude/rate scaling.
    #[serde(default)]
    pub subject_variability: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("scenario error at line {line}: {message}")]
pub struct ScenarioError {
    /// 1-based; 0 when the error has no source position.
    pub line: usize,
    pub message: String,
}

impl ScenarioError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

/// A task block or rest period on the session clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start_us: Micros,
    pub end_us: Micros,
    /// `None` for rest.
    pub state: Option<AttentionState>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeEvent {
    pub ts_us: Micros,
    pub deadline_us: Micros,
    pub response: Option<u8>,
    pub response_ts_us: Option<Micros>,
}

impl ProbeEvent {
    pub fn new(ts_us: Micros) -> Self {
        Self {
            ts_us,
            deadline_us: ts_us + PROBE_DEADLINE_US,
            response: None,
            response_ts_us: None,
        }
    }

    /// Records a response; late or out-of-range ratings are discarded.
    pub fn respond(&mut self, at_us: Micros, rating: u8) -> bool {
        if at_us > self.deadline_us || !(1..=5).contains(&rating) || at_us < self.ts_us {
            return false;
        }
        self.response = Some(rating);
        self.response_ts_us = Some(at_us);
        true
    }
}

impl ScenarioScript {
    /// Five 60 s blocks in canonical state order with 30 s rests: 420 s.
    pub fn default_script(seed: u64) -> Self {
        Self {
            blocks: AttentionState::ALL
                .into_iter()
                .map(|state| ScenarioBlock {
                    state,
                    duration_s: 60,
                    rest_after_s: REST_S,
                })
                .collect(),
            seed,
            jitter_ms: 2.0,
            eeg_mode: EegMode::Tones,
            subject_variability: 0.1,
        }
    }

    /// Same blocks with their order shuffled by `seed`.
    pub fn shuffled(mut self) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_0bd5);
        for i in (1..self.blocks.len()).rev() {
            let j = rng.random_range(0..=i);
            self.blocks.swap(i, j);
        }
        self
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.blocks.is_empty() {
            return Err(ScenarioError::at(0, "script has no blocks"));
        }
        for (i, b) in self.blocks.iter().enumerate() {
            check_block(b).map_err(|m| ScenarioError::at(0, format!("block {}: {m}", i + 1)))?;
        }
        if !(self.jitter_ms.is_finite() && self.jitter_ms >= 0.0) {
            return Err(ScenarioError::at(0, "jitter_ms must be >= 0"));
        }
        if !(0.0..=0.5).contains(&self.subject_variability) {
            return Err(ScenarioError::at(0, "subject_variability must lie in [0, 0.5]"));
        }
        Ok(())
    }

    /// Blocks and the rests between them; the final block's rest is not part of the session.
    pub fn segments(&self) -> Vec<Segment> {
        let mut out = Vec::new();
        let mut t = 0;
        for (i, b) in self.blocks.iter().enumerate() {
            let end = t + b.duration_s as Micros * US_PER_SEC;
            out.push(Segment {
                start_us: t,
                end_us: end,
                state: Some(b.state),
            });
            t = end;
            if i + 1 < self.blocks.len() {
                let end = t + b.rest_after_s as Micros * US_PER_SEC;
                out.push(Segment {
                    start_us: t,
                    end_us: end,
                    state: None,
                });
                t = end;
            }
        }
        out
    }

    pub fn session_length_us(&self) -> Micros {
        self.segments().last().map_or(0, |s| s.end_us)
    }

    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let raw: RawScript = toml::from_str(text).map_err(|e| {
            let line = e.span().map_or(0, |sp| line_of(text, sp.start));
            ScenarioError::at(line, e.message().to_string())
        })?;
        let mut blocks = Vec::with_capacity(raw.block.len());
        for b in raw.block {
            let state: AttentionState = b
                .state
                .get_ref()
                .parse()
                .map_err(|e: crate::state::UnknownState| {
                    ScenarioError::at(line_of(text, b.state.span().start), e.to_string())
                })?;
            let dur_line = line_of(text, b.duration_s.span().start);
            let duration_s = u32::try_from(*b.duration_s.get_ref())
                .map_err(|_| ScenarioError::at(dur_line, "duration_s must be positive"))?;
            let (rest_after_s, rest_line) = match &b.rest_after_s {
                Some(r) => (
                    u32::try_from(*r.get_ref()).unwrap_or(u32::MAX),
                    line_of(text, r.span().start),
                ),
                None => (REST_S, dur_line),
            };
            let block = ScenarioBlock {
                state,
                duration_s,
                rest_after_s,
            };
            if let Err(m) = check_block(&block) {
                let line = if m.starts_with("rest") { rest_line } else { dur_line };
                return Err(ScenarioError::at(line, m));
            }
            blocks.push(block);
        }
        let script = Self {
            blocks,
            seed: raw.seed.unwrap_or(0),
            jitter_ms: raw.jitter_ms.unwrap_or(0.0),
            eeg_mode: raw.eeg_mode.unwrap_or_default(),
            subject_variability: raw.subject_variability.unwrap_or(0.0),
        };
        script.validate()?;
        Ok(script)
    }

    pub fn to_toml(&self) -> String {
        let mut s = format!(
            "seed = {}\njitter_ms = {:?}\neeg_mode = \"{}\"\nsubject_variability = {:?}\n",
            self.seed,
            self.jitter_ms,
            match self.eeg_mode {
                EegMode::Tones => "tones",
                EegMode::BandNoise => "band_noise",
            },
            self.subject_variability
        );
        for b in &self.blocks {
            s.push_str(&format!(
                "\n[[block]]\nstate = \"{}\"\nduration_s = {}\nrest_after_s = {}\n",
                b.state, b.duration_s, b.rest_after_s
            ));
        }
        s
    }

    pub(crate) fn subject_scale(&self) -> SubjectScale {
        let v = self.subject_variability;
        if v == 0.0 {
            return SubjectScale::IDENTITY;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(4);
        let n = Normal::new(1.0, v).expect("finite variability");
        let mut f = || n.sample(&mut rng).clamp(0.6, 1.4);
        SubjectScale {
            theta: f(),
            alpha: f(),
            beta: f(),
            blink: f(),
            fixation: f(),
            pupil: f(),
            dispersion: f(),
        }
    }

    /// Probe onsets at uniform 30-60 s gaps, with simulated self-reports.
    pub fn probes(&self) -> Vec<ProbeEvent> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(5);
        let segments = self.segments();
        let length = self.session_length_us();
        let mut out = Vec::new();
        let mut t = 0;
        loop {
            let gap = rng.random_range(PROBE_GAP_S.0..=PROBE_GAP_S.1);
            t += (gap * US_PER_SEC as f64) as Micros;
            if t >= length {
                break;
            }
            let state = segments
                .iter()
                .find(|s| s.start_us <= t && t < s.end_us)
                .and_then(|s| s.state);
            let mut probe = ProbeEvent::new(t);
            // simulated participant answers 0.8-3.6 s later; some answers miss the deadline
            let latency = rng.random_range(0.8..3.6);
            let nudge: i8 = match rng.random_range(0..10) {
                0 => -1,
                1 => 1,
                _ => 0,
            };
            let rating = (self_report(state) as i8 + nudge).clamp(1, 5) as u8;
            probe.respond(t + (latency * US_PER_SEC as f64) as Micros, rating);
            out.push(probe);
        }
        out
    }
}

fn self_report(state: Option<AttentionState>) -> u8 {
    match state {
        Some(AttentionState::HighAttention) => 5,
        Some(AttentionState::StableAttention) => 4,
        Some(AttentionState::CognitiveOverload) => 3,
        Some(AttentionState::DroppingAttention) => 2,
        Some(AttentionState::Distraction) => 1,
        None => 3,
    }
}

fn check_block(b: &ScenarioBlock) -> Result<(), String> {
    if !(MIN_BLOCK_S..=MAX_BLOCK_S).contains(&b.duration_s) {
        return Err(format!(
            "duration_s must lie in [{MIN_BLOCK_S}, {MAX_BLOCK_S}], got {}",
            b.duration_s
        ));
    }
    if b.rest_after_s != REST_S {
        return Err(format!("rest_after_s must be {REST_S}, got {}", b.rest_after_s));
    }
    Ok(())
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScript {
    seed: Option<u64>,
    jitter_ms: Option<f64>,
    eeg_mode: Option<EegMode>,
    subject_variability: Option<f64>,
    #[serde(default)]
    block: Vec<RawBlock>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBlock {
    state: toml::Spanned<String>,
    duration_s: toml::Spanned<i64>,
    rest_after_s: Option<toml::Spanned<i64>>,
}

/// One sample handed to the session, with the time it reaches the merger.
#[derive(Debug, Clone, PartialEq)]
pub struct Delivery {
    pub stream: &'static str,
    pub sample: TimestampedSample,
    pub deliver_at_us: Micros,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimEvent {
    Sample(Delivery),
    ProbeOnset(ProbeEvent),
}

impl SimEvent {
    pub fn deliver_at_us(&self) -> Micros {
        match self {
            SimEvent::Sample(d) => d.deliver_at_us,
            SimEvent::ProbeOnset(p) => p.ts_us,
        }
    }
}

const CHUNK_US: Micros = US_PER_SEC;

/// Produces a scripted (or open-ended, steerable) session in delivery order,
/// one second at a time.
#[derive(Debug, Clone)]
pub struct ScenarioPlayer {
    segments: Vec<Segment>,
    length_us: Option<Micros>,
    scale: SubjectScale,
    sim: Simulator,
    live_state: AttentionState,
    steer: Option<AttentionState>,
    probes: Vec<ProbeEvent>,
    next_probe: usize,
    chunk_start_us: Micros,
    jitter_us: Micros,
    jitter_rng: ChaCha8Rng,
    last_delivery: [Micros; 4],
    pending: Vec<(Micros, u64, SimEvent)>,
    seq: u64,
    done: bool,
}

impl ScenarioPlayer {
    pub fn new(script: &ScenarioScript) -> Self {
        let segments = script.segments();
        let scale = script.subject_scale();
        let first = segments
            .first()
            .and_then(|s| s.state)
            .unwrap_or(AttentionState::StableAttention);
        let sim_cfg = SimConfig {
            eeg_mode: script.eeg_mode,
            ..SimConfig::default()
        };
        let mut jitter_rng = ChaCha8Rng::seed_from_u64(script.seed);
        jitter_rng.set_stream(6);
        Self {
            length_us: Some(script.session_length_us()),
            sim: Simulator::new(
                StateSignalProfile::for_state(first).scaled(&scale),
                script.seed,
                sim_cfg,
            ),
            probes: script.probes(),
            segments,
            scale,
            live_state: first,
            steer: None,
            next_probe: 0,
            chunk_start_us: 0,
            jitter_us: (script.jitter_ms * 1000.0).round() as Micros,
            jitter_rng,
            last_delivery: [Micros::MIN; 4],
            pending: Vec::new(),
            seq: 0,
            done: false,
        }
    }

    /// Open-ended session without blocks or markers; the state is set by steering.
    pub fn live(initial: AttentionState, seed: u64, jitter_ms: f64) -> Self {
        let mut script = ScenarioScript::default_script(seed);
        script.jitter_ms = jitter_ms;
        script.subject_variability = 0.0;
        let mut p = Self::new(&script);
        p.segments.clear();
        p.probes.clear();
        p.length_us = None;
        p.live_state = initial;
        p.sim.set_profile(StateSignalProfile::for_state(initial));
        p
    }

    pub fn length_us(&self) -> Option<Micros> {
        self.length_us
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn probes(&self) -> &[ProbeEvent] {
        &self.probes
    }

    /// Overrides the simulated profile from the next second on; `None`
    /// returns control to the script.
    pub fn steer(&mut self, state: Option<AttentionState>) {
        self.steer = state;
    }

    /// Session time up to which samples have been generated.
    pub fn generated_through_us(&self) -> Micros {
        self.chunk_start_us
    }

    /// Next batch in delivery order; `None` once the session is over.
    pub fn next_batch(&mut self) -> Option<Vec<SimEvent>> {
        if self.done {
            return None;
        }
        let start = self.chunk_start_us;
        let finished = self.length_us.is_some_and(|l| start >= l);
        if !finished {
            self.generate_chunk(start);
            self.chunk_start_us = start + CHUNK_US;
        }
        let horizon = if finished {
            Micros::MAX
        } else {
            self.chunk_start_us - self.jitter_us
        };
        self.pending.sort_by_key(|(t, seq, _)| (*t, *seq));
        let split = self.pending.partition_point(|(t, _, _)| *t < horizon);
        let batch: Vec<SimEvent> = self.pending.drain(..split).map(|(_, _, e)| e).collect();
        if finished {
            self.done = true;
        }
        Some(batch)
    }

    fn segment_at(&self, t: Micros) -> Option<&Segment> {
        self.segments.iter().find(|s| s.start_us <= t && t < s.end_us)
    }

    fn queue(&mut self, at: Micros, event: SimEvent) {
        self.seq += 1;
        self.pending.push((at, self.seq, event));
    }

    fn deliver(&mut self, slot: usize, stream: &'static str, sample: TimestampedSample) {
        let mut at = sample.ts_us;
        if self.jitter_us > 0 {
            at += self.jitter_rng.random_range(-self.jitter_us..=self.jitter_us);
        }
        at = at.max(self.last_delivery[slot].saturating_add(1));
        self.last_delivery[slot] = at;
        self.queue(
            at,
            SimEvent::Sample(Delivery {
                stream,
                sample,
                deliver_at_us: at,
            }),
        );
    }

    fn generate_chunk(&mut self, start: Micros) {
        let end = start + CHUNK_US;
        let segment = self.segment_at(start).copied();
        let scripted = match &segment {
            Some(seg) => seg.state,
            None => Some(self.live_state),
        };
        let profile = match (self.steer, scripted) {
            (Some(s), _) => StateSignalProfile::for_state(s).scaled(&self.scale),
            (None, Some(s)) => StateSignalProfile::for_state(s).scaled(&self.scale),
            (None, None) => StateSignalProfile::rest().scaled(&self.scale),
        };
        if *self.sim.profile() != profile {
            self.sim.set_profile(profile);
        }
        if let Some(seg) = segment.filter(|s| s.start_us == start) {
            let code = seg.state.map_or(-1.0, |s| s.index() as f64);
            let marker = TimestampedSample::scalar(start, code);
            self.last_delivery[2] = start;
            self.queue(
                start,
                SimEvent::Sample(Delivery {
                    stream: MARKER_STREAM,
                    sample: marker,
                    deliver_at_us: start,
                }),
            );
        }
        while let Some(p) = self.probes.get(self.next_probe).copied() {
            if p.ts_us >= end {
                break;
            }
            self.next_probe += 1;
            self.queue(p.ts_us, SimEvent::ProbeOnset(p));
            if let (Some(r), Some(at)) = (p.response, p.response_ts_us) {
                self.queue(
                    at,
                    SimEvent::Sample(Delivery {
                        stream: PROBE_STREAM,
                        sample: TimestampedSample::scalar(at, r as f64),
                        deliver_at_us: at,
                    }),
                );
            }
        }
        for (kind, sample) in self.sim.advance_to(end) {
            match kind {
                StreamKind::Eeg => self.deliver(0, EEG_STREAM, sample),
                _ => self.deliver(1, EYE_STREAM, sample),
            }
        }
    }
}

impl Iterator for ScenarioPlayer {
    type Item = Vec<SimEvent>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_batch()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_session_is_420_seconds() {
        let s = ScenarioScript::default_script(1);
        assert_eq!(s.session_length_us(), 420 * US_PER_SEC);
        assert_eq!(s.segments().len(), 9);
    }

    #[test]
    fn probe_count_bounds() {
        // 420 s with 30-60 s gaps fits at least 7 and at most 14 onsets
        for seed in 0..300 {
            let n = ScenarioScript::default_script(seed).probes().len();
            assert!((7..=14).contains(&n), "seed {seed}: {n} probes");
        }
    }

    #[test]
    fn probe_responses_respect_deadline() {
        let mut late = 0;
        for seed in 0..50 {
            for p in ScenarioScript::default_script(seed).probes() {
                assert_eq!(p.deadline_us, p.ts_us + 3 * US_PER_SEC);
                match (p.response, p.response_ts_us) {
                    (Some(r), Some(at)) => {
                        assert!((1..=5).contains(&r));
                        assert!(at <= p.deadline_us);
                    }
                    (None, None) => late += 1,
                    other => panic!("inconsistent probe {other:?}"),
                }
            }
        }
        assert!(late > 0, "some simulated answers should miss the deadline");
    }

    #[test]
    fn late_response_is_discarded() {
        let mut p = ProbeEvent::new(1_000_000);
        assert!(!p.respond(4_000_001, 3));
        assert_eq!(p.response, None);
        assert!(p.respond(4_000_000, 3));
        assert_eq!(p.response, Some(3));
    }

    #[test]
    fn parse_round_trips() {
        let s = ScenarioScript::default_script(42).shuffled();
        let back = ScenarioScript::parse(&s.to_toml()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn parse_reports_line_numbers() {
        let text = "seed = 1\n\n[[block]]\nstate = \"HighAttention\"\nduration_s = 30\n";
        let err = ScenarioScript::parse(text).unwrap_err();
        assert_eq!(err.line, 5, "{err}");

        let text = "seed = 1\n[[block]]\nstate = \"Sleepy\"\nduration_s = 60\n";
        assert_eq!(ScenarioScript::parse(text).unwrap_err().line, 3);

        let text = "seed = 1\n[[block]\n";
        assert_eq!(ScenarioScript::parse(text).unwrap_err().line, 2);

        let text = "seed = 1\n[[block]]\nstate = \"Distraction\"\nduration_s = 60\nrest_after_s = 10\n";
        assert_eq!(ScenarioScript::parse(text).unwrap_err().line, 5);

        assert!(ScenarioScript::parse("seed = 1\n").is_err());
    }

    #[test]
    fn player_is_deterministic_and_ordered() {
        let mut script = ScenarioScript::default_script(3);
        script.blocks.truncate(1);
        let a: Vec<_> = ScenarioPlayer::new(&script).flatten().collect();
        let b: Vec<_> = ScenarioPlayer::new(&script).flatten().collect();
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0].deliver_at_us() <= w[1].deliver_at_us()));
        let count = |name: &str| {
            a.iter()
                .filter(|e| matches!(e, SimEvent::Sample(d) if d.stream == name))
                .count()
        };
        assert_eq!(count(EEG_STREAM), 60 * 250);
        assert_eq!(count(EYE_STREAM), 60 * 60);
        assert_eq!(count(MARKER_STREAM), 1);
    }

    #[test]
    fn per_stream_timestamps_increase_under_jitter() {
        let mut script = ScenarioScript::default_script(8);
        script.blocks.truncate(1);
        script.jitter_ms = 2.0;
        let mut last: std::collections::HashMap<&str, Micros> = Default::default();
        for e in ScenarioPlayer::new(&script).flatten() {
            if let SimEvent::Sample(d) = e {
                let prev = last.insert(d.stream, d.sample.ts_us);
                assert!(prev.is_none_or(|p| p < d.sample.ts_us));
            }
        }
    }
}
