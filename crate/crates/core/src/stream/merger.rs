use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{
    eye_channel, Micros, RingBuffer, StreamDescriptor, StreamError, StreamKind, TimestampedSample,
    EYE_LEAD_IN_US, HOP_US, STALL_US, WINDOW_US,
};
use crate::state::AttentionState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamHandle(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MergerConfig {
    pub window_us: Micros,
    pub hop_us: Micros,
    pub stall_us: Micros,
    /// Session clock value at which the first window starts.
    pub origin_us: Micros,
}

impl Default for MergerConfig {
    fn default() -> Self {
        Self {
            window_us: WINDOW_US,
            hop_us: HOP_US,
            stall_us: STALL_US,
            origin_us: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeResponse {
    pub ts_us: Micros,
    pub rating: u8,
}

/// Five seconds of co-registered EEG and eye samples.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedWindow {
    pub start_us: Micros,
    pub end_us: Micros,
    pub eeg: Vec<TimestampedSample>,
    pub eye: Vec<TimestampedSample>,
    /// Eye samples from just before `start_us`, so events already in progress
    /// at the window edge can be recognised.
    pub eye_lead_in: Vec<TimestampedSample>,
    /// Block label covering at least half of the window, if any.
    pub label: Option<AttentionState>,
    pub probe_responses: Vec<ProbeResponse>,
    pub eeg_rate: f64,
    pub eye_rate: f64,
}

impl AlignedWindow {
    pub fn duration_us(&self) -> Micros {
        self.end_us - self.start_us
    }

    /// Largest distance between the window start and the first sample of either stream.
    pub fn boundary_skew_us(&self) -> Micros {
        let first = |v: &[TimestampedSample]| v.first().map(|s| s.ts_us - self.start_us);
        first(&self.eeg)
            .into_iter()
            .chain(first(&self.eye))
            .map(i64::abs)
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WindowPoll {
    Ready(AlignedWindow),
    /// Cold start: the buffers do not yet cover the requested interval.
    NotReady,
}

#[derive(Debug, Clone)]
struct Slot {
    desc: StreamDescriptor,
    period_us: Micros,
    buffer: RingBuffer,
    // samples at or past the pending window end, released one hop at a time
    staged: VecDeque<TimestampedSample>,
    last_ts: Option<Micros>,
    pushed: u64,
    dropped: u64,
}

impl Slot {
    fn passed(&self, at_us: Micros) -> bool {
        self.last_ts.is_some_and(|t| t + self.period_us >= at_us)
    }

    fn earliest(&self) -> Option<Micros> {
        self.buffer
            .oldest()
            .or_else(|| self.staged.front())
            .map(|s| s.ts_us)
    }

    fn collect(&self, start: Micros, end: Micros) -> Vec<TimestampedSample> {
        let staged_first = self.staged.partition_point(|s| s.ts_us < start);
        self.buffer
            .range(start, end)
            .chain(
                self.staged
                    .range(staged_first..)
                    .take_while(|s| s.ts_us < end),
            )
            .cloned()
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamStats {
    pub pushed: u64,
    pub dropped: u64,
    pub buffered: usize,
    pub staged: usize,
}

/// Serializes pushes from every stream into one windowing context.
#[derive(Debug, Clone)]
pub struct Merger {
    cfg: MergerConfig,
    slots: Vec<Slot>,
    eeg: Option<usize>,
    eye: Option<usize>,
    next_end_us: Micros,
    clock_us: Micros,
    markers: Vec<(Micros, Option<AttentionState>)>,
    probes: VecDeque<ProbeResponse>,
}

impl Default for Merger {
    fn default() -> Self {
        Self::new(MergerConfig::default())
    }
}

impl Merger {
    pub fn new(cfg: MergerConfig) -> Self {
        Self {
            cfg,
            slots: Vec::new(),
            eeg: None,
            eye: None,
            next_end_us: cfg.origin_us + cfg.window_us,
            clock_us: cfg.origin_us,
            markers: Vec::new(),
            probes: VecDeque::new(),
        }
    }

    pub fn config(&self) -> &MergerConfig {
        &self.cfg
    }

    pub fn open_stream(&mut self, desc: StreamDescriptor) -> Result<StreamHandle, StreamError> {
        desc.validate()?;
        if self.slots.iter().any(|s| s.desc.name == desc.name) {
            return Err(StreamError::DuplicateStream(desc.name));
        }
        let idx = self.slots.len();
        match desc.kind {
            StreamKind::Eeg if self.eeg.is_some() => {
                return Err(StreamError::DuplicateKind(StreamKind::Eeg))
            }
            StreamKind::Eye if self.eye.is_some() => {
                return Err(StreamError::DuplicateKind(StreamKind::Eye))
            }
            StreamKind::Eeg => self.eeg = Some(idx),
            StreamKind::Eye => self.eye = Some(idx),
            StreamKind::Marker | StreamKind::Probe => {}
        }
        self.slots.push(Slot {
            period_us: desc.period_us().unwrap_or(0),
            buffer: RingBuffer::with_capacity_us(desc.clone(), self.cfg.window_us),
            staged: VecDeque::new(),
            last_ts: None,
            pushed: 0,
            dropped: 0,
            desc,
        });
        Ok(StreamHandle(idx))
    }

    pub fn handle(&self, name: &str) -> Option<StreamHandle> {
        self.slots
            .iter()
            .position(|s| s.desc.name == name)
            .map(StreamHandle)
    }

    pub fn descriptor(&self, handle: StreamHandle) -> Option<&StreamDescriptor> {
        self.slots.get(handle.0).map(|s| &s.desc)
    }

    pub fn stats(&self, handle: StreamHandle) -> Option<StreamStats> {
        self.slots.get(handle.0).map(|s| StreamStats {
            pushed: s.pushed,
            dropped: s.dropped,
            buffered: s.buffer.len(),
            staged: s.staged.len(),
        })
    }

    pub fn buffer(&self, handle: StreamHandle) -> Option<&RingBuffer> {
        self.slots.get(handle.0).map(|s| &s.buffer)
    }

    /// End of the next window the scheduler will cut.
    pub fn next_window_end(&self) -> Micros {
        self.next_end_us
    }

    /// Latest time known to the merger, from samples or [`Merger::advance_clock`].
    pub fn clock_us(&self) -> Micros {
        self.clock_us
    }

    /// Lets a wall-clock ticker declare that time has moved on, so a source
    /// that stopped sending entirely is still reported as stalled.
    pub fn advance_clock(&mut self, now_us: Micros) {
        self.clock_us = self.clock_us.max(now_us);
    }

    pub fn push(
        &mut self,
        handle: StreamHandle,
        sample: TimestampedSample,
    ) -> Result<(), StreamError> {
        let next_end = self.next_end_us;
        let slot = self
            .slots
            .get_mut(handle.0)
            .ok_or(StreamError::UnknownHandle)?;
        if let Some(last) = slot.last_ts {
            if sample.ts_us <= last {
                slot.dropped += 1;
                return Err(StreamError::OutOfOrderSample {
                    stream: slot.desc.name.clone(),
                    ts_us: sample.ts_us,
                    last_us: last,
                });
            }
        }
        if let Err(reason) = check_sample(&slot.desc, &sample) {
            slot.dropped += 1;
            return Err(StreamError::MalformedSample {
                stream: slot.desc.name.clone(),
                reason,
            });
        }
        slot.last_ts = Some(sample.ts_us);
        slot.pushed += 1;
        self.clock_us = self.clock_us.max(sample.ts_us);
        match slot.desc.kind {
            StreamKind::Eeg | StreamKind::Eye => {
                if sample.ts_us < next_end {
                    slot.buffer.push(sample);
                } else {
                    slot.staged.push_back(sample);
                }
            }
            StreamKind::Marker => {
                let code = sample.values[0] as i64;
                let label = usize::try_from(code)
                    .ok()
                    .and_then(AttentionState::from_index);
                self.markers.push((sample.ts_us, label));
            }
            StreamKind::Probe => self.probes.push_back(ProbeResponse {
                ts_us: sample.ts_us,
                rating: sample.values[0] as u8,
            }),
        }
        Ok(())
    }

    /// Cuts the window `[at_us - window, at_us)` from both continuous streams.
    pub fn extract_window(&self, at_us: Micros) -> Result<WindowPoll, StreamError> {
        let (Some(eeg), Some(eye)) = (self.eeg, self.eye) else {
            return Ok(WindowPoll::NotReady);
        };
        let start = at_us - self.cfg.window_us;
        let pair = [&self.slots[eeg], &self.slots[eye]];

        if pair.iter().all(|s| s.passed(at_us)) {
            let spans = pair
                .iter()
                .all(|s| s.earliest().is_some_and(|t| t < start + s.period_us));
            if !spans {
                return Ok(WindowPoll::NotReady);
            }
            let probe_first = self.probes.partition_point(|p| p.ts_us < start);
            return Ok(WindowPoll::Ready(AlignedWindow {
                start_us: start,
                end_us: at_us,
                eeg: pair[0].collect(start, at_us),
                eye: pair[1].collect(start, at_us),
                eye_lead_in: pair[1].collect(start - EYE_LEAD_IN_US, start),
                label: self.label_for(start, at_us),
                probe_responses: self
                    .probes
                    .range(probe_first..)
                    .take_while(|p| p.ts_us < at_us)
                    .copied()
                    .collect(),
                eeg_rate: pair[0].desc.nominal_rate,
                eye_rate: pair[1].desc.nominal_rate,
            }));
        }

        let leading = pair
            .iter()
            .filter_map(|s| s.last_ts.map(|t| t + s.period_us))
            .fold(self.clock_us, Micros::max);
        if leading >= at_us + self.cfg.stall_us {
            if let Some(lagging) = pair.iter().find(|s| !s.passed(at_us)) {
                return Err(StreamError::StreamStalled {
                    stream: lagging.desc.name.clone(),
                    window_end_us: at_us,
                });
            }
        }
        Ok(WindowPoll::NotReady)
    }

    /// Emits every window whose end both streams have reached, in order.
    /// A stalled window is reported and skipped; cold-start windows are skipped silently.
    pub fn poll(&mut self) -> Vec<Result<AlignedWindow, StreamError>> {
        let mut out = Vec::new();
        loop {
            let end = self.next_end_us;
            match self.extract_window(end) {
                Ok(WindowPoll::Ready(w)) => {
                    out.push(Ok(w));
                    self.advance();
                }
                Ok(WindowPoll::NotReady) => {
                    let both_passed = match (self.eeg, self.eye) {
                        (Some(a), Some(b)) => {
                            self.slots[a].passed(end) && self.slots[b].passed(end)
                        }
                        _ => false,
                    };
                    if both_passed {
                        self.advance();
                    } else {
                        break;
                    }
                }
                Err(e) => {
                    out.push(Err(e));
                    self.advance();
                }
            }
        }
        out
    }

    fn advance(&mut self) {
        self.next_end_us += self.cfg.hop_us;
        let next_end = self.next_end_us;
        for slot in &mut self.slots {
            while slot.staged.front().is_some_and(|s| s.ts_us < next_end) {
                let s = slot.staged.pop_front().expect("front checked");
                slot.buffer.push(s);
            }
        }
        let next_start = next_end - self.cfg.window_us;
        // keep the marker in force at next_start plus everything after it
        let keep_from = self
            .markers
            .partition_point(|(t, _)| *t <= next_start)
            .saturating_sub(1);
        self.markers.drain(..keep_from);
        while self.probes.front().is_some_and(|p| p.ts_us < next_start) {
            self.probes.pop_front();
        }
    }

    /// Majority label over `[start, end)`; a rest segment votes for `None`.
    /// An exact tie goes to the later segment.
    fn label_for(&self, start: Micros, end: Micros) -> Option<AttentionState> {
        let first_inside = self.markers.partition_point(|(t, _)| *t <= start);
        let mut current = first_inside
            .checked_sub(1)
            .and_then(|i| self.markers[i].1);
        let mut seg_start = start;
        // (label, covered, latest segment start)
        let mut votes: Vec<(Option<AttentionState>, Micros, Micros)> = Vec::new();
        let mut tally = |label, from: Micros, to: Micros| {
            if to <= from {
                return;
            }
            match votes.iter_mut().find(|(l, _, _)| *l == label) {
                Some(v) => {
                    v.1 += to - from;
                    v.2 = from;
                }
                None => votes.push((label, to - from, from)),
            }
        };
        for &(t, label) in self.markers[first_inside..]
            .iter()
            .take_while(|(t, _)| *t < end)
        {
            tally(current, seg_start, t);
            current = label;
            seg_start = t;
        }
        tally(current, seg_start, end);

        let window = end - start;
        votes
            .into_iter()
            .filter(|(_, covered, _)| covered * 2 >= window)
            .max_by_key(|(_, covered, latest)| (*covered, *latest))
            .and_then(|(label, _, _)| label)
    }
}

fn check_sample(desc: &StreamDescriptor, sample: &TimestampedSample) -> Result<(), String> {
    if sample.values.len() != desc.channel_count {
        return Err(format!(
            "expected {} channels, got {}",
            desc.channel_count,
            sample.values.len()
        ));
    }
    let flag = |i: usize| {
        let v = sample.values[i];
        if v == 0.0 || v == 1.0 {
            Ok(())
        } else {
            Err(format!("flag channel {i} must be 0 or 1, got {v}"))
        }
    };
    match desc.kind {
        StreamKind::Eye => {
            flag(eye_channel::VALIDITY)?;
            flag(eye_channel::BLINK)?;
        }
        StreamKind::Marker => {
            let v = sample.values[0];
            if !(v.fract() == 0.0 && (-1.0..=4.0).contains(&v)) {
                return Err(format!("marker code must be an integer in -1..=4, got {v}"));
            }
        }
        StreamKind::Probe => {
            let v = sample.values[0];
            if !(v.fract() == 0.0 && (1.0..=5.0).contains(&v)) {
                return Err(format!("probe rating must be 1..=5, got {v}"));
            }
        }
        StreamKind::Eeg => {}
    }
    Ok(())
}
