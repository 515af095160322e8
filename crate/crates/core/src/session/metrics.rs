use serde::{Deserialize, Serialize};

use super::events::{Event, EventKind};
use crate::adapt::Role;
use crate::stream::{Micros, US_PER_SEC, WINDOW_US};

/// Phrases that mark a user turn as asking for clarification.
pub const CLARIFICATION_CUES: &[&str] = &[
    "clarify",
    "what do you mean",
    "don't understand",
    "do not understand",
    "didn't understand",
    "explain again",
    "rephrase",
    "confused",
    "simpler",
    "not clear",
];

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EngagementMetrics {
    pub time_on_task_s: f64,
    pub followup_prompt_count: u64,
    pub clarification_count: u64,
    pub fixation_count: u64,
    pub mean_fixation_ms: f64,
}

pub fn is_clarification(text: &str) -> bool {
    let t = text.to_lowercase().replace('\u{2019}', "'");
    CLARIFICATION_CUES.iter().any(|c| t.contains(c))
}

/// Recomputes the metrics from a log. `now_us` closes the last segment for a
/// session still running; a closed session's `SessionEnd` takes precedence.
///
/// Gaze metrics use the non-overlapping windows (ends on whole multiples of
/// the window length) so each fixation is counted once.
pub fn compute_metrics<'a>(
    events: impl IntoIterator<Item = &'a Event>,
    now_us: Micros,
) -> EngagementMetrics {
    let mut m = EngagementMetrics::default();
    let mut end_us = now_us;
    let mut segments: Vec<(Micros, bool)> = Vec::new();
    let mut replied = false;
    let mut fix_ms_total = 0.0;
    for e in events {
        match &e.kind {
            EventKind::Segment { start_us, state } => {
                segments.push((*start_us, state.is_some()));
                replied = false;
            }
            EventKind::Chat { turn: t } if t.role == Role::Assistant && !t.failed => replied = true,
            EventKind::Chat { turn: t } if t.role == Role::User => {
                if replied {
                    m.followup_prompt_count += 1;
                }
                if is_clarification(&t.content) {
                    m.clarification_count += 1;
                }
            }
            EventKind::Window(w) if w.end_us % WINDOW_US == 0 => {
                m.fixation_count += w.fixation_count as u64;
                fix_ms_total += w.fixation_mean_ms * w.fixation_count as f64;
            }
            EventKind::SessionEnd { clock_us } => end_us = *clock_us,
            _ => {}
        }
    }
    let on_task_us: Micros = if segments.is_empty() {
        end_us.max(0)
    } else {
        segments
            .iter()
            .enumerate()
            .filter(|(_, (_, task))| *task)
            .map(|(i, (start, _))| {
                let stop = segments.get(i + 1).map_or(end_us, |s| s.0);
                (stop.min(end_us) - start).max(0)
            })
            .sum()
    };
    m.time_on_task_s = on_task_us as f64 / US_PER_SEC as f64;
    if m.fixation_count > 0 {
        m.mean_fixation_ms = fix_ms_total / m.fixation_count as f64;
    }
    m
}
