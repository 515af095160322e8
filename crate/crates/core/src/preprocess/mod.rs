//! Per-window EEG cleaning and eye-sample screening.
//!
//! EEG: blink spans are bridged by linear interpolation, then the window mean
//! is removed (the high-pass stage) and a 48 Hz linear-phase FIR is applied
//! with its delay compensated. Eye: samples that are flagged invalid, flagged
//! as blinks, or carry non-finite values are dropped.

mod filter;

pub use filter::{LowPassFir, FIR_TAPS, LOWPASS_HZ};

use crate::stream::{eye_channel, AlignedWindow, Micros, TimestampedSample, WINDOW_US};

/// Fewest EEG samples a window may hold (5 s at 250 Hz, less clock tolerance).
pub const MIN_EEG_SAMPLES: usize = 1248;
pub const BLINK_PRE_US: Micros = 50_000;
pub const BLINK_POST_US: Micros = 300_000;
/// Windows rejecting more than this share of eye samples are flagged.
pub const LOW_QUALITY_REJECT_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PreprocessError {
    #[error("window underfull: {got} EEG samples, need at least {need}")]
    WindowUnderfull { got: usize, need: usize },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScreenedEye {
    pub valid: Vec<TimestampedSample>,
    pub rejected: usize,
    /// Rejected because the blink flag was set.
    pub rejected_blink: usize,
    /// Fraction of the window's nominal sample count that survived, in [0, 1].
    pub quality: f64,
    pub low_quality: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CleanWindow {
    pub start_us: Micros,
    pub end_us: Micros,
    pub eeg_ts: Vec<Micros>,
    pub eeg_filtered: Vec<f64>,
    pub eeg_rate: f64,
    pub eye_valid: Vec<TimestampedSample>,
    pub eye_rate: f64,
    pub rejected_eye_count: usize,
    pub rejected_blink_count: usize,
    pub artifact_spans: Vec<(Micros, Micros)>,
    /// Blink onsets inside the window, taken before screening.
    pub blink_onsets: Vec<Micros>,
    pub quality: f64,
    pub low_quality: bool,
}

/// Mean removal followed by the low-pass. Needs at least [`MIN_EEG_SAMPLES`].
pub fn filter_eeg(fir: &LowPassFir, x: &[f64]) -> Result<Vec<f64>, PreprocessError> {
    if x.len() < MIN_EEG_SAMPLES {
        return Err(PreprocessError::WindowUnderfull {
            got: x.len(),
            need: MIN_EEG_SAMPLES,
        });
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    Ok(fir.apply(&centered))
}

/// Rising edges of the blink flag. A blink already in progress at the first
/// sample counts as starting there unless `lead_in` shows where it began.
pub fn blink_onsets(lead_in: &[TimestampedSample], eye: &[TimestampedSample]) -> Vec<Micros> {
    let flagged = |s: &TimestampedSample| s.values.get(eye_channel::BLINK) == Some(&1.0);
    let mut prev = false;
    let mut out = Vec::new();
    let mut pending_lead: Option<Micros> = None;
    for s in lead_in {
        let f = flagged(s);
        if f && !prev {
            pending_lead = Some(s.ts_us);
        }
        if !f {
            pending_lead = None;
        }
        prev = f;
    }
    for (i, s) in eye.iter().enumerate() {
        let f = flagged(s);
        if f && !prev {
            out.push(s.ts_us);
        } else if f && i == 0 {
            // started before the window; report the true onset
            out.extend(pending_lead);
        }
        prev = f;
    }
    out
}

/// Replaces EEG samples inside `[onset - 50 ms, onset + 300 ms]` (clipped to
/// `[start_us, end_us)`) by a straight line between the nearest untouched
/// neighbours. Overlapping spans are merged. Samples outside the returned
/// spans are not modified.
pub fn remove_blink_artifacts(
    ts: &[Micros],
    eeg: &[f64],
    onsets: &[Micros],
    start_us: Micros,
    end_us: Micros,
) -> (Vec<f64>, Vec<(Micros, Micros)>) {
    debug_assert_eq!(ts.len(), eeg.len());
    let mut spans: Vec<(Micros, Micros)> = onsets
        .iter()
        .map(|&b| {
            (
                (b - BLINK_PRE_US).max(start_us),
                (b + BLINK_POST_US).min(end_us),
            )
        })
        .filter(|(a, b)| a < b)
        .collect();
    spans.sort_unstable();
    let mut merged: Vec<(Micros, Micros)> = Vec::with_capacity(spans.len());
    for (a, b) in spans {
        match merged.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => merged.push((a, b)),
        }
    }

    let mut out = eeg.to_vec();
    for &(a, b) in &merged {
        let lo = ts.partition_point(|&t| t < a);
        let hi = ts.partition_point(|&t| t <= b);
        if lo >= hi {
            continue;
        }
        let left = lo.checked_sub(1).map(|i| (ts[i] as f64, eeg[i]));
        let right = (hi < ts.len()).then(|| (ts[hi] as f64, eeg[hi]));
        let (l, r) = match (left, right) {
            (Some(l), Some(r)) => (l, r),
            (Some(l), None) => (l, (l.0 + 1.0, l.1)),
            (None, Some(r)) => ((r.0 - 1.0, r.1), r),
            (None, None) => ((0.0, 0.0), (1.0, 0.0)),
        };
        let slope = (r.1 - l.1) / (r.0 - l.0);
        for i in lo..hi {
            out[i] = l.1 + slope * (ts[i] as f64 - l.0);
        }
    }
    (out, merged)
}

/// Drops invalid, blink, and non-finite samples, preserving order.
pub fn screen_eye(eye: &[TimestampedSample], eye_rate: f64) -> ScreenedEye {
    let mut valid = Vec::with_capacity(eye.len());
    let mut rejected_blink = 0;
    for s in eye {
        let blink = s.values.get(eye_channel::BLINK) == Some(&1.0);
        let ok = s.values.len() > eye_channel::BLINK
            && s.values.iter().all(|v| v.is_finite())
            && s.values[eye_channel::VALIDITY] == 1.0
            && !blink;
        if ok {
            valid.push(s.clone());
        } else if blink {
            rejected_blink += 1;
        }
    }
    let rejected = eye.len() - valid.len();
    let expected = (WINDOW_US as f64 * eye_rate / 1e6).round().max(1.0);
    let quality = (valid.len() as f64 / expected).min(1.0);
    let low_quality = eye.is_empty()
        || rejected as f64 > LOW_QUALITY_REJECT_FRACTION * eye.len() as f64;
    ScreenedEye {
        valid,
        rejected,
        rejected_blink,
        quality,
        low_quality,
    }
}

/// Full cleaning of one aligned window.
pub fn clean_window(fir: &LowPassFir, w: &AlignedWindow) -> Result<CleanWindow, PreprocessError> {
    if w.eeg.len() < MIN_EEG_SAMPLES {
        return Err(PreprocessError::WindowUnderfull {
            got: w.eeg.len(),
            need: MIN_EEG_SAMPLES,
        });
    }
    let ts: Vec<Micros> = w.eeg.iter().map(|s| s.ts_us).collect();
    let raw: Vec<f64> = w.eeg.iter().map(|s| s.values[0]).collect();
    let onsets: Vec<Micros> = blink_onsets(&w.eye_lead_in, &w.eye)
        .into_iter()
        .filter(|t| *t >= w.start_us)
        .collect();
    // blinks that began before the window can still leave artifact inside it
    let all_onsets: Vec<Micros> = blink_onsets(&[], &w.eye_lead_in)
        .into_iter()
        .chain(onsets.iter().copied())
        .collect();
    let (bridged, spans) = remove_blink_artifacts(&ts, &raw, &all_onsets, w.start_us, w.end_us);
    let eeg_filtered = filter_eeg(fir, &bridged)?;
    let screened = screen_eye(&w.eye, w.eye_rate);
    Ok(CleanWindow {
        start_us: w.start_us,
        end_us: w.end_us,
        eeg_ts: ts,
        eeg_filtered,
        eeg_rate: w.eeg_rate,
        eye_valid: screened.valid,
        eye_rate: w.eye_rate,
        rejected_eye_count: screened.rejected,
        rejected_blink_count: screened.rejected_blink,
        artifact_spans: spans,
        blink_onsets: onsets,
        quality: screened.quality,
        low_quality: screened.low_quality,
    })
}
