//! Seedable stand-in for a participant: synthetic EEG and eye streams shaped
//! per attention state, scripted task blocks, and thought-probe events.

mod generator;
mod profile;
mod scenario;

pub use generator::{
    blink_schedule, generate_eeg, generate_eye, EegMode, SimConfig, Simulator, BLINK_ARTIFACT_US,
    BLINK_ARTIFACT_UV, BLINK_EYE_US, TONE_HZ,
};
pub use profile::{ProfileError, StateSignalProfile, MIN_DWELL_MS};
pub use scenario::{
    Delivery, ProbeEvent, ScenarioBlock, ScenarioError, ScenarioPlayer, ScenarioScript, Segment,
    SimEvent, EEG_STREAM, EYE_STREAM, MARKER_STREAM, PROBE_DEADLINE_US, PROBE_STREAM,
};
