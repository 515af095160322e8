use serde::{Deserialize, Serialize};

use crate::state::AttentionState;

/// Parameters that shape the synthetic EEG and eye streams for one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateSignalProfile {
    /// Peak amplitude of the 6 Hz component, µV.
    pub theta_amp: f64,
    /// Peak amplitude of the 10 Hz component, µV.
    pub alpha_amp: f64,
    /// Peak amplitude of the 20 Hz component, µV.
    pub beta_amp: f64,
    /// Standard deviation of additive white noise, µV.
    pub noise_sigma: f64,
    pub blink_rate_hz: f64,
    /// Upper bound on the gaze-jump rate; 0 freezes the gaze.
    pub saccade_rate_hz: f64,
    /// Lower bound on the mean fixation dwell.
    pub fixation_mean_ms: f64,
    pub pupil_mean_mm: f64,
    pub pupil_sigma_mm: f64,
    /// Per-axis standard deviation of fixation targets around screen centre,
    /// in normalized screen units.
    pub gaze_dispersion_scale: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid signal profile: {0}")]
pub struct ProfileError(pub String);

impl StateSignalProfile {
    pub fn validate(&self) -> Result<(), ProfileError> {
        let fields = [
            ("theta_amp", self.theta_amp),
            ("alpha_amp", self.alpha_amp),
            ("beta_amp", self.beta_amp),
            ("noise_sigma", self.noise_sigma),
            ("blink_rate_hz", self.blink_rate_hz),
            ("saccade_rate_hz", self.saccade_rate_hz),
            ("fixation_mean_ms", self.fixation_mean_ms),
            ("pupil_sigma_mm", self.pupil_sigma_mm),
            ("gaze_dispersion_scale", self.gaze_dispersion_scale),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ProfileError(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(2.0..=8.0).contains(&self.pupil_mean_mm) {
            return Err(ProfileError(format!(
                "pupil_mean_mm must lie in [2, 8], got {}",
                self.pupil_mean_mm
            )));
        }
        Ok(())
    }

    /// A silent profile: no oscillations, noise, blinks or eye movement.
    pub fn quiet() -> Self {
        Self {
            theta_amp: 0.0,
            alpha_amp: 0.0,
            beta_amp: 0.0,
            noise_sigma: 0.0,
            blink_rate_hz: 0.0,
            saccade_rate_hz: 0.0,
            fixation_mean_ms: 300.0,
            pupil_mean_mm: 4.0,
            pupil_sigma_mm: 0.0,
            gaze_dispersion_scale: 0.0,
        }
    }

    pub fn for_state(state: AttentionState) -> Self {
        let base = Self {
            noise_sigma: 0.5,
            pupil_sigma_mm: 0.1,
            ..Self::quiet()
        };
        match state {
            // beta-dominant, long fixations, tight gaze
            AttentionState::HighAttention => Self {
                theta_amp: 0.5,
                alpha_amp: 0.5,
                beta_amp: 2.0,
                blink_rate_hz: 0.2,
                saccade_rate_hz: 2.5,
                fixation_mean_ms: 400.0,
                pupil_mean_mm: 4.2,
                gaze_dispersion_scale: 0.08,
                ..base
            },
            AttentionState::StableAttention => Self {
                theta_amp: 0.5,
                alpha_amp: 1.0,
                beta_amp: 1.0,
                blink_rate_hz: 0.3,
                saccade_rate_hz: 2.5,
                fixation_mean_ms: 330.0,
                pupil_mean_mm: 3.8,
                gaze_dispersion_scale: 0.12,
                ..base
            },
            // alpha/theta rising, short fixations
            AttentionState::DroppingAttention => Self {
                theta_amp: 1.0,
                alpha_amp: 1.5,
                beta_amp: 0.5,
                blink_rate_hz: 0.45,
                saccade_rate_hz: 4.0,
                fixation_mean_ms: 250.0,
                pupil_mean_mm: 3.5,
                gaze_dispersion_scale: 0.1,
                ..base
            },
            // theta-dominant, dilated and unstable pupil
            AttentionState::CognitiveOverload => Self {
                theta_amp: 2.0,
                alpha_amp: 0.75,
                beta_amp: 1.0,
                blink_rate_hz: 0.25,
                saccade_rate_hz: 2.5,
                fixation_mean_ms: 330.0,
                pupil_mean_mm: 5.0,
                pupil_sigma_mm: 0.3,
                gaze_dispersion_scale: 0.1,
                ..base
            },
            // scanning gaze, frequent blinks
            AttentionState::Distraction => Self {
                theta_amp: 0.75,
                alpha_amp: 1.0,
                beta_amp: 1.0,
                blink_rate_hz: 0.8,
                saccade_rate_hz: 3.0,
                fixation_mean_ms: 250.0,
                pupil_mean_mm: 3.8,
                gaze_dispersion_scale: 0.25,
                ..base
            },
        }
    }

    /// Between-block rest: relaxed alpha, slow gaze.
    pub fn rest() -> Self {
        Self {
            theta_amp: 0.5,
            alpha_amp: 2.0,
            beta_amp: 0.5,
            noise_sigma: 0.5,
            blink_rate_hz: 0.3,
            saccade_rate_hz: 1.5,
            fixation_mean_ms: 600.0,
            pupil_mean_mm: 3.5,
            pupil_sigma_mm: 0.1,
            gaze_dispersion_scale: 0.05,
        }
    }

    /// Mean fixation dwell the eye generator actually uses: the slower of the
    /// two bounds.
    pub fn effective_dwell_ms(&self, eye_period_ms: f64) -> f64 {
        let from_rate = if self.saccade_rate_hz > 0.0 {
            1000.0 / self.saccade_rate_hz - eye_period_ms
        } else {
            f64::INFINITY
        };
        self.fixation_mean_ms.max(from_rate).max(MIN_DWELL_MS + 20.0)
    }

    /// Multiplies amplitudes and rates by per-subject factors.
    pub(crate) fn scaled(&self, s: &SubjectScale) -> Self {
        Self {
            theta_amp: self.theta_amp * s.theta,
            alpha_amp: self.alpha_amp * s.alpha,
            beta_amp: self.beta_amp * s.beta,
            blink_rate_hz: self.blink_rate_hz * s.blink,
            fixation_mean_ms: self.fixation_mean_ms * s.fixation,
            pupil_mean_mm: (self.pupil_mean_mm * s.pupil).clamp(2.0, 8.0),
            gaze_dispersion_scale: self.gaze_dispersion_scale * s.dispersion,
            ..*self
        }
    }
}

/// Shortest fixation the generator produces; matches the detector's minimum.
pub const MIN_DWELL_MS: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SubjectScale {
    pub theta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub blink: f64,
    pub fixation: f64,
    pub pupil: f64,
    pub dispersion: f64,
}

impl SubjectScale {
    pub const IDENTITY: Self = Self {
        theta: 1.0,
        alpha: 1.0,
        beta: 1.0,
        blink: 1.0,
        fixation: 1.0,
        pupil: 1.0,
        dispersion: 1.0,
    };
}
