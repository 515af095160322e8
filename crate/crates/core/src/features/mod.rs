//! Spectral EEG features, eye-movement metrics, and their fusion into the
//! fixed-order [`FeatureVector`] the classifier consumes.

mod eye;
mod spectral;

pub use eye::{
    detect_fixations_saccades, eye_features, gaze_dispersion, pupil_variability, EyeFeatures,
    Fixation, IvtConfig, MissingFeatures, Saccade, ScreenGeometry,
};
pub use spectral::{
    band_powers, engagement_index, BandPower, Engagement, Welch, ALPHA_HZ, BETA_HZ,
    ENGAGEMENT_CAP, ENGAGEMENT_EPS, THETA_HZ,
};

use serde::{Deserialize, Serialize};

use crate::preprocess::CleanWindow;

/// Column names in vector order. The tenth is present only when
/// `include_fixation_count` is set.
pub const FEATURE_NAMES: [&str; 10] = [
    "theta",
    "alpha",
    "beta",
    "engagement",
    "fixation_mean_ms",
    "gaze_dispersion",
    "saccade_rate",
    "blink_rate",
    "pupil_variability",
    "fixation_count",
];

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    #[serde(default)]
    pub include_fixation_count: bool,
    #[serde(default)]
    pub geometry: ScreenGeometry,
    #[serde(default)]
    pub ivt: IvtConfig,
}

impl FeatureConfig {
    pub fn dim(&self) -> usize {
        if self.include_fixation_count {
            10
        } else {
            9
        }
    }

    pub fn names(&self) -> &'static [&'static str] {
        &FEATURE_NAMES[..self.dim()]
    }

    pub fn csv_header(&self) -> String {
        self.names().join(",")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub theta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub engagement: f64,
    pub fixation_mean_ms: f64,
    pub gaze_dispersion: f64,
    pub saccade_rate: f64,
    pub blink_rate: f64,
    pub pupil_variability: f64,
    pub fixation_count: Option<f64>,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        9 + self.fixation_count.is_some() as usize
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![
            self.theta,
            self.alpha,
            self.beta,
            self.engagement,
            self.fixation_mean_ms,
            self.gaze_dispersion,
            self.saccade_rate,
            self.blink_rate,
            self.pupil_variability,
        ];
        v.extend(self.fixation_count);
        v
    }

    pub fn from_slice(v: &[f64]) -> Option<Self> {
        if v.len() != 9 && v.len() != 10 {
            return None;
        }
        Some(Self {
            theta: v[0],
            alpha: v[1],
            beta: v[2],
            engagement: v[3],
            fixation_mean_ms: v[4],
            gaze_dispersion: v[5],
            saccade_rate: v[6],
            blink_rate: v[7],
            pupil_variability: v[8],
            fixation_count: v.get(9).copied(),
        })
    }

    /// Values joined with commas, shortest round-trip formatting.
    pub fn csv_row(&self) -> String {
        self.to_vec()
            .iter()
            .map(|v| format!("{v:?}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("non-finite feature `{0}`")]
    Fusion(&'static str),
    #[error(transparent)]
    Missing(#[from] MissingFeatures),
}

/// Concatenates the parts in contract order; rejects non-finite values.
pub fn fuse(
    bp: &BandPower,
    engagement: f64,
    eye: &EyeFeatures,
    include_fixation_count: bool,
) -> Result<FeatureVector, FeatureError> {
    let fv = FeatureVector {
        theta: bp.theta,
        alpha: bp.alpha,
        beta: bp.beta,
        engagement,
        fixation_mean_ms: eye.fixation_mean_ms,
        gaze_dispersion: eye.gaze_dispersion,
        saccade_rate: eye.saccade_rate,
        blink_rate: eye.blink_rate,
        pupil_variability: eye.pupil_variability,
        fixation_count: include_fixation_count.then_some(eye.fixation_count as f64),
    };
    for (v, name) in fv.to_vec().iter().zip(FEATURE_NAMES) {
        if !v.is_finite() {
            return Err(FeatureError::Fusion(name));
        }
    }
    Ok(fv)
}

/// Everything computed for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowFeatures {
    pub vector: FeatureVector,
    pub bands: BandPower,
    pub engagement_saturated: bool,
    pub fixations: Vec<Fixation>,
    pub saccade_count: usize,
}

/// Reusable extractor; holds the FFT plan.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    cfg: FeatureConfig,
    welch: Welch,
}

impl FeatureExtractor {
    pub fn new(cfg: FeatureConfig, eeg_rate: f64) -> Self {
        Self {
            cfg,
            welch: Welch::new(eeg_rate),
        }
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    pub fn extract(&self, w: &CleanWindow) -> Result<WindowFeatures, FeatureError> {
        let bands = self.welch.band_powers(&w.eeg_filtered);
        let eng = engagement_index(&bands);
        let (fixations, saccades) =
            detect_fixations_saccades(&w.eye_valid, w.eye_rate, &self.cfg.geometry, &self.cfg.ivt);
        let eye = eye_features(
            &w.eye_valid,
            &fixations,
            &saccades,
            w.blink_onsets.len(),
            w.rejected_eye_count - w.rejected_blink_count,
            w.end_us - w.start_us,
            w.eye_rate,
        )?;
        Ok(WindowFeatures {
            vector: fuse(&bands, eng.value, &eye, self.cfg.include_fixation_count)?,
            bands,
            engagement_saturated: eng.saturated,
            fixations,
            saccade_count: saccades.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_parts_fuse_to_zero_vector() {
        let fv = fuse(&BandPower::default(), 0.0, &EyeFeatures::default(), false).unwrap();
        assert_eq!(fv.to_vec(), vec![0.0; 9]);
        let fv = fuse(&BandPower::default(), 0.0, &EyeFeatures::default(), true).unwrap();
        assert_eq!(fv.dim(), 10);
    }

    #[test]
    fn nan_is_rejected_by_name() {
        let eye = EyeFeatures {
            pupil_variability: f64::NAN,
            ..Default::default()
        };
        assert_eq!(
            fuse(&BandPower::default(), 0.0, &eye, false),
            Err(FeatureError::Fusion("pupil_variability"))
        );
    }

    #[test]
    fn header_matches_dimension() {
        let mut cfg = FeatureConfig::default();
        assert_eq!(cfg.csv_header().split(',').count(), 9);
        cfg.include_fixation_count = true;
        assert!(cfg.csv_header().ends_with(",fixation_count"));
    }

    #[test]
    fn slice_round_trip() {
        let v: Vec<f64> = (0..10).map(|i| i as f64 * 0.5).collect();
        assert_eq!(FeatureVector::from_slice(&v).unwrap().to_vec(), v);
        assert!(FeatureVector::from_slice(&v[..8]).is_none());
    }
}
