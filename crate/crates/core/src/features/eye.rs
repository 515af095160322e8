use serde::{Deserialize, Serialize};

use crate::stream::{eye_channel, Micros, TimestampedSample, US_PER_SEC};

/// Monitor size and viewing distance used to turn normalized gaze into visual angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreenGeometry {
    pub width_mm: f64,
    pub height_mm: f64,
    pub viewing_distance_mm: f64,
}

impl Default for ScreenGeometry {
    fn default() -> Self {
        Self {
            width_mm: 530.0,
            height_mm: 300.0,
            viewing_distance_mm: 600.0,
        }
    }
}

impl ScreenGeometry {
    /// Angle in degrees between the lines of sight to two normalized gaze points.
    pub fn angle_deg(&self, a: (f64, f64), b: (f64, f64)) -> f64 {
        let v = |p: (f64, f64)| {
            [
                (p.0 - 0.5) * self.width_mm,
                (p.1 - 0.5) * self.height_mm,
                self.viewing_distance_mm,
            ]
        };
        let (p, q) = (v(a), v(b));
        let cross = [
            p[1] * q[2] - p[2] * q[1],
            p[2] * q[0] - p[0] * q[2],
            p[0] * q[1] - p[1] * q[0],
        ];
        let cross_norm = cross.iter().map(|c| c * c).sum::<f64>().sqrt();
        let dot: f64 = p.iter().zip(&q).map(|(x, y)| x * y).sum();
        cross_norm.atan2(dot).to_degrees()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IvtConfig {
    pub velocity_threshold_deg_s: f64,
    pub min_fixation_us: Micros,
    /// Sample gaps longer than this many nominal periods split fixations and saccades.
    pub max_gap_periods: f64,
}

impl Default for IvtConfig {
    fn default() -> Self {
        Self {
            velocity_threshold_deg_s: 30.0,
            min_fixation_us: 100_000,
            max_gap_periods: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fixation {
    pub start_us: Micros,
    pub duration_us: Micros,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Saccade {
    /// Timestamps of the samples bracketing the fast movement.
    pub from_us: Micros,
    pub to_us: Micros,
}

fn gaze(s: &TimestampedSample) -> (f64, f64) {
    (s.values[eye_channel::GAZE_X], s.values[eye_channel::GAZE_Y])
}

#[derive(Clone, Copy, PartialEq)]
enum Pair {
    Slow,
    Fast,
    Gap,
}

/// Velocity-threshold segmentation. Adjacent samples joined by a movement
/// above the threshold form saccades (consecutive fast steps merge); samples
/// joined by slow steps form fixation candidates, kept if they last at least
/// the minimum duration.
pub fn detect_fixations_saccades(
    eye: &[TimestampedSample],
    eye_rate: f64,
    geometry: &ScreenGeometry,
    cfg: &IvtConfig,
) -> (Vec<Fixation>, Vec<Saccade>) {
    if eye.len() < 2 {
        return (Vec::new(), Vec::new());
    }
    let period = US_PER_SEC as f64 / eye_rate;
    let max_gap = cfg.max_gap_periods * period;
    let pairs: Vec<Pair> = eye
        .windows(2)
        .map(|w| {
            let dt = (w[1].ts_us - w[0].ts_us) as f64;
            if dt > max_gap || dt <= 0.0 {
                return Pair::Gap;
            }
            let v = geometry.angle_deg(gaze(&w[0]), gaze(&w[1])) / (dt / US_PER_SEC as f64);
            if v > cfg.velocity_threshold_deg_s {
                Pair::Fast
            } else {
                Pair::Slow
            }
        })
        .collect();

    let mut saccades = Vec::new();
    let mut i = 0;
    while i < pairs.len() {
        if pairs[i] == Pair::Fast {
            let start = i;
            while i < pairs.len() && pairs[i] == Pair::Fast {
                i += 1;
            }
            saccades.push(Saccade {
                from_us: eye[start].ts_us,
                to_us: eye[i].ts_us,
            });
        } else {
            i += 1;
        }
    }

    let mut fixations = Vec::new();
    let mut run_start = 0;
    let period_us = period.round() as Micros;
    let close = |first: usize, last: usize, out: &mut Vec<Fixation>| {
        let duration_us = eye[last].ts_us - eye[first].ts_us + period_us;
        if duration_us >= cfg.min_fixation_us {
            out.push(Fixation {
                start_us: eye[first].ts_us,
                duration_us,
                samples: last - first + 1,
            });
        }
    };
    for (k, p) in pairs.iter().enumerate() {
        if *p != Pair::Slow {
            close(run_start, k, &mut fixations);
            run_start = k + 1;
        }
    }
    close(run_start, eye.len() - 1, &mut fixations);
    (fixations, saccades)
}

/// RMS Euclidean distance of gaze points from their centroid.
pub fn gaze_dispersion(points: &[(f64, f64)]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.1).sum::<f64>() / n;
    let ms = points
        .iter()
        .map(|p| (p.0 - cx).powi(2) + (p.1 - cy).powi(2))
        .sum::<f64>()
        / n;
    ms.sqrt()
}

/// Population standard deviation of the binocular mean pupil diameter.
pub fn pupil_variability(eye: &[TimestampedSample]) -> f64 {
    if eye.is_empty() {
        return 0.0;
    }
    let m: Vec<f64> = eye
        .iter()
        .map(|s| 0.5 * (s.values[eye_channel::PUPIL_LEFT] + s.values[eye_channel::PUPIL_RIGHT]))
        .collect();
    let n = m.len() as f64;
    let mean = m.iter().sum::<f64>() / n;
    (m.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EyeFeatures {
    pub fixation_mean_ms: f64,
    pub gaze_dispersion: f64,
    pub saccade_rate: f64,
    pub blink_rate: f64,
    pub pupil_variability: f64,
    pub fixation_count: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("no valid eye samples in window")]
pub struct MissingFeatures;

/// Eye metrics of one screened window. Rates use the window duration less
/// the time lost to non-blink rejections; blink gaps are part of the
/// behaviour being measured and do not shorten it.
#[allow(clippy::too_many_arguments)]
pub fn eye_features(
    eye_valid: &[TimestampedSample],
    fixations: &[Fixation],
    saccades: &[Saccade],
    blink_count: usize,
    non_blink_rejected: usize,
    window_us: Micros,
    eye_rate: f64,
) -> Result<EyeFeatures, MissingFeatures> {
    if eye_valid.is_empty() {
        return Err(MissingFeatures);
    }
    let expected = (window_us as f64 * eye_rate / US_PER_SEC as f64).round().max(1.0);
    let kept = (1.0 - non_blink_rejected as f64 / expected).clamp(0.0, 1.0);
    let seconds = (window_us as f64 / US_PER_SEC as f64 * kept).max(1.0 / eye_rate);
    let points: Vec<(f64, f64)> = eye_valid.iter().map(gaze).collect();
    let fixation_mean_ms = if fixations.is_empty() {
        0.0
    } else {
        fixations.iter().map(|f| f.duration_us as f64).sum::<f64>() / fixations.len() as f64 / 1000.0
    };
    Ok(EyeFeatures {
        fixation_mean_ms,
        gaze_dispersion: gaze_dispersion(&points),
        saccade_rate: saccades.len() as f64 / seconds,
        blink_rate: blink_count as f64 / seconds,
        pupil_variability: pupil_variability(eye_valid),
        fixation_count: fixations.len(),
    })
}
