//! Incremental EEG + eye generator sharing one blink schedule.

use std::collections::VecDeque;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use super::profile::{StateSignalProfile, MIN_DWELL_MS};
use crate::stream::{Micros, StreamKind, TimestampedSample, US_PER_SEC};

/// Fixed in-band tone frequencies (theta, alpha, beta), Hz.
pub const TONE_HZ: [f64; 3] = [6.0, 10.0, 20.0];
/// Band edges used by band-noise mode, Hz.
const BAND_EDGES: [(f64, f64); 3] = [(4.0, 7.0), (8.0, 12.0), (13.0, 30.0)];
const BAND_NOISE_TONES: usize = 12;

pub const BLINK_ARTIFACT_US: Micros = 300_000;
pub const BLINK_ARTIFACT_UV: f64 = 100.0;
pub const BLINK_EYE_US: Micros = 150_000;
// blinks never overlap their own EEG transient
const BLINK_REFRACTORY_US: Micros = 350_000;
const MIN_JUMP: f64 = 0.05;
const TREMOR_SIGMA: f64 = 0.0005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EegMode {
    /// One sinusoid per band at [`TONE_HZ`].
    #[default]
    Tones,
    /// Random-phase multisine spread across each band.
    BandNoise,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub eeg_rate: f64,
    pub eye_rate: f64,
    pub eeg_mode: EegMode,
    pub origin_us: Micros,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            eeg_rate: 250.0,
            eye_rate: 60.0,
            eeg_mode: EegMode::Tones,
            origin_us: 0,
        }
    }
}

#[derive(Debug, Clone)]
struct Tone {
    hz: f64,
    phase: f64,
    // share of the band's amplitude
    weight: f64,
}

/// Deterministic generator for one simulated participant.
#[derive(Debug, Clone)]
pub struct Simulator {
    cfg: SimConfig,
    profile: StateSignalProfile,
    eeg_rng: ChaCha8Rng,
    eye_rng: ChaCha8Rng,
    blink_rng: ChaCha8Rng,
    bands: [Vec<Tone>; 3],
    eeg_index: i64,
    eye_index: i64,
    // onsets whose EEG transient may still be running, oldest first
    blinks: VecDeque<Micros>,
    next_blink_us: Option<Micros>,
    blink_log: Vec<Micros>,
    gaze: (f64, f64),
    next_jump_us: Option<Micros>,
}

impl Simulator {
    pub fn new(profile: StateSignalProfile, seed: u64, cfg: SimConfig) -> Self {
        let stream = |k: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(k);
            r
        };
        let mut setup = stream(0);
        let bands = std::array::from_fn(|b| match cfg.eeg_mode {
            EegMode::Tones => vec![Tone {
                hz: TONE_HZ[b],
                phase: setup.random_range(0.0..2.0 * PI),
                weight: 1.0,
            }],
            EegMode::BandNoise => {
                let (lo, hi) = BAND_EDGES[b];
                (0..BAND_NOISE_TONES)
                    .map(|_| Tone {
                        hz: setup.random_range(lo..hi),
                        phase: setup.random_range(0.0..2.0 * PI),
                        weight: 1.0 / (BAND_NOISE_TONES as f64).sqrt(),
                    })
                    .collect()
            }
        });
        let mut sim = Self {
            cfg,
            profile,
            eeg_rng: stream(1),
            eye_rng: stream(2),
            blink_rng: stream(3),
            bands,
            eeg_index: 0,
            eye_index: 0,
            blinks: VecDeque::new(),
            next_blink_us: None,
            blink_log: Vec::new(),
            gaze: (0.5, 0.5),
            next_jump_us: None,
        };
        sim.next_blink_us = sim.first_blink();
        sim.gaze = sim.initial_gaze();
        sim.next_jump_us = sim.schedule_jump(cfg.origin_us);
        sim
    }

    pub fn profile(&self) -> &StateSignalProfile {
        &self.profile
    }

    /// Switches profile from the next generated sample on.
    pub fn set_profile(&mut self, profile: StateSignalProfile) {
        let was_frozen = self.profile.saccade_rate_hz == 0.0;
        let was_blinkless = self.profile.blink_rate_hz == 0.0;
        self.profile = profile;
        let now = self.next_ts();
        if was_frozen && profile.saccade_rate_hz > 0.0 {
            self.next_jump_us = self.schedule_jump(now);
        }
        if profile.saccade_rate_hz == 0.0 {
            self.next_jump_us = None;
        }
        if was_blinkless && profile.blink_rate_hz > 0.0 {
            self.next_blink_us = self.blink_interval().map(|d| now + d);
        }
        if profile.blink_rate_hz == 0.0 {
            self.next_blink_us = None;
        }
    }

    /// Blink onsets produced so far.
    pub fn blink_onsets(&self) -> &[Micros] {
        &self.blink_log
    }

    fn eeg_ts(&self, n: i64) -> Micros {
        self.cfg.origin_us + (n as f64 * US_PER_SEC as f64 / self.cfg.eeg_rate).round() as Micros
    }

    fn eye_ts(&self, n: i64) -> Micros {
        self.cfg.origin_us + (n as f64 * US_PER_SEC as f64 / self.cfg.eye_rate).round() as Micros
    }

    fn next_ts(&self) -> Micros {
        self.eeg_ts(self.eeg_index).min(self.eye_ts(self.eye_index))
    }

    /// Generates every sample with timestamp `< end_us`, merged in time
    /// order (EEG first on ties).
    pub fn advance_to(&mut self, end_us: Micros) -> Vec<(StreamKind, TimestampedSample)> {
        let mut out = Vec::new();
        loop {
            let t_eeg = self.eeg_ts(self.eeg_index);
            let t_eye = self.eye_ts(self.eye_index);
            if t_eeg >= end_us && t_eye >= end_us {
                break;
            }
            if t_eeg <= t_eye {
                out.push((StreamKind::Eeg, self.next_eeg()));
            } else {
                out.push((StreamKind::Eye, self.next_eye()));
            }
        }
        out
    }

    fn schedule_blinks_through(&mut self, t: Micros) {
        while let Some(b) = self.next_blink_us.filter(|b| *b <= t) {
            self.blinks.push_back(b);
            self.blink_log.push(b);
            self.next_blink_us = self.blink_interval().map(|d| b + d);
        }
    }

    fn first_blink(&mut self) -> Option<Micros> {
        // forward-recurrence draw so event counts start in equilibrium
        let rate = self.profile.blink_rate_hz;
        if rate <= 0.0 {
            return None;
        }
        let mean_us = US_PER_SEC as f64 / rate;
        let dead = (BLINK_REFRACTORY_US as f64).min(mean_us * 0.5);
        let offset = if self.blink_rng.random::<f64>() < dead / mean_us {
            self.blink_rng.random_range(0.0..dead)
        } else {
            dead + Exp::new(1.0 / (mean_us - dead))
                .expect("positive rate")
                .sample(&mut self.blink_rng)
        };
        Some(self.cfg.origin_us + offset as Micros)
    }

    fn blink_interval(&mut self) -> Option<Micros> {
        let rate = self.profile.blink_rate_hz;
        if rate <= 0.0 {
            return None;
        }
        let mean_us = US_PER_SEC as f64 / rate;
        let dead = (BLINK_REFRACTORY_US as f64).min(mean_us * 0.5);
        let extra = Exp::new(1.0 / (mean_us - dead))
            .expect("positive rate")
            .sample(&mut self.blink_rng);
        Some((dead + extra) as Micros)
    }

    fn next_eeg(&mut self) -> TimestampedSample {
        let ts = self.eeg_ts(self.eeg_index);
        self.eeg_index += 1;
        self.schedule_blinks_through(ts);
        while self
            .blinks
            .front()
            .is_some_and(|b| ts - b >= BLINK_ARTIFACT_US.max(BLINK_EYE_US))
        {
            self.blinks.pop_front();
        }

        let t = (ts - self.cfg.origin_us) as f64 / US_PER_SEC as f64;
        let p = &self.profile;
        let amps = [p.theta_amp, p.alpha_amp, p.beta_amp];
        let mut v = 0.0;
        for (band, amp) in self.bands.iter().zip(amps) {
            if amp == 0.0 {
                continue;
            }
            for tone in band {
                v += amp * tone.weight * (2.0 * PI * tone.hz * t + tone.phase).sin();
            }
        }
        if p.noise_sigma > 0.0 {
            v += Normal::new(0.0, p.noise_sigma)
                .expect("finite sigma")
                .sample(&mut self.eeg_rng);
        }
        for &b in &self.blinks {
            let dt = ts - b;
            if (0..BLINK_ARTIFACT_US).contains(&dt) {
                v += BLINK_ARTIFACT_UV * (PI * dt as f64 / BLINK_ARTIFACT_US as f64).sin();
            }
        }
        TimestampedSample::scalar(ts, v)
    }

    fn initial_gaze(&mut self) -> (f64, f64) {
        let d = self.profile.gaze_dispersion_scale;
        if d == 0.0 {
            return (0.5, 0.5);
        }
        let n = Normal::new(0.0, d).expect("finite dispersion");
        (
            (0.5 + n.sample(&mut self.eye_rng)).clamp(0.02, 0.98),
            (0.5 + n.sample(&mut self.eye_rng)).clamp(0.02, 0.98),
        )
    }

    fn schedule_jump(&mut self, from: Micros) -> Option<Micros> {
        if self.profile.saccade_rate_hz <= 0.0 {
            return None;
        }
        let period_ms = 1000.0 / self.cfg.eye_rate;
        let mean = self.profile.effective_dwell_ms(period_ms);
        let extra = Exp::new(1.0 / (mean - MIN_DWELL_MS))
            .expect("dwell above minimum")
            .sample(&mut self.eye_rng);
        Some(from + ((MIN_DWELL_MS + extra) * 1000.0) as Micros)
    }

    fn jump_target(&mut self) -> (f64, f64) {
        let d = self.profile.gaze_dispersion_scale;
        if d == 0.0 {
            return (0.5, 0.5);
        }
        let n = Normal::new(0.0, d).expect("finite dispersion");
        let (gx, gy) = self.gaze;
        for _ in 0..8 {
            let target = (
                (0.5 + n.sample(&mut self.eye_rng)).clamp(0.02, 0.98),
                (0.5 + n.sample(&mut self.eye_rng)).clamp(0.02, 0.98),
            );
            if (target.0 - gx).hypot(target.1 - gy) >= MIN_JUMP {
                return target;
            }
        }
        // too close after retries: push out to the minimum amplitude, away from the nearer edge
        let angle = self.eye_rng.random_range(0.0..2.0 * PI);
        let (mut dx, mut dy) = (angle.cos() * MIN_JUMP, angle.sin() * MIN_JUMP);
        if !(0.02..=0.98).contains(&(gx + dx)) {
            dx = -dx;
        }
        if !(0.02..=0.98).contains(&(gy + dy)) {
            dy = -dy;
        }
        (gx + dx, gy + dy)
    }

    fn next_eye(&mut self) -> TimestampedSample {
        let ts = self.eye_ts(self.eye_index);
        self.eye_index += 1;
        self.schedule_blinks_through(ts);

        if let Some(j) = self.next_jump_us.filter(|j| *j <= ts) {
            self.gaze = self.jump_target();
            self.next_jump_us = self.schedule_jump(j.max(ts));
        }
        let p = self.profile;
        let (mut gx, mut gy) = self.gaze;
        if p.gaze_dispersion_scale > 0.0 {
            let tremor = Normal::new(0.0, TREMOR_SIGMA).expect("finite");
            gx += tremor.sample(&mut self.eye_rng);
            gy += tremor.sample(&mut self.eye_rng);
        }
        let pupil = if p.pupil_sigma_mm > 0.0 {
            Normal::new(p.pupil_mean_mm, p.pupil_sigma_mm)
                .expect("finite pupil")
                .sample(&mut self.eye_rng)
                .max(1.0)
        } else {
            p.pupil_mean_mm
        };
        let blinking = self
            .blinks
            .iter()
            .any(|b| (0..BLINK_EYE_US).contains(&(ts - b)));
        let values = if blinking {
            [gx, gy, 0.0, 0.0, 0.0, 1.0]
        } else {
            [gx, gy, pupil, pupil, 1.0, 0.0]
        };
        TimestampedSample::new(ts, values)
    }
}

fn generate(
    kind: StreamKind,
    profile: &StateSignalProfile,
    duration_s: f64,
    rate: f64,
    seed: u64,
) -> Vec<TimestampedSample> {
    let mut cfg = SimConfig::default();
    match kind {
        StreamKind::Eeg => cfg.eeg_rate = rate,
        _ => cfg.eye_rate = rate,
    }
    let mut sim = Simulator::new(*profile, seed, cfg);
    sim.advance_to((duration_s * US_PER_SEC as f64).round() as Micros)
        .into_iter()
        .filter(|(k, _)| *k == kind)
        .map(|(_, s)| s)
        .collect()
}

/// EEG samples for `duration_s` seconds at `rate` Hz.
pub fn generate_eeg(
    profile: &StateSignalProfile,
    duration_s: f64,
    rate: f64,
    seed: u64,
) -> Vec<TimestampedSample> {
    generate(StreamKind::Eeg, profile, duration_s, rate, seed)
}

/// Eye samples for `duration_s` seconds at `rate` Hz. Blink timing matches
/// [`generate_eeg`] for the same profile and seed.
pub fn generate_eye(
    profile: &StateSignalProfile,
    duration_s: f64,
    rate: f64,
    seed: u64,
) -> Vec<TimestampedSample> {
    generate(StreamKind::Eye, profile, duration_s, rate, seed)
}

/// Blink onsets the generators would produce for this profile and seed.
pub fn blink_schedule(profile: &StateSignalProfile, duration_s: f64, seed: u64) -> Vec<Micros> {
    let mut sim = Simulator::new(*profile, seed, SimConfig::default());
    let end = (duration_s * US_PER_SEC as f64).round() as Micros;
    sim.schedule_blinks_through(end - 1);
    sim.blink_log
}
