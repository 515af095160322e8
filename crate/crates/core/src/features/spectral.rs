use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

pub const THETA_HZ: (f64, f64) = (4.0, 7.0);
pub const ALPHA_HZ: (f64, f64) = (8.0, 12.0);
pub const BETA_HZ: (f64, f64) = (13.0, 30.0);
/// Below this combined alpha+theta power the engagement index saturates.
pub const ENGAGEMENT_EPS: f64 = 1e-12;
pub const ENGAGEMENT_CAP: f64 = 1e6;

/// Band powers in µV².
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BandPower {
    pub theta: f64,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Engagement {
    pub value: f64,
    pub saturated: bool,
}

/// β / (α + θ); saturates at [`ENGAGEMENT_CAP`] when the denominator vanishes.
pub fn engagement_index(bp: &BandPower) -> Engagement {
    let denom = bp.alpha + bp.theta;
    if denom < ENGAGEMENT_EPS {
        Engagement {
            value: ENGAGEMENT_CAP,
            saturated: true,
        }
    } else {
        Engagement {
            value: bp.beta / denom,
            saturated: false,
        }
    }
}

/// Welch PSD with 1 s Hann segments and 50% overlap, one-sided density
/// scaling, so summing the PSD times the bin width recovers the variance.
pub struct Welch {
    seg_len: usize,
    hop: usize,
    rate_hz: f64,
    window: Vec<f64>,
    /// 1 / (fs · Σw²)
    scale: f64,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Welch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Welch")
            .field("seg_len", &self.seg_len)
            .field("hop", &self.hop)
            .field("rate_hz", &self.rate_hz)
            .finish()
    }
}

impl Clone for Welch {
    fn clone(&self) -> Self {
        Self::new(self.rate_hz)
    }
}

impl Welch {
    pub fn new(rate_hz: f64) -> Self {
        let seg_len = rate_hz.round() as usize;
        // periodic Hann: an integer-frequency tone leaks into its two neighbours only
        let window: Vec<f64> = (0..seg_len)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / seg_len as f64).cos())
            .collect();
        let wss: f64 = window.iter().map(|w| w * w).sum();
        Self {
            seg_len,
            hop: seg_len / 2,
            rate_hz,
            scale: 1.0 / (rate_hz * wss),
            window,
            fft: FftPlanner::new().plan_fft_forward(seg_len),
        }
    }

    pub fn bin_hz(&self) -> f64 {
        self.rate_hz / self.seg_len as f64
    }

    /// One-sided PSD for bins 0..=n/2, in units²/Hz. Empty if `x` is shorter
    /// than one segment.
    pub fn psd(&self, x: &[f64]) -> Vec<f64> {
        let n = self.seg_len;
        if x.len() < n {
            return Vec::new();
        }
        let n_seg = (x.len() - n) / self.hop + 1;
        let mut acc = vec![0.0; n / 2 + 1];
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for s in 0..n_seg {
            let seg = &x[s * self.hop..s * self.hop + n];
            let mean = seg.iter().sum::<f64>() / n as f64;
            for ((b, v), w) in buf.iter_mut().zip(seg).zip(&self.window) {
                *b = Complex::new((v - mean) * w, 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (a, c) in acc.iter_mut().zip(&buf) {
                *a += c.norm_sqr();
            }
        }
        let last = n / 2;
        for (k, a) in acc.iter_mut().enumerate() {
            let one_sided = if k == 0 || (n % 2 == 0 && k == last) { 1.0 } else { 2.0 };
            *a *= one_sided * self.scale / n_seg as f64;
        }
        acc
    }

    /// Sum of PSD·Δf over bins with `lo ≤ f ≤ hi`.
    pub fn band(&self, psd: &[f64], (lo, hi): (f64, f64)) -> f64 {
        let df = self.bin_hz();
        psd.iter()
            .enumerate()
            .filter(|(k, _)| {
                let f = *k as f64 * df;
                f >= lo - 1e-9 && f <= hi + 1e-9
            })
            .map(|(_, p)| p * df)
            .sum()
    }

    /// Total power over (0, Nyquist].
    pub fn total(&self, psd: &[f64]) -> f64 {
        psd.iter().skip(1).sum::<f64>() * self.bin_hz()
    }

    pub fn band_powers(&self, x: &[f64]) -> BandPower {
        let psd = self.psd(x);
        BandPower {
            theta: self.band(&psd, THETA_HZ),
            alpha: self.band(&psd, ALPHA_HZ),
            beta: self.band(&psd, BETA_HZ),
        }
    }
}

/// Band powers of an EEG window at `rate_hz`.
pub fn band_powers(x: &[f64], rate_hz: f64) -> BandPower {
    Welch::new(rate_hz).band_powers(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sine(freq: f64, amp: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / 250.0).sin())
            .collect()
    }

    #[test]
    fn unit_alpha_sine() {
        let bp = band_powers(&sine(10.0, 1.0, 1250), 250.0);
        assert!((bp.alpha - 0.5).abs() < 0.025, "{bp:?}");
        assert!(bp.theta < 0.01 * bp.alpha && bp.beta < 0.01 * bp.alpha);
    }

    #[test]
    fn theta_plus_beta() {
        let x: Vec<f64> = sine(6.0, 1.0, 1250)
            .iter()
            .zip(sine(20.0, 1.0, 1250))
            .map(|(a, b)| a + b)
            .collect();
        let bp = band_powers(&x, 250.0);
        assert!((bp.theta - 0.5).abs() < 0.025 && (bp.beta - 0.5).abs() < 0.025, "{bp:?}");
        let e = engagement_index(&bp);
        assert!((e.value - 1.0).abs() < 0.1);
    }

    #[test]
    fn zero_signal_zero_bands() {
        assert_eq!(band_powers(&[0.0; 1250], 250.0), BandPower::default());
    }

    #[test]
    fn engagement_edges() {
        let e = engagement_index(&BandPower { theta: 1.0, alpha: 1.0, beta: 1.0 });
        assert_eq!(e.value, 0.5);
        assert_eq!(engagement_index(&BandPower { theta: 1.0, alpha: 0.0, beta: 0.0 }).value, 0.0);
        let sat = engagement_index(&BandPower { theta: 0.0, alpha: 0.0, beta: 3.0 });
        assert!(sat.saturated && sat.value == ENGAGEMENT_CAP);
    }

    proptest! {
        #[test]
        fn scaling_by_k_scales_power_by_k_squared(
            k in 0.1f64..50.0,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..1250).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = x.iter().map(|v| v * k).collect();
            let a = band_powers(&x, 250.0);
            let b = band_powers(&y, 250.0);
            for (p, q) in [(a.theta, b.theta), (a.alpha, b.alpha), (a.beta, b.beta)] {
                prop_assert!((q - k * k * p).abs() <= 1e-9 * q.abs().max(1e-300));
            }
            let (ea, eb) = (engagement_index(&a).value, engagement_index(&b).value);
            prop_assert!((ea - eb).abs() <= 1e-9 * ea.abs());
        }

        #[test]
        fn bands_never_exceed_variance(
            tones in prop::collection::vec((1u32..42, 0.0f64..3.0, 0.0f64..6.3), 1..6),
        ) {
            // tones on a 3 Hz grid: no Hann cross terms, so the Welch total equals the variance
            let mut x = vec![0.0; 1250];
            for (f, a, ph) in &tones {
                for (i, v) in x.iter_mut().enumerate() {
                    *v += a * (2.0 * PI * (3 * f) as f64 * i as f64 / 250.0 + ph).sin();
                }
            }
            let n = x.len() as f64;
            let mean = x.iter().sum::<f64>() / n;
            let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let bp = band_powers(&x, 250.0);
            prop_assert!(bp.theta + bp.alpha + bp.beta <= var * (1.0 + 1e-6) + 1e-12);
        }
    }
}
