use std::f64::consts::PI;
use std::io::{self, Write};

use crate::stream::{Micros, US_PER_SEC};

pub const FIR_TAPS: usize = 101;
pub const LOWPASS_HZ: f64 = 48.0;

/// Linear-phase low-pass FIR: Hamming-windowed sinc, unity DC gain.
#[derive(Debug, Clone, PartialEq)]
pub struct LowPassFir {
    taps: Vec<f64>,
    rate_hz: f64,
}

impl LowPassFir {
    /// `n_taps` must be odd so the filter has an integer group delay.
    pub fn design(cutoff_hz: f64, rate_hz: f64, n_taps: usize) -> Self {
        assert!(n_taps % 2 == 1, "tap count must be odd");
        assert!(cutoff_hz > 0.0 && cutoff_hz < rate_hz / 2.0);
        let fc = cutoff_hz / rate_hz;
        let m = (n_taps - 1) as f64;
        let mid = (n_taps / 2) as f64;
        let mut taps: Vec<f64> = (0..n_taps)
            .map(|i| {
                let k = (i as f64 - mid).abs();
                let sinc = if k == 0.0 {
                    2.0 * fc
                } else {
                    (2.0 * PI * fc * k).sin() / (PI * k)
                };
                // centred form of 0.54 - 0.46·cos(2πi/m), exactly symmetric
                let hamming = 0.54 + 0.46 * (2.0 * PI * k / m).cos();
                sinc * hamming
            })
            .collect();
        let gain: f64 = taps.iter().sum();
        for t in &mut taps {
            *t /= gain;
        }
        Self { taps, rate_hz }
    }

    /// The EEG low-pass: 48 Hz, 101 taps at 250 Hz.
    pub fn eeg_default() -> Self {
        Self::design(LOWPASS_HZ, 250.0, FIR_TAPS)
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn group_delay_samples(&self) -> usize {
        self.taps.len() / 2
    }

    pub fn group_delay_us(&self) -> Micros {
        (self.group_delay_samples() as f64 * US_PER_SEC as f64 / self.rate_hz).round() as Micros
    }

    /// |H(f)| of the designed taps.
    pub fn magnitude_at(&self, freq_hz: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / self.rate_hz;
        let (re, im) = self
            .taps
            .iter()
            .enumerate()
            .fold((0.0, 0.0), |(re, im), (n, h)| {
                (re + h * (w * n as f64).cos(), im - h * (w * n as f64).sin())
            });
        (re * re + im * im).sqrt()
    }

    /// Filters `x`, shifting the output back by the group delay so it stays
    /// aligned with the input timestamps. Edges are extended by mirror
    /// reflection; output length equals input length.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let half = self.group_delay_samples();
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        let at = |i: isize| -> f64 {
            let last = n as isize - 1;
            let mut j = i;
            // mirror about the end samples; repeat for very short inputs
            while j < 0 || j > last {
                if last == 0 {
                    return x[0];
                }
                j = if j < 0 { -j } else { 2 * last - j };
            }
            x[j as usize]
        };
        let padded: Vec<f64> = (-(half as isize)..(n + half) as isize).map(at).collect();
        (0..n)
            .map(|i| {
                padded[i..i + self.taps.len()]
                    .iter()
                    .zip(self.taps.iter().rev())
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// One tap per line, full precision.
    pub fn write_taps<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "# {} taps, {} Hz", self.taps.len(), self.rate_hz)?;
        for t in &self.taps {
            writeln!(out, "{t:e}")?;
        }
        Ok(())
    }
}
