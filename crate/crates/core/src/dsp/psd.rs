use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bin width is about 4.07 kHz at 33.33 MHz, well under the 25 kHz
/// wireless-microphone channel raster.
pub const DEFAULT_NFFT: usize = 8192;

/// One-sided power spectrum on `nfft/2 + 1` bins covering `[0, fs/2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdEstimate {
    pub freqs_hz: Vec<f64>,
    pub power: Vec<f64>,
}

impl PsdEstimate {
    pub fn len(&self) -> usize {
        self.power.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power.is_empty()
    }

    pub fn bin_width_hz(&self) -> f64 {
        if self.freqs_hz.len() < 2 {
            0.0
        } else {
            self.freqs_hz[1] - self.freqs_hz[0]
        }
    }

    /// Sum of bin powers with `lo <= f <= hi`.
    pub fn band_power(&self, lo_hz: f64, hi_hz: f64) -> f64 {
        self.freqs_hz
            .iter()
            .zip(&self.power)
            .filter(|(f, _)| **f >= lo_hz && **f <= hi_hz)
            .map(|(_, p)| p)
            .sum()
    }

    /// Median bin power with `lo <= f <= hi`.
    pub fn band_median(&self, lo_hz: f64, hi_hz: f64) -> f64 {
        let mut v: Vec<f64> = self
            .freqs_hz
            .iter()
            .zip(&self.power)
            .filter(|(f, _)| **f >= lo_hz && **f <= hi_hz)
            .map(|(_, p)| *p)
            .collect();
        if v.is_empty() {
            return 0.0;
        }
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    }

    pub fn argmax(&self) -> usize {
        self.power
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("freq_hz,power\n");
        for (f, p) in self.freqs_hz.iter().zip(&self.power) {
            out.push_str(&format!("{f},{p:e}\n"));
        }
        out
    }
}

/// DFT of the symmetrically extended lag sequence
/// `r(0) + 2 sum_{l>=1} r(l) cos(2 pi k l / nfft)` for `k = 0 ..= nfft/2`,
/// before any rectification.
pub fn raw_spectrum_from_lags(lags: &[f64], nfft: usize) -> Result<Vec<f64>> {
    if lags.is_empty() {
        return Err(Error::InvalidInput("empty lag sequence".into()));
    }
    if !nfft.is_power_of_two() || nfft < 2 * lags.len() {
        return Err(Error::Precondition(format!(
            "nfft = {nfft} must be a power of two and at least 2 L = {}",
            2 * lags.len()
        )));
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
    buf[0].re = lags[0];
    for (l, &v) in lags.iter().enumerate().skip(1) {
        buf[l].re = v;
        buf[nfft - l].re = v;
    }
    FftPlanner::new().plan_fft_forward(nfft).process(&mut buf);
    Ok(buf[..=nfft / 2].iter().map(|c| c.re).collect())
}

/// Power spectrum from a lag sequence, negative values clamped to zero.
///
/// Reconstructed or whitened lag sequences are not guaranteed to have a
/// nonnegative transform; clamping keeps `power >= 0`.
pub fn psd_from_autocorr(lags: &[f64], fs_hz: f64, nfft: usize) -> Result<PsdEstimate> {
    if !(fs_hz.is_finite() && fs_hz > 0.0) {
        return Err(Error::InvalidInput(format!("bad sample rate {fs_hz}")));
    }
    let raw = raw_spectrum_from_lags(lags, nfft)?;
    let df = fs_hz / nfft as f64;
    Ok(PsdEstimate {
        freqs_hz: (0..raw.len()).map(|k| k as f64 * df).collect(),
        power: raw.into_iter().map(|p| p.max(0.0)).collect(),
    })
}
