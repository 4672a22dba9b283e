use std::f64::consts::PI;

use rustfft::{num_complex::Complex64, FftPlanner};

use super::SampleBuffer;
use crate::error::{Error, Result};

/// Transition band on each side of the pass band.
pub const DEFAULT_TRANSITION_HZ: f64 = 0.5e6;
/// Design attenuation; leaves margin over the 40 dB requirement.
const STOPBAND_DB: f64 = 60.0;

/// Linear-phase (odd length, symmetric) FIR bandpass filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterSpec {
    pub taps: Vec<f64>,
    pub sample_rate_hz: f64,
    pub f_low_hz: f64,
    pub f_high_hz: f64,
}

impl FilterSpec {
    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// Group delay in samples.
    pub fn delay(&self) -> usize {
        (self.taps.len() - 1) / 2
    }

    pub fn gain_at(&self, f_hz: f64) -> f64 {
        let w = 2.0 * PI * f_hz / self.sample_rate_hz;
        let (mut re, mut im) = (0.0, 0.0);
        for (n, h) in self.taps.iter().enumerate() {
            re += h * (w * n as f64).cos();
            im -= h * (w * n as f64).sin();
        }
        re.hypot(im)
    }

    pub fn response_db(&self, f_hz: f64) -> f64 {
        20.0 * self.gain_at(f_hz).max(1e-300).log10()
    }

    /// Sum of squared taps: variance gain for white input.
    pub fn noise_gain(&self) -> f64 {
        self.taps.iter().map(|h| h * h).sum()
    }
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..500 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Kaiser-windowed sinc bandpass with pass band `[f_low, f_high]`.
///
/// The transition bands are 0.5 MHz wide (narrower when the band edges sit
/// closer than that to DC or Nyquist), giving at least 40 dB rejection at
/// `f_low - 0.5 MHz` and `f_high + 0.5 MHz` with sub-dB pass-band ripple.
pub fn design_bandpass(fs_hz: f64, f_low_hz: f64, f_high_hz: f64) -> Result<FilterSpec> {
    if !(fs_hz.is_finite() && fs_hz > 0.0) {
        return Err(Error::InvalidInput(format!("bad sample rate {fs_hz}")));
    }
    if !(f_low_hz > 0.0 && f_low_hz < f_high_hz && f_high_hz < fs_hz / 2.0) {
        return Err(Error::InvalidInput(format!(
            "band edges must satisfy 0 < f_low < f_high < fs/2, got {f_low_hz}..{f_high_hz} at fs = {fs_hz}"
        )));
    }
    let transition = DEFAULT_TRANSITION_HZ
        .min(f_low_hz)
        .min(fs_hz / 2.0 - f_high_hz)
        .min(f_high_hz - f_low_hz);

    let beta = 0.1102 * (STOPBAND_DB - 8.7);
    let dw = 2.0 * PI * transition / fs_hz;
    let mut len = ((STOPBAND_DB - 7.95) / (2.285 * dw)).ceil() as usize + 1;
    if len.is_multiple_of(2) {
        len += 1;
    }
    let mid = (len - 1) as f64 / 2.0;
    let c1 = (f_low_hz - transition / 2.0) / fs_hz;
    let c2 = (f_high_hz + transition / 2.0) / fs_hz;
    let i0_beta = bessel_i0(beta);

    let taps: Vec<f64> = (0..len)
        .map(|n| {
            let m = n as f64 - mid;
            let ratio = m / mid;
            let window = bessel_i0(beta * (1.0 - ratio * ratio).max(0.0).sqrt()) / i0_beta;
            window * (2.0 * c2 * sinc(2.0 * c2 * m) - 2.0 * c1 * sinc(2.0 * c1 * m))
        })
        .collect();

    let mut spec = FilterSpec {
        taps,
        sample_rate_hz: fs_hz,
        f_low_hz,
        f_high_hz,
    };
    let centre_gain = spec.gain_at(0.5 * (f_low_hz + f_high_hz));
    spec.taps.iter_mut().for_each(|h| *h /= centre_gain);
    Ok(spec)
}

/// Full linear convolution `taps * x` (length `len(x) + len(taps) - 1`).
pub(crate) fn convolve_full(taps: &[f64], x: &[f64]) -> Vec<f64> {
    let out_len = x.len() + taps.len() - 1;
    let nfft = out_len.next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(nfft);
    let inv = planner.plan_fft_inverse(nfft);

    let mut a: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    a.resize(nfft, Complex64::new(0.0, 0.0));
    let mut b: Vec<Complex64> = taps.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    b.resize(nfft, Complex64::new(0.0, 0.0));
    fwd.process(&mut a);
    fwd.process(&mut b);
    let scale = 1.0 / nfft as f64;
    for (p, q) in a.iter_mut().zip(&b) {
        *p = *p * *q * scale;
    }
    inv.process(&mut a);
    a[..out_len].iter().map(|c| c.re).collect()
}

/// Zero-phase filtering: output aligned with the input, same length,
/// zero padding assumed outside the buffer.
pub fn apply_filter(spec: &FilterSpec, buf: &SampleBuffer) -> Result<SampleBuffer> {
    if (spec.sample_rate_hz - buf.sample_rate_hz()).abs() > 1e-9 * spec.sample_rate_hz {
        return Err(Error::InvalidInput(format!(
            "filter designed for {} Hz applied to a {} Hz buffer",
            spec.sample_rate_hz,
            buf.sample_rate_hz()
        )));
    }
    let full = convolve_full(&spec.taps, buf.samples());
    let d = spec.delay();
    SampleBuffer::new(full[d..d + buf.len()].to_vec(), buf.sample_rate_hz(), buf.origin())
}

/// Only the outputs whose filter support lies fully inside the input
/// (`len(x) - len(taps) + 1` samples), so no start-up transient remains.
pub(crate) fn filter_valid(spec: &FilterSpec, x: &[f64]) -> Vec<f64> {
    let full = convolve_full(&spec.taps, x);
    full[spec.len() - 1..x.len()].to_vec()
}
