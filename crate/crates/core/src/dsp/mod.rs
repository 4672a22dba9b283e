//! Numeric kernels shared by the training and detection pipelines:
//! lag autocorrelation, symmetric Toeplitz SVD, PSD from lags, bandpass
//! FIR design and noise diagnostics.

mod autocorr;
pub(crate) mod diagnostics;
pub(crate) mod filter;
mod psd;
mod svd;

pub use autocorr::{estimate_autocorr, AutocorrMatrix};
pub use diagnostics::{noise_diagnostics, DiagnosticsReport, Histogram};
pub use filter::{apply_filter, design_bandpass, FilterSpec};
pub use psd::{psd_from_autocorr, raw_spectrum_from_lags, PsdEstimate, DEFAULT_NFFT};
pub use svd::{singular_values, svd, toeplitz_eigen, SvdDecomposition, ToeplitzEigen};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where a [`SampleBuffer`] came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Synthetic,
    File,
}

/// Real-valued passband samples together with their sample rate.
///
/// Construction rejects empty buffers, non-positive sample rates and
/// non-finite samples, so every buffer handed to the pipeline is usable.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBuffer {
    samples: Vec<f64>,
    sample_rate_hz: f64,
    origin: Origin,
}

impl SampleBuffer {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64, origin: Origin) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("sample buffer is empty".into()));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidInput(format!(
                "sample rate must be positive and finite, got {sample_rate_hz}"
            )));
        }
        if let Some(idx) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite sample {} at index {idx}",
                samples[idx]
            )));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            origin,
        })
    }

    pub fn synthetic(samples: Vec<f64>, sample_rate_hz: f64) -> Result<Self> {
        Self::new(samples, sample_rate_hz, Origin::Synthetic)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn origin(&self) -> Origin {
        self.origin
    }

    /// Mean square value.
    pub fn power(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64
    }

    /// Returns a copy with every sample multiplied by `gain`.
    pub fn scaled(&self, gain: f64) -> Result<Self> {
        Self::new(
            self.samples.iter().map(|s| s * gain).collect(),
            self.sample_rate_hz,
            self.origin,
        )
    }
}
