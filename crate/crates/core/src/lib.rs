//! Two-phase subspace detection of narrow-band FM wireless-microphone
//! signals in band-limited noise.
//!
//! Training averages the autocorrelation of signal-free records into a
//! [`NoiseProfile`](calibrate::NoiseProfile) and calibrates thresholds on
//! ratios of alternate singular values. Detection subtracts the profile from
//! the received autocorrelation, counts signals from the ratios, rebuilds
//! the signal autocorrelation from the leading singular triplets and reads
//! carrier frequencies off its spectrum.

pub mod calibrate;
pub mod capture;
pub mod detector;
pub mod dsp;
pub mod error;
pub mod harness;
pub mod rng;
pub mod synth;

pub use calibrate::{
    build_noise_profile, calibrate_thresholds, compute_test_statistics, whiten, Calibration, NoiseProfile,
    TestStatisticVector, ThresholdRow, ThresholdTable, Thresholds, NUM_STATISTICS,
};
pub use detector::{count_signals, detect, locate_peaks, reconstruct_signal_autocorr, DetectionReport, Detector};
pub use dsp::{estimate_autocorr, psd_from_autocorr, svd, AutocorrMatrix, PsdEstimate, SampleBuffer, SvdDecomposition};
pub use error::{Error, Result};
pub use harness::{run_bench, BenchConfig, BenchResult};
pub use synth::{gen_colored_noise, gen_wm_signal, mix_at_snr, SynthConfig, WmMode};
