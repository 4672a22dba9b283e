use serde::{Deserialize, Serialize};

use super::{estimate_autocorr, SampleBuffer};
use crate::error::{Error, Result};

/// Normalised lag magnitude below which the noise is considered decorrelated.
pub const DECAY_LEVEL: f64 = 0.05;
const MAX_DECAY_LAG: usize = 256;
const HISTOGRAM_BINS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `counts.len() + 1` bin edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub window: usize,
    pub window_means: Vec<f64>,
    pub window_variances: Vec<f64>,
    /// max / min windowed variance (1 for a constant-variance record, NaN
    /// when every window has zero variance).
    pub variance_ratio: f64,
    pub histogram: Histogram,
    pub excess_kurtosis: f64,
    /// Smallest lag from which `|r(k)| / r(0)` stays below 0.05 over all
    /// examined lags. `None` when the record never decorrelates within the
    /// examined range or has zero power.
    pub lag_decay_index: Option<usize>,
    pub normalized_lags: Vec<f64>,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

fn histogram(x: &[f64], bins: usize) -> Histogram {
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let edges = (0..=bins).map(|i| lo + i as f64 * width).collect();
    let mut counts = vec![0u64; bins];
    for &v in x {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Histogram { edges, counts }
}

/// Smallest `k` with `|rho(j)| < DECAY_LEVEL` for every `j >= k` in `rho`;
/// `None` if the last entry is still at or above the level.
pub(crate) fn decay_index(rho: &[f64]) -> Option<usize> {
    match rho.iter().rposition(|v| v.abs() >= DECAY_LEVEL) {
        Some(k) if k + 1 < rho.len() => Some(k + 1),
        Some(_) => None,
        None => Some(0),
    }
}

/// Stationarity, amplitude-distribution and correlation-length summary of a
/// noise record. Requires at least four windows of data.
pub fn noise_diagnostics(buf: &SampleBuffer, window: usize) -> Result<DiagnosticsReport> {
    let x = buf.samples();
    if window == 0 || x.len() < 4 * window {
        return Err(Error::Precondition(format!(
            "diagnostics need at least 4 windows of {window} samples, got {}",
            x.len()
        )));
    }
    let (window_means, window_variances): (Vec<f64>, Vec<f64>) =
        x.chunks_exact(window).map(mean_var).unzip();
    let vmax = window_variances.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let vmin = window_variances.iter().copied().fold(f64::INFINITY, f64::min);
    let variance_ratio = if vmax == 0.0 { f64::NAN } else { vmax / vmin };

    let (mean, var) = mean_var(x);
    let excess_kurtosis = if var > 0.0 {
        x.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / x.len() as f64 / (var * var) - 3.0
    } else {
        f64::NAN
    };

    let max_lag = MAX_DECAY_LAG.min(x.len() / 2).max(2);
    let r = estimate_autocorr(buf, max_lag)?;
    let r0 = r.lags()[0];
    let (normalized_lags, lag_decay_index) = if r0 > 0.0 {
        let norm: Vec<f64> = r.lags().iter().map(|v| v / r0).collect();
        let idx = decay_index(&norm);
        (norm, idx)
    } else {
        (vec![0.0; max_lag], None)
    };

    Ok(DiagnosticsReport {
        window,
        window_means,
        window_variances,
        variance_ratio,
        histogram: histogram(x, HISTOGRAM_BINS),
        excess_kurtosis,
        lag_decay_index,
        normalized_lags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_buffer_has_zero_variance() {
        let buf = SampleBuffer::synthetic(vec![3.0; 4000], 1.0).unwrap();
        let d = noise_diagnostics(&buf, 500).unwrap();
        assert_eq!(d.window_means.len(), 8);
        assert!(d.window_variances.iter().all(|&v| v == 0.0));
        assert!(d.window_means.iter().all(|&m| m == 3.0));
        assert_eq!(d.histogram.counts.iter().sum::<u64>(), 4000);
    }

    #[test]
    fn needs_four_windows() {
        let buf = SampleBuffer::synthetic(vec![1.0; 399], 1.0).unwrap();
        assert!(matches!(noise_diagnostics(&buf, 100), Err(Error::Precondition(_))));
        assert!(noise_diagnostics(&buf, 99).is_ok());
    }

    #[test]
    fn alternating_sequence_never_decorrelates() {
        let x: Vec<f64> = (0..2000).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let d = noise_diagnostics(&SampleBuffer::synthetic(x, 1.0).unwrap(), 100).unwrap();
        assert_eq!(d.lag_decay_index, None);
    }
}
