//! Detection phase: whiten, count signals from the ratio statistics,
//! reconstruct the signal autocorrelation from the leading singular
//! triplets and pick carrier frequencies from its spectrum.

use serde::{Deserialize, Serialize};

use crate::calibrate::{whiten, NoiseProfile, TestStatisticVector, Thresholds, NUM_STATISTICS};
use crate::dsp::{
    estimate_autocorr, psd_from_autocorr, singular_values, svd, AutocorrMatrix, PsdEstimate, SampleBuffer,
    SvdDecomposition, DEFAULT_NFFT,
};
use crate::error::{Error, Result};

pub const DEFAULT_MIN_SEPARATION_HZ: f64 = 400e3;

/// How exceedances of the ratio statistics turn into a signal count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountingRule {
    /// Largest `x` with `r_x > tau_x`. Equal-power signals share nearly
    /// equal singular values, so only the ratio just past the last signal
    /// pair is large; this rule still counts all of them.
    #[default]
    LastExceedance,
    /// Largest `k` with `r_x > tau_x` for every `x <= k`.
    Prefix,
}

/// Signal count under the default rule.
pub fn count_signals(stats: &TestStatisticVector, thresholds: &Thresholds) -> usize {
    count_signals_with(stats, thresholds, CountingRule::default())
}

pub fn count_signals_with(stats: &TestStatisticVector, thresholds: &Thresholds, rule: CountingRule) -> usize {
    let exceeds = stats
        .ratios
        .iter()
        .zip(thresholds)
        .map(|(r, t)| r > t);
    match rule {
        CountingRule::LastExceedance => exceeds
            .enumerate()
            .filter(|(_, hit)| *hit)
            .map(|(i, _)| i + 1)
            .next_back()
            .unwrap_or(0),
        CountingRule::Prefix => exceeds.take_while(|hit| *hit).count(),
    }
}

/// First row of `U_s S_s V_s^T` built from the leading `2 n_signals`
/// singular triplets.
pub fn reconstruct_signal_autocorr(decomp: &SvdDecomposition, n_signals: usize) -> Result<Vec<f64>> {
    if n_signals == 0 {
        return Err(Error::InvalidInput("nothing to reconstruct for zero signals".into()));
    }
    let rank = 2 * n_signals;
    let order = decomp.order();
    if rank > order {
        return Err(Error::Precondition(format!(
            "{n_signals} signals need order >= {rank}, got {order}"
        )));
    }
    let u = decomp.left_vectors();
    let v = decomp.right_vectors();
    let s = decomp.singular_values();
    Ok((0..order)
        .map(|j| (0..rank).map(|i| s[i] * u[(0, i)] * v[(j, i)]).sum())
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeakPick {
    /// Ascending.
    pub carriers_hz: Vec<f64>,
    /// How many requested peaks could not be placed.
    pub shortfall: usize,
}

/// Greedy choice of the `n_signals` highest interior local maxima at least
/// `min_separation_hz` apart, each refined by a parabola through the peak
/// bin and its neighbours.
pub fn locate_peaks(psd: &PsdEstimate, n_signals: usize, min_separation_hz: f64) -> Result<PeakPick> {
    if psd.len() < 3 {
        return Err(Error::InvalidInput("spectrum needs at least three bins".into()));
    }
    if n_signals == 0 {
        return Err(Error::InvalidInput("n_signals must be at least 1".into()));
    }
    let p = &psd.power;
    let mut maxima: Vec<usize> = (1..p.len() - 1)
        .filter(|&k| p[k] > p[k - 1] && p[k] >= p[k + 1] && p[k] > 0.0)
        .collect();
    maxima.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));

    let df = psd.bin_width_hz();
    let mut chosen: Vec<f64> = Vec::with_capacity(n_signals);
    for k in maxima {
        if chosen.len() == n_signals {
            break;
        }
        let (a, b, c) = (p[k - 1], p[k], p[k + 1]);
        let denom = a - 2.0 * b + c;
        let offset = if denom < 0.0 { (0.5 * (a - c) / denom).clamp(-0.5, 0.5) } else { 0.0 };
        let f = psd.freqs_hz[k] + offset * df;
        if chosen.iter().all(|&g| (g - f).abs() >= min_separation_hz) {
            chosen.push(f);
        }
    }
    chosen.sort_by(f64::total_cmp);
    Ok(PeakPick {
        shortfall: n_signals - chosen.len(),
        carriers_hz: chosen,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub nfft: usize,
    pub min_separation_hz: f64,
    pub rule: CountingRule,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            nfft: DEFAULT_NFFT,
            min_separation_hz: DEFAULT_MIN_SEPARATION_HZ,
            rule: CountingRule::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionReport {
    /// Number of located carriers (`carriers_hz.len()`).
    pub num_signals: usize,
    pub carriers_hz: Vec<f64>,
    pub statistics: TestStatisticVector,
    /// Spectrum of the reconstructed signal autocorrelation; `None` when
    /// nothing was detected.
    pub psd: Option<PsdEstimate>,
    pub thresholds_used: Thresholds,
    /// Count implied by the statistics before peak picking.
    pub counted_signals: usize,
    pub psd_csv_path: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct ReportJson {
    num_signals: usize,
    carriers_hz: Vec<f64>,
    ratios: Vec<f64>,
    leading_singular_values: Vec<f64>,
    thresholds_used: Thresholds,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    psd_csv_path: Option<String>,
}

impl DetectionReport {
    pub fn shortfall(&self) -> usize {
        self.counted_signals - self.num_signals
    }

    pub fn to_json(&self) -> String {
        let view = ReportJson {
            num_signals: self.num_signals,
            carriers_hz: self.carriers_hz.clone(),
            ratios: self.statistics.ratios.clone(),
            leading_singular_values: self.statistics.leading_singular_values.clone(),
            thresholds_used: self.thresholds_used,
            psd_csv_path: self.psd_csv_path.clone(),
        };
        serde_json::to_string_pretty(&view).expect("report serializes") + "\n"
    }
}

/// Noise profile plus thresholds, applied buffer by buffer.
#[derive(Debug, Clone)]
pub struct Detector {
    profile: NoiseProfile,
    thresholds: Thresholds,
    config: DetectorConfig,
}

impl Detector {
    pub fn new(profile: NoiseProfile, thresholds: Thresholds, config: DetectorConfig) -> Result<Self> {
        if thresholds.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::InvalidInput(format!("bad thresholds {thresholds:?}")));
        }
        if profile.order() < 2 * NUM_STATISTICS + 1 {
            return Err(Error::InvalidInput(format!(
                "profile order {} below the minimum {}",
                profile.order(),
                2 * NUM_STATISTICS + 1
            )));
        }
        if !config.nfft.is_power_of_two() || config.nfft < 2 * profile.order() {
            return Err(Error::InvalidInput(format!(
                "nfft {} must be a power of two >= 2 L = {}",
                config.nfft,
                2 * profile.order()
            )));
        }
        Ok(Self {
            profile,
            thresholds,
            config,
        })
    }

    pub fn profile(&self) -> &NoiseProfile {
        &self.profile
    }

    pub fn thresholds(&self) -> &Thresholds {
        &self.thresholds
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    fn check_rate(&self, fs_hz: f64) -> Result<()> {
        let fs = self.profile.sample_rate_hz();
        if (fs_hz - fs).abs() > 1e-9 * fs {
            return Err(Error::InvalidInput(format!(
                "buffer sampled at {fs_hz} Hz, profile trained at {fs} Hz"
            )));
        }
        Ok(())
    }

    /// Ratio statistics of the whitened autocorrelation (no vectors needed).
    pub fn statistics(&self, buf: &SampleBuffer) -> Result<TestStatisticVector> {
        self.check_rate(buf.sample_rate_hz())?;
        let rx = estimate_autocorr(buf, self.profile.order())?;
        self.statistics_from_autocorr(&rx)
    }

    pub fn statistics_from_autocorr(&self, rx: &AutocorrMatrix) -> Result<TestStatisticVector> {
        let rs = whiten(rx, &self.profile)?;
        TestStatisticVector::from_singular_values(&singular_values(&rs)?, NUM_STATISTICS)
    }

    pub fn count(&self, stats: &TestStatisticVector) -> usize {
        count_signals_with(stats, &self.thresholds, self.config.rule)
    }

    pub fn detect(&self, buf: &SampleBuffer) -> Result<DetectionReport> {
        self.check_rate(buf.sample_rate_hz())?;
        let rx = estimate_autocorr(buf, self.profile.order())?;
        self.detect_autocorr(&rx, buf.sample_rate_hz())
    }

    /// Detection from an already estimated received autocorrelation.
    pub fn detect_autocorr(&self, rx: &AutocorrMatrix, fs_hz: f64) -> Result<DetectionReport> {
        self.check_rate(fs_hz)?;
        let rs = whiten(rx, &self.profile)?;
        let stats = TestStatisticVector::from_singular_values(&singular_values(&rs)?, NUM_STATISTICS)?;
        let counted = self.count(&stats);
        let mut report = DetectionReport {
            num_signals: 0,
            carriers_hz: Vec::new(),
            statistics: stats,
            psd: None,
            thresholds_used: self.thresholds,
            counted_signals: counted,
            psd_csv_path: None,
        };
        if counted == 0 {
            return Ok(report);
        }
        let decomp = svd(&rs)?;
        let lags = reconstruct_signal_autocorr(&decomp, counted)?;
        let psd = psd_from_autocorr(&lags, fs_hz, self.config.nfft)?;
        let peaks = locate_peaks(&psd, counted, self.config.min_separation_hz)?;
        report.num_signals = peaks.carriers_hz.len();
        report.carriers_hz = peaks.carriers_hz;
        report.psd = Some(psd);
        Ok(report)
    }
}

/// One-shot detection with default detector settings.
pub fn detect(
    buf: &SampleBuffer,
    profile: &NoiseProfile,
    thresholds: &Thresholds,
    order: usize,
) -> Result<DetectionReport> {
    if order != profile.order() {
        return Err(Error::InvalidInput(format!(
            "requested order {order} does not match profile order {}",
            profile.order()
        )));
    }
    Detector::new(profile.clone(), *thresholds, DetectorConfig::default())?.detect(buf)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    const ROW_25: Thresholds = [1.569, 1.288, 1.242, 1.228, 1.157];

    fn stats(r: [f64; 5]) -> TestStatisticVector {
        TestStatisticVector {
            ratios: r.to_vec(),
            leading_singular_values: vec![1.0; 11],
        }
    }

    #[test]
    fn counting_examples() {
        assert_eq!(count_signals(&stats([1.0; 5]), &ROW_25), 0);
        assert_eq!(count_signals(&stats([50.0, 30.0, 1.0, 1.0, 1.0]), &ROW_25), 2);
        assert_eq!(count_signals(&stats([50.0, 1.0, 30.0, 1.0, 1.0]), &ROW_25), 3);
        assert_eq!(count_signals(&stats([1.0, 1.0, 1.0, 9.0, 1.0]), &ROW_25), 4);
        let prefix = CountingRule::Prefix;
        assert_eq!(count_signals_with(&stats([1.0; 5]), &ROW_25, prefix), 0);
        assert_eq!(count_signals_with(&stats([50.0, 30.0, 1.0, 1.0, 1.0]), &ROW_25, prefix), 2);
        assert_eq!(count_signals_with(&stats([50.0, 1.0, 30.0, 1.0, 1.0]), &ROW_25, prefix), 1);
    }

    #[test]
    fn threshold_equality_is_not_a_detection() {
        assert_eq!(count_signals(&stats(ROW_25), &ROW_25), 0);
    }

    fn tone_lags(f: f64, fs: f64, order: usize) -> Vec<f64> {
        (0..order).map(|k| 0.5 * (2.0 * PI * f * k as f64 / fs).cos()).collect()
    }

    #[test]
    fn rank_two_reconstruction_is_exact_for_a_tone() {
        let lags = tone_lags(8e6, 33.33e6, 100);
        let d = svd(&AutocorrMatrix::from_lags(lags.clone()).unwrap()).unwrap();
        let rec = reconstruct_signal_autocorr(&d, 1).unwrap();
        let err: f64 = rec.iter().zip(&lags).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = lags.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err / norm < 1e-6, "{}", err / norm);
    }

    #[test]
    fn full_rank_reconstruction_returns_first_row() {
        let lags = vec![3.0, -1.0, 0.5, 0.25, -0.125, 0.1];
        let d = svd(&AutocorrMatrix::from_lags(lags.clone()).unwrap()).unwrap();
        let rec = reconstruct_signal_autocorr(&d, 3).unwrap();
        for (a, b) in rec.iter().zip(&lags) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(reconstruct_signal_autocorr(&d, 0).is_err());
        assert!(reconstruct_signal_autocorr(&d, 4).is_err());
    }

    #[test]
    fn tone_peak_within_half_bin() {
        let fs = 33.33e6;
        for f0 in [8e6, 8e6 + 1234.5, 6.5e6 - 777.0] {
            let lags = tone_lags(f0, fs, 500);
            let psd = psd_from_autocorr(&lags, fs, 8192).unwrap();
            let pick = locate_peaks(&psd, 1, DEFAULT_MIN_SEPARATION_HZ).unwrap();
            assert_eq!(pick.shortfall, 0);
            let err = (pick.carriers_hz[0] - f0).abs();
            assert!(err <= psd.bin_width_hz() / 2.0, "{f0}: err {err}");
        }
    }

    #[test]
    fn close_peaks_collapse_with_shortfall() {
        // one smooth bump has a single local maximum
        let freqs: Vec<f64> = (0..401).map(|i| i as f64 * 10e3).collect();
        let power = freqs.iter().map(|f| (-((f - 2e6) / 300e3).powi(2)).exp()).collect();
        let psd = PsdEstimate { freqs_hz: freqs, power };
        let pick = locate_peaks(&psd, 2, 400e3).unwrap();
        assert_eq!(pick.carriers_hz.len(), 1);
        assert!((pick.carriers_hz[0] - 2e6).abs() < 1e3);
        assert_eq!(pick.shortfall, 1);
    }

    #[test]
    fn report_json_has_exact_fields() {
        let report = DetectionReport {
            num_signals: 0,
            carriers_hz: vec![],
            statistics: stats([1.0; 5]),
            psd: None,
            thresholds_used: ROW_25,
            counted_signals: 0,
            psd_csv_path: None,
        };
        let v: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort();
        assert_eq!(keys, ["carriers_hz", "leading_singular_values", "num_signals", "ratios", "thresholds_used"]);
        let with_path = DetectionReport {
            psd_csv_path: Some("psd.csv".into()),
            ..report
        };
        assert!(with_path.to_json().contains("\"psd_csv_path\": \"psd.csv\""));
    }
}
