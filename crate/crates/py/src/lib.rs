//! Python bindings for the detector, its training phase and the benchmark.

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use wmsense_core::calibrate::{self, Thresholds, NUM_STATISTICS};
use wmsense_core::detector::{CountingRule, DetectorConfig};
use wmsense_core::dsp::{self, SampleBuffer};
use wmsense_core::error::Error;
use wmsense_core::{capture, harness, synth};

fn to_py(err: Error) -> PyErr {
    match err {
        Error::InvalidInput(_) | Error::Precondition(_) | Error::Config(_) | Error::Json { .. } => {
            PyValueError::new_err(err.to_string())
        }
        Error::Io { .. } | Error::Capture { .. } => PyOSError::new_err(err.to_string()),
        Error::Calibration(_) => PyRuntimeError::new_err(err.to_string()),
    }
}

fn parse_rule(name: &str) -> PyResult<CountingRule> {
    match name {
        "last_exceedance" => Ok(CountingRule::LastExceedance),
        "prefix" => Ok(CountingRule::Prefix),
        other => Err(PyValueError::new_err(format!(
            "unknown counting rule {other:?}; expected \"last_exceedance\" or \"prefix\""
        ))),
    }
}

fn thresholds_from(values: Vec<f64>) -> PyResult<Thresholds> {
    values
        .try_into()
        .map_err(|v: Vec<f64>| PyValueError::new_err(format!("need {NUM_STATISTICS} thresholds, got {}", v.len())))
}

fn buffer(samples: Vec<f64>, sample_rate_hz: f64) -> PyResult<SampleBuffer> {
    SampleBuffer::synthetic(samples, sample_rate_hz).map_err(to_py)
}

/// Samples described by a SynthConfig JSON document.
#[pyfunction]
fn synthesize(config_json: &str) -> PyResult<Vec<f64>> {
    let cfg: synth::SynthConfig =
        serde_json::from_str(config_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(synth::synthesize(&cfg).map_err(to_py)?.into_samples())
}

#[pyfunction]
#[pyo3(signature = (n, seed, sample_rate_hz = synth::SAMPLE_RATE_HZ))]
fn gen_colored_noise(n: usize, seed: u64, sample_rate_hz: f64) -> PyResult<Vec<f64>> {
    Ok(synth::gen_colored_noise(sample_rate_hz, n, seed).map_err(to_py)?.into_samples())
}

#[pyfunction]
#[pyo3(signature = (mode, carrier_hz, n, seed, sample_rate_hz = synth::SAMPLE_RATE_HZ))]
fn gen_wm_signal(mode: &str, carrier_hz: f64, n: usize, seed: u64, sample_rate_hz: f64) -> PyResult<Vec<f64>> {
    let mode: synth::WmMode =
        serde_json::from_value(serde_json::Value::String(mode.to_owned())).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(synth::gen_wm_signal(&mode, carrier_hz, sample_rate_hz, n, seed)
        .map_err(to_py)?
        .into_samples())
}

/// Biased lags r(0) .. r(order - 1).
#[pyfunction]
fn estimate_autocorr(samples: Vec<f64>, order: usize) -> PyResult<Vec<f64>> {
    let buf = buffer(samples, 1.0)?;
    Ok(dsp::estimate_autocorr(&buf, order).map_err(to_py)?.into_lags())
}

/// Singular values, descending, of the symmetric Toeplitz matrix built from `lags`.
#[pyfunction]
fn singular_values(lags: Vec<f64>) -> PyResult<Vec<f64>> {
    let r = dsp::AutocorrMatrix::from_lags(lags).map_err(to_py)?;
    dsp::singular_values(&r).map_err(to_py)
}

/// `(ratios, leading_singular_values)` for a lag sequence.
#[pyfunction]
#[pyo3(signature = (lags, k = NUM_STATISTICS))]
fn compute_test_statistics(lags: Vec<f64>, k: usize) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let r = dsp::AutocorrMatrix::from_lags(lags).map_err(to_py)?;
    let s = calibrate::compute_test_statistics(&r, k).map_err(to_py)?;
    Ok((s.ratios, s.leading_singular_values))
}

#[pyfunction]
#[pyo3(signature = (samples, sample_rate_hz, window = 1000))]
fn noise_diagnostics(samples: Vec<f64>, sample_rate_hz: f64, window: usize) -> PyResult<String> {
    let report = dsp::noise_diagnostics(&buffer(samples, sample_rate_hz)?, window).map_err(to_py)?;
    Ok(serde_json::to_string(&report).expect("report serializes"))
}

/// Samples and sample rate of an f32le capture with a JSON sidecar.
#[pyfunction]
#[pyo3(signature = (path, meta_path = None))]
fn ingest_capture(path: std::path::PathBuf, meta_path: Option<std::path::PathBuf>) -> PyResult<(Vec<f64>, f64)> {
    let meta = meta_path.unwrap_or_else(|| capture::sidecar_path(&path));
    let buf = capture::ingest_capture(&path, &meta).map_err(to_py)?;
    let fs = buf.sample_rate_hz();
    Ok((buf.into_samples(), fs))
}

#[pyclass(module = "wmsense", frozen)]
struct NoiseProfile {
    inner: calibrate::NoiseProfile,
}

#[pymethods]
impl NoiseProfile {
    /// Averages the lags of several noise-only records.
    #[staticmethod]
    fn build(noise_sets: Vec<Vec<f64>>, order: usize, sample_rate_hz: f64) -> PyResult<Self> {
        let sets = noise_sets
            .into_iter()
            .map(|s| buffer(s, sample_rate_hz))
            .collect::<PyResult<Vec<_>>>()?;
        Ok(Self {
            inner: calibrate::build_noise_profile(&sets, order).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: calibrate::NoiseProfile::from_json(text).map_err(to_py)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn avg_lags(&self) -> Vec<f64> {
        self.inner.avg_lags().to_vec()
    }

    #[getter]
    fn order(&self) -> usize {
        self.inner.order()
    }

    #[getter]
    fn sample_rate_hz(&self) -> f64 {
        self.inner.sample_rate_hz()
    }

    /// Lagwise subtraction of the profile from `lags`.
    fn whiten(&self, lags: Vec<f64>) -> PyResult<Vec<f64>> {
        let r = dsp::AutocorrMatrix::from_lags(lags).map_err(to_py)?;
        Ok(calibrate::whiten(&r, &self.inner).map_err(to_py)?.into_lags())
    }

    fn __repr__(&self) -> String {
        format!(
            "NoiseProfile(order={}, num_training_sets={}, sample_rate_hz={})",
            self.inner.order(),
            self.inner.num_training_sets(),
            self.inner.sample_rate_hz()
        )
    }
}

#[pyclass(module = "wmsense", frozen)]
struct ThresholdTable {
    inner: calibrate::ThresholdTable,
}

#[pymethods]
impl ThresholdTable {
    /// The bundled reference table.
    #[staticmethod]
    fn reference() -> Self {
        Self {
            inner: calibrate::ThresholdTable::reference(),
        }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: calibrate::ThresholdTable::from_json(text).map_err(to_py)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn target_pfa(&self) -> f64 {
        self.inner.target_pfa
    }

    /// `[(snr_db, [tau1..tau5]), ...]`
    #[getter]
    fn rows(&self) -> Vec<(f64, Vec<f64>)> {
        self.inner
            .rows
            .iter()
            .map(|r| (r.snr_db, r.thresholds.to_vec()))
            .collect()
    }

    fn row_for(&self, snr_db: f64) -> Option<Vec<f64>> {
        self.inner.row_for(snr_db).map(|r| r.thresholds.to_vec())
    }

    fn most_conservative(&self) -> Option<Vec<f64>> {
        self.inner.most_conservative().map(|r| r.thresholds.to_vec())
    }
}

/// Thresholds from noise-only ratio vectors; returns `(thresholds, achieved_pfa)`.
#[pyfunction]
#[pyo3(signature = (noise_ratios, target_pfa = 0.1, rule = "last_exceedance"))]
fn calibrate_thresholds(noise_ratios: Vec<Vec<f64>>, target_pfa: f64, rule: &str) -> PyResult<(Vec<f64>, f64)> {
    let trials: Vec<calibrate::TestStatisticVector> = noise_ratios
        .into_iter()
        .map(|ratios| calibrate::TestStatisticVector {
            ratios,
            leading_singular_values: Vec::new(),
        })
        .collect();
    let cal = calibrate::calibrate_thresholds_with(&trials, &[(0.0, Vec::new())], target_pfa, parse_rule(rule)?)
        .map_err(to_py)?;
    Ok((cal.thresholds.to_vec(), cal.achieved_pfa))
}

#[pyclass(module = "wmsense", frozen)]
struct DetectionReport {
    inner: wmsense_core::DetectionReport,
}

#[pymethods]
impl DetectionReport {
    #[getter]
    fn num_signals(&self) -> usize {
        self.inner.num_signals
    }

    #[getter]
    fn carriers_hz(&self) -> Vec<f64> {
        self.inner.carriers_hz.clone()
    }

    #[getter]
    fn ratios(&self) -> Vec<f64> {
        self.inner.statistics.ratios.clone()
    }

    #[getter]
    fn leading_singular_values(&self) -> Vec<f64> {
        self.inner.statistics.leading_singular_values.clone()
    }

    #[getter]
    fn thresholds_used(&self) -> Vec<f64> {
        self.inner.thresholds_used.to_vec()
    }

    /// Count implied by the statistics before peak picking.
    #[getter]
    fn counted_signals(&self) -> usize {
        self.inner.counted_signals
    }

    /// `(freqs_hz, power)` of the reconstructed spectrum, if anything was detected.
    #[getter]
    fn psd(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        self.inner
            .psd
            .as_ref()
            .map(|p| (p.freqs_hz.clone(), p.power.clone()))
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn __repr__(&self) -> String {
        format!(
            "DetectionReport(num_signals={}, carriers_hz={:?})",
            self.inner.num_signals, self.inner.carriers_hz
        )
    }
}

#[pyclass(module = "wmsense", frozen)]
struct Detector {
    inner: wmsense_core::Detector,
}

#[pymethods]
impl Detector {
    #[new]
    #[pyo3(signature = (profile, thresholds, nfft = dsp::DEFAULT_NFFT, min_separation_hz = wmsense_core::detector::DEFAULT_MIN_SEPARATION_HZ, rule = "last_exceedance"))]
    fn new(
        profile: &NoiseProfile,
        thresholds: Vec<f64>,
        nfft: usize,
        min_separation_hz: f64,
        rule: &str,
    ) -> PyResult<Self> {
        let config = DetectorConfig {
            nfft,
            min_separation_hz,
            rule: parse_rule(rule)?,
        };
        let inner = wmsense_core::Detector::new(profile.inner.clone(), thresholds_from(thresholds)?, config)
            .map_err(to_py)?;
        Ok(Self { inner })
    }

    fn detect(&self, py: Python<'_>, samples: Vec<f64>, sample_rate_hz: f64) -> PyResult<DetectionReport> {
        let buf = buffer(samples, sample_rate_hz)?;
        let inner = py.detach(|| self.inner.detect(&buf)).map_err(to_py)?;
        Ok(DetectionReport { inner })
    }
}

/// Runs the benchmark from BenchConfig JSON; returns `(summary_csv, detail_csv)`.
#[pyfunction]
#[pyo3(signature = (config_json = "{}"))]
fn run_bench(py: Python<'_>, config_json: &str) -> PyResult<(String, String)> {
    let cfg: harness::BenchConfig =
        serde_json::from_str(config_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let result = py.detach(|| harness::run_bench(&cfg)).map_err(to_py)?;
    Ok((result.summary_csv(), result.detail_csv()))
}

#[pymodule]
fn wmsense(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SAMPLE_RATE_HZ", synth::SAMPLE_RATE_HZ)?;
    m.add("NUM_SAMPLES", synth::NUM_SAMPLES)?;
    m.add_class::<NoiseProfile>()?;
    m.add_class::<ThresholdTable>()?;
    m.add_class::<Detector>()?;
    m.add_class::<DetectionReport>()?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(gen_colored_noise, m)?)?;
    m.add_function(wrap_pyfunction!(gen_wm_signal, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_autocorr, m)?)?;
    m.add_function(wrap_pyfunction!(singular_values, m)?)?;
    m.add_function(wrap_pyfunction!(compute_test_statistics, m)?)?;
    m.add_function(wrap_pyfunction!(noise_diagnostics, m)?)?;
    m.add_function(wrap_pyfunction!(ingest_capture, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_thresholds, m)?)?;
    m.add_function(wrap_pyfunction!(run_bench, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_names() {
        assert_eq!(parse_rule("prefix").unwrap(), CountingRule::Prefix);
        assert_eq!(parse_rule("last_exceedance").unwrap(), CountingRule::LastExceedance);
        assert!(parse_rule("majority").is_err());
    }

    #[test]
    fn threshold_length_checked() {
        assert!(thresholds_from(vec![1.5; 5]).is_ok());
        assert!(thresholds_from(vec![1.5; 4]).is_err());
    }
}
