//! Training phase: averaged noise profile, lagwise whitening, alternate
//! singular-value ratio statistics and empirical threshold calibration.

use serde::{Deserialize, Serialize};

use crate::detector::{count_signals_with, CountingRule};
use crate::dsp::{estimate_autocorr, singular_values, AutocorrMatrix, SampleBuffer};
use crate::error::{Error, Result};

/// Number of ratio statistics, and so the largest signal count reported.
pub const NUM_STATISTICS: usize = 5;
pub const MIN_NOISE_TRIALS: usize = 100;
/// Multiplicative threshold inflation per calibration iteration.
pub const INFLATION_STEP: f64 = 1.01;
pub const MAX_INFLATION_ITERATIONS: usize = 200;
/// Ratio denominators are floored at this fraction of the top singular value.
pub const DENOMINATOR_FLOOR: f64 = 1e-12;

pub type Thresholds = [f64; NUM_STATISTICS];

/// Average autocorrelation of signal-free training records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    avg_lags: Vec<f64>,
    num_training_sets: usize,
    order: usize,
    sample_rate_hz: f64,
}

impl NoiseProfile {
    pub fn new(avg_lags: Vec<f64>, num_training_sets: usize, sample_rate_hz: f64) -> Result<Self> {
        if avg_lags.len() < 2 {
            return Err(Error::InvalidInput("noise profile needs at least two lags".into()));
        }
        if !(avg_lags[0] > 0.0) || avg_lags.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "noise profile must be finite with positive zero-lag power".into(),
            ));
        }
        if num_training_sets == 0 {
            return Err(Error::InvalidInput("noise profile needs a training set".into()));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidInput(format!("bad sample rate {sample_rate_hz}")));
        }
        Ok(Self {
            order: avg_lags.len(),
            avg_lags,
            num_training_sets,
            sample_rate_hz,
        })
    }

    pub fn avg_lags(&self) -> &[f64] {
        &self.avg_lags
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn num_training_sets(&self) -> usize {
        self.num_training_sets
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn autocorr(&self) -> AutocorrMatrix {
        AutocorrMatrix::from_lags(self.avg_lags.clone()).expect("validated on construction")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: NoiseProfile = serde_json::from_str(text).map_err(|e| Error::json("noise profile", e))?;
        NoiseProfile::new(p.avg_lags, p.num_training_sets, p.sample_rate_hz)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serializes") + "\n"
    }
}

/// Elementwise mean of the per-set lag estimates.
pub fn build_noise_profile(noise_sets: &[SampleBuffer], order: usize) -> Result<NoiseProfile> {
    let first = noise_sets
        .first()
        .ok_or_else(|| Error::InvalidInput("no noise sets supplied".into()))?;
    let fs = first.sample_rate_hz();
    let mut sum = vec![0.0; order];
    for set in noise_sets {
        if (set.sample_rate_hz() - fs).abs() > 1e-9 * fs {
            return Err(Error::InvalidInput("noise sets have different sample rates".into()));
        }
        let r = estimate_autocorr(set, order)?;
        sum.iter_mut().zip(r.lags()).for_each(|(s, v)| *s += v);
    }
    let n = noise_sets.len() as f64;
    NoiseProfile::new(sum.into_iter().map(|s| s / n).collect(), noise_sets.len(), fs)
}

/// `R_x - R_eta` lag by lag. The result may be indefinite.
pub fn whiten(rx: &AutocorrMatrix, profile: &NoiseProfile) -> Result<AutocorrMatrix> {
    if rx.order() != profile.order() {
        return Err(Error::InvalidInput(format!(
            "autocorrelation order {} does not match noise profile order {}",
            rx.order(),
            profile.order()
        )));
    }
    rx.sub(&profile.autocorr())
}

/// Alternate singular-value ratios `r_x = lambda_{2x-1} / lambda_{2x+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestStatisticVector {
    pub ratios: Vec<f64>,
    /// `lambda_1 ..= lambda_{2K+1}`.
    pub leading_singular_values: Vec<f64>,
}

impl TestStatisticVector {
    /// Builds the statistics from nonincreasing singular values. Values
    /// below `DENOMINATOR_FLOOR * lambda_1` are raised to that floor on both
    /// sides of a ratio, so two values lost in rounding give exactly 1.
    pub fn from_singular_values(sv: &[f64], k: usize) -> Result<Self> {
        if k == 0 || sv.len() < 2 * k + 1 {
            return Err(Error::Precondition(format!(
                "{k} ratio statistics need at least {} singular values, got {}",
                2 * k + 1,
                sv.len()
            )));
        }
        let top = sv[0];
        let ratios = (0..k)
            .map(|x| {
                let floor = DENOMINATOR_FLOOR * top;
                if top == 0.0 {
                    1.0
                } else {
                    sv[2 * x].max(floor) / sv[2 * x + 2].max(floor)
                }
            })
            .collect();
        Ok(Self {
            ratios,
            leading_singular_values: sv[..2 * k + 1].to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.ratios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratios.is_empty()
    }
}

pub fn compute_test_statistics(rs: &AutocorrMatrix, k: usize) -> Result<TestStatisticVector> {
    if rs.order() < 2 * k + 1 {
        return Err(Error::Precondition(format!(
            "order {} too small for {k} statistics (need {})",
            rs.order(),
            2 * k + 1
        )));
    }
    TestStatisticVector::from_singular_values(&singular_values(rs)?, k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub snr_db: f64,
    pub thresholds: Thresholds,
}

/// Per-SNR threshold rows, serialized as
/// `{"target_pfa": .., "rows": [{"snr_db": .., "thresholds": [5 values]}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdTable {
    pub target_pfa: f64,
    pub rows: Vec<ThresholdRow>,
}

const REFERENCE_TABLE: &str = include_str!("../data/reference_thresholds.json");

impl ThresholdTable {
    /// Published simulation thresholds at `P_fa = 0.1`. The merged
    /// `-19 .. -15 dB` row is stored as five identical rows.
    pub fn reference() -> Self {
        Self::from_json(REFERENCE_TABLE).expect("bundled table is valid")
    }

    pub fn reference_json() -> &'static str {
        REFERENCE_TABLE
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target_pfa > 0.0 && self.target_pfa < 1.0) {
            return Err(Error::InvalidInput(format!("target_pfa {} not in (0, 1)", self.target_pfa)));
        }
        if self.rows.is_empty() {
            return Err(Error::InvalidInput("threshold table has no rows".into()));
        }
        for row in &self.rows {
            if !row.snr_db.is_finite() || row.thresholds.iter().any(|t| !(t.is_finite() && *t > 1.0)) {
                return Err(Error::InvalidInput(format!(
                    "row {} dB: thresholds must be finite and > 1",
                    row.snr_db
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: ThresholdTable = serde_json::from_str(text).map_err(|e| Error::json("threshold table", e))?;
        t.validate()?;
        Ok(t)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes") + "\n"
    }

    /// Row whose SNR is closest to `snr_db`.
    pub fn row_for(&self, snr_db: f64) -> Option<&ThresholdRow> {
        self.rows
            .iter()
            .min_by(|a, b| (a.snr_db - snr_db).abs().total_cmp(&(b.snr_db - snr_db).abs()))
    }

    /// Row with the largest threshold sum; used when the SNR is unknown.
    pub fn most_conservative(&self) -> Option<&ThresholdRow> {
        self.rows.iter().max_by(|a, b| {
            a.thresholds
                .iter()
                .sum::<f64>()
                .total_cmp(&b.thresholds.iter().sum::<f64>())
        })
    }

    /// Collapses consecutive rows whose thresholds differ by at most `tol`
    /// into the first row of each run.
    pub fn merged(&self, tol: f64) -> Self {
        let mut rows: Vec<ThresholdRow> = Vec::new();
        for row in &self.rows {
            let same = rows.last().is_some_and(|last| {
                last.thresholds
                    .iter()
                    .zip(&row.thresholds)
                    .all(|(a, b)| (a - b).abs() <= tol)
            });
            if !same {
                rows.push(row.clone());
            }
        }
        Self {
            target_pfa: self.target_pfa,
            rows,
        }
    }
}

/// Outcome of threshold calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub table: ThresholdTable,
    pub thresholds: Thresholds,
    /// False-alarm rate of `thresholds` on the calibration noise trials.
    pub achieved_pfa: f64,
    pub iterations: usize,
    /// Fraction of signal trials with at least one detection, per SNR.
    pub signal_detection_rates: Vec<(f64, f64)>,
}

fn upper_quantile(values: &mut [f64], level: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let idx = ((level * n as f64).ceil() as usize).clamp(1, n) - 1;
    values[idx]
}

fn false_alarm_rate(trials: &[TestStatisticVector], thresholds: &Thresholds, rule: CountingRule) -> f64 {
    let hits = trials
        .iter()
        .filter(|t| count_signals_with(t, thresholds, rule) > 0)
        .count();
    hits as f64 / trials.len() as f64
}

/// Quantile start followed by 1% inflation until the end-to-end false-alarm
/// rate is at most `target_pfa`.
fn inflate_from_quantiles(
    trials: &[TestStatisticVector],
    target_pfa: f64,
    rule: CountingRule,
) -> Result<(Thresholds, usize)> {
    let mut thresholds = [0.0; NUM_STATISTICS];
    for (i, t) in thresholds.iter_mut().enumerate() {
        let mut column: Vec<f64> = trials.iter().map(|s| s.ratios[i]).collect();
        let q = upper_quantile(&mut column, 1.0 - target_pfa);
        *t = if q > 1.0 { q } else { INFLATION_STEP };
    }
    for iteration in 0..=MAX_INFLATION_ITERATIONS {
        if false_alarm_rate(trials, &thresholds, rule) <= target_pfa {
            return Ok((thresholds, iteration));
        }
        thresholds.iter_mut().for_each(|t| *t *= INFLATION_STEP);
    }
    Err(Error::Calibration(format!(
        "false-alarm rate still above {target_pfa} after {MAX_INFLATION_ITERATIONS} inflation steps"
    )))
}

/// Derives the five thresholds from noise-only statistics.
///
/// Each threshold starts at the empirical `(1 - target_pfa)` quantile of
/// its statistic and the whole vector is inflated by 1% steps until the
/// false-alarm rate of the counting rule on the noise trials is at most
/// `target_pfa`. The result is the elementwise maximum of that procedure
/// over all targets at least as large as `target_pfa` (evaluated at every
/// attainable false-alarm level), which makes thresholds nonincreasing in
/// the target. One table row is emitted per SNR entry of `signal_trials`;
/// signal trials only feed the per-SNR detection report; every
/// table row carries the same H0-driven thresholds.
pub fn calibrate_thresholds(
    noise_trials: &[TestStatisticVector],
    signal_trials: &[(f64, Vec<TestStatisticVector>)],
    target_pfa: f64,
) -> Result<Calibration> {
    calibrate_thresholds_with(noise_trials, signal_trials, target_pfa, CountingRule::default())
}

pub fn calibrate_thresholds_with(
    noise_trials: &[TestStatisticVector],
    signal_trials: &[(f64, Vec<TestStatisticVector>)],
    target_pfa: f64,
    rule: CountingRule,
) -> Result<Calibration> {
    if noise_trials.len() < MIN_NOISE_TRIALS {
        return Err(Error::Calibration(format!(
            "need at least {MIN_NOISE_TRIALS} noise trials, got {}",
            noise_trials.len()
        )));
    }
    if !(target_pfa > 0.0 && target_pfa < 0.5) {
        return Err(Error::Calibration(format!("target_pfa {target_pfa} not in (0, 0.5)")));
    }
    if signal_trials.is_empty() {
        return Err(Error::Calibration("at least one SNR row is required".into()));
    }
    if let Some(t) = noise_trials.iter().find(|t| t.len() < NUM_STATISTICS) {
        return Err(Error::Calibration(format!(
            "noise trial has {} statistics, need {NUM_STATISTICS}",
            t.len()
        )));
    }

    let (mut thresholds, iterations) = inflate_from_quantiles(noise_trials, target_pfa, rule)?;
    let n = noise_trials.len();
    let first_level = (target_pfa * n as f64).floor() as usize + 1;
    for j in first_level..n.div_ceil(2) {
        let level = j as f64 / n as f64;
        if level <= target_pfa || level >= 0.5 {
            continue;
        }
        let (other, _) = inflate_from_quantiles(noise_trials, level, rule)?;
        thresholds.iter_mut().zip(&other).for_each(|(t, o)| *t = t.max(*o));
    }
    let achieved_pfa = false_alarm_rate(noise_trials, &thresholds, rule);

    let signal_detection_rates = signal_trials
        .iter()
        .map(|(snr, trials)| {
            let rate = if trials.is_empty() {
                0.0
            } else {
                trials
                    .iter()
                    .filter(|t| count_signals_with(t, &thresholds, rule) > 0)
                    .count() as f64
                    / trials.len() as f64
            };
            (*snr, rate)
        })
        .collect();

    let rows = signal_trials
        .iter()
        .map(|(snr, _)| ThresholdRow {
            snr_db: *snr,
            thresholds,
        })
        .collect();
    let table = ThresholdTable { target_pfa, rows };

    Ok(Calibration {
        table,
        thresholds,
        achieved_pfa,
        iterations,
        signal_detection_rates,
    })
}
