//! Monte Carlo benchmark over an (SNR, L) grid.
//!
//! For every SNR a fresh noise profile (three synthetic noise records),
//! a calibration set of noise-only trials, held-out noise-only trials and
//! signal trials are generated from seeds split off the master seed. Trial
//! data depends on the SNR and the trial index only, so the different `L`
//! values at one SNR see the same records. Lags are estimated once at the
//! largest `L` and truncated for the smaller ones.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::{
    calibrate_thresholds_with, NoiseProfile, TestStatisticVector, ThresholdTable, Thresholds, NUM_STATISTICS,
};
use crate::detector::{Detector, DetectorConfig};
use crate::dsp::{estimate_autocorr, AutocorrMatrix, PsdEstimate};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_for};
use crate::synth::{
    gen_colored_noise, synthesize, SynthConfig, WmMode, CARRIER_PLAN_HZ, MAX_SIGNALS, NUM_SAMPLES, SAMPLE_RATE_HZ,
};

pub const MIN_TRIALS_PER_POINT: usize = 50;
pub const PROFILE_SETS: usize = 3;

const STREAM_PROFILE: u64 = 1;
const STREAM_CALIBRATION: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_SIGNAL: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalCountDistribution {
    Uniform { min: usize, max: usize },
    Fixed(usize),
}

impl SignalCountDistribution {
    fn bounds(&self) -> (usize, usize) {
        match *self {
            Self::Uniform { min, max } => (min, max),
            Self::Fixed(n) => (n, n),
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        let (lo, hi) = self.bounds();
        rng.random_range(lo..=hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub snr_grid_db: Vec<f64>,
    pub l_grid: Vec<usize>,
    pub trials_per_point: usize,
    pub num_signals_distribution: SignalCountDistribution,
    pub target_pfa: f64,
    pub master_seed: u64,
    /// Noise-only trials used to calibrate thresholds at each grid point.
    pub calibration_trials: usize,
    pub sample_rate_hz: f64,
    pub num_samples: usize,
    pub mode: WmMode,
    /// A carrier counts as found when within this distance of the truth.
    pub carrier_tolerance_hz: f64,
    pub detector: DetectorConfig,
    /// Signal trials per grid point whose reconstructed PSD is kept.
    pub psd_dump_trials: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            snr_grid_db: (-30..=-15).map(f64::from).collect(),
            l_grid: vec![100, 200, 500],
            trials_per_point: 200,
            num_signals_distribution: SignalCountDistribution::Uniform { min: 1, max: MAX_SIGNALS },
            target_pfa: 0.1,
            master_seed: 0,
            calibration_trials: 1000,
            sample_rate_hz: SAMPLE_RATE_HZ,
            num_samples: NUM_SAMPLES,
            mode: WmMode::loud(),
            carrier_tolerance_hz: 100e3,
            detector: DetectorConfig::default(),
            psd_dump_trials: 0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.snr_grid_db.is_empty() || self.l_grid.is_empty() {
            return bad("snr_grid_db and l_grid must be nonempty".into());
        }
        if self.snr_grid_db.iter().any(|s| !s.is_finite()) {
            return bad("snr grid values must be finite".into());
        }
        if self.trials_per_point < MIN_TRIALS_PER_POINT {
            return bad(format!(
                "trials_per_point must be at least {MIN_TRIALS_PER_POINT}, got {}",
                self.trials_per_point
            ));
        }
        if self.calibration_trials < crate::calibrate::MIN_NOISE_TRIALS {
            return bad(format!(
                "calibration_trials must be at least {}, got {}",
                crate::calibrate::MIN_NOISE_TRIALS,
                self.calibration_trials
            ));
        }
        if !(self.target_pfa > 0.0 && self.target_pfa < 0.5) {
            return bad(format!("target_pfa {} not in (0, 0.5)", self.target_pfa));
        }
        for &l in &self.l_grid {
            if l < 2 * NUM_STATISTICS + 1 || 2 * l > self.num_samples {
                return bad(format!(
                    "L = {l} must be in [{}, num_samples / 2]",
                    2 * NUM_STATISTICS + 1
                ));
            }
            if !self.detector.nfft.is_power_of_two() || self.detector.nfft < 2 * l {
                return bad(format!("nfft {} too small for L = {l}", self.detector.nfft));
            }
        }
        let (lo, hi) = self.num_signals_distribution.bounds();
        if lo < 1 || lo > hi || hi > MAX_SIGNALS {
            return bad(format!("signal count range {lo}..={hi} must lie in 1..={MAX_SIGNALS}"));
        }
        if !(self.carrier_tolerance_hz > 0.0) {
            return bad("carrier_tolerance_hz must be positive".into());
        }
        SynthConfig {
            sample_rate_hz: self.sample_rate_hz,
            num_samples: self.num_samples,
            carriers_hz: CARRIER_PLAN_HZ[..hi].to_vec(),
            snr_db: self.snr_grid_db[0],
            mode: self.mode,
            seed: 0,
        }
        .validate()
    }
}

/// Aggregates for one (SNR, L) grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointResult {
    pub snr_db: f64,
    pub order: usize,
    pub trials: usize,
    pub measured_pd: f64,
    pub measured_pfa: f64,
    pub pd_stderr: f64,
    pub pfa_stderr: f64,
    /// Mean absolute difference between detected and true signal counts.
    pub mean_count_error: f64,
    /// Over trials with the correct count; NaN when there are none.
    pub carrier_rmse_hz: f64,
    pub thresholds: Thresholds,
    /// False-alarm rate on the calibration trials.
    pub calibration_pfa: f64,
}

#[derive(Debug, Clone)]
pub struct PsdDump {
    pub snr_db: f64,
    pub order: usize,
    pub trial: usize,
    pub psd: PsdEstimate,
}

impl PsdDump {
    pub fn file_name(&self) -> String {
        format!("psd_snr{}_L{}_trial{}.csv", self.snr_db, self.order, self.trial)
    }
}

#[derive(Debug, Clone, Default)]
pub struct BenchResult {
    pub points: Vec<PointResult>,
    pub psd_dumps: Vec<PsdDump>,
}

pub const SUMMARY_HEADER: &str = "snr_db,L,pd,pfa,pd_stderr,pfa_stderr,carrier_rmse_hz";
pub const DETAIL_HEADER: &str =
    "snr_db,L,trials,pd,pfa,mean_count_error,carrier_rmse_hz,calibration_pfa,tau1,tau2,tau3,tau4,tau5";

impl BenchResult {
    pub fn point(&self, snr_db: f64, order: usize) -> Option<&PointResult> {
        self.points
            .iter()
            .find(|p| p.order == order && (p.snr_db - snr_db).abs() < 1e-9)
    }

    pub fn summary_csv(&self) -> String {
        let mut out = format!("{SUMMARY_HEADER}\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{:.4},{:.4},{:.4},{:.4},{:.1}\n",
                p.snr_db, p.order, p.measured_pd, p.measured_pfa, p.pd_stderr, p.pfa_stderr, p.carrier_rmse_hz
            ));
        }
        out
    }

    pub fn detail_csv(&self) -> String {
        let mut out = format!("{DETAIL_HEADER}\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{:.4},{:.4},{:.4},{:.1},{:.4}",
                p.snr_db,
                p.order,
                p.trials,
                p.measured_pd,
                p.measured_pfa,
                p.mean_count_error,
                p.carrier_rmse_hz,
                p.calibration_pfa
            ));
            for t in &p.thresholds {
                out.push_str(&format!(",{t:.4}"));
            }
            out.push('\n');
        }
        out
    }
}

struct SignalTrial {
    lags: Vec<f64>,
    carriers_hz: Vec<f64>,
}

fn noise_lags(cfg: &BenchConfig, seed: u64, max_order: usize) -> Result<Vec<f64>> {
    let buf = gen_colored_noise(cfg.sample_rate_hz, cfg.num_samples, seed)?;
    Ok(estimate_autocorr(&buf, max_order)?.into_lags())
}

fn signal_trial(cfg: &BenchConfig, snr_db: f64, seed: u64, max_order: usize) -> Result<SignalTrial> {
    let mut rng = rng_for(seed);
    let n = cfg.num_signals_distribution.sample(&mut rng);
    let synth = SynthConfig {
        sample_rate_hz: cfg.sample_rate_hz,
        num_samples: cfg.num_samples,
        carriers_hz: CARRIER_PLAN_HZ[..n].to_vec(),
        snr_db,
        mode: cfg.mode,
        seed: derive_seed(seed, &[0]),
    };
    let buf = synthesize(&synth)?;
    Ok(SignalTrial {
        lags: estimate_autocorr(&buf, max_order)?.into_lags(),
        carriers_hz: synth.carriers_hz,
    })
}

fn truncated(lags: &[f64], order: usize) -> AutocorrMatrix {
    AutocorrMatrix::from_lags(lags[..order].to_vec()).expect("finite lags")
}

fn stderr(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Runs the benchmark, calibrating thresholds at every grid point.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchResult> {
    run_bench_with(cfg, None, |_| {})
}

/// Runs the benchmark. With `table`, thresholds come from its row nearest
/// each SNR instead of in-run calibration. `progress` sees each finished
/// grid point.
pub fn run_bench_with(
    cfg: &BenchConfig,
    table: Option<&ThresholdTable>,
    mut progress: impl FnMut(&PointResult),
) -> Result<BenchResult> {
    cfg.validate()?;
    if let Some(t) = table {
        t.validate().map_err(|e| Error::Config(format!("threshold table unusable: {e}")))?;
    }
    let max_order = *cfg.l_grid.iter().max().expect("nonempty grid");
    let mut result = BenchResult::default();

    for (si, &snr_db) in cfg.snr_grid_db.iter().enumerate() {
        let si = si as u64;
        let profile_lags: Vec<Vec<f64>> = (0..PROFILE_SETS as u64)
            .into_par_iter()
            .map(|j| noise_lags(cfg, derive_seed(cfg.master_seed, &[STREAM_PROFILE, si, j]), max_order))
            .collect::<Result<_>>()?;
        let calibration_lags: Vec<Vec<f64>> = (0..cfg.calibration_trials as u64)
            .into_par_iter()
            .map(|t| noise_lags(cfg, derive_seed(cfg.master_seed, &[STREAM_CALIBRATION, si, t]), max_order))
            .collect::<Result<_>>()?;
        let held_out_lags: Vec<Vec<f64>> = (0..cfg.trials_per_point as u64)
            .into_par_iter()
            .map(|t| noise_lags(cfg, derive_seed(cfg.master_seed, &[STREAM_NOISE, si, t]), max_order))
            .collect::<Result<_>>()?;
        let signal_trials: Vec<SignalTrial> = (0..cfg.trials_per_point as u64)
            .into_par_iter()
            .map(|t| signal_trial(cfg, snr_db, derive_seed(cfg.master_seed, &[STREAM_SIGNAL, si, t]), max_order))
            .collect::<Result<_>>()?;

        for &order in &cfg.l_grid {
            let mut avg = vec![0.0; order];
            for lags in &profile_lags {
                avg.iter_mut().zip(&lags[..order]).for_each(|(a, v)| *a += v / PROFILE_SETS as f64);
            }
            let profile = NoiseProfile::new(avg, PROFILE_SETS, cfg.sample_rate_hz)?;
            // Placeholder thresholds only used to compute statistics.
            let probe = Detector::new(profile.clone(), [f64::MAX; NUM_STATISTICS], cfg.detector)?;
            let stats_of = |lags: &Vec<f64>| probe.statistics_from_autocorr(&truncated(lags, order));

            let (thresholds, calibration_pfa) = match table {
                Some(t) => {
                    let row = t
                        .row_for(snr_db)
                        .ok_or_else(|| Error::Config("threshold table has no rows".into()))?;
                    (row.thresholds, f64::NAN)
                }
                None => {
                    let cal_stats: Vec<TestStatisticVector> =
                        calibration_lags.par_iter().map(stats_of).collect::<Result<_>>()?;
                    let cal = calibrate_thresholds_with(
                        &cal_stats,
                        &[(snr_db, Vec::new())],
                        cfg.target_pfa,
                        cfg.detector.rule,
                    )?;
                    (cal.thresholds, cal.achieved_pfa)
                }
            };
            let detector = Detector::new(profile, thresholds, cfg.detector)?;

            let false_alarms: usize = held_out_lags
                .par_iter()
                .map(|lags| {
                    let stats = detector.statistics_from_autocorr(&truncated(lags, order))?;
                    Ok(usize::from(detector.count(&stats) > 0))
                })
                .collect::<Result<Vec<usize>>>()?
                .into_iter()
                .sum();

            let outcomes: Vec<(bool, usize, Vec<f64>, Option<PsdEstimate>)> = signal_trials
                .par_iter()
                .enumerate()
                .map(|(t, trial)| {
                    let report = detector.detect_autocorr(&truncated(&trial.lags, order), cfg.sample_rate_hz)?;
                    let truth = &trial.carriers_hz;
                    let count_ok = report.num_signals == truth.len() && report.counted_signals == truth.len();
                    let errors: Vec<f64> = if count_ok {
                        report.carriers_hz.iter().zip(truth).map(|(e, f)| e - f).collect()
                    } else {
                        Vec::new()
                    };
                    let hit = count_ok && errors.iter().all(|e| e.abs() <= cfg.carrier_tolerance_hz);
                    let count_error = report.counted_signals.abs_diff(truth.len());
                    let psd = if t < cfg.psd_dump_trials { report.psd } else { None };
                    Ok((hit, count_error, errors, psd))
                })
                .collect::<Result<_>>()?;

            let n = cfg.trials_per_point;
            let hits = outcomes.iter().filter(|o| o.0).count();
            let count_error_sum: usize = outcomes.iter().map(|o| o.1).sum();
            let squared: Vec<f64> = outcomes.iter().flat_map(|o| o.2.iter().map(|e| e * e)).collect();
            let carrier_rmse_hz = if squared.is_empty() {
                f64::NAN
            } else {
                (squared.iter().sum::<f64>() / squared.len() as f64).sqrt()
            };
            for (t, o) in outcomes.into_iter().enumerate() {
                if let Some(psd) = o.3 {
                    result.psd_dumps.push(PsdDump {
                        snr_db,
                        order,
                        trial: t,
                        psd,
                    });
                }
            }
            let pd = hits as f64 / n as f64;
            let pfa = false_alarms as f64 / n as f64;
            let point = PointResult {
                snr_db,
                order,
                trials: n,
                measured_pd: pd,
                measured_pfa: pfa,
                pd_stderr: stderr(pd, n),
                pfa_stderr: stderr(pfa, n),
                mean_count_error: count_error_sum as f64 / n as f64,
                carrier_rmse_hz,
                thresholds,
                calibration_pfa,
            };
            progress(&point);
            result.points.push(point);
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_validation() {
        let cfg = BenchConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.snr_grid_db.len(), 16);
        assert_eq!(cfg.l_grid, vec![100, 200, 500]);

        let mut c = cfg.clone();
        c.trials_per_point = 49;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = cfg.clone();
        c.l_grid.clear();
        assert!(c.validate().is_err());
        let mut c = cfg.clone();
        c.num_signals_distribution = SignalCountDistribution::Fixed(6);
        assert!(c.validate().is_err());
        let mut c = cfg;
        c.l_grid = vec![20_000];
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_json_uses_defaults_for_missing_fields() {
        let cfg: BenchConfig =
            serde_json::from_str(r#"{"snr_grid_db": [-20.0], "num_signals_distribution": {"fixed": 5}}"#).unwrap();
        assert_eq!(cfg.snr_grid_db, vec![-20.0]);
        assert_eq!(cfg.num_signals_distribution, SignalCountDistribution::Fixed(5));
        assert_eq!(cfg.trials_per_point, 200);
        assert!(serde_json::from_str::<BenchConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn csv_shapes() {
        let cfg = BenchConfig {
            snr_grid_db: vec![-15.0, -25.0],
            l_grid: vec![40, 60],
            trials_per_point: 50,
            calibration_trials: 100,
            num_samples: 4000,
            master_seed: 5,
            ..BenchConfig::default()
        };
        let res = run_bench(&cfg).unwrap();
        assert_eq!(res.points.len(), 4);
        let summary = res.summary_csv();
        let lines: Vec<&str> = summary.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0], SUMMARY_HEADER);
        assert!(lines[1].starts_with("-15,40,"));
        assert_eq!(res.detail_csv().lines().count(), 5);
        for p in &res.points {
            assert!((0.0..=1.0).contains(&p.measured_pd));
            assert!((0.0..=1.0).contains(&p.measured_pfa));
            assert_eq!(p.trials, 50);
        }
    }
}
