//! Synthetic inputs: FM wireless-microphone carriers, band-limited
//! Gaussian noise and their mixtures at a controlled SNR.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dsp::{design_bandpass, filter::filter_valid, SampleBuffer};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_for};

pub const SAMPLE_RATE_HZ: f64 = 33.33e6;
pub const NUM_SAMPLES: usize = 20_000;
/// Pass band of the simulated receiver channel (6 MHz at an 8 MHz IF).
pub const NOISE_BAND_LOW_HZ: f64 = 5.0e6;
pub const NOISE_BAND_HIGH_HZ: f64 = 11.0e6;
pub const CARRIER_GUARD_HZ: f64 = 200e3;
pub const MIN_CARRIER_SPACING_HZ: f64 = 400e3;
pub const MAX_DEVIATION_HZ: f64 = 100e3;
pub const MAX_SIGNALS: usize = 5;
/// Fixed carrier plan; `n` signals occupy the first `n` entries.
pub const CARRIER_PLAN_HZ: [f64; 5] = [6e6, 7e6, 8e6, 9e6, 10e6];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Silent,
    Soft,
    Loud,
}

/// Tone-modulated FM model of a wireless microphone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WmModeRepr")]
pub struct WmMode {
    pub name: ModeName,
    pub fm_tone_hz: f64,
    pub fm_deviation_hz: f64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum WmModeRepr {
    Preset(ModeName),
    Full {
        name: ModeName,
        fm_tone_hz: f64,
        fm_deviation_hz: f64,
    },
}

impl TryFrom<WmModeRepr> for WmMode {
    type Error = Error;

    fn try_from(repr: WmModeRepr) -> Result<Self> {
        match repr {
            WmModeRepr::Preset(name) => Ok(WmMode::preset(name)),
            WmModeRepr::Full {
                name,
                fm_tone_hz,
                fm_deviation_hz,
            } => WmMode::custom(name, fm_tone_hz, fm_deviation_hz),
        }
    }
}

impl WmMode {
    pub fn loud() -> Self {
        Self {
            name: ModeName::Loud,
            fm_tone_hz: 13.4e3,
            fm_deviation_hz: 32.6e3,
        }
    }

    pub fn soft() -> Self {
        Self {
            name: ModeName::Soft,
            fm_tone_hz: 3.9e3,
            fm_deviation_hz: 15e3,
        }
    }

    pub fn silent() -> Self {
        Self {
            name: ModeName::Silent,
            fm_tone_hz: 32e3,
            fm_deviation_hz: 5e3,
        }
    }

    pub fn preset(name: ModeName) -> Self {
        match name {
            ModeName::Silent => Self::silent(),
            ModeName::Soft => Self::soft(),
            ModeName::Loud => Self::loud(),
        }
    }

    pub fn custom(name: ModeName, fm_tone_hz: f64, fm_deviation_hz: f64) -> Result<Self> {
        if !(fm_tone_hz.is_finite() && fm_tone_hz > 0.0) {
            return Err(Error::InvalidInput(format!("fm tone must be positive, got {fm_tone_hz}")));
        }
        if !(fm_deviation_hz.is_finite() && fm_deviation_hz > 0.0 && fm_deviation_hz <= MAX_DEVIATION_HZ) {
            return Err(Error::InvalidInput(format!(
                "fm deviation must be in (0, {MAX_DEVIATION_HZ}] Hz, got {fm_deviation_hz}"
            )));
        }
        Ok(Self {
            name,
            fm_tone_hz,
            fm_deviation_hz,
        })
    }

    pub fn modulation_index(&self) -> f64 {
        self.fm_deviation_hz / self.fm_tone_hz
    }
}

impl Default for WmMode {
    fn default() -> Self {
        Self::loud()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub sample_rate_hz: f64,
    pub num_samples: usize,
    pub carriers_hz: Vec<f64>,
    pub snr_db: f64,
    pub mode: WmMode,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: SAMPLE_RATE_HZ,
            num_samples: NUM_SAMPLES,
            carriers_hz: vec![8e6],
            snr_db: -20.0,
            mode: WmMode::loud(),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 2.0 * NOISE_BAND_HIGH_HZ) {
            return Err(Error::Config(format!(
                "sample rate {} Hz cannot hold the {NOISE_BAND_LOW_HZ}..{NOISE_BAND_HIGH_HZ} Hz noise band",
                self.sample_rate_hz
            )));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::Config("snr_db must be finite".into()));
        }
        if self.carriers_hz.len() > MAX_SIGNALS {
            return Err(Error::Config(format!(
                "at most {MAX_SIGNALS} carriers, got {}",
                self.carriers_hz.len()
            )));
        }
        let lo = NOISE_BAND_LOW_HZ + CARRIER_GUARD_HZ;
        let hi = NOISE_BAND_HIGH_HZ - CARRIER_GUARD_HZ;
        for &fc in &self.carriers_hz {
            if !(fc > lo && fc < hi) {
                return Err(Error::Config(format!("carrier {fc} Hz outside ({lo}, {hi}) Hz")));
            }
        }
        for (i, a) in self.carriers_hz.iter().enumerate() {
            for b in &self.carriers_hz[i + 1..] {
                if (a - b).abs() < MIN_CARRIER_SPACING_HZ {
                    return Err(Error::Config(format!(
                        "carriers {a} and {b} Hz closer than {MIN_CARRIER_SPACING_HZ} Hz"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Unit-RMS tone-modulated FM carrier
/// `cos(2 pi fc k / fs + beta sin(2 pi fm k / fs + theta) + phi)`
/// with random phases `theta`, `phi` drawn from `seed`.
pub fn gen_wm_signal(mode: &WmMode, fc_hz: f64, fs_hz: f64, n: usize, seed: u64) -> Result<SampleBuffer> {
    let reach = mode.fm_deviation_hz + mode.fm_tone_hz;
    if !(fs_hz.is_finite() && fs_hz > 0.0) || n == 0 {
        return Err(Error::InvalidInput("need a positive sample rate and length".into()));
    }
    if !(fc_hz - reach > 0.0 && fc_hz + reach < fs_hz / 2.0) {
        return Err(Error::InvalidInput(format!(
            "carrier {fc_hz} Hz with {reach} Hz FM reach does not fit in (0, {}) Hz",
            fs_hz / 2.0
        )));
    }
    let mut rng = rng_for(seed);
    let carrier_phase: f64 = rng.random_range(0.0..2.0 * PI);
    let tone_phase: f64 = rng.random_range(0.0..2.0 * PI);
    let beta = mode.modulation_index();
    let wc = 2.0 * PI * fc_hz / fs_hz;
    let wm = 2.0 * PI * mode.fm_tone_hz / fs_hz;
    let mut s: Vec<f64> = (0..n)
        .map(|k| {
            let k = k as f64;
            (wc * k + beta * (wm * k + tone_phase).sin() + carrier_phase).cos()
        })
        .collect();
    let rms = (s.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    s.iter_mut().for_each(|v| *v /= rms);
    SampleBuffer::synthetic(s, fs_hz)
}

/// White Gaussian noise through the 5-11 MHz channel filter, with the
/// filter start-up transient discarded and unit expected variance.
pub fn gen_colored_noise(fs_hz: f64, n: usize, seed: u64) -> Result<SampleBuffer> {
    let filter = design_bandpass(fs_hz, NOISE_BAND_LOW_HZ, NOISE_BAND_HIGH_HZ)?;
    if n < 4 * filter.len() {
        return Err(Error::Precondition(format!(
            "noise length {n} must be at least 4x the {}-tap filter",
            filter.len()
        )));
    }
    let mut rng = rng_for(seed);
    let white: Vec<f64> = (0..n + filter.len() - 1)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let scale = 1.0 / filter.noise_gain().sqrt();
    let colored = filter_valid(&filter, &white).into_iter().map(|v| v * scale).collect();
    SampleBuffer::synthetic(colored, fs_hz)
}

/// Scales each signal so that its power over the noise buffer's power is
/// `10^(snr_db/10)` and returns the sum with the noise.
pub fn mix_at_snr(signals: &[SampleBuffer], noise: &SampleBuffer, snr_db: f64) -> Result<SampleBuffer> {
    let noise_power = noise.power();
    for s in signals {
        if s.len() != noise.len() {
            return Err(Error::InvalidInput(format!(
                "signal length {} differs from noise length {}",
                s.len(),
                noise.len()
            )));
        }
        if (s.sample_rate_hz() - noise.sample_rate_hz()).abs() > 1e-9 * noise.sample_rate_hz() {
            return Err(Error::InvalidInput("signal and noise sample rates differ".into()));
        }
    }
    if !snr_db.is_finite() {
        return Err(Error::InvalidInput("snr must be finite".into()));
    }
    let target = noise_power * 10f64.powf(snr_db / 10.0);
    let mut out = noise.samples().to_vec();
    for s in signals {
        let p = s.power();
        if p == 0.0 {
            return Err(Error::InvalidInput("cannot scale a zero-power signal".into()));
        }
        let gain = (target / p).sqrt();
        out.iter_mut().zip(s.samples()).for_each(|(o, v)| *o += gain * v);
    }
    SampleBuffer::synthetic(out, noise.sample_rate_hz())
}

/// Signal-plus-noise record for a configuration. Component seeds are split
/// from `cfg.seed`, so the noise realization does not depend on how many
/// carriers are present.
pub fn synthesize(cfg: &SynthConfig) -> Result<SampleBuffer> {
    cfg.validate()?;
    let noise = gen_colored_noise(cfg.sample_rate_hz, cfg.num_samples, derive_seed(cfg.seed, &[0]))?;
    let signals = cfg
        .carriers_hz
        .iter()
        .enumerate()
        .map(|(i, &fc)| {
            gen_wm_signal(
                &cfg.mode,
                fc,
                cfg.sample_rate_hz,
                cfg.num_samples,
                derive_seed(cfg.seed, &[1, i as u64]),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    mix_at_snr(&signals, &noise, cfg.snr_db)
}
