//! Command-line front end: synth, train, detect, bench, diagnose.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use wmsense_core::calibrate::{
    build_noise_profile, calibrate_thresholds, NoiseProfile, TestStatisticVector, ThresholdTable, NUM_STATISTICS,
};
use wmsense_core::capture::{ingest_capture, sidecar_path, write_capture};
use wmsense_core::detector::{Detector, DetectorConfig};
use wmsense_core::dsp::{estimate_autocorr, noise_diagnostics, SampleBuffer};
use wmsense_core::error::{Error, Result};
use wmsense_core::harness::{run_bench_with, BenchConfig};
use wmsense_core::rng::derive_seed;
use wmsense_core::synth::{gen_colored_noise, synthesize, SynthConfig, NUM_SAMPLES, SAMPLE_RATE_HZ};

#[derive(Parser)]
#[command(name = "wmsense", version, about = "Subspace detection of wireless-microphone signals")]
struct Cli {
    /// Worker threads for Monte Carlo work (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic sample file (f32le plus JSON sidecar) from a SynthConfig.
    Synth(SynthArgs),
    /// Build a noise profile and threshold table from noise captures.
    Train(TrainArgs),
    /// Run the detector on a sample file and print the report as JSON.
    Detect(DetectArgs),
    /// Monte Carlo benchmark over an SNR x L grid.
    Bench(BenchArgs),
    /// Stationarity, histogram and lag-decay report for a noise record.
    Diagnose(DiagnoseArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Output file name inside --out.
    #[arg(long, default_value = "samples.f32")]
    name: String,
}

#[derive(Args)]
struct TrainArgs {
    /// Noise-only capture files; each needs a `.json` sidecar.
    #[arg(long = "noise", required = true, num_args = 1..)]
    noise: Vec<PathBuf>,
    #[arg(long, default_value_t = 500)]
    order: usize,
    #[arg(long, default_value_t = 0.1)]
    target_pfa: f64,
    /// Synthetic noise-only trials used for the threshold quantiles.
    #[arg(long, default_value_t = 500)]
    calibration_trials: usize,
    /// SNR rows of the emitted table, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-30,-29,-28,-27,-26,-25,-24,-23,-22,-21,-20,-19,-18,-17,-16,-15")]
    snr_grid: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    input: PathBuf,
    /// Sidecar metadata (default: input with a `.json` extension).
    #[arg(long)]
    meta: Option<PathBuf>,
    #[arg(long)]
    profile: PathBuf,
    #[arg(long)]
    thresholds: PathBuf,
    /// Use the table row nearest this SNR instead of the most conservative row.
    #[arg(long, allow_hyphen_values = true)]
    snr_db: Option<f64>,
    /// DetectorConfig JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also write report.json and, on detection, psd.csv here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// BenchConfig JSON; missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides master_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Use fixed thresholds from this table instead of in-run calibration.
    #[arg(long)]
    thresholds: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct DiagnoseArgs {
    /// Capture to analyse; synthetic colored noise when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    meta: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    window: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = NUM_SAMPLES)]
    num_samples: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::Json {
        context: path.display().to_string(),
        source: e,
    })
}

fn load_capture(input: &Path, meta: Option<&PathBuf>) -> Result<SampleBuffer> {
    let meta = meta.cloned().unwrap_or_else(|| sidecar_path(input));
    ingest_capture(input, &meta)
}

fn run_synth(args: SynthArgs) -> Result<()> {
    let mut cfg: SynthConfig = parse_json(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let buf = synthesize(&cfg)?;
    ensure_dir(&args.out)?;
    let path = args.out.join(&args.name);
    write_capture(&buf, &path, &sidecar_path(&path))?;
    println!("{}", path.display());
    Ok(())
}

fn run_train(args: TrainArgs) -> Result<()> {
    let sets = args
        .noise
        .iter()
        .map(|p| load_capture(p, None))
        .collect::<Result<Vec<_>>>()?;
    let profile = build_noise_profile(&sets, args.order)?;
    let fs = profile.sample_rate_hz();
    let n = sets.iter().map(SampleBuffer::len).min().unwrap_or(NUM_SAMPLES);
    let probe = Detector::new(profile.clone(), [f64::MAX; NUM_STATISTICS], DetectorConfig::default())?;
    let trials: Vec<TestStatisticVector> = (0..args.calibration_trials as u64)
        .into_par_iter()
        .map(|t| {
            let buf = gen_colored_noise(fs, n, derive_seed(args.seed, &[t]))?;
            probe.statistics_from_autocorr(&estimate_autocorr(&buf, args.order)?)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<(f64, Vec<TestStatisticVector>)> = args.snr_grid.iter().map(|&s| (s, Vec::new())).collect();
    let cal = calibrate_thresholds(&trials, &rows, args.target_pfa)?;
    ensure_dir(&args.out)?;
    write_text(&args.out.join("profile.json"), &profile.to_json())?;
    write_text(&args.out.join("thresholds.json"), &cal.table.to_json())?;
    eprintln!(
        "order {}, {} calibration trials, false-alarm rate {:.3}, thresholds {:?}",
        args.order, args.calibration_trials, cal.achieved_pfa, cal.thresholds
    );
    Ok(())
}

fn run_detect(args: DetectArgs) -> Result<()> {
    let buf = load_capture(&args.input, args.meta.as_ref())?;
    let profile = NoiseProfile::from_json(&read_text(&args.profile)?)?;
    let table = ThresholdTable::from_json(&read_text(&args.thresholds)?)?;
    let row = match args.snr_db {
        Some(snr) => table.row_for(snr),
        None => table.most_conservative(),
    }
    .ok_or_else(|| Error::Config("threshold table has no rows".into()))?;
    let config = match &args.config {
        Some(p) => parse_json(p)?,
        None => DetectorConfig::default(),
    };
    let mut report = Detector::new(profile, row.thresholds, config)?.detect(&buf)?;
    if let Some(dir) = &args.out {
        ensure_dir(dir)?;
        if let Some(psd) = &report.psd {
            let path = dir.join("psd.csv");
            write_text(&path, &psd.to_csv())?;
            report.psd_csv_path = Some(path.display().to_string());
        }
        write_text(&dir.join("report.json"), &report.to_json())?;
    }
    print!("{}", report.to_json());
    Ok(())
}

fn run_bench_cmd(args: BenchArgs) -> Result<()> {
    let mut cfg: BenchConfig = match &args.config {
        Some(p) => parse_json(p)?,
        None => BenchConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    let table = match &args.thresholds {
        Some(p) => Some(ThresholdTable::from_json(&read_text(p)?)?),
        None => None,
    };
    let quiet = args.quiet;
    let result = run_bench_with(&cfg, table.as_ref(), |p| {
        if !quiet {
            eprintln!(
                "snr {:>6.1} dB  L {:>4}  pd {:.3}  pfa {:.3}",
                p.snr_db, p.order, p.measured_pd, p.measured_pfa
            );
        }
    })?;
    ensure_dir(&args.out)?;
    write_text(&args.out.join("bench_summary.csv"), &result.summary_csv())?;
    write_text(&args.out.join("bench_detail.csv"), &result.detail_csv())?;
    for dump in &result.psd_dumps {
        write_text(&args.out.join(dump.file_name()), &dump.psd.to_csv())?;
    }
    Ok(())
}

fn run_diagnose(args: DiagnoseArgs) -> Result<()> {
    let buf = match &args.input {
        Some(p) => load_capture(p, args.meta.as_ref())?,
        None => gen_colored_noise(SAMPLE_RATE_HZ, args.num_samples, args.seed)?,
    };
    let report = noise_diagnostics(&buf, args.window)?;
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    if let Some(dir) = &args.out {
        ensure_dir(dir)?;
        write_text(&dir.join("diagnostics.json"), &text)?;
    }
    print!("{text}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        // Only fails when a global pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let outcome = match cli.command {
        Command::Synth(a) => run_synth(a),
        Command::Train(a) => run_train(a),
        Command::Detect(a) => run_detect(a),
        Command::Bench(a) => run_bench_cmd(a),
        Command::Diagnose(a) => run_diagnose(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
