//! `tmsd`: synthetic data, estimator sweeps and detector experiments.
//!
//! Exit status: 0 on success, 2 on invalid configuration or input, 3 on a
//! numerical failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use tmsd::detector::{detect_noiseless, detect_noisy_elementwise, detect_noisy_tubal, DetectorReport};
use tmsd::estimator::{residual_energy_elementwise, residual_energy_tubal};
use tmsd::experiments::{
    gen_synthetic, run_detector_eval, run_estimator_sweep, run_rate_comparison, write_csv, write_json,
    write_table, ExperimentConfig, SignalClass,
};
use tmsd::io::{load, save};
use tmsd::{Error, LinearTransform, SampleKind, SampleSet, Subspace, TransformKind};

#[derive(Parser)]
#[command(name = "tmsd", version, about = "Matched subspace detection for incomplete tensor signals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random subspace basis and one signal inside and outside it.
    Gen(ExperimentArgs),
    /// Residual-estimate statistics and bounds over a grid of sample sizes.
    Sweep(ExperimentArgs),
    /// Run one detection on tensors stored on disk.
    Detect(DetectArgs),
    /// Detection probability over an SNR grid for each false-alarm target.
    Roc(ExperimentArgs),
    /// Detection probability of all four methods over sampling rates.
    Rates(ExperimentArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum TransformArg {
    Dft,
    Dct,
}

impl From<TransformArg> for TransformKind {
    fn from(t: TransformArg) -> Self {
        match t {
            TransformArg::Dft => TransformKind::Dft,
            TransformArg::Dct => TransformKind::Dct,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SamplingArg {
    Tubal,
    Elementwise,
}

impl From<SamplingArg> for SampleKind {
    fn from(s: SamplingArg) -> Self {
        match s {
            SamplingArg::Tubal => SampleKind::Tubal,
            SamplingArg::Elementwise => SampleKind::Elementwise,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SignalArg {
    InSubspace,
    Orthogonal,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, value_enum, default_value = "dft")]
    transform: TransformArg,
    #[arg(long, value_enum, default_value = "tubal")]
    sampling: SamplingArg,
    #[arg(long, default_value_t = 50)]
    n1: usize,
    #[arg(long, default_value_t = 10)]
    r: usize,
    #[arg(long, default_value_t = 50)]
    n3: usize,
    /// Single sample size (default r + 1).
    #[arg(long, conflicts_with = "m_grid")]
    m: Option<usize>,
    /// Sample sizes as `a:b:step` (inclusive) or a comma list.
    #[arg(long)]
    m_grid: Option<String>,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// False-alarm target; repeat for several.
    #[arg(long = "pfa")]
    pfa: Vec<f64>,
    /// SNR values in dB as `a:b:step` or a comma list.
    #[arg(long, default_value = "0:10:1")]
    snr_grid: String,
    /// Sampling rates as `a:b:step` or a comma list.
    #[arg(long)]
    rates: Option<String>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = false, action = clap::ArgAction::Set)]
    replacement: bool,
    #[arg(long, value_enum, default_value = "orthogonal")]
    signal: SignalArg,
    /// Output file (tables) or directory (`gen`); stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long, value_enum, default_value = "dft")]
    transform: TransformArg,
    /// Subspace basis tensor (`n1 × r × n3`).
    #[arg(long)]
    basis: PathBuf,
    /// Observed tensor column (`n1 × 1 × n3`); unsampled entries are ignored.
    #[arg(long)]
    signal: PathBuf,
    /// Sample set as JSON; drawn from `--sampling`, `--m` and `--seed` when absent.
    #[arg(long)]
    omega: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "tubal")]
    sampling: SamplingArg,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = false, action = clap::ArgAction::Set)]
    replacement: bool,
    /// Compare the residual against `--tol` instead of a CFAR threshold.
    #[arg(long)]
    noiseless: bool,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long = "pfa", default_value_t = 0.01)]
    pfa: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `a:b:step` (inclusive of `b` up to rounding) or `x,y,z`.
fn parse_grid(text: &str) -> Result<Vec<f64>, Error> {
    let bad = || Error::InvalidConfig(format!("cannot parse grid `{text}`"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [a, b, step] => {
            let (a, b, step) = (num(a)?, num(b)?, num(step)?);
            if !(step > 0.0) || b < a {
                return Err(bad());
            }
            let count = ((b - a) / step + 1e-9).floor() as usize;
            Ok((0..=count).map(|i| a + i as f64 * step).collect())
        }
        [_] => text.split(',').map(num).collect(),
        _ => Err(bad()),
    }
}

fn parse_sizes(text: &str) -> Result<Vec<usize>, Error> {
    parse_grid(text)?
        .into_iter()
        .map(|x| {
            if x >= 0.0 && x.fract() == 0.0 {
                Ok(x as usize)
            } else {
                Err(Error::InvalidConfig(format!("sample size {x} is not a nonnegative integer")))
            }
        })
        .collect()
}

impl ExperimentArgs {
    fn config(&self) -> Result<ExperimentConfig, Error> {
        let defaults = ExperimentConfig::default();
        let m_grid = match (&self.m, &self.m_grid) {
            (Some(m), _) => vec![*m],
            (None, Some(text)) => parse_sizes(text)?,
            (None, None) => vec![self.r + 1],
        };
        let cfg = ExperimentConfig {
            transform: self.transform.into(),
            sampling: self.sampling.into(),
            n1: self.n1,
            r: self.r,
            n3: self.n3,
            m_grid,
            delta: self.delta,
            p_fa: if self.pfa.is_empty() { defaults.p_fa.clone() } else { self.pfa.clone() },
            snr_db: parse_grid(&self.snr_grid)?,
            rates: match &self.rates {
                Some(text) => parse_grid(text)?,
                None => defaults.rates.clone(),
            },
            trials: self.trials,
            seed: self.seed,
            signal_class: match self.signal {
                SignalArg::InSubspace => SignalClass::InSubspace,
                SignalArg::Orthogonal => SignalClass::Orthogonal,
            },
            replacement: self.replacement,
            ..defaults
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn emit<T: Serialize>(args: &ExperimentArgs, cfg: &ExperimentConfig, records: &[T]) -> Result<(), Error> {
    match (&args.out, args.format) {
        (Some(path), Format::Csv) => write_table(cfg, records, path),
        (Some(path), Format::Json) => write_json(cfg, records, std::io::BufWriter::new(fs::File::create(path)?)),
        (None, Format::Csv) => write_csv(records, std::io::stdout().lock()),
        (None, Format::Json) => write_json(cfg, records, std::io::stdout().lock()),
    }
}

#[derive(Serialize)]
struct GenSummary<'a> {
    config_hash: String,
    seed: u64,
    config: &'a ExperimentConfig,
    coherence: f64,
    files: Vec<String>,
}

fn gen(args: &ExperimentArgs) -> Result<(), Error> {
    let cfg = args.config()?;
    let syn = gen_synthetic(&cfg, cfg.seed)?;
    let dir = args.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    let ext = if args.format == Format::Csv { "csv" } else { "tmsd" };
    let mut files = Vec::new();
    for (stem, t) in [
        ("basis", syn.subspace.basis()),
        ("complement", &syn.complement),
        ("signal_in", &syn.signal_in),
        ("signal_out", &syn.signal_out),
    ] {
        let name = format!("{stem}.{ext}");
        save(t, &dir.join(&name))?;
        files.push(name);
    }
    let summary = GenSummary { config_hash: cfg.hash(), seed: cfg.seed, config: &cfg, coherence: syn.subspace.coherence(), files };
    let mut f = fs::File::create(dir.join("gen.json"))?;
    serde_json::to_writer_pretty(&mut f, &summary).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(f)?;
    Ok(())
}

#[derive(Serialize)]
struct DetectOutput {
    sampling: SampleKind,
    m: usize,
    residual: f64,
    report: DetectorReport,
}

fn load_omega(args: &DetectArgs, shape: (usize, usize)) -> Result<SampleSet, Error> {
    match &args.omega {
        Some(path) => {
            let omega = SampleSet::from_json(&fs::read_to_string(path)?)?;
            if omega.shape() != shape {
                return Err(Error::InvalidConfig(format!("sample set shape {:?} vs data {shape:?}", omega.shape())));
            }
            Ok(omega)
        }
        None => {
            let m = args.m.ok_or_else(|| Error::InvalidConfig("either --omega or --m is required".into()))?;
            SampleSet::draw(args.sampling.into(), m, shape, args.replacement, args.seed)
        }
    }
}

fn detect(args: &DetectArgs) -> Result<(), Error> {
    let basis = load(&args.basis)?;
    let observed = load(&args.signal)?;
    let t = match TransformKind::from(args.transform) {
        TransformKind::Dft => LinearTransform::dft(basis.n3())?,
        _ => LinearTransform::dct(basis.n3())?,
    };
    let s = Subspace::new(&t, &basis)?;
    let omega = load_omega(args, (basis.n1(), basis.n3()))?;
    let (residual, report) = match omega.kind() {
        SampleKind::Tubal => {
            let residual = residual_energy_tubal(&omega, &s, &observed)?;
            let report = if args.noiseless {
                detect_noiseless(residual, args.tol)
            } else {
                detect_noisy_tubal(&omega, &s, &omega.restrict_signal_tubal(&observed)?, None, args.pfa)?
            };
            (residual, report)
        }
        SampleKind::Elementwise => {
            let e = s.embed()?;
            let residual = residual_energy_elementwise(&omega, &e, &observed)?;
            let report = if args.noiseless {
                detect_noiseless(residual, args.tol)
            } else {
                detect_noisy_elementwise(&omega, &e, &observed, None, args.pfa)?
            };
            (residual, report)
        }
    };
    let out = DetectOutput { sampling: omega.kind(), m: omega.m(), residual, report };
    let json = serde_json::to_string_pretty(&out).map_err(|e| Error::Io(e.to_string()))?;
    match &args.out {
        Some(path) => fs::write(path, json + "\n")?,
        None => println!("{json}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match &cli.command {
        Command::Gen(args) => gen(args),
        Command::Sweep(args) => {
            let cfg = args.config()?;
            emit(args, &cfg, &run_estimator_sweep(&cfg)?)
        }
        Command::Detect(args) => detect(args),
        Command::Roc(args) => {
            let cfg = args.config()?;
            emit(args, &cfg, &run_detector_eval(&cfg)?)
        }
        Command::Rates(args) => {
            let cfg = args.config()?;
            emit(args, &cfg, &run_rate_comparison(&cfg)?)
        }
    }
}

/// Configuration and input problems exit with 2, numerical failures with 3.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::DimensionMismatch(_)
        | Error::NotATensorColumn { .. }
        | Error::UnsupportedTransform(_)
        | Error::TooManySamples { .. }
        | Error::KindMismatch { .. }
        | Error::InvalidDelta(_)
        | Error::InvalidP(_)
        | Error::InvalidArg(_)
        | Error::ComplexData
        | Error::InvalidConfig(_)
        | Error::Io(_)
        | Error::Format(_) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tmsd: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
