//! Command line. Exit codes: 0 success, 1 usage or input error, 2 numerical
//! failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use adaframe_core::generators::{gen_sparse_wavelet_signal, gen_staircase};
use adaframe_core::learn::{
    design_recon_filters, learn_biframe_critical, learn_biframe_decomp, learn_frame_penalty, learn_frame_restarts,
    Init, LearnConfig, LearnTrace, ReconMode, Sparsity,
};
use adaframe_core::multilevel::{convnet_decompose, scatter_decompose, Nonlinearity};
use adaframe_core::pipelines::{
    compress, deconv_compare, denoise_with, extract_features, psnr, Activation, LayerSpec, Pooling, ThresholdRule,
};
use adaframe_core::transform::{decompose, reconstruct, synthesis_bank};
use adaframe_core::uep::uep_report;
use adaframe_core::wavelets::builtin_bank_nd;
use adaframe_core::{CoeffSet, FilterBank, SamplingMatrix, Signal};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::recovery::{cells_csv, run_recovery_experiment, trials_csv, RecoveryConfig};
use crate::report::{compression_json, deconv_json, pretty, sig17, uep_json};
use crate::{adf1, bankfile, pgm};

#[derive(Parser, Debug)]
#[command(name = "adaframe", version, about = "Data-adaptive wavelet frames and bi-frames")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Learn a tight frame by split Bregman (or by the penalty method).
    LearnFrame {
        #[command(flatten)]
        learn: LearnArgs,
        /// Independent seeded runs; the smallest objective wins.
        #[arg(long, default_value_t = 1)]
        restarts: usize,
        /// Unconstrained penalty relaxation (1D, M = 1 only).
        #[arg(long)]
        penalty: bool,
    },
    /// Learn redundant orthonormal decomposition filters and design the reconstruction side.
    LearnBiframe {
        #[command(flatten)]
        learn: LearnArgs,
        #[arg(long, default_value = "min-norm", value_parser = parse_mode)]
        mode: ReconMode,
        /// Output path of the reconstruction bank.
        #[arg(long)]
        recon_out: PathBuf,
    },
    /// Learn a critically sampled decomposition/reconstruction pair.
    LearnCritical {
        #[command(flatten)]
        learn: LearnArgs,
        #[arg(long)]
        recon_out: PathBuf,
    },
    /// Design reconstruction filters for a decomposition bank.
    ReconFilters {
        bank: PathBuf,
        #[arg(long, default_value = "min-norm", value_parser = parse_mode)]
        mode: ReconMode,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Report the reconstruction residuals of a bank pair as JSON.
    Verify {
        /// Bank file or built-in name (`builtin:db2`).
        bank: String,
        /// Reconstruction bank; defaults to the same taps.
        #[arg(long)]
        recon: Option<String>,
        /// DFT grid of the spectral residual, e.g. `16x16`.
        #[arg(long, value_parser = parse_dims)]
        grid: Option<Dims>,
    },
    /// One level of decomposition; the maps become channels of an ADF1 file.
    Decompose {
        input: PathBuf,
        #[arg(long)]
        bank: String,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Invert `decompose` with a reconstruction bank.
    Reconstruct {
        input: PathBuf,
        #[arg(long)]
        bank: String,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Threshold every multiresolution coefficient map and reconstruct.
    Denoise {
        input: PathBuf,
        #[command(flatten)]
        pair: PairArgs,
        #[arg(long, default_value_t = 0.14)]
        tau: f64,
        #[arg(long, default_value_t = 1)]
        levels: usize,
        #[arg(long, value_enum, default_value_t = Rule::Soft)]
        rule: Rule,
        /// Leave the coarsest lowpass map untouched.
        #[arg(long)]
        exempt_lowpass: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Keep the largest coefficients of a multiresolution decomposition.
    Compress {
        input: PathBuf,
        #[command(flatten)]
        pair: PairArgs,
        #[arg(long, default_value_t = 1)]
        levels: usize,
        #[arg(long)]
        keep: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Peak signal-to-noise ratio in dB on the 8-bit scale.
    Psnr { a: PathBuf, b: PathBuf },
    /// Scattering or convnet features, relu applied, as a 1D ADF1 vector.
    Features {
        input: PathBuf,
        /// Bank per level; the last one is reused for deeper levels.
        #[arg(long = "bank", required = true)]
        banks: Vec<String>,
        #[arg(long, default_value_t = 1)]
        levels: usize,
        #[arg(long, value_enum, default_value_t = Tree::Scattering)]
        mode: Tree,
        #[arg(long, value_enum, default_value_t = Nonlin::Abs)]
        nonlinearity: Nonlin,
        #[arg(long, default_value_t = 0.0)]
        prune: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Invert a layer stack with transposed and with designed filters.
    DeconvCompare {
        input: PathBuf,
        #[arg(long = "layer", required = true)]
        layers: Vec<String>,
        #[arg(long, value_enum, default_value_t = Act::Sigmoid)]
        activation: Act,
        /// `downsample` or `max:2x2`.
        #[arg(long, default_value = "downsample", value_parser = parse_pool)]
        pool: Pooling,
    },
    /// Alternating ±1 runs with lengths in [s, 2s].
    GenStaircase {
        #[arg(long)]
        length: usize,
        #[arg(long)]
        s: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Signal with sparse coefficients in a built-in wavelet.
    GenSparse {
        #[arg(long)]
        wavelet: String,
        #[arg(long)]
        density: f64,
        #[arg(long, default_value_t = 1024)]
        length: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Success ratio of recovering built-in wavelets, as CSV.
    RecoverTable {
        #[arg(long, value_delimiter = ',', default_value = "db2,db3")]
        wavelets: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.5")]
        densities: Vec<f64>,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long, default_value_t = 50)]
        restarts: usize,
        #[arg(long, default_value_t = 1024)]
        length: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e2)]
        eta: f64,
        #[arg(long, default_value_t = 200)]
        max_outer: usize,
        /// Run every restart even after a success.
        #[arg(long)]
        all_restarts: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Per-trial CSV.
        #[arg(long)]
        trials_out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct LearnArgs {
    /// Training signals (PGM or ADF1).
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    m: usize,
    /// Support per axis, e.g. `6x6`.
    #[arg(long, value_parser = parse_dims)]
    support: Dims,
    /// Sampling diagonal; a single value applies to every axis.
    #[arg(long, value_parser = parse_dims)]
    sampling: Option<Dims>,
    /// Channel count spanned by each filter (0 for scalar filters).
    #[arg(long, default_value_t = 0)]
    channels: usize,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// `l1`, `l0` or `huber:DELTA`.
    #[arg(long, default_value = "l1", value_parser = parse_sparsity)]
    sparsity: Sparsity,
    /// `random`, `wavelet:NAME` or `file:PATH`.
    #[arg(long, default_value = "random")]
    init: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    max_outer: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// One lowpass filter, all others with zero tap sum.
    #[arg(long)]
    lowpass: bool,
    #[arg(short, long)]
    output: PathBuf,
    /// Per-iteration CSV trace.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PairArgs {
    /// Decomposition bank file or `builtin:NAME`.
    #[arg(long)]
    bank: String,
    /// Reconstruction bank; defaults to the perfect-reconstruction dual of a tight frame.
    #[arg(long)]
    recon: Option<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Rule {
    Soft,
    Hard,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Tree {
    Scattering,
    Convnet,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Nonlin {
    None,
    Abs,
    Relu,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Act {
    Sigmoid,
    Tanh,
    None,
}

/// Per-axis extents written `6x6` or `6,6`.
#[derive(Clone, Debug)]
struct Dims(Vec<usize>);

fn parse_dims(s: &str) -> std::result::Result<Dims, String> {
    s.split(['x', ','])
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<std::result::Result<_, _>>()
        .map(Dims)
}

fn parse_mode(s: &str) -> std::result::Result<ReconMode, String> {
    match s {
        "min-norm" | "minnorm" => Ok(ReconMode::MinNorm),
        _ => match s.strip_prefix("tv:").map(str::parse::<f64>) {
            Some(Ok(alpha)) => Ok(ReconMode::Tv(alpha)),
            _ => Err(format!("expected `min-norm` or `tv:ALPHA`, got `{s}`")),
        },
    }
}

fn parse_sparsity(s: &str) -> std::result::Result<Sparsity, String> {
    match s {
        "l1" => Ok(Sparsity::L1),
        "l0" => Ok(Sparsity::L0),
        _ => match s.strip_prefix("huber:").map(str::parse::<f64>) {
            Some(Ok(d)) => Ok(Sparsity::Huber(d)),
            _ => Err(format!("expected `l1`, `l0` or `huber:DELTA`, got `{s}`")),
        },
    }
}

fn parse_pool(s: &str) -> std::result::Result<Pooling, String> {
    match s {
        "downsample" => Ok(Pooling::Downsample),
        _ => match s.strip_prefix("max:").map(parse_dims) {
            Some(Ok(w)) => Ok(Pooling::MaxPool(w.0)),
            _ => Err(format!("expected `downsample` or `max:WINDOW`, got `{s}`")),
        },
    }
}

fn is_pgm(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

pub fn read_signal(path: &Path) -> Result<Signal> {
    if is_pgm(path) {
        pgm::read(path)
    } else {
        adf1::read(path)
    }
}

pub fn write_signal(path: &Path, s: &Signal) -> Result<()> {
    if is_pgm(path) {
        pgm::write(path, s)
    } else {
        adf1::write(path, s)
    }
}

/// A bank file, or `builtin:NAME` optionally suffixed `:DIMS` for tensor products.
pub fn load_bank(spec: &str) -> Result<FilterBank> {
    match spec.strip_prefix("builtin:") {
        Some(rest) => {
            let (name, dims) = match rest.split_once(':') {
                Some((n, d)) => (n, d.parse().map_err(|_| Error::BankFile(format!("bad dimension in `{spec}`")))?),
                None => (rest, 1),
            };
            Ok(builtin_bank_nd(name, dims)?)
        }
        None => bankfile::read(spec),
    }
}

fn recon_bank(a: &FilterBank, recon: Option<&str>) -> Result<FilterBank> {
    match recon {
        Some(spec) => load_bank(spec),
        None => Ok(synthesis_bank(a)),
    }
}

fn learn_config(args: &LearnArgs) -> Result<LearnConfig> {
    let d = args.support.0.len();
    let sampling = match args.sampling.as_ref().map(|s| &s.0) {
        None => SamplingMatrix::identity(d),
        Some(s) if s.len() == 1 => SamplingMatrix::uniform(d, s[0])?,
        Some(s) => SamplingMatrix::new(s.clone())?,
    };
    let mut cfg = LearnConfig::new(args.m, args.support.0.clone(), sampling);
    cfg.channels = args.channels;
    if let Some(v) = args.eta {
        cfg.eta = v;
    }
    if let Some(v) = args.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = args.max_outer {
        cfg.max_outer = v;
    }
    if let Some(v) = args.tol {
        cfg.rel_tolerance = v;
    }
    cfg.sparsity = args.sparsity;
    cfg.seed = args.seed;
    cfg.lowpass_constraint = args.lowpass;
    cfg.init = match args.init.as_str() {
        "random" => Init::RandomOrthogonal,
        s => match (s.strip_prefix("wavelet:"), s.strip_prefix("file:")) {
            (Some(name), _) => Init::WaveletBank(name.into()),
            (_, Some(path)) => Init::Explicit(bankfile::read(path)?),
            _ => return Err(Error::BankFile(format!("bad --init `{s}`"))),
        },
    };
    cfg.validate()?;
    Ok(cfg)
}

fn load_batch(args: &LearnArgs) -> Result<Vec<Signal>> {
    args.inputs.iter().map(|p| read_signal(p)).collect()
}

fn write_trace(path: Option<&PathBuf>, trace: &LearnTrace) -> Result<()> {
    if let Some(p) = path {
        fs::write(p, trace.to_csv())?;
    }
    Ok(())
}

fn execute(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::LearnFrame {
            learn,
            restarts,
            penalty,
        } => {
            let cfg = learn_config(&learn)?;
            let batch = load_batch(&learn)?;
            let (bank, trace) = if penalty {
                learn_frame_penalty(&batch, &cfg)?
            } else {
                let (bank, trace, _) = learn_frame_restarts(&batch, &cfg, restarts)?;
                (bank, trace)
            };
            bankfile::write(&learn.output, &bank)?;
            write_trace(learn.trace.as_ref(), &trace)?;
        }
        Command::LearnBiframe { learn, mode, recon_out } => {
            let cfg = learn_config(&learn)?;
            let (a, trace) = learn_biframe_decomp(&load_batch(&learn)?, &cfg)?;
            let b = design_recon_filters(&a, mode)?;
            bankfile::write(&learn.output, &a)?;
            bankfile::write(&recon_out, &b)?;
            write_trace(learn.trace.as_ref(), &trace)?;
        }
        Command::LearnCritical { learn, recon_out } => {
            let cfg = learn_config(&learn)?;
            let (a, b, trace) = learn_biframe_critical(&load_batch(&learn)?, &cfg)?;
            bankfile::write(&learn.output, &a)?;
            bankfile::write(&recon_out, &b)?;
            write_trace(learn.trace.as_ref(), &trace)?;
        }
        Command::ReconFilters { bank, mode, output } => {
            let b = design_recon_filters(&bankfile::read(bank)?, mode)?;
            bankfile::write(output, &b)?;
        }
        Command::Verify { bank, recon, grid } => {
            let a = load_bank(&bank)?;
            let b = recon_bank(&a, recon.as_deref())?;
            let report = uep_report(&a, &b, grid.as_ref().map(|g| g.0.as_slice()))?;
            write!(out, "{}", pretty(&uep_json(&report)))?;
        }
        Command::Decompose { input, bank, output } => {
            let c = decompose(&read_signal(&input)?, &load_bank(&bank)?)?;
            adf1::write(output, &c.into_channels()?)?;
        }
        Command::Reconstruct { input, bank, output } => {
            let c = CoeffSet::from_channels(&adf1::read(input)?);
            write_signal(&output, &reconstruct(&c, &load_bank(&bank)?)?)?;
        }
        Command::Denoise {
            input,
            pair,
            tau,
            levels,
            rule,
            exempt_lowpass,
            output,
        } => {
            let a = load_bank(&pair.bank)?;
            let b = recon_bank(&a, pair.recon.as_deref())?;
            let rule = match rule {
                Rule::Soft => ThresholdRule::Soft,
                Rule::Hard => ThresholdRule::Hard,
            };
            let x = denoise_with(&read_signal(&input)?, &a, &b, tau, levels, rule, exempt_lowpass)?;
            write_signal(&output, &x)?;
        }
        Command::Compress {
            input,
            pair,
            levels,
            keep,
            output,
        } => {
            let a = load_bank(&pair.bank)?;
            let b = recon_bank(&a, pair.recon.as_deref())?;
            let r = compress(&read_signal(&input)?, &a, &b, levels, keep)?;
            if let Some(p) = output {
                write_signal(&p, &r.reconstructed)?;
            }
            write!(out, "{}", pretty(&compression_json(&r)))?;
        }
        Command::Psnr { a, b } => {
            let v = psnr(&read_signal(&a)?, &read_signal(&b)?)?;
            writeln!(out, "{}", sig17(v))?;
        }
        Command::Features {
            input,
            banks,
            levels,
            mode,
            nonlinearity,
            prune,
            output,
        } => {
            let banks = banks.iter().map(|b| load_bank(b)).collect::<Result<Vec<_>>>()?;
            let nl = match nonlinearity {
                Nonlin::None => Nonlinearity::None,
                Nonlin::Abs => Nonlinearity::Abs,
                Nonlin::Relu => Nonlinearity::Relu,
            };
            let x = read_signal(&input)?;
            let tree = match mode {
                Tree::Scattering => scatter_decompose(&x, &banks, levels, nl, prune)?,
                Tree::Convnet => convnet_decompose(&x, &banks, levels, nl)?,
            };
            let features = extract_features(&tree);
            writeln!(out, "{}", features.len())?;
            adf1::write(output, &Signal::from_vec(features)?)?;
        }
        Command::DeconvCompare {
            input,
            layers,
            activation,
            pool,
        } => {
            let activation = match activation {
                Act::Sigmoid => Activation::Sigmoid,
                Act::Tanh => Activation::Tanh,
                Act::None => Activation::None,
            };
            let layers = layers
                .iter()
                .map(|l| {
                    Ok(LayerSpec {
                        bank: load_bank(l)?,
                        activation,
                        pooling: pool.clone(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let r = deconv_compare(&read_signal(&input)?, &layers)?;
            write!(out, "{}", pretty(&deconv_json(&r)))?;
        }
        Command::GenStaircase { length, s, seed, output } => {
            write_signal(&output, &gen_staircase(length, s, seed)?)?;
        }
        Command::GenSparse {
            wavelet,
            density,
            length,
            seed,
            output,
        } => {
            write_signal(&output, &gen_sparse_wavelet_signal(&wavelet, density, length, seed)?)?;
        }
        Command::RecoverTable {
            wavelets,
            densities,
            trials,
            restarts,
            length,
            seed,
            eta,
            max_outer,
            all_restarts,
            output,
            trials_out,
        } => {
            let cfg = RecoveryConfig {
                length,
                trials,
                restarts,
                seed,
                eta,
                max_outer,
                stop_on_success: !all_restarts,
            };
            let names: Vec<&str> = wavelets.iter().map(String::as_str).collect();
            let cells = run_recovery_experiment(&names, &densities, &cfg)?;
            let csv = cells_csv(&cells, length);
            match output {
                Some(p) => fs::write(p, csv)?,
                None => write!(out, "{csv}")?,
            }
            if let Some(p) = trials_out {
                fs::write(p, trials_csv(&cells))?;
            }
        }
    }
    Ok(())
}

/// Exit code for an error: 2 for numerical failures, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Core(c) if c.is_numerical() => 2,
        _ => 1,
    }
}

/// Parse `args` (program name first) and run; returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}
