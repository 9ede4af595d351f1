//! `hsinr`: command-line front end for the hyperspectral INR codec.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hsinr::codec;
use hsinr::cube::{normalize, normalize_with, read_cube, save_cube, synth_cube};
use hsinr::encoder::{
    compress_with, default_candidates, probe_candidates, select_best, CompressTarget, DEFAULT_EVAL_EVERY,
    DEFAULT_ITERATIONS, DEFAULT_PROBE_ITERATIONS,
};
use hsinr::quality::{bpppb, write_history_csv, Distortion};
use hsinr::{Error, Precision, SampleConfig, SynthKind, TrainConfig};

const THREADS_ENV: &str = "HSINR_THREADS";

#[derive(Parser)]
#[command(
    name = "hsinr",
    version,
    about = "Hyperspectral cube compression with sine-activated MLPs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network on a cube and write the `.hsin` file.
    Compress(CompressArgs),
    /// Rebuild a cube from a `.hsin` file.
    Decompress {
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
        /// Output `.raw` path; the `.hdr` sidecar is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare an original and a reconstructed cube.
    Metrics {
        #[arg(long)]
        orig: PathBuf,
        #[arg(long)]
        recon: PathBuf,
        /// Measure in raw units with peak = original max − min instead of
        /// normalizing both cubes by the original's range.
        #[arg(long)]
        raw_range: bool,
        /// Also report the rate of this `.hsin` file.
        #[arg(long, value_name = "FILE")]
        encoded: Option<PathBuf>,
    },
    /// Probe candidate shapes within a rate budget and print their scores.
    Search {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        budget_bpppb: f64,
        #[arg(long, default_value_t = DEFAULT_PROBE_ITERATIONS)]
        probe_iters: usize,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Write a deterministic synthetic cube.
    Synth {
        /// smooth-gradient, band-sinusoid or random.
        #[arg(long)]
        kind: SynthKind,
        /// Shape as WxHxC, e.g. 32x32x8.
        #[arg(long, value_parser = parse_dims)]
        dims: (usize, usize, usize),
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct CompressArgs {
    /// Input `.raw` path with a `.hdr` sidecar.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, requires = "width", conflicts_with = "budget_bpppb")]
    layers: Option<usize>,
    #[arg(long, requires = "layers", conflicts_with = "budget_bpppb")]
    width: Option<usize>,
    /// Search the default shape grid for the best network within this rate.
    #[arg(long, required_unless_present = "layers")]
    budget_bpppb: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_PROBE_ITERATIONS)]
    probe_iters: usize,
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    iters: usize,
    #[command(flatten)]
    train: TrainArgs,
    /// Write the evaluated PSNR history as CSV.
    #[arg(long, value_name = "FILE")]
    history: Option<PathBuf>,
    /// Print each evaluation to stderr.
    #[arg(long, short)]
    verbose: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Store parameters as binary16.
    #[arg(long)]
    half: bool,
    #[arg(long, requires = "sample_rate")]
    sample_window: Option<usize>,
    #[arg(long, requires = "sample_window")]
    sample_rate: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_EVAL_EVERY)]
    eval_every: usize,
}

impl TrainArgs {
    fn config(&self, iterations: usize) -> Result<TrainConfig, Error> {
        let sample = match (self.sample_window, self.sample_rate) {
            (Some(w), Some(r)) => Some(SampleConfig::new(w, r, self.seed)?),
            _ => None,
        };
        let cfg = TrainConfig {
            iterations,
            eval_every: self.eval_every,
            sample,
            seed: self.seed,
            precision: if self.half {
                Precision::Half16
            } else {
                Precision::Full32
            },
            ..TrainConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_dims(s: &str) -> Result<(usize, usize, usize), String> {
    let parts: Vec<&str> = s.split(['x', 'X']).collect();
    let [w, h, c] = parts.as_slice() else {
        return Err(format!("expected WxHxC, got {s:?}"));
    };
    let num = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((num(w)?, num(h)?, num(c)?))
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numeric() {
        3
    } else if e.is_io() || matches!(e, Error::Dimension(_)) {
        2
    } else {
        1
    }
}

fn compress(args: CompressArgs) -> Result<(), Error> {
    let cfg = args.train.config(args.iters)?;
    let target = match (args.layers, args.width, args.budget_bpppb) {
        (Some(n_hidden), Some(hidden_width), None) => CompressTarget::Spec { n_hidden, hidden_width },
        (None, None, Some(bpppb)) => CompressTarget::Budget {
            bpppb,
            candidates: default_candidates(),
            probe_iterations: args.probe_iters,
        },
        _ => {
            return Err(Error::Config(
                "give either --layers and --width, or --budget-bpppb".into(),
            ))
        }
    };
    let cube = read_cube(&args.input)?;
    let verbose = args.verbose;
    let out = compress_with(&cube, &target, &cfg, |epoch, psnr| {
        if verbose {
            eprintln!("epoch {epoch}: psnr {psnr:.3} dB");
        }
    })?;
    codec::write_file(&out.encoded, &args.out)?;
    if let Some(path) = &args.history {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        write_history_csv(BufWriter::new(file), &out.snapshot.history).map_err(|e| Error::io(path, e))?;
    }
    print!("{}", out.report);
    println!("layers={}", out.encoded.n_hidden);
    println!("width={}", out.encoded.hidden_width);
    println!("best_epoch={}", out.snapshot.epoch);
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Compress(args) => compress(args),
        Command::Decompress { input, out } => {
            let enc = codec::read_file(&input)?;
            save_cube(&codec::decompress(&enc)?, &out)
        }
        Command::Metrics {
            orig,
            recon,
            raw_range,
            encoded,
        } => {
            let orig = read_cube(&orig)?;
            let recon = read_cube(&recon)?;
            if orig.dims() != recon.dims() {
                return Err(Error::Dimension(format!(
                    "cubes differ in shape: {:?} vs {:?}",
                    orig.dims(),
                    recon.dims()
                )));
            }
            let d = if raw_range {
                let (lo, hi) = orig.value_range();
                if hi <= lo {
                    return Err(Error::Config("--raw-range needs a non-constant original".into()));
                }
                Distortion::measure(&orig, &recon, hi as f64 - lo as f64)?
            } else {
                let (o, scale) = normalize(&orig);
                Distortion::measure(&o, &normalize_with(&recon, scale), 1.0)?
            };
            print!("{d}");
            if let Some(path) = encoded {
                let enc = codec::read_file(&path)?;
                let (w, h, c) = orig.dims();
                println!("bpppb={}", bpppb(enc.param_count(), enc.bits_per_param(), w, h, c));
            }
            Ok(())
        }
        Command::Search {
            input,
            budget_bpppb,
            probe_iters,
            train,
        } => {
            let cfg = train.config(probe_iters)?;
            let (cube, _) = normalize(&read_cube(&input)?);
            let probes = probe_candidates(&cube, budget_bpppb, &default_candidates(), &cfg)?;
            for p in &probes {
                println!(
                    "layers={} width={} bpppb={} psnr={}",
                    p.spec.n_hidden, p.spec.hidden_width, p.bpppb, p.psnr
                );
            }
            let best = select_best(&probes).expect("probing returns at least one result");
            println!("best_layers={}", best.spec.n_hidden);
            println!("best_width={}", best.spec.hidden_width);
            Ok(())
        }
        Command::Synth { kind, dims, seed, out } => {
            let (w, h, c) = dims;
            save_cube(&synth_cube(kind, w, h, c, seed)?, &out)
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .map_err(|_| format!("{THREADS_ENV} must be a positive integer, got {value:?}"))?;
    if n == 0 {
        return Err(format!("{THREADS_ENV} must be a positive integer, got {value:?}"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("hsinr: {msg}");
        return ExitCode::from(1);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hsinr: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
