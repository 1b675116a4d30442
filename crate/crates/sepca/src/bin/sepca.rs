//! Command-line front end: generate synthetic data, estimate a model,
//! denoise stacks, run method comparisons, and benchmark estimation.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use sepca::error::Error;
use sepca::eval::{run_comparison, ComparisonConfig, Method};
use sepca::model::{estimate, EstimateOptions, Param, SepcaModel};
use sepca::synth::{poisson_observe, GroundTruthModel};
use sepca::ImageStack;

#[derive(Parser)]
#[command(name = "sepca", version, about = "steerable ePCA for Poisson-count images")]
struct Cli {
    /// Worker threads (default: available cores; SEPCA_THREADS as fallback)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic clean stack, count stack, and ground-truth sidecar
    Generate(GenerateArgs),
    /// Estimate a steerable ePCA model from a count stack
    Estimate(EstimateArgs),
    /// Denoise a count stack with a trained model
    Denoise(DenoiseArgs),
    /// Compare methods on synthetic data with known ground truth
    Evaluate(EvaluateArgs),
    /// Time model estimation over a grid of sample sizes
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Preset: desk (L=32) or paper (L=128)
    #[arg(long, default_value = "desk")]
    preset: String,
    /// Number of images
    #[arg(long)]
    n: usize,
    /// Seed for the draws
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    /// Input count stack (header file; payload sits next to it)
    #[arg(long = "in")]
    input: PathBuf,
    /// Output model path
    #[arg(long)]
    out: PathBuf,
    /// Support radius: "auto" or an integer number of pixels
    #[arg(long = "R", default_value = "auto")]
    r: String,
    /// Band limit: "auto" or a real in (0, 0.5]
    #[arg(long = "c", default_value = "auto")]
    c: String,
    /// Exclude reflections from the invariant covariance
    #[arg(long)]
    no_reflections: bool,
}

#[derive(Args)]
struct DenoiseArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Directory holding truth.json from `generate` (the generator model)
    #[arg(long)]
    truth: PathBuf,
    /// Comma-separated methods: pca,spca,epca,sepca
    #[arg(long, default_value = "sepca")]
    methods: String,
    /// Comma-separated sample sizes
    #[arg(long = "n-grid", default_value = "100,1000")]
    n_grid: String,
    /// Number of seeds (0..seeds)
    #[arg(long, default_value_t = 3)]
    seeds: u64,
    /// Skip the dense covariance-error computation
    #[arg(long)]
    no_covariance: bool,
    /// Output directory for report.csv and summary.json
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value = "desk")]
    preset: String,
    #[arg(long = "n-grid", default_value = "1000,10000")]
    n_grid: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::InvalidArgument(_) => 2,
        Error::Data(_) | Error::Io(_) | Error::Json(_) | Error::DegenerateInput(_) => 3,
        Error::EmptyBasis { .. } | Error::Numerical(_) | Error::IndexOutOfRange { .. } => 4,
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, Error> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<T>()
                .map_err(|_| Error::InvalidArgument(format!("bad {what} entry: {t}")))
        })
        .collect()
}

fn preset(name: &str, seed: u64) -> Result<GroundTruthModel, Error> {
    match name {
        "desk" => GroundTruthModel::desk_preset(seed),
        "paper" => GroundTruthModel::paper_preset(seed),
        other => Err(Error::InvalidArgument(format!(
            "unknown preset {other} (expected desk or paper)"
        ))),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let threads = cli
        .threads
        .or_else(|| {
            std::env::var("SEPCA_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(0); // 0: rayon picks the core count
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }

    match cli.command {
        Command::Generate(a) => {
            if a.n == 0 {
                return Err(Error::InvalidArgument("--n must be positive".into()));
            }
            let model = preset(&a.preset, a.seed)?;
            std::fs::create_dir_all(&a.out)?;
            let clean = model.draw_clean_stack(a.n, a.seed)?;
            let counts = poisson_observe(&clean, a.seed ^ 0x706f_6973)?;
            clean.write(&a.out.join("clean.stack"))?;
            counts.write(&a.out.join("counts.stack"))?;
            model.write(&a.out.join("truth.json"))?;
            println!(
                "wrote {} images (L = {}) to {}",
                a.n,
                clean.l,
                a.out.display()
            );
        }
        Command::Estimate(a) => {
            let stack = ImageStack::read(&a.input)?;
            let support_radius = match a.r.as_str() {
                "auto" => Param::Auto,
                s => Param::Fixed(s.parse::<usize>().map_err(|_| {
                    Error::InvalidArgument(format!("--R expects auto or an integer, got {s}"))
                })?),
            };
            let band_limit = match a.c.as_str() {
                "auto" => Param::Auto,
                s => Param::Fixed(s.parse::<f64>().map_err(|_| {
                    Error::InvalidArgument(format!("--c expects auto or a real, got {s}"))
                })?),
            };
            let opts = EstimateOptions {
                support_radius,
                band_limit,
                include_reflections: !a.no_reflections,
            };
            let model = estimate(&stack, &opts)?;
            model.write(&a.out)?;
            println!(
                "estimated R = {}, c = {:.4}, kept ranks {:?}{}",
                model.estimated_support_radius,
                model.estimated_band_limit,
                model.kept_ranks(),
                if model.band_limit_flat_warning {
                    " (warning: spectrum indistinguishable from flat noise)"
                } else {
                    ""
                }
            );
        }
        Command::Denoise(a) => {
            let stack = ImageStack::read(&a.input)?;
            let model = SepcaModel::read(&a.model)?;
            let denoised = sepca::denoise::denoise_stack(&stack, &model)?;
            denoised.write(&a.out)?;
            println!("denoised {} images to {}", stack.n, a.out.display());
        }
        Command::Evaluate(a) => {
            let model = GroundTruthModel::read(&a.truth.join("truth.json"))?;
            let methods = a
                .methods
                .split(',')
                .map(Method::parse)
                .collect::<Result<Vec<_>, _>>()?;
            let n_grid: Vec<usize> = parse_list(&a.n_grid, "n-grid")?;
            if n_grid.is_empty() || methods.is_empty() {
                return Err(Error::InvalidArgument(
                    "need at least one method and one sample size".into(),
                ));
            }
            let config = ComparisonConfig {
                methods,
                n_grid,
                seeds: (0..a.seeds.max(1)).collect(),
                covariance_errors: !a.no_covariance,
            };
            let report = run_comparison(&model, &config)?;
            std::fs::create_dir_all(&a.out)?;
            report.write_csv(&a.out.join("report.csv"))?;
            report.write_json(&a.out.join("summary.json"))?;
            for s in &report.summary {
                println!(
                    "{:>6} n={:<6} median mse {:.6e} median fro {:.4} median rank {:.1}",
                    s.method, s.n, s.median_mse, s.median_fro_err, s.median_rank
                );
            }
        }
        Command::Bench(a) => {
            let model = preset(&a.preset, a.seed)?;
            let n_grid: Vec<usize> = parse_list(&a.n_grid, "n-grid")?;
            let opts = EstimateOptions {
                support_radius: Param::Fixed(model.basis.params.support_radius),
                band_limit: Param::Fixed(model.basis.params.band_limit),
                include_reflections: true,
            };
            println!("n,wall_ms");
            for &n in &n_grid {
                let clean = model.draw_clean_stack(n, a.seed)?;
                let counts = poisson_observe(&clean, a.seed ^ 1)?;
                let t0 = Instant::now();
                let _ = estimate(&counts, &opts)?;
                println!("{n},{:.1}", t0.elapsed().as_secs_f64() * 1e3);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
