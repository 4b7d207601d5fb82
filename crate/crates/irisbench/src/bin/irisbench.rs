//! Command-line front end: dataset synthesis, one-shot obfuscation of a
//! dataset directory, the full benchmark sweep, and report re-rendering.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use irisbench::bench::{self, BenchConfig};
use irisbench::imagecore::RngSeed;
use irisbench::obfuscation::{assign_donor, obfuscate, realize_method, MethodSpec};
use irisbench::synthgen::{generate_dataset, load_dataset, save_dataset, Dataset, EyeSample};
use irisbench::{Error, Result};

#[derive(Parser)]
#[command(name = "irisbench", version, about = "Iris obfuscation benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic eye dataset.
    SynthGen(SynthGenArgs),
    /// Apply one obfuscation method to every image of a dataset directory.
    Obfuscate(ObfuscateArgs),
    /// Run the benchmark sweep and write reports.
    Bench(BenchArgs),
    /// Re-render reports from a previous sweep's raw dump.
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthGenArgs {
    /// Number of identities (at least 2).
    #[arg(long)]
    identities: usize,
    /// Samples per identity (at least 2; first half enrolls).
    #[arg(long = "per-id")]
    per_id: usize,
    /// Master seed for the generator.
    #[arg(long, default_value_t = 77)]
    seed: u64,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum MethodName {
    Blur,
    Noise,
    Downsample,
    RubberSheet,
    StyleTransfer,
}

#[derive(Args)]
struct ObfuscateArgs {
    /// Obfuscation method.
    #[arg(long, value_enum)]
    method: MethodName,
    /// Gaussian sigma (blur: pixels, noise: intensity units).
    #[arg(long)]
    sigma: Option<f64>,
    /// Downsampling factor (>= 1).
    #[arg(long)]
    scale: Option<f64>,
    /// Style-transfer optimization steps.
    #[arg(long)]
    iterations: Option<usize>,
    /// Input dataset directory (synth-gen layout).
    #[arg(long = "in")]
    input: PathBuf,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// Fixed donor identity for rubber-sheet / style-transfer; samples of
    /// that identity are copied unchanged.
    #[arg(long = "donor-id")]
    donor_id: Option<u32>,
    /// Seed for per-image donor assignment and noise draws.
    #[arg(long, default_value_t = 11)]
    seed: u64,
    /// Seed for the style-transfer feature extractor.
    #[arg(long = "extractor-seed", default_value_t = 101)]
    extractor_seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    /// Flat key=value config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config's `out` key.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Md,
    Csv,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory holding a sweep's report_raw.tsv.
    #[arg(long = "in")]
    input: PathBuf,
    /// Which report files to re-render.
    #[arg(long, value_enum)]
    format: ReportFormat,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::SynthGen(args) => run_synth_gen(args),
        Command::Obfuscate(args) => run_obfuscate(args),
        Command::Bench(args) => run_bench(args),
        Command::Report(args) => run_report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run_synth_gen(args: SynthGenArgs) -> Result<()> {
    let dataset = generate_dataset(args.identities, args.per_id, RngSeed(args.seed))?;
    save_dataset(&dataset, &args.out)?;
    println!(
        "wrote {} samples ({} identities) to {}",
        dataset.entries.len(),
        args.identities,
        args.out.display()
    );
    Ok(())
}

/// Builds the grid point from the per-method flags, rejecting missing or
/// stray parameters.
fn method_spec(args: &ObfuscateArgs) -> Result<MethodSpec> {
    let need = |opt: Option<f64>, flag: &str| {
        opt.ok_or_else(|| Error::InvalidParameter(format!("--{flag} is required for this method")))
    };
    let spec = match args.method {
        MethodName::Blur => MethodSpec::Blur {
            sigma: need(args.sigma, "sigma")?,
        },
        MethodName::Noise => MethodSpec::Noise {
            sigma: need(args.sigma, "sigma")?,
        },
        MethodName::Downsample => MethodSpec::Downsample {
            scale: need(args.scale, "scale")?,
        },
        MethodName::RubberSheet => MethodSpec::RubberSheet,
        MethodName::StyleTransfer => MethodSpec::StyleTransfer {
            iterations: args.iterations.ok_or_else(|| {
                Error::InvalidParameter("--iterations is required for style-transfer".into())
            })?,
        },
    };
    let uses_donor = matches!(
        spec,
        MethodSpec::RubberSheet | MethodSpec::StyleTransfer { .. }
    );
    if args.donor_id.is_some() && !uses_donor {
        return Err(Error::InvalidParameter(
            "--donor-id only applies to rubber-sheet and style-transfer".into(),
        ));
    }
    Ok(spec)
}

fn fixed_donor(dataset: &Dataset, id: u32) -> Result<&EyeSample> {
    dataset
        .enroll()
        .find(|s| s.identity_id == id)
        .ok_or_else(|| {
            Error::InvalidParameter(format!("donor identity {id} has no enroll sample"))
        })
}

fn run_obfuscate(args: ObfuscateArgs) -> Result<()> {
    let spec = method_spec(&args)?;
    let dataset = load_dataset(&args.input)?;
    let run_seed = RngSeed(args.seed);
    let extractor_seed = RngSeed(args.extractor_seed);
    if let Some(id) = args.donor_id {
        fixed_donor(&dataset, id)?;
    }

    let mut out = dataset.clone();
    let mut changed = 0usize;
    let mut skipped = 0usize;
    for idx in 0..out.entries.len() {
        let sample = &dataset.entries[idx].sample;
        let donor = match args.donor_id {
            Some(id) if sample.identity_id == id => {
                skipped += 1;
                continue;
            }
            Some(id) => fixed_donor(&dataset, id)?,
            None => match assign_donor(&dataset, sample.identity_id, idx, run_seed) {
                Ok(d) => d,
                Err(_) => {
                    skipped += 1;
                    continue;
                }
            },
        };
        match realize_method(&spec, donor, idx, run_seed, extractor_seed) {
            Some(method) => {
                out.entries[idx].sample.image = obfuscate(sample, &method)?;
                changed += 1;
            }
            None => skipped += 1,
        }
    }
    save_dataset(&out, &args.out)?;
    println!(
        "obfuscated {changed} of {} images ({skipped} copied unchanged) into {}",
        dataset.entries.len(),
        args.out.display()
    );
    Ok(())
}

fn run_bench(args: BenchArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => BenchConfig::load(path)?,
        None => BenchConfig::default(),
    };
    if let Some(out) = args.out {
        config.out_dir = out;
    }
    let report = bench::run(&config)?;
    bench::emit(&report, &config.out_dir)?;
    println!(
        "wrote report.csv, privacy.csv, gaze.csv, report.md, report_raw.tsv to {}",
        config.out_dir.display()
    );
    Ok(())
}

fn run_report(args: ReportArgs) -> Result<()> {
    let report = bench::load_raw(&args.input)?;
    match args.format {
        ReportFormat::Md => {
            let path = args.input.join("report.md");
            std::fs::write(&path, bench::render_markdown(&report))?;
            println!("wrote {}", path.display());
        }
        ReportFormat::Csv => {
            for (name, text) in [
                ("report.csv", bench::render_report_csv(&report)),
                ("privacy.csv", bench::render_privacy_csv(&report)),
                ("gaze.csv", bench::render_gaze_csv(&report)),
            ] {
                std::fs::write(args.input.join(name), text)?;
            }
            println!("wrote report.csv, privacy.csv, gaze.csv to {}", args.input.display());
        }
    }
    Ok(())
}
