use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use claimcheck::{cmd_analyze, cmd_calibrate, cmd_quality, with_workers, CliError, RunConfig};

/// Check whether two sets of face images show the same person.
#[derive(Parser)]
#[command(name = "claimcheck", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Treat inputs as already aligned 112×112 crops.
    #[arg(long, global = true)]
    assume_aligned: bool,
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Args)]
struct Shared {
    /// Run configuration supplying classifiers, quality constants and preset locations.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write reports.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        /// Descriptor preset to use instead of the configured list (repeatable).
        #[arg(long = "descriptor")]
        descriptors: Vec<String>,
    },
    /// Write per-image quality scores as CSV.
    Quality {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        shared: Shared,
    },
    /// Compute reference-population scores and cache them as JSON.
    Calibrate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "baseline")]
        descriptor: String,
        #[command(flatten)]
        shared: Shared,
    },
}

fn base_config(path: Option<&PathBuf>, manifest: &PathBuf) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::new(manifest.clone(), ".")),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let apply = |cfg: &mut RunConfig| {
        cfg.assume_aligned |= cli.assume_aligned;
        if let Some(w) = cli.workers {
            cfg.workers = w;
        }
    };
    match &cli.command {
        Command::Analyze { config, descriptors } => {
            let mut cfg = RunConfig::load(config)?;
            apply(&mut cfg);
            if !descriptors.is_empty() {
                cfg.descriptors = descriptors.clone();
            }
            let index = with_workers(cfg.workers, || cmd_analyze(&cfg))??;
            for e in &index.descriptors {
                println!("{}\t{}\t{}", e.descriptor, e.verdict, cfg.output_dir.join(&e.report).display());
            }
        }
        Command::Quality { manifest, out, shared } => {
            let mut cfg = base_config(shared.config.as_ref(), manifest)?;
            apply(&mut cfg);
            let rows = with_workers(cfg.workers, || cmd_quality(manifest, out, &cfg))??;
            println!("{rows} rows written to {}", out.display());
        }
        Command::Calibrate {
            manifest,
            out,
            descriptor,
            shared,
        } => {
            let mut cfg = base_config(shared.config.as_ref(), manifest)?;
            apply(&mut cfg);
            let cache = with_workers(cfg.workers, || cmd_calibrate(manifest, out, descriptor, &cfg))??;
            println!(
                "{}: {} genuine, {} impostor scores written to {}",
                cache.descriptor,
                cache.distributions.genuine.len(),
                cache.distributions.impostor.len(),
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("claimcheck: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
