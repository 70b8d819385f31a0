//! `retrip`: reflectivity-augmented triangle descriptors for LiDAR place
//! recognition: synthetic benchmark generation, per-stage inspection, and
//! end-to-end evaluation.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use retrip_core::synth::Preset;
use retrip_core::Environment;

use commands::{EvaluateArgs, SynthArgs};
use config::PipelineFlags;

#[derive(Parser)]
#[command(name = "retrip", version, about, max_term_width = 100)]
struct Cli {
    /// World / RNG seed.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Worker threads for parallel stages (default: available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Flat key=value config file; explicit flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    print_config: bool,
    /// Environment preset: sets the ARP threshold and revisit semantics.
    #[arg(long, global = true)]
    env: Option<Environment>,
    #[command(flatten)]
    pipeline: PipelineFlags,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic benchmark: scans, poses.csv, markers.csv.
    Synth {
        /// World preset: town | corridor.
        #[arg(long)]
        preset: Preset,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Trajectory length in meters (default: preset length).
        #[arg(long)]
        length: Option<f64>,
        /// Scan spacing in meters (default: preset spacing).
        #[arg(long)]
        spacing: Option<f64>,
        #[arg(long)]
        num_markers: Option<usize>,
        /// Fraction of returns replaced by transient clutter.
        #[arg(long)]
        dynamic_ratio: Option<f64>,
    },
    /// Classify every point of a scan as ARP / RRP / remainder.
    Keypoints {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract the key-instance set of a scan.
    Instances {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build triangle descriptors for a scan.
    Describe {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank loop-frame candidates for a scan against a database.
    Query {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        scan: PathBuf,
    },
    /// Verify the best loop candidate and print its transform.
    Verify {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        scan: PathBuf,
    },
    /// Run the full pipeline over a benchmark directory and score it.
    Evaluate {
        #[arg(long)]
        benchmark: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-stage timing percentiles on one scan.
    Bench {
        #[arg(long)]
        scan: PathBuf,
        #[arg(long, default_value_t = 50)]
        iters: usize,
    },
}

fn effective_env(cli: &Cli) -> Option<Environment> {
    cli.env
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = config::resolve(effective_env(&cli), cli.config.as_deref(), &cli.pipeline)?;
    if cli.print_config {
        config::print_config(&cfg);
        return Ok(());
    }
    let workers = cli
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let Some(command) = cli.command else {
        anyhow::bail!(
            "missing subcommand (expected one of: synth, keypoints, instances, describe, query, verify, evaluate, bench)"
        );
    };
    match command {
        Command::Synth {
            preset,
            out,
            length,
            spacing,
            num_markers,
            dynamic_ratio,
        } => commands::synth(&SynthArgs {
            preset,
            seed: cli.seed,
            out,
            length,
            spacing,
            num_markers,
            dynamic_ratio,
        }),
        Command::Keypoints { input, out } => commands::keypoints(&input, &out, &cfg, workers),
        Command::Instances { input, out } => commands::instances(&input, &out, &cfg, workers),
        Command::Describe { input, out } => commands::describe(&input, &out, &cfg, workers),
        Command::Query { db, scan } => commands::query(&db, &scan, &cfg, workers),
        Command::Verify { db, scan } => commands::verify(&db, &scan, &cfg, workers),
        Command::Evaluate { benchmark, out } => commands::evaluate(
            &EvaluateArgs {
                benchmark,
                out,
                workers,
            },
            &cfg,
        ),
        Command::Bench { scan, iters } => commands::bench(&scan, iters, &cfg, workers),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
