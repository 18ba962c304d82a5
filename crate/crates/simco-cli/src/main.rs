//! `simco` — generate shape datasets, train the similarity head, count
//! repeated objects, sweep clustering granularity, and evaluate counts.

mod commands;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "simco",
    version,
    about = "Similarity-based multi-class object counting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic shape dataset (rasters + manifest.json).
    Generate {
        /// Generator config JSON; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the similarity head on a dataset's train split.
    Train {
        /// Dataset directory produced by `generate`.
        #[arg(long)]
        dataset: PathBuf,
        /// Training config JSON; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Model output path; the loss curve lands next to it as
        /// `<stem>_loss.csv`.
        #[arg(long)]
        out: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config epoch count.
        #[arg(long)]
        epochs: Option<usize>,
        /// Detector feeding training features.
        #[arg(long, value_parser = commands::parse_detector, default_value = "oracle")]
        detector: commands::Detector,
    },
    /// Count repeated objects in one dataset image.
    Count {
        #[arg(long)]
        dataset: PathBuf,
        /// Image id, e.g. img_00012.
        #[arg(long)]
        image_id: String,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_parser = commands::parse_detector, default_value = "oracle")]
        detector: commands::Detector,
        #[arg(long, value_parser = commands::parse_mode, default_value = "seeded")]
        mode: commands::Mode,
        /// Seeds file (JSON list of {image_id, bbox}); seeded mode derives
        /// one seed per annotated type when omitted.
        #[arg(long)]
        seeds: Option<PathBuf>,
        /// Output directory for report.json, detections.jsonl, overlay.ppm.
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster one image at several preference values and render overlays.
    Sweep {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        image_id: String,
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated preference values (typically negative); a linear
        /// grid over the similarity range is used when omitted.
        #[arg(long, allow_hyphen_values = true)]
        preferences: Option<String>,
        /// Grid size when --preferences is omitted.
        #[arg(long, default_value_t = 8)]
        grid: usize,
        #[arg(long, value_parser = commands::parse_detector, default_value = "oracle")]
        detector: commands::Detector,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate counting on a dataset split; writes metrics CSV + summary.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_parser = commands::parse_detector, default_value = "oracle")]
        detector: commands::Detector,
        #[arg(long, value_parser = commands::parse_mode, default_value = "seeded")]
        mode: commands::Mode,
        /// Split to evaluate: train, val or test.
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    simco::par::configure_threads_from_env();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate { config, seed, out } => commands::generate(config, seed, &out),
        Command::Train {
            dataset,
            config,
            out,
            seed,
            epochs,
            detector,
        } => commands::train(&dataset, config, &out, seed, epochs, detector),
        Command::Count {
            dataset,
            image_id,
            model,
            detector,
            mode,
            seeds,
            out,
        } => commands::count(&dataset, &image_id, &model, detector, mode, seeds, &out),
        Command::Sweep {
            dataset,
            image_id,
            model,
            preferences,
            grid,
            detector,
            out,
        } => commands::sweep(
            &dataset,
            &image_id,
            &model,
            preferences,
            grid,
            detector,
            &out,
        ),
        Command::Eval {
            dataset,
            model,
            detector,
            mode,
            split,
            out,
        } => commands::eval(&dataset, &model, detector, mode, &split, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
