//! `ddvqa`: build the QA dataset, train the multimodal model, generate
//! answers, score them, and run the detector-fusion benchmark.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "ddvqa", version, about = "Deepfake-detection VQA pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct CommonArgs {
    /// Output directory; falls back to $DDVQA_OUT_ROOT/<name>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed for every random stream in the run.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Build the QA corpus: from raw annotations or the synthetic generator.
    BuildDataset {
        #[command(flatten)]
        common: CommonArgs,
        /// Generate a synthetic corpus instead of reading raw annotations.
        #[arg(long)]
        synthetic: bool,
        /// Raw annotations JSONL (one per annotator and question).
        #[arg(long, conflicts_with = "synthetic")]
        raw: Option<PathBuf>,
        /// Number of synthetic images.
        #[arg(long, default_value_t = 300)]
        n: usize,
        /// Synthetic image side length in pixels.
        #[arg(long, default_value_t = 64)]
        image_size: usize,
        /// Artifact pool: all, base, or held-out (cross-testing).
        #[arg(long, default_value = "all")]
        artifacts: String,
        /// Fraction of fake images in the synthetic corpus.
        #[arg(long, default_value_t = 0.5)]
        p_fake: f64,
    },
    /// Train the model on a built dataset.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Dataset directory from build-dataset.
        #[arg(long, required_unless_present = "overfit")]
        dataset: Option<PathBuf>,
        /// Flat key-value training config file.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Loss selection: lm, lm+t, lm+i or lm+t+i.
        #[arg(long)]
        ablation: Option<String>,
        /// Transformer width (overrides the desk default).
        #[arg(long)]
        d_model: Option<usize>,
        /// Run the fixed eight-pair overfit recipe.
        #[arg(long)]
        overfit: bool,
        /// Resume from the run directory's training state.
        #[arg(long)]
        resume: bool,
    },
    /// Generate answers for a dataset split with a trained checkpoint.
    Generate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Which split to answer: train or test.
        #[arg(long, default_value = "test")]
        split: String,
        /// Also export grounding attention maps for this image id.
        #[arg(long)]
        attention_for: Option<String>,
    },
    /// Score a generations file: detection + NLG metrics.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        /// generations.jsonl from the generate command.
        #[arg(long)]
        generations: PathBuf,
    },
    /// Benchmark a binary detector with and without feature fusion.
    Fuse {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset dir whose train split trains the detector and whose test
        /// split is the intra-testing corpus.
        #[arg(long)]
        train_data: PathBuf,
        /// Dataset dir with held-out artifact types (cross-testing).
        #[arg(long)]
        cross_data: PathBuf,
        /// Comma-separated seeds.
        #[arg(long, default_value = "1,2,3")]
        seeds: String,
        #[arg(long, default_value_t = 6)]
        epochs: usize,
        /// Keep the fusion projection at zero and out of the optimizer.
        #[arg(long)]
        freeze_projection_zero: bool,
    },
    /// Summarize the artifacts in a run directory.
    Report {
        /// Run directory holding loss.csv / eval.json / fusion.csv.
        #[arg(long)]
        run: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::BuildDataset {
            common,
            synthetic,
            raw,
            n,
            image_size,
            artifacts,
            p_fake,
        } => commands::build_dataset(common, synthetic, raw, n, image_size, &artifacts, p_fake),
        Command::Train {
            common,
            dataset,
            config,
            epochs,
            ablation,
            d_model,
            overfit,
            resume,
        } => commands::train(common, dataset, config, epochs, ablation, d_model, overfit, resume),
        Command::Generate {
            common,
            checkpoint,
            dataset,
            split,
            attention_for,
        } => commands::generate(common, checkpoint, dataset, &split, attention_for),
        Command::Eval { common, generations } => commands::eval(common, generations),
        Command::Fuse {
            common,
            checkpoint,
            train_data,
            cross_data,
            seeds,
            epochs,
            freeze_projection_zero,
        } => commands::fuse(
            common,
            checkpoint,
            train_data,
            cross_data,
            &seeds,
            epochs,
            freeze_projection_zero,
        ),
        Command::Report { run } => commands::report(run),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
