//! Command-line front end: synthetic corpus generation, training,
//! evaluation, prediction and ablation sweeps over one shared pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use repurpose_core::cli::{
    cmd_ablate, cmd_eval, cmd_predict, cmd_synth, cmd_train, resolve_config, AblationAxis,
    CliError,
};
use repurpose_core::data::SyntheticConfig;
use repurpose_core::train::TrainConfig;

#[derive(Parser)]
#[command(
    name = "repurpose",
    about = "Multimodal temporal localizer for long-to-short video repurposing",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted-key overrides, e.g. --set weights.lambda4=0
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with planted clips and split manifests.
    Synth {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output corpus directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model from <data>/train.json and <data>/val.json.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Corpus directory holding the split manifests.
        #[arg(long)]
        data: PathBuf,
        /// Run directory for checkpoint, logs and reports.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint against a manifest.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode the top-k clips for one video's feature container.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Per-video feature directory (visual/audio/caption containers).
        #[arg(long)]
        features: PathBuf,
        /// Video duration in seconds; defaults to rows * segment length.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        segment_length: f64,
        /// Output JSON file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep one ablation axis with a shared seed.
    Ablate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        /// One of: modality, loss_terms, layer_split.
        #[arg(long)]
        axis: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth { config, out } => {
            let (cfg, snapshot) = resolve_config::<SyntheticConfig>(
                config.config.as_deref(),
                &config.sets,
                config.seed,
            )?;
            let output = cmd_synth(cfg, snapshot, &out)?;
            println!(
                "synth: {} videos, {} clips, mean duration {:.1}s, {:.2} clips/10min, {} packing fallbacks",
                output.report.num_videos,
                output.report.total_clips,
                output.report.mean_duration,
                output.report.mean_clips_per_10min,
                output.report.packing_fallbacks
            );
            println!("manifests: {}", output.paths.train_manifest.display());
            Ok(())
        }
        Command::Train { config, data, out } => {
            let (cfg, snapshot) = resolve_config::<TrainConfig>(
                config.config.as_deref(),
                &config.sets,
                config.seed,
            )?;
            let output = cmd_train(cfg, snapshot, &data, &out)?;
            println!(
                "train: best val avg mAP {:.4} at epoch {} ({} steps)",
                output.result.best_val_avg,
                output.result.best_epoch,
                output.result.steps.len()
            );
            println!("checkpoint: {}", output.checkpoint_path.display());
            Ok(())
        }
        Command::Eval {
            checkpoint,
            manifest,
            out,
        } => {
            let output = cmd_eval(&checkpoint, &manifest, &out)?;
            print!("{}", output.report.render_table());
            println!("average mAP: {:.4}", output.report.average);
            Ok(())
        }
        Command::Predict {
            checkpoint,
            features,
            duration,
            segment_length,
            out,
        } => {
            let dump = cmd_predict(&checkpoint, &features, duration, segment_length, &out)?;
            println!(
                "predict: {} clips for {} -> {}",
                dump.predictions.len(),
                dump.video_id,
                out.display()
            );
            Ok(())
        }
        Command::Ablate {
            config,
            data,
            axis,
            out,
        } => {
            let axis: AblationAxis = axis
                .parse()
                .map_err(|reason| CliError::Usage { reason })?;
            let (cfg, snapshot) = resolve_config::<TrainConfig>(
                config.config.as_deref(),
                &config.sets,
                config.seed,
            )?;
            let summary = cmd_ablate(cfg.clone(), snapshot, &data, axis, &out)?;
            print!("{}", summary.render_table(&cfg.eval.tiou_thresholds));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let mut source = std::error::Error::source(&err);
            while let Some(cause) = source {
                eprintln!("  caused by: {cause}");
                source = cause.source();
            }
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
