use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use attrgan::data::toy::{generate_refinement_dataset, generate_toy_dataset};
use attrgan::data::{Dataset, DatasetManifest};
use attrgan::eval::{evaluate, OracleConfig};
use attrgan::synthesis::{refine, synthesize_grid, RefinementRequest, SynthesisRequest, TargetAttributes};
use attrgan::training::{load_generator, FitOptions, TrainConfig, Trainer};
use attrgan::{Error, Result};

/// Attribute-guided face translation: training, synthesis, refinement and
/// evaluation.
///
/// Exit codes: 0 success, 2 configuration, 3 invalid input, 4 dataset
/// ingestion, 5 numerical failure, 6 checkpoint, 7 I/O, 8 tensor backend.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on a dataset directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Receives metrics.jsonl and checkpoints/.
        #[arg(long)]
        out: PathBuf,
        /// TOML training config; defaults to the reference recipe.
        #[arg(long, conflicts_with = "toy")]
        config: Option<PathBuf>,
        /// Use the 32×32 toy recipe.
        #[arg(long)]
        toy: bool,
        /// Continue from a checkpoint written by a previous run.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop after this many critic steps in total.
        #[arg(long)]
        max_steps: Option<u64>,
    },
    /// Write an attribute-transfer grid: the input, then one column per attribute.
    Synthesize {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Landmark file, one "x y" per line.
        #[arg(long)]
        landmarks: PathBuf,
        /// "all" or comma-separated attribute names.
        #[arg(long, default_value = "all")]
        attributes: String,
        #[arg(long)]
        output: PathBuf,
    },
    /// Refine a synthetic image against a real side image.
    Refine {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Synthetic frontal image.
        #[arg(long)]
        image: PathBuf,
        /// Real image for the side input.
        #[arg(long)]
        side: PathBuf,
        /// Attribute to transfer in the same pass.
        #[arg(long)]
        attribute: Option<String>,
        /// Output PNG; metadata goes next to it as .json.
        #[arg(long)]
        output: PathBuf,
    },
    /// Score a checkpoint with an independently trained attribute classifier.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Receives report.json and augmentation.png.
        #[arg(long)]
        out: PathBuf,
        /// Synthetic images per class for the augmentation sweep, e.g. 0,200,1000.
        #[arg(long, value_delimiter = ',')]
        sweep: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        oracle_epochs: usize,
    },
    /// Generate the procedural toy-face dataset.
    MakeToyData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[arg(long, default_value_t = 4)]
        attributes: usize,
        #[arg(long, default_value_t = 32)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Gray images with colored side images, for refinement training.
        #[arg(long)]
        refinement: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Train { data, out, config, toy, resume, max_steps } => {
            let manifest = DatasetManifest::load(&data)?;
            let m = manifest.vocabulary.len();
            let mut trainer = match resume {
                Some(path) => Trainer::load(&path)?,
                None => {
                    let cfg = match (config, toy) {
                        (Some(path), _) => TrainConfig::from_file(&path)?,
                        (None, true) => TrainConfig::toy(m),
                        (None, false) => TrainConfig::default().with_attributes(m),
                    };
                    Trainer::new(cfg, manifest.vocabulary.clone())?
                }
            };
            let dataset = Dataset::load(manifest, trainer.config().image_size)?;
            let opts = FitOptions {
                metrics_path: Some(out.join("metrics.jsonl")),
                checkpoint_dir: Some(out.join("checkpoints")),
                max_d_steps: max_steps,
            };
            let summary = trainer.fit(&dataset, &opts)?;
            println!("{} critic steps, {} generator steps", summary.d_steps, summary.g_steps);
        }
        Command::Synthesize { checkpoint, image, landmarks, attributes, output } => {
            let req = SynthesisRequest {
                checkpoint_path: checkpoint,
                input_image_path: image,
                landmark_path: landmarks,
                target_attributes: TargetAttributes::parse(&attributes),
                output_path: output,
            };
            for column in synthesize_grid(&req)? {
                println!("{}\t{:.4}", column.attribute, column.mean_abs_diff);
            }
        }
        Command::Refine { checkpoint, image, side, attribute, output } => {
            let req = RefinementRequest {
                checkpoint_path: checkpoint,
                synthetic_frontal_path: image,
                real_side_image_path: side,
                target_attribute: attribute,
                output_path: output,
            };
            let meta = refine(&req)?;
            println!("{}", meta.display());
        }
        Command::Evaluate { checkpoint, data, out, sweep, seed, oracle_epochs } => {
            let (generator, cfg, _) = load_generator(&checkpoint)?;
            let dataset = Dataset::load(DatasetManifest::load(&data)?, cfg.image_size)?;
            let oracle = OracleConfig { epochs: oracle_epochs, ..OracleConfig::new(&cfg.discriminator, seed) };
            let report = evaluate(&generator, &dataset, &oracle, &sweep)?;
            report.write(&out)?;
            println!("{}", serde_json::to_string_pretty(&report).map_err(Error::from)?);
        }
        Command::MakeToyData { out, samples, attributes, size, seed, refinement } => {
            let manifest = if refinement {
                generate_refinement_dataset(&out, samples, attributes, size, seed)?
            } else {
                generate_toy_dataset(&out, samples, attributes, size, seed)?
            };
            println!("{} samples in {}", manifest.len(), out.display());
        }
    }
    Ok(())
}
