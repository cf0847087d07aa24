//! Trains the 32×32 toy model on procedurally generated faces.
//!
//! ```text
//! cargo run --release --example train_toy -- [out_dir] [max_critic_steps] [config.toml]
//! ```

use std::path::PathBuf;
use std::time::Instant;

use attrgan::data::toy::generate_toy_dataset;
use attrgan::data::{Dataset, DatasetManifest};
use attrgan::training::{FitOptions, TrainConfig, Trainer};

fn main() -> attrgan::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "toy_run".into()));
    let max_steps = args.next().and_then(|s| s.parse().ok()).filter(|&n: &u64| n > 0);
    let config = args.next().map(PathBuf::from);

    let data_dir = out.join("data");
    if !data_dir.join("labels.tsv").exists() {
        generate_toy_dataset(&data_dir, 2000, 4, 32, 0)?;
    }
    let dataset = Dataset::load(DatasetManifest::load(&data_dir)?, 32)?;
    let cfg = match config {
        Some(path) => TrainConfig::from_file(&path)?,
        None => TrainConfig::toy(4),
    };
    let mut trainer = Trainer::new(cfg, dataset.vocabulary().clone())?;
    let opts = FitOptions {
        metrics_path: Some(out.join("metrics.jsonl")),
        checkpoint_dir: Some(out.join("checkpoints")),
        max_d_steps: max_steps,
    };
    let start = Instant::now();
    let summary = trainer.fit(&dataset, &opts)?;
    println!(
        "{} critic / {} generator steps in {:.1}s; last generator losses {:?}",
        summary.d_steps,
        summary.g_steps,
        start.elapsed().as_secs_f64(),
        summary.last_g
    );
    Ok(())
}
