//! Scores a toy checkpoint: oracle accuracy on real held-out faces, target
//! attribute accuracy of translated faces and reconstruction metrics.
//!
//! ```text
//! cargo run --release --example evaluate_toy -- <run_dir>
//! ```
//! `<run_dir>` is the output directory of the `train_toy` example.

use std::path::PathBuf;

use attrgan::data::{Dataset, DatasetManifest};
use attrgan::eval::{fake_attribute_accuracy, reconstruction_metrics, split_indices, train_oracle_classifier, OracleConfig};
use attrgan::training::Trainer;

fn main() -> attrgan::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let run = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "toy_run".into()));
    let dataset = Dataset::load(DatasetManifest::load(run.join("data"))?, 32)?;
    let generator = Trainer::load(&run.join("checkpoints/latest.safetensors"))?.into_generator();

    let cfg = OracleConfig::toy(dataset.vocabulary().len(), 0);
    let (oracle, real_acc) = train_oracle_classifier(&dataset, &cfg)?;
    let (_, test) = split_indices(&dataset, cfg.seed, cfg.test_fraction)?;
    let held_out = dataset.subset(&test);
    let fake = fake_attribute_accuracy(&generator, &oracle, &held_out, 64)?;
    let rec = reconstruction_metrics(&generator, &held_out, 64)?;
    println!("oracle accuracy on real held-out images: {real_acc:.4}");
    println!("target attribute accuracy of translations: {:.4} over {} images", fake.accuracy, fake.scored);
    println!("confusion [target][predicted]: {:?}", fake.confusion);
    println!("cycle L1 {:.4}, identity L1 {:.4}, diversity {:.4}", rec.cycle_l1, rec.identity_l1, rec.diversity);
    Ok(())
}
