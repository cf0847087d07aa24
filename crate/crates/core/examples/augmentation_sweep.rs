//! Classifier accuracy when the training set is augmented with translated
//! faces, for a trained toy checkpoint. Writes report.json and the curve.
//!
//! ```text
//! cargo run --release --example augmentation_sweep -- toy_run [counts...]
//! ```

use std::path::PathBuf;

use attrgan::data::{Dataset, DatasetManifest};
use attrgan::eval::{augmentation_sweep, EvalReport, OracleConfig};
use attrgan::training::load_generator;

fn main() -> attrgan::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let run = PathBuf::from(args.next().unwrap_or_else(|| "toy_run".into()));
    let mut counts: Vec<usize> = args.filter_map(|s| s.parse().ok()).collect();
    if counts.is_empty() {
        counts = vec![0, 200, 1000];
    }
    let (generator, cfg, _) = load_generator(&run.join("checkpoints/latest.safetensors"))?;
    let dataset = Dataset::load(DatasetManifest::load(run.join("data"))?, cfg.image_size)?;
    let oracle = OracleConfig::new(&cfg.discriminator, 0);
    let curve = augmentation_sweep(&generator, &dataset, &counts, &oracle)?;
    for (n, acc) in &curve {
        println!("{n:>5} synthetic per class: held-out accuracy {acc:.4}");
    }
    let report = EvalReport { augmentation_curve: curve, ..Default::default() };
    report.write(&run.join("report"))?;
    println!("report in {}", run.join("report").display());
    Ok(())
}
