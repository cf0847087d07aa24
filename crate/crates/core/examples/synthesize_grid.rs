//! Attribute-transfer grids from a trained toy checkpoint: one row per input
//! face, the input first, then one column per attribute.
//!
//! ```text
//! cargo run --release --example train_toy -- toy_run
//! cargo run --release --example synthesize_grid -- toy_run [rows]
//! ```

use std::path::PathBuf;

use attrgan::data::DatasetManifest;
use attrgan::synthesis::{synthesize_grid, SynthesisRequest, TargetAttributes};

fn main() -> attrgan::Result<()> {
    let mut args = std::env::args().skip(1);
    let run = PathBuf::from(args.next().unwrap_or_else(|| "toy_run".into()));
    let rows: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(4);
    let manifest = DatasetManifest::load(run.join("data"))?;
    let out = run.join("grids");
    std::fs::create_dir_all(&out)?;
    for entry in manifest.entries.iter().take(rows) {
        let req = SynthesisRequest {
            checkpoint_path: run.join("checkpoints/latest.safetensors"),
            input_image_path: entry.image_path.clone(),
            landmark_path: entry.landmark_path.clone(),
            target_attributes: TargetAttributes::All,
            output_path: out.join(format!("{}.png", entry.name)),
        };
        let columns = synthesize_grid(&req)?;
        let diffs: Vec<String> = columns.iter().map(|c| format!("{} {:.3}", c.attribute, c.mean_abs_diff)).collect();
        println!("{} ({}): {}", entry.name, entry.labels.join(","), diffs.join(", "));
    }
    println!("grids in {}", out.display());
    Ok(())
}
