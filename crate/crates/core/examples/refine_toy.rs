//! Realism refinement on toy faces: trains on gray frontal faces paired with
//! their coloured originals in the side slot, then refines held-out gray
//! faces and reports which palette the output is closer to.
//!
//! ```text
//! cargo run --release --example refine_toy -- [out_dir] [max_critic_steps]
//! ```

use std::path::PathBuf;

use attrgan::data::toy::generate_refinement_dataset;
use attrgan::data::{Dataset, DatasetManifest};
use attrgan::eval::split_indices;
use attrgan::synthesis::{palette_distance, refine, Model, RefinementRequest};
use attrgan::training::{FitOptions, TrainConfig, Trainer};

fn main() -> attrgan::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "refine_run".into()));
    let max_steps = args.next().and_then(|s| s.parse().ok()).filter(|&n: &u64| n > 0);

    let data = out.join("data");
    if !data.join("labels.tsv").exists() {
        generate_refinement_dataset(&data, 1000, 4, 32, 10)?;
    }
    let manifest = DatasetManifest::load(&data)?;
    let dataset = Dataset::load(manifest.clone(), 32)?;
    let (train, test) = split_indices(&dataset, 0, 0.1)?;
    let ckpt = out.join("checkpoints/latest.safetensors");
    if !ckpt.exists() {
        let mut trainer = Trainer::new(TrainConfig::toy_refinement(4), dataset.vocabulary().clone())?;
        let opts = FitOptions { checkpoint_dir: Some(out.join("checkpoints")), max_d_steps: max_steps, ..Default::default() };
        trainer.fit(&dataset.subset(&train), &opts)?;
    }
    let _ = Model::load(&ckpt)?;

    let refined = out.join("refined");
    std::fs::create_dir_all(&refined)?;
    for &i in test.iter().take(8) {
        let entry = &manifest.entries[i];
        let side = entry.side_path.clone().expect("refinement entries carry a side image");
        let req = RefinementRequest {
            checkpoint_path: ckpt.clone(),
            synthetic_frontal_path: entry.image_path.clone(),
            real_side_image_path: side.clone(),
            target_attribute: entry.labels.first().cloned(),
            output_path: refined.join(format!("{}.png", entry.name)),
        };
        refine(&req)?;
        let output = image::open(&req.output_path)?.to_rgb8();
        let to_side = palette_distance(&output, &image::open(&side)?.to_rgb8());
        let to_gray = palette_distance(&output, &image::open(&entry.image_path)?.to_rgb8());
        println!("{}: palette distance to colour side {to_side:.1}, to gray input {to_gray:.1}", entry.name);
    }
    println!("refined images and metadata in {}", refined.display());
    Ok(())
}
