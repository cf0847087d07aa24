//! Critic and generator objectives of freshly initialized toy networks on
//! one batch of toy faces, term by term.
//!
//! ```text
//! cargo run --release --example loss_breakdown
//! ```

use attrgan::data::toy::generate_toy_dataset;
use attrgan::data::{sample_target_attributes, Dataset};
use attrgan::losses::{total_losses, LossParts};
use attrgan::model::{Discriminator, Generator};
use attrgan::training::{batch_rng, discriminator_loss, generator_loss, TrainConfig};
use tch::Kind;

fn main() -> attrgan::Result<()> {
    let dir = std::env::temp_dir().join("attrgan_loss_breakdown");
    let manifest = generate_toy_dataset(&dir, 16, 4, 32, 1)?;
    let dataset = Dataset::load(manifest, 32)?;
    let cfg = TrainConfig::toy(4);
    let g = Generator::new(cfg.generator.clone(), Kind::Float, cfg.seed)?;
    let d = Discriminator::new(cfg.discriminator.clone(), Kind::Float, cfg.seed)?;

    let mut rng = batch_rng(cfg.seed, 0);
    let batch = dataset.load_batch(&(0..cfg.batch_size).collect::<Vec<_>>(), Some(&mut rng))?;
    let target = sample_target_attributes(&batch.y, &mut rng);
    let (_, d_parts) = discriminator_loss(&g, &d, &batch, &target, &cfg.weights, false, &mut rng)?;
    let (_, g_parts) = generator_loss(&g, &d, &batch, &target, &cfg.weights, false)?;
    let parts = LossParts { adv_d: d_parts.adv_d, gp: d_parts.gp, cls_real: d_parts.cls_real, ..g_parts };
    let report = total_losses(&parts, &cfg.weights)?;
    println!("critic:    adv {:+.4} (gp {:.4})  cls_real {:.4}  -> total {:+.4}", report.adv_d, report.gp, report.cls_real, report.total_d);
    println!(
        "generator: adv {:+.4}  cls_fake {:.4}  identity {:.4}  bidirectional {:.4}  -> total {:+.4}",
        report.adv_g, report.cls_fake, report.identity, report.bidirectional, report.total_g
    );
    println!("classification terms at zero logits: {:.4}", 4.0 * std::f64::consts::LN_2);
    Ok(())
}
