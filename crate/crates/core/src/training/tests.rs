use super::*;
use crate::data::toy::generate_toy_dataset;
use crate::data::DatasetManifest;
use crate::model::{clone_parameters, parameter_distance, DiscriminatorConfig, GeneratorConfig};

fn tiny_config() -> TrainConfig {
    TrainConfig {
        image_size: 16,
        batch_size: 4,
        total_epochs: 2,
        decay_start_epoch: 1,
        generator: GeneratorConfig::tiny(3),
        discriminator: DiscriminatorConfig { image_size: 16, base_channels: 4, num_layers: 3, num_attributes: 3, ..Default::default() },
        seed: 11,
        ..Default::default()
    }
}

fn tiny_dataset(dir: &Path, n: usize) -> Dataset {
    let m = generate_toy_dataset(dir, n, 3, 16, 1).unwrap();
    Dataset::load(DatasetManifest::load(&m.root).unwrap(), 16).unwrap()
}

fn tiny_trainer(dir: &Path) -> (Trainer, Dataset) {
    let ds = tiny_dataset(dir, 20);
    (Trainer::new(tiny_config(), ds.vocabulary().clone()).unwrap(), ds)
}

fn flat_grad(loss: &Tensor, vars: &[(String, Tensor)]) -> Tensor {
    let params: Vec<Tensor> = vars.iter().map(|(_, t)| t.shallow_clone()).collect();
    Tensor::cat(&gradients(loss, &params).iter().map(|g| g.flatten(0, -1)).collect::<Vec<_>>(), 0)
}

#[test]
fn critic_step_leaves_generator_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let (mut t, ds) = tiny_trainer(dir.path());
    let batch = ds.load_batch(&[0, 1, 2, 3], None).unwrap();
    let g0 = clone_parameters(&t.g_vars);
    let d0 = clone_parameters(&t.d_vars);
    t.train_step_d(&batch, 1e-4, &mut batch_rng(0, 0)).unwrap();
    assert_eq!(parameter_distance(&g0, &t.g_vars), 0.0);
    assert!(parameter_distance(&d0, &t.d_vars) > 0.0);
    assert_eq!(t.d_steps(), 1);
    assert_eq!(t.g_steps(), 0);
}

#[test]
fn generator_step_leaves_critic_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let (mut t, ds) = tiny_trainer(dir.path());
    let batch = ds.load_batch(&[0, 1, 2, 3], None).unwrap();
    let g0 = clone_parameters(&t.g_vars);
    let d0 = clone_parameters(&t.d_vars);
    let report = t.train_step_g(&batch, 1e-4, &mut batch_rng(0, 0)).unwrap();
    assert_eq!(parameter_distance(&d0, &t.d_vars), 0.0);
    assert!(parameter_distance(&g0, &t.g_vars) > 0.0);
    let w = LossWeights::default();
    let recombined = report.adv_g + w.lambda_bi * report.bidirectional + w.lambda_cls * report.cls_fake + w.lambda_id * report.identity;
    assert!((report.total_g - recombined).abs() < 1e-6);
}

#[test]
fn zero_weights_give_adversarial_direction() {
    let dir = tempfile::tempdir().unwrap();
    let (t, ds) = tiny_trainer(dir.path());
    let batch = ds.load_batch(&[0, 1, 2, 3], None).unwrap();
    let target = sample_target_attributes(&batch.y, &mut batch_rng(0, 3));
    let (total, _) = generator_loss(&t.generator, &t.discriminator, &batch, &target, &LossWeights::zero(), false).unwrap();
    let full = flat_grad(&total, &t.g_vars);
    let fake = t.generator.generate(&batch.x, &batch.s, &target).unwrap();
    let adv = adv_loss_g(&t.discriminator.discriminate(&fake.image, &fake.side).unwrap().src);
    let only_adv = flat_grad(&adv, &t.g_vars);
    let cos = full.dot(&only_adv).double_value(&[]) / (full.norm().double_value(&[]) * only_adv.norm().double_value(&[]));
    // f32 accumulation differs between the two graphs.
    assert!((cos - 1.0).abs() < 1e-5, "cos = {cos}");
}

#[test]
fn penalty_weight_does_not_reach_generator() {
    let dir = tempfile::tempdir().unwrap();
    let (t, ds) = tiny_trainer(dir.path());
    let batch = ds.load_batch(&[4, 5, 6, 7], None).unwrap();
    let target = sample_target_attributes(&batch.y, &mut batch_rng(0, 4));
    let w = LossWeights::default();
    let no_gp = LossWeights { lambda_gp: 0.0, ..w };
    let (a, _) = generator_loss(&t.generator, &t.discriminator, &batch, &target, &w, false).unwrap();
    let (b, _) = generator_loss(&t.generator, &t.discriminator, &batch, &target, &no_gp, false).unwrap();
    assert!(flat_grad(&a, &t.g_vars).equal(&flat_grad(&b, &t.g_vars)));
}

#[test]
fn mirrored_critic_inputs_leave_only_the_penalty() {
    let dir = tempfile::tempdir().unwrap();
    let (t, ds) = tiny_trainer(dir.path());
    let batch = ds.load_batch(&[0, 1, 2, 3], None).unwrap();
    let pair = Tensor::cat(&[&batch.x, &batch.s], 1);
    let d = &t.discriminator;
    let out = d.forward(&pair).unwrap();
    let gp = gradient_penalty(|x| Ok(d.forward(x)?.src), &pair, &pair, &mut batch_rng(0, 5)).unwrap();
    let w = LossWeights { lambda_cls: 0.0, ..Default::default() };
    let adv = adv_loss_d(&out.src, &out.src, &gp, &w);
    assert!((to_f64(&adv) - 10.0 * to_f64(&gp)).abs() < 1e-6);
}

#[test]
fn epoch_audit_and_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let (mut t, ds) = tiny_trainer(dir.path());
    let metrics = dir.path().join("metrics.jsonl");
    let summary = t.fit(&ds, &FitOptions { metrics_path: Some(metrics.clone()), ..Default::default() }).unwrap();
    // 20 samples / batch 4 = 5 batches per epoch, 2 epochs.
    assert_eq!(summary.d_steps, 10);
    assert_eq!(summary.g_steps, 2);
    let records = read_metrics(&metrics).unwrap();
    assert_eq!(records.iter().filter(|r| r.phase == "d").count(), 10);
    assert_eq!(records.iter().filter(|r| r.phase == "g").count(), 2);
    for r in &records {
        assert_eq!(r.lr, lr_schedule(r.epoch, t.config()).unwrap());
        assert_eq!(r.epoch, r.step / 5);
    }
    assert_eq!(records[0].lr, 1e-4);
}

#[test]
fn rejects_side_source_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let ds = tiny_dataset(dir.path(), 8);
    let cfg = TrainConfig { refinement: true, ..tiny_config() };
    let mut t = Trainer::new(cfg, ds.vocabulary().clone()).unwrap();
    assert!(matches!(t.fit(&ds, &FitOptions::default()), Err(Error::Config(_))));
}

#[test]
fn resume_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let ds = tiny_dataset(&dir.path().join("data"), 20);
    let ckpt = dir.path().join("ckpt");

    let full_metrics = dir.path().join("full.jsonl");
    let mut full = Trainer::new(tiny_config(), ds.vocabulary().clone()).unwrap();
    full.fit(&ds, &FitOptions { metrics_path: Some(full_metrics.clone()), ..Default::default() }).unwrap();

    let part_metrics = dir.path().join("part.jsonl");
    let mut first = Trainer::new(tiny_config(), ds.vocabulary().clone()).unwrap();
    let opts = FitOptions { metrics_path: Some(part_metrics.clone()), checkpoint_dir: Some(ckpt.clone()), max_d_steps: Some(7) };
    first.fit(&ds, &opts).unwrap();
    drop(first);
    let mut resumed = Trainer::load(&ckpt.join("latest.safetensors")).unwrap();
    assert_eq!(resumed.d_steps(), 7);
    assert_eq!(resumed.g_steps(), 1);
    resumed.fit(&ds, &FitOptions { metrics_path: Some(part_metrics.clone()), ..Default::default() }).unwrap();

    let a = std::fs::read_to_string(&full_metrics).unwrap();
    let b = std::fs::read_to_string(&part_metrics).unwrap();
    assert_eq!(a, b);
    assert_eq!(parameter_distance(&full.g_vars, &resumed.g_vars), 0.0);
}

#[test]
fn load_rejects_corrupt_archive() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.safetensors");
    std::fs::write(&p, b"not an archive").unwrap();
    assert!(matches!(Trainer::load(&p), Err(Error::Checkpoint(_))));
}
