//! Checks shared by the integration tests and the acceptance runner.

#![allow(dead_code)]

use attrgan::losses::LossWeights;
use attrgan::model::{named_parameters, Discriminator, DiscriminatorConfig, Generator, GeneratorConfig, LayerRecord};
use attrgan::training::generator_loss;
use attrgan::data::Batch;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tch::{Device, Kind, Tensor};

/// One expected row: part, layer, input (C, H), output (C, H), filter,
/// stride, padding. Spatial sizes are square.
type Row = (&'static str, &'static str, (i64, i64), (i64, i64), Option<(i64, i64, i64)>);

fn generator_table(h: i64, ny: i64) -> Vec<Row> {
    let mut rows: Vec<Row> = vec![
        ("encoder", "Conv+IN+ReLU", (6, h), (64, h), Some((7, 1, 3))),
        ("encoder", "Conv+IN+ReLU", (64, h), (128, h / 2), Some((4, 2, 1))),
        ("encoder", "Conv+IN+ReLU", (128, h / 2), (256, h / 4), Some((4, 2, 1))),
        ("encoder", "Conv+IN+ReLU", (256, h / 4), (512, h / 8), Some((4, 2, 1))),
        ("encoder", "Conv+IN+ReLU", (512, h / 8), (1024, h / 16), Some((4, 2, 1))),
    ];
    for _ in 0..6 {
        rows.push(("bottleneck", "RB:Conv+IN+ReLU", (1024, h / 16), (1024, h / 16), Some((3, 1, 1))));
    }
    rows.extend([
        ("decoder", "Sub-Pixel Conv+IN+ReLU", (1024 + ny, h / 16), (512, h / 8), Some((3, 2, 1))),
        ("decoder", "Sub-Pixel Conv+IN+ReLU", (512, h / 8), (256, h / 4), Some((3, 2, 1))),
        ("decoder", "Sub-Pixel Conv+IN+ReLU", (256, h / 4), (128, h / 2), Some((3, 2, 1))),
        ("decoder", "Sub-Pixel Conv+IN+ReLU", (128, h / 2), (64, h), Some((3, 2, 1))),
        ("image_output", "Conv+Tanh", (64, h), (3, h), Some((7, 1, 3))),
        ("side_output", "Conv+Tanh", (64, h), (3, h), Some((7, 1, 3))),
    ]);
    rows
}

fn discriminator_table(h: i64) -> Vec<Row> {
    let mut rows: Vec<Row> = Vec::new();
    let (mut c, mut size) = (6, h);
    for i in 0..6 {
        let out = 64 << i;
        rows.push(("hidden", "Conv+Leaky ReLU", (c, size), (out, size / 2), Some((4, 2, 1))));
        c = out;
        size /= 2;
    }
    rows.push(("output", "Conv", (2048, h / 64), (1, h / 64), Some((3, 1, 1))));
    rows
}

fn compare(name: &str, got: &[LayerRecord], want: &[Row], errors: &mut Vec<String>) {
    if got.len() != want.len() {
        errors.push(format!("{name}: {} layers traced, table has {}", got.len(), want.len()));
    }
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        let (part, layer, (ci, hi), (co, ho), geometry) = *w;
        let actual = (g.part, g.layer, g.input.clone(), g.output.clone(), g.kernel.zip(g.stride).zip(g.padding).map(|((k, s), p)| (k, s, p)));
        let expected = (part, layer, vec![1, ci, hi, hi], vec![1, co, ho, ho], geometry);
        if actual != expected {
            errors.push(format!("{name} row {i}: got {actual:?}, table says {expected:?}"));
        }
    }
}

/// Traces both networks at the reference configuration with batch 1 and
/// returns every disagreement with the published layer tables.
pub fn architecture_mismatches() -> Vec<String> {
    let mut errors = Vec::new();
    let gcfg = GeneratorConfig::default();
    let (h, ny) = (gcfg.image_size, gcfg.num_attributes);
    let g = Generator::new(gcfg, Kind::Float, 0).expect("default generator");
    let x = Tensor::zeros([1, 3, h, h], (Kind::Float, Device::Cpu));
    let y = Tensor::zeros([1, ny], (Kind::Float, Device::Cpu));
    let trace = tch::no_grad(|| g.trace(&x, &x, &y)).expect("generator trace");
    compare("generator", &trace, &generator_table(h, ny), &mut errors);

    let dcfg = DiscriminatorConfig::default();
    let m = dcfg.num_attributes;
    let d = Discriminator::new(dcfg, Kind::Float, 0).expect("default critic");
    let xs = Tensor::zeros([1, 6, h, h], (Kind::Float, Device::Cpu));
    let trace = tch::no_grad(|| d.trace(&xs)).expect("critic trace");
    let (convs, fc) = trace.split_at(trace.len().saturating_sub(1));
    compare("discriminator", convs, &discriminator_table(h), &mut errors);
    match fc {
        [r] if r.part == "output" && r.layer == "FC" && r.input == vec![1, 2048, h / 64, h / 64] && r.output == vec![1, m] => {}
        other => errors.push(format!("discriminator FC head: got {other:?}")),
    }
    errors
}

/// Outcome of comparing analytic and central-difference gradients.
#[derive(Debug)]
pub struct GradCheck {
    pub sampled: usize,
    pub passing: usize,
    pub worst: f64,
}

/// Gradient of the generator objective against central differences on
/// `samples` randomly chosen generator parameters, in double precision.
/// Two encoder stages keep a 2×2 latent at 8×8.
pub fn gradient_check(image_size: i64, base: i64, samples: usize, seed: u64) -> GradCheck {
    let m = 3;
    let gcfg = GeneratorConfig { image_size, base_channels: base, num_downsamples: 2, latent_channels: base * 4, num_residual_blocks: 6, num_attributes: m };
    let dcfg = DiscriminatorConfig { image_size, base_channels: base, num_layers: 3, num_attributes: m, ..Default::default() };
    let g = Generator::new(gcfg, Kind::Double, seed).unwrap();
    let d = Discriminator::new(dcfg, Kind::Double, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = |shape: &[i64]| {
        let n: i64 = shape.iter().product();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::from_slice(&v).view(shape)
    };
    let b = 2;
    let batch = Batch {
        x: uniform(&[b, 3, image_size, image_size]),
        s: uniform(&[b, 3, image_size, image_size]),
        y: Tensor::from_slice(&[1.0f64, 0.0, 0.0, 0.0, 0.0, 1.0]).view([b, m]),
    };
    let target = Tensor::from_slice(&[0.0f64, 1.0, 0.0, 1.0, 0.0, 0.0]).view([b, m]);
    let w = LossWeights::default();
    let objective = || generator_loss(&g, &d, &batch, &target, &w, false).unwrap().0;

    let params = named_parameters(g.var_store());
    let tensors: Vec<Tensor> = params.iter().map(|(_, t)| t.shallow_clone()).collect();
    let analytic = Tensor::run_backward(&[objective()], &tensors, false, false);

    let mut pick = ChaCha8Rng::seed_from_u64(seed + 1);
    let eps = 1e-6;
    let (mut passing, mut worst) = (0, 0.0f64);
    for _ in 0..samples {
        let k = pick.random_range(0..tensors.len());
        let flat = tensors[k].view([-1]);
        let i = pick.random_range(0..flat.numel() as i64);
        let original = flat.double_value(&[i]);
        let set = |v: f64| tch::no_grad(|| drop(flat.get(i).fill_(v)));
        let eval_at = |v: f64| {
            set(v);
            tch::no_grad(|| objective().double_value(&[]))
        };
        let numeric = (eval_at(original + eps) - eval_at(original - eps)) / (2.0 * eps);
        set(original);
        let a = if analytic[k].defined() { analytic[k].view([-1]).double_value(&[i]) } else { 0.0 };
        let scale = a.abs().max(numeric.abs());
        let rel = if scale < 1e-8 { 0.0 } else { (a - numeric).abs() / scale };
        if rel < 1e-3 {
            passing += 1;
        }
        worst = worst.max(rel);
    }
    GradCheck { sampled: samples, passing, worst }
}
