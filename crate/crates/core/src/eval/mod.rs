//! Quantitative evaluation: an independently trained attribute classifier
//! (the oracle), attribute accuracy of generated images, reconstruction
//! metrics and the synthetic-augmentation sweep.

mod oracle;
mod plot;

pub use oracle::{split_indices, train_oracle_classifier, train_oracle_on, Oracle, OracleConfig};
pub use plot::render_curve;

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use tch::{Kind, Tensor};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::layers::init_rng;
use crate::model::Generator;

const SWEEP_STREAM: u64 = 1 << 43;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub real_test_accuracy: f64,
    pub fake_attribute_accuracy: f64,
    /// `(synthetic images per class, held-out accuracy)`.
    pub augmentation_curve: Vec<(usize, f64)>,
    /// `[target][predicted]` counts over generated images.
    pub per_class_confusion: Vec<Vec<u64>>,
}

impl EvalReport {
    /// Writes `report.json` and, if there is a curve, `augmentation.png`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)?)?;
        if !self.augmentation_curve.is_empty() {
            render_curve(&self.augmentation_curve).save(dir.join("augmentation.png"))?;
        }
        Ok(())
    }
}

/// Single class index of every sample; errors on multi-label samples.
pub(crate) fn single_labels(dataset: &Dataset) -> Result<Vec<i64>> {
    dataset
        .class_indices()
        .into_iter()
        .enumerate()
        .map(|(i, c)| c.map(|c| c as i64).ok_or_else(|| Error::validation(format!("sample {i} does not have exactly one label"))))
        .collect()
}

pub(crate) fn one_hot(classes: &[i64], m: i64) -> Tensor {
    Tensor::from_slice(classes).one_hot(m).to_kind(Kind::Float)
}

/// Images `x`, sides `s` of `indices` as float tensors.
fn stack(dataset: &Dataset, indices: &[usize]) -> Result<(Tensor, Tensor)> {
    let b = dataset.load_batch(indices, None)?;
    Ok((b.x, b.s))
}

fn check_vocabulary(generator: &Generator, dataset: &Dataset) -> Result<i64> {
    let m = dataset.vocabulary().len() as i64;
    if generator.config().num_attributes != m {
        return Err(Error::config(format!(
            "generator has {} attributes, dataset vocabulary has {m}",
            generator.config().num_attributes
        )));
    }
    if generator.config().image_size != dataset.image_size() as i64 {
        return Err(Error::config("generator and dataset image sizes differ"));
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FakeAccuracy {
    pub accuracy: f64,
    pub scored: u64,
    /// `[target][predicted]`.
    pub confusion: Vec<Vec<u64>>,
}

/// Translates every sample to every attribute and scores whether the oracle
/// recognizes the target.
pub fn fake_attribute_accuracy(generator: &Generator, oracle: &Oracle, dataset: &Dataset, batch_size: usize) -> Result<FakeAccuracy> {
    let m = check_vocabulary(generator, dataset)?;
    if oracle.num_classes() != m {
        return Err(Error::config("oracle and generator disagree on the attribute count"));
    }
    let mut confusion = vec![vec![0u64; m as usize]; m as usize];
    let indices: Vec<usize> = (0..dataset.len()).collect();
    for chunk in indices.chunks(batch_size.max(1)) {
        let (x, s) = stack(dataset, chunk)?;
        for k in 0..m {
            let y = one_hot(&vec![k; chunk.len()], m);
            let fake = tch::no_grad(|| generator.generate(&x, &s, &y))?;
            for p in oracle.predict(&fake.image)? {
                confusion[k as usize][p as usize] += 1;
            }
        }
    }
    let scored: u64 = confusion.iter().flatten().sum();
    let correct: u64 = (0..m as usize).map(|k| confusion[k][k]).sum();
    Ok(FakeAccuracy { accuracy: correct as f64 / scored.max(1) as f64, scored, confusion })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionMetrics {
    /// Mean `|x − x̂|` where `x̂` translates `x` to each other attribute and
    /// back to its own.
    pub cycle_l1: f64,
    /// Mean `|x − G(x, s, y')|` under the sample's own attributes.
    pub identity_l1: f64,
    /// Mean `|G(x, s, y_a) − G(x, s, y_b)|` over attribute pairs `a < b`.
    pub diversity: f64,
}

pub fn reconstruction_metrics(generator: &Generator, dataset: &Dataset, batch_size: usize) -> Result<ReconstructionMetrics> {
    let m = check_vocabulary(generator, dataset)?;
    if m < 2 {
        return Err(Error::validation("reconstruction metrics need at least two attributes"));
    }
    let labels = single_labels(dataset)?;
    let indices: Vec<usize> = (0..dataset.len()).collect();
    let (mut cycle, mut n_cycle) = (0.0, 0usize);
    let (mut identity, mut n_identity) = (0.0, 0usize);
    let (mut diversity, mut n_div) = (0.0, 0usize);
    let mean_abs = |a: &Tensor, b: &Tensor| (a - b).abs().mean_dim(&[1i64, 2, 3][..], false, Kind::Double);
    tch::no_grad(|| -> Result<()> {
        for chunk in indices.chunks(batch_size.max(1)) {
            let (x, s) = stack(dataset, chunk)?;
            let own: Vec<i64> = chunk.iter().map(|&i| labels[i]).collect();
            let y_own = one_hot(&own, m);
            let b = chunk.len();
            identity += mean_abs(&x, &generator.generate(&x, &s, &y_own)?.image).sum(Kind::Double).double_value(&[]);
            n_identity += b;
            let outputs: Vec<_> = (0..m)
                .map(|k| generator.generate(&x, &s, &one_hot(&vec![k; b], m)))
                .collect::<Result<_>>()?;
            for k in 0..m as usize {
                let back = generator.generate(&outputs[k].image, &outputs[k].side, &y_own)?.image;
                let per = mean_abs(&x, &back);
                let other = Tensor::from_slice(&own.iter().map(|&c| c != k as i64).collect::<Vec<_>>());
                cycle += per.masked_select(&other).sum(Kind::Double).double_value(&[]);
                n_cycle += own.iter().filter(|&&c| c != k as i64).count();
                for l in k + 1..m as usize {
                    diversity += mean_abs(&outputs[k].image, &outputs[l].image).sum(Kind::Double).double_value(&[]);
                    n_div += b;
                }
            }
        }
        Ok(())
    })?;
    Ok(ReconstructionMetrics {
        cycle_l1: cycle / n_cycle.max(1) as f64,
        identity_l1: identity / n_identity.max(1) as f64,
        diversity: diversity / n_div.max(1) as f64,
    })
}

/// Generates `count` images per class from random training sources. Returns
/// images and class labels.
pub fn synthesize_per_class(
    generator: &Generator,
    dataset: &Dataset,
    sources: &[usize],
    count: usize,
    rng: &mut impl Rng,
    batch_size: usize,
) -> Result<(Tensor, Vec<i64>)> {
    let m = check_vocabulary(generator, dataset)?;
    if sources.is_empty() {
        return Err(Error::validation("no source images to synthesize from"));
    }
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for k in 0..m {
        let picks: Vec<usize> = (0..count).map(|_| sources[rng.random_range(0..sources.len())]).collect();
        for chunk in picks.chunks(batch_size.max(1)) {
            let (x, s) = stack(dataset, chunk)?;
            let y = one_hot(&vec![k; chunk.len()], m);
            images.push(tch::no_grad(|| generator.generate(&x, &s, &y))?.image);
            labels.extend(std::iter::repeat_n(k, chunk.len()));
        }
    }
    let size = dataset.image_size() as i64;
    let images = if images.is_empty() { Tensor::zeros([0, 3, size, size], (Kind::Float, tch::Device::Cpu)) } else { Tensor::cat(&images, 0) };
    Ok((images, labels))
}

/// For each count, trains a fresh oracle on the real training split plus
/// `count` synthetic images per class and records its accuracy on the real
/// held-out split. Count 0 reproduces [`train_oracle_classifier`].
pub fn augmentation_sweep(generator: &Generator, dataset: &Dataset, counts: &[usize], cfg: &OracleConfig) -> Result<Vec<(usize, f64)>> {
    if counts.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::validation("sweep counts must be ascending"));
    }
    let labels = single_labels(dataset)?;
    let (train, test) = split_indices(dataset, cfg.seed, cfg.test_fraction)?;
    let (real_x, _) = stack(dataset, &train)?;
    let real_y: Vec<i64> = train.iter().map(|&i| labels[i]).collect();
    let (test_x, _) = stack(dataset, &test)?;
    let test_y: Vec<i64> = test.iter().map(|&i| labels[i]).collect();
    let m = dataset.vocabulary().len() as i64;
    let mut curve = Vec::with_capacity(counts.len());
    for &count in counts {
        let (x, y) = if count == 0 {
            (real_x.shallow_clone(), real_y.clone())
        } else {
            let mut rng = init_rng(cfg.seed, SWEEP_STREAM + count as u64);
            let (sx, sy) = synthesize_per_class(generator, dataset, &train, count, &mut rng, 64)?;
            (Tensor::cat(&[&real_x, &sx], 0), real_y.iter().chain(&sy).copied().collect())
        };
        let oracle = train_oracle_on(&x, &y, m, cfg)?;
        let acc = oracle.accuracy(&test_x, &test_y)?;
        log::info!("sweep: {count} synthetic per class -> accuracy {acc:.4}");
        curve.push((count, acc));
    }
    Ok(curve)
}

/// Full protocol: oracle on the real training split, attribute accuracy
/// of translations of the held-out split and, for nonempty `sweep_counts`,
/// the augmentation curve.
pub fn evaluate(generator: &Generator, dataset: &Dataset, cfg: &OracleConfig, sweep_counts: &[usize]) -> Result<EvalReport> {
    check_vocabulary(generator, dataset)?;
    let (oracle, real_test_accuracy) = train_oracle_classifier(dataset, cfg)?;
    log::info!("oracle accuracy on real held-out images: {real_test_accuracy:.4}");
    let (_, test) = split_indices(dataset, cfg.seed, cfg.test_fraction)?;
    let fake = fake_attribute_accuracy(generator, &oracle, &dataset.subset(&test), 64)?;
    log::info!("attribute accuracy of translations: {:.4} over {} images", fake.accuracy, fake.scored);
    let augmentation_curve = if sweep_counts.is_empty() { Vec::new() } else { augmentation_sweep(generator, dataset, sweep_counts, cfg)? };
    Ok(EvalReport {
        real_test_accuracy,
        fake_attribute_accuracy: fake.accuracy,
        augmentation_curve,
        per_class_confusion: fake.confusion,
    })
}
