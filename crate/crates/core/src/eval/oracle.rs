use tch::{nn, nn::Module, Device, Kind, Tensor};

use super::single_labels;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::layers::{init_parameters, init_rng};
use crate::model::{named_parameters, DiscriminatorConfig, HiddenStack};
use crate::training::Adam;

const SPLIT_STREAM: u64 = 1 << 42;
const ORDER_STREAM: u64 = (1 << 42) + (1 << 32);

/// Attribute classifier: the critic's hidden stack on 3-channel images,
/// global average pooling and an `m`-way softmax head.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    pub network: DiscriminatorConfig,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Fraction of samples held out for testing.
    pub test_fraction: f64,
}

impl OracleConfig {
    /// Oracle on the hidden stack of `critic` with 3 input channels.
    pub fn new(critic: &DiscriminatorConfig, seed: u64) -> Self {
        OracleConfig {
            network: DiscriminatorConfig { input_channels: 3, ..critic.clone() },
            epochs: 20,
            lr: 1e-4,
            batch_size: 8,
            seed,
            test_fraction: 0.1,
        }
    }

    pub fn toy(num_classes: usize, seed: u64) -> Self {
        Self::new(&DiscriminatorConfig::toy(num_classes as i64), seed)
    }
}

#[derive(Debug)]
pub struct Oracle {
    vs: nn::VarStore,
    hidden: HiddenStack,
    head: nn::Linear,
    image_size: i64,
    classes: i64,
}

impl Oracle {
    pub fn new(cfg: &DiscriminatorConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if cfg.input_channels != 3 {
            return Err(Error::config("the oracle classifies 3-channel images"));
        }
        let vs = nn::VarStore::new(Device::Cpu);
        let root = vs.root();
        let hidden = HiddenStack::new(&root, cfg);
        let head = nn::linear(&root / "head", cfg.top_channels(), cfg.num_attributes, Default::default());
        init_parameters(&vs, &mut init_rng(seed, 2));
        Ok(Oracle { vs, hidden, head, image_size: cfg.image_size, classes: cfg.num_attributes })
    }

    pub fn num_classes(&self) -> i64 {
        self.classes
    }

    pub fn logits(&self, images: &Tensor) -> Result<Tensor> {
        crate::model::check_image_batch(images, "oracle input", 3, self.image_size)?;
        let h = self.hidden.forward_traced(&images.to_kind(Kind::Float), &mut None);
        Ok(self.head.forward(&h.mean_dim(&[2i64, 3][..], false, Kind::Float)))
    }

    /// Predicted class per image, evaluated in chunks of 256.
    pub fn predict(&self, images: &Tensor) -> Result<Vec<i64>> {
        let n = images.size()[0];
        let mut out = Vec::with_capacity(n as usize);
        tch::no_grad(|| -> Result<()> {
            let mut start = 0;
            while start < n {
                let len = (n - start).min(256);
                let pred: Vec<i64> = self.logits(&images.narrow(0, start, len))?.argmax(1, false).try_into()?;
                out.extend(pred);
                start += len;
            }
            Ok(())
        })?;
        Ok(out)
    }

    pub fn accuracy(&self, images: &Tensor, labels: &[i64]) -> Result<f64> {
        let pred = self.predict(images)?;
        if pred.len() != labels.len() {
            return Err(Error::validation("image and label counts differ"));
        }
        let correct = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
        Ok(correct as f64 / labels.len().max(1) as f64)
    }
}

/// Deterministic train / test split keyed by sample names, so the split does
/// not depend on manifest order. Every class must appear in training.
pub fn split_indices(dataset: &Dataset, seed: u64, test_fraction: f64) -> Result<(Vec<usize>, Vec<usize>)> {
    use rand::seq::SliceRandom;
    let labels = single_labels(dataset)?;
    let entries = &dataset.manifest().entries;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.sort_by(|&a, &b| entries[a].name.cmp(&entries[b].name));
    order.shuffle(&mut init_rng(seed, SPLIT_STREAM));
    let n_test = ((dataset.len() as f64) * test_fraction).round() as usize;
    let (test, train) = order.split_at(n_test.min(order.len()));
    let m = dataset.vocabulary().len() as i64;
    let mut present = vec![false; m as usize];
    for &i in train {
        present[labels[i] as usize] = true;
    }
    if m < 2 || present.iter().any(|p| !p) {
        return Err(Error::validation("every one of at least two classes must appear in the training split"));
    }
    Ok((train.to_vec(), test.to_vec()))
}

/// Trains a fresh oracle with cross-entropy and Adam on `images` (N, 3, H,
/// W) with class `labels`.
pub fn train_oracle_on(images: &Tensor, labels: &[i64], num_classes: i64, cfg: &OracleConfig) -> Result<Oracle> {
    use rand::seq::SliceRandom;
    let n = labels.len();
    if images.size()[0] as usize != n || n == 0 {
        return Err(Error::validation("need a nonempty, equal number of images and labels"));
    }
    let network = DiscriminatorConfig { num_attributes: num_classes, ..cfg.network.clone() };
    let oracle = Oracle::new(&network, cfg.seed)?;
    let params: Vec<Tensor> = named_parameters(&oracle.vs).into_iter().map(|(_, t)| t).collect();
    let mut adam = Adam::new(&params, 0.9, 0.999, 1e-8);
    let targets = Tensor::from_slice(labels);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<i64> = (0..n as i64).collect();
        order.shuffle(&mut init_rng(cfg.seed, ORDER_STREAM + epoch as u64));
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let idx = Tensor::from_slice(chunk);
            let loss = oracle.logits(&images.index_select(0, &idx))?.cross_entropy_for_logits(&targets.index_select(0, &idx));
            let grads = Tensor::run_backward(&[&loss], &params, false, false);
            adam.step(&params, &grads, cfg.lr);
        }
    }
    Ok(oracle)
}

/// Splits `dataset`, trains an oracle on the training part and returns it
/// with its held-out accuracy.
pub fn train_oracle_classifier(dataset: &Dataset, cfg: &OracleConfig) -> Result<(Oracle, f64)> {
    let labels = single_labels(dataset)?;
    let (train, test) = split_indices(dataset, cfg.seed, cfg.test_fraction)?;
    let (x, _) = super::stack(dataset, &train)?;
    let y: Vec<i64> = train.iter().map(|&i| labels[i]).collect();
    let oracle = train_oracle_on(&x, &y, dataset.vocabulary().len() as i64, cfg)?;
    let (tx, _) = super::stack(dataset, &test)?;
    let ty: Vec<i64> = test.iter().map(|&i| labels[i]).collect();
    let acc = oracle.accuracy(&tx, &ty)?;
    Ok((oracle, acc))
}
