use serde::{Deserialize, Serialize};
use tch::{nn, nn::Module, Device, Kind, Tensor};

use super::check_image_batch;
use super::layers::{self, record, Conv, LayerRecord, Trace};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorConfig {
    pub image_size: i64,
    pub base_channels: i64,
    pub num_layers: u32,
    pub num_attributes: i64,
    pub leaky_slope: f64,
    /// 6 for the critic (image and side image); the oracle classifier uses 3.
    pub input_channels: i64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig {
            image_size: 128,
            base_channels: 64,
            num_layers: 6,
            num_attributes: 8,
            leaky_slope: 0.01,
            input_channels: 6,
        }
    }
}

impl DiscriminatorConfig {
    /// 32×32 critic with a 2×2 patch map, matching the reference 2×2 at 128.
    pub fn toy(num_attributes: i64) -> Self {
        DiscriminatorConfig { image_size: 32, base_channels: 32, num_layers: 4, num_attributes, ..Default::default() }
    }

    pub fn patch_size(&self) -> i64 {
        self.image_size >> self.num_layers
    }

    /// Channel width of the last hidden conv.
    pub fn top_channels(&self) -> i64 {
        self.base_channels << (self.num_layers - 1)
    }

    /// Input width of the attribute classifier head.
    pub fn fc_features(&self) -> i64 {
        self.patch_size() * self.patch_size() * self.top_channels()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 || self.num_layers > 16 {
            return Err(Error::config(format!("num_layers {} must be in 1..=16", self.num_layers)));
        }
        let factor = 1i64 << self.num_layers;
        if self.image_size <= 0 || self.image_size % factor != 0 {
            return Err(Error::config(format!(
                "image_size {} must be a positive multiple of 2^num_layers = {factor}",
                self.image_size
            )));
        }
        if self.base_channels <= 0 || self.num_attributes <= 0 || self.input_channels <= 0 {
            return Err(Error::config("channel and attribute counts must be positive"));
        }
        if !(self.leaky_slope >= 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::config(format!("leaky_slope {} must be in [0, 1)", self.leaky_slope)));
        }
        Ok(())
    }
}

/// Raw patch critic map and attribute logits.
#[derive(Debug)]
pub struct DiscriminatorOutput {
    /// `(batch, 1, h/2^L, w/2^L)`, unbounded.
    pub src: Tensor,
    /// `(batch, num_attributes)`, pre-sigmoid.
    pub cls: Tensor,
}

/// Stack of stride-2 4×4 convs with leaky ReLU and no normalization.
#[derive(Debug)]
pub(crate) struct HiddenStack {
    convs: Vec<Conv>,
    slope: f64,
}

impl HiddenStack {
    pub fn new(p: &nn::Path, cfg: &DiscriminatorConfig) -> Self {
        let mut convs = Vec::with_capacity(cfg.num_layers as usize);
        let mut c_in = cfg.input_channels;
        let mut c_out = cfg.base_channels;
        for i in 0..cfg.num_layers {
            convs.push(Conv::new(p / format!("hidden{i}"), c_in, c_out, 4, 2, 1));
            c_in = c_out;
            c_out *= 2;
        }
        HiddenStack { convs, slope: cfg.leaky_slope }
    }

    pub fn forward_traced(&self, xs: &Tensor, trace: &mut Trace<'_>) -> Tensor {
        let mut h = xs.shallow_clone();
        for conv in &self.convs {
            let pre = conv.forward(&h);
            let out = pre.maximum(&(&pre * self.slope));
            record(trace, "hidden", "Conv+Leaky ReLU", &h, &out, Some(conv.geometry()));
            h = out;
        }
        h
    }
}

/// Patch critic with auxiliary classifier.
///
/// Variables: `hidden{i}.{weight,bias}`, `src_head.{weight,bias}`,
/// `cls_head.{weight,bias}`.
#[derive(Debug)]
pub struct Discriminator {
    cfg: DiscriminatorConfig,
    vs: nn::VarStore,
    hidden: HiddenStack,
    src_head: Conv,
    cls_head: nn::Linear,
}

impl Discriminator {
    pub fn new(cfg: DiscriminatorConfig, kind: Kind, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut vs = nn::VarStore::new(Device::Cpu);
        let root = vs.root();
        let hidden = HiddenStack::new(&root, &cfg);
        let src_head = Conv::new(&root / "src_head", cfg.top_channels(), 1, 3, 1, 1);
        let cls_head = nn::linear(&root / "cls_head", cfg.fc_features(), cfg.num_attributes, Default::default());
        vs.set_kind(kind);
        layers::init_parameters(&vs, &mut layers::init_rng(seed, 1));
        Ok(Discriminator { cfg, vs, hidden, src_head, cls_head })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.cfg
    }

    pub fn var_store(&self) -> &nn::VarStore {
        &self.vs
    }

    pub fn var_store_mut(&mut self) -> &mut nn::VarStore {
        &mut self.vs
    }

    pub fn kind(&self) -> Kind {
        self.vs.kind()
    }

    /// Scores a concatenated `(batch, input_channels, h, w)` batch.
    pub fn forward(&self, xs: &Tensor) -> Result<DiscriminatorOutput> {
        self.forward_traced(xs, &mut None)
    }

    /// Scores the pair `(x, s)`.
    pub fn discriminate(&self, x: &Tensor, s: &Tensor) -> Result<DiscriminatorOutput> {
        if x.size().first() != s.size().first() {
            return Err(Error::config(format!("batch sizes of x {:?} and s {:?} differ", x.size(), s.size())));
        }
        self.forward(&Tensor::cat(&[x, s], 1))
    }

    fn forward_traced(&self, xs: &Tensor, trace: &mut Trace<'_>) -> Result<DiscriminatorOutput> {
        let (b, ..) = check_image_batch(xs, "discriminator input", self.cfg.input_channels, self.cfg.image_size)?;
        let h = self.hidden.forward_traced(&xs.to_kind(self.kind()), trace);
        let src = self.src_head.forward(&h);
        record(trace, "output", "Conv", &h, &src, Some(self.src_head.geometry()));
        let cls = self.cls_head.forward(&h.reshape([b, -1]));
        record(trace, "output", "FC", &h, &cls, None);
        Ok(DiscriminatorOutput { src, cls })
    }

    pub fn trace(&self, xs: &Tensor) -> Result<Vec<LayerRecord>> {
        let mut records = Vec::new();
        self.forward_traced(xs, &mut Some(&mut records))?;
        Ok(records)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::layers::uniform_tensor;

    #[test]
    fn toy_shapes() {
        let d = Discriminator::new(DiscriminatorConfig::toy(4), Kind::Float, 0).unwrap();
        let xs = Tensor::zeros([3, 6, 32, 32], (Kind::Float, Device::Cpu));
        let out = d.forward(&xs).unwrap();
        assert_eq!(out.src.size(), vec![3, 1, 2, 2]);
        assert_eq!(out.cls.size(), vec![3, 4]);
    }

    #[test]
    fn default_fc_features() {
        let cfg = DiscriminatorConfig::default();
        assert_eq!(cfg.fc_features(), 2 * 2 * 2048);
        assert_eq!(cfg.fc_features(), 8192);
    }

    #[test]
    fn critic_is_not_scale_invariant() {
        let d = Discriminator::new(DiscriminatorConfig::toy(4), Kind::Double, 3).unwrap();
        let mut rng = layers::init_rng(5, 0);
        let xs = uniform_tensor(&mut rng, &[2, 6, 32, 32], Kind::Double) * 2.0 - 1.0;
        let a = d.forward(&xs).unwrap().src;
        let b = d.forward(&(&xs * 2.0)).unwrap().src;
        assert!((a - b).abs().max().double_value(&[]) > 0.0);
    }

    #[test]
    fn rejects_bad_configs_and_inputs() {
        let cfg = DiscriminatorConfig { image_size: 40, ..DiscriminatorConfig::toy(2) };
        assert!(cfg.validate().is_err());
        let d = Discriminator::new(DiscriminatorConfig::toy(2), Kind::Float, 0).unwrap();
        let err = d.forward(&Tensor::zeros([1, 3, 32, 32], (Kind::Float, Device::Cpu))).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
