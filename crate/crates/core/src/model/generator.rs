use serde::{Deserialize, Serialize};
use tch::{nn, nn::Module, Device, Kind, Tensor};

use super::layers::{self, record, Conv, InstanceNorm, LayerRecord, Trace};
use super::check_image_batch;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub image_size: i64,
    pub base_channels: i64,
    /// Number of stride-2 encoder stages, mirrored by the decoder.
    pub num_downsamples: u32,
    /// Width of the latent map; always `base_channels << num_downsamples`.
    pub latent_channels: i64,
    pub num_residual_blocks: usize,
    pub num_attributes: i64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            image_size: 128,
            base_channels: 64,
            num_downsamples: 4,
            latent_channels: 1024,
            num_residual_blocks: 6,
            num_attributes: 8,
        }
    }
}

impl GeneratorConfig {
    /// 32×32 layout used for desk-scale training on the toy dataset. Two
    /// downsampling stages keep an 8×8 latent.
    pub fn toy(num_attributes: i64) -> Self {
        GeneratorConfig {
            image_size: 32,
            base_channels: 16,
            num_downsamples: 2,
            latent_channels: 64,
            num_residual_blocks: 6,
            num_attributes,
        }
    }

    /// Smallest valid layout: 16×16 images, 4-channel ladder, 1×1 latent.
    pub fn tiny(num_attributes: i64) -> Self {
        GeneratorConfig {
            image_size: 16,
            base_channels: 4,
            num_downsamples: 4,
            latent_channels: 64,
            num_residual_blocks: 6,
            num_attributes,
        }
    }

    pub fn downsample_factor(&self) -> i64 {
        1 << self.num_downsamples
    }

    pub fn latent_size(&self) -> i64 {
        self.image_size / self.downsample_factor()
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=6).contains(&self.num_downsamples) {
            return Err(Error::config(format!("num_downsamples {} must be in 1..=6", self.num_downsamples)));
        }
        let factor = self.downsample_factor();
        if self.image_size <= 0 || self.image_size % factor != 0 {
            return Err(Error::config(format!(
                "image_size {} must be a positive multiple of {factor}",
                self.image_size
            )));
        }
        if self.base_channels <= 0 {
            return Err(Error::config("base_channels must be positive"));
        }
        if self.latent_channels != self.base_channels << self.num_downsamples {
            return Err(Error::config(format!(
                "latent_channels {} must equal base_channels << num_downsamples = {}",
                self.latent_channels,
                self.base_channels << self.num_downsamples
            )));
        }
        if self.num_attributes <= 0 {
            return Err(Error::config("num_attributes must be positive"));
        }
        Ok(())
    }
}

/// Image head `x'` and side head `s'`, both Tanh-bounded.
#[derive(Debug)]
pub struct GeneratorOutput {
    pub image: Tensor,
    pub side: Tensor,
}

#[derive(Debug)]
struct NormConv {
    conv: Conv,
    norm: InstanceNorm,
}

impl NormConv {
    fn new(p: &nn::Path, name: &str, c_in: i64, c_out: i64, k: i64, s: i64, pad: i64) -> Self {
        let p = p / name;
        NormConv { conv: Conv::new(&p / "conv", c_in, c_out, k, s, pad), norm: InstanceNorm::new(&p / "norm", c_out) }
    }
}

/// Encoder-decoder generator.
///
/// Variable names follow `enc{i}`, `res{i}`, `dec{i}` (each with `conv` and
/// `norm` children) plus `image_head` and `side_head`.
#[derive(Debug)]
pub struct Generator {
    cfg: GeneratorConfig,
    vs: nn::VarStore,
    encoder: Vec<NormConv>,
    bottleneck: Vec<NormConv>,
    decoder: Vec<NormConv>,
    image_head: Conv,
    side_head: Conv,
}

impl Generator {
    /// Builds the network in the given float kind with N(0, 0.02) weights
    /// drawn from a ChaCha stream seeded by `seed`.
    pub fn new(cfg: GeneratorConfig, kind: Kind, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let vs = nn::VarStore::new(Device::Cpu);
        let root = vs.root();
        let b = cfg.base_channels;

        let mut encoder = vec![NormConv::new(&root, "enc0", 6, b, 7, 1, 3)];
        let mut c = b;
        for i in 1..=cfg.num_downsamples {
            encoder.push(NormConv::new(&root, &format!("enc{i}"), c, 2 * c, 4, 2, 1));
            c *= 2;
        }
        let bottleneck = (0..cfg.num_residual_blocks)
            .map(|i| NormConv::new(&root, &format!("res{i}"), c, c, 3, 1, 1))
            .collect();
        let mut decoder = Vec::with_capacity(cfg.num_downsamples as usize);
        let mut c_in = c + cfg.num_attributes;
        for i in 0..cfg.num_downsamples {
            let c_out = c / 2;
            // Conv to 4·c_out channels, then depth-to-space ×2.
            let p = &root / format!("dec{i}");
            decoder.push(NormConv { conv: Conv::new(&p / "conv", c_in, 4 * c_out, 3, 1, 1), norm: InstanceNorm::new(&p / "norm", c_out) });
            c = c_out;
            c_in = c_out;
        }
        let image_head = Conv::new(&root / "image_head", b, 3, 7, 1, 3);
        let side_head = Conv::new(&root / "side_head", b, 3, 7, 1, 3);

        let mut vs = vs;
        vs.set_kind(kind);
        layers::init_parameters(&vs, &mut layers::init_rng(seed, 0));
        Ok(Generator { cfg, vs, encoder, bottleneck, decoder, image_head, side_head })
    }

    pub fn config(&self) -> &GeneratorConfig {
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

    /// Sets both output heads to zero so every output is `tanh(0) = 0`.
    pub fn zero_output_heads(&mut self) {
        tch::no_grad(|| {
            for head in [&self.image_head, &self.side_head] {
                let _ = head.weight().shallow_clone().zero_();
                if let Some(b) = head.bias() {
                    let _ = b.shallow_clone().zero_();
                }
            }
        });
    }

    /// Maps the 6-channel concatenation of `x` and `s` to the latent map
    /// `(batch, latent_channels, h/f, w/f)` with `f = 2^num_downsamples`.
    pub fn encode(&self, x_and_s: &Tensor) -> Result<Tensor> {
        self.encode_traced(x_and_s, &mut None)
    }

    fn encode_traced(&self, xs: &Tensor, trace: &mut Trace<'_>) -> Result<Tensor> {
        check_image_batch(xs, "encoder input", 6, self.cfg.image_size)?;
        let mut h = xs.to_kind(self.kind());
        for layer in &self.encoder {
            let out = layer.norm.forward(&layer.conv.forward(&h)).relu();
            record(trace, "encoder", "Conv+IN+ReLU", &h, &out, Some(layer.conv.geometry()));
            h = out;
        }
        for block in &self.bottleneck {
            let out = &h + block.norm.forward(&block.conv.forward(&h)).relu();
            record(trace, "bottleneck", "RB:Conv+IN+ReLU", &h, &out, Some(block.conv.geometry()));
            h = out;
        }
        Ok(h)
    }

    /// Decodes a latent map under attribute vectors `y` of shape
    /// `(batch, num_attributes)`.
    pub fn decode(&self, z: &Tensor, y: &Tensor) -> Result<GeneratorOutput> {
        self.decode_traced(z, y, &mut None)
    }

    fn decode_traced(&self, z: &Tensor, y: &Tensor, trace: &mut Trace<'_>) -> Result<GeneratorOutput> {
        let (b, c, hz, wz) = z
            .size4()
            .map_err(|_| Error::config(format!("latent map must be rank 4, got shape {:?}", z.size())))?;
        let ls = self.cfg.latent_size();
        if c != self.cfg.latent_channels {
            return Err(Error::config(format!("latent channel dimension is {c}, expected {}", self.cfg.latent_channels)));
        }
        if hz != ls || wz != ls {
            return Err(Error::config(format!("latent spatial size is {hz}x{wz}, expected {ls}x{ls}")));
        }
        let (yb, ny) = y
            .size2()
            .map_err(|_| Error::config(format!("attribute batch must be rank 2, got shape {:?}", y.size())))?;
        if ny != self.cfg.num_attributes {
            return Err(Error::config(format!("attribute dimension n_y is {ny}, expected {}", self.cfg.num_attributes)));
        }
        if yb != b {
            return Err(Error::config(format!("attribute batch size {yb} does not match latent batch size {b}")));
        }

        let y_map = y.to_kind(self.kind()).view([b, ny, 1, 1]).expand([b, ny, hz, wz], false);
        let mut h = Tensor::cat(&[z.to_kind(self.kind()), y_map], 1);
        for layer in &self.decoder {
            let conv = layer.conv.forward(&h);
            let out = layer.norm.forward(&layers::depth_to_space(&conv, 2)).relu();
            let (k, _, p) = layer.conv.geometry();
            // Recorded stride 2 denotes the ×2 sub-pixel upscale.
            record(trace, "decoder", "Sub-Pixel Conv+IN+ReLU", &h, &out, Some((k, 2, p)));
            h = out;
        }
        let image = self.image_head.forward(&h).tanh();
        record(trace, "image_output", "Conv+Tanh", &h, &image, Some(self.image_head.geometry()));
        let side = self.side_head.forward(&h).tanh();
        record(trace, "side_output", "Conv+Tanh", &h, &side, Some(self.side_head.geometry()));
        Ok(GeneratorOutput { image, side })
    }

    /// `decode(encode(cat(x, s)), y)`.
    pub fn generate(&self, x: &Tensor, s: &Tensor, y: &Tensor) -> Result<GeneratorOutput> {
        let xs = self.concat_inputs(x, s)?;
        self.decode(&self.encode(&xs)?, y)
    }

    pub fn concat_inputs(&self, x: &Tensor, s: &Tensor) -> Result<Tensor> {
        let size = self.cfg.image_size;
        let (bx, ..) = check_image_batch(x, "image x", 3, size)?;
        let (bs, ..) = check_image_batch(s, "side image s", 3, size)?;
        if bx != bs {
            return Err(Error::config(format!("batch sizes of x ({bx}) and s ({bs}) differ")));
        }
        Ok(Tensor::cat(&[x, s], 1))
    }

    /// Runs `generate` and returns the per-layer shape records.
    pub fn trace(&self, x: &Tensor, s: &Tensor, y: &Tensor) -> Result<Vec<LayerRecord>> {
        let mut records = Vec::new();
        let xs = self.concat_inputs(x, s)?;
        let z = self.encode_traced(&xs, &mut Some(&mut records))?;
        self.decode_traced(&z, y, &mut Some(&mut records))?;
        Ok(records)
    }
}
