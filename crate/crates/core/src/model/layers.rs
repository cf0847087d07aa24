//! Building blocks shared by the generator, critic and oracle classifier.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tch::{nn, nn::Module, Kind, Tensor};

/// Epsilon added to the per-channel variance in instance normalization.
pub const INSTANCE_NORM_EPS: f64 = 1e-5;

/// Standard deviation of the normal weight initializer.
pub const INIT_STD: f64 = 0.02;

/// Shape record of one layer, captured while tracing a forward pass.
///
/// Shapes are NCHW (or NC for the fully connected head).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerRecord {
    pub part: &'static str,
    pub layer: &'static str,
    pub input: Vec<i64>,
    pub output: Vec<i64>,
    pub kernel: Option<i64>,
    pub stride: Option<i64>,
    pub padding: Option<i64>,
}

pub(crate) type Trace<'a> = Option<&'a mut Vec<LayerRecord>>;

pub(crate) fn record(
    trace: &mut Trace<'_>,
    part: &'static str,
    layer: &'static str,
    input: &Tensor,
    output: &Tensor,
    geometry: Option<(i64, i64, i64)>,
) {
    if let Some(records) = trace.as_deref_mut() {
        records.push(LayerRecord {
            part,
            layer,
            input: input.size(),
            output: output.size(),
            kernel: geometry.map(|g| g.0),
            stride: geometry.map(|g| g.1),
            padding: geometry.map(|g| g.2),
        });
    }
}

/// A convolution that remembers its geometry for shape tracing.
#[derive(Debug)]
pub(crate) struct Conv {
    inner: nn::Conv2D,
    pub kernel: i64,
    pub stride: i64,
    pub padding: i64,
}

impl Conv {
    pub fn new(p: nn::Path, c_in: i64, c_out: i64, kernel: i64, stride: i64, padding: i64) -> Self {
        let cfg = nn::ConvConfig { stride, padding, ..Default::default() };
        Conv { inner: nn::conv2d(p, c_in, c_out, kernel, cfg), kernel, stride, padding }
    }

    pub fn geometry(&self) -> (i64, i64, i64) {
        (self.kernel, self.stride, self.padding)
    }

    pub fn weight(&self) -> &Tensor {
        &self.inner.ws
    }

    pub fn bias(&self) -> Option<&Tensor> {
        self.inner.bs.as_ref()
    }
}

impl Module for Conv {
    fn forward(&self, xs: &Tensor) -> Tensor {
        self.inner.forward(xs)
    }
}

/// Instance normalization with a learned per-channel affine transform.
#[derive(Debug)]
pub(crate) struct InstanceNorm {
    weight: Tensor,
    bias: Tensor,
    channels: i64,
}

impl InstanceNorm {
    pub fn new(p: nn::Path, channels: i64) -> Self {
        InstanceNorm { weight: p.ones("weight", &[channels]), bias: p.zeros("bias", &[channels]), channels }
    }
}

impl Module for InstanceNorm {
    fn forward(&self, xs: &Tensor) -> Tensor {
        let mean = xs.mean_dim(&[2i64, 3][..], true, xs.kind());
        let centered = xs - mean;
        let var = centered.square().mean_dim(&[2i64, 3][..], true, xs.kind());
        let normed = centered / (var + INSTANCE_NORM_EPS).sqrt();
        normed * self.weight.view([1, self.channels, 1, 1]) + self.bias.view([1, self.channels, 1, 1])
    }
}

/// Rearranges `(b, c·r², h, w)` into `(b, c, h·r, w·r)`.
///
/// Output pixel `(k, h·r + i, w·r + j)` takes input channel `k·r² + i·r + j`
/// at `(h, w)`, the usual sub-pixel convolution layout.
pub fn depth_to_space(xs: &Tensor, factor: i64) -> Tensor {
    let (b, c, h, w) = xs.size4().expect("depth_to_space expects a rank-4 tensor");
    assert_eq!(c % (factor * factor), 0, "channels must be divisible by factor^2");
    let c_out = c / (factor * factor);
    xs.reshape([b, c_out, factor, factor, h, w])
        .permute([0, 1, 4, 2, 5, 3])
        .reshape([b, c_out, h * factor, w * factor])
}

/// Flips an NCHW tensor along its width axis.
pub fn flip_horizontal(xs: &Tensor) -> Tensor {
    xs.flip([-1])
}

/// Re-initializes every variable of `vs` deterministically from `rng`.
///
/// Normalization parameters (paths containing `norm`) get weight 1 and
/// bias 0; every other weight is drawn from N(0, 0.02) and biases are zero.
/// Variables are visited in name order so the draw sequence is stable.
pub(crate) fn init_parameters(vs: &nn::VarStore, rng: &mut ChaCha8Rng) {
    let mut vars: Vec<(String, Tensor)> = vs.variables().into_iter().collect();
    vars.sort_by(|a, b| a.0.cmp(&b.0));
    let normal = Normal::new(0.0f64, INIT_STD).expect("valid std");
    tch::no_grad(|| {
        for (name, mut var) in vars {
            let is_norm = name.split('.').any(|part| part.starts_with("norm"));
            if name.ends_with("bias") {
                let _ = var.zero_();
            } else if is_norm {
                let _ = var.fill_(1.0);
            } else {
                let n = var.numel();
                let values: Vec<f64> = (0..n).map(|_| normal.sample(rng)).collect();
                let init = Tensor::from_slice(&values).view(var.size().as_slice()).to_kind(var.kind());
                var.copy_(&init);
            }
        }
    });
}

/// ChaCha8 generator for `seed` on an independent `stream`.
pub fn init_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform samples in `[0, 1)` as a tensor of the given shape and kind.
pub fn uniform_tensor(rng: &mut impl Rng, shape: &[i64], kind: Kind) -> Tensor {
    let n: i64 = shape.iter().product();
    let values: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    Tensor::from_slice(&values).view(shape).to_kind(kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tch::Device;

    fn brute_depth_to_space(input: &[f64], c: usize, h: usize, w: usize, r: usize) -> Vec<f64> {
        let c_out = c / (r * r);
        let mut out = vec![0.0; c_out * h * r * w * r];
        for k in 0..c_out {
            for y in 0..h * r {
                for x in 0..w * r {
                    let src_c = k * r * r + (y % r) * r + (x % r);
                    let src = src_c * h * w + (y / r) * w + (x / r);
                    out[k * h * r * w * r + y * w * r + x] = input[src];
                }
            }
        }
        out
    }

    #[test]
    fn depth_to_space_on_abcd() {
        // Channels a, b, c, d constant over a 2x2 grid.
        let vals: Vec<f64> = [1.0, 2.0, 3.0, 4.0].iter().flat_map(|&v| [v; 4]).collect();
        let xs = Tensor::from_slice(&vals).view([1, 4, 2, 2]);
        let out = depth_to_space(&xs, 2);
        assert_eq!(out.size(), vec![1, 1, 4, 4]);
        let got: Vec<f64> = out.flatten(0, -1).try_into().unwrap();
        #[rustfmt::skip]
        let expected = vec![
            1.0, 2.0, 1.0, 2.0,
            3.0, 4.0, 3.0, 4.0,
            1.0, 2.0, 1.0, 2.0,
            3.0, 4.0, 3.0, 4.0,
        ];
        assert_eq!(got, expected);
    }

    #[test]
    fn depth_to_space_matches_index_oracle() {
        let mut rng = init_rng(7, 0);
        for &(c, h, w, r) in &[(4usize, 3usize, 5usize, 2usize), (18, 2, 2, 3), (8, 4, 1, 2)] {
            let xs = uniform_tensor(&mut rng, &[2, c as i64, h as i64, w as i64], Kind::Double);
            let out = depth_to_space(&xs, r as i64);
            for b in 0..2 {
                let input: Vec<f64> = xs.get(b).flatten(0, -1).try_into().unwrap();
                let got: Vec<f64> = out.get(b).flatten(0, -1).try_into().unwrap();
                assert_eq!(got, brute_depth_to_space(&input, c, h, w, r));
            }
            // Same convention as torch's pixel_shuffle.
            assert!(out.equal(&xs.pixel_shuffle(r as i64)));
        }
    }

    #[test]
    fn instance_norm_normalizes_each_channel() {
        let vs = nn::VarStore::new(Device::Cpu);
        let norm = InstanceNorm::new(vs.root() / "norm", 3);
        let mut rng = init_rng(1, 0);
        let xs = uniform_tensor(&mut rng, &[2, 3, 5, 4], Kind::Float) * 7.0 + 3.0;
        let ys = norm.forward(&xs);
        let mean = ys.mean_dim(&[2i64, 3][..], false, Kind::Float);
        let var = ys.var_dim(&[2i64, 3][..], false, false);
        assert!(mean.abs().max().double_value(&[]) < 1e-5);
        assert!((var - 1.0).abs().max().double_value(&[]) < 1e-3);
    }

    #[test]
    fn init_is_deterministic() {
        let build = || {
            let vs = nn::VarStore::new(Device::Cpu);
            let _c = Conv::new(vs.root() / "conv", 3, 4, 3, 1, 1);
            let _n = InstanceNorm::new(vs.root() / "norm0", 4);
            init_parameters(&vs, &mut init_rng(3, 1));
            vs
        };
        let a = build();
        let b = build();
        for (name, t) in a.variables() {
            assert!(t.equal(&b.variables()[&name]), "{name}");
        }
        let vars = a.variables();
        assert_eq!(vars["conv.bias"].abs().sum(Kind::Float).double_value(&[]), 0.0);
        assert_eq!(vars["norm0.weight"].sum(Kind::Float).double_value(&[]), 4.0);
        let std = f64::try_from(vars["conv.weight"].std(true)).unwrap();
        assert!((std - INIT_STD).abs() < 0.01);
    }
}
