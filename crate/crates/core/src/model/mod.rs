//! Generator and critic networks.
//!
//! The generator is an encoder / residual bottleneck / sub-pixel decoder
//! with separate image and side-image output heads. The critic is a
//! patch-output Wasserstein critic with an auxiliary attribute classifier.
//! Both are sized from their config so the same code serves the 128×128
//! reference layout and the small layouts used in tests.

mod discriminator;
mod generator;
pub mod layers;

pub use discriminator::{Discriminator, DiscriminatorConfig, DiscriminatorOutput};
pub use generator::{Generator, GeneratorConfig, GeneratorOutput};
pub(crate) use discriminator::HiddenStack;
pub use layers::{depth_to_space, flip_horizontal, LayerRecord};

use tch::{nn, Tensor};

use crate::error::{Error, Result};

/// Snapshot of all variables of `vs`, sorted by name.
pub fn named_parameters(vs: &nn::VarStore) -> Vec<(String, Tensor)> {
    let mut vars: Vec<(String, Tensor)> = vs.variables().into_iter().collect();
    vars.sort_by(|a, b| a.0.cmp(&b.0));
    vars
}

/// Euclidean distance between two parameter snapshots of the same store.
pub fn parameter_distance(a: &[(String, Tensor)], b: &[(String, Tensor)]) -> f64 {
    a.iter()
        .zip(b)
        .map(|((_, x), (_, y))| {
            let d = (x - y).to_kind(tch::Kind::Double);
            d.square().sum(tch::Kind::Double).double_value(&[])
        })
        .sum::<f64>()
        .sqrt()
}

/// Deep copy of a parameter snapshot (detached from the live variables).
pub fn clone_parameters(params: &[(String, Tensor)]) -> Vec<(String, Tensor)> {
    params.iter().map(|(n, t)| (n.clone(), t.detach().copy())).collect()
}

pub(crate) fn check_image_batch(xs: &Tensor, what: &str, channels: i64, size: i64) -> Result<(i64, i64, i64, i64)> {
    let dims = xs
        .size4()
        .map_err(|_| Error::config(format!("{what}: expected a rank-4 (batch, channel, height, width) tensor, got shape {:?}", xs.size())))?;
    let (_, c, h, w) = dims;
    if c != channels {
        return Err(Error::config(format!("{what}: channel dimension is {c}, expected {channels}")));
    }
    if h != size {
        return Err(Error::config(format!("{what}: height is {h}, expected {size}")));
    }
    if w != size {
        return Err(Error::config(format!("{what}: width is {w}, expected {size}")));
    }
    Ok(dims)
}
