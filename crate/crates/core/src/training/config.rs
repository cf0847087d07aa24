use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::model::{DiscriminatorConfig, GeneratorConfig};

/// Optimization recipe and network layout of one training run.
///
/// Serialized as TOML; every field is optional in the file and falls back
/// to the reference default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr_base: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub image_size: usize,
    pub total_epochs: u64,
    pub decay_start_epoch: u64,
    /// Critic updates per generator update.
    pub n_critic: u64,
    pub weights: LossWeights,
    pub seed: u64,
    /// Write a numbered checkpoint every this many critic steps; 0 disables.
    pub checkpoint_interval: u64,
    /// Random horizontal flips of training samples.
    pub flip: bool,
    /// Realism refinement: side inputs are raw images and the critic's real
    /// pairs are `(s, s)` instead of `(x, s)`.
    pub refinement: bool,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_base: 1e-4,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 8,
            image_size: 128,
            total_epochs: 200,
            decay_start_epoch: 100,
            n_critic: 5,
            weights: LossWeights::default(),
            seed: 0,
            checkpoint_interval: 0,
            flip: true,
            refinement: false,
            generator: GeneratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
        }
    }
}

impl TrainConfig {
    /// 32×32 toy run: with 2000 samples, 40 epochs give 2000 generator steps.
    /// The shorter run uses a higher base learning rate.
    pub fn toy(num_attributes: usize) -> Self {
        let m = num_attributes as i64;
        TrainConfig {
            lr_base: 3e-4,
            image_size: 32,
            total_epochs: 40,
            decay_start_epoch: 20,
            generator: GeneratorConfig::toy(m),
            discriminator: DiscriminatorConfig::toy(m),
            ..Default::default()
        }
    }

    /// Toy realism refinement: raw side images, no identity term (it would
    /// pull the output toward the gray input), 20 epochs.
    pub fn toy_refinement(num_attributes: usize) -> Self {
        let toy = Self::toy(num_attributes);
        TrainConfig {
            refinement: true,
            total_epochs: 20,
            decay_start_epoch: 10,
            weights: LossWeights { lambda_id: 0.0, ..toy.weights },
            ..toy
        }
    }

    /// Same recipe with both networks sized for `num_attributes`.
    pub fn with_attributes(mut self, num_attributes: usize) -> Self {
        self.generator.num_attributes = num_attributes as i64;
        self.discriminator.num_attributes = num_attributes as i64;
        self
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_critic == 0 {
            return Err(Error::config("n_critic must be at least 1"));
        }
        if self.decay_start_epoch >= self.total_epochs {
            return Err(Error::config(format!(
                "decay_start_epoch {} must be below total_epochs {}",
                self.decay_start_epoch, self.total_epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if !(self.lr_base > 0.0 && self.adam_eps > 0.0) {
            return Err(Error::config("lr_base and adam_eps must be positive"));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(format!("{name} {b} must be in [0, 1)")));
            }
        }
        self.weights.validate()?;
        self.generator.validate()?;
        self.discriminator.validate()?;
        let size = self.image_size as i64;
        if self.generator.image_size != size || self.discriminator.image_size != size {
            return Err(Error::config(format!(
                "generator ({}) and discriminator ({}) image sizes must equal image_size {size}",
                self.generator.image_size, self.discriminator.image_size
            )));
        }
        if self.generator.num_attributes != self.discriminator.num_attributes {
            return Err(Error::config("generator and discriminator disagree on num_attributes"));
        }
        if self.discriminator.input_channels != 6 {
            return Err(Error::config("the critic takes 6 input channels"));
        }
        Ok(())
    }
}

/// `lr_base` before `decay_start_epoch`, then linear decay to 0 at
/// `total_epochs`.
pub fn lr_schedule(epoch: u64, cfg: &TrainConfig) -> Result<f64> {
    if epoch > cfg.total_epochs {
        return Err(Error::validation(format!("epoch {epoch} outside 0..={}", cfg.total_epochs)));
    }
    if epoch < cfg.decay_start_epoch {
        return Ok(cfg.lr_base);
    }
    let remaining = (cfg.total_epochs - epoch) as f64;
    let span = (cfg.total_epochs - cfg.decay_start_epoch) as f64;
    Ok(cfg.lr_base * (remaining / span))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_spot_values() {
        let cfg = TrainConfig::default();
        assert_eq!(lr_schedule(0, &cfg).unwrap(), 1e-4);
        assert_eq!(lr_schedule(99, &cfg).unwrap(), 1e-4);
        assert_eq!(lr_schedule(100, &cfg).unwrap(), 1e-4);
        assert_eq!(lr_schedule(150, &cfg).unwrap(), 5e-5);
        assert_eq!(lr_schedule(200, &cfg).unwrap(), 0.0);
        assert!(matches!(lr_schedule(201, &cfg), Err(Error::Validation(_))));
    }

    #[test]
    fn toml_roundtrip_and_defaults() {
        let cfg = TrainConfig::toy(4);
        assert_eq!(TrainConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
        let partial = TrainConfig::from_toml_str("seed = 9\n[weights]\nlambda_id = 0.0\n").unwrap();
        assert_eq!(partial.seed, 9);
        assert_eq!(partial.weights.lambda_id, 0.0);
        assert_eq!(partial.weights.lambda_bi, 10.0);
        assert_eq!(partial.lr_base, 1e-4);
    }

    #[test]
    fn rejects_invalid_configs() {
        let bad = |f: fn(&mut TrainConfig)| {
            let mut c = TrainConfig::toy(4);
            f(&mut c);
            matches!(c.validate(), Err(Error::Config(_)))
        };
        assert!(bad(|c| c.n_critic = 0));
        assert!(bad(|c| c.decay_start_epoch = c.total_epochs));
        assert!(bad(|c| c.image_size = 64));
        assert!(bad(|c| c.adam_beta2 = 1.0));
        assert!(TrainConfig::from_toml_str("learning_rate = 1.0").is_err());
    }
}
