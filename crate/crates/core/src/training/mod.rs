//! Adversarial training: loss wiring, the alternating critic / generator
//! updates, the learning-rate schedule, metrics and checkpoints.

mod adam;
pub mod checkpoint;
mod config;

pub use adam::Adam;
pub use config::{lr_schedule, TrainConfig};

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tch::{Kind, Tensor};

use crate::data::{sample_target_attributes, Batch, Dataset, SideSource, Vocabulary};
use crate::error::{Error, Result};
use crate::losses::{
    adv_loss_d, adv_loss_g, bidirectional_loss, cls_loss_fake, cls_loss_real, discriminator_objective, gradient_penalty,
    generator_objective, identity_loss, to_f64, total_losses, LossParts, LossReport, LossWeights,
};
use crate::model::layers::init_rng;
use crate::model::{named_parameters, Discriminator, Generator};
use checkpoint::{int_entry, read_archive, restore, text_entry, write_archive};

const BATCH_STREAM: u64 = 1 << 40;
const SHUFFLE_STREAM: u64 = 1 << 41;

/// Random stream of global batch `step`: flips, target attributes and
/// penalty interpolation weights.
pub fn batch_rng(seed: u64, step: u64) -> ChaCha8Rng {
    init_rng(seed, BATCH_STREAM + step)
}

/// Sample order of `epoch`.
pub fn epoch_permutation(seed: u64, epoch: u64, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut init_rng(seed, SHUFFLE_STREAM + epoch));
    order
}

/// Generator objective on one batch for the given targets. Returns the
/// differentiable total and the logged parts.
///
/// The critic sees `(x', s')`, or `(x', s)` in refinement mode where `s`
/// is an observed image.
pub fn generator_loss(
    g: &Generator,
    d: &Discriminator,
    batch: &Batch,
    target: &Tensor,
    w: &LossWeights,
    refinement: bool,
) -> Result<(Tensor, LossParts)> {
    let z = g.encode(&g.concat_inputs(&batch.x, &batch.s)?)?;
    let fake = g.decode(&z, target)?;
    let critic_side = if refinement { &batch.s } else { &fake.side };
    let d_fake = d.discriminate(&fake.image, critic_side)?;
    let adv = adv_loss_g(&d_fake.src);
    let cls = cls_loss_fake(&d_fake.cls, target)?;

    let z_fake = g.encode(&g.concat_inputs(&fake.image, &fake.side)?)?;
    let rec = g.decode(&z_fake, &batch.y)?;
    let bi = bidirectional_loss(&batch.x, &batch.s, &rec.image, &rec.side, &z, &z_fake)?;
    let id = identity_loss(&batch.x, &g.decode(&z, &batch.y)?.image)?;

    let total = generator_objective(&adv, &bi, &cls, &id, w);
    let parts = LossParts {
        adv_g: to_f64(&adv),
        cls_fake: to_f64(&cls),
        identity: to_f64(&id),
        bidirectional: to_f64(&bi),
        ..Default::default()
    };
    Ok((total, parts))
}

/// Critic objective on one batch, with the generator frozen. Real pairs are
/// `(x, s)`, or `(s, s)` in refinement mode.
pub fn discriminator_loss(
    g: &Generator,
    d: &Discriminator,
    batch: &Batch,
    target: &Tensor,
    w: &LossWeights,
    refinement: bool,
    rng: &mut ChaCha8Rng,
) -> Result<(Tensor, LossParts)> {
    let fake = tch::no_grad(|| g.generate(&batch.x, &batch.s, target))?;
    let (real_x, fake_side) = if refinement { (&batch.s, &batch.s) } else { (&batch.x, &fake.side) };
    let real = Tensor::cat(&[real_x, &batch.s], 1);
    let fake = Tensor::cat(&[&fake.image, fake_side], 1);
    let d_real = d.forward(&real)?;
    let d_fake = d.forward(&fake)?;
    let gp = gradient_penalty(|t| Ok(d.forward(t)?.src), &real, &fake, rng)?;
    let adv = adv_loss_d(&d_real.src, &d_fake.src, &gp, w);
    let cls = cls_loss_real(&d_real.cls, &batch.y)?;
    let total = discriminator_objective(&adv, &cls, w);
    let parts = LossParts { adv_d: to_f64(&adv), gp: to_f64(&gp), cls_real: to_f64(&cls), ..Default::default() };
    Ok((total, parts))
}

fn gradients(loss: &Tensor, params: &[Tensor]) -> Vec<Tensor> {
    Tensor::run_backward(&[loss], params, false, false)
        .into_iter()
        .zip(params)
        .map(|(g, p)| if g.defined() { g } else { p.zeros_like() })
        .collect()
}

/// One line of the metrics file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    /// Global batch index.
    pub step: u64,
    pub epoch: u64,
    /// `"d"` for a critic update, `"g"` for a generator update.
    pub phase: String,
    pub lr: f64,
    #[serde(flatten)]
    pub losses: LossReport,
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    std::fs::read_to_string(path)?.lines().map(|l| Ok(serde_json::from_str(l)?)).collect()
}

#[derive(Debug, Clone, Default)]
pub struct FitOptions {
    /// JSON-lines metrics file; appended to when resuming.
    pub metrics_path: Option<PathBuf>,
    /// Directory for `latest.safetensors` (every epoch boundary and on
    /// stop) and `step_<n>.safetensors` (every `checkpoint_interval`).
    pub checkpoint_dir: Option<PathBuf>,
    /// Stop once this many critic steps have been taken in total.
    pub max_d_steps: Option<u64>,
}

#[derive(Debug, Clone, Default)]
pub struct FitSummary {
    pub d_steps: u64,
    pub g_steps: u64,
    pub last_d: Option<LossReport>,
    pub last_g: Option<LossReport>,
}

/// Both networks, their optimizers and the step counters.
#[derive(Debug)]
pub struct Trainer {
    cfg: TrainConfig,
    vocabulary: Vocabulary,
    generator: Generator,
    discriminator: Discriminator,
    g_vars: Vec<(String, Tensor)>,
    d_vars: Vec<(String, Tensor)>,
    opt_g: Adam,
    opt_d: Adam,
    d_steps: u64,
    g_steps: u64,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, vocabulary: Vocabulary) -> Result<Self> {
        cfg.validate()?;
        if vocabulary.len() as i64 != cfg.generator.num_attributes {
            return Err(Error::config(format!(
                "vocabulary has {} attributes, networks expect {}",
                vocabulary.len(),
                cfg.generator.num_attributes
            )));
        }
        let generator = Generator::new(cfg.generator.clone(), Kind::Float, cfg.seed)?;
        let discriminator = Discriminator::new(cfg.discriminator.clone(), Kind::Float, cfg.seed)?;
        let g_vars = named_parameters(generator.var_store());
        let d_vars = named_parameters(discriminator.var_store());
        let tensors = |v: &[(String, Tensor)]| v.iter().map(|(_, t)| t.shallow_clone()).collect::<Vec<_>>();
        let opt_g = Adam::new(&tensors(&g_vars), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
        let opt_d = Adam::new(&tensors(&d_vars), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
        Ok(Trainer { cfg, vocabulary, generator, discriminator, g_vars, d_vars, opt_g, opt_d, d_steps: 0, g_steps: 0 })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn discriminator(&self) -> &Discriminator {
        &self.discriminator
    }

    pub fn into_generator(self) -> Generator {
        self.generator
    }

    pub fn d_steps(&self) -> u64 {
        self.d_steps
    }

    pub fn g_steps(&self) -> u64 {
        self.g_steps
    }

    fn params(vars: &[(String, Tensor)]) -> Vec<Tensor> {
        vars.iter().map(|(_, t)| t.shallow_clone()).collect()
    }

    /// One critic update at learning rate `lr`. Only critic parameters
    /// receive gradients or updates.
    pub fn train_step_d(&mut self, batch: &Batch, lr: f64, rng: &mut ChaCha8Rng) -> Result<LossReport> {
        let target = sample_target_attributes(&batch.y, rng);
        let (total, parts) =
            discriminator_loss(&self.generator, &self.discriminator, batch, &target, &self.cfg.weights, self.cfg.refinement, rng)
                .map_err(|e| e.at_step(self.d_steps))?;
        let report = total_losses(&parts, &self.cfg.weights).map_err(|e| e.at_step(self.d_steps))?;
        let params = Self::params(&self.d_vars);
        let grads = gradients(&total, &params);
        self.opt_d.step(&params, &grads, lr);
        self.d_steps += 1;
        Ok(report)
    }

    /// One generator update at learning rate `lr`. Only generator
    /// parameters receive gradients or updates.
    pub fn train_step_g(&mut self, batch: &Batch, lr: f64, rng: &mut ChaCha8Rng) -> Result<LossReport> {
        let target = sample_target_attributes(&batch.y, rng);
        let (total, parts) =
            generator_loss(&self.generator, &self.discriminator, batch, &target, &self.cfg.weights, self.cfg.refinement)
                .map_err(|e| e.at_step(self.d_steps))?;
        let report = total_losses(&parts, &self.cfg.weights).map_err(|e| e.at_step(self.d_steps))?;
        let params = Self::params(&self.g_vars);
        let grads = gradients(&total, &params);
        self.opt_g.step(&params, &grads, lr);
        self.g_steps += 1;
        Ok(report)
    }

    /// Trains on `dataset` from the current step until `total_epochs` (or
    /// `max_d_steps`). Each batch gets one critic update; every
    /// `n_critic`-th batch also gets a generator update. Incomplete final
    /// batches of an epoch are dropped.
    pub fn fit(&mut self, dataset: &Dataset, opts: &FitOptions) -> Result<FitSummary> {
        let expected = if self.cfg.refinement { SideSource::Image } else { SideSource::Heatmap };
        if dataset.is_empty() {
            return Err(Error::validation("training set is empty"));
        }
        if dataset.side_source() != expected {
            return Err(Error::config(format!(
                "refinement = {} but the dataset provides {:?} side inputs",
                self.cfg.refinement,
                dataset.side_source()
            )));
        }
        if dataset.vocabulary() != &self.vocabulary {
            return Err(Error::config("dataset vocabulary differs from the model's"));
        }
        if dataset.image_size() != self.cfg.image_size {
            return Err(Error::config(format!(
                "dataset loaded at {} px, model expects {}",
                dataset.image_size(),
                self.cfg.image_size
            )));
        }
        let bs = self.cfg.batch_size;
        let per_epoch = (dataset.len() / bs) as u64;
        if per_epoch == 0 {
            return Err(Error::validation(format!("{} samples do not fill one batch of {bs}", dataset.len())));
        }
        let end = self.cfg.total_epochs * per_epoch;
        let end = opts.max_d_steps.map_or(end, |m| m.min(end));

        let mut metrics = match &opts.metrics_path {
            Some(p) => {
                if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(parent)?;
                }
                Some(BufWriter::new(OpenOptions::new().create(true).append(true).open(p)?))
            }
            None => None,
        };
        if let Some(dir) = &opts.checkpoint_dir {
            std::fs::create_dir_all(dir)?;
        }
        let mut summary = FitSummary::default();
        let mut order: Option<(u64, Vec<usize>)> = None;
        while self.d_steps < end {
            let step = self.d_steps;
            let epoch = step / per_epoch;
            let pos = (step % per_epoch) as usize;
            if order.as_ref().map(|(e, _)| *e) != Some(epoch) {
                order = Some((epoch, epoch_permutation(self.cfg.seed, epoch, dataset.len())));
            }
            let indices = &order.as_ref().expect("set above").1[pos * bs..(pos + 1) * bs];
            let mut rng = batch_rng(self.cfg.seed, step);
            let flip_rng: Option<&mut dyn rand::RngCore> = if self.cfg.flip { Some(&mut rng) } else { None };
            let batch = dataset.load_batch(indices, flip_rng)?;
            let lr = lr_schedule(epoch, &self.cfg)?;

            let report = self.train_step_d(&batch, lr, &mut rng)?;
            write_record(&mut metrics, step, epoch, "d", lr, &report)?;
            summary.last_d = Some(report);
            if self.d_steps.is_multiple_of(self.cfg.n_critic) {
                let report = self.train_step_g(&batch, lr, &mut rng)?;
                write_record(&mut metrics, step, epoch, "g", lr, &report)?;
                summary.last_g = Some(report);
            }

            if let Some(dir) = &opts.checkpoint_dir {
                if self.cfg.checkpoint_interval > 0 && self.d_steps.is_multiple_of(self.cfg.checkpoint_interval) {
                    self.save(&dir.join(format!("step_{:08}.safetensors", self.d_steps)), self.d_steps / per_epoch)?;
                }
                if self.d_steps.is_multiple_of(per_epoch) || self.d_steps == end {
                    self.save(&dir.join("latest.safetensors"), self.d_steps / per_epoch)?;
                }
            }
            if self.d_steps.is_multiple_of(per_epoch) {
                log::info!("epoch {} done: d_steps {} g_steps {}", epoch, self.d_steps, self.g_steps);
            }
        }
        if let Some(m) = metrics.as_mut() {
            m.flush()?;
        }
        summary.d_steps = self.d_steps;
        summary.g_steps = self.g_steps;
        Ok(summary)
    }

    /// Writes the full training state; see [`checkpoint`] for the keys.
    pub fn save(&self, path: &Path, epoch: u64) -> Result<()> {
        let mut entries = Vec::new();
        for (prefix, vars, opt) in [("generator", &self.g_vars, &self.opt_g), ("discriminator", &self.d_vars, &self.opt_d)] {
            for (i, (name, t)) in vars.iter().enumerate() {
                entries.push((format!("{prefix}/{name}"), t.detach()));
                entries.push((format!("optim/{prefix}/m/{name}"), opt.m[i].shallow_clone()));
                entries.push((format!("optim/{prefix}/v/{name}"), opt.v[i].shallow_clone()));
            }
            entries.push(int_entry(&format!("optim/{prefix}/t"), opt.t));
        }
        entries.push(int_entry("state/d_steps", self.d_steps as i64));
        entries.push(int_entry("state/g_steps", self.g_steps as i64));
        entries.push(int_entry("state/epoch", epoch as i64));
        entries.push(int_entry("state/seed", self.cfg.seed as i64));
        entries.push(text_entry("meta/config", &self.cfg.to_toml_string()));
        entries.push(text_entry("meta/vocabulary", &self.vocabulary.names().join("\n")));
        write_archive(path, &entries)
    }

    /// Restores a state written by [`Trainer::save`].
    pub fn load(path: &Path) -> Result<Self> {
        let archive = read_archive(path)?;
        let (cfg, vocabulary) = stored_meta(&archive)?;
        let mut t = Trainer::new(cfg, vocabulary).map_err(|e| Error::Checkpoint(e.to_string()))?;
        restore(&t.g_vars, &archive, "generator/")?;
        restore(&t.d_vars, &archive, "discriminator/")?;
        for (prefix, vars, opt) in [("generator", &t.g_vars, &mut t.opt_g), ("discriminator", &t.d_vars, &mut t.opt_d)] {
            let named = |moments: &[Tensor]| -> Vec<(String, Tensor)> {
                vars.iter().zip(moments).map(|((n, _), m)| (n.clone(), m.shallow_clone())).collect()
            };
            restore(&named(&opt.m), &archive, &format!("optim/{prefix}/m/"))?;
            restore(&named(&opt.v), &archive, &format!("optim/{prefix}/v/"))?;
            opt.t = archive.int(&format!("optim/{prefix}/t"))?;
        }
        t.d_steps = archive.int("state/d_steps")? as u64;
        t.g_steps = archive.int("state/g_steps")? as u64;
        Ok(t)
    }
}

fn stored_meta(archive: &checkpoint::Archive) -> Result<(TrainConfig, Vocabulary)> {
    let cfg = TrainConfig::from_toml_str(&archive.text("meta/config")?)
        .map_err(|e| Error::Checkpoint(format!("stored config: {e}")))?;
    let vocab_text = archive.text("meta/vocabulary")?;
    let vocabulary = Vocabulary::new(vocab_text.lines()).map_err(|e| Error::Checkpoint(format!("stored vocabulary: {e}")))?;
    if vocabulary.len() as i64 != cfg.generator.num_attributes {
        return Err(Error::Checkpoint("stored vocabulary and generator attribute count differ".into()));
    }
    Ok((cfg, vocabulary))
}

/// Loads only the generator of a checkpoint, with its training config and
/// vocabulary.
pub fn load_generator(path: &Path) -> Result<(Generator, TrainConfig, Vocabulary)> {
    let archive = read_archive(path)?;
    let (cfg, vocabulary) = stored_meta(&archive)?;
    let generator = Generator::new(cfg.generator.clone(), Kind::Float, cfg.seed).map_err(|e| Error::Checkpoint(e.to_string()))?;
    restore(&named_parameters(generator.var_store()), &archive, "generator/")?;
    Ok((generator, cfg, vocabulary))
}

fn write_record(out: &mut Option<BufWriter<File>>, step: u64, epoch: u64, phase: &str, lr: f64, losses: &LossReport) -> Result<()> {
    if let Some(w) = out {
        let rec = MetricsRecord { step, epoch, phase: phase.to_string(), lr, losses: *losses };
        serde_json::to_writer(&mut *w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests;
