//! Training objectives: Wasserstein adversarial terms with gradient
//! penalty, auxiliary attribute classification, identity and
//! bidirectional (image cycle + latent) reconstruction.
//!
//! Everything here is a pure function of tensors so the same code serves
//! the training loop, gradient checks and analytic tests.

use rand::Rng;
use serde::{Deserialize, Serialize};
use tch::{Kind, Tensor};

use crate::error::{Error, Result};
use crate::model::layers::uniform_tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_bi: f64,
    pub lambda_id: f64,
    pub lambda_cls: f64,
    pub lambda_gp: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { lambda_bi: 10.0, lambda_id: 10.0, lambda_cls: 1.0, lambda_gp: 10.0 }
    }
}

impl LossWeights {
    pub fn zero() -> Self {
        LossWeights { lambda_bi: 0.0, lambda_id: 0.0, lambda_cls: 0.0, lambda_gp: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_bi, self.lambda_id, self.lambda_cls, self.lambda_gp];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::validation(format!("loss weights must be finite and non-negative: {self:?}")));
        }
        Ok(())
    }
}

/// Scalar loss terms of one step.
///
/// `adv_d` already contains `lambda_gp * gp`. Terms that do not belong to
/// the phase that produced the report are zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub adv_d: f64,
    pub adv_g: f64,
    pub gp: f64,
    pub cls_real: f64,
    pub cls_fake: f64,
    pub identity: f64,
    pub bidirectional: f64,
    pub total_g: f64,
    pub total_d: f64,
}

/// Inputs of [`total_losses`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub adv_d: f64,
    pub adv_g: f64,
    pub gp: f64,
    pub cls_real: f64,
    pub cls_fake: f64,
    pub identity: f64,
    pub bidirectional: f64,
}

fn scalar(t: &Tensor) -> f64 {
    t.to_kind(Kind::Double).double_value(&[])
}

fn all_finite(t: &Tensor) -> bool {
    t.isfinite().all().int64_value(&[]) != 0
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.size() != b.size() {
        return Err(Error::validation(format!("{what}: shape {:?} does not match {:?}", a.size(), b.size())));
    }
    Ok(())
}

/// Mean over patch locations, one score per sample.
pub fn patch_mean(src: &Tensor) -> Tensor {
    src.flatten(1, -1).mean_dim(1, false, src.kind())
}

/// Gradient penalty on random interpolates of `real` and `fake`.
///
/// Draws one `eps ~ U[0, 1)` per sample from `rng`; see
/// [`gradient_penalty_with_eps`].
pub fn gradient_penalty<F>(critic: F, real: &Tensor, fake: &Tensor, rng: &mut impl Rng) -> Result<Tensor>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    let b = real.size().first().copied().unwrap_or(0);
    let eps = uniform_tensor(rng, &[b], real.kind());
    gradient_penalty_with_eps(critic, real, fake, &eps)
}

/// `mean_b (‖∇ patch_mean(critic(x̃_b))‖₂ − 1)²` with
/// `x̃ = eps·real + (1 − eps)·fake`, `eps` holding one value per sample.
///
/// The returned tensor keeps its graph, so backpropagating it reaches the
/// critic parameters through the input gradient.
pub fn gradient_penalty_with_eps<F>(critic: F, real: &Tensor, fake: &Tensor, eps: &Tensor) -> Result<Tensor>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    same_shape(real, fake, "gradient penalty")?;
    let b = real.size()[0];
    let mut shape = vec![1i64; real.dim()];
    shape[0] = b;
    let eps = eps.to_kind(real.kind()).view(shape.as_slice());
    let interp = (&eps * real.detach() + (-&eps + 1.0) * fake.detach()).set_requires_grad(true);
    let scores = critic(&interp)?;
    let per_sample = patch_mean(&scores);
    let grad = if per_sample.requires_grad() {
        let g = Tensor::run_backward(&[per_sample.sum(per_sample.kind())], &[&interp], true, true);
        g.into_iter().next().filter(|g| g.defined()).unwrap_or_else(|| interp.zeros_like())
    } else {
        interp.zeros_like()
    };
    if !all_finite(&grad) {
        return Err(Error::Numerical { step: 0, detail: "non-finite critic gradient in gradient penalty".into() });
    }
    let norms = grad.flatten(1, -1).norm_scalaropt_dim(2.0, [1i64].as_slice(), false);
    let kind = norms.kind();
    Ok((norms - 1.0).square().mean(kind))
}

/// Critic objective `−mean(real) + mean(fake) + lambda_gp·gp`.
pub fn adv_loss_d(real_src: &Tensor, fake_src: &Tensor, gp: &Tensor, w: &LossWeights) -> Tensor {
    -patch_mean(real_src).mean(real_src.kind()) + patch_mean(fake_src).mean(fake_src.kind()) + gp * w.lambda_gp
}

/// Generator adversarial term `−mean(fake)`.
pub fn adv_loss_g(fake_src: &Tensor) -> Tensor {
    -patch_mean(fake_src).mean(fake_src.kind())
}

/// Summed-over-attributes binary cross-entropy in logit space, averaged
/// over the batch. Labels must be exactly 0 or 1.
fn attribute_bce(logits: &Tensor, labels: &Tensor) -> Result<Tensor> {
    same_shape(logits, labels, "attribute classification")?;
    let labels = labels.to_kind(logits.kind());
    let valid = labels.eq(0.0).logical_or(&labels.eq(1.0));
    if valid.all().int64_value(&[]) == 0 {
        return Err(Error::validation("attribute labels must be 0 or 1"));
    }
    // max(l, 0) − l·y + log(1 + exp(−|l|))
    let per_elem = logits.relu() - logits * &labels + (-logits.abs()).exp().log1p();
    Ok(per_elem.sum_dim_intlist(1, false, logits.kind()).mean(logits.kind()))
}

/// Classification loss of the critic on real samples against their labels.
pub fn cls_loss_real(cls_logits: &Tensor, original: &Tensor) -> Result<Tensor> {
    attribute_bce(cls_logits, original)
}

/// Classification loss of the critic on generated samples against the
/// target attributes they were generated with.
pub fn cls_loss_fake(cls_logits_on_fake: &Tensor, target: &Tensor) -> Result<Tensor> {
    attribute_bce(cls_logits_on_fake, target)
}

fn mean_l1(a: &Tensor, b: &Tensor, what: &str) -> Result<Tensor> {
    same_shape(a, b, what)?;
    Ok((a - b).abs().mean(a.kind()))
}

/// Mean absolute difference between `x` and its reconstruction under its
/// own attributes (image head only).
pub fn identity_loss(x: &Tensor, recon: &Tensor) -> Result<Tensor> {
    mean_l1(x, recon, "identity loss")
}

/// Image cycle terms on `x` and `s` plus the latent consistency term.
pub fn bidirectional_loss(
    x: &Tensor,
    s: &Tensor,
    x_hat: &Tensor,
    s_hat: &Tensor,
    z: &Tensor,
    z_of_fake: &Tensor,
) -> Result<Tensor> {
    Ok(mean_l1(x, x_hat, "bidirectional loss (image)")?
        + mean_l1(s, s_hat, "bidirectional loss (side)")?
        + mean_l1(z, z_of_fake, "bidirectional loss (latent)")?)
}

/// Generator objective as a differentiable tensor.
pub fn generator_objective(adv_g: &Tensor, bi: &Tensor, cls_fake: &Tensor, id: &Tensor, w: &LossWeights) -> Tensor {
    adv_g + bi * w.lambda_bi + cls_fake * w.lambda_cls + id * w.lambda_id
}

/// Critic objective as a differentiable tensor; `adv_d` includes the penalty.
pub fn discriminator_objective(adv_d: &Tensor, cls_real: &Tensor, w: &LossWeights) -> Tensor {
    adv_d + cls_real * w.lambda_cls
}

/// Weighted recombination of logged parts into a [`LossReport`].
pub fn total_losses(parts: &LossParts, w: &LossWeights) -> Result<LossReport> {
    let total_g = parts.adv_g + w.lambda_bi * parts.bidirectional + w.lambda_cls * parts.cls_fake + w.lambda_id * parts.identity;
    let total_d = parts.adv_d + w.lambda_cls * parts.cls_real;
    let report = LossReport {
        adv_d: parts.adv_d,
        adv_g: parts.adv_g,
        gp: parts.gp,
        cls_real: parts.cls_real,
        cls_fake: parts.cls_fake,
        identity: parts.identity,
        bidirectional: parts.bidirectional,
        total_g,
        total_d,
    };
    if !(total_g.is_finite() && total_d.is_finite()) {
        return Err(Error::Numerical { step: 0, detail: format!("non-finite loss total: {report:?}") });
    }
    Ok(report)
}

pub(crate) fn to_f64(t: &Tensor) -> f64 {
    scalar(t)
}
