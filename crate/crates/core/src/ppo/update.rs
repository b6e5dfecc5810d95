use ndarray::{Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::buffer::TransitionBatch;
use super::optim::{clip_grad_norm, Adam};
use crate::error::{Error, Result};
use crate::policy::{squash_correction, PolicyNetwork, TanhNormal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub clip: f64,
    pub minibatch: usize,
    pub epochs: usize,
    /// Remaining minibatch steps of an update phase are skipped once the
    /// estimated KL divergence exceeds this. `None` disables the check.
    pub target_kl: Option<f64>,
    pub learning_rate: f64,
    /// Linear decay of the learning rate to zero over the step budget.
    pub anneal_lr: bool,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub adam_eps: f64,
    pub normalize_advantages: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            minibatch: 128,
            epochs: 10,
            target_kl: Some(0.01),
            learning_rate: 3e-4,
            anneal_lr: true,
            value_coef: 0.5,
            entropy_coef: 0.0,
            max_grad_norm: 0.5,
            adam_eps: 1e-5,
            normalize_advantages: true,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip > 0.0) || self.minibatch == 0 || !(self.learning_rate >= 0.0) {
            return Err(Error::Config("ppo: clip, minibatch and learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Clipped surrogate bound `g(eps, A)`.
pub fn clip_bound(eps: f64, adv: f64) -> f64 {
    if adv >= 0.0 {
        (1.0 + eps) * adv
    } else {
        (1.0 - eps) * adv
    }
}

/// Per-sample objective `min(ratio * A, g(eps, A))`.
pub fn clipped_objective(ratio: f64, adv: f64, eps: f64) -> f64 {
    (ratio * adv).min(clip_bound(eps, adv))
}

/// One minibatch of training data.
#[derive(Debug, Clone, Copy)]
pub struct Minibatch<'a> {
    pub obs: ArrayView2<'a, f64>,
    pub pre_squash: ArrayView2<'a, f64>,
    pub old_log_probs: &'a [f64],
    pub advantages: &'a [f64],
    pub returns: &'a [f64],
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Loss `-mean(min(ratio A, g)) + value_coef * mean((V - R)^2) - entropy_coef * H`;
/// gradients are accumulated into `grads` when given.
pub fn surrogate_loss(
    net: &PolicyNetwork,
    mb: &Minibatch,
    cfg: &PpoConfig,
    grads: Option<&mut [f64]>,
) -> Result<LossParts> {
    let n = mb.obs.nrows();
    let act = net.config().action_dim;
    let fwd = net.forward(mb.obs)?;
    let log_std = net.log_std().to_vec();
    let inv_var: Vec<f64> = log_std.iter().map(|l| (-2.0 * l).exp()).collect();
    let inv_n = 1.0 / n as f64;

    let mut d_mean = Array2::zeros((n, act));
    let mut d_log_std = vec![0.0; act];
    let mut d_value = Array1::zeros(n);
    let mut parts = LossParts::default();
    let mut clipped = 0usize;
    for i in 0..n {
        let mean = fwd.mean.row(i);
        let u = mb.pre_squash.row(i);
        let u = u.as_slice().expect("row-major");
        let dist = TanhNormal::new(mean.as_slice().expect("row-major"), &log_std);
        let logp = dist.gaussian_log_prob(u) - squash_correction(u);
        let log_ratio = logp - mb.old_log_probs[i];
        let ratio = log_ratio.exp();
        let adv = mb.advantages[i];
        let unclipped = ratio * adv;
        let bound = clip_bound(cfg.clip, adv);
        parts.policy -= unclipped.min(bound) * inv_n;
        parts.approx_kl -= log_ratio * inv_n;
        if (ratio - 1.0).abs() > cfg.clip {
            clipped += 1;
        }
        if unclipped <= bound {
            // d(-ratio A / n)/d logp = -ratio A / n.
            let g = -unclipped * inv_n;
            for d in 0..act {
                let z = u[d] - mean[d];
                d_mean[[i, d]] = g * z * inv_var[d];
                d_log_std[d] += g * (z * z * inv_var[d] - 1.0);
            }
        }
        let err = fwd.value[i] - mb.returns[i];
        parts.value += err * err * inv_n;
        d_value[i] = cfg.value_coef * 2.0 * err * inv_n;
    }
    parts.entropy = TanhNormal::new(&log_std, &log_std).gaussian_entropy();
    for g in &mut d_log_std {
        *g -= cfg.entropy_coef;
    }
    parts.total = parts.policy + cfg.value_coef * parts.value - cfg.entropy_coef * parts.entropy;
    parts.clip_fraction = clipped as f64 * inv_n;
    if let Some(grads) = grads {
        net.backward(&fwd.cache, d_mean.view(), &d_log_std, d_value.view(), grads);
    }
    Ok(parts)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateReport {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    /// Gradient steps applied.
    pub steps: usize,
    pub epochs: usize,
    pub early_stopped: bool,
    /// Set when a non-finite loss aborted the phase and weights were restored.
    pub aborted: bool,
}

fn standardize(x: &mut [f64]) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let inv = 1.0 / (var.sqrt() + 1e-8);
    x.iter_mut().for_each(|v| *v = (*v - mean) * inv);
}

/// One PPO update phase over `batch`. Minibatches are drawn from a shuffled
/// permutation each epoch; a trailing partial minibatch is dropped.
#[allow(clippy::too_many_arguments)]
pub fn ppo_update<R: Rng + ?Sized>(
    net: &mut PolicyNetwork,
    adam: &mut Adam,
    batch: &TransitionBatch,
    advantages: &[f64],
    returns: &[f64],
    cfg: &PpoConfig,
    lr: f64,
    rng: &mut R,
) -> Result<UpdateReport> {
    let len = batch.len();
    let mb_size = cfg.minibatch.min(len);
    let n_mb = if mb_size == 0 { 0 } else { len / mb_size };
    let (dim, act) = (batch.obs_dim, batch.action_dim);
    let saved_params = net.params().to_vec();
    let saved_adam = adam.clone();
    let mut report = UpdateReport::default();
    let mut index: Vec<usize> = (0..len).collect();
    let mut grads = vec![0.0; net.num_params()];
    let mut obs = Array2::zeros((mb_size, dim));
    let mut pre = Array2::zeros((mb_size, act));
    let mut old = vec![0.0; mb_size];
    let mut adv = vec![0.0; mb_size];
    let mut ret = vec![0.0; mb_size];
    let mut sums = LossParts::default();
    let mut evaluated = 0usize;

    'epochs: for _ in 0..cfg.epochs {
        index.shuffle(rng);
        for m in 0..n_mb {
            for (r, &k) in index[m * mb_size..(m + 1) * mb_size].iter().enumerate() {
                obs.row_mut(r).assign(&ndarray::ArrayView1::from(batch.obs_row(k)));
                for d in 0..act {
                    pre[[r, d]] = batch.pre_squash[k * act + d];
                }
                old[r] = batch.log_probs[k];
                adv[r] = advantages[k];
                ret[r] = returns[k];
            }
            if cfg.normalize_advantages {
                standardize(&mut adv);
            }
            let mb = Minibatch {
                obs: obs.view(),
                pre_squash: pre.view(),
                old_log_probs: &old,
                advantages: &adv,
                returns: &ret,
            };
            grads.fill(0.0);
            let parts = surrogate_loss(net, &mb, cfg, Some(&mut grads))?;
            if !parts.total.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                log::error!("non-finite PPO loss; restoring pre-update weights");
                net.params_mut().copy_from_slice(&saved_params);
                *adam = saved_adam;
                report.aborted = true;
                return Ok(report);
            }
            evaluated += 1;
            sums.policy += parts.policy;
            sums.value += parts.value;
            sums.entropy += parts.entropy;
            sums.clip_fraction += parts.clip_fraction;
            report.approx_kl = parts.approx_kl;
            if cfg.target_kl.is_some_and(|t| parts.approx_kl > t) {
                report.early_stopped = true;
                break 'epochs;
            }
            clip_grad_norm(&mut grads, cfg.max_grad_norm);
            adam.update(net.params_mut(), &grads, lr);
            report.steps += 1;
        }
        report.epochs += 1;
    }
    if evaluated > 0 {
        let inv = 1.0 / evaluated as f64;
        report.policy_loss = sums.policy * inv;
        report.value_loss = sums.value * inv;
        report.entropy = sums.entropy * inv;
        report.clip_fraction = sums.clip_fraction * inv;
    }
    Ok(report)
}
