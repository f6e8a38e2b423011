//! Proximal policy optimisation with generalised advantage estimation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{masked_log_distribution, ActionMask, ObservationState, PolicyNet};
use crate::error::{Error, Result};
use crate::optim::Adam;

/// One environment step as seen by the trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: ObservationState,
    pub mask: ActionMask,
    pub action: usize,
    pub log_prob: f64,
    pub reward: f64,
    pub value: f64,
    pub done: bool,
}

/// Advantages and returns; the value after a terminal step is taken as zero.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if rewards.len() != values.len() {
        return Err(Error::LengthMismatch(rewards.len(), values.len()));
    }
    if rewards.len() != dones.len() {
        return Err(Error::LengthMismatch(rewards.len(), dones.len()));
    }
    let len = rewards.len();
    let mut adv = vec![0.0; len];
    let mut next_adv = 0.0;
    let mut next_value = 0.0;
    for t in (0..len).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub clip: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub lr: f64,
    pub batch: usize,
    pub epochs_per_update: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub normalize_advantage: bool,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            lr: 5e-5,
            batch: 64,
            epochs_per_update: 5,
            value_coef: 0.5,
            entropy_coef: 0.01,
            max_grad_norm: 0.5,
            normalize_advantage: true,
            seed: 0,
        }
    }
}

/// Loss components of one minibatch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoLoss {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Clipped-surrogate + value + entropy loss over `batch` and its gradient
/// with respect to the actor parameters followed by the critic parameters.
pub fn ppo_loss_and_grad(
    net: &PolicyNet,
    batch: &[&Transition],
    advantages: &[f64],
    returns: &[f64],
    cfg: &PpoConfig,
) -> Result<(PpoLoss, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::EmptyRollout);
    }
    if batch.len() != advantages.len() {
        return Err(Error::LengthMismatch(batch.len(), advantages.len()));
    }
    if batch.len() != returns.len() {
        return Err(Error::LengthMismatch(batch.len(), returns.len()));
    }
    let b = batch.len() as f64;
    let adv: Vec<f64> = if cfg.normalize_advantage && batch.len() > 1 {
        let mean = advantages.iter().sum::<f64>() / b;
        let var = advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (b - 1.0);
        advantages.iter().map(|a| (a - mean) / (var.sqrt() + 1e-8)).collect()
    } else {
        advantages.to_vec()
    };

    let actor_len = net.actor.params().len();
    let mut grad = vec![0.0; actor_len + net.critic.params().len()];
    let (g_actor, g_critic) = grad.split_at_mut(actor_len);
    let mut out = PpoLoss::default();

    for (i, tr) in batch.iter().enumerate() {
        if !tr.mask.is_enabled(tr.action) {
            return Err(Error::DisabledAction(tr.action));
        }
        let input = tr.state.to_input();
        let acts = net.actor.forward(&input);
        let logp = masked_log_distribution(acts.output(), &tr.mask)?;
        let new_lp = logp[tr.action];
        let ratio = (new_lp - tr.log_prob).exp();
        let clipped = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip);
        let a = adv[i];
        let surr = (ratio * a).min(clipped * a);
        out.policy -= surr / b;
        out.approx_kl += ((ratio - 1.0) - (new_lp - tr.log_prob)) / b;
        if (ratio - 1.0).abs() > cfg.clip {
            out.clip_fraction += 1.0 / b;
        }

        let probs: Vec<f64> = logp.iter().map(|l| if l.is_finite() { l.exp() } else { 0.0 }).collect();
        let entropy: f64 = -probs
            .iter()
            .zip(&logp)
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, l)| p * l)
            .sum::<f64>();
        out.entropy += entropy / b;

        // d loss / d log pi(a): only the unclipped branch carries gradient
        let d_logp = if ratio * a <= clipped * a { -ratio * a / b } else { 0.0 };
        let mut d_logits = vec![0.0; probs.len()];
        for (j, &p) in probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let onehot = if j == tr.action { 1.0 } else { 0.0 };
            d_logits[j] = d_logp * (onehot - p) + cfg.entropy_coef / b * p * (logp[j] + entropy);
        }
        net.actor.backward(&acts, &d_logits, g_actor);

        let cacts = net.critic.forward(&input);
        let v = cacts.output()[0];
        out.value += (v - returns[i]).powi(2) / b;
        let d_v = cfg.value_coef * 2.0 * (v - returns[i]) / b;
        net.critic.backward(&cacts, &[d_v], g_critic);
    }
    out.total = out.policy + cfg.value_coef * out.value - cfg.entropy_coef * out.entropy;
    Ok((out, grad))
}

/// Per-update diagnostics, one row of the training log.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub mean_reward: f64,
    pub episodes: usize,
    pub steps: usize,
}

impl UpdateStats {
    pub const CSV_HEADER: &'static str =
        "update,policy_loss,value_loss,entropy,approx_kl,clip_fraction,mean_reward,episodes,steps";

    pub fn csv_row(&self, update: usize) -> String {
        format!(
            "{update},{},{},{},{},{},{},{},{}",
            self.policy_loss,
            self.value_loss,
            self.entropy,
            self.approx_kl,
            self.clip_fraction,
            self.mean_reward,
            self.episodes,
            self.steps
        )
    }
}

/// PPO updater. Owns the optimizer state so moments persist across updates.
#[derive(Debug, Clone)]
pub struct Ppo {
    cfg: PpoConfig,
    adam: Adam,
    rng: ChaCha8Rng,
}

impl Ppo {
    pub fn new(net: &PolicyNet, cfg: PpoConfig) -> Self {
        let len = net.actor.params().len() + net.critic.params().len();
        Self {
            adam: Adam::new(len, cfg.lr).with_eps(1e-5),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
        }
    }

    pub fn config(&self) -> &PpoConfig {
        &self.cfg
    }

    /// Runs `epochs_per_update` passes of shuffled minibatch steps over
    /// `transitions`, which must consist of complete episodes.
    pub fn update(&mut self, net: &mut PolicyNet, transitions: &[Transition]) -> Result<UpdateStats> {
        let last = transitions.last().ok_or(Error::EmptyRollout)?;
        if !last.done {
            return Err(Error::IncompleteEpisode);
        }
        let rewards: Vec<f64> = transitions.iter().map(|t| t.reward).collect();
        let values: Vec<f64> = transitions.iter().map(|t| t.value).collect();
        let dones: Vec<bool> = transitions.iter().map(|t| t.done).collect();
        let (adv, ret) = gae(&rewards, &values, &dones, self.cfg.gamma, self.cfg.gae_lambda)?;

        let actor_len = net.actor.params().len();
        let mut params: Vec<f64> = net.actor.params().iter().chain(net.critic.params()).copied().collect();
        let mut order: Vec<usize> = (0..transitions.len()).collect();
        let mut stats = UpdateStats::default();
        let mut batches = 0usize;

        for _ in 0..self.cfg.epochs_per_update {
            order.shuffle(&mut self.rng);
            for chunk in order.chunks(self.cfg.batch.max(1)) {
                let batch: Vec<&Transition> = chunk.iter().map(|&i| &transitions[i]).collect();
                let a: Vec<f64> = chunk.iter().map(|&i| adv[i]).collect();
                let r: Vec<f64> = chunk.iter().map(|&i| ret[i]).collect();
                let (loss, mut grad) = ppo_loss_and_grad(net, &batch, &a, &r, &self.cfg)?;
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if self.cfg.max_grad_norm > 0.0 && norm > self.cfg.max_grad_norm {
                    let s = self.cfg.max_grad_norm / (norm + 1e-6);
                    grad.iter_mut().for_each(|g| *g *= s);
                }
                self.adam.step(&mut params, &grad);
                net.actor.params_mut().copy_from_slice(&params[..actor_len]);
                net.critic.params_mut().copy_from_slice(&params[actor_len..]);
                stats.policy_loss += loss.policy;
                stats.value_loss += loss.value;
                stats.entropy += loss.entropy;
                stats.approx_kl += loss.approx_kl;
                stats.clip_fraction += loss.clip_fraction;
                batches += 1;
            }
        }
        let nb = batches.max(1) as f64;
        stats.policy_loss /= nb;
        stats.value_loss /= nb;
        stats.entropy /= nb;
        stats.approx_kl /= nb;
        stats.clip_fraction /= nb;
        stats.steps = transitions.len();
        stats.episodes = dones.iter().filter(|&&d| d).count();
        stats.mean_reward = rewards.iter().sum::<f64>() / stats.episodes.max(1) as f64;
        Ok(stats)
    }
}
