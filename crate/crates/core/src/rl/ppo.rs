use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::env::Transition;
use super::normalizer::StateNormalizer;
use crate::error::{Error, Result};
use crate::nn::{mlp, softmax, Adam, AdamConfig, Mode, Network, Tensor};
use crate::rng::{self, streams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub clip: f32,
    pub entropy_coef: f32,
    /// Transitions collected before each update.
    pub rollout_size: usize,
    pub epochs: usize,
    pub minibatch_size: usize,
    /// Discount for returns of multi-step episodes.
    pub gamma: f32,
    pub hidden: Vec<usize>,
    pub adam: AdamConfig,
    pub zero_init_head: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            clip: 0.2,
            entropy_coef: 0.01,
            rollout_size: 256,
            epochs: 4,
            minibatch_size: 64,
            gamma: 0.5,
            hidden: vec![64],
            adam: AdamConfig::default(),
            zero_init_head: true,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(Error::invalid(format!("clip {} outside (0, 1)", self.clip)));
        }
        if self.entropy_coef < 0.0 || !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::invalid("entropy weight must be >= 0 and gamma in [0, 1]"));
        }
        if self.rollout_size == 0 || self.epochs == 0 || self.minibatch_size == 0 {
            return Err(Error::invalid("rollout size, epochs and minibatch size must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PpoLosses {
    /// Negated clipped surrogate plus entropy penalty, last epoch mean.
    pub actor: f64,
    pub critic: f64,
    pub entropy: f64,
}

/// `min(ratio * adv, clamp(ratio, 1 - clip, 1 + clip) * adv)`.
pub fn ppo_clip_objective(ratio: f32, advantage: f32, clip: f32) -> f32 {
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip);
    (ratio * advantage).min(clipped * advantage)
}

/// Discounted reward-to-go, restarting at every `done`.
pub fn returns_to_go(rollout: &[Transition], gamma: f32) -> Vec<f32> {
    let mut out = vec![0.0; rollout.len()];
    let mut acc = 0.0f64;
    for (i, t) in rollout.iter().enumerate().rev() {
        if t.done {
            acc = 0.0;
        }
        acc = t.reward as f64 + gamma as f64 * acc;
        out[i] = acc as f32;
    }
    out
}

/// Zero mean, unit variance. A constant batch is only centred.
pub fn normalize_advantages(adv: &mut [f32]) {
    if adv.len() < 2 {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().map(|&a| a as f64).sum::<f64>() / n;
    let var = adv.iter().map(|&a| (a as f64 - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in adv.iter_mut() {
        let c = *a as f64 - mean;
        *a = if std > 1e-8 { (c / std) as f32 } else { c as f32 };
    }
}

fn log_softmax(row: &[f32]) -> Vec<f64> {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let lse = max + row.iter().map(|&z| (z as f64 - max).exp()).sum::<f64>().ln();
    row.iter().map(|&z| z as f64 - lse).collect()
}

/// Actor-critic agent trained with the clipped surrogate objective.
#[derive(Clone, Debug)]
pub struct PpoAgent {
    pub(crate) config: PpoConfig,
    pub(crate) actor: Network,
    pub(crate) critic: Network,
    old_actor: Network,
    actor_adam: Adam,
    critic_adam: Adam,
    pub(crate) updates: u64,
    pub(crate) seed: u64,
    pub(crate) normalizer: StateNormalizer,
}

impl PpoAgent {
    pub fn new(state_dim: usize, actions: usize, config: PpoConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if state_dim == 0 || actions == 0 {
            return Err(Error::invalid("state and action counts must be positive"));
        }
        let mut r = rng::rng_for(seed, streams::INIT, 0);
        let actor = mlp(state_dim, &config.hidden, actions, config.zero_init_head, &mut r);
        let critic = mlp(state_dim, &config.hidden, 1, false, &mut r);
        Ok(Self::from_parts(config, actor, critic, seed))
    }

    pub(crate) fn from_parts(config: PpoConfig, actor: Network, critic: Network, seed: u64) -> Self {
        let dim = actor.input_shape()[0];
        PpoAgent {
            old_actor: actor.clone(),
            actor_adam: Adam::new(config.adam),
            critic_adam: Adam::new(config.adam),
            actor,
            critic,
            config,
            updates: 0,
            seed,
            normalizer: StateNormalizer::identity(dim),
        }
    }

    pub fn config(&self) -> &PpoConfig {
        &self.config
    }

    pub fn actor(&self) -> &Network {
        &self.actor
    }

    pub fn critic(&self) -> &Network {
        &self.critic
    }

    pub fn old_actor(&self) -> &Network {
        &self.old_actor
    }

    pub fn normalizer(&self) -> &StateNormalizer {
        &self.normalizer
    }

    pub fn set_normalizer(&mut self, normalizer: StateNormalizer) -> Result<()> {
        if normalizer.dim() != self.state_dim() {
            return Err(Error::invalid(format!(
                "normalizer has dimension {}, agent expects {}",
                normalizer.dim(),
                self.state_dim()
            )));
        }
        self.normalizer = normalizer;
        Ok(())
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn state_dim(&self) -> usize {
        self.actor.input_shape()[0]
    }

    pub fn num_actions(&self) -> usize {
        self.actor.output_shape()[0]
    }

    fn states_tensor<'s>(&self, states: impl ExactSizeIterator<Item = &'s [f32]>) -> Result<Tensor> {
        let dim = self.state_dim();
        let n = states.len();
        let mut data = Vec::with_capacity(n * dim);
        for s in states {
            if s.len() != dim {
                return Err(Error::invalid(format!("state has length {}, agent expects {dim}", s.len())));
            }
            self.normalizer.apply_into(s, &mut data);
        }
        Tensor::new(vec![n, dim], data)
    }

    /// π(·|s) from the current actor.
    pub fn policy(&self, state: &[f32]) -> Result<Vec<f32>> {
        let logits = self.actor.infer(&self.states_tensor(std::iter::once(state))?)?;
        if !logits.is_finite() {
            return Err(Error::NonFinite("policy logits".into()));
        }
        Ok(softmax(logits.data()))
    }

    pub fn value(&self, state: &[f32]) -> Result<f32> {
        Ok(self.critic.infer(&self.states_tensor(std::iter::once(state))?)?.data()[0])
    }

    pub fn sample_action<R: Rng>(&self, state: &[f32], rng: &mut R) -> Result<usize> {
        let p = self.policy(state)?;
        let u: f32 = rng.random();
        let mut acc = 0.0;
        for (i, &pi) in p.iter().enumerate() {
            acc += pi;
            if u < acc {
                return Ok(i);
            }
        }
        Ok(p.len() - 1)
    }

    /// `R_t - V(s_t)` with the critic as it stands before the update,
    /// normalized when the batch has more than one entry.
    pub fn ppo_advantage(&self, rollout: &[Transition]) -> Result<Vec<f32>> {
        let mut adv = self.raw_advantages(rollout)?;
        normalize_advantages(&mut adv);
        Ok(adv)
    }

    fn raw_advantages(&self, rollout: &[Transition]) -> Result<Vec<f32>> {
        if rollout.is_empty() {
            return Err(Error::invalid("empty rollout"));
        }
        let returns = returns_to_go(rollout, self.config.gamma);
        let v = self.critic.infer(&self.states_tensor(rollout.iter().map(|t| t.state.as_slice()))?)?;
        Ok(returns.iter().zip(v.data()).map(|(r, v)| r - v).collect())
    }

    /// Several epochs of minibatch ascent on the clipped surrogate (plus
    /// entropy bonus) for the actor and descent on squared value error for the
    /// critic, then re-snapshots the old policy.
    pub fn ppo_update(&mut self, rollout: &[Transition]) -> Result<PpoLosses> {
        for t in rollout {
            t.validate(self.state_dim(), self.num_actions())?;
        }
        let adv = self.ppo_advantage(rollout)?;
        let returns = returns_to_go(rollout, self.config.gamma);
        let all_states = self.states_tensor(rollout.iter().map(|t| t.state.as_slice()))?;
        let old_logits = self.old_actor.infer(&all_states)?;
        let old_logp: Vec<f64> = rollout
            .iter()
            .enumerate()
            .map(|(i, t)| log_softmax(old_logits.row(i))[t.action])
            .collect();

        let actions = self.num_actions();
        let (clip, c_ent) = (self.config.clip as f64, self.config.entropy_coef as f64);
        let mut order: Vec<usize> = (0..rollout.len()).collect();
        let mut losses = PpoLosses::default();
        for epoch in 0..self.config.epochs {
            order.shuffle(&mut rng::rng_for(
                self.seed,
                streams::MINIBATCH,
                self.updates * self.config.epochs as u64 + epoch as u64,
            ));
            let mut epoch_losses = PpoLosses::default();
            for mb in order.chunks(self.config.minibatch_size) {
                let m = mb.len() as f64;
                let x = self.states_tensor(mb.iter().map(|&i| rollout[i].state.as_slice()))?;

                let (logits, cache) = self.actor.forward(&x, Mode::Train)?;
                let mut g = Tensor::zeros(logits.shape());
                for (row, &i) in mb.iter().enumerate() {
                    let a = rollout[i].action;
                    let logp = log_softmax(logits.row(row));
                    let p: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
                    let entropy = -p.iter().zip(&logp).map(|(p, l)| p * l).sum::<f64>();
                    let ratio = (logp[a] - old_logp[i]).exp();
                    let adv_i = adv[i] as f64;
                    let unclipped = ratio * adv_i;
                    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * adv_i;
                    let active = unclipped <= clipped;
                    epoch_losses.actor += (-unclipped.min(clipped) - c_ent * entropy) / m;
                    epoch_losses.entropy += entropy / m;
                    let grow = &mut g.data_mut()[row * actions..(row + 1) * actions];
                    for j in 0..actions {
                        let delta = if j == a { 1.0 } else { 0.0 };
                        let d_surr = if active { adv_i * ratio * (delta - p[j]) } else { 0.0 };
                        let d_ent = -p[j] * (logp[j] + entropy);
                        grow[j] = ((-d_surr - c_ent * d_ent) / m) as f32;
                    }
                }
                self.actor.zero_grad();
                self.actor.backward(cache, &g)?;
                self.actor_adam.step(&mut self.actor)?;

                let (v, cache) = self.critic.forward(&x, Mode::Train)?;
                let mut gv = Tensor::zeros(v.shape());
                for (row, &i) in mb.iter().enumerate() {
                    let diff = v.data()[row] as f64 - returns[i] as f64;
                    epoch_losses.critic += diff * diff / m;
                    gv.data_mut()[row] = (2.0 * diff / m) as f32;
                }
                self.critic.zero_grad();
                self.critic.backward(cache, &gv)?;
                self.critic_adam.step(&mut self.critic)?;
            }
            let batches = rollout.len().div_ceil(self.config.minibatch_size) as f64;
            losses = PpoLosses {
                actor: epoch_losses.actor / batches,
                critic: epoch_losses.critic / batches,
                entropy: epoch_losses.entropy / batches,
            };
        }
        self.old_actor.copy_from(&self.actor);
        self.updates += 1;
        Ok(losses)
    }
}
