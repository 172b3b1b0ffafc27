use rand::Rng;
use serde::{Deserialize, Serialize};

use super::env::Transition;
use super::normalizer::StateNormalizer;
use super::replay::ReplayBuffer;
use crate::error::{Error, Result};
use crate::nn::{argmax, mlp, Adam, AdamConfig, Mode, Network, Tensor};
use crate::rng::{self, streams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnConfig {
    pub gamma: f32,
    pub hidden: Vec<usize>,
    pub adam: AdamConfig,
    pub replay_capacity: usize,
    pub batch_size: usize,
    /// Updates between copies of the online network into the target network.
    pub target_refresh: u64,
    pub epsilon_start: f32,
    pub epsilon_end: f32,
    /// Fraction of training over which epsilon decays linearly.
    pub epsilon_decay_fraction: f32,
    pub zero_init_head: bool,
}

impl Default for DqnConfig {
    fn default() -> Self {
        DqnConfig {
            gamma: 0.5,
            hidden: vec![64],
            adam: AdamConfig::default(),
            replay_capacity: 10_000,
            batch_size: 64,
            target_refresh: 100,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.5,
            zero_init_head: true,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::invalid(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if self.batch_size == 0 || self.replay_capacity == 0 || self.target_refresh == 0 {
            return Err(Error::invalid("batch size, replay capacity and target refresh must be positive"));
        }
        let eps_ok = |e: f32| (0.0..=1.0).contains(&e);
        if !eps_ok(self.epsilon_start) || !eps_ok(self.epsilon_end) || !(0.0..=1.0).contains(&self.epsilon_decay_fraction) {
            return Err(Error::invalid("epsilon schedule values must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Q-network agent with a frozen target copy and uniform experience replay.
#[derive(Clone, Debug)]
pub struct DqnAgent {
    pub(crate) config: DqnConfig,
    pub(crate) online: Network,
    pub(crate) target: Network,
    pub(crate) replay: ReplayBuffer,
    adam: Adam,
    pub(crate) updates: u64,
    pub(crate) seed: u64,
    pub(crate) normalizer: StateNormalizer,
}

impl DqnAgent {
    pub fn new(state_dim: usize, actions: usize, config: DqnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if state_dim == 0 || actions == 0 {
            return Err(Error::invalid("state and action counts must be positive"));
        }
        let mut r = rng::rng_for(seed, streams::INIT, 0);
        let online = mlp(state_dim, &config.hidden, actions, config.zero_init_head, &mut r);
        Ok(Self::from_parts(config, online, seed))
    }

    pub(crate) fn from_parts(config: DqnConfig, online: Network, seed: u64) -> Self {
        let dim = online.input_shape()[0];
        DqnAgent {
            target: online.clone(),
            replay: ReplayBuffer::new(config.replay_capacity).expect("validated capacity"),
            adam: Adam::new(config.adam),
            online,
            config,
            updates: 0,
            seed,
            normalizer: StateNormalizer::identity(dim),
        }
    }

    pub fn config(&self) -> &DqnConfig {
        &self.config
    }

    pub fn online(&self) -> &Network {
        &self.online
    }

    pub fn target(&self) -> &Network {
        &self.target
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
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
        self.online.input_shape()[0]
    }

    pub fn num_actions(&self) -> usize {
        self.online.output_shape()[0]
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

    /// Q(s, ·) from the online network.
    pub fn q_values(&self, state: &[f32]) -> Result<Vec<f32>> {
        let x = self.states_tensor(std::iter::once(state))?;
        let q = self.online.infer(&x)?;
        if !q.is_finite() {
            return Err(Error::NonFinite("q-values".into()));
        }
        Ok(q.into_data())
    }

    /// Linear decay from `epsilon_start` to `epsilon_end` over the configured
    /// fraction of `total` episodes, flat afterwards.
    pub fn epsilon(&self, episode: usize, total: usize) -> f32 {
        let c = &self.config;
        let span = c.epsilon_decay_fraction as f64 * total as f64;
        let frac = if span <= 0.0 { 1.0 } else { (episode as f64 / span).min(1.0) };
        (c.epsilon_start as f64 + (c.epsilon_end as f64 - c.epsilon_start as f64) * frac) as f32
    }

    pub fn act_epsilon_greedy<R: Rng>(&self, state: &[f32], epsilon: f32, rng: &mut R) -> Result<usize> {
        let explore = rng.random::<f32>() < epsilon;
        if explore {
            Ok(rng.random_range(0..self.num_actions()))
        } else {
            Ok(argmax(&self.q_values(state)?))
        }
    }

    /// `r` for terminal transitions, otherwise `r + gamma * max_a' Q_target(s', a')`.
    pub fn dqn_target(&self, t: &Transition) -> Result<f32> {
        Ok(self.targets(std::slice::from_ref(t))?[0])
    }

    fn targets(&self, batch: &[Transition]) -> Result<Vec<f32>> {
        for t in batch {
            t.validate(self.state_dim(), self.num_actions())?;
        }
        let x = self.states_tensor(batch.iter().map(|t| t.next_state.as_slice()))?;
        let q_next = self.target.infer(&x)?;
        Ok(batch
            .iter()
            .enumerate()
            .map(|(i, t)| {
                if t.done {
                    t.reward
                } else {
                    let best = q_next.row(i).iter().copied().fold(f32::NEG_INFINITY, f32::max);
                    t.reward + self.config.gamma * best
                }
            })
            .collect())
    }

    /// One Adam step on the mean squared TD error of `batch`; returns the loss
    /// before the step. Refreshes the target network every `target_refresh`
    /// updates.
    pub fn dqn_update(&mut self, batch: &[Transition]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::invalid("dqn update needs a non-empty batch"));
        }
        let y = self.targets(batch)?;
        let x = self.states_tensor(batch.iter().map(|t| t.state.as_slice()))?;
        let (q, cache) = self.online.forward(&x, Mode::Train)?;
        let n = batch.len();
        let mut grad = Tensor::zeros(q.shape());
        let mut loss = 0.0f64;
        let actions = self.num_actions();
        for (i, t) in batch.iter().enumerate() {
            let diff = q.row(i)[t.action] as f64 - y[i] as f64;
            loss += diff * diff;
            grad.data_mut()[i * actions + t.action] = (2.0 * diff / n as f64) as f32;
        }
        self.online.zero_grad();
        self.online.backward(cache, &grad)?;
        self.adam.step(&mut self.online)?;
        self.updates += 1;
        if self.updates.is_multiple_of(self.config.target_refresh) {
            self.target.copy_from(&self.online);
        }
        Ok(loss / n as f64)
    }

    pub fn remember(&mut self, t: Transition) -> Result<()> {
        t.validate(self.state_dim(), self.num_actions())?;
        self.replay.push(t);
        Ok(())
    }

    /// Samples a minibatch and updates once the buffer holds a full batch.
    pub fn learn_from_replay(&mut self) -> Result<Option<f64>> {
        if self.replay.len() < self.config.batch_size {
            return Ok(None);
        }
        let mut r = rng::rng_for(self.seed, streams::REPLAY, self.updates);
        let batch = self.replay.sample(self.config.batch_size, &mut r)?;
        self.dqn_update(&batch).map(Some)
    }
}
