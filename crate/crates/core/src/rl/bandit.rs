use super::env::{Environment, Transition};
use crate::error::{Error, Result};

/// Deterministic contextual bandit: each sample is a context vector, each
/// action pays a fixed reward, and every episode lasts one step.
#[derive(Clone, Debug, PartialEq)]
pub struct TableBandit {
    contexts: Vec<Vec<f32>>,
    rewards: Vec<Vec<f32>>,
}

impl TableBandit {
    /// `rewards[c][a]` is paid for action `a` in context `c`.
    pub fn new(contexts: Vec<Vec<f32>>, rewards: Vec<Vec<f32>>) -> Result<Self> {
        let dim = contexts.first().map(Vec::len).unwrap_or(0);
        let actions = rewards.first().map(Vec::len).unwrap_or(0);
        if contexts.is_empty() || dim == 0 || actions == 0 || contexts.len() != rewards.len() {
            return Err(Error::invalid("bandit needs matching, non-empty context and reward tables"));
        }
        if contexts.iter().any(|c| c.len() != dim) || rewards.iter().any(|r| r.len() != actions) {
            return Err(Error::invalid("ragged bandit tables"));
        }
        if rewards.iter().flatten().chain(contexts.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("bandit tables".into()));
        }
        Ok(TableBandit { contexts, rewards })
    }

    pub fn contexts(&self) -> &[Vec<f32>] {
        &self.contexts
    }

    pub fn rewards(&self) -> &[Vec<f32>] {
        &self.rewards
    }
}

impl Environment for TableBandit {
    type Episode = usize;

    fn num_samples(&self) -> usize {
        self.contexts.len()
    }

    fn num_actions(&self) -> usize {
        self.rewards[0].len()
    }

    fn state_dim(&self) -> usize {
        self.contexts[0].len()
    }

    fn reset(&self, sample: usize) -> Result<usize> {
        if sample >= self.contexts.len() {
            return Err(Error::invalid(format!("context {sample} out of range")));
        }
        Ok(sample)
    }

    fn state<'e>(&'e self, episode: &'e usize) -> &'e [f32] {
        &self.contexts[*episode]
    }

    fn step(&self, episode: &mut usize, action: usize) -> Result<Transition> {
        let c = *episode;
        let reward = *self.rewards[c]
            .get(action)
            .ok_or_else(|| Error::invalid(format!("action {action} out of range")))?;
        Ok(Transition {
            state: self.contexts[c].clone(),
            action,
            reward,
            next_state: self.contexts[c].clone(),
            done: true,
        })
    }
}
