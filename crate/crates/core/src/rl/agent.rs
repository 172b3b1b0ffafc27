use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::dqn::{DqnAgent, DqnConfig};
use super::normalizer::StateNormalizer;
use super::ppo::{PpoAgent, PpoConfig};
use crate::error::{Error, Result};
use crate::nn::Checkpoint;

/// One score per bank action for a single state; higher is better.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionScores {
    values: Vec<f32>,
}

impl ActionScores {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("action scores are empty"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("action scores".into()));
        }
        Ok(ActionScores { values })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Anything that ranks bank actions for a feature map.
pub trait ActionScorer: Sync {
    fn num_actions(&self) -> usize;

    fn action_scores(&self, state: &[f32]) -> Result<ActionScores>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Dqn,
    Ppo,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Dqn => "dqn",
            AgentKind::Ppo => "ppo",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dqn" => Ok(AgentKind::Dqn),
            "ppo" => Ok(AgentKind::Ppo),
            other => Err(Error::invalid(format!("unknown agent kind `{other}` (expected dqn or ppo)"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub dqn: DqnConfig,
    pub ppo: PpoConfig,
}

#[derive(Clone, Debug)]
pub enum Agent {
    Dqn(DqnAgent),
    Ppo(PpoAgent),
}

impl Agent {
    pub fn new(kind: AgentKind, state_dim: usize, actions: usize, config: &AgentConfig, seed: u64) -> Result<Self> {
        Ok(match kind {
            AgentKind::Dqn => Agent::Dqn(DqnAgent::new(state_dim, actions, config.dqn.clone(), seed)?),
            AgentKind::Ppo => Agent::Ppo(PpoAgent::new(state_dim, actions, config.ppo.clone(), seed)?),
        })
    }

    pub fn kind(&self) -> AgentKind {
        match self {
            Agent::Dqn(_) => AgentKind::Dqn,
            Agent::Ppo(_) => AgentKind::Ppo,
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            Agent::Dqn(a) => a.state_dim(),
            Agent::Ppo(a) => a.state_dim(),
        }
    }

    pub fn updates(&self) -> u64 {
        match self {
            Agent::Dqn(a) => a.updates(),
            Agent::Ppo(a) => a.updates(),
        }
    }

    pub fn normalizer(&self) -> &StateNormalizer {
        match self {
            Agent::Dqn(a) => a.normalizer(),
            Agent::Ppo(a) => a.normalizer(),
        }
    }

    pub fn set_normalizer(&mut self, normalizer: StateNormalizer) -> Result<()> {
        match self {
            Agent::Dqn(a) => a.set_normalizer(normalizer),
            Agent::Ppo(a) => a.set_normalizer(normalizer),
        }
    }

    /// Inference checkpoint: networks plus configuration. Optimizer moments
    /// and the replay buffer are not stored.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let (step, seed, config, networks) = match self {
            Agent::Dqn(a) => (
                a.updates,
                a.seed,
                serde_json::to_string(&a.config),
                vec![a.online.clone(), a.target.clone(), a.normalizer.to_network()],
            ),
            Agent::Ppo(a) => (
                a.updates,
                a.seed,
                serde_json::to_string(&a.config),
                vec![a.actor.clone(), a.critic.clone(), a.normalizer.to_network()],
            ),
        };
        Checkpoint::new(self.kind().name(), step, networks)
            .with_meta("seed", seed)
            .with_meta("config", config.expect("agent configs serialize"))
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let kind: AgentKind = ck.kind.parse()?;
        let seed: u64 = ck.meta_parse("seed")?;
        let raw = ck.meta("config").ok_or_else(|| Error::invalid("agent checkpoint has no config"))?;
        let bad = |e: serde_json::Error| Error::invalid(format!("agent config: {e}"));
        if ck.networks.len() != 3 {
            return Err(Error::invalid(format!("{kind} checkpoint holds {} networks, expected 3", ck.networks.len())));
        }
        let [a, b] = [ck.networks[0].clone(), ck.networks[1].clone()];
        let normalizer = StateNormalizer::from_network(&ck.networks[2])?;
        let mut agent = match kind {
            AgentKind::Dqn => {
                let config: DqnConfig = serde_json::from_str(raw).map_err(bad)?;
                let mut agent = DqnAgent::from_parts(config, a, seed);
                agent.target = b;
                agent.updates = ck.step;
                Agent::Dqn(agent)
            }
            AgentKind::Ppo => {
                let config: PpoConfig = serde_json::from_str(raw).map_err(bad)?;
                let mut agent = PpoAgent::from_parts(config, a, b, seed);
                agent.updates = ck.step;
                Agent::Ppo(agent)
            }
        };
        agent.set_normalizer(normalizer)?;
        Ok(agent)
    }
}

impl ActionScorer for DqnAgent {
    fn num_actions(&self) -> usize {
        DqnAgent::num_actions(self)
    }

    fn action_scores(&self, state: &[f32]) -> Result<ActionScores> {
        ActionScores::new(self.q_values(state)?)
    }
}

impl ActionScorer for PpoAgent {
    fn num_actions(&self) -> usize {
        PpoAgent::num_actions(self)
    }

    fn action_scores(&self, state: &[f32]) -> Result<ActionScores> {
        ActionScores::new(self.policy(state)?)
    }
}

impl ActionScorer for Agent {
    fn num_actions(&self) -> usize {
        match self {
            Agent::Dqn(a) => ActionScorer::num_actions(a),
            Agent::Ppo(a) => ActionScorer::num_actions(a),
        }
    }

    fn action_scores(&self, state: &[f32]) -> Result<ActionScores> {
        match self {
            Agent::Dqn(a) => a.action_scores(state),
            Agent::Ppo(a) => a.action_scores(state),
        }
    }
}
