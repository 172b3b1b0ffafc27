//! Environment step, DQN and PPO agents, and the loop that trains them on
//! classifier feedback. Agents turn a feature map into one score per bank
//! action; those scores rank augmentations at test time.

mod agent;
mod bandit;
mod dqn;
mod env;
mod normalizer;
mod ppo;
mod replay;
mod train;

pub use agent::{ActionScorer, ActionScores, Agent, AgentConfig, AgentKind};
pub use bandit::TableBandit;
pub use dqn::{DqnAgent, DqnConfig};
pub use env::{env_step, transition_from, AugmentEnv, AugmentEpisode, Environment, Transition, MAX_HORIZON};
pub use normalizer::StateNormalizer;
pub use ppo::{normalize_advantages, ppo_clip_objective, returns_to_go, PpoAgent, PpoConfig, PpoLosses};
pub use replay::ReplayBuffer;
pub use train::{mean_greedy_reward, mean_uniform_reward, train_agent, AgentTrainOptions, RewardLog, RewardPoint};
