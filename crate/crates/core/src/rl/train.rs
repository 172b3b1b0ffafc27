use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::agent::{ActionScorer, Agent};
use super::env::{Environment, Transition};
use super::normalizer::StateNormalizer;
use crate::error::{Error, Result};
use crate::nn::argmax;
use crate::rng::{self, streams};

// guards against environments that never finish an episode
const MAX_EPISODE_STEPS: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentTrainOptions {
    pub episodes: usize,
    pub seed: u64,
    /// Episodes rolled out against one frozen snapshot of the agent before
    /// their transitions are consumed. Results do not depend on thread count.
    pub parallel_episodes: usize,
    /// Moving-average window of the reward curve.
    pub window: usize,
    /// Fit per-feature state standardization on the initial states before
    /// the first update of a fresh agent.
    pub standardize_states: bool,
}

impl Default for AgentTrainOptions {
    fn default() -> Self {
        AgentTrainOptions {
            episodes: 5000,
            seed: 0,
            parallel_episodes: 16,
            window: 100,
            standardize_states: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RewardPoint {
    pub episode: usize,
    /// Undiscounted episode return.
    pub reward: f32,
    pub mean_reward: f64,
    /// Epsilon for DQN; normalized policy entropy at the first state for PPO.
    pub exploration: f32,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RewardLog {
    pub points: Vec<RewardPoint>,
}

impl RewardLog {
    pub const CSV_HEADER: &'static str = "episode,reward,mean_reward,exploration";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for p in &self.points {
            let _ = writeln!(s, "{},{},{},{}", p.episode, p.reward, p.mean_reward, p.exploration);
        }
        s
    }
}

struct EpisodeResult {
    transitions: Vec<Transition>,
    reward: f32,
    exploration: f32,
}

fn run_episode<E: Environment>(
    env: &E,
    sample: usize,
    mut choose: impl FnMut(&[f32]) -> Result<usize>,
) -> Result<Vec<Transition>> {
    let mut ep = env.reset(sample)?;
    let mut out = Vec::new();
    for _ in 0..MAX_EPISODE_STEPS {
        let a = choose(env.state(&ep))?;
        let t = env.step(&mut ep, a)?;
        let done = t.done;
        out.push(t);
        if done {
            return Ok(out);
        }
    }
    Err(Error::invalid(format!("episode exceeded {MAX_EPISODE_STEPS} steps")))
}

/// Sample index for every episode: repeated passes over the data, each pass
/// in a freshly shuffled order.
fn episode_samples(n: usize, episodes: usize, seed: u64) -> Vec<usize> {
    let mut out = Vec::with_capacity(episodes);
    let mut pass = 0u64;
    while out.len() < episodes {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::rng_for(seed, streams::SHUFFLE, pass));
        out.extend(order.into_iter().take(episodes - out.len()));
        pass += 1;
    }
    out
}

/// Trains `agent` on `env` for `opts.episodes` episodes and returns the reward
/// curve. Deterministic in `opts.seed`.
pub fn train_agent<E: Environment>(agent: &mut Agent, env: &E, opts: &AgentTrainOptions) -> Result<RewardLog> {
    if env.num_samples() == 0 {
        return Err(Error::invalid("training set is empty"));
    }
    if agent.state_dim() != env.state_dim() || ActionScorer::num_actions(agent) != env.num_actions() {
        return Err(Error::invalid(format!(
            "agent is {}→{}, environment is {}→{}",
            agent.state_dim(),
            ActionScorer::num_actions(agent),
            env.state_dim(),
            env.num_actions()
        )));
    }
    if opts.parallel_episodes == 0 || opts.window == 0 {
        return Err(Error::invalid("parallel episodes and window must be positive"));
    }
    if opts.standardize_states && agent.updates() == 0 {
        let starts = (0..env.num_samples())
            .into_par_iter()
            .map(|i| env.reset(i).map(|ep| env.state(&ep).to_vec()))
            .collect::<Result<Vec<_>>>()?;
        agent.set_normalizer(StateNormalizer::fit(env.state_dim(), starts.iter().map(Vec::as_slice))?)?;
    }
    let samples = episode_samples(env.num_samples(), opts.episodes, opts.seed);
    let total = opts.episodes;
    let mut log = RewardLog::default();
    let mut recent: VecDeque<f32> = VecDeque::with_capacity(opts.window);
    let mut rollout: Vec<Transition> = Vec::new();

    for start in (0..total).step_by(opts.parallel_episodes) {
        let end = (start + opts.parallel_episodes).min(total);
        let frozen: &Agent = agent;
        let results = (start..end)
            .into_par_iter()
            .map(|e| {
                let mut r = rng::rng_for(opts.seed, streams::EXPLORE, e as u64);
                match frozen {
                    Agent::Dqn(a) => {
                        let eps = a.epsilon(e, total);
                        let transitions = run_episode(env, samples[e], |s| a.act_epsilon_greedy(s, eps, &mut r))?;
                        Ok(EpisodeResult {
                            reward: transitions.iter().map(|t| t.reward).sum(),
                            transitions,
                            exploration: eps,
                        })
                    }
                    Agent::Ppo(a) => {
                        let mut first_entropy = None;
                        let transitions = run_episode(env, samples[e], |s| {
                            if first_entropy.is_none() {
                                let p = a.policy(s)?;
                                let h: f64 = p.iter().filter(|&&q| q > 0.0).map(|&q| -(q as f64) * (q as f64).ln()).sum();
                                let max = (p.len() as f64).ln();
                                first_entropy = Some(if max > 0.0 { (h / max) as f32 } else { 0.0 });
                            }
                            a.sample_action(s, &mut r)
                        })?;
                        Ok(EpisodeResult {
                            reward: transitions.iter().map(|t| t.reward).sum(),
                            transitions,
                            exploration: first_entropy.unwrap_or(0.0),
                        })
                    }
                }
            })
            .collect::<Result<Vec<EpisodeResult>>>()?;

        for (offset, res) in results.into_iter().enumerate() {
            if recent.len() == opts.window {
                recent.pop_front();
            }
            recent.push_back(res.reward);
            log.points.push(RewardPoint {
                episode: start + offset + 1,
                reward: res.reward,
                mean_reward: recent.iter().map(|&r| r as f64).sum::<f64>() / recent.len() as f64,
                exploration: res.exploration,
            });
            match agent {
                Agent::Dqn(a) => {
                    for t in res.transitions {
                        a.remember(t)?;
                        a.learn_from_replay()?;
                    }
                }
                Agent::Ppo(_) => rollout.extend(res.transitions),
            }
        }
        if let Agent::Ppo(a) = agent {
            if rollout.len() >= a.config().rollout_size {
                a.ppo_update(&rollout)?;
                rollout.clear();
            }
        }
    }
    if let Agent::Ppo(a) = agent {
        if !rollout.is_empty() {
            a.ppo_update(&rollout)?;
        }
    }
    Ok(log)
}

/// Mean first-step reward when always taking the top-scored action.
pub fn mean_greedy_reward<E: Environment, S: ActionScorer + ?Sized>(scorer: &S, env: &E) -> Result<f64> {
    let rewards = (0..env.num_samples())
        .into_par_iter()
        .map(|i| {
            let mut ep = env.reset(i)?;
            let a = argmax(scorer.action_scores(env.state(&ep))?.values());
            Ok(env.step(&mut ep, a)?.reward as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(rewards.iter().sum::<f64>() / rewards.len().max(1) as f64)
}

/// Expected first-step reward of a uniformly random policy, by enumeration.
pub fn mean_uniform_reward<E: Environment>(env: &E) -> Result<f64> {
    let rewards = (0..env.num_samples())
        .into_par_iter()
        .map(|i| {
            let mut sum = 0.0;
            for a in 0..env.num_actions() {
                let mut ep = env.reset(i)?;
                sum += env.step(&mut ep, a)?.reward as f64;
            }
            Ok(sum / env.num_actions() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(rewards.iter().sum::<f64>() / rewards.len().max(1) as f64)
}
