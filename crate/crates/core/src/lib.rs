//! Per-image test-time augmentation selection driven by reinforcement learning.
//!
//! A small convolutional real/fake classifier is trained first. Its penultimate
//! activations are the state for a DQN or PPO agent whose actions are image
//! augmentations; the agent is rewarded by how much an augmentation lowers the
//! classifier's cross-entropy on that image. At test time the agent's scores pick
//! the top-k augmentations and the classifier's fake-probabilities over those
//! views are averaged.

pub mod augment;
pub mod classifier;
mod binio;
pub mod error;
mod label;
pub mod metrics;
pub mod nn;
pub mod rl;
pub mod rng;
pub mod synthdata;
pub mod tta;

pub use error::{Error, Result};
pub use label::Label;
