use rayon::prelude::*;

use crate::augment::{AugmentationAction, Bank, Image};
use crate::classifier::{Detector, FeatureMap, LabeledImage};
use crate::error::{Error, Result};
use crate::Label;

/// Longest supported episode.
pub const MAX_HORIZON: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: FeatureMap,
    /// Bank index of the chosen action.
    pub action: usize,
    pub reward: f32,
    pub next_state: FeatureMap,
    pub done: bool,
}

impl Transition {
    pub fn validate(&self, state_dim: usize, actions: usize) -> Result<()> {
        if self.action >= actions {
            return Err(Error::invalid(format!(
                "action {} outside a bank of {actions}",
                self.action
            )));
        }
        if self.state.len() != state_dim || self.next_state.len() != state_dim {
            return Err(Error::invalid(format!(
                "transition states have lengths {}/{}, expected {state_dim}",
                self.state.len(),
                self.next_state.len()
            )));
        }
        if !self.reward.is_finite() {
            return Err(Error::NonFinite("transition reward".into()));
        }
        Ok(())
    }
}

/// Builds a transition from the losses before (`l1`) and after (`l2`) an
/// augmentation. The reward is `l1 - l2`; the state moves to the augmented
/// features only if the loss went down.
pub fn transition_from(
    state: FeatureMap,
    action: usize,
    l1: f32,
    l2: f32,
    augmented_state: FeatureMap,
    done: bool,
) -> Result<Transition> {
    if !l1.is_finite() || !l2.is_finite() {
        return Err(Error::NonFinite(format!("losses l1={l1} l2={l2}")));
    }
    let next_state = if l2 < l1 { augmented_state } else { state.clone() };
    Ok(Transition {
        state,
        action,
        reward: l1 - l2,
        next_state,
        done,
    })
}

/// One augmentation step on one sample, ending the episode.
pub fn env_step<D: Detector + ?Sized>(
    model: &D,
    sample: &LabeledImage,
    action_index: usize,
    action: &AugmentationAction,
    current_state: &[f32],
) -> Result<Transition> {
    let l1 = model.loss_of(&sample.image, sample.label)?;
    let augmented = action.apply(&sample.image)?;
    let (f2, l2) = model.observe(&augmented, sample.label)?;
    transition_from(current_state.to_vec(), action_index, l1, l2, f2, true)
}

/// What the training loop needs from an environment. Episodes are
/// independent, so `reset`/`step` may run concurrently for distinct episodes.
pub trait Environment: Sync {
    type Episode: Send;

    fn num_samples(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn state_dim(&self) -> usize;
    fn reset(&self, sample: usize) -> Result<Self::Episode>;
    fn state<'e>(&'e self, episode: &'e Self::Episode) -> &'e [f32];
    fn step(&self, episode: &mut Self::Episode, action: usize) -> Result<Transition>;
}

/// The augmentation environment: a frozen detector, an action bank and a set
/// of labeled training images.
pub struct AugmentEnv<'a, D: ?Sized> {
    model: &'a D,
    bank: &'a Bank,
    samples: &'a [LabeledImage],
    horizon: usize,
    // feature map and loss of every unaugmented sample
    start: Vec<(FeatureMap, f32)>,
}

pub struct AugmentEpisode {
    image: Image,
    label: Label,
    state: FeatureMap,
    loss: f32,
    t: usize,
}

impl<'a, D: Detector + ?Sized> AugmentEnv<'a, D> {
    pub fn new(model: &'a D, bank: &'a Bank, samples: &'a [LabeledImage], horizon: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("training set is empty"));
        }
        if !(1..=MAX_HORIZON).contains(&horizon) {
            return Err(Error::invalid(format!("horizon {horizon} outside 1..={MAX_HORIZON}")));
        }
        let start = samples
            .par_iter()
            .map(|s| model.observe(&s.image, s.label))
            .collect::<Result<Vec<_>>>()?;
        Ok(AugmentEnv {
            model,
            bank,
            samples,
            horizon,
            start,
        })
    }

    pub fn bank(&self) -> &Bank {
        self.bank
    }
}

impl<D: Detector + ?Sized> Environment for AugmentEnv<'_, D> {
    type Episode = AugmentEpisode;

    fn num_samples(&self) -> usize {
        self.samples.len()
    }

    fn num_actions(&self) -> usize {
        self.bank.len()
    }

    fn state_dim(&self) -> usize {
        self.start[0].0.len()
    }

    fn reset(&self, sample: usize) -> Result<AugmentEpisode> {
        let s = self
            .samples
            .get(sample)
            .ok_or_else(|| Error::invalid(format!("sample {sample} out of range")))?;
        let (state, loss) = self.start[sample].clone();
        Ok(AugmentEpisode {
            image: s.image.clone(),
            label: s.label,
            state,
            loss,
            t: 0,
        })
    }

    fn state<'e>(&'e self, episode: &'e AugmentEpisode) -> &'e [f32] {
        &episode.state
    }

    fn step(&self, ep: &mut AugmentEpisode, action: usize) -> Result<Transition> {
        let augmented = self.bank.get(action)?.apply(&ep.image)?;
        let (f2, l2) = self.model.observe(&augmented, ep.label)?;
        ep.t += 1;
        let done = ep.t >= self.horizon;
        let t = transition_from(ep.state.clone(), action, ep.loss, l2, f2, done)?;
        if l2 < ep.loss {
            ep.image = augmented;
            ep.state = t.next_state.clone();
            ep.loss = l2;
        }
        Ok(t)
    }
}
