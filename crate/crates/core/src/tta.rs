//! Test-time stage: rank the bank for an image's feature map, apply the top-k
//! augmentations and average the classifier's fake probabilities.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{Bank, Image};
use crate::classifier::Detector;
use crate::error::{Error, Result};
use crate::rl::ActionScorer;
use crate::Label;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TtaConfig {
    pub k: usize,
    /// Also average in the unaugmented image's probability.
    pub include_original: bool,
}

impl Default for TtaConfig {
    fn default() -> Self {
        TtaConfig {
            k: 3,
            include_original: false,
        }
    }
}

impl TtaConfig {
    pub fn validate(&self, bank_size: usize) -> Result<()> {
        if self.k == 0 || self.k > bank_size {
            return Err(Error::invalid(format!("k = {} outside 1..={bank_size}", self.k)));
        }
        Ok(())
    }
}

/// Indices of the `k` largest scores, best first; ties go to the lower index.
pub fn select_top_k(scores: &[f32], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > scores.len() {
        return Err(Error::invalid(format!("k = {k} outside 1..={}", scores.len())));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    Ok(idx)
}

/// `k` distinct bank indices drawn uniformly, in draw order.
pub fn random_actions<R: Rng>(bank_size: usize, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    if k == 0 || k > bank_size {
        return Err(Error::invalid(format!("k = {k} outside 1..={bank_size}")));
    }
    Ok(index::sample(rng, bank_size, k).into_vec())
}

/// Arithmetic mean, accumulated in f64.
pub fn fuse(probabilities: &[f32]) -> f32 {
    (probabilities.iter().map(|&p| p as f64).sum::<f64>() / probabilities.len() as f64) as f32
}

#[derive(Clone, Debug, PartialEq)]
pub struct TtaDecision {
    /// Bank indices that were applied, in rank order.
    pub actions: Vec<usize>,
    /// Fake probability of each augmented image, aligned with `actions`.
    pub probabilities: Vec<f32>,
    /// Fake probability of the unaugmented image, when it took part.
    pub original: Option<f32>,
    pub fused: f32,
}

/// Applies the given actions and averages the classifier's fake probabilities.
pub fn classify_with_actions<D: Detector + ?Sized>(
    model: &D,
    bank: &Bank,
    image: &Image,
    actions: &[usize],
    include_original: bool,
) -> Result<TtaDecision> {
    if actions.is_empty() {
        return Err(Error::invalid("no augmentations to average"));
    }
    let probabilities = actions
        .iter()
        .map(|&a| model.predict_proba(&bank.get(a)?.apply(image)?))
        .collect::<Result<Vec<f32>>>()?;
    let original = if include_original {
        Some(model.predict_proba(image)?)
    } else {
        None
    };
    let mut all = probabilities.clone();
    all.extend(original);
    Ok(TtaDecision {
        actions: actions.to_vec(),
        fused: fuse(&all),
        probabilities,
        original,
    })
}

/// Full test-time path for one image. Also returns the agent's scores for the
/// image so callers can audit the ranking.
pub fn classify_with_tta<D: Detector + ?Sized, S: ActionScorer + ?Sized>(
    model: &D,
    agent: &S,
    bank: &Bank,
    image: &Image,
    config: &TtaConfig,
) -> Result<(TtaDecision, Vec<f32>)> {
    config.validate(bank.len())?;
    if agent.num_actions() != bank.len() {
        return Err(Error::invalid(format!(
            "agent scores {} actions, bank holds {}",
            agent.num_actions(),
            bank.len()
        )));
    }
    let state = model.feature_map(image)?;
    let scores = agent.action_scores(&state)?.values().to_vec();
    let top = select_top_k(&scores, config.k)?;
    Ok((classify_with_actions(model, bank, image, &top, config.include_original)?, scores))
}

/// `classify_with_tta` over many images in parallel, results in input order.
pub fn classify_batch<D: Detector + ?Sized, S: ActionScorer + ?Sized>(
    model: &D,
    agent: &S,
    bank: &Bank,
    images: &[&Image],
    config: &TtaConfig,
) -> Result<Vec<(TtaDecision, Vec<f32>)>> {
    images
        .par_iter()
        .map(|img| classify_with_tta(model, agent, bank, img, config))
        .collect()
}

/// One JSON line per evaluated image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub id: String,
    pub label: Label,
    pub actions: Vec<String>,
    /// Agent score for every bank action (empty when no agent ranked them).
    pub action_scores: Vec<f32>,
    /// Fake probability per applied action.
    pub probabilities: Vec<f32>,
    pub fused: f32,
}

impl AuditRecord {
    pub fn new(id: impl Into<String>, label: Label, bank: &Bank, decision: &TtaDecision, action_scores: Vec<f32>) -> Self {
        AuditRecord {
            id: id.into(),
            label,
            actions: decision
                .actions
                .iter()
                .map(|&a| bank.actions()[a].op.name().to_string())
                .collect(),
            action_scores,
            probabilities: decision.probabilities.clone(),
            fused: decision.fused,
        }
    }

    pub fn to_json_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("audit records serialize");
        s.push('\n');
        s
    }
}
