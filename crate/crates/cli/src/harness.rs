//! Evaluation primitives shared by `eval`, `ablate` and the tests: score a
//! labeled set with no TTA, random TTA or learned TTA, and sweep k.

use std::fmt;
use std::fmt::Write as _;

use augpolicy::augment::Bank;
use augpolicy::classifier::{Detector, LabeledImage};
use augpolicy::metrics::{evaluate, LabeledScore, MetricReport};
use augpolicy::rl::ActionScorer;
use augpolicy::rng::{self, streams};
use augpolicy::tta::{classify_with_actions, classify_with_tta, random_actions, AuditRecord, TtaConfig, TtaDecision};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TtaMode {
    None,
    Random,
    Learned,
}

impl TtaMode {
    pub fn name(self) -> &'static str {
        match self {
            TtaMode::None => "none",
            TtaMode::Random => "random",
            TtaMode::Learned => "learned",
        }
    }
}

impl fmt::Display for TtaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Labeled images from one domain, with stable ids for audit records.
pub struct EvalSet<'a> {
    pub name: String,
    pub domain: u8,
    pub ids: Vec<String>,
    pub samples: Vec<&'a LabeledImage>,
}

pub struct Evaluation {
    pub report: MetricReport,
    pub scores: Vec<LabeledScore>,
    pub audit: Vec<AuditRecord>,
}

/// Scores every image of `set` under `mode`. Random TTA draws `k` distinct
/// actions per image from a stream keyed by (seed, domain, image position).
pub fn evaluate_set<D, S>(
    model: &D,
    agent: Option<&S>,
    bank: &Bank,
    set: &EvalSet<'_>,
    mode: TtaMode,
    tta: &TtaConfig,
    seed: u64,
) -> Result<Evaluation>
where
    D: Detector + ?Sized,
    S: ActionScorer + ?Sized,
{
    tta.validate(bank.len())?;
    let decisions: Vec<(TtaDecision, Vec<f32>)> = set
        .samples
        .par_iter()
        .enumerate()
        .map(|(j, s)| -> Result<(TtaDecision, Vec<f32>)> {
            match mode {
                TtaMode::None => {
                    let p = model.predict_proba(&s.image)?;
                    Ok((
                        TtaDecision {
                            actions: Vec::new(),
                            probabilities: Vec::new(),
                            original: Some(p),
                            fused: p,
                        },
                        Vec::new(),
                    ))
                }
                TtaMode::Random => {
                    let mut r = rng::rng_for(seed, streams::RANDOM_TTA, ((set.domain as u64) << 32) | j as u64);
                    let actions = random_actions(bank.len(), tta.k, &mut r)?;
                    Ok((
                        classify_with_actions(model, bank, &s.image, &actions, tta.include_original)?,
                        Vec::new(),
                    ))
                }
                TtaMode::Learned => {
                    let agent = agent.ok_or_else(|| CliError::config("learned TTA needs a trained agent"))?;
                    Ok(classify_with_tta(model, agent, bank, &s.image, tta)?)
                }
            }
        })
        .collect::<Result<_>>()?;
    let scores: Vec<LabeledScore> = decisions
        .iter()
        .zip(&set.samples)
        .map(|((d, _), s)| LabeledScore::new(d.fused as f64, s.label))
        .collect();
    let audit = decisions
        .into_iter()
        .zip(set.samples.iter().zip(&set.ids))
        .map(|((d, action_scores), (s, id))| AuditRecord::new(id.clone(), s.label, bank, &d, action_scores))
        .collect();
    Ok(Evaluation {
        report: evaluate(&scores)?,
        scores,
        audit,
    })
}

/// One line of an `eval` CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub mode: TtaMode,
    pub k: usize,
    pub agent: String,
    pub train_domain: String,
    pub eval_domain: String,
    pub auc: f64,
    pub pauc: f64,
    pub eer: f64,
    pub eer_threshold: f64,
    pub n_real: usize,
    pub n_fake: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub eval_domain: String,
    pub k: usize,
    pub auc: f64,
    pub pauc: f64,
    pub eer: f64,
}

/// Learned TTA for every k in `k_range` on every set; rows grouped by set,
/// k ascending within each group.
pub fn ablate<D, S>(
    model: &D,
    agent: &S,
    bank: &Bank,
    sets: &[EvalSet<'_>],
    k_range: std::ops::RangeInclusive<usize>,
    include_original: bool,
) -> Result<Vec<AblationRow>>
where
    D: Detector + ?Sized,
    S: ActionScorer + ?Sized,
{
    let mut rows = Vec::new();
    for set in sets {
        for k in k_range.clone() {
            let tta = TtaConfig { k, include_original };
            let e = evaluate_set(model, Some(agent), bank, set, TtaMode::Learned, &tta, 0)?;
            rows.push(AblationRow {
                eval_domain: set.name.clone(),
                k,
                auc: e.report.auc,
                pauc: e.report.pauc,
                eer: e.report.eer,
            });
        }
    }
    Ok(rows)
}

/// Fixed-width text rendering of an ablation grid, best AUC per domain marked.
pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<10} {:>5} {:>8} {:>8} {:>8}", "domain", "top-k", "AUC", "pAUC", "EER");
    let mut start = 0;
    while start < rows.len() {
        let domain = &rows[start].eval_domain;
        let end = rows[start..]
            .iter()
            .position(|r| &r.eval_domain != domain)
            .map_or(rows.len(), |p| start + p);
        let best = rows[start..end]
            .iter()
            .map(|r| r.auc)
            .fold(f64::NEG_INFINITY, f64::max);
        for r in &rows[start..end] {
            let mark = if r.auc == best { " *" } else { "" };
            let _ = writeln!(
                s,
                "{:<10} {:>5} {:>8.4} {:>8.4} {:>8.4}{mark}",
                r.eval_domain, r.k, r.auc, r.pauc, r.eer
            );
        }
        start = end;
    }
    s
}
