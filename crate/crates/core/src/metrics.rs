//! Frame-level ROC metrics: AUC, ceiling-normalized partial AUC and EER.
//!
//! Scores are "higher means more likely fake"; `Label::Fake` is the positive
//! class.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Label;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledScore {
    pub score: f64,
    pub label: Label,
}

impl LabeledScore {
    pub fn new(score: f64, label: Label) -> Self {
        LabeledScore { score, label }
    }
}

pub const DEFAULT_FPR_CEILING: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub auc: f64,
    /// Partial AUC over FPR in [0, 0.1], divided by 0.1.
    pub pauc: f64,
    pub eer: f64,
    pub eer_threshold: f64,
    pub n_real: usize,
    pub n_fake: usize,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "auc,pauc,eer,eer_threshold,n_real,n_fake";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{:.6},{:.6},{:.6},{:.6},{},{}",
            self.auc, self.pauc, self.eer, self.eer_threshold, self.n_real, self.n_fake
        )
    }
}

/// Counts per class, rejecting single-class sets and non-finite scores.
fn class_counts(scores: &[LabeledScore]) -> Result<(usize, usize)> {
    if let Some(s) = scores.iter().find(|s| !s.score.is_finite()) {
        return Err(Error::NonFinite(format!("score {}", s.score)));
    }
    let fake = scores.iter().filter(|s| s.label == Label::Fake).count();
    let real = scores.len() - fake;
    if real == 0 || fake == 0 {
        return Err(Error::SingleClass { real, fake });
    }
    Ok((real, fake))
}

fn by_score(a: &LabeledScore, b: &LabeledScore) -> Ordering {
    a.score.partial_cmp(&b.score).expect("finite scores")
}

/// Wilcoxon-Mann-Whitney AUC: P(fake > real) + P(tie) / 2, via mid-ranks.
pub fn auc(scores: &[LabeledScore]) -> Result<f64> {
    let (n_real, n_fake) = class_counts(scores)?;
    let mut sorted = scores.to_vec();
    sorted.sort_by(by_score);
    // twice the rank sum keeps mid-ranks integral
    let mut rank2_sum_fake: u64 = 0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1].score == sorted[i].score {
            j += 1;
        }
        // ranks i+1 ..= j+1, mid-rank (i + j + 2) / 2
        let mid2 = (i + j + 2) as u64;
        let fakes = sorted[i..=j].iter().filter(|s| s.label == Label::Fake).count() as u64;
        rank2_sum_fake += fakes * mid2;
        i = j + 1;
    }
    let nf = n_fake as u64;
    let u2 = rank2_sum_fake - nf * (nf + 1);
    Ok(u2 as f64 / (2.0 * n_fake as f64 * n_real as f64))
}

/// ROC points `(fpr, tpr)` from a threshold sweep over distinct scores,
/// starting at `(0, 0)` and ending at `(1, 1)`. Tied scores produce one
/// diagonal step.
pub fn roc_curve(scores: &[LabeledScore]) -> Result<Vec<(f64, f64)>> {
    let (n_real, n_fake) = class_counts(scores)?;
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| by_score(b, a));
    let mut points = vec![(0.0, 0.0)];
    let (mut fp, mut tp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let s = sorted[i].score;
        while i < sorted.len() && sorted[i].score == s {
            match sorted[i].label {
                Label::Fake => tp += 1,
                Label::Real => fp += 1,
            }
            i += 1;
        }
        points.push((fp as f64 / n_real as f64, tp as f64 / n_fake as f64));
    }
    Ok(points)
}

/// Area under the ROC for FPR in `[0, ceiling]`, divided by `ceiling`, with
/// linear interpolation at the ceiling.
pub fn pauc_at_fpr(scores: &[LabeledScore], ceiling: f64) -> Result<f64> {
    if !(ceiling > 0.0 && ceiling <= 1.0) {
        return Err(Error::invalid(format!("fpr ceiling {ceiling} not in (0, 1]")));
    }
    let roc = roc_curve(scores)?;
    let mut area = 0.0;
    for seg in roc.windows(2) {
        let ((x0, y0), (x1, y1)) = (seg[0], seg[1]);
        if x0 >= ceiling {
            break;
        }
        if x1 <= ceiling {
            area += (x1 - x0) * (y0 + y1) / 2.0;
        } else {
            let yc = y0 + (y1 - y0) * (ceiling - x0) / (x1 - x0);
            area += (ceiling - x0) * (y0 + yc) / 2.0;
            break;
        }
    }
    Ok((area / ceiling).clamp(0.0, 1.0))
}

/// Equal error rate and its threshold. A sample is called fake when its score
/// is at least the threshold; thresholds are the distinct scores. Returns
/// `(FPR + FNR) / 2` where `|FPR - FNR|` is smallest, the lowest threshold
/// winning ties.
pub fn eer(scores: &[LabeledScore]) -> Result<(f64, f64)> {
    let (n_real, n_fake) = class_counts(scores)?;
    let mut sorted = scores.to_vec();
    sorted.sort_by(by_score);
    // ascending sweep: below index i everything is called real
    let (mut real_below, mut fake_below) = (0usize, 0usize);
    let mut best: Option<(f64, f64, f64)> = None;
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].score;
        let fpr = (n_real - real_below) as f64 / n_real as f64;
        let fnr = fake_below as f64 / n_fake as f64;
        let gap = (fpr - fnr).abs();
        if best.is_none_or(|(g, _, _)| gap < g) {
            best = Some((gap, (fpr + fnr) / 2.0, t));
        }
        while i < sorted.len() && sorted[i].score == t {
            match sorted[i].label {
                Label::Fake => fake_below += 1,
                Label::Real => real_below += 1,
            }
            i += 1;
        }
    }
    let (_, value, threshold) = best.expect("non-empty");
    Ok((value, threshold))
}

pub fn evaluate(scores: &[LabeledScore]) -> Result<MetricReport> {
    let (n_real, n_fake) = class_counts(scores)?;
    let (eer, eer_threshold) = eer(scores)?;
    Ok(MetricReport {
        auc: auc(scores)?,
        pauc: pauc_at_fpr(scores, DEFAULT_FPR_CEILING)?,
        eer,
        eer_threshold,
        n_real,
        n_fake,
    })
}
