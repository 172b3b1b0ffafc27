use super::layers::softmax;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// `-log softmax(logits)[label]`, evaluated in f64 via log-sum-exp.
pub fn cross_entropy(logits: &[f32], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: logits.len(),
        });
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    let max = logits.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
    let lse = max
        + logits
            .iter()
            .map(|&v| (v as f64 - max).exp())
            .sum::<f64>()
            .ln();
    Ok((lse - logits[label] as f64).max(0.0))
}

/// Mean cross-entropy over a `[N, classes]` batch and its gradient w.r.t. the
/// logits (already divided by `N`).
pub fn cross_entropy_batch(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let n = logits.batch();
    if labels.len() != n {
        return Err(Error::invalid(format!("{} labels for batch of {n}", labels.len())));
    }
    let classes = logits.row_len();
    let mut total = 0.0f64;
    let mut grad = Vec::with_capacity(n * classes);
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        total += cross_entropy(row, y)?;
        let p = softmax(row);
        grad.extend(p.iter().enumerate().map(|(c, &pc)| {
            let t = if c == y { 1.0 } else { 0.0 };
            (pc - t) / n as f32
        }));
    }
    Ok((total / n as f64, Tensor::new(vec![n, classes], grad)?))
}
