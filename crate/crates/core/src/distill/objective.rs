//! Top-K truncation, soft targets and the truncated KL objective.

use serde::{Deserialize, Serialize};

use super::DistillError;

/// The retained teacher scores at one response position.
///
/// `entries` are `(token id, teacher score)` sorted by score descending with
/// ties broken by ascending id. Scores are logits up to a per-position
/// constant; the builders store full-vocabulary log-probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKTarget {
    pub position: usize,
    pub entries: Vec<(usize, f64)>,
}

/// The `min(k, V)` largest logits with their ids.
pub fn truncate_topk(logits: &[f64], k: usize) -> Result<Vec<(usize, f64)>, DistillError> {
    if logits.is_empty() || k == 0 {
        return Err(DistillError::Input("truncate_topk needs V >= 1 and K >= 1".into()));
    }
    if let Some(i) = logits.iter().position(|x| !x.is_finite()) {
        return Err(DistillError::Input(format!("non-finite logit at id {i}")));
    }
    let mut entries: Vec<(usize, f64)> = logits.iter().copied().enumerate().collect();
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    entries.truncate(k);
    Ok(entries)
}

/// Softmax of the retained scores divided by `tau`, renormalized over the
/// retained set. Returns `(id, probability)` in entry order.
pub fn soft_targets(entries: &[(usize, f64)], tau: f64) -> Result<Vec<(usize, f64)>, DistillError> {
    if !(tau > 0.0) {
        return Err(DistillError::Config(format!("temperature must be positive, got {tau}")));
    }
    if entries.is_empty() {
        return Err(DistillError::Input("no retained entries".into()));
    }
    let max = entries.iter().map(|e| e.1 / tau).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = entries.iter().map(|e| (e.1 / tau - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(entries.iter().zip(exps).map(|(e, x)| (e.0, x / sum)).collect())
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// `Σ p̃(k) (log p̃(k) − log p_S(k))` at one position, with `p_S` the full
/// softmax of the student logits.
pub fn kl_position(target: &[(usize, f64)], student_logits: &[f64]) -> f64 {
    let log_ps = log_softmax(student_logits);
    target
        .iter()
        .filter(|(_, p)| *p > 0.0)
        .map(|&(id, p)| p * (p.ln() - log_ps[id]))
        .sum()
}

/// Gradient of [`kl_position`] with respect to the student logits:
/// `p_S(j)·Σp̃ − p̃(j)`.
pub fn kl_position_grad(target: &[(usize, f64)], student_logits: &[f64]) -> Vec<f64> {
    let mass: f64 = target.iter().map(|t| t.1).sum();
    let mut grad: Vec<f64> = log_softmax(student_logits).iter().map(|l| l.exp() * mass).collect();
    for &(id, p) in target {
        grad[id] -= p;
    }
    grad
}

/// Mean over positions of the per-position truncated KL.
pub fn kl_loss(targets: &[Vec<(usize, f64)>], student_logits: &[Vec<f64>]) -> Result<f64, DistillError> {
    if targets.len() != student_logits.len() {
        return Err(DistillError::Input(format!(
            "{} target positions vs {} student positions",
            targets.len(),
            student_logits.len()
        )));
    }
    if targets.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = targets
        .iter()
        .zip(student_logits)
        .map(|(t, z)| kl_position(t, z))
        .sum();
    Ok(total / targets.len() as f64)
}
