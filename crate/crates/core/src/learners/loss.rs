use crate::augment::SoftTargets;
use crate::data::{Table, TaskKind};
use crate::error::{invalid, Error, Result};

/// Floor applied to predicted probabilities inside logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

pub fn brier_loss(pred: f64, target: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&pred) || !(0.0..=1.0).contains(&target) {
        return Err(invalid(format!("Brier inputs must lie in [0, 1], got {pred} and {target}")));
    }
    Ok((pred - target).powi(2))
}

/// `-sum_c target_c * ln(max(pred_c, 1e-12))`.
pub fn soft_cross_entropy(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Shape(format!("{} predicted vs {} target classes", pred.len(), target.len())));
    }
    for v in [pred, target] {
        let sum: f64 = v.iter().sum();
        if v.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-6 {
            return Err(invalid(format!("{v:?} is not a probability vector")));
        }
    }
    Ok(cross_entropy_unchecked(pred, target))
}

pub(crate) fn cross_entropy_unchecked(pred: &[f64], target: &[f64]) -> f64 {
    -pred.iter().zip(target).map(|(p, t)| if *t == 0.0 { 0.0 } else { t * p.max(PROB_FLOOR).ln() }).sum::<f64>()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    out
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        z += *x;
    }
    v.iter_mut().for_each(|x| *x /= z);
}

/// Fraction of rows whose argmax prediction equals the label.
pub fn accuracy(pred: &SoftTargets, labels: &[u32]) -> Result<f64> {
    if pred.len() != labels.len() || labels.is_empty() {
        return Err(Error::Shape(format!("{} predictions for {} labels", pred.len(), labels.len())));
    }
    let hits = pred.argmax().iter().zip(labels).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Coefficient of determination. A constant truth gives 1 for an exact fit
/// and 0 otherwise.
pub fn r_squared(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() || truth.is_empty() {
        return Err(Error::Shape(format!("{} predictions for {} targets", pred.len(), truth.len())));
    }
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|y| (y - mean).powi(2)).sum();
    let ss_res: f64 = pred.iter().zip(truth).map(|(p, y)| (p - y).powi(2)).sum();
    if ss_tot == 0.0 {
        return Ok(if ss_res == 0.0 { 1.0 } else { 0.0 });
    }
    Ok(1.0 - ss_res / ss_tot)
}

/// Accuracy for classification, R² for regression.
pub fn task_metric(pred: &SoftTargets, table: &Table) -> Result<f64> {
    match table.task() {
        TaskKind::Regression => r_squared(pred.values(), &table.target_values()),
        _ => accuracy(pred, table.class_labels()?),
    }
}

/// Mean per-row loss against labeled targets: squared error (regression),
/// Brier (binary) or soft cross-entropy (multiclass).
pub fn mean_task_loss(pred: &SoftTargets, target: &SoftTargets, task: TaskKind) -> f64 {
    let n = target.len().max(1) as f64;
    match task {
        TaskKind::Regression | TaskKind::Binary => {
            pred.values().iter().zip(target.values()).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n
        }
        TaskKind::Multiclass { .. } => {
            (0..target.len()).map(|r| cross_entropy_unchecked(pred.row(r), target.row(r))).sum::<f64>() / n
        }
    }
}
