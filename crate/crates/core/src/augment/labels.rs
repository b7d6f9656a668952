use crate::data::{Features, Table, TaskKind};
use crate::error::{invalid, Error, Result};
use crate::gibbs::AugmentedSet;
use crate::learners::Learner;

use super::targets::{one_hot, DistillSet, Origin, SoftTargets};

pub const KNOW_DEFAULT_TEMPERATURE: f64 = 2.0;
pub const KNOW_DEFAULT_HARD_WEIGHT: f64 = 0.25;

/// Teacher predictions on the augmented rows: regression values, binary
/// positive-class probabilities, or multiclass probability vectors.
pub fn teacher_label(teacher: &Learner, aug: &Features, task: TaskKind) -> Result<SoftTargets> {
    if teacher.task() != task {
        return Err(Error::Schema(format!("teacher was trained for {:?}, not {task:?}", teacher.task())));
    }
    let targets = teacher.predict(aug)?;
    targets.validate(task)?;
    Ok(targets)
}

/// One-hot argmax of the teacher's probabilities (ties to the lower class).
pub fn hunge_labels(teacher: &Learner, aug: &AugmentedSet) -> Result<SoftTargets> {
    let task = teacher.task();
    if !task.is_classification() {
        return Err(Error::Task("hard labels need a classification teacher".into()));
    }
    let probs = teacher_label(teacher, &aug.features, task)?;
    Ok(harden(&probs))
}

pub fn harden(probs: &SoftTargets) -> SoftTargets {
    match probs {
        SoftTargets::Scalar { .. } => SoftTargets::scalar(probs.argmax().iter().map(|&c| c as f64).collect()),
        SoftTargets::ProbVector { classes, .. } => one_hot(&probs.argmax(), *classes),
    }
}

/// Tempered teacher probabilities pulled toward the true labels:
/// `(1 - w) * normalize(p^(1/T)) + w * onehot(y)`.
pub fn know_targets(teacher_probs: &SoftTargets, true_labels: &[u32], temperature: f64, hard_weight: f64) -> Result<SoftTargets> {
    if !(temperature > 0.0) {
        return Err(invalid(format!("temperature {temperature} must be positive")));
    }
    if !(0.0..=1.0).contains(&hard_weight) {
        return Err(invalid(format!("hard-label weight {hard_weight} outside [0, 1]")));
    }
    if teacher_probs.len() != true_labels.len() {
        return Err(Error::Shape(format!("{} teacher rows, {} labels", teacher_probs.len(), true_labels.len())));
    }
    let blend = |probs: &[f64], label: usize| -> Vec<f64> {
        let tempered: Vec<f64> = if temperature.is_infinite() {
            vec![1.0; probs.len()]
        } else {
            probs.iter().map(|p| p.powf(1.0 / temperature)).collect()
        };
        let z: f64 = tempered.iter().sum();
        tempered
            .iter()
            .enumerate()
            .map(|(c, t)| (1.0 - hard_weight) * t / z + if c == label { hard_weight } else { 0.0 })
            .collect()
    };
    match teacher_probs {
        SoftTargets::Scalar { values } => {
            let out = values
                .iter()
                .zip(true_labels)
                .map(|(&p, &y)| {
                    if !(0.0..=1.0).contains(&p) || y > 1 {
                        return Err(Error::Task(format!("binary probability {p} / label {y} out of range")));
                    }
                    Ok(blend(&[1.0 - p, p], y as usize)[1])
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(SoftTargets::scalar(out))
        }
        SoftTargets::ProbVector { classes, .. } => {
            let mut out = Vec::with_capacity(teacher_probs.values().len());
            for (r, &y) in true_labels.iter().enumerate() {
                if y as usize >= *classes {
                    return Err(Error::CodeOutOfRange { code: y, cardinality: *classes });
                }
                out.extend(blend(teacher_probs.row(r), y as usize));
            }
            SoftTargets::prob_vectors(*classes, out)
        }
    }
}

/// Real rows with their encoded labels, then the augmented rows with
/// `aug_targets`.
pub fn assemble(train: &Table, aug: &Features, aug_targets: &SoftTargets) -> Result<DistillSet> {
    let real = DistillSet::from_table(train)?;
    if !real.targets.same_kind(aug_targets) {
        return Err(Error::Task(format!(
            "augmented {} targets cannot join real {} targets",
            aug_targets.kind_name(),
            real.targets.kind_name()
        )));
    }
    aug_targets.validate(train.task())?;
    if aug.n_rows() != aug_targets.len() {
        return Err(Error::Shape(format!("{} augmented rows, {} targets", aug.n_rows(), aug_targets.len())));
    }
    let features = real.features.concat(aug)?;
    let targets = real.targets.concat(aug_targets)?;
    let mut origin = real.origin;
    origin.extend(std::iter::repeat_n(Origin::Augmented, aug.n_rows()));
    DistillSet::new(features, targets, origin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn know_identity_settings() {
        let p = SoftTargets::prob_vectors(3, vec![0.2, 0.5, 0.3]).unwrap();
        let t = know_targets(&p, &[0], 1.0, 0.0).unwrap();
        for (a, b) in t.values().iter().zip(p.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn know_infinite_temperature_is_uniform() {
        let p = SoftTargets::prob_vectors(4, vec![0.7, 0.1, 0.1, 0.1]).unwrap();
        let t = know_targets(&p, &[0], f64::INFINITY, 0.0).unwrap();
        assert!(t.values().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn know_square_root_tempering() {
        let p = SoftTargets::prob_vectors(2, vec![0.9, 0.1]).unwrap();
        let t = know_targets(&p, &[1], 2.0, 0.0).unwrap();
        let (a, b) = (0.9f64.sqrt(), 0.1f64.sqrt());
        assert_abs_diff_eq!(t.row(0)[0], a / (a + b), epsilon = 1e-15);
        assert_abs_diff_eq!(t.row(0)[0], 0.75, epsilon = 0.01);
    }

    #[test]
    fn know_full_weight_is_one_hot() {
        let p = SoftTargets::prob_vectors(3, vec![0.2, 0.5, 0.3]).unwrap();
        assert_eq!(know_targets(&p, &[2], 2.0, 1.0).unwrap().values(), &[0.0, 0.0, 1.0]);
        let b = SoftTargets::scalar(vec![0.3]);
        assert_eq!(know_targets(&b, &[1], 2.0, 1.0).unwrap().values(), &[1.0]);
    }

    #[test]
    fn know_rejects_bad_settings() {
        let p = SoftTargets::scalar(vec![0.3]);
        assert!(know_targets(&p, &[1], 0.0, 0.1).is_err());
        assert!(know_targets(&p, &[1], 1.0, 1.5).is_err());
    }

    #[test]
    fn harden_breaks_ties_low() {
        let p = SoftTargets::prob_vectors(2, vec![0.2, 0.8, 0.5, 0.5]).unwrap();
        assert_eq!(harden(&p).values(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn hard_labels_are_no_better_calibrated() {
        let p = SoftTargets::prob_vectors(3, vec![0.6, 0.3, 0.1, 0.2, 0.2, 0.6, 0.34, 0.33, 0.33]).unwrap();
        let h = harden(&p);
        let brier = |t: &SoftTargets| t.values().iter().zip(p.values()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        assert!(brier(&h) >= brier(&p));
    }
}
