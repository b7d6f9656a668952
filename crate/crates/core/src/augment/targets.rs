use serde::{Deserialize, Serialize};

use crate::data::{Features, Table, TaskKind};
use crate::error::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-6;

/// Per-row training targets: scalars (regression, binary Brier targets) or
/// probability vectors over `classes` (row-major).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SoftTargets {
    Scalar { values: Vec<f64> },
    ProbVector { classes: usize, values: Vec<f64> },
}

impl SoftTargets {
    pub fn scalar(values: Vec<f64>) -> Self {
        SoftTargets::Scalar { values }
    }

    pub fn prob_vectors(classes: usize, values: Vec<f64>) -> Result<Self> {
        if classes == 0 || values.len() % classes != 0 {
            return Err(Error::Shape(format!("{} values do not fill rows of {classes} classes", values.len())));
        }
        let t = SoftTargets::ProbVector { classes, values };
        t.check_probabilities()?;
        Ok(t)
    }

    /// Targets for labeled rows: regression values, binary 0/1, or one-hot vectors.
    pub fn from_table(table: &Table) -> Result<Self> {
        match table.task() {
            TaskKind::Regression => Ok(SoftTargets::scalar(table.target_values())),
            TaskKind::Binary => Ok(SoftTargets::scalar(table.class_labels()?.iter().map(|&c| c as f64).collect())),
            TaskKind::Multiclass { classes } => Ok(one_hot(table.class_labels()?, classes)),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SoftTargets::Scalar { values } => values.len(),
            SoftTargets::ProbVector { classes, values } => values.len() / classes,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Width of one row: 1 for scalars, C for probability vectors.
    pub fn dim(&self) -> usize {
        match self {
            SoftTargets::Scalar { .. } => 1,
            SoftTargets::ProbVector { classes, .. } => *classes,
        }
    }

    pub fn values(&self) -> &[f64] {
        match self {
            SoftTargets::Scalar { values } | SoftTargets::ProbVector { values, .. } => values,
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let d = self.dim();
        &self.values()[r * d..(r + 1) * d]
    }

    pub fn select_rows(&self, rows: &[usize]) -> SoftTargets {
        let values = rows.iter().flat_map(|&r| self.row(r).iter().copied()).collect();
        self.with_values(values)
    }

    pub fn concat(&self, other: &SoftTargets) -> Result<SoftTargets> {
        if !self.same_kind(other) {
            return Err(Error::Task("cannot concatenate targets of different kinds".into()));
        }
        let mut values = self.values().to_vec();
        values.extend_from_slice(other.values());
        Ok(self.with_values(values))
    }

    pub fn same_kind(&self, other: &SoftTargets) -> bool {
        match (self, other) {
            (SoftTargets::Scalar { .. }, SoftTargets::Scalar { .. }) => true,
            (SoftTargets::ProbVector { classes: a, .. }, SoftTargets::ProbVector { classes: b, .. }) => a == b,
            _ => false,
        }
    }

    /// Index of the largest entry per row (lowest index on ties). Scalars
    /// are read as positive-class probabilities.
    pub fn argmax(&self) -> Vec<u32> {
        match self {
            SoftTargets::Scalar { values } => values.iter().map(|&p| u32::from(p > 0.5)).collect(),
            SoftTargets::ProbVector { .. } => (0..self.len()).map(|r| argmax(self.row(r)) as u32).collect(),
        }
    }

    /// Checks the type invariants for `task`.
    pub fn validate(&self, task: TaskKind) -> Result<()> {
        match (task, self) {
            (TaskKind::Regression, SoftTargets::Scalar { values }) => {
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Numerical("non-finite regression target".into()));
                }
                Ok(())
            }
            (TaskKind::Binary, SoftTargets::Scalar { values }) => {
                if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                    return Err(Error::Task(format!("binary target {v} outside [0, 1]")));
                }
                Ok(())
            }
            (TaskKind::Multiclass { classes }, SoftTargets::ProbVector { classes: c, .. }) if classes == *c => {
                self.check_probabilities()
            }
            _ => Err(Error::Task(format!("{} targets do not fit a {task:?} task", self.kind_name()))),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            SoftTargets::Scalar { .. } => "scalar",
            SoftTargets::ProbVector { .. } => "probability-vector",
        }
    }

    fn check_probabilities(&self) -> Result<()> {
        for r in 0..self.len() {
            let row = self.row(r);
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > SUM_TOLERANCE {
                return Err(Error::Numerical(format!("row {r} is not a probability vector: {row:?}")));
            }
        }
        Ok(())
    }

    fn with_values(&self, values: Vec<f64>) -> SoftTargets {
        match self {
            SoftTargets::Scalar { .. } => SoftTargets::Scalar { values },
            SoftTargets::ProbVector { classes, .. } => SoftTargets::ProbVector { classes: *classes, values },
        }
    }
}

pub fn one_hot(labels: &[u32], classes: usize) -> SoftTargets {
    let mut values = vec![0.0; labels.len() * classes];
    for (r, &c) in labels.iter().enumerate() {
        values[r * classes + c as usize] = 1.0;
    }
    SoftTargets::ProbVector { classes, values }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (j, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = j;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Real,
    Augmented,
}

/// Student training data: the real rows followed by augmented rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillSet {
    pub features: Features,
    pub targets: SoftTargets,
    pub origin: Vec<Origin>,
}

impl DistillSet {
    pub fn new(features: Features, targets: SoftTargets, origin: Vec<Origin>) -> Result<Self> {
        if features.n_rows() != targets.len() || origin.len() != targets.len() {
            return Err(Error::Shape(format!(
                "{} feature rows, {} targets, {} origin flags",
                features.n_rows(),
                targets.len(),
                origin.len()
            )));
        }
        Ok(DistillSet { features, targets, origin })
    }

    /// The labeled table alone (no augmentation).
    pub fn from_table(table: &Table) -> Result<Self> {
        let targets = SoftTargets::from_table(table)?;
        DistillSet::new(table.features(), targets, vec![Origin::Real; table.n_rows()])
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn real_rows(&self) -> Vec<usize> {
        (0..self.len()).filter(|&r| self.origin[r] == Origin::Real).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> DistillSet {
        DistillSet {
            features: self.features.select_rows(rows),
            targets: self.targets.select_rows(rows),
            origin: rows.iter().map(|&r| self.origin[r]).collect(),
        }
    }
}
