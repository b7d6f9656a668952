//! Built-in learners: an MLP, a multi-output random forest and gradient
//! boosted trees, plus the stacked teacher and the selection protocol.

mod forest;
mod gbm;
mod loss;
mod mlp;
mod stack;
pub mod tree;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use forest::{fit_forest, Forest, ForestConfig};
pub use gbm::{fit_gbm, Gbm, GbmConfig};
pub use loss::{accuracy, brier_loss, mean_task_loss, r_squared, soft_cross_entropy, softmax, task_metric, PROB_FLOOR};
pub use mlp::{fit_mlp, InputColumn, InputEncoder, Mlp, MlpConfig};
pub use stack::{fit_teacher, StackEnsemble, StackEnsembleConfig};

use crate::augment::{DistillSet, SoftTargets};
use crate::data::{FeatureColumn, Features, Table, TaskKind};
use crate::error::{invalid, Error, Result};
use crate::rng::child_seed;

pub const CHECKPOINT_FORMAT: &str = "fastdad.learner";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Student families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudentKind {
    Mlp = 1,
    Forest = 2,
    Gbm = 3,
}

impl StudentKind {
    pub const ALL: [StudentKind; 3] = [StudentKind::Mlp, StudentKind::Forest, StudentKind::Gbm];

    pub fn name(self) -> &'static str {
        match self {
            StudentKind::Mlp => "mlp",
            StudentKind::Forest => "forest",
            StudentKind::Gbm => "gbm",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        StudentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| invalid(format!("unknown student {s:?} (expected mlp, forest or gbm)")))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfigs {
    pub mlp: MlpConfig,
    pub forest: ForestConfig,
    pub gbm: GbmConfig,
}

/// Seed of a student of `kind` within a run seeded by `seed`. The teacher's
/// level-0 refits use the same seeds, so they coincide with the BASE models.
pub fn student_seed(seed: u64, kind: StudentKind) -> u64 {
    child_seed(seed, &[0x57D, kind as u64])
}

/// Fit one student family with its config's seed replaced by `seed`.
pub fn fit_student(kind: StudentKind, dset: &DistillSet, task: TaskKind, configs: &LearnerConfigs, seed: u64) -> Result<Learner> {
    Ok(match kind {
        StudentKind::Mlp => Learner::Mlp(fit_mlp(dset, task, &MlpConfig { seed, ..configs.mlp.clone() })?),
        StudentKind::Forest => Learner::Forest(fit_forest(dset, task, &ForestConfig { seed, ..configs.forest.clone() })?),
        StudentKind::Gbm => Learner::Gbm(fit_gbm(dset, task, &GbmConfig { seed, ..configs.gbm.clone() })?),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Learner {
    Mlp(Mlp),
    Forest(Forest),
    Gbm(Gbm),
    Stack(Box<StackEnsemble>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Descriptor {
    pub kind: String,
    pub n_params: usize,
    pub trained_rows: usize,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    learner: Learner,
}

impl Learner {
    pub fn task(&self) -> TaskKind {
        match self {
            Learner::Mlp(m) => m.task,
            Learner::Forest(m) => m.task,
            Learner::Gbm(m) => m.task,
            Learner::Stack(m) => m.task,
        }
    }

    pub fn columns(&self) -> &[FeatureColumn] {
        match self {
            Learner::Mlp(m) => &m.columns,
            Learner::Forest(m) => &m.columns,
            Learner::Gbm(m) => &m.columns,
            Learner::Stack(m) => &m.columns,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Learner::Mlp(_) => "mlp",
            Learner::Forest(_) => "forest",
            Learner::Gbm(_) => "gbm",
            Learner::Stack(_) => "stack",
        }
    }

    /// Parameter count for the MLP, node count for tree models.
    pub fn n_params(&self) -> usize {
        match self {
            Learner::Mlp(m) => m.n_params(),
            Learner::Forest(m) => m.n_params(),
            Learner::Gbm(m) => m.n_params(),
            Learner::Stack(m) => m.n_params(),
        }
    }

    pub fn descriptor(&self) -> Descriptor {
        let trained_rows = match self {
            Learner::Mlp(m) => m.trained_rows,
            Learner::Forest(m) => m.trained_rows,
            Learner::Gbm(m) => m.trained_rows,
            Learner::Stack(m) => m.trained_rows,
        };
        Descriptor { kind: self.kind_name().into(), n_params: self.n_params(), trained_rows }
    }

    pub fn predict(&self, x: &Features) -> Result<SoftTargets> {
        if x.columns() != self.columns() {
            return Err(Error::Schema(format!("{} learner was trained on different feature columns", self.kind_name())));
        }
        match self {
            Learner::Mlp(m) => m.predict(x),
            Learner::Forest(m) => m.predict(x),
            Learner::Gbm(m) => m.predict(x),
            Learner::Stack(m) => m.predict(x),
        }
    }

    /// Accuracy (classification) or R² (regression) on a labeled table.
    pub fn evaluate(&self, table: &Table) -> Result<f64> {
        task_metric(&self.predict(&table.features())?, table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|source| Error::Io { path: path.into(), source })?;
        let ckpt = Checkpoint { format: CHECKPOINT_FORMAT.into(), version: CHECKPOINT_VERSION, learner: self.clone() };
        serde_json::to_writer(std::io::BufWriter::new(file), &ckpt)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Learner> {
        let file = std::fs::File::open(path).map_err(|source| Error::Io { path: path.into(), source })?;
        let ckpt: Checkpoint = serde_json::from_reader(std::io::BufReader::new(file))?;
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Schema(format!("unsupported learner checkpoint {} v{}", ckpt.format, ckpt.version)));
        }
        Ok(ckpt.learner)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub index: usize,
    pub metrics: Vec<f64>,
}

/// Best validation metric; ties go to fewer parameters, then to the
/// earlier candidate.
pub fn select_model(candidates: &[Learner], val: &Table) -> Result<Selection> {
    let metrics: Vec<f64> = candidates.iter().map(|c| c.evaluate(val)).collect::<Result<_>>()?;
    let sizes: Vec<usize> = candidates.iter().map(Learner::n_params).collect();
    let index = select_by_metric(&metrics, &sizes).ok_or_else(|| invalid("no candidates to select from"))?;
    Ok(Selection { index, metrics })
}

/// Argmax of `metrics` with the same tie-breaking as [`select_model`].
pub fn select_by_metric(metrics: &[f64], sizes: &[usize]) -> Option<usize> {
    (0..metrics.len()).reduce(|b, j| {
        if metrics[j] > metrics[b] || (metrics[j] == metrics[b] && sizes[j] < sizes[b]) {
            j
        } else {
            b
        }
    })
}

pub(crate) fn check_fit_inputs(dset: &DistillSet, task: TaskKind) -> Result<()> {
    if dset.is_empty() {
        return Err(Error::InsufficientData("cannot fit a learner on zero rows".into()));
    }
    dset.targets.validate(task)
}

/// Map raw averaged outputs onto valid predictions for `task`: binary
/// probabilities clipped to [0, 1], multiclass rows renormalized.
pub(crate) fn finish_outputs(task: TaskKind, mut values: Vec<f64>) -> Result<SoftTargets> {
    match task {
        TaskKind::Regression => Ok(SoftTargets::scalar(values)),
        TaskKind::Binary => {
            values.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
            Ok(SoftTargets::scalar(values))
        }
        TaskKind::Multiclass { classes } => {
            for row in values.chunks_mut(classes) {
                row.iter_mut().for_each(|v| *v = v.max(0.0));
                let z: f64 = row.iter().sum();
                if z > 0.0 {
                    row.iter_mut().for_each(|v| *v /= z);
                } else {
                    row.fill(1.0 / classes as f64);
                }
            }
            Ok(SoftTargets::ProbVector { classes, values })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_ties_prefer_smaller_models() {
        assert_eq!(select_by_metric(&[0.8, 0.9, 0.9], &[10, 50, 20]), Some(2));
        assert_eq!(select_by_metric(&[0.8, 0.8], &[10, 10]), Some(0));
        assert_eq!(select_by_metric(&[], &[]), None);
    }

    #[test]
    fn selection_is_scale_invariant() {
        let m = [0.3, 0.7, 0.5];
        let scaled: Vec<f64> = m.iter().map(|v| 3.0 * v + 1.0).collect();
        assert_eq!(select_by_metric(&m, &[1, 1, 1]), select_by_metric(&scaled, &[1, 1, 1]));
    }

    #[test]
    fn finishing_renormalizes_and_clips() {
        let t = finish_outputs(TaskKind::Multiclass { classes: 2 }, vec![0.25, 0.75, 0.0, 0.0]).unwrap();
        assert_eq!(t.values(), &[0.25, 0.75, 0.5, 0.5]);
        let b = finish_outputs(TaskKind::Binary, vec![-0.1, 1.3]).unwrap();
        assert_eq!(b.values(), &[0.0, 1.0]);
    }
}
