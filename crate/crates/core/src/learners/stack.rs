use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gbm::{fit_gbm, Gbm, GbmConfig};
use super::loss::{mean_task_loss, task_metric};
use super::{fit_student, student_seed, Learner, LearnerConfigs, StudentKind};
use crate::augment::{DistillSet, SoftTargets};
use crate::data::{ColumnKind, FeatureColumn, Features, Table, TaskKind};
use crate::error::{invalid, Error, Result};
use crate::rng::{child_seed, substream};

const TAG_FOLDS: u64 = 0xF01D;
const TAG_META: u64 = 0x3E7A;
const BLEND_STEPS: [f64; 5] = [0.5, 0.25, 0.1, 0.05, 0.02];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackEnsembleConfig {
    pub folds: usize,
    /// Level-0 learners, in this order: MLP, forest, GBM.
    pub learners: LearnerConfigs,
    pub meta: GbmConfig,
    /// Blend the meta-learner with the level-0 refits on validation data.
    pub blend: bool,
}

impl Default for StackEnsembleConfig {
    fn default() -> Self {
        StackEnsembleConfig { folds: 10, learners: LearnerConfigs::default(), meta: GbmConfig::default(), blend: true }
    }
}

/// One stacking layer: level-0 refits feed a meta-GBM (with the original
/// features), and the final output is a convex blend of all of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackEnsemble {
    pub config: StackEnsembleConfig,
    pub task: TaskKind,
    pub columns: Vec<FeatureColumn>,
    pub base: Vec<Learner>,
    pub meta: Gbm,
    /// Blend weights over `[meta, base...]`.
    pub weights: Vec<f64>,
    /// Validation metric of the blend (accuracy or R²).
    pub validation_metric: f64,
    /// Validation metric of each blend component, in weight order.
    pub component_metrics: Vec<f64>,
    pub trained_rows: usize,
}

pub fn fit_teacher(train: &Table, val: &Table, config: &StackEnsembleConfig, seed: u64) -> Result<StackEnsemble> {
    if config.folds < 2 {
        return Err(invalid("stacking needs at least 2 folds"));
    }
    let n = train.n_rows();
    if n < config.folds {
        return Err(Error::InsufficientData(format!("{n} rows cannot fill {} folds", config.folds)));
    }
    if train.schema().fingerprint() != val.schema().fingerprint() || train.task() != val.task() {
        return Err(Error::Schema("training and validation tables differ in schema".into()));
    }
    let task = train.task();
    let dset = DistillSet::from_table(train)?;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut substream(seed, &[TAG_FOLDS]));
    let folds: Vec<Vec<usize>> = (0..config.folds)
        .map(|f| {
            let mut rows: Vec<usize> = perm.iter().skip(f).step_by(config.folds).copied().collect();
            rows.sort_unstable();
            rows
        })
        .collect();

    let mut oof = Vec::with_capacity(StudentKind::ALL.len());
    let mut base = Vec::with_capacity(StudentKind::ALL.len());
    for kind in StudentKind::ALL {
        let parts: Vec<Result<SoftTargets>> = (0..config.folds)
            .into_par_iter()
            .map(|f| {
                let held = &folds[f];
                let fit_rows: Vec<usize> = (0..n).filter(|r| held.binary_search(r).is_err()).collect();
                let fold_seed = child_seed(seed, &[kind as u64, f as u64 + 1]);
                let model = fit_student(kind, &dset.select_rows(&fit_rows), task, &config.learners, fold_seed)?;
                model.predict(&dset.features.select_rows(held))
            })
            .collect();
        let dim = task.output_dim();
        let mut values = vec![0.0; n * dim];
        for (held, part) in folds.iter().zip(parts) {
            let part = part?;
            for (k, &r) in held.iter().enumerate() {
                values[r * dim..(r + 1) * dim].copy_from_slice(part.row(k));
            }
        }
        oof.push(values);
        base.push(fit_student(kind, &dset, task, &config.learners, student_seed(seed, kind))?);
    }

    let meta_x = meta_features(&dset.features, &oof, task.output_dim())?;
    let meta_set = DistillSet::new(meta_x, dset.targets.clone(), dset.origin.clone())?;
    let meta_config = GbmConfig { seed: child_seed(seed, &[TAG_META]), ..config.meta.clone() };
    let meta = fit_gbm(&meta_set, task, &meta_config)?;

    let mut ensemble = StackEnsemble {
        config: config.clone(),
        task,
        columns: dset.features.columns().to_vec(),
        base,
        meta,
        weights: Vec::new(),
        validation_metric: f64::NAN,
        component_metrics: Vec::new(),
        trained_rows: n,
    };
    let components = ensemble.component_predictions(&val.features())?;
    let labels = SoftTargets::from_table(val)?;
    let score = |w: &[f64]| -> Result<(f64, f64)> {
        let p = blend(&components, w, task)?;
        Ok((task_metric(&p, val)?, mean_task_loss(&p, &labels, task)))
    };
    let corners: Vec<(f64, f64)> = (0..components.len())
        .map(|j| score(&unit(components.len(), j)))
        .collect::<Result<_>>()?;
    ensemble.component_metrics = corners.iter().map(|c| c.0).collect();
    let (mut weights, mut current) = if config.blend {
        let start = (1..corners.len()).fold(0, |b, j| if better(corners[j], corners[b]) { j } else { b });
        (unit(components.len(), start), corners[start])
    } else {
        (unit(components.len(), 0), corners[0])
    };
    if config.blend {
        let mut improved = true;
        let mut sweeps = 0;
        while improved && sweeps < 100 {
            improved = false;
            sweeps += 1;
            for step in BLEND_STEPS {
                for j in 0..weights.len() {
                    let trial: Vec<f64> = weights
                        .iter()
                        .enumerate()
                        .map(|(k, w)| (1.0 - step) * w + if k == j { step } else { 0.0 })
                        .collect();
                    let s = score(&trial)?;
                    if better(s, current) {
                        weights = trial;
                        current = s;
                        improved = true;
                    }
                }
            }
        }
    }
    ensemble.weights = weights;
    ensemble.validation_metric = current.0;
    Ok(ensemble)
}

/// Higher metric wins; equal metrics fall back to lower loss.
fn better(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1 < b.1 - 1e-12)
}

fn unit(len: usize, j: usize) -> Vec<f64> {
    let mut w = vec![0.0; len];
    w[j] = 1.0;
    w
}

fn blend(components: &[SoftTargets], weights: &[f64], task: TaskKind) -> Result<SoftTargets> {
    let mut values = vec![0.0; components[0].values().len()];
    for (c, &w) in components.iter().zip(weights) {
        if w != 0.0 {
            values.iter_mut().zip(c.values()).for_each(|(v, p)| *v += w * p);
        }
    }
    super::finish_outputs(task, values)
}

fn meta_features(x: &Features, oof: &[Vec<f64>], dim: usize) -> Result<Features> {
    let mut columns = x.columns().to_vec();
    for kind in StudentKind::ALL {
        for c in 0..dim {
            columns.push(FeatureColumn { name: format!("level0.{}.{c}", kind.name()), kind: ColumnKind::Numeric });
        }
    }
    let mut data = Vec::with_capacity(x.n_rows() * columns.len());
    for r in 0..x.n_rows() {
        data.extend_from_slice(x.row(r));
        for preds in oof {
            data.extend_from_slice(&preds[r * dim..(r + 1) * dim]);
        }
    }
    Features::new(columns, data)
}

impl StackEnsemble {
    /// Predictions of `[meta, base...]` on `x`.
    pub fn component_predictions(&self, x: &Features) -> Result<Vec<SoftTargets>> {
        let base: Vec<SoftTargets> = self.base.iter().map(|m| m.predict(x)).collect::<Result<_>>()?;
        let raw: Vec<Vec<f64>> = base.iter().map(|p| p.values().to_vec()).collect();
        let meta = self.meta.predict(&meta_features(x, &raw, self.task.output_dim())?)?;
        let mut all = vec![meta];
        all.extend(base);
        Ok(all)
    }

    pub fn predict(&self, x: &Features) -> Result<SoftTargets> {
        let components = self.component_predictions(x)?;
        blend(&components, &self.weights, self.task)
    }

    pub fn n_params(&self) -> usize {
        self.meta.n_params() + self.base.iter().map(Learner::n_params).sum::<usize>()
    }
}
