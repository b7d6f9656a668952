use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::{cross_entropy_unchecked, softmax_in_place};
use super::tree::{Targets, Tree, TreeConfig};
use super::{check_fit_inputs, finish_outputs};
use crate::augment::{DistillSet, SoftTargets};
use crate::data::{FeatureColumn, Features, TaskKind};
use crate::error::{invalid, Result};
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbmConfig {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for GbmConfig {
    fn default() -> Self {
        GbmConfig { n_rounds: 200, learning_rate: 0.1, max_depth: 6, min_leaf: 1, seed: 0 }
    }
}

/// Gradient-boosted regression trees. Multiclass boosts one tree per class
/// per round on the soft cross-entropy gradient in logit space; binary and
/// regression use least-squares boosting from the target mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gbm {
    pub config: GbmConfig,
    pub task: TaskKind,
    pub columns: Vec<FeatureColumn>,
    pub init: Vec<f64>,
    /// `rounds[t][c]` is the tree for output `c` in round `t`.
    pub rounds: Vec<Vec<Tree>>,
    /// Training loss before any round and after each round.
    pub loss_trace: Vec<f64>,
    pub trained_rows: usize,
}

pub fn fit_gbm(dset: &DistillSet, task: TaskKind, config: &GbmConfig) -> Result<Gbm> {
    check_fit_inputs(dset, task)?;
    if config.n_rounds == 0 {
        return Err(invalid("boosting needs at least one round"));
    }
    if !(config.learning_rate > 0.0) {
        return Err(invalid("learning rate must be positive"));
    }
    let n = dset.len();
    let dim = dset.targets.dim();
    let y = dset.targets.values();
    let multiclass = matches!(task, TaskKind::Multiclass { .. });
    let init: Vec<f64> = if multiclass {
        vec![0.0; dim]
    } else {
        vec![y.iter().sum::<f64>() / n as f64]
    };
    let tree_config = TreeConfig { max_depth: Some(config.max_depth), min_leaf: config.min_leaf, max_features: None };
    let rows: Vec<usize> = (0..n).collect();
    let mut raw: Vec<f64> = (0..n).flat_map(|_| init.iter().copied()).collect();
    let mut rounds = Vec::with_capacity(config.n_rounds);
    let mut loss_trace = vec![training_loss(&raw, y, dim, multiclass)];
    for t in 0..config.n_rounds {
        let mut residual = raw.clone();
        if multiclass {
            residual.chunks_mut(dim).for_each(softmax_in_place);
        }
        residual.iter_mut().zip(y).for_each(|(r, t)| *r = t - *r);
        let trees: Vec<Tree> = (0..dim)
            .into_par_iter()
            .map(|c| {
                let col: Vec<f64> = residual.iter().skip(c).step_by(dim).copied().collect();
                let mut rng = substream(config.seed, &[t as u64, c as u64]);
                Tree::fit(&dset.features, Targets { values: &col, dim: 1 }, &rows, &tree_config, &mut rng)
            })
            .collect();
        for (r, out) in raw.chunks_mut(dim).enumerate() {
            let row = dset.features.row(r);
            for (o, tree) in out.iter_mut().zip(&trees) {
                *o += config.learning_rate * tree.predict_row(row)[0];
            }
        }
        loss_trace.push(training_loss(&raw, y, dim, multiclass));
        rounds.push(trees);
    }
    Ok(Gbm {
        config: config.clone(),
        task,
        columns: dset.features.columns().to_vec(),
        init,
        rounds,
        loss_trace,
        trained_rows: n,
    })
}

fn training_loss(raw: &[f64], y: &[f64], dim: usize, multiclass: bool) -> f64 {
    let n = (y.len() / dim) as f64;
    if multiclass {
        raw.chunks(dim)
            .zip(y.chunks(dim))
            .map(|(z, t)| {
                let mut p = z.to_vec();
                softmax_in_place(&mut p);
                cross_entropy_unchecked(&p, t)
            })
            .sum::<f64>()
            / n
    } else {
        raw.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n
    }
}

impl Gbm {
    /// Raw scores: logits for multiclass, unclipped values otherwise.
    pub fn predict_raw(&self, x: &Features) -> Vec<f64> {
        let dim = self.init.len();
        let lr = self.config.learning_rate;
        let mut out = vec![0.0; x.n_rows() * dim];
        out.par_chunks_mut(dim).enumerate().for_each(|(r, acc)| {
            acc.copy_from_slice(&self.init);
            let row = x.row(r);
            for trees in &self.rounds {
                for (a, tree) in acc.iter_mut().zip(trees) {
                    *a += lr * tree.predict_row(row)[0];
                }
            }
        });
        out
    }

    pub fn predict(&self, x: &Features) -> Result<SoftTargets> {
        let mut raw = self.predict_raw(x);
        if let TaskKind::Multiclass { classes } = self.task {
            raw.chunks_mut(classes).for_each(softmax_in_place);
        }
        finish_outputs(self.task, raw)
    }

    pub fn n_params(&self) -> usize {
        self.rounds.iter().flatten().map(|t| t.nodes.len()).sum()
    }
}
