use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{Targets, Tree, TreeConfig};
use super::{check_fit_inputs, finish_outputs};
use crate::augment::{DistillSet, SoftTargets};
use crate::data::{FeatureColumn, Features, TaskKind};
use crate::error::{invalid, Result};
use crate::rng::substream;

const TAG_TREE: u64 = 0xF0;
const PREDICT_BLOCK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features per split; `None` means `ceil(sqrt(d))`.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig { n_trees: 100, max_depth: None, min_leaf: 1, max_features: None, bootstrap: true, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub config: ForestConfig,
    pub task: TaskKind,
    pub columns: Vec<FeatureColumn>,
    pub trees: Vec<Tree>,
    pub trained_rows: usize,
}

/// Average of multi-output trees on the (soft) target vectors.
pub fn fit_forest(dset: &DistillSet, task: TaskKind, config: &ForestConfig) -> Result<Forest> {
    check_fit_inputs(dset, task)?;
    if config.n_trees == 0 {
        return Err(invalid("forest needs at least one tree"));
    }
    let n = dset.len();
    let d = dset.features.n_cols();
    let tree_config = TreeConfig {
        max_depth: config.max_depth,
        min_leaf: config.min_leaf,
        max_features: Some(config.max_features.unwrap_or_else(|| (d as f64).sqrt().ceil() as usize).clamp(1, d)),
    };
    let y = Targets { values: dset.targets.values(), dim: dset.targets.dim() };
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = substream(config.seed, &[TAG_TREE, t as u64]);
            let rows: Vec<usize> = if config.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            Tree::fit(&dset.features, y, &rows, &tree_config, &mut rng)
        })
        .collect();
    Ok(Forest { config: config.clone(), task, columns: dset.features.columns().to_vec(), trees, trained_rows: n })
}

impl Forest {
    pub fn predict(&self, x: &Features) -> Result<SoftTargets> {
        let dim = self.trees[0].n_outputs;
        let scale = 1.0 / self.trees.len() as f64;
        let mut out = vec![0.0; x.n_rows() * dim];
        // Tree-outer over a block of rows keeps one tree in cache at a time.
        out.par_chunks_mut(PREDICT_BLOCK * dim).enumerate().for_each(|(b, block)| {
            for tree in &self.trees {
                for (k, acc) in block.chunks_mut(dim).enumerate() {
                    let row = x.row(b * PREDICT_BLOCK + k);
                    acc.iter_mut().zip(tree.predict_row(row)).for_each(|(a, v)| *a += v);
                }
            }
            block.iter_mut().for_each(|a| *a *= scale);
        });
        finish_outputs(self.task, out)
    }

    pub fn n_params(&self) -> usize {
        self.trees.iter().map(|t| t.nodes.len()).sum()
    }
}
