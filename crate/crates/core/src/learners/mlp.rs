use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::loss::{cross_entropy_unchecked, softmax_in_place};
use super::{check_fit_inputs, finish_outputs};
use crate::augment::{DistillSet, SoftTargets};
use crate::data::{ColumnKind, FeatureColumn, Features, TaskKind};
use crate::density::{adam_step, AdamSettings, AdamState, sigmoid};
use crate::error::{invalid, Result};
use crate::rng::substream;

const TAG_HOLDOUT: u64 = 0x401D;
const TAG_INIT: u64 = 0x1417;
const TAG_EPOCH: u64 = 0xE90C;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub weight_decay: f64,
    /// Fraction of real rows held out for early stopping.
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: vec![128, 128],
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 300,
            patience: 30,
            weight_decay: 1e-6,
            holdout_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputColumn {
    Numeric { mean: f64, std: f64 },
    OneHot { cardinality: usize },
}

/// One-hot categoricals and standardized numerics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputEncoder {
    pub columns: Vec<InputColumn>,
}

impl InputEncoder {
    /// Numeric statistics come from `rows` only.
    pub fn fit(x: &Features, rows: &[usize]) -> Self {
        let n = rows.len().max(1) as f64;
        let columns = x
            .columns()
            .iter()
            .enumerate()
            .map(|(j, col)| match col.kind {
                ColumnKind::Categorical { ref categories } => InputColumn::OneHot { cardinality: categories.len() },
                ColumnKind::Numeric => {
                    let mean = rows.iter().map(|&r| x.row(r)[j]).sum::<f64>() / n;
                    let var = rows.iter().map(|&r| (x.row(r)[j] - mean).powi(2)).sum::<f64>() / n;
                    let std = var.sqrt();
                    InputColumn::Numeric { mean, std: if std > 1e-12 * mean.abs().max(1.0) { std } else { 1.0 } }
                }
            })
            .collect();
        InputEncoder { columns }
    }

    pub fn width(&self) -> usize {
        self.columns
            .iter()
            .map(|c| match c {
                InputColumn::Numeric { .. } => 1,
                InputColumn::OneHot { cardinality } => *cardinality,
            })
            .sum()
    }

    pub fn encode_into(&self, row: &[f64], out: &mut [f64]) {
        let mut k = 0;
        for (c, &v) in self.columns.iter().zip(row) {
            match *c {
                InputColumn::Numeric { mean, std } => {
                    out[k] = (v - mean) / std;
                    k += 1;
                }
                InputColumn::OneHot { cardinality } => {
                    out[k..k + cardinality].fill(0.0);
                    out[k + v as usize] = 1.0;
                    k += cardinality;
                }
            }
        }
    }
}

/// ReLU multilayer perceptron. Multiclass outputs go through a softmax and
/// soft cross-entropy, binary through a sigmoid and the Brier score;
/// regression fits standardized targets with squared error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub config: MlpConfig,
    pub task: TaskKind,
    pub columns: Vec<FeatureColumn>,
    pub encoder: InputEncoder,
    /// Layer widths including input and output.
    pub sizes: Vec<usize>,
    /// Per layer: `out x in` weights followed by `out` biases.
    pub params: Vec<f64>,
    pub target_mean: f64,
    pub target_std: f64,
    pub epochs_run: usize,
    pub trained_rows: usize,
}

struct Workspace {
    acts: Vec<Vec<f64>>,
    grads: Vec<Vec<f64>>,
}

impl Mlp {
    fn offsets(sizes: &[usize]) -> Vec<usize> {
        let mut off = vec![0];
        for w in sizes.windows(2) {
            off.push(off.last().unwrap() + w[0] * w[1] + w[1]);
        }
        off
    }

    fn workspace(&self, batch: usize) -> Workspace {
        Workspace {
            acts: self.sizes.iter().map(|&s| vec![0.0; batch * s]).collect(),
            grads: self.sizes.iter().map(|&s| vec![0.0; batch * s]).collect(),
        }
    }

    /// Forward pass over `batch` encoded rows already in `ws.acts[0]`;
    /// leaves raw output scores in the last activation.
    fn forward(&self, ws: &mut Workspace, batch: usize) {
        let off = Self::offsets(&self.sizes);
        let n_layers = self.sizes.len() - 1;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off[l]..off[l] + fan_in * fan_out];
            let b = &self.params[off[l] + fan_in * fan_out..off[l + 1]];
            let (prev, next) = ws.acts.split_at_mut(l + 1);
            let input = &prev[l];
            let output = &mut next[0];
            for r in 0..batch {
                let x = &input[r * fan_in..(r + 1) * fan_in];
                let y = &mut output[r * fan_out..(r + 1) * fan_out];
                for (o, yo) in y.iter_mut().enumerate() {
                    let wo = &w[o * fan_in..(o + 1) * fan_in];
                    let mut s = b[o];
                    for (a, c) in wo.iter().zip(x) {
                        s += a * c;
                    }
                    *yo = if l + 1 < n_layers { s.max(0.0) } else { s };
                }
            }
        }
    }

    /// Gradient of the summed loss given `ws.grads[last]` (dL/d raw output).
    fn backward(&self, ws: &mut Workspace, batch: usize, grad: &mut [f64]) {
        let off = Self::offsets(&self.sizes);
        let n_layers = self.sizes.len() - 1;
        for l in (0..n_layers).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off[l]..off[l] + fan_in * fan_out];
            let (gw, gb) = grad[off[l]..off[l + 1]].split_at_mut(fan_in * fan_out);
            let (gprev, gnext) = ws.grads.split_at_mut(l + 1);
            let dout = &gnext[0];
            let din = &mut gprev[l];
            din[..batch * fan_in].fill(0.0);
            let input = &ws.acts[l];
            for r in 0..batch {
                let x = &input[r * fan_in..(r + 1) * fan_in];
                let dx = &mut din[r * fan_in..(r + 1) * fan_in];
                for (o, &g) in dout[r * fan_out..(r + 1) * fan_out].iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    gb[o] += g;
                    let wo = &w[o * fan_in..(o + 1) * fan_in];
                    let gwo = &mut gw[o * fan_in..(o + 1) * fan_in];
                    for ((gwi, xi), (dxi, wi)) in gwo.iter_mut().zip(x).zip(dx.iter_mut().zip(wo)) {
                        *gwi += g * xi;
                        *dxi += g * wi;
                    }
                }
            }
            if l > 0 {
                // ReLU: activations are zero exactly where the gate is closed.
                for (d, a) in din[..batch * fan_in].iter_mut().zip(&input[..batch * fan_in]) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
        }
    }

    fn load_rows(&self, ws: &mut Workspace, x: &Features, rows: &[usize]) {
        let w = self.sizes[0];
        for (k, &r) in rows.iter().enumerate() {
            self.encoder.encode_into(x.row(r), &mut ws.acts[0][k * w..(k + 1) * w]);
        }
    }

    /// Per-row loss on `rows`; writes dL/d raw output into the workspace
    /// when `with_grad` (scaled by `1 / rows.len()`).
    fn loss(&self, ws: &mut Workspace, y: &SoftTargets, rows: &[usize], with_grad: bool) -> f64 {
        let dim = *self.sizes.last().unwrap();
        let scale = 1.0 / rows.len() as f64;
        let mut total = 0.0;
        let last = self.sizes.len() - 1;
        for (k, &r) in rows.iter().enumerate() {
            let z = &ws.acts[last][k * dim..(k + 1) * dim];
            let t = y.row(r);
            let g = &mut ws.grads[last][k * dim..(k + 1) * dim];
            match self.task {
                TaskKind::Multiclass { .. } => {
                    let mut p = z.to_vec();
                    softmax_in_place(&mut p);
                    total += cross_entropy_unchecked(&p, t);
                    if with_grad {
                        g.iter_mut().zip(p.iter().zip(t)).for_each(|(g, (p, t))| *g = (p - t) * scale);
                    }
                }
                TaskKind::Binary => {
                    let s = sigmoid(z[0]);
                    total += (s - t[0]).powi(2);
                    g[0] = 2.0 * (s - t[0]) * s * (1.0 - s) * scale;
                }
                TaskKind::Regression => {
                    let target = (t[0] - self.target_mean) / self.target_std;
                    total += (z[0] - target).powi(2);
                    g[0] = 2.0 * (z[0] - target) * scale;
                }
            }
        }
        total * scale
    }

    fn eval_loss(&self, x: &Features, y: &SoftTargets, rows: &[usize]) -> f64 {
        let chunk = 256;
        let mut ws = self.workspace(chunk);
        let mut total = 0.0;
        for part in rows.chunks(chunk) {
            self.load_rows(&mut ws, x, part);
            self.forward(&mut ws, part.len());
            total += self.loss(&mut ws, y, part, false) * part.len() as f64;
        }
        total / rows.len() as f64
    }

    pub fn predict(&self, x: &Features) -> Result<SoftTargets> {
        let chunk = 256;
        let dim = *self.sizes.last().unwrap();
        let mut ws = self.workspace(chunk);
        let mut out = Vec::with_capacity(x.n_rows() * dim);
        let rows: Vec<usize> = (0..x.n_rows()).collect();
        let last = self.sizes.len() - 1;
        for part in rows.chunks(chunk) {
            self.load_rows(&mut ws, x, part);
            self.forward(&mut ws, part.len());
            for k in 0..part.len() {
                let z = &ws.acts[last][k * dim..(k + 1) * dim];
                match self.task {
                    TaskKind::Multiclass { .. } => {
                        let mut p = z.to_vec();
                        softmax_in_place(&mut p);
                        out.extend(p);
                    }
                    TaskKind::Binary => out.push(sigmoid(z[0])),
                    TaskKind::Regression => out.push(z[0] * self.target_std + self.target_mean),
                }
            }
        }
        finish_outputs(self.task, out)
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }
}

pub fn fit_mlp(dset: &DistillSet, task: TaskKind, config: &MlpConfig) -> Result<Mlp> {
    check_fit_inputs(dset, task)?;
    if config.hidden.contains(&0) || config.batch_size == 0 {
        return Err(invalid("MLP layer widths and batch size must be positive"));
    }
    let mut real = dset.real_rows();
    if real.is_empty() {
        real = (0..dset.len()).collect();
    }
    let mut rng = substream(config.seed, &[TAG_HOLDOUT]);
    let mut shuffled = real.clone();
    shuffled.shuffle(&mut rng);
    let n_hold = if shuffled.len() >= 2 {
        ((config.holdout_fraction * shuffled.len() as f64).round() as usize).clamp(1, shuffled.len() - 1)
    } else {
        0
    };
    let mut holdout: Vec<usize> = shuffled[..n_hold].to_vec();
    holdout.sort_unstable();
    let train: Vec<usize> = (0..dset.len()).filter(|r| holdout.binary_search(r).is_err()).collect();

    let encoder = InputEncoder::fit(&dset.features, &real);
    let (target_mean, target_std) = if task == TaskKind::Regression {
        let ys: Vec<f64> = real.iter().map(|&r| dset.targets.row(r)[0]).collect();
        let m = ys.iter().sum::<f64>() / ys.len() as f64;
        let s = (ys.iter().map(|y| (y - m).powi(2)).sum::<f64>() / ys.len() as f64).sqrt();
        (m, if s > 1e-12 * m.abs().max(1.0) { s } else { 1.0 })
    } else {
        (0.0, 1.0)
    };
    let mut sizes = vec![encoder.width()];
    sizes.extend(&config.hidden);
    sizes.push(task.output_dim());
    let offsets = Mlp::offsets(&sizes);
    let mut params = vec![0.0; *offsets.last().unwrap()];
    let mut init_rng = substream(config.seed, &[TAG_INIT]);
    for l in 0..sizes.len() - 1 {
        let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
        let std = if l + 2 == sizes.len() { (1.0 / fan_in as f64).sqrt() } else { (2.0 / fan_in as f64).sqrt() };
        let normal = Normal::new(0.0, std).expect("positive std");
        for p in &mut params[offsets[l]..offsets[l] + fan_in * fan_out] {
            *p = normal.sample(&mut init_rng);
        }
    }
    let mut model = Mlp {
        config: config.clone(),
        task,
        columns: dset.features.columns().to_vec(),
        encoder,
        sizes,
        params,
        target_mean,
        target_std,
        epochs_run: 0,
        trained_rows: dset.len(),
    };

    let settings = AdamSettings { learning_rate: config.learning_rate, weight_decay: config.weight_decay, grad_clip_norm: f64::INFINITY };
    let mut adam = AdamState::new(model.params.len());
    let mut ws = model.workspace(config.batch_size);
    let mut grad = vec![0.0; model.params.len()];
    let mut best = (f64::INFINITY, model.params.clone());
    let mut stale = 0;
    let mut order = train.clone();
    for epoch in 0..config.max_epochs {
        let mut rng = substream(config.seed, &[TAG_EPOCH, epoch as u64]);
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            model.load_rows(&mut ws, &dset.features, batch);
            model.forward(&mut ws, batch.len());
            model.loss(&mut ws, &dset.targets, batch, true);
            grad.fill(0.0);
            model.backward(&mut ws, batch.len(), &mut grad);
            adam_step(&mut model.params, &grad, &mut adam, settings)?;
        }
        model.epochs_run = epoch + 1;
        if holdout.is_empty() {
            continue;
        }
        let val = model.eval_loss(&dset.features, &dset.targets, &holdout);
        if val < best.0 {
            best = (val, model.params.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    if !holdout.is_empty() {
        model.params = best.1;
    }
    Ok(model)
}
