use rand::seq::SliceRandom;
use rand::Rng as _;

use super::adam::{adam_step, AdamSettings, AdamState};
use super::config::ModelConfig;
use super::model::{DensityModel, EpochLog};
use crate::data::{ModelSpace, Table};
use crate::error::{Error, Result};
use crate::rng::substream;

const TAG_EPOCH: u64 = 0xE90C;
const TAG_DROPOUT: u64 = 0xD0;
const TAG_VAL: u64 = 0x7A1;
const TAG_ENCODE: u64 = 0xE1C;

/// Train on `train`, selecting the epoch with the best validation
/// pseudolikelihood. Deterministic for a given seed.
pub fn fit(train: &Table, val: &Table, config: &ModelConfig, seed: u64) -> Result<DensityModel> {
    fit_with_observer(train, val, config, seed, |_| {})
}

pub fn fit_with_observer(
    train: &Table,
    val: &Table,
    config: &ModelConfig,
    seed: u64,
    mut observer: impl FnMut(&EpochLog),
) -> Result<DensityModel> {
    if train.n_rows() == 0 {
        return Err(Error::EmptyTable);
    }
    if val.n_rows() == 0 {
        return Err(Error::InsufficientData("validation fold is empty".into()));
    }
    if train.schema().feature_columns() != val.schema().feature_columns() {
        return Err(Error::Schema("train and validation schemas differ".into()));
    }
    let space = ModelSpace::fit(train);
    let mut model = DensityModel::new(config.clone(), space.clone(), train.schema().fingerprint(), seed)?;
    let d = model.n_features();
    let train_x = train.features();
    let val_x = val.features();

    let mut val_rng = substream(seed, &[TAG_VAL]);
    let val_rows: Vec<Vec<f64>> = val_x.rows().map(|r| space.encode(r, &mut val_rng)).collect();

    let settings = AdamSettings {
        learning_rate: config.learning_rate,
        weight_decay: config.weight_decay,
        grad_clip_norm: config.grad_clip_norm,
    };
    let mut adam = AdamState::new(model.n_params());
    let mut best_params = model.params().to_vec();
    let mut best_val = f64::NEG_INFINITY;
    let mut since_best = 0usize;
    let mut history = Vec::new();

    for epoch in 0..config.max_epochs {
        let mut rng = substream(seed, &[TAG_EPOCH, epoch as u64]);
        let mut order: Vec<usize> = (0..train_x.n_rows()).collect();
        order.shuffle(&mut rng);
        // fresh dequantization noise every epoch
        let mut enc_rng = substream(seed, &[TAG_ENCODE, epoch as u64]);
        let rows: Vec<Vec<f64>> = order.iter().map(|&r| space.encode(train_x.row(r), &mut enc_rng)).collect();

        let mut loss_sum = 0.0;
        for (b, batch) in rows.chunks(config.batch_size).enumerate() {
            let i = rng.random_range(0..d);
            let tags = [TAG_DROPOUT, epoch as u64, b as u64];
            let dropout = (config.dropout > 0.0).then_some((seed, &tags[..]));
            let (loss, grad) = model.loss_and_grad(batch, i, dropout)?;
            loss_sum += loss * batch.len() as f64;
            adam_step(model.params_mut(), &grad, &mut adam, settings)?;
        }
        if model.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Numerical(format!("non-finite parameters after epoch {epoch}")));
        }
        let val_pl = model.pseudolikelihood(&val_rows)?;
        let log = EpochLog { epoch, train_loss: loss_sum / rows.len() as f64, val_pseudolikelihood: val_pl };
        observer(&log);
        history.push(log);
        if val_pl > best_val {
            best_val = val_pl;
            best_params.copy_from_slice(model.params());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    model.params_mut().copy_from_slice(&best_params);
    model.history = history;
    Ok(model)
}
