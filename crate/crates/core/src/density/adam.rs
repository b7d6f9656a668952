use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamSettings {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub grad_clip_norm: f64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        AdamState { first_moment: vec![0.0; n_params], second_moment: vec![0.0; n_params], step: 0 }
    }
}

/// Rescale `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

/// One AdamW update: global-norm clipping, bias-corrected moments, and
/// decoupled weight decay.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, settings: AdamSettings) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() || params.len() != state.second_moment.len() {
        return Err(Error::Shape(format!(
            "adam: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.first_moment.len()
        )));
    }
    let mut g = grads.to_vec();
    clip_global_norm(&mut g, settings.grad_clip_norm);
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    let lr = settings.learning_rate;
    for (((p, g), m), v) in params.iter_mut().zip(&g).zip(&mut state.first_moment).zip(&mut state.second_moment) {
        *m = BETA1 * *m + (1.0 - BETA1) * g;
        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
        let update = (*m / c1) / ((*v / c2).sqrt() + EPSILON);
        *p -= lr * settings.weight_decay * *p + lr * update;
    }
    Ok(())
}
