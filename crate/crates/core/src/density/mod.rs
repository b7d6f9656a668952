//! Masked self-attention estimator of every univariate conditional
//! `p(x^i | x^{-i})`, trained by maximum pseudolikelihood.
//!
//! Each feature is a sequence position. The input at the masked position is
//! replaced by a learned mask token (plus its positional encoding) and no
//! attention head reads that position as a key or value, so the output at
//! position `i` is a function of `x^{-i}` only. A linear head maps the final
//! hidden state at `i` to a `K`-component Gaussian mixture.

mod adam;
mod checkpoint;
mod config;
mod kernels;
mod mixture;
mod model;
mod train;

pub use adam::{adam_step, clip_global_norm, AdamSettings, AdamState, BETA1, BETA2, EPSILON};
pub use checkpoint::FORMAT_VERSION;
pub use config::{ModelConfig, SizePreset};
pub use mixture::{log_sum_exp, mixture_logpdf, normal_logpdf, sigmoid, softplus, MixtureParams, SIGMA_FLOOR};
pub use model::{positional_encoding, DensityModel, EpochLog, NamedTensor};
pub use train::{fit, fit_with_observer};
