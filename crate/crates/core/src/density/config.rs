use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizePreset {
    Small,
    Large,
}

/// Architecture and optimizer settings of the self-attention density model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_hidden: usize,
    /// Width of the position-wise feedforward block, as a multiple of `d_hidden`.
    pub ff_multiplier: usize,
    /// Number of Gaussian mixture components per conditional.
    pub n_components: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub grad_clip_norm: f64,
    pub batch_size: usize,
    pub size_preset: SizePreset,
    /// Training sets with fewer rows than this use the small preset.
    pub small_large_threshold: usize,
    pub max_epochs: usize,
    pub patience: usize,
}

impl ModelConfig {
    pub const SMALL_LARGE_THRESHOLD: usize = 15_000;

    pub fn small() -> Self {
        ModelConfig {
            n_layers: 4,
            n_heads: 8,
            d_hidden: 32,
            ff_multiplier: 4,
            n_components: 100,
            dropout: 0.1,
            learning_rate: 3e-4,
            weight_decay: 1e-6,
            grad_clip_norm: 5.0,
            batch_size: 16,
            size_preset: SizePreset::Small,
            small_large_threshold: Self::SMALL_LARGE_THRESHOLD,
            max_epochs: 200,
            patience: 20,
        }
    }

    pub fn large() -> Self {
        ModelConfig { d_hidden: 128, batch_size: 256, size_preset: SizePreset::Large, ..Self::small() }
    }

    /// Preset chosen by training-set size.
    pub fn for_rows(n_rows: usize) -> Self {
        if n_rows < Self::SMALL_LARGE_THRESHOLD {
            Self::small()
        } else {
            Self::large()
        }
    }

    pub fn d_ff(&self) -> usize {
        self.d_hidden * self.ff_multiplier
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_heads == 0 || self.d_hidden % self.n_heads != 0 {
            return Err(invalid(format!("d_hidden {} not divisible by n_heads {}", self.d_hidden, self.n_heads)));
        }
        if self.d_hidden % 2 != 0 {
            return Err(invalid("d_hidden must be even for sin/cos positional encodings"));
        }
        if self.n_components == 0 {
            return Err(invalid("need at least one mixture component"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(invalid(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        if !(self.grad_clip_norm > 0.0) {
            return Err(invalid("grad_clip_norm must be positive"));
        }
        if self.batch_size == 0 || self.ff_multiplier == 0 || self.n_layers == 0 {
            return Err(invalid("batch_size, ff_multiplier and n_layers must be positive"));
        }
        if !(self.learning_rate > 0.0) || self.weight_decay < 0.0 {
            return Err(invalid("learning_rate must be positive and weight_decay non-negative"));
        }
        Ok(())
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::small()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_defaults() {
        let s = ModelConfig::small();
        assert_eq!((s.n_layers, s.n_heads, s.n_components), (4, 8, 100));
        assert_eq!((s.d_hidden, s.batch_size), (32, 16));
        assert_eq!((s.dropout, s.learning_rate, s.weight_decay, s.grad_clip_norm), (0.1, 3e-4, 1e-6, 5.0));
        let l = ModelConfig::large();
        assert_eq!((l.d_hidden, l.batch_size), (128, 256));
        assert_eq!(l.n_components, 100);
        assert!(s.validate().is_ok() && l.validate().is_ok());
    }

    #[test]
    fn preset_threshold() {
        assert_eq!(ModelConfig::for_rows(14_999).size_preset, SizePreset::Small);
        assert_eq!(ModelConfig::for_rows(15_000).size_preset, SizePreset::Large);
    }

    #[test]
    fn rejects_bad_heads() {
        let c = ModelConfig { n_heads: 5, ..ModelConfig::small() };
        assert!(c.validate().is_err());
    }
}
