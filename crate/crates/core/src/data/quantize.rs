use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// `code + u` with `u ~ Uniform[0, 1)`.
pub fn dequantize(code: u32, cardinality: usize, rng: &mut Rng) -> Result<f64> {
    if code as usize >= cardinality {
        return Err(Error::CodeOutOfRange { code, cardinality });
    }
    Ok(dequantize_with(code, rng.random::<f64>()))
}

/// Dequantization with an explicit noise draw `u` in `[0, 1)`.
#[inline]
pub fn dequantize_with(code: u32, u: f64) -> f64 {
    code as f64 + u
}

/// `clamp(floor(value), 0, cardinality - 1)`.
pub fn requantize(value: f64, cardinality: usize) -> u32 {
    assert!(cardinality >= 1, "cardinality must be positive");
    let top = (cardinality - 1) as f64;
    if value.is_nan() {
        return 0;
    }
    value.floor().clamp(0.0, top) as u32
}
