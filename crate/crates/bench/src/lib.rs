//! Fixtures shared by the benchmarks.

use fastdad_core::data::{ModelSpace, Table};
use fastdad_core::datasets::Bundled;
use fastdad_core::density::{DensityModel, ModelConfig};

/// An untrained small-preset model over the spiral features. Timing does
/// not depend on the weights.
pub fn spiral_model(n: usize, seed: u64) -> (DensityModel, Table) {
    let train = Bundled::Spiral.generate(n, seed);
    let space = ModelSpace::fit(&train);
    let model = DensityModel::new(ModelConfig::small(), space, train.schema().fingerprint(), seed).expect("valid config");
    (model, train)
}
