pub mod augment;
pub mod data;
pub mod datasets;
pub mod density;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod gibbs;
pub mod learners;
pub mod rng;

pub use error::{Error, Result};
