#![allow(dead_code)]

use fastdad_core::data::{ColumnData, ColumnKind, ColumnSpec, Schema, Table, TaskKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Numeric feature columns plus a target column.
pub fn table(features: &[Vec<f64>], target: ColumnData, task: TaskKind) -> Table {
    let mut specs: Vec<ColumnSpec> =
        (0..features.len()).map(|j| ColumnSpec { name: format!("x{j}"), kind: ColumnKind::Numeric }).collect();
    let target_kind = match task {
        TaskKind::Regression => ColumnKind::Numeric,
        TaskKind::Binary => ColumnKind::Categorical { categories: vec!["0".into(), "1".into()] },
        TaskKind::Multiclass { classes } => ColumnKind::Categorical { categories: (0..classes).map(|c| c.to_string()).collect() },
    };
    specs.push(ColumnSpec { name: "y".into(), kind: target_kind });
    let schema = Schema::new(specs, features.len(), task).unwrap();
    let mut cols: Vec<ColumnData> = features.iter().map(|c| ColumnData::Numeric(c.clone())).collect();
    cols.push(target);
    Table::new(schema, cols).unwrap()
}

/// y = x on uniform x in [-1, 1].
pub fn identity_regression(n: usize, seed: u64) -> Table {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    table(&[x.clone()], ColumnData::Numeric(x), TaskKind::Regression)
}

/// Three classes from thresholds on the sum of two features, with noise.
pub fn three_class(n: usize, seed: u64) -> Table {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<u32> = a
        .iter()
        .zip(&b)
        .map(|(x, z)| {
            let s = x + z + rng.random_range(-0.3..0.3);
            if s < -0.5 {
                0
            } else if s < 0.5 {
                1
            } else {
                2
            }
        })
        .collect();
    table(&[a, b], ColumnData::Categorical(y), TaskKind::Multiclass { classes: 3 })
}
