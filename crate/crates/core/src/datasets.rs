//! Bundled synthetic datasets.
//!
//! The spiral and checkerboard densities follow the usual 2-D toy
//! constructions; each table also carries a label so the same generator
//! serves the distillation pipeline.

use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{ColumnData, ColumnKind, ColumnSpec, Schema, TaskKind, Table};
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bundled {
    Spiral,
    Checkerboard,
    Friedman,
}

impl Bundled {
    pub fn generate(self, n: usize, seed: u64) -> Table {
        match self {
            Bundled::Spiral => spiral(n, seed),
            Bundled::Checkerboard => checkerboard(n, seed),
            Bundled::Friedman => friedman(n, seed),
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "spiral" => Some(Bundled::Spiral),
            "checkerboard" => Some(Bundled::Checkerboard),
            "friedman" => Some(Bundled::Friedman),
            _ => None,
        }
    }
}

fn class_names(c: usize) -> Vec<String> {
    (0..c).map(|k| format!("c{k}")).collect()
}

fn two_features(names: [&str; 2], target: &str, classes: usize, task: TaskKind) -> Schema {
    Schema::new(
        vec![
            ColumnSpec { name: names[0].into(), kind: ColumnKind::Numeric },
            ColumnSpec { name: names[1].into(), kind: ColumnKind::Numeric },
            ColumnSpec { name: target.into(), kind: ColumnKind::Categorical { categories: class_names(classes) } },
        ],
        2,
        task,
    )
    .expect("static schema")
}

/// Two interleaved spiral arms with Gaussian jitter; the label is the arm.
pub fn spiral(n: usize, seed: u64) -> Table {
    let mut rng = substream(seed, &[0x5B1]);
    let (mut x1, mut x2, mut y) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for r in 0..n {
        let t = rng.random::<f64>().sqrt() * 3.0 * std::f64::consts::PI;
        let arm = (r % 2) as u32;
        let sign = if arm == 0 { 1.0 } else { -1.0 };
        let a = sign * -t.cos() * t + rng.random::<f64>() * 0.5;
        let b = sign * t.sin() * t + rng.random::<f64>() * 0.5;
        x1.push(a / 3.0 + 0.1 * rng.sample::<f64, _>(StandardNormal));
        x2.push(b / 3.0 + 0.1 * rng.sample::<f64, _>(StandardNormal));
        y.push(arm);
    }
    Table::new(
        two_features(["x1", "x2"], "arm", 2, TaskKind::Binary),
        vec![ColumnData::Numeric(x1), ColumnData::Numeric(x2), ColumnData::Categorical(y)],
    )
    .expect("valid table")
}

/// Points from the 2-D checkerboard density (half of a 4x4 grid of unit
/// cells on [-2, 2]^2). Labels come from a rotated unit grid with three
/// classes and 5% label noise.
pub fn checkerboard(n: usize, seed: u64) -> Table {
    let mut rng = substream(seed, &[0xC4EC]);
    let (mut x1, mut x2, mut y) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let (s, c) = 0.3f64.sin_cos();
    for _ in 0..n {
        let a = rng.random::<f64>() * 4.0 - 2.0;
        let b0 = rng.random::<f64>() - rng.random_range(0..2) as f64 * 2.0;
        let b = b0 + (a.floor().rem_euclid(2.0));
        let u = c * a - s * b;
        let v = s * a + c * b;
        let mut class = ((u.floor() + v.floor()).rem_euclid(3.0)) as u32;
        if rng.random::<f64>() < 0.05 {
            class = rng.random_range(0..3);
        }
        x1.push(a);
        x2.push(b);
        y.push(class);
    }
    Table::new(
        two_features(["x1", "x2"], "class", 3, TaskKind::Multiclass { classes: 3 }),
        vec![ColumnData::Numeric(x1), ColumnData::Numeric(x2), ColumnData::Categorical(y)],
    )
    .expect("valid table")
}

/// Friedman #1 regression with five informative features and unit noise.
pub fn friedman(n: usize, seed: u64) -> Table {
    let mut rng = substream(seed, &[0xF1E]);
    let noise = Normal::new(0.0, 1.0).expect("valid normal");
    let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(n); 5];
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..5).map(|_| rng.random::<f64>()).collect();
        let t = 10.0 * (std::f64::consts::PI * x[0] * x[1]).sin() + 20.0 * (x[2] - 0.5).powi(2) + 10.0 * x[3] + 5.0 * x[4];
        y.push(t + noise.sample(&mut rng));
        for (c, v) in cols.iter_mut().zip(x) {
            c.push(v);
        }
    }
    let mut specs: Vec<ColumnSpec> =
        (0..5).map(|j| ColumnSpec { name: format!("x{}", j + 1), kind: ColumnKind::Numeric }).collect();
    specs.push(ColumnSpec { name: "y".into(), kind: ColumnKind::Numeric });
    let mut columns: Vec<ColumnData> = cols.into_iter().map(ColumnData::Numeric).collect();
    columns.push(ColumnData::Numeric(y));
    Table::new(Schema::new(specs, 5, TaskKind::Regression).expect("static schema"), columns).expect("valid table")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_deterministic_and_sized() {
        for b in [Bundled::Spiral, Bundled::Checkerboard, Bundled::Friedman] {
            let t = b.generate(50, 3);
            assert_eq!(t.n_rows(), 50);
            assert_eq!(t, b.generate(50, 3));
            assert_ne!(t, b.generate(50, 4));
        }
    }

    #[test]
    fn checkerboard_points_lie_on_occupied_cells() {
        let t = checkerboard(500, 1);
        let f = t.features();
        for row in f.rows() {
            let parity = (row[0].floor() + row[1].floor()).rem_euclid(2.0);
            assert_eq!(parity, 0.0, "{row:?}");
        }
        let labels = t.class_labels().unwrap();
        for c in 0..3 {
            assert!(labels.iter().filter(|&&y| y == c).count() > 100);
        }
    }
}
