use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::quantize::{dequantize_with, requantize};
use super::{ColumnKind, StandardizationStats, Table};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureColumn {
    pub name: String,
    pub kind: ColumnKind,
}

/// Row-major feature matrix. Categorical cells hold integer codes as `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Features {
    columns: Vec<FeatureColumn>,
    n_rows: usize,
    data: Vec<f64>,
}

impl Features {
    pub fn new(columns: Vec<FeatureColumn>, data: Vec<f64>) -> Result<Self> {
        let d = columns.len();
        if d == 0 {
            return Err(Error::Shape("feature frame needs at least one column".into()));
        }
        if data.len() % d != 0 {
            return Err(Error::Shape(format!("{} values do not fill rows of width {d}", data.len())));
        }
        for (j, col) in columns.iter().enumerate() {
            match col.kind.cardinality() {
                Some(card) => {
                    for v in data.iter().skip(j).step_by(d) {
                        if v.fract() != 0.0 || *v < 0.0 || *v as usize >= card {
                            return Err(Error::CodeOutOfRange { code: *v as u32, cardinality: card });
                        }
                    }
                }
                None => {
                    if data.iter().skip(j).step_by(d).any(|v| !v.is_finite()) {
                        return Err(Error::Numerical(format!("non-finite value in column {:?}", col.name)));
                    }
                }
            }
        }
        Ok(Features { n_rows: data.len() / d, columns, data })
    }

    pub fn empty_like(&self) -> Features {
        Features { columns: self.columns.clone(), n_rows: 0, data: Vec::new() }
    }

    pub fn columns(&self) -> &[FeatureColumn] {
        &self.columns
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let d = self.columns.len();
        &self.data[r * d..(r + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.columns.len())
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(self.columns.len()).copied().collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Features {
        let mut data = Vec::with_capacity(rows.len() * self.n_cols());
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Features { columns: self.columns.clone(), n_rows: rows.len(), data }
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &Features) -> Result<Features> {
        if self.columns != other.columns {
            return Err(Error::Schema("cannot concatenate frames with different columns".into()));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Features { columns: self.columns.clone(), n_rows: self.n_rows + other.n_rows, data })
    }

    /// Repeat every row `times` times in place order (r0, r1, ..., r0, r1, ...).
    pub fn repeat(&self, times: usize) -> Features {
        Features { columns: self.columns.clone(), n_rows: self.n_rows * times, data: self.data.repeat(times) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpaceKind {
    Numeric { mean: f64, std: f64 },
    /// Dequantized code `c + u` rescaled by the moments of Uniform[0, cardinality).
    Categorical { cardinality: usize },
}

impl SpaceKind {
    fn affine(&self) -> (f64, f64) {
        match *self {
            SpaceKind::Numeric { mean, std } => (mean, std),
            SpaceKind::Categorical { cardinality } => {
                let c = cardinality as f64;
                (c / 2.0, c / 12f64.sqrt())
            }
        }
    }
}

/// Mapping between table space and the continuous, standardized space the
/// density model and the Gibbs chains operate in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpace {
    kinds: Vec<SpaceKind>,
}

impl ModelSpace {
    pub fn new(kinds: Vec<SpaceKind>) -> Self {
        ModelSpace { kinds }
    }

    pub fn from_stats(table: &Table, stats: &StandardizationStats) -> Self {
        let kinds = table
            .schema()
            .feature_indices()
            .into_iter()
            .map(|c| stats.columns()[c].space_kind())
            .collect();
        ModelSpace { kinds }
    }

    /// Standardization fitted on the feature columns of `train`.
    pub fn fit(train: &Table) -> Self {
        let (_, stats) = super::standardize(train);
        Self::from_stats(train, &stats)
    }

    pub fn kinds(&self) -> &[SpaceKind] {
        &self.kinds
    }

    pub fn dim(&self) -> usize {
        self.kinds.len()
    }

    /// Table-space row to model space, drawing fresh dequantization noise.
    pub fn encode(&self, row: &[f64], rng: &mut Rng) -> Vec<f64> {
        self.kinds
            .iter()
            .zip(row)
            .map(|(kind, &v)| {
                let (shift, scale) = kind.affine();
                let raw = match kind {
                    SpaceKind::Numeric { .. } => v,
                    SpaceKind::Categorical { .. } => dequantize_with(v as u32, rng.random::<f64>()),
                };
                (raw - shift) / scale
            })
            .collect()
    }

    /// Deterministic embedding for distances: categorical codes sit at the
    /// centre of their dequantization cell.
    pub fn embed(&self, row: &[f64]) -> Vec<f64> {
        self.kinds
            .iter()
            .zip(row)
            .map(|(kind, &v)| {
                let (shift, scale) = kind.affine();
                let raw = match kind {
                    SpaceKind::Numeric { .. } => v,
                    SpaceKind::Categorical { .. } => v + 0.5,
                };
                (raw - shift) / scale
            })
            .collect()
    }

    pub fn embed_all(&self, features: &Features) -> Vec<Vec<f64>> {
        features.rows().map(|r| self.embed(r)).collect()
    }

    /// Model-space point back to table space; categoricals are requantized.
    pub fn decode(&self, point: &[f64]) -> Vec<f64> {
        self.kinds
            .iter()
            .zip(point)
            .map(|(kind, &z)| {
                let (shift, scale) = kind.affine();
                let raw = z * scale + shift;
                match kind {
                    SpaceKind::Numeric { .. } => raw,
                    SpaceKind::Categorical { cardinality } => requantize(raw, *cardinality) as f64,
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn frame() -> Features {
        Features::new(
            vec![
                FeatureColumn { name: "x".into(), kind: ColumnKind::Numeric },
                FeatureColumn { name: "c".into(), kind: ColumnKind::Categorical { categories: vec!["a".into(), "b".into(), "c".into()] } },
            ],
            vec![1.0, 0.0, 2.0, 2.0, 3.0, 1.0],
        )
        .unwrap()
    }

    #[test]
    fn rejects_fractional_codes() {
        let mut cols = frame().columns().to_vec();
        cols.truncate(2);
        assert!(Features::new(cols, vec![0.0, 0.5]).is_err());
    }

    #[test]
    fn encode_decode_recovers_rows() {
        let space = ModelSpace::new(vec![SpaceKind::Numeric { mean: 2.0, std: 0.5 }, SpaceKind::Categorical { cardinality: 3 }]);
        let mut rng = substream(1, &[]);
        for row in frame().rows() {
            let z = space.encode(row, &mut rng);
            let back = space.decode(&z);
            assert!((back[0] - row[0]).abs() < 1e-12);
            assert_eq!(back[1], row[1]);
        }
    }

    #[test]
    fn concat_and_select() {
        let f = frame();
        let g = f.concat(&f).unwrap();
        assert_eq!(g.n_rows(), 6);
        assert_eq!(g.select_rows(&[4]).row(0), f.row(1));
    }
}
