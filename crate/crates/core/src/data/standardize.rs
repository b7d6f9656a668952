use serde::{Deserialize, Serialize};

use super::{ColumnData, SpaceKind, Table};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnStats {
    Numeric { mean: f64, std: f64 },
    /// Categorical columns are mapped through dequantization instead.
    Dequantized { cardinality: usize },
}

impl ColumnStats {
    pub fn space_kind(&self) -> SpaceKind {
        match *self {
            ColumnStats::Numeric { mean, std } => SpaceKind::Numeric { mean, std },
            ColumnStats::Dequantized { cardinality } => SpaceKind::Categorical { cardinality },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    columns: Vec<ColumnStats>,
}

impl StandardizationStats {
    pub fn columns(&self) -> &[ColumnStats] {
        &self.columns
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len().max(1) as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    // constant columns: keep the shift, make the scale a no-op
    let std = if std <= 1e-12 * mean.abs().max(1.0) { 1.0 } else { std };
    (mean, std)
}

/// Rescale every numeric column to mean 0 and (population) std 1.
pub fn standardize(table: &Table) -> (Table, StandardizationStats) {
    let mut stats = Vec::with_capacity(table.columns.len());
    let mut columns = Vec::with_capacity(table.columns.len());
    for data in &table.columns {
        match data {
            ColumnData::Numeric(v) => {
                let (mean, std) = mean_std(v);
                stats.push(ColumnStats::Numeric { mean, std });
                columns.push(ColumnData::Numeric(v.iter().map(|x| (x - mean) / std).collect()));
            }
            ColumnData::Categorical(v) => {
                columns.push(ColumnData::Categorical(v.clone()));
                stats.push(ColumnStats::Dequantized { cardinality: 0 });
            }
        }
    }
    // cardinalities come from the schema, not the data
    for (s, spec) in stats.iter_mut().zip(&table.schema.columns) {
        if let ColumnStats::Dequantized { cardinality } = s {
            *cardinality = spec.kind.cardinality().unwrap_or(0);
        }
    }
    let out = Table { schema: table.schema.clone(), columns, n_rows: table.n_rows };
    (out, StandardizationStats { columns: stats })
}

pub fn destandardize(table: &Table, stats: &StandardizationStats) -> Table {
    let columns = table
        .columns
        .iter()
        .zip(&stats.columns)
        .map(|(data, s)| match (data, s) {
            (ColumnData::Numeric(v), ColumnStats::Numeric { mean, std }) => {
                ColumnData::Numeric(v.iter().map(|z| z * std + mean).collect())
            }
            (other, _) => other.clone(),
        })
        .collect();
    Table { schema: table.schema.clone(), columns, n_rows: table.n_rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ColumnKind, ColumnSpec, Schema, TaskKind};
    use proptest::prelude::*;

    fn table(x: Vec<f64>) -> Table {
        let n = x.len();
        let schema = Schema::new(
            vec![
                ColumnSpec { name: "x".into(), kind: ColumnKind::Numeric },
                ColumnSpec { name: "y".into(), kind: ColumnKind::Categorical { categories: vec!["a".into(), "b".into()] } },
            ],
            1,
            TaskKind::Binary,
        )
        .unwrap();
        Table::new(schema, vec![ColumnData::Numeric(x), ColumnData::Categorical(vec![0; n])]).unwrap()
    }

    #[test]
    fn two_point_column() {
        let (t, stats) = standardize(&table(vec![0.0, 2.0]));
        assert_eq!(stats.columns()[0], ColumnStats::Numeric { mean: 1.0, std: 1.0 });
        assert_eq!(t.column(0), &ColumnData::Numeric(vec![-1.0, 1.0]));
        assert_eq!(stats.columns()[1], ColumnStats::Dequantized { cardinality: 2 });
    }

    #[test]
    fn constant_column_clamps_std() {
        let (t, stats) = standardize(&table(vec![5.0, 5.0, 5.0]));
        assert_eq!(stats.columns()[0], ColumnStats::Numeric { mean: 5.0, std: 1.0 });
        assert_eq!(t.column(0), &ColumnData::Numeric(vec![0.0, 0.0, 0.0]));
    }

    proptest! {
        #[test]
        fn standardized_moments_and_round_trip(x in prop::collection::vec(-1e3f64..1e3, 2..60)) {
            let orig = table(x.clone());
            let (t, stats) = standardize(&orig);
            let ColumnData::Numeric(z) = t.column(0) else { unreachable!() };
            let mean = z.iter().sum::<f64>() / z.len() as f64;
            prop_assert!(mean.abs() < 1e-10);
            let back = destandardize(&t, &stats);
            let ColumnData::Numeric(xb) = back.column(0) else { unreachable!() };
            for (a, b) in x.iter().zip(xb) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }
}
