//! Column-typed tables and the bridge into the continuous model space.

mod csv_io;
mod features;
mod quantize;
mod split;
mod standardize;

pub use csv_io::{
    load_csv, load_csv_with_schema, load_features_csv, write_features_csv, write_table_csv, KindHint, LoadOptions,
};
pub use features::{FeatureColumn, Features, ModelSpace, SpaceKind};
pub use quantize::{dequantize, dequantize_with, requantize};
pub use split::{split_train_val, SplitSpec};
pub use standardize::{destandardize, standardize, ColumnStats, StandardizationStats};

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnKind {
    Numeric,
    /// Category names indexed by code. Cardinality is `categories.len()`.
    Categorical { categories: Vec<String> },
}

impl ColumnKind {
    pub fn cardinality(&self) -> Option<usize> {
        match self {
            ColumnKind::Numeric => None,
            ColumnKind::Categorical { categories } => Some(categories.len()),
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self, ColumnKind::Categorical { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskKind {
    Regression,
    Binary,
    Multiclass { classes: usize },
}

impl TaskKind {
    pub fn is_classification(&self) -> bool {
        !matches!(self, TaskKind::Regression)
    }

    pub fn n_classes(&self) -> Option<usize> {
        match self {
            TaskKind::Regression => None,
            TaskKind::Binary => Some(2),
            TaskKind::Multiclass { classes } => Some(*classes),
        }
    }

    /// Width of a prediction vector: 1 for scalar targets, C for multiclass.
    pub fn output_dim(&self) -> usize {
        match self {
            TaskKind::Multiclass { classes } => *classes,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<ColumnSpec>,
    pub target: usize,
    pub task: TaskKind,
    /// Code that unseen category names map to when loading against this
    /// schema (always the last code of the column). Empty means unseen
    /// categories are an error.
    #[serde(default)]
    pub reserve_unknown: Vec<String>,
}

impl Schema {
    pub fn new(columns: Vec<ColumnSpec>, target: usize, task: TaskKind) -> Result<Self> {
        let schema = Schema { columns, target, task, reserve_unknown: Vec::new() };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.target >= self.columns.len() {
            return Err(Error::Schema(format!("target index {} out of range", self.target)));
        }
        if self.columns.len() < 2 {
            return Err(Error::Schema("need at least one feature column besides the target".into()));
        }
        let mut names = std::collections::HashSet::new();
        for c in &self.columns {
            if !names.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column name {:?}", c.name)));
            }
            if let ColumnKind::Categorical { categories } = &c.kind {
                if categories.is_empty() {
                    return Err(Error::Schema(format!("categorical column {:?} has no categories", c.name)));
                }
                let distinct: std::collections::HashSet<_> = categories.iter().collect();
                if distinct.len() != categories.len() {
                    return Err(Error::Schema(format!("duplicate category names in {:?}", c.name)));
                }
            }
        }
        let target = &self.columns[self.target];
        match (self.task, &target.kind) {
            (TaskKind::Regression, ColumnKind::Numeric) => {}
            (TaskKind::Binary, ColumnKind::Categorical { categories }) if categories.len() == 2 => {}
            (TaskKind::Multiclass { classes }, ColumnKind::Categorical { categories })
                if classes >= 3 && categories.len() == classes => {}
            (task, kind) => {
                return Err(Error::Schema(format!("task {task:?} incompatible with target kind {kind:?}")))
            }
        }
        Ok(())
    }

    pub fn feature_indices(&self) -> Vec<usize> {
        (0..self.columns.len()).filter(|&c| c != self.target).collect()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len() - 1
    }

    pub fn feature_columns(&self) -> Vec<FeatureColumn> {
        self.feature_indices()
            .into_iter()
            .map(|c| FeatureColumn { name: self.columns[c].name.clone(), kind: self.columns[c].kind.clone() })
            .collect()
    }

    /// Short content hash of the feature schema, used to tie checkpoints to data.
    pub fn fingerprint(&self) -> String {
        let cols = self.feature_columns();
        let bytes = serde_json::to_vec(&cols).expect("schema serializes");
        hex::encode(&Sha256::digest(&bytes)[..8])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "values", rename_all = "snake_case")]
pub enum ColumnData {
    Numeric(Vec<f64>),
    Categorical(Vec<u32>),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, row: usize) -> f64 {
        match self {
            ColumnData::Numeric(v) => v[row],
            ColumnData::Categorical(v) => v[row] as f64,
        }
    }

    fn select(&self, rows: &[usize]) -> ColumnData {
        match self {
            ColumnData::Numeric(v) => ColumnData::Numeric(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Categorical(v) => ColumnData::Categorical(rows.iter().map(|&r| v[r]).collect()),
        }
    }
}

/// A labeled data table stored column-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    schema: Schema,
    columns: Vec<ColumnData>,
    n_rows: usize,
}

impl Table {
    pub fn new(schema: Schema, columns: Vec<ColumnData>) -> Result<Self> {
        schema.validate()?;
        if columns.len() != schema.columns.len() {
            return Err(Error::Shape(format!(
                "{} column arrays for {} schema columns",
                columns.len(),
                schema.columns.len()
            )));
        }
        let n_rows = columns.first().map_or(0, ColumnData::len);
        for (spec, data) in schema.columns.iter().zip(&columns) {
            if data.len() != n_rows {
                return Err(Error::Shape(format!("column {:?} has {} rows, expected {n_rows}", spec.name, data.len())));
            }
            match (&spec.kind, data) {
                (ColumnKind::Numeric, ColumnData::Numeric(v)) => {
                    if v.iter().any(|x| !x.is_finite()) {
                        return Err(Error::Numerical(format!("non-finite value in column {:?}", spec.name)));
                    }
                }
                (ColumnKind::Categorical { categories }, ColumnData::Categorical(v)) => {
                    if let Some(&code) = v.iter().find(|&&c| c as usize >= categories.len()) {
                        return Err(Error::CodeOutOfRange { code, cardinality: categories.len() });
                    }
                }
                _ => return Err(Error::Schema(format!("column {:?} storage does not match its kind", spec.name))),
            }
        }
        Ok(Table { schema, columns, n_rows })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn task(&self) -> TaskKind {
        self.schema.task
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn columns(&self) -> &[ColumnData] {
        &self.columns
    }

    pub fn column(&self, idx: usize) -> &ColumnData {
        &self.columns[idx]
    }

    pub fn select_rows(&self, rows: &[usize]) -> Table {
        Table {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.select(rows)).collect(),
            n_rows: rows.len(),
        }
    }

    /// Feature columns (all but the target) as a row-major frame.
    pub fn features(&self) -> Features {
        let idx = self.schema.feature_indices();
        let mut data = Vec::with_capacity(self.n_rows * idx.len());
        for r in 0..self.n_rows {
            data.extend(idx.iter().map(|&c| self.columns[c].get(r)));
        }
        Features::new(self.schema.feature_columns(), data).expect("table invariants imply a valid frame")
    }

    /// Class codes of the target column (classification only).
    pub fn class_labels(&self) -> Result<&[u32]> {
        match &self.columns[self.schema.target] {
            ColumnData::Categorical(v) => Ok(v),
            ColumnData::Numeric(_) => Err(Error::Task("regression target has no class labels".into())),
        }
    }

    /// Target as reals: regression values, or class codes as floats.
    pub fn target_values(&self) -> Vec<f64> {
        let col = &self.columns[self.schema.target];
        (0..self.n_rows).map(|r| col.get(r)).collect()
    }

    /// Rebuild a labeled table from a feature frame and target column.
    pub fn from_features(schema: &Schema, features: &Features, target: ColumnData) -> Result<Table> {
        let idx = schema.feature_indices();
        if features.n_cols() != idx.len() {
            return Err(Error::Shape("feature width does not match schema".into()));
        }
        let mut columns = Vec::with_capacity(schema.columns.len());
        let mut fi = 0;
        let mut target = Some(target);
        for c in 0..schema.columns.len() {
            if c == schema.target {
                columns.push(target.take().expect("single target"));
            } else {
                let vals = features.column(fi);
                columns.push(match schema.columns[c].kind {
                    ColumnKind::Numeric => ColumnData::Numeric(vals),
                    ColumnKind::Categorical { .. } => ColumnData::Categorical(vals.iter().map(|&v| v as u32).collect()),
                });
                fi += 1;
            }
        }
        Table::new(schema.clone(), columns)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|source| Error::Io { path: path.into(), source })?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Table> {
        let file = std::fs::File::open(path).map_err(|source| Error::Io { path: path.into(), source })?;
        let table: Table = serde_json::from_reader(std::io::BufReader::new(file))?;
        Table::new(table.schema, table.columns)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Schema {
        Schema::new(
            vec![
                ColumnSpec { name: "a".into(), kind: ColumnKind::Numeric },
                ColumnSpec { name: "y".into(), kind: ColumnKind::Categorical { categories: vec!["n".into(), "p".into()] } },
            ],
            1,
            TaskKind::Binary,
        )
        .unwrap()
    }

    #[test]
    fn rejects_out_of_range_codes() {
        let err = Table::new(schema(), vec![ColumnData::Numeric(vec![1.0]), ColumnData::Categorical(vec![2])]);
        assert!(matches!(err, Err(Error::CodeOutOfRange { code: 2, cardinality: 2 })));
    }

    #[test]
    fn rejects_ragged_columns() {
        let err = Table::new(schema(), vec![ColumnData::Numeric(vec![1.0, 2.0]), ColumnData::Categorical(vec![0])]);
        assert!(matches!(err, Err(Error::Shape(_))));
    }

    #[test]
    fn duplicate_names_rejected() {
        let cols = vec![
            ColumnSpec { name: "a".into(), kind: ColumnKind::Numeric },
            ColumnSpec { name: "a".into(), kind: ColumnKind::Numeric },
        ];
        assert!(Schema::new(cols, 1, TaskKind::Regression).is_err());
    }

    #[test]
    fn json_checkpoint_round_trip() {
        let t = Table::new(schema(), vec![ColumnData::Numeric(vec![1.5, -2.0]), ColumnData::Categorical(vec![1, 0])]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.json");
        t.save_json(&p).unwrap();
        assert_eq!(Table::load_json(&p).unwrap(), t);
    }

    #[test]
    fn features_roundtrip_through_from_features() {
        let t = Table::new(schema(), vec![ColumnData::Numeric(vec![1.5, -2.0]), ColumnData::Categorical(vec![1, 0])]).unwrap();
        let f = t.features();
        let back = Table::from_features(t.schema(), &f, t.column(1).clone()).unwrap();
        assert_eq!(back, t);
    }
}
