use std::collections::HashMap;
use std::path::Path;

use super::{ColumnData, ColumnKind, ColumnSpec, FeatureColumn, Features, Schema, TaskKind, Table};
use crate::error::{Error, Result};

const UNKNOWN_CATEGORY: &str = "<unknown>";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KindHint {
    Numeric,
    /// With `reserve_unknown`, an extra trailing category absorbs names not
    /// seen when the schema was built.
    Categorical { reserve_unknown: bool },
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub hints: HashMap<String, KindHint>,
    /// Target column name; the last column when unset.
    pub target: Option<String>,
}

fn read_records(path: &Path) -> Result<(Vec<String>, Vec<csv::StringRecord>)> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io { path: path.into(), source })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(file);
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut records = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::RaggedRow { row: row + 1, expected: header.len(), found: rec.len() });
        }
        for (c, cell) in rec.iter().enumerate() {
            if cell.trim().is_empty() {
                return Err(Error::MissingValue { row: row + 1, column: header[c].clone() });
            }
        }
        records.push(rec);
    }
    if records.is_empty() {
        return Err(Error::EmptyTable);
    }
    Ok((header, records))
}

fn parse_finite(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Load a CSV, inferring each column as numeric when every cell parses as a
/// finite real and categorical otherwise (codes in first-appearance order).
pub fn load_csv(path: &Path, options: &LoadOptions) -> Result<Table> {
    let (header, records) = read_records(path)?;
    let mut specs = Vec::with_capacity(header.len());
    let mut columns = Vec::with_capacity(header.len());
    let mut reserve = Vec::new();
    for (c, name) in header.iter().enumerate() {
        let cells = || records.iter().map(move |r| r[c].trim());
        let hint = options.hints.get(name).copied();
        let numeric = match hint {
            Some(KindHint::Numeric) => true,
            Some(KindHint::Categorical { .. }) => false,
            None => cells().all(|s| parse_finite(s).is_some()),
        };
        if numeric {
            let mut values = Vec::with_capacity(records.len());
            for (row, cell) in cells().enumerate() {
                values.push(parse_finite(cell).ok_or_else(|| {
                    Error::Schema(format!("row {}: column {name:?} value {cell:?} is not a finite number", row + 1))
                })?);
            }
            specs.push(ColumnSpec { name: name.clone(), kind: ColumnKind::Numeric });
            columns.push(ColumnData::Numeric(values));
        } else {
            let mut lookup: HashMap<&str, u32> = HashMap::new();
            let mut categories = Vec::new();
            let mut codes = Vec::with_capacity(records.len());
            for cell in cells() {
                let next = categories.len() as u32;
                let code = *lookup.entry(cell).or_insert_with(|| {
                    categories.push(cell.to_string());
                    next
                });
                codes.push(code);
            }
            if let Some(KindHint::Categorical { reserve_unknown: true }) = hint {
                categories.push(UNKNOWN_CATEGORY.to_string());
                reserve.push(name.clone());
            }
            specs.push(ColumnSpec { name: name.clone(), kind: ColumnKind::Categorical { categories } });
            columns.push(ColumnData::Categorical(codes));
        }
    }
    let target = match &options.target {
        Some(t) => header
            .iter()
            .position(|h| h == t)
            .ok_or_else(|| Error::Schema(format!("target column {t:?} not found")))?,
        None => header.len() - 1,
    };
    let task = match &specs[target].kind {
        ColumnKind::Numeric => TaskKind::Regression,
        ColumnKind::Categorical { categories } => match categories.len() {
            0 | 1 => return Err(Error::Schema("classification target needs at least two classes".into())),
            2 => TaskKind::Binary,
            c => TaskKind::Multiclass { classes: c },
        },
    };
    let mut schema = Schema::new(specs, target, task)?;
    schema.reserve_unknown = reserve;
    Table::new(schema, columns)
}

fn encode_cells(
    records: &[csv::StringRecord],
    col: usize,
    name: &str,
    kind: &ColumnKind,
    reserve_unknown: bool,
) -> Result<Vec<f64>> {
    records
        .iter()
        .map(|r| {
            let cell = r[col].trim();
            match kind {
                ColumnKind::Numeric => parse_finite(cell)
                    .ok_or_else(|| Error::Schema(format!("column {name:?} value {cell:?} is not a finite number"))),
                ColumnKind::Categorical { categories } => match categories.iter().position(|c| c == cell) {
                    Some(code) => Ok(code as f64),
                    None if reserve_unknown => Ok((categories.len() - 1) as f64),
                    None => Err(Error::UnknownCategory { column: name.to_string(), value: cell.to_string() }),
                },
            }
        })
        .collect()
}

fn locate(header: &[String], name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Schema(format!("column {name:?} missing from csv header")))
}

/// Load a labeled CSV against an existing schema (columns matched by name).
pub fn load_csv_with_schema(path: &Path, schema: &Schema) -> Result<Table> {
    let (header, records) = read_records(path)?;
    let mut columns = Vec::with_capacity(schema.columns.len());
    for spec in &schema.columns {
        let c = locate(&header, &spec.name)?;
        let reserve = schema.reserve_unknown.contains(&spec.name);
        let vals = encode_cells(&records, c, &spec.name, &spec.kind, reserve)?;
        columns.push(match spec.kind {
            ColumnKind::Numeric => ColumnData::Numeric(vals),
            ColumnKind::Categorical { .. } => ColumnData::Categorical(vals.into_iter().map(|v| v as u32).collect()),
        });
    }
    Table::new(schema.clone(), columns)
}

/// Load feature columns only (e.g. an augmented set) against a schema.
pub fn load_features_csv(path: &Path, schema: &Schema) -> Result<Features> {
    let (header, records) = read_records(path)?;
    let cols = schema.feature_columns();
    let mut per_col = Vec::with_capacity(cols.len());
    for col in &cols {
        let c = locate(&header, &col.name)?;
        let reserve = schema.reserve_unknown.contains(&col.name);
        per_col.push(encode_cells(&records, c, &col.name, &col.kind, reserve)?);
    }
    let mut data = Vec::with_capacity(records.len() * cols.len());
    for r in 0..records.len() {
        data.extend(per_col.iter().map(|v| v[r]));
    }
    Features::new(cols, data)
}

fn render(kind: &ColumnKind, v: f64) -> String {
    match kind {
        ColumnKind::Numeric => format!("{v}"),
        ColumnKind::Categorical { categories } => categories[v as usize].clone(),
    }
}

pub fn write_features_csv(path: &Path, features: &Features) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(features.columns().iter().map(|c| c.name.as_str()))?;
    for row in features.rows() {
        w.write_record(features.columns().iter().zip(row).map(|(c, &v)| render(&c.kind, v)))?;
    }
    w.flush().map_err(|source| Error::Io { path: path.into(), source })?;
    Ok(())
}

pub fn write_table_csv(path: &Path, table: &Table) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let schema = table.schema();
    w.write_record(schema.columns.iter().map(|c| c.name.as_str()))?;
    for r in 0..table.n_rows() {
        w.write_record(schema.columns.iter().zip(table.columns()).map(|(spec, col)| render(&spec.kind, col.get(r))))?;
    }
    w.flush().map_err(|source| Error::Io { path: path.into(), source })?;
    Ok(())
}

impl FeatureColumn {
    pub fn cardinality(&self) -> Option<usize> {
        self.kind.cardinality()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn csv_file(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn infers_numeric_and_categorical() {
        let f = csv_file("a,b\n1.0,x\n2.0,y\n3.0,x\n");
        let t = load_csv(f.path(), &LoadOptions::default()).unwrap();
        assert_eq!(t.schema().columns[0].kind, ColumnKind::Numeric);
        assert_eq!(t.schema().columns[1].kind.cardinality(), Some(2));
        assert_eq!(t.column(1), &ColumnData::Categorical(vec![0, 1, 0]));
        assert_eq!(t.task(), TaskKind::Binary);
    }

    #[test]
    fn one_bad_cell_makes_column_categorical() {
        let f = csv_file("v,y\n1,0.5\n2,0.1\nNaN-like text,0.3\n");
        let t = load_csv(f.path(), &LoadOptions::default()).unwrap();
        assert!(t.schema().columns[0].kind.is_categorical());
        assert_eq!(t.task(), TaskKind::Regression);
    }

    #[test]
    fn header_only_is_empty() {
        let f = csv_file("a,b\n");
        assert!(matches!(load_csv(f.path(), &LoadOptions::default()), Err(Error::EmptyTable)));
    }

    #[test]
    fn ragged_rows_rejected() {
        let f = csv_file("a,b\n1,2\n3\n");
        assert!(matches!(load_csv(f.path(), &LoadOptions::default()), Err(Error::RaggedRow { .. })));
    }

    #[test]
    fn empty_cells_rejected() {
        let f = csv_file("a,b\n1,\n3,4\n");
        assert!(matches!(load_csv(f.path(), &LoadOptions::default()), Err(Error::MissingValue { .. })));
    }

    #[test]
    fn unseen_category_needs_reservation() {
        let train = csv_file("c,y\nu,1\nv,2\n");
        let test = csv_file("c,y\nw,3\n");
        let t = load_csv(train.path(), &LoadOptions::default()).unwrap();
        assert!(matches!(load_csv_with_schema(test.path(), t.schema()), Err(Error::UnknownCategory { .. })));

        let mut opts = LoadOptions::default();
        opts.hints.insert("c".into(), KindHint::Categorical { reserve_unknown: true });
        let t = load_csv(train.path(), &opts).unwrap();
        let loaded = load_csv_with_schema(test.path(), t.schema()).unwrap();
        assert_eq!(loaded.column(0), &ColumnData::Categorical(vec![2]));
    }

    #[test]
    fn write_then_read_features() {
        let f = csv_file("a,c,y\n1.25,x,0\n-3,z,1\n");
        let t = load_csv(f.path(), &LoadOptions::default()).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_features_csv(out.path(), &t.features()).unwrap();
        let back = load_features_csv(out.path(), t.schema()).unwrap();
        assert_eq!(back, t.features());
    }
}
