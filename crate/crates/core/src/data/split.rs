use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Table;
use crate::error::{invalid, Error, Result};
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { train_fraction: 0.9, seed: 0 }
    }
}

/// Disjoint train/validation partition with `round(fraction * n)` training
/// rows (clamped so both folds are non-empty). Classification tables are
/// stratified when every class has at least two rows.
pub fn split_train_val(table: &Table, spec: SplitSpec) -> Result<(Table, Table)> {
    let n = table.n_rows();
    if n < 2 {
        return Err(Error::InsufficientData(format!("cannot split {n} rows")));
    }
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(invalid(format!("train_fraction {} not in (0, 1)", spec.train_fraction)));
    }
    let n_train = ((spec.train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut rng = substream(spec.seed, &[0x5_91_17]);

    let strata = match (table.task().n_classes(), table.class_labels()) {
        (Some(c), Ok(labels)) => {
            let mut groups = vec![Vec::new(); c];
            for (r, &y) in labels.iter().enumerate() {
                groups[y as usize].push(r);
            }
            groups.retain(|g| !g.is_empty());
            if groups.iter().all(|g| g.len() >= 2) {
                Some(groups)
            } else {
                None
            }
        }
        _ => None,
    };

    let (mut train_idx, mut val_idx) = match strata {
        Some(mut groups) => {
            // largest-remainder allocation so per-class quotas sum to n_train
            let frac = n_train as f64 / n as f64;
            let mut quota: Vec<usize> = groups.iter().map(|g| (frac * g.len() as f64).floor() as usize).collect();
            let mut remainders: Vec<(f64, usize)> = groups
                .iter()
                .enumerate()
                .map(|(k, g)| (frac * g.len() as f64 - quota[k] as f64, k))
                .collect();
            remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let mut missing = n_train - quota.iter().sum::<usize>();
            for &(_, k) in remainders.iter().cycle() {
                if missing == 0 {
                    break;
                }
                if quota[k] < groups[k].len() {
                    quota[k] += 1;
                    missing -= 1;
                }
            }
            let mut train = Vec::with_capacity(n_train);
            let mut val = Vec::with_capacity(n - n_train);
            for (g, q) in groups.iter_mut().zip(quota) {
                g.shuffle(&mut rng);
                train.extend_from_slice(&g[..q]);
                val.extend_from_slice(&g[q..]);
            }
            (train, val)
        }
        None => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let val = idx.split_off(n_train);
            (idx, val)
        }
    };
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    Ok((table.select_rows(&train_idx), table.select_rows(&val_idx)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ColumnData, ColumnKind, ColumnSpec, Schema, TaskKind};

    fn labeled(x: Vec<f64>, y: Vec<u32>) -> Table {
        let schema = Schema::new(
            vec![
                ColumnSpec { name: "x".into(), kind: ColumnKind::Numeric },
                ColumnSpec { name: "y".into(), kind: ColumnKind::Categorical { categories: vec!["a".into(), "b".into()] } },
            ],
            1,
            TaskKind::Binary,
        )
        .unwrap();
        Table::new(schema, vec![ColumnData::Numeric(x), ColumnData::Categorical(y)]).unwrap()
    }

    #[test]
    fn ninety_ten_on_ten_rows() {
        let t = labeled((0..10).map(f64::from).collect(), vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1]);
        let (tr, va) = split_train_val(&t, SplitSpec::default()).unwrap();
        assert_eq!((tr.n_rows(), va.n_rows()), (9, 1));
    }

    #[test]
    fn deterministic_and_disjoint() {
        let t = labeled((0..37).map(f64::from).collect(), (0..37).map(|i| (i % 2) as u32).collect());
        let spec = SplitSpec { train_fraction: 0.7, seed: 42 };
        let (a, b) = split_train_val(&t, spec).unwrap();
        let (c, d) = split_train_val(&t, spec).unwrap();
        assert_eq!(a, c);
        assert_eq!(b, d);
        let mut all = Vec::new();
        let ColumnData::Numeric(xa) = a.column(0) else { unreachable!() };
        let ColumnData::Numeric(xb) = b.column(0) else { unreachable!() };
        all.extend(xa);
        all.extend(xb);
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..37).map(f64::from).collect::<Vec<_>>());
    }

    #[test]
    fn stratified_half_split() {
        // enumeration: with quotas 1/1 every stratified split puts one row of each class per fold
        let t = labeled(vec![0.0, 1.0, 2.0, 3.0], vec![0, 0, 1, 1]);
        for seed in 0..20 {
            let (tr, va) = split_train_val(&t, SplitSpec { train_fraction: 0.5, seed }).unwrap();
            let mut ytr = tr.class_labels().unwrap().to_vec();
            let mut yva = va.class_labels().unwrap().to_vec();
            ytr.sort();
            yva.sort();
            assert_eq!(ytr, vec![0, 1]);
            assert_eq!(yva, vec![0, 1]);
        }
    }

    #[test]
    fn too_few_rows() {
        let t = labeled(vec![0.0], vec![0]);
        assert!(split_train_val(&t, SplitSpec::default()).is_err());
    }
}
