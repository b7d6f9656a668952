//! Sample-quality metrics: mixture-kernel MMD, diffusion and
//! discriminator-based fidelity.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{DistillSet, Origin, SoftTargets};
use crate::data::{Features, ModelSpace, Table, TaskKind};
use crate::density::DensityModel;
use crate::error::{invalid, Error, Result};
use crate::gibbs::{diffusion_of, generate, GibbsConfig};
use crate::learners::{fit_forest, ForestConfig};
use crate::rng::{child_seed, substream};

pub const DEFAULT_BANDWIDTHS: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 16.0];
pub const MIN_ROWS_PER_SIDE: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmdConfig {
    pub bandwidths: Vec<f64>,
}

impl Default for MmdConfig {
    fn default() -> Self {
        MmdConfig { bandwidths: DEFAULT_BANDWIDTHS.to_vec() }
    }
}

fn kernel(a: &[f64], b: &[f64], inv_two_sigma_sq: &[f64]) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    inv_two_sigma_sq.iter().map(|c| (-d2 * c).exp()).sum()
}

fn mean_kernel(x: &[Vec<f64>], y: &[Vec<f64>], inv: &[f64]) -> f64 {
    let rows: Vec<f64> = x.par_iter().map(|a| y.iter().map(|b| kernel(a, b, inv)).sum::<f64>()).collect();
    rows.iter().sum::<f64>() / (x.len() as f64 * y.len() as f64)
}

/// Biased MMD with a sum of RBF kernels; returns `sqrt(max(mmd², 0))`.
pub fn mmd(x: &[Vec<f64>], y: &[Vec<f64>], config: &MmdConfig) -> Result<f64> {
    Ok(mmd_squared(x, y, config)?.max(0.0).sqrt())
}

/// The unfloored biased estimate `mean k(X,X) + mean k(Y,Y) - 2 mean k(X,Y)`.
pub fn mmd_squared(x: &[Vec<f64>], y: &[Vec<f64>], config: &MmdConfig) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::InsufficientData("MMD needs non-empty samples".into()));
    }
    let d = x[0].len();
    if x.iter().chain(y).any(|r| r.len() != d) {
        return Err(Error::Shape("MMD samples differ in dimension".into()));
    }
    if config.bandwidths.is_empty() || config.bandwidths.iter().any(|s| !(*s > 0.0)) {
        return Err(invalid("bandwidths must be positive"));
    }
    let inv: Vec<f64> = config.bandwidths.iter().map(|s| 1.0 / (2.0 * s * s)).collect();
    Ok(mean_kernel(x, x, &inv) + mean_kernel(y, y, &inv) - 2.0 * mean_kernel(x, y, &inv))
}

/// MMD between two feature frames after mapping both into `space`.
pub fn mmd_features(a: &Features, b: &Features, space: &ModelSpace, config: &MmdConfig) -> Result<f64> {
    mmd(&space.embed_all(a), &space.embed_all(b), config)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    /// Held-out accuracy of the real-vs-synthetic discriminator.
    pub accuracy: f64,
    /// `|accuracy - 0.5|`; lower means harder to tell apart.
    pub fidelity: f64,
    /// `0.5 - fidelity`; higher means harder to tell apart.
    pub fidelity_score: f64,
}

fn balanced(real: &Features, fake: &Features, seed: u64, tag: u64) -> Result<(Features, Features)> {
    let k = real.n_rows().min(fake.n_rows());
    if k < MIN_ROWS_PER_SIDE {
        return Err(Error::InsufficientData(format!(
            "fidelity needs {MIN_ROWS_PER_SIDE} rows per side, got {} real and {} synthetic",
            real.n_rows(),
            fake.n_rows()
        )));
    }
    let pick = |f: &Features, side: u64| -> Features {
        if f.n_rows() == k {
            return f.clone();
        }
        let mut rng = substream(seed, &[tag, side]);
        let mut rows = index::sample(&mut rng, f.n_rows(), k).into_vec();
        rows.sort_unstable();
        f.select_rows(&rows)
    };
    Ok((pick(real, 0), pick(fake, 1)))
}

fn labeled(real: &Features, fake: &Features) -> Result<DistillSet> {
    let features = real.concat(fake)?;
    let mut y = vec![1.0; real.n_rows()];
    y.extend(std::iter::repeat_n(0.0, fake.n_rows()));
    let origin = vec![Origin::Real; features.n_rows()];
    DistillSet::new(features, SoftTargets::scalar(y), origin)
}

/// Train a forest to separate `val_real` (label 1) from `gibbs_a` (label 0)
/// and score it on `test_real` against `gibbs_b`, both sides balanced.
pub fn sample_fidelity(
    train: &Table,
    val_real: &Table,
    test_real: &Table,
    gibbs_a: &Features,
    gibbs_b: &Features,
    seed: u64,
) -> Result<FidelityReport> {
    let fp = train.schema().fingerprint();
    if val_real.schema().fingerprint() != fp || test_real.schema().fingerprint() != fp {
        return Err(Error::Schema("real folds do not share the training schema".into()));
    }
    let columns = train.features().columns().to_vec();
    if gibbs_a.columns() != columns.as_slice() || gibbs_b.columns() != columns.as_slice() {
        return Err(Error::Schema("synthetic rows do not match the training features".into()));
    }
    let (fit_real, fit_fake) = balanced(&val_real.features(), gibbs_a, seed, 1)?;
    let (eval_real, eval_fake) = balanced(&test_real.features(), gibbs_b, seed, 2)?;
    let config = ForestConfig { seed: child_seed(seed, &[3]), ..ForestConfig::default() };
    let forest = fit_forest(&labeled(&fit_real, &fit_fake)?, TaskKind::Binary, &config)?;
    let eval = labeled(&eval_real, &eval_fake)?;
    let pred = forest.predict(&eval.features)?;
    let hits = pred.values().iter().zip(eval.targets.values()).filter(|(p, y)| (**p > 0.5) == (**y == 1.0)).count();
    let accuracy = hits as f64 / eval.len() as f64;
    let fidelity = (accuracy - 0.5).abs();
    Ok(FidelityReport { accuracy, fidelity, fidelity_score: 0.5 - fidelity })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub rounds: usize,
    pub mmd: f64,
    pub diffusion: f64,
    pub fidelity: FidelityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedRow {
    pub rounds: usize,
    pub mmd: f64,
    pub diffusion: f64,
    pub fidelity: f64,
    pub fidelity_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub rows: Vec<DiagnosticsRow>,
    /// Each column min-max scaled to [0, 1] (constant columns map to 0).
    pub normalized: Vec<NormalizedRow>,
}

/// For each round count: draw two disjoint sample sets of size n, then
/// measure MMD and diffusion against the training rows and fidelity against
/// the held-out rows (split in half between fitting and scoring).
pub fn diagnostics_suite(
    model: &DensityModel,
    train: &Table,
    heldout: &Table,
    rounds_list: &[usize],
    seed: u64,
    mmd_config: &MmdConfig,
) -> Result<DiagnosticsReport> {
    if rounds_list.is_empty() {
        return Err(invalid("no round counts to evaluate"));
    }
    let space = ModelSpace::fit(train);
    let n_hold = heldout.n_rows();
    let val_rows: Vec<usize> = (0..n_hold / 2).collect();
    let test_rows: Vec<usize> = (n_hold / 2..n_hold).collect();
    let (val_real, test_real) = (heldout.select_rows(&val_rows), heldout.select_rows(&test_rows));
    let train_x = train.features();
    let mut rows = Vec::with_capacity(rounds_list.len());
    for &k in rounds_list {
        let a = generate(model, train, &GibbsConfig { rounds: k, target_count: train.n_rows(), seed: child_seed(seed, &[k as u64, 0]) })?;
        let b = generate(model, train, &GibbsConfig { rounds: k, target_count: train.n_rows(), seed: child_seed(seed, &[k as u64, 1]) })?;
        rows.push(DiagnosticsRow {
            rounds: k,
            mmd: mmd_features(&a.features, &train_x, &space, mmd_config)?,
            diffusion: diffusion_of(&a, train)?,
            fidelity: sample_fidelity(train, &val_real, &test_real, &a.features, &b.features, child_seed(seed, &[k as u64, 2]))?,
        });
    }
    let norm = |f: &dyn Fn(&DiagnosticsRow) -> f64| -> Vec<f64> { min_max(&rows.iter().map(f).collect::<Vec<_>>()) };
    let (m, d, f, s) = (norm(&|r| r.mmd), norm(&|r| r.diffusion), norm(&|r| r.fidelity.fidelity), norm(&|r| r.fidelity.fidelity_score));
    let normalized = rows
        .iter()
        .enumerate()
        .map(|(i, r)| NormalizedRow { rounds: r.rounds, mmd: m[i], diffusion: d[i], fidelity: f[i], fidelity_score: s[i] })
        .collect();
    Ok(DiagnosticsReport { rows, normalized })
}

/// Min-max scaling to [0, 1]; a constant column maps to zeros.
pub fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        values.iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![0.0; values.len()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_value() {
        let cfg = MmdConfig { bandwidths: vec![1.0] };
        let m2 = mmd_squared(&[vec![0.0]], &[vec![1.0]], &cfg).unwrap();
        assert!((m2 - (2.0 - 2.0 * (-0.5f64).exp())).abs() < 1e-12);
        assert!((m2 - 0.78694).abs() < 1e-5);
    }

    #[test]
    fn identical_sets_vanish() {
        let x = vec![vec![0.1, 2.0], vec![-1.0, 0.5], vec![3.0, 3.0]];
        assert!(mmd_squared(&x, &x, &MmdConfig::default()).unwrap().abs() < 1e-12);
        assert_eq!(mmd(&x, &x, &MmdConfig::default()).unwrap(), mmd(&x, &x, &MmdConfig::default()).unwrap());
    }

    #[test]
    fn symmetric_and_permutation_invariant() {
        let x = vec![vec![0.0, 1.0], vec![2.0, -1.0], vec![0.5, 0.5]];
        let y = vec![vec![1.0, 1.0], vec![-2.0, 0.0]];
        let c = MmdConfig::default();
        let a = mmd(&x, &y, &c).unwrap();
        assert!((a - mmd(&y, &x, &c).unwrap()).abs() < 1e-12);
        let xp = vec![x[2].clone(), x[0].clone(), x[1].clone()];
        assert!((a - mmd(&xp, &y, &c).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn input_errors() {
        let c = MmdConfig::default();
        assert!(mmd(&[], &[vec![1.0]], &c).is_err());
        assert!(mmd(&[vec![1.0]], &[vec![1.0, 2.0]], &c).is_err());
        assert!(mmd(&[vec![1.0]], &[vec![1.0]], &MmdConfig { bandwidths: vec![0.0] }).is_err());
    }

    #[test]
    fn min_max_bounds() {
        assert_eq!(min_max(&[2.0, 4.0, 3.0]), vec![0.0, 1.0, 0.5]);
        assert_eq!(min_max(&[1.0, 1.0]), vec![0.0, 0.0]);
    }
}
