//! Gibbs sampling from the learned conditionals, with every chain started
//! at a training row.

use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{write_features_csv, Features, ModelSpace, Table};
use crate::density::{DensityModel, MixtureParams};
use crate::error::{invalid, Error, Result};
use crate::rng::{substream, Rng};

const TAG_CHAIN: u64 = 0xC4A1;
const TAG_SUBSAMPLE: u64 = 0x5B5;
const TAG_NOISE_INIT: u64 = 0x9015E;

/// Upper bound on the default augmentation size.
pub const MAX_AUGMENTED_ROWS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GibbsConfig {
    pub rounds: usize,
    pub target_count: usize,
    pub seed: u64,
}

impl GibbsConfig {
    /// `m = min(multiplier * n, 10^6)`.
    pub fn default_count(n_rows: usize, multiplier: usize) -> usize {
        (multiplier * n_rows).min(MAX_AUGMENTED_ROWS)
    }

    pub fn for_rows(n_rows: usize, rounds: usize, seed: u64) -> Self {
        GibbsConfig { rounds, target_count: Self::default_count(n_rows, 10), seed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub origin_row: usize,
    pub rounds: usize,
}

/// Synthetic feature rows in table space plus the chain each came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedSet {
    pub features: Features,
    pub provenance: Vec<Provenance>,
}

impl AugmentedSet {
    pub fn len(&self) -> usize {
        self.features.n_rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows as CSV plus a JSON sidecar with per-row provenance.
    pub fn save(&self, csv_path: &Path, sidecar: &Path) -> Result<()> {
        write_features_csv(csv_path, &self.features)?;
        let json = serde_json::to_string(&self.provenance)?;
        std::fs::write(sidecar, json).map_err(|source| Error::Io { path: sidecar.into(), source })
    }
}

/// One Markov chain in model space.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub current: Vec<f64>,
    pub origin_row: usize,
    pub rounds_done: usize,
    pub order: Vec<usize>,
    replica: usize,
    seed: u64,
    rng: Rng,
}

impl ChainState {
    /// Start a chain at `row` (table space). Dequantization noise and the
    /// first feature order come from the chain's round-0 stream.
    pub fn start(space: &ModelSpace, row: &[f64], origin_row: usize, replica: usize, seed: u64) -> Self {
        let mut rng = chain_stream(seed, origin_row, replica, 0);
        let current = space.encode(row, &mut rng);
        let mut order: Vec<usize> = (0..space.dim()).collect();
        order.shuffle(&mut rng);
        ChainState { current, origin_row, rounds_done: 0, order, replica, seed, rng }
    }

    /// Start from an arbitrary model-space point (no training row).
    pub fn start_at(point: Vec<f64>, replica: usize, seed: u64) -> Self {
        let mut rng = chain_stream(seed, usize::MAX, replica, 0);
        let mut order: Vec<usize> = (0..point.len()).collect();
        order.shuffle(&mut rng);
        ChainState { current: point, origin_row: usize::MAX, rounds_done: 0, order, replica, seed, rng }
    }

    pub fn replica(&self) -> usize {
        self.replica
    }
}

/// Substream keyed by (seed, origin row, replica, round).
pub fn chain_stream(seed: u64, origin_row: usize, replica: usize, round: usize) -> Rng {
    substream(seed, &[TAG_CHAIN, origin_row as u64, replica as u64, round as u64])
}

/// Ancestral draw: component `k` with probability `w_k`, then `N(mu_k, sigma_k^2)`.
pub fn sample_mixture(params: &MixtureParams, rng: &mut Rng) -> f64 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut k = params.weights.len() - 1;
    for (c, w) in params.weights.iter().enumerate() {
        acc += w;
        if u < acc {
            k = c;
            break;
        }
    }
    let z: f64 = StandardNormal.sample(rng);
    params.means[k] + params.stds[k] * z
}

/// Resample coordinate `i` from its learned conditional.
pub fn gibbs_step(model: &DensityModel, chain: &mut ChainState, i: usize) -> Result<()> {
    if chain.current.len() != model.n_features() {
        return Err(Error::Schema(format!(
            "chain has {} features, model has {}",
            chain.current.len(),
            model.n_features()
        )));
    }
    let mix = model.conditional(&chain.current, i)?;
    chain.current[i] = sample_mixture(&mix, &mut chain.rng);
    Ok(())
}

/// One pass over all features in `chain.order`, then a fresh order.
pub fn gibbs_round(model: &DensityModel, chain: &mut ChainState) -> Result<()> {
    let order = chain.order.clone();
    for i in order {
        gibbs_step(model, chain, i)?;
    }
    chain.rounds_done += 1;
    chain.rng = chain_stream(chain.seed, chain.origin_row, chain.replica, chain.rounds_done);
    chain.order.shuffle(&mut chain.rng);
    Ok(())
}

/// Run `ceil(m / n)` chains per training row for exactly `k` rounds and keep
/// the final states, subsampled uniformly to exactly `m` rows.
pub fn generate(model: &DensityModel, train: &Table, config: &GibbsConfig) -> Result<AugmentedSet> {
    if config.target_count < 1 {
        return Err(invalid("target_count must be at least 1"));
    }
    if train.schema().fingerprint() != model.schema_fingerprint() {
        return Err(Error::Schema("density model was fit on a different schema".into()));
    }
    let n = train.n_rows();
    if n == 0 {
        return Err(Error::EmptyTable);
    }
    let features = train.features();
    let replicas = config.target_count.div_ceil(n);
    let jobs: Vec<(usize, usize)> = (0..n).flat_map(|r| (0..replicas).map(move |k| (r, k))).collect();
    let space = model.space();
    let finals: Vec<Result<Vec<f64>>> = jobs
        .par_iter()
        .map(|&(row, replica)| {
            if config.rounds == 0 {
                // no coordinate is ever resampled; skip the lossy encode/decode
                return Ok(features.row(row).to_vec());
            }
            let mut chain = ChainState::start(space, features.row(row), row, replica, config.seed);
            for _ in 0..config.rounds {
                gibbs_round(model, &mut chain)?;
            }
            Ok(space.decode(&chain.current))
        })
        .collect();

    let keep: Vec<usize> = if jobs.len() > config.target_count {
        let mut rng = substream(config.seed, &[TAG_SUBSAMPLE]);
        let mut idx = index::sample(&mut rng, jobs.len(), config.target_count).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..jobs.len()).collect()
    };
    let mut data = Vec::with_capacity(keep.len() * features.n_cols());
    let mut provenance = Vec::with_capacity(keep.len());
    let mut finals: Vec<Option<Result<Vec<f64>>>> = finals.into_iter().map(Some).collect();
    for j in keep {
        let row = finals[j].take().expect("each job used once")?;
        data.extend(row);
        provenance.push(Provenance { origin_row: jobs[j].0, rounds: config.rounds });
    }
    Ok(AugmentedSet { features: Features::new(features.columns().to_vec(), data)?, provenance })
}

/// Chains started at standard-normal noise in model space instead of data.
pub fn sample_from_noise(model: &DensityModel, columns: &Features, count: usize, rounds: usize, seed: u64) -> Result<Features> {
    let d = model.n_features();
    let rows: Vec<Result<Vec<f64>>> = (0..count)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(seed, &[TAG_NOISE_INIT, c as u64]);
            let start: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let mut chain = ChainState::start_at(start, c, seed);
            for _ in 0..rounds {
                gibbs_round(model, &mut chain)?;
            }
            Ok(model.space().decode(&chain.current))
        })
        .collect();
    let mut data = Vec::with_capacity(count * d);
    for r in rows {
        data.extend(r?);
    }
    Features::new(columns.columns().to_vec(), data)
}

/// Mean Euclidean distance, in standardized space, between each sample and
/// the training row its chain started from.
pub fn diffusion_of(aug: &AugmentedSet, train: &Table) -> Result<f64> {
    if aug.provenance.len() != aug.len() {
        return Err(Error::InsufficientData("augmented set lacks per-row provenance".into()));
    }
    if aug.is_empty() {
        return Ok(0.0);
    }
    let space = ModelSpace::fit(train);
    let features = train.features();
    let mut total = 0.0;
    for (row, prov) in aug.features.rows().zip(&aug.provenance) {
        if prov.origin_row >= features.n_rows() {
            return Err(invalid(format!("origin row {} outside training table", prov.origin_row)));
        }
        let a = space.embed(row);
        let b = space.embed(features.row(prov.origin_row));
        total += a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    }
    Ok(total / aug.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SpaceKind;
    use crate::density::ModelConfig;

    fn tiny_model(d: usize) -> DensityModel {
        let cfg = ModelConfig { n_layers: 1, n_heads: 2, d_hidden: 8, n_components: 3, ..ModelConfig::small() };
        let space = ModelSpace::new(vec![SpaceKind::Numeric { mean: 0.0, std: 1.0 }; d]);
        let mut m = DensityModel::new(cfg, space, "t".into(), 1).unwrap();
        m.jitter(2, 0.2);
        m
    }

    #[test]
    fn near_degenerate_component() {
        let p = MixtureParams::new(vec![1.0], vec![7.0], vec![1e-3]).unwrap();
        let mut rng = substream(1, &[]);
        let inside = (0..10_000).filter(|_| (sample_mixture(&p, &mut rng) - 7.0).abs() < 0.01).count();
        assert!(inside as f64 / 10_000.0 > 0.999);
    }

    #[test]
    fn balanced_components_split_evenly() {
        let p = MixtureParams::new(vec![0.5, 0.5], vec![-10.0, 10.0], vec![0.1, 0.1]).unwrap();
        let mut rng = substream(2, &[]);
        let pos = (0..10_000).filter(|_| sample_mixture(&p, &mut rng) > 0.0).count();
        assert!((pos as f64 / 10_000.0 - 0.5).abs() < 0.02);
    }

    #[test]
    fn fixed_stream_fixed_sample() {
        let p = MixtureParams::new(vec![0.2, 0.8], vec![0.0, 1.0], vec![1.0, 0.5]).unwrap();
        assert_eq!(sample_mixture(&p, &mut substream(5, &[1])), sample_mixture(&p, &mut substream(5, &[1])));
    }

    #[test]
    fn step_touches_one_coordinate() {
        let m = tiny_model(4);
        let mut chain = ChainState::start_at(vec![0.1, 0.2, 0.3, 0.4], 0, 9);
        let before = chain.current.clone();
        gibbs_step(&m, &mut chain, 2).unwrap();
        for j in [0, 1, 3] {
            assert_eq!(chain.current[j].to_bits(), before[j].to_bits());
        }
        assert_ne!(chain.current[2], before[2]);
    }

    #[test]
    fn identical_chains_stay_identical() {
        let m = tiny_model(3);
        let mut a = ChainState::start_at(vec![0.5, -0.5, 1.0], 4, 21);
        let mut b = a.clone();
        gibbs_round(&m, &mut a).unwrap();
        gibbs_round(&m, &mut b).unwrap();
        assert_eq!(a.current, b.current);
        assert_eq!(a.order, b.order);
    }

    #[test]
    fn round_counts_and_order_is_permutation() {
        let m = tiny_model(5);
        let mut c = ChainState::start_at(vec![0.0; 5], 0, 3);
        for r in 1..=3 {
            let mut sorted = c.order.clone();
            sorted.sort();
            assert_eq!(sorted, vec![0, 1, 2, 3, 4]);
            gibbs_round(&m, &mut c).unwrap();
            assert_eq!(c.rounds_done, r);
        }
    }

    #[test]
    fn single_feature_round_is_one_step() {
        let m = tiny_model(1);
        let mut a = ChainState::start_at(vec![0.3], 0, 8);
        let mut b = a.clone();
        gibbs_round(&m, &mut a).unwrap();
        gibbs_step(&m, &mut b, 0).unwrap();
        assert_eq!(a.current, b.current);
    }

    #[test]
    fn chain_streams_do_not_collide() {
        use rand::RngCore;
        let mut firsts = std::collections::HashSet::new();
        for row in 0..100 {
            for rep in 0..10 {
                for round in 0..3 {
                    assert!(firsts.insert(chain_stream(77, row, rep, round).next_u64()));
                }
            }
        }
    }

    #[test]
    fn default_count_caps() {
        assert_eq!(GibbsConfig::default_count(500, 10), 5000);
        assert_eq!(GibbsConfig::default_count(200_000, 10), 1_000_000);
    }
}
