use rand_distr::{Distribution, StandardNormal};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{Features, Table};
use crate::error::{invalid, Error, Result};
use crate::gibbs::{AugmentedSet, Provenance};
use crate::rng::substream;

pub const MUNGE_SWAP_PROBS: [f64; 4] = [0.1, 0.25, 0.5, 0.75];
pub const MUNGE_LOCAL_VARIANCES: [f64; 3] = [0.5, 1.0, 5.0];

const TAG_MUNGE: u64 = 0x3E6E;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MungeParams {
    /// Per-attribute swap probability `p`.
    pub swap_prob: f64,
    /// Local variance `s`; the numeric perturbation has std `|e_a - e'_a| / s`.
    pub local_variance: f64,
}

impl MungeParams {
    pub fn new(swap_prob: f64, local_variance: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&swap_prob) {
            return Err(invalid(format!("swap probability {swap_prob} outside [0, 1]")));
        }
        if !(local_variance > 0.0) {
            return Err(invalid(format!("local variance {local_variance} must be positive")));
        }
        Ok(MungeParams { swap_prob, local_variance })
    }

    /// The searched grid, `p` major.
    pub fn grid() -> Vec<MungeParams> {
        MUNGE_SWAP_PROBS
            .iter()
            .flat_map(|&p| MUNGE_LOCAL_VARIANCES.iter().map(move |&s| MungeParams { swap_prob: p, local_variance: s }))
            .collect()
    }
}

/// Column scales for the mixed metric: population std of numeric columns
/// (1 when degenerate), `None` for categoricals.
pub fn munge_scales(features: &Features) -> Vec<Option<f64>> {
    let n = features.n_rows().max(1) as f64;
    (0..features.n_cols())
        .map(|j| {
            if features.columns()[j].kind.is_categorical() {
                return None;
            }
            let col = features.column(j);
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt();
            Some(if std > 1e-12 * mean.abs().max(1.0) { std } else { 1.0 })
        })
        .collect()
}

/// Standardized Euclidean distance over numerics plus Hamming distance over
/// categoricals.
pub fn munge_distance(a: &[f64], b: &[f64], scales: &[Option<f64>]) -> f64 {
    let mut sq = 0.0;
    let mut mismatches = 0.0;
    for ((x, y), s) in a.iter().zip(b).zip(scales) {
        match s {
            Some(s) => sq += ((x - y) / s).powi(2),
            None => {
                if x != y {
                    mismatches += 1.0;
                }
            }
        }
    }
    sq.sqrt() + mismatches
}

/// Nearest other row for every row; ties go to the lower index.
pub fn nearest_neighbors(features: &Features) -> Result<Vec<usize>> {
    let n = features.n_rows();
    if n < 2 {
        return Err(Error::InsufficientData(format!("nearest neighbours need 2 rows, got {n}")));
    }
    let scales = munge_scales(features);
    Ok((0..n)
        .map(|r| {
            let mut best = usize::MAX;
            let mut best_d = f64::INFINITY;
            for o in (0..n).filter(|&o| o != r) {
                let d = munge_distance(features.row(r), features.row(o), &scales);
                if d < best_d {
                    best_d = d;
                    best = o;
                }
            }
            best
        })
        .collect())
}

/// `multiplier` perturbed copies of the training features.
pub fn munge(train: &Table, params: MungeParams, multiplier: usize, seed: u64) -> Result<AugmentedSet> {
    MungeParams::new(params.swap_prob, params.local_variance)?;
    let features = train.features();
    let nn = nearest_neighbors(&features)?;
    let d = features.n_cols();
    let categorical: Vec<bool> = features.columns().iter().map(|c| c.kind.is_categorical()).collect();
    let mut data = Vec::with_capacity(multiplier * features.data().len());
    let mut provenance = Vec::with_capacity(multiplier * features.n_rows());
    for pass in 0..multiplier {
        let mut rng = substream(seed, &[TAG_MUNGE, pass as u64]);
        for (r, &o) in nn.iter().enumerate() {
            let e = features.row(r);
            let nb = features.row(o);
            for a in 0..d {
                let mut v = e[a];
                if rng.random::<f64>() < params.swap_prob {
                    v = if categorical[a] {
                        nb[a]
                    } else {
                        let sd = (e[a] - nb[a]).abs() / params.local_variance;
                        let z: f64 = StandardNormal.sample(&mut rng);
                        nb[a] + sd * z
                    };
                }
                data.push(v);
            }
            provenance.push(Provenance { origin_row: r, rounds: 0 });
        }
    }
    Ok(AugmentedSet { features: Features::new(features.columns().to_vec(), data)?, provenance })
}
