use serde::{Deserialize, Serialize};

/// Mean and standard error of the mean (0 for a single value).
pub fn mean_stderr(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, (var / n).sqrt()))
}

/// Rank 1 for the largest score, ties share the average of their ranks.
/// `None` scores (failures) rank below every real score.
pub fn descending_ranks(scores: &[Option<f64>]) -> Vec<f64> {
    let key = |s: &Option<f64>| s.unwrap_or(f64::NEG_INFINITY);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| key(&scores[b]).total_cmp(&key(&scores[a])));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && key(&scores[order[j]]) == key(&scores[order[i]]) {
            j += 1;
        }
        let shared = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = shared;
        }
        i = j;
    }
    ranks
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignedRankTest {
    /// Non-zero paired differences used.
    pub n: usize,
    /// Sum of ranks of positive differences.
    pub w_plus: f64,
    /// One-sided p-value for "first ≥ second" (large `w_plus`).
    pub p_value: f64,
}

/// One-sided Wilcoxon signed-rank test on paired differences `d`. Zeros are
/// dropped, tied magnitudes get average ranks, and the null distribution is
/// enumerated exactly (normal approximation above 20 pairs).
pub fn wilcoxon_greater(d: &[f64]) -> SignedRankTest {
    let nz: Vec<f64> = d.iter().copied().filter(|v| *v != 0.0).collect();
    let n = nz.len();
    if n == 0 {
        return SignedRankTest { n, w_plus: 0.0, p_value: 1.0 };
    }
    let mags: Vec<Option<f64>> = nz.iter().map(|v| Some(-v.abs())).collect();
    // Ascending magnitude ranks, via descending ranks of the negated values.
    let ranks = descending_ranks(&mags);
    let w_plus: f64 = nz.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    if n <= 20 {
        // Ranks are multiples of 1/2; count in doubled units.
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let total: usize = doubled.iter().sum();
        let mut ways = vec![0f64; total + 1];
        ways[0] = 1.0;
        for &r in &doubled {
            for s in (r..=total).rev() {
                ways[s] += ways[s - r];
            }
        }
        let observed = (2.0 * w_plus).round() as usize;
        let tail: f64 = ways[observed..].iter().sum();
        return SignedRankTest { n, w_plus, p_value: tail / 2f64.powi(n as i32) };
    }
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let sd = (nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0).sqrt();
    let z = (w_plus - 0.5 - mean) / sd;
    SignedRankTest { n, w_plus, p_value: 0.5 * erfc(z / std::f64::consts::SQRT_2) }
}

/// Complementary error function (Numerical Recipes `erfcc`, |error| < 1.2e-7).
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let r = t * (-z * z - 1.26551223
        + t * (1.00002368
            + t * (0.37409196
                + t * (0.09678418
                    + t * (-0.18628806
                        + t * (0.27886807 + t * (-1.13520398 + t * (1.48851587 + t * (-0.82215223 + t * 0.17087277)))))))))
        .exp();
    if x >= 0.0 { r } else { 2.0 - r }
}
