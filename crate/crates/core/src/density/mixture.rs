use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound added to every component standard deviation.
pub const SIGMA_FLOOR: f64 = 1e-3;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// One univariate conditional as a Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[inline]
pub fn normal_logpdf(v: f64, mean: f64, std: f64) -> f64 {
    let z = (v - mean) / std;
    -HALF_LN_2PI - std.ln() - 0.5 * z * z
}

impl MixtureParams {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, stds: Vec<f64>) -> Result<Self> {
        let p = MixtureParams { weights, means, stds };
        p.validate()?;
        Ok(p)
    }

    /// Map raw head output `[logits | means | raw sigmas]` (length 3K) to a mixture.
    pub fn from_head(raw: &[f64]) -> Self {
        let k = raw.len() / 3;
        let logits = &raw[..k];
        let lse = log_sum_exp(logits);
        MixtureParams {
            weights: logits.iter().map(|l| (l - lse).exp()).collect(),
            means: raw[k..2 * k].to_vec(),
            stds: raw[2 * k..].iter().map(|&r| softplus(r) + SIGMA_FLOOR).collect(),
        }
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        if k == 0 || self.means.len() != k || self.stds.len() != k {
            return Err(Error::Shape("mixture component arrays must share a positive length".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-6 || self.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Numerical(format!("mixture weights sum to {total}")));
        }
        if self.stds.iter().any(|s| !(*s >= SIGMA_FLOOR)) || self.means.iter().any(|m| !m.is_finite()) {
            return Err(Error::Numerical("mixture std below floor or non-finite mean".into()));
        }
        Ok(())
    }

    /// `log sum_k w_k N(v; mu_k, sigma_k^2)` via log-sum-exp.
    pub fn logpdf(&self, v: f64) -> f64 {
        let terms: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.means)
            .zip(&self.stds)
            .map(|((w, m), s)| w.ln() + normal_logpdf(v, *m, *s))
            .collect();
        log_sum_exp(&terms)
    }
}

pub fn mixture_logpdf(v: f64, params: &MixtureParams) -> f64 {
    params.logpdf(v)
}

/// Negative log-likelihood of `v` under the mixture encoded by raw head
/// output, together with its gradient with respect to that raw output.
pub(crate) fn head_nll_and_grad(raw: &[f64], v: f64) -> (f64, Vec<f64>) {
    let k = raw.len() / 3;
    let logits = &raw[..k];
    let lse_logits = log_sum_exp(logits);
    let mut comp = Vec::with_capacity(k);
    let mut stds = Vec::with_capacity(k);
    for c in 0..k {
        let s = softplus(raw[2 * k + c]) + SIGMA_FLOOR;
        stds.push(s);
        comp.push(logits[c] - lse_logits + normal_logpdf(v, raw[k + c], s));
    }
    let total = log_sum_exp(&comp);
    let mut grad = vec![0.0; 3 * k];
    for c in 0..k {
        let resp = (comp[c] - total).exp();
        let weight = (logits[c] - lse_logits).exp();
        let s = stds[c];
        let diff = v - raw[k + c];
        grad[c] = weight - resp;
        grad[k + c] = -resp * diff / (s * s);
        let dsigma = -resp * (diff * diff / (s * s * s) - 1.0 / s);
        grad[2 * k + c] = dsigma * sigmoid(raw[2 * k + c]);
    }
    (-total, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn standard_normal_at_zero() {
        let p = MixtureParams::new(vec![1.0], vec![0.0], vec![1.0]).unwrap();
        assert_abs_diff_eq!(p.logpdf(0.0), -0.5 * (2.0 * std::f64::consts::PI).ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(p.logpdf(0.0), -0.918939, epsilon = 1e-6);
    }

    #[test]
    fn identical_components_collapse() {
        let one = MixtureParams::new(vec![1.0], vec![0.3], vec![0.7]).unwrap();
        let two = MixtureParams::new(vec![0.5, 0.5], vec![0.3, 0.3], vec![0.7, 0.7]).unwrap();
        for v in [-2.0, 0.0, 0.3, 5.0] {
            assert_abs_diff_eq!(one.logpdf(v), two.logpdf(v), epsilon = 1e-14);
        }
    }

    #[test]
    fn symmetric_two_component_value() {
        let p = MixtureParams::new(vec![0.5, 0.5], vec![-1.0, 1.0], vec![1.0, 1.0]).unwrap();
        let expected = ((-0.5f64).exp() * 2.0 * 0.5).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert_abs_diff_eq!(p.logpdf(0.0), expected, epsilon = 1e-14);
        assert_abs_diff_eq!(p.logpdf(0.0), -1.418939, epsilon = 1e-6);
    }

    #[test]
    fn zero_head_is_uniform_with_softplus_sigma() {
        let p = MixtureParams::from_head(&[0.0; 12]);
        for w in &p.weights {
            assert_abs_diff_eq!(*w, 0.25, epsilon = 1e-15);
        }
        for s in &p.stds {
            assert_abs_diff_eq!(*s, 2f64.ln() + 1e-3, epsilon = 1e-15);
            assert_abs_diff_eq!(*s, 0.69415, epsilon = 1e-5);
        }
    }

    #[test]
    fn head_gradient_matches_finite_differences() {
        let raw = [0.3, -0.2, 1.1, -0.5, 0.4, 2.0, 0.1, -1.0, 0.7];
        let v = 0.25;
        let (loss, grad) = head_nll_and_grad(&raw, v);
        assert_abs_diff_eq!(loss, -MixtureParams::from_head(&raw).logpdf(v), epsilon = 1e-12);
        for j in 0..raw.len() {
            let mut p = raw;
            let mut m = raw;
            p[j] += 1e-6;
            m[j] -= 1e-6;
            let fd = (head_nll_and_grad(&p, v).0 - head_nll_and_grad(&m, v).0) / 2e-6;
            assert_abs_diff_eq!(fd, grad[j], epsilon = 1e-7);
        }
    }

    proptest! {
        #[test]
        fn logpdf_finite_far_from_means(v in -1e6f64..1e6, mu in -1e3f64..1e3, sigma in 1e-3f64..10.0) {
            let p = MixtureParams::new(vec![0.3, 0.7], vec![mu, -mu], vec![sigma, 2.0 * sigma]).unwrap();
            prop_assert!(p.logpdf(v).is_finite());
        }
    }
}
