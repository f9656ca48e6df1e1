//! Small statistical estimators and goodness-of-fit tests used by the
//! simulator diagnostics.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl MeanEstimate {
    /// `(mean − target) / stderr`.
    pub fn z(&self, target: f64) -> f64 {
        (self.mean - target) / self.stderr
    }
}

/// Sample mean with its standard error.
pub fn mean_stderr(xs: &[f64]) -> MeanEstimate {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = if n > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { f64::NAN };
    MeanEstimate { mean, stderr: (var / n as f64).sqrt(), n }
}

/// Sample variance (about the sample mean) with the standard error
/// `√((m₄ − s⁴)/n)`.
pub fn variance_stderr(xs: &[f64]) -> MeanEstimate {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    let var = m2 * n / (n - 1.0);
    MeanEstimate { mean: var, stderr: ((m4 - m2 * m2) / n).max(0.0).sqrt(), n: xs.len() }
}

/// Variance about a known mean with its standard error.
pub fn variance_about(xs: &[f64], center: f64) -> MeanEstimate {
    let sq: Vec<f64> = xs.iter().map(|x| (x - center).powi(2)).collect();
    mean_stderr(&sq)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson goodness-of-fit of `counts[k]` against probabilities `probs[k]`.
///
/// Bins are merged from the right until every merged bin expects at least
/// `min_expected` counts; the last bin absorbs all remaining mass.
pub fn chi_square_gof(counts: &[u64], probs: &[f64], min_expected: f64) -> Result<ChiSquare> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::arg("chi-square test needs at least one observation"));
    }
    let nt = total as f64;
    let len = counts.len().max(probs.len());
    let obs = |k: usize| counts.get(k).copied().unwrap_or(0) as f64;
    let prob = |k: usize| probs.get(k).copied().unwrap_or(0.0);
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    let mut k = 0;
    let mut used_prob = 0.0;
    while k < len {
        acc.0 += obs(k);
        acc.1 += prob(k) * nt;
        used_prob += prob(k);
        k += 1;
        let remaining = (1.0 - used_prob).max(0.0) * nt;
        if acc.1 >= min_expected && remaining >= min_expected {
            bins.push(acc);
            acc = (0.0, 0.0);
        }
    }
    acc.1 += (1.0 - used_prob).max(0.0) * nt;
    if acc.1 > 0.0 || acc.0 > 0.0 {
        if acc.1 < min_expected && !bins.is_empty() {
            let last = bins.last_mut().unwrap();
            last.0 += acc.0;
            last.1 += acc.1;
        } else {
            bins.push(acc);
        }
    }
    if bins.len() < 2 {
        return Err(Error::arg("chi-square test needs at least two bins after merging"));
    }
    let statistic: f64 = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = bins.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::arg(e.to_string()))?;
    Ok(ChiSquare { statistic, dof, p_value: 1.0 - dist.cdf(statistic) })
}

/// One-sample Kolmogorov–Smirnov test against `Exp(1)`; returns `(D, p)`.
pub fn ks_exp1(samples: &[f64]) -> (f64, f64) {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let cdf = 1.0 - (-x).exp();
        d = d.max((i as f64 + 1.0) / n - cdf).max(cdf - i as f64 / n);
    }
    (d, kolmogorov_sf((n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d))
}

/// Survival function of the Kolmogorov distribution.
fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..200 {
        let jf = j as f64;
        let term = 2.0 * (-2.0 * jf * jf * lambda * lambda).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// Least-squares slope of `y` on `x` with its standard error.
pub fn regression_slope(x: &[f64], y: &[f64]) -> MeanEstimate {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum();
    MeanEstimate { mean: slope, stderr: (rss / (n - 2.0) / sxx).sqrt(), n: x.len() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi_square_perfect_fit() {
        let probs = [0.5, 0.25, 0.125, 0.125];
        let counts = [500, 250, 125, 125];
        let r = chi_square_gof(&counts, &probs, 5.0).unwrap();
        assert!(r.statistic < 1e-12);
        assert!((r.p_value - 1.0).abs() < 1e-12);
        assert_eq!(r.dof, 3);
    }

    #[test]
    fn chi_square_detects_misfit() {
        let probs = [0.5, 0.5];
        let r = chi_square_gof(&[700, 300], &probs, 5.0).unwrap();
        assert!(r.p_value < 1e-10);
    }

    #[test]
    fn chi_square_merges_sparse_tail() {
        let probs: Vec<f64> = (0..30).map(|k| 0.5f64.powi(k + 1)).collect();
        let r = chi_square_gof(&[64, 32, 16, 8, 4, 2, 1, 1], &probs, 5.0).unwrap();
        assert_eq!(r.dof, 4);
    }

    #[test]
    fn kolmogorov_known_values() {
        // P(K > 1.3581) ≈ 0.05
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_sf(1.6276) - 0.01).abs() < 1e-3);
    }

    #[test]
    fn variance_estimators() {
        let xs = [1.0, -1.0, 1.0, -1.0];
        assert!((variance_about(&xs, 0.0).mean - 1.0).abs() < 1e-15);
        assert!((variance_stderr(&xs).mean - 4.0 / 3.0).abs() < 1e-15);
        let s = regression_slope(&[0.0, 1.0, 2.0, 3.0], &[1.0, 3.0, 5.0, 7.0]);
        assert!((s.mean - 2.0).abs() < 1e-14 && s.stderr < 1e-12);
    }
}
