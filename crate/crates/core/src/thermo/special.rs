//! Real-argument `₂F₁` and polylogarithm on `[0, 1)`, summed as power series.

use crate::error::{Error, Result};

/// Truncation policy shared by all power series in the crate.
///
/// Summation stops once the current term is below `tol` relative to the
/// running sum and the geometric tail bound `|t|·r/(1−r)` built from
/// `r = max(current term ratio, asymptotic ratio)` is below `tol` too.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesControl {
    pub tol: f64,
    pub max_terms: usize,
}

impl Default for SeriesControl {
    fn default() -> Self {
        SeriesControl { tol: 1e-14, max_terms: 1_000_000 }
    }
}

impl SeriesControl {
    /// Whether summation may stop after adding `term` (with `ratio` the last
    /// `|t_k / t_{k-1}|` and `limit_ratio` its known limit).
    #[inline]
    pub(crate) fn converged(&self, term: f64, sum: f64, ratio: f64, limit_ratio: f64) -> bool {
        let term = term.abs();
        let scale = sum.abs();
        if term == 0.0 {
            return true;
        }
        if term > self.tol * scale {
            return false;
        }
        let r = ratio.max(limit_ratio);
        r < 1.0 && term * r / (1.0 - r) <= self.tol * scale
    }
}

/// `₂F₁(a, b; c; z) = Σ (a)_k (b)_k / (c)_k · z^k / k!` for `0 ≤ z < 1`.
pub fn hyp2f1(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    hyp2f1_with(a, b, c, z, SeriesControl::default())
}

pub fn hyp2f1_with(a: f64, b: f64, c: f64, z: f64, ctl: SeriesControl) -> Result<f64> {
    if !(0.0..1.0).contains(&z) {
        return Err(Error::Domain(format!("hyp2f1 needs 0 ≤ z < 1, got z = {z}")));
    }
    if c <= 0.0 && c.fract() == 0.0 {
        return Err(Error::Domain(format!("hyp2f1 parameter c = {c} is a nonpositive integer")));
    }
    if z == 0.0 {
        return Ok(1.0);
    }
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 0..ctl.max_terms {
        let kf = k as f64;
        let ratio = (a + kf) * (b + kf) / ((c + kf) * (kf + 1.0)) * z;
        term *= ratio;
        sum += term;
        if term == 0.0 || ctl.converged(term, sum, ratio.abs(), z) {
            return Ok(sum);
        }
    }
    Err(Error::Budget { terms: ctl.max_terms, last_relative: (term / sum).abs() })
}

/// `Li_s(z) = Σ_{k≥1} z^k / k^s` for `0 ≤ z < 1`; `z = 1` is accepted for
/// `s > 1` and returns `ζ(s)`.
pub fn polylog(s: f64, z: f64) -> Result<f64> {
    polylog_with(s, z, SeriesControl::default())
}

pub fn polylog_with(s: f64, z: f64, ctl: SeriesControl) -> Result<f64> {
    if z == 1.0 {
        if s > 1.0 {
            return Ok(zeta(s));
        }
        return Err(Error::Domain(format!("Li_s(1) diverges for s = {s} ≤ 1")));
    }
    if !(0.0..1.0).contains(&z) {
        return Err(Error::Domain(format!("polylog needs 0 ≤ z ≤ 1, got z = {z}")));
    }
    if z == 0.0 {
        return Ok(0.0);
    }
    let ln_z = z.ln();
    let mut sum = 0.0;
    let mut prev = 0.0;
    for k in 1..=ctl.max_terms {
        let kf = k as f64;
        let term = (kf * ln_z - s * kf.ln()).exp();
        sum += term;
        let ratio = if prev > 0.0 { term / prev } else { 1.0 };
        // For s < 0 the ratios approach z from above, so they bound the tail;
        // for s ≥ 0 they approach z from below and z itself is the bound.
        if k > 1 && ctl.converged(term, sum, ratio, z) {
            return Ok(sum);
        }
        prev = term;
    }
    Err(Error::Budget { terms: ctl.max_terms, last_relative: prev / sum })
}

/// Riemann ζ for `s > 1` by Euler–Maclaurin summation.
fn zeta(s: f64) -> f64 {
    // B_2j / (2j)!
    const BERNOULLI_OVER_FACT: [f64; 6] = [
        1.0 / 12.0,
        -1.0 / 720.0,
        1.0 / 30240.0,
        -1.0 / 1209600.0,
        1.0 / 47900160.0,
        -691.0 / 1307674368000.0,
    ];
    let n = 20usize;
    let nf = n as f64;
    let mut sum: f64 = (1..n).map(|k| (k as f64).powf(-s)).sum();
    sum += nf.powf(1.0 - s) / (s - 1.0) + 0.5 * nf.powf(-s);
    // rising product s(s+1)…(s+2j−2) multiplying N^{−s−2j+1}
    let mut rising = s;
    let mut power = nf.powf(-s - 1.0);
    for (j, coeff) in BERNOULLI_OVER_FACT.iter().enumerate() {
        if j > 0 {
            let jf = j as f64;
            rising *= (s + 2.0 * jf - 1.0) * (s + 2.0 * jf);
        }
        sum += coeff * rising * power;
        power /= nf * nf;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn hyp2f1_log_identity() {
        let z: f64 = 0.5;
        let expect = -(1.0 - z).ln() / z;
        assert_relative_eq!(hyp2f1(1.0, 1.0, 2.0, z).unwrap(), expect, max_relative = 1e-14);
        assert_relative_eq!(expect, 2.0 * 2f64.ln(), max_relative = 1e-15);
        // partial sums of the same series
        let mut partial = 0.0;
        for k in 0..200 {
            partial += z.powi(k) / (k as f64 + 1.0);
        }
        assert_relative_eq!(hyp2f1(1.0, 1.0, 2.0, z).unwrap(), partial, max_relative = 1e-14);
    }

    #[test]
    fn hyp2f1_at_zero_is_one() {
        for (a, b, c) in [(1.0, 2.0, 3.0), (-0.5, 4.0, 0.25), (2.0, 2.0, 4.0)] {
            assert_eq!(hyp2f1(a, b, c, 0.0).unwrap(), 1.0);
        }
    }

    #[test]
    fn hyp2f1_tolerance_self_consistency() {
        let base = hyp2f1(2.0, 2.0, 4.0, 0.3).unwrap();
        let strict = hyp2f1_with(2.0, 2.0, 4.0, 0.3, SeriesControl { tol: 1e-15, max_terms: 1_000_000 }).unwrap();
        assert_relative_eq!(base, strict, max_relative = 1e-14);
    }

    #[test]
    fn hyp2f1_domain_errors() {
        assert!(matches!(hyp2f1(1.0, 1.0, 2.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(hyp2f1(1.0, 1.0, -2.0, 0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn hyp2f1_near_one_terminates() {
        // ratio (2+k)²/((3+k)(k+1))·z stays above z for every k
        let v = hyp2f1(2.0, 2.0, 3.0, 0.99).unwrap();
        assert!(v.is_finite() && v > 0.0);
    }

    #[test]
    fn polylog_known_values() {
        assert_eq!(polylog(3.7, 0.0).unwrap(), 0.0);
        assert_relative_eq!(polylog(1.0, 0.5).unwrap(), 2f64.ln(), max_relative = 1e-14);
        let zeta2 = std::f64::consts::PI.powi(2) / 6.0;
        assert!((polylog(2.0, 1.0).unwrap() - zeta2).abs() < 1e-8);
        let partial: f64 = (1..=1_000_000).map(|k| 1.0 / (k as f64).powi(2)).sum();
        assert!((partial + 1e-6 - zeta2).abs() < 1e-11);
        assert!(matches!(polylog(1.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn zeta_values() {
        assert_relative_eq!(zeta(3.0), 1.202_056_903_159_594_2, max_relative = 1e-13);
        assert_relative_eq!(zeta(4.0), std::f64::consts::PI.powi(4) / 90.0, max_relative = 1e-13);
        assert_relative_eq!(zeta(1.5), 2.612_375_348_685_488, max_relative = 1e-12);
    }

    #[test]
    fn polylog_negative_order() {
        // Li_{-1}(z) = z/(1−z)²
        let z: f64 = 0.7;
        assert_relative_eq!(polylog(-1.0, z).unwrap(), z / (1.0 - z).powi(2), max_relative = 1e-13);
        // Li_0(z) = z/(1−z)
        assert_relative_eq!(polylog(0.0, 0.95).unwrap(), 0.95 / 0.05, max_relative = 1e-12);
    }
}
