//! Local jump rates `g: ℕ₀ → ℝ₊` of the zero range process.
//!
//! A particle leaves a site holding `k` particles at rate `g(k)`. Every model
//! carries an additive perturbation `g_ε(k) = g(k) + εk`; with `ε > 0` a
//! bounded rate becomes superlinear.
//!
//! Factorial products `g!(k) = g(1)···g(k)` overflow quickly, so they are only
//! ever handled as logarithms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a tabulated rate is extended beyond its last entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TailRule {
    /// `g(k) = g(n)` for `k > n`.
    Constant,
    /// `g(k) = g(n)·k/n` for `k > n`, i.e. linear growth through the origin.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum RateModel {
    /// `g(k) = k`: independent random walkers.
    Linear,
    /// `g(k) = 1{k ≥ 1}`.
    Constant,
    /// `g(k) = (1 + b/k)·1{k ≥ 1}`.
    Evans { b: f64 },
    /// `g(1) = 1`, `g(k) = (k/(k−1))^b` for `k ≥ 2`, so that `g!(k) = k^b`.
    Landim { b: f64 },
    /// `values[k-1] = g(k)` for `k = 1..=values.len()`.
    Tabulated {
        values: Vec<f64>,
        tail: Option<TailRule>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpRateSpec {
    pub model: RateModel,
    #[serde(default)]
    pub epsilon: f64,
}

/// Outcome of [`JumpRateSpec::superlinearity_certificate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Superlinearity {
    /// `g(k) ≥ a0·k` on the tested range; `all_k` says whether the bound is
    /// known to hold for every `k ≥ 1` (`None` when it cannot be decided).
    Holds { a0: f64, all_k: Option<bool> },
    /// `inf g(k)/k = 0`; `witness` is the tested `k` with the smallest ratio.
    Fails { witness: u64 },
}

impl JumpRateSpec {
    pub fn new(model: RateModel, epsilon: f64) -> Result<Self> {
        let spec = JumpRateSpec { model, epsilon };
        spec.validate()?;
        Ok(spec)
    }

    pub fn linear() -> Self {
        JumpRateSpec { model: RateModel::Linear, epsilon: 0.0 }
    }

    pub fn constant() -> Self {
        JumpRateSpec { model: RateModel::Constant, epsilon: 0.0 }
    }

    pub fn evans(b: f64) -> Self {
        JumpRateSpec { model: RateModel::Evans { b }, epsilon: 0.0 }
    }

    pub fn landim(b: f64) -> Self {
        JumpRateSpec { model: RateModel::Landim { b }, epsilon: 0.0 }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::arg(format!("epsilon must be finite and ≥ 0, got {}", self.epsilon)));
        }
        match &self.model {
            RateModel::Evans { b } | RateModel::Landim { b } => {
                if !(*b >= 0.0 && b.is_finite()) {
                    return Err(Error::arg(format!("parameter b must be finite and ≥ 0, got {b}")));
                }
            }
            RateModel::Tabulated { values, .. } => {
                if values.is_empty() {
                    return Err(Error::arg("tabulated rate needs at least one value"));
                }
                if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
                    return Err(Error::arg(format!("g({}) = {v} must be positive and finite", i + 1)));
                }
            }
            RateModel::Linear | RateModel::Constant => {}
        }
        Ok(())
    }

    /// Whether the model is one of the closed-form builtins.
    pub fn is_builtin(&self) -> bool {
        !matches!(self.model, RateModel::Tabulated { .. })
    }

    fn base_rate(&self, k: u64) -> Result<f64> {
        if k == 0 {
            return Ok(0.0);
        }
        let kf = k as f64;
        Ok(match &self.model {
            RateModel::Linear => kf,
            RateModel::Constant => 1.0,
            RateModel::Evans { b } => 1.0 + b / kf,
            RateModel::Landim { b } => {
                if k == 1 {
                    1.0
                } else {
                    (kf / (kf - 1.0)).powf(*b)
                }
            }
            RateModel::Tabulated { values, tail } => {
                let n = values.len() as u64;
                if k <= n {
                    values[(k - 1) as usize]
                } else {
                    let last = values[values.len() - 1];
                    match tail {
                        Some(TailRule::Constant) => last,
                        Some(TailRule::Linear) => last * kf / n as f64,
                        None => {
                            return Err(Error::Domain(format!(
                                "g({k}) requested beyond the {n}-entry table and no tail rule is declared"
                            )))
                        }
                    }
                }
            }
        })
    }

    /// `g(k) + εk`.
    pub fn evaluate(&self, k: u64) -> Result<f64> {
        Ok(self.base_rate(k)? + self.epsilon * k as f64)
    }

    /// `log g!(k)`, with `log g!(0) = 0`.
    pub fn log_factorial(&self, k: u64) -> Result<f64> {
        if self.epsilon == 0.0 {
            match &self.model {
                RateModel::Constant => return Ok(0.0),
                RateModel::Landim { b } => return Ok(if k == 0 { 0.0 } else { b * (k as f64).ln() }),
                _ => {}
            }
        }
        let mut acc = 0.0;
        for j in 1..=k {
            acc += self.evaluate(j)?.ln();
        }
        Ok(acc)
    }

    /// `φ_c = liminf g!(k)^{1/k}`, the radius of convergence of `Z`.
    ///
    /// Builtins use their closed forms. Tabulated rates use
    /// [`critical_fugacity_estimate`](Self::critical_fugacity_estimate) over
    /// `k ∈ [1000, 20000]`, which is an estimate and not a bound.
    pub fn critical_fugacity(&self) -> f64 {
        match &self.model {
            RateModel::Linear => f64::INFINITY,
            RateModel::Constant | RateModel::Evans { .. } | RateModel::Landim { .. } => {
                if self.epsilon > 0.0 {
                    f64::INFINITY
                } else {
                    1.0
                }
            }
            RateModel::Tabulated { .. } => self
                .critical_fugacity_estimate(1_000, 20_000)
                .unwrap_or(f64::INFINITY),
        }
    }

    /// `min_{k0 ≤ k ≤ k_max} g!(k)^{1/k}`.
    pub fn critical_fugacity_estimate(&self, k0: u64, k_max: u64) -> Result<f64> {
        if k0 == 0 || k_max < k0 {
            return Err(Error::arg(format!("need 1 ≤ k0 ≤ k_max, got [{k0}, {k_max}]")));
        }
        let mut log_fact = self.log_factorial(k0 - 1)?;
        let mut best = f64::INFINITY;
        for k in k0..=k_max {
            log_fact += self.evaluate(k)?.ln();
            best = best.min(log_fact / k as f64);
        }
        Ok(best.exp())
    }

    /// Checks `g(k) ≥ a0·k`.
    ///
    /// Builtins report the exact infimum over all `k ≥ 1`; tabulated rates
    /// report the minimum over `1..=k_max` and, where the tail rule decides
    /// it, the asymptotic infimum.
    pub fn superlinearity_certificate(&self, k_max: u64) -> Result<Superlinearity> {
        if k_max == 0 {
            return Err(Error::arg("k_max must be ≥ 1"));
        }
        let mut min_ratio = f64::INFINITY;
        let mut witness = 1;
        for k in 1..=k_max {
            let r = self.evaluate(k)? / k as f64;
            if r <= min_ratio {
                min_ratio = r;
                witness = k;
            }
        }
        let eps = self.epsilon;
        let asymptotic = match &self.model {
            RateModel::Linear => Some(1.0 + eps),
            RateModel::Constant | RateModel::Evans { .. } | RateModel::Landim { .. } => Some(eps),
            RateModel::Tabulated { values, tail } => match tail {
                Some(TailRule::Constant) => Some(eps),
                Some(TailRule::Linear) => Some(values[values.len() - 1] / values.len() as f64 + eps),
                None => None,
            },
        };
        Ok(match asymptotic {
            Some(inf) if inf <= 0.0 => Superlinearity::Fails { witness },
            Some(inf) if self.is_builtin() => Superlinearity::Holds { a0: inf, all_k: Some(true) },
            Some(inf) => Superlinearity::Holds { a0: min_ratio.min(inf), all_k: Some(true) },
            None if min_ratio > 0.0 => Superlinearity::Holds { a0: min_ratio, all_k: None },
            None => Superlinearity::Fails { witness },
        })
    }

    /// `max_{0 ≤ k < k_max} |g(k+1) − g(k)|`.
    pub fn lipschitz_bound(&self, k_max: u64) -> Result<f64> {
        let mut prev = 0.0;
        let mut best: f64 = 0.0;
        for k in 1..=k_max {
            let g = self.evaluate(k)?;
            best = best.max((g - prev).abs());
            prev = g;
        }
        Ok(best)
    }

    /// `g(1)`, which is also `Φ′(0)`.
    pub fn first_rate(&self) -> f64 {
        self.evaluate(1).expect("g(1) is always tabulated or closed form")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn evaluate_known_values() {
        assert_eq!(JumpRateSpec::linear().evaluate(5).unwrap(), 5.0);
        assert_relative_eq!(JumpRateSpec::evans(2.0).evaluate(4).unwrap(), 1.5);
        assert_relative_eq!(JumpRateSpec::landim(3.0).evaluate(2).unwrap(), 8.0);
        assert_eq!(JumpRateSpec::constant().evaluate(0).unwrap(), 0.0);
    }

    #[test]
    fn tabulated_without_tail_is_a_domain_error() {
        let spec = JumpRateSpec::new(RateModel::Tabulated { values: vec![1.0, 2.0], tail: None }, 0.0).unwrap();
        assert_eq!(spec.evaluate(2).unwrap(), 2.0);
        assert!(matches!(spec.evaluate(3), Err(Error::Domain(_))));
    }

    #[test]
    fn tabulated_tails() {
        let c = JumpRateSpec::new(
            RateModel::Tabulated { values: vec![1.0, 3.0], tail: Some(TailRule::Constant) },
            0.0,
        )
        .unwrap();
        assert_eq!(c.evaluate(7).unwrap(), 3.0);
        let l = JumpRateSpec::new(
            RateModel::Tabulated { values: vec![1.0, 3.0], tail: Some(TailRule::Linear) },
            0.0,
        )
        .unwrap();
        assert_eq!(l.evaluate(4).unwrap(), 6.0);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(JumpRateSpec::new(RateModel::Evans { b: -1.0 }, 0.0).is_err());
        assert!(JumpRateSpec::new(RateModel::Linear, -0.5).is_err());
        assert!(JumpRateSpec::new(RateModel::Tabulated { values: vec![1.0, 0.0], tail: None }, 0.0).is_err());
    }

    #[test]
    fn factorial_known_values() {
        assert_relative_eq!(JumpRateSpec::linear().log_factorial(4).unwrap(), 24f64.ln(), epsilon = 1e-14);
        assert_relative_eq!(JumpRateSpec::landim(2.0).log_factorial(5).unwrap(), 25f64.ln(), epsilon = 1e-14);
        let direct: f64 = (1..=3).map(|j| 1.0 + 1.0 / j as f64).product();
        assert_relative_eq!(direct, 4.0, epsilon = 1e-14);
        assert_relative_eq!(JumpRateSpec::evans(1.0).log_factorial(3).unwrap(), direct.ln(), epsilon = 1e-14);
        assert_eq!(JumpRateSpec::evans(1.0).log_factorial(0).unwrap(), 0.0);
    }

    #[test]
    fn landim_closed_form_matches_product() {
        let spec = JumpRateSpec::landim(2.5);
        let mut acc = 0.0;
        for k in 1..50u64 {
            acc += spec.evaluate(k).unwrap().ln();
            assert_relative_eq!(spec.log_factorial(k).unwrap(), acc, epsilon = 1e-11);
        }
    }

    #[test]
    fn critical_fugacity_known_values() {
        assert_eq!(JumpRateSpec::constant().critical_fugacity(), 1.0);
        assert_eq!(JumpRateSpec::linear().critical_fugacity(), f64::INFINITY);
        assert_eq!(JumpRateSpec::landim(3.0).critical_fugacity(), 1.0);
        // Stirling: (k!)^{1/k} ≈ k/e grows without bound.
        let lin = JumpRateSpec::linear();
        let a = (lin.log_factorial(1_000).unwrap() / 1e3).exp();
        let b = (lin.log_factorial(10_000).unwrap() / 1e4).exp();
        assert!(b > 9.0 * a);
        // (k^3)^{1/k} → 1
        let lan = JumpRateSpec::landim(3.0);
        let x = (lan.log_factorial(100_000).unwrap() / 1e5).exp();
        assert!((x - 1.0).abs() < 1e-3);
    }

    #[test]
    fn tabulated_critical_fugacity_estimate() {
        let spec = JumpRateSpec::new(
            RateModel::Tabulated { values: vec![0.5, 1.0, 2.0], tail: Some(TailRule::Constant) },
            0.0,
        )
        .unwrap();
        // g!(k) = 2^{k-2}·... → (g!(k))^{1/k} → 2
        let est = spec.critical_fugacity();
        assert!((est - 2.0).abs() < 5e-3, "{est}");
    }

    #[test]
    fn superlinearity_known_values() {
        assert_eq!(
            JumpRateSpec::linear().superlinearity_certificate(100).unwrap(),
            Superlinearity::Holds { a0: 1.0, all_k: Some(true) }
        );
        match JumpRateSpec::constant().with_epsilon(0.1).superlinearity_certificate(100).unwrap() {
            Superlinearity::Holds { a0, all_k } => {
                assert_relative_eq!(a0, 0.1);
                assert_eq!(all_k, Some(true));
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(
            JumpRateSpec::constant().superlinearity_certificate(100).unwrap(),
            Superlinearity::Fails { witness: 100 }
        );
    }

    #[test]
    fn lipschitz_is_finite_for_builtins() {
        for spec in [
            JumpRateSpec::linear(),
            JumpRateSpec::constant(),
            JumpRateSpec::evans(2.0),
            JumpRateSpec::landim(3.0),
        ] {
            let l = spec.lipschitz_bound(10_000).unwrap();
            assert!(l.is_finite());
        }
        assert_relative_eq!(JumpRateSpec::landim(3.0).lipschitz_bound(100).unwrap(), 7.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn any_spec() -> impl Strategy<Value = JumpRateSpec> {
            let model = prop_oneof![
                Just(RateModel::Linear),
                Just(RateModel::Constant),
                (0.0..5.0f64).prop_map(|b| RateModel::Evans { b }),
                (0.0..5.0f64).prop_map(|b| RateModel::Landim { b }),
                proptest::collection::vec(0.1..4.0f64, 1..10)
                    .prop_map(|values| RateModel::Tabulated { values, tail: Some(TailRule::Linear) }),
            ];
            (model, 0.0..2.0f64).prop_map(|(model, epsilon)| JumpRateSpec { model, epsilon })
        }

        proptest! {
            #[test]
            fn zero_at_origin(spec in any_spec()) {
                prop_assert_eq!(spec.evaluate(0).unwrap(), 0.0);
            }

            #[test]
            fn factorial_increments(spec in any_spec(), k in 0u64..60) {
                let step = spec.log_factorial(k + 1).unwrap() - spec.log_factorial(k).unwrap();
                let expect = spec.evaluate(k + 1).unwrap().ln();
                prop_assert!((step - expect).abs() <= 1e-10 * (1.0 + expect.abs()));
            }

            #[test]
            fn perturbation_is_additive(spec in any_spec(), k in 0u64..200) {
                let base = JumpRateSpec { epsilon: 0.0, ..spec.clone() };
                prop_assert_eq!(spec.evaluate(k).unwrap(), base.evaluate(k).unwrap() + spec.epsilon * k as f64);
            }
        }
    }
}
