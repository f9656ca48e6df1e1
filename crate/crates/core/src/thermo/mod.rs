//! Grand canonical thermodynamics of a zero range process.
//!
//! For a jump rate `g` the one-site marginal at fugacity `φ` is
//! `(1/Z(φ)) φ^k / g!(k)`. Everything else follows from the partition
//! function `Z`: the density `R(φ) = φZ′/Z`, its inverse `Φ = R⁻¹` (the mean
//! jump rate, which is the nonlinearity in `∂t ρ = ΔΦ(ρ)`), the entropy
//! `S(ρ) = ρ log Φ(ρ) − log Z(Φ(ρ))` and the compressibility
//! `χ(ρ) = Var η(0) = 1/S″(ρ)`.
//!
//! Boundary conventions at `ρ = 0`: `Φ(0) = 0`, `S(0) = 0`, `σ(0⁺) = g(1)`
//! and `S′(0) = −∞`.

pub mod special;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::jump_rates::{JumpRateSpec, RateModel};
pub use special::{hyp2f1, polylog, SeriesControl};

/// Largest fraction of a finite `φ_c` covered by the inversion table.
const PHI_C_MARGIN: f64 = 1e-4;
/// Density reached by the table when `φ_c = ∞`; beyond it brackets are grown on demand.
const TABLE_RHO_MAX: f64 = 1e3;

/// Log partition function, mean and variance of the one-site marginal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub log_z: f64,
    pub density: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThermoValue {
    pub rho: f64,
    pub phi: f64,
    pub entropy: f64,
    pub entropy_derivative: f64,
    pub sigma: f64,
    pub chi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Node {
    phi: f64,
    density: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ClosedForm {
    /// `g(k) = s·k`: Poisson marginal with mean `φ/s`.
    Linear { scale: f64 },
    /// `g(k) = 1{k≥1}`: geometric marginal.
    Constant,
    Evans { b: f64 },
    Landim { b: f64 },
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McCannReport {
    pub holds: bool,
    pub worst_margin: f64,
    pub witness: f64,
    /// `(ρ, Φ(ρ)Φ′(ρ), (1−1/d)∫₀^ρ Φ′²)` per grid point.
    pub rows: Vec<(f64, f64, f64)>,
}

/// Cached thermodynamic tables for one jump rate.
///
/// Immutable after construction; the inversion table is filled eagerly so
/// concurrent readers never see a partial node.
#[derive(Debug, Clone)]
pub struct Ensemble {
    spec: JumpRateSpec,
    phi_c: f64,
    series: SeriesControl,
    closed: ClosedForm,
    nodes: Vec<Node>,
}

impl Ensemble {
    pub fn new(spec: JumpRateSpec) -> Result<Self> {
        Self::with_series(spec, SeriesControl::default())
    }

    pub fn with_series(spec: JumpRateSpec, series: SeriesControl) -> Result<Self> {
        spec.validate()?;
        let phi_c = spec.critical_fugacity();
        let closed = if spec.epsilon == 0.0 {
            match spec.model {
                RateModel::Linear => ClosedForm::Linear { scale: 1.0 },
                RateModel::Constant => ClosedForm::Constant,
                RateModel::Evans { b } => ClosedForm::Evans { b },
                RateModel::Landim { b } => ClosedForm::Landim { b },
                RateModel::Tabulated { .. } => ClosedForm::None,
            }
        } else if spec.model == RateModel::Linear {
            ClosedForm::Linear { scale: 1.0 + spec.epsilon }
        } else {
            ClosedForm::None
        };
        let mut ens = Ensemble { spec, phi_c, series, closed, nodes: Vec::new() };
        ens.nodes = ens.build_nodes()?;
        Ok(ens)
    }

    fn build_nodes(&self) -> Result<Vec<Node>> {
        let mut phis = Vec::new();
        if self.phi_c.is_finite() {
            let pc = self.phi_c;
            let mut x = 1e-8;
            while x < 0.5 {
                phis.push(pc * x);
                x *= 2f64.sqrt();
            }
            let mut gap = 0.5;
            while gap > PHI_C_MARGIN {
                phis.push(pc * (1.0 - gap));
                gap /= 2f64.sqrt();
            }
            phis.push(pc * (1.0 - PHI_C_MARGIN));
        } else {
            let mut x = 1e-8;
            loop {
                phis.push(x);
                if phis.len() > 400 || self.density(x)? > TABLE_RHO_MAX {
                    break;
                }
                x *= 2f64.sqrt();
            }
        }
        let mut nodes: Vec<Node> = Vec::with_capacity(phis.len() + 1);
        nodes.push(Node { phi: 0.0, density: 0.0 });
        for phi in phis {
            let density = self.density(phi)?;
            if let Some(last) = nodes.last() {
                if !(density > last.density && phi > last.phi) {
                    continue;
                }
            }
            nodes.push(Node { phi, density });
        }
        Ok(nodes)
    }

    pub fn spec(&self) -> &JumpRateSpec {
        &self.spec
    }

    pub fn critical_fugacity(&self) -> f64 {
        self.phi_c
    }

    pub fn series_control(&self) -> SeriesControl {
        self.series
    }

    /// Largest density the inversion accepts: `+∞` when `φ_c = ∞`, otherwise
    /// `R` at the outermost table node (an estimate of `sup R`).
    pub fn saturation_density(&self) -> f64 {
        if self.phi_c.is_finite() {
            self.nodes.last().map_or(0.0, |n| n.density)
        } else {
            f64::INFINITY
        }
    }

    fn check_phi(&self, phi: f64) -> Result<()> {
        if !(phi >= 0.0) {
            return Err(Error::Domain(format!("fugacity must be ≥ 0, got {phi}")));
        }
        if phi >= self.phi_c {
            return Err(Error::OutOfDomain { phi, phi_c: self.phi_c });
        }
        Ok(())
    }

    /// Asymptotic ratio of consecutive terms of `Z`, used by the tail bound.
    fn limit_ratio(&self, phi: f64) -> f64 {
        if self.phi_c.is_finite() {
            phi / self.phi_c
        } else {
            0.0
        }
    }

    /// `log Z`, mean and variance by direct summation of the marginal series,
    /// ignoring any closed form.
    pub fn series_moments(&self, phi: f64) -> Result<Moments> {
        self.check_phi(phi)?;
        if phi == 0.0 {
            return Ok(Moments { log_z: 0.0, density: 0.0, variance: 0.0 });
        }
        let ln_phi = phi.ln();
        let limit = self.limit_ratio(phi);
        // Weighted Welford accumulation with weights exp(l_k − shift).
        let mut shift = 0.0;
        let mut weight = 1.0;
        let mut mean = 0.0;
        let mut m2 = 0.0;
        let mut log_term = 0.0;
        let mut prev_w = 1.0;
        for k in 1..=self.series.max_terms {
            let g = self.spec.evaluate(k as u64)?;
            log_term += ln_phi - g.ln();
            if log_term > shift + 64.0 {
                let f = (shift - log_term).exp();
                weight *= f;
                m2 *= f;
                prev_w *= f;
                shift = log_term;
            }
            let w = (log_term - shift).exp();
            let kf = k as f64;
            weight += w;
            let delta = kf - mean;
            mean += w / weight * delta;
            m2 += w * delta * (kf - mean);
            // test convergence on the k²-weighted term so that the mean and
            // variance are as accurate as Z itself
            let ratio = if prev_w > 0.0 { w / prev_w } else { 1.0 };
            let scaled = w * (1.0 + kf) * (1.0 + kf);
            let scale = weight * (1.0 + mean) * (1.0 + mean);
            if kf > mean && self.series.converged(scaled, scale, ratio * (1.0 + 1.0 / kf).powi(2), limit) {
                return Ok(Moments { log_z: shift + weight.ln(), density: mean, variance: m2 / weight });
            }
            prev_w = w;
        }
        Err(Error::Budget { terms: self.series.max_terms, last_relative: prev_w / weight })
    }

    /// Moments from the closed form when the model has one.
    pub fn moments(&self, phi: f64) -> Result<Moments> {
        self.check_phi(phi)?;
        if phi == 0.0 {
            return Ok(Moments { log_z: 0.0, density: 0.0, variance: 0.0 });
        }
        let series = self.series;
        match self.closed {
            ClosedForm::Linear { scale } => {
                let m = phi / scale;
                Ok(Moments { log_z: m, density: m, variance: m })
            }
            ClosedForm::Constant => Ok(Moments {
                log_z: -(-phi).ln_1p(),
                density: phi / (1.0 - phi),
                variance: phi / ((1.0 - phi) * (1.0 - phi)),
            }),
            ClosedForm::Evans { b } => {
                // Z = ₂F₁(1,1;1+b;φ), Z′ = ₂F₁(2,2;2+b;φ)/(1+b),
                // Z″ = 4·₂F₁(3,3;3+b;φ)/((1+b)(2+b))
                let z0 = special::hyp2f1_with(1.0, 1.0, 1.0 + b, phi, series)?;
                let z1 = special::hyp2f1_with(2.0, 2.0, 2.0 + b, phi, series)? / (1.0 + b);
                let z2 = 4.0 * special::hyp2f1_with(3.0, 3.0, 3.0 + b, phi, series)? / ((1.0 + b) * (2.0 + b));
                let density = phi * z1 / z0;
                let factorial2 = phi * phi * z2 / z0;
                Ok(Moments { log_z: z0.ln(), density, variance: factorial2 + density - density * density })
            }
            ClosedForm::Landim { b } => {
                let lb = special::polylog_with(b, phi, series)?;
                let lb1 = special::polylog_with(b - 1.0, phi, series)?;
                let lb2 = special::polylog_with(b - 2.0, phi, series)?;
                let z = 1.0 + lb;
                let density = lb1 / z;
                Ok(Moments { log_z: lb.ln_1p(), density, variance: lb2 / z - density * density })
            }
            ClosedForm::None => self.series_moments(phi),
        }
    }

    /// `(Z(φ), Z′(φ))`.
    pub fn partition_function(&self, phi: f64) -> Result<(f64, f64)> {
        self.check_phi(phi)?;
        if phi == 0.0 {
            return Ok((1.0, 1.0 / self.spec.first_rate()));
        }
        let m = self.moments(phi)?;
        let z = m.log_z.exp();
        Ok((z, m.density * z / phi))
    }

    pub fn log_partition(&self, phi: f64) -> Result<f64> {
        Ok(self.moments(phi)?.log_z)
    }

    /// `R(φ) = φZ′(φ)/Z(φ)`.
    pub fn density(&self, phi: f64) -> Result<f64> {
        self.check_phi(phi)?;
        if phi == 0.0 {
            return Ok(0.0);
        }
        match self.closed {
            ClosedForm::Linear { scale } => Ok(phi / scale),
            ClosedForm::Constant => Ok(phi / (1.0 - phi)),
            ClosedForm::Evans { b } => {
                let num = special::hyp2f1_with(2.0, 2.0, 2.0 + b, phi, self.series)?;
                let den = special::hyp2f1_with(1.0, 1.0, 1.0 + b, phi, self.series)?;
                Ok(phi * num / ((1.0 + b) * den))
            }
            ClosedForm::Landim { b } => {
                let num = special::polylog_with(b - 1.0, phi, self.series)?;
                let den = special::polylog_with(b, phi, self.series)?;
                Ok(num / (1.0 + den))
            }
            ClosedForm::None => Ok(self.series_moments(phi)?.density),
        }
    }

    /// `Φ(ρ) = R⁻¹(ρ)`.
    pub fn mean_jump_rate(&self, rho: f64) -> Result<f64> {
        if !(rho >= 0.0) || rho.is_infinite() {
            return Err(Error::Domain(format!("density must be finite and ≥ 0, got {rho}")));
        }
        if rho == 0.0 {
            return Ok(0.0);
        }
        match self.closed {
            ClosedForm::Linear { scale } => return Ok(rho * scale),
            ClosedForm::Constant => return Ok(rho / (1.0 + rho)),
            _ => {}
        }
        let (mut lo, mut hi) = self.bracket(rho)?;
        let mut phi = {
            let (rl, rh) = (self.density(lo)?, self.density(hi)?);
            if rh > rl {
                lo + (hi - lo) * (rho - rl) / (rh - rl)
            } else {
                0.5 * (lo + hi)
            }
        };
        for _ in 0..200 {
            let m = self.moments(phi)?;
            let r = if matches!(self.closed, ClosedForm::None) { m.density } else { self.density(phi)? };
            let f = r - rho;
            if f.abs() <= 2.0 * f64::EPSILON * rho {
                return Ok(phi);
            }
            if f < 0.0 {
                lo = phi;
            } else {
                hi = phi;
            }
            let slope = m.variance / phi;
            let mut next = phi - f / slope;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            if (next - phi).abs() <= 2.0 * f64::EPSILON * phi || hi - lo <= 2.0 * f64::EPSILON * hi {
                return Ok(next);
            }
            phi = next;
        }
        Ok(phi)
    }

    fn bracket(&self, rho: f64) -> Result<(f64, f64)> {
        let idx = self.nodes.partition_point(|n| n.density < rho);
        if idx < self.nodes.len() {
            let hi = self.nodes[idx];
            if hi.density == rho {
                return Ok((hi.phi, hi.phi));
            }
            return Ok((self.nodes[idx - 1].phi, hi.phi));
        }
        if self.phi_c.is_finite() {
            return Err(Error::Saturation { rho, sup_estimate: self.saturation_density() });
        }
        let mut lo = self.nodes.last().map_or(1.0, |n| n.phi);
        let mut hi = 2.0 * lo;
        for _ in 0..200 {
            if self.density(hi)? >= rho {
                return Ok((lo, hi));
            }
            lo = hi;
            hi *= 2.0;
        }
        Err(Error::Saturation { rho, sup_estimate: self.density(lo)? })
    }

    /// `Φ′(ρ) = 1/R′(Φ(ρ)) = Φ(ρ)/χ(ρ)`, with `Φ′(0) = g(1)`.
    pub fn mean_jump_rate_derivative(&self, rho: f64) -> Result<f64> {
        if rho == 0.0 {
            return Ok(self.spec.first_rate());
        }
        match self.closed {
            ClosedForm::Linear { scale } => return Ok(scale),
            ClosedForm::Constant => return Ok(1.0 / ((1.0 + rho) * (1.0 + rho))),
            _ => {}
        }
        let phi = self.mean_jump_rate(rho)?;
        Ok(phi / self.moments(phi)?.variance)
    }

    /// `S(ρ) = ρ log Φ(ρ) − log Z(Φ(ρ))`.
    pub fn entropy(&self, rho: f64) -> Result<f64> {
        if rho == 0.0 {
            return Ok(0.0);
        }
        let phi = self.mean_jump_rate(rho)?;
        Ok(rho * phi.ln() - self.log_partition(phi)?)
    }

    /// `S′(ρ) = log Φ(ρ)`; returns `−∞` at `ρ = 0`.
    pub fn entropy_derivative(&self, rho: f64) -> Result<f64> {
        if rho == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(self.mean_jump_rate(rho)?.ln())
    }

    /// `S″(ρ) = Φ′(ρ)/Φ(ρ) = 1/χ(ρ)`.
    pub fn entropy_second_derivative(&self, rho: f64) -> Result<f64> {
        Ok(1.0 / self.compressibility(rho)?)
    }

    /// Large deviation rate of the static density,
    /// `I_{ρ*}(ρ) = ρ log(Φ(ρ)/Φ(ρ*)) − log(Z(Φ(ρ))/Z(Φ(ρ*)))`.
    pub fn static_rate(&self, rho_star: f64, rho: f64) -> Result<f64> {
        if !(rho_star > 0.0) {
            return Err(Error::Domain(format!("reference density must be > 0, got {rho_star}")));
        }
        let phi_star = self.mean_jump_rate(rho_star)?;
        let log_z_star = self.log_partition(phi_star)?;
        if rho == 0.0 {
            return Ok(log_z_star);
        }
        let phi = self.mean_jump_rate(rho)?;
        let value = rho * (phi.ln() - phi_star.ln()) - (self.log_partition(phi)? - log_z_star);
        Ok(value.max(0.0))
    }

    /// `χ(ρ) = Var(η(0))` under the equilibrium marginal at density `ρ`.
    pub fn compressibility(&self, rho: f64) -> Result<f64> {
        if !(rho > 0.0) {
            return Err(Error::Domain(format!("compressibility needs ρ > 0, got {rho}")));
        }
        let phi = self.mean_jump_rate(rho)?;
        Ok(self.moments(phi)?.variance)
    }

    /// `σ(ρ) = Φ(ρ)/ρ`, extended by `σ(0) = g(1)`.
    pub fn self_diffusivity(&self, rho: f64) -> Result<f64> {
        if rho == 0.0 {
            return Ok(self.spec.first_rate());
        }
        Ok(self.mean_jump_rate(rho)? / rho)
    }

    pub fn thermo_value(&self, rho: f64) -> Result<ThermoValue> {
        if rho == 0.0 {
            let g1 = self.spec.first_rate();
            return Ok(ThermoValue {
                rho,
                phi: 0.0,
                entropy: 0.0,
                entropy_derivative: f64::NEG_INFINITY,
                sigma: g1,
                chi: 0.0,
            });
        }
        let phi = self.mean_jump_rate(rho)?;
        let m = self.moments(phi)?;
        Ok(ThermoValue {
            rho,
            phi,
            entropy: rho * phi.ln() - m.log_z,
            entropy_derivative: phi.ln(),
            sigma: phi / rho,
            chi: m.variance,
        })
    }

    /// One-site marginal `p_k = φ^k/(g!(k) Z(φ))`, cut once the cumulative
    /// mass exceeds `1 − cut` and renormalized.
    pub fn marginal_pmf(&self, phi: f64, cut: f64) -> Result<Vec<f64>> {
        self.check_phi(phi)?;
        if phi == 0.0 {
            return Ok(vec![1.0]);
        }
        let log_z = self.log_partition(phi)?;
        let ln_phi = phi.ln();
        let mut pmf = vec![(-log_z).exp()];
        let mut cumulative = pmf[0];
        let mut log_term = 0.0;
        let mut k = 0u64;
        while cumulative <= 1.0 - cut {
            k += 1;
            if k as usize > self.series.max_terms {
                return Err(Error::Budget { terms: self.series.max_terms, last_relative: 1.0 - cumulative });
            }
            log_term += ln_phi - self.spec.evaluate(k)?.ln();
            let p = (log_term - log_z).exp();
            pmf.push(p);
            cumulative += p;
            if p == 0.0 && log_term - log_z < -800.0 {
                break;
            }
        }
        for p in &mut pmf {
            *p /= cumulative;
        }
        Ok(pmf)
    }

    /// Checks `Φ(ρ)Φ′(ρ) ≥ (1−1/d)∫₀^ρ Φ′(r)² dr` on a grid, with `Φ′` from
    /// central differences and the integral by the composite trapezoid rule.
    pub fn mccann_check(&self, rho_grid: &[f64], d: usize) -> Result<McCannReport> {
        if rho_grid.is_empty() || d == 0 {
            return Err(Error::arg("McCann check needs a nonempty grid and d ≥ 1"));
        }
        let factor = 1.0 - 1.0 / d as f64;
        let deriv = |r: f64| -> Result<f64> {
            let h = 1e-5 * r.max(1.0);
            if r < 2.0 * h {
                let (f0, f1, f2) = (self.mean_jump_rate(r)?, self.mean_jump_rate(r + h)?, self.mean_jump_rate(r + 2.0 * h)?);
                Ok((-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h))
            } else {
                Ok((self.mean_jump_rate(r + h)? - self.mean_jump_rate(r - h)?) / (2.0 * h))
            }
        };
        let mut rows = Vec::with_capacity(rho_grid.len());
        let mut worst = f64::INFINITY;
        let mut witness = rho_grid[0];
        for &rho in rho_grid {
            if !(rho > 0.0) {
                return Err(Error::arg(format!("McCann grid points must be > 0, got {rho}")));
            }
            let lhs = self.mean_jump_rate(rho)? * deriv(rho)?;
            let n = 400;
            let dr = rho / n as f64;
            let mut integral = 0.0;
            for i in 0..=n {
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                integral += w * deriv(i as f64 * dr)?.powi(2);
            }
            let rhs = factor * integral * dr;
            let margin = lhs - rhs;
            if margin < worst {
                worst = margin;
                witness = rho;
            }
            rows.push((rho, lhs, rhs));
        }
        Ok(McCannReport { holds: worst >= 0.0, worst_margin: worst, witness, rows })
    }

    /// Cached `(φ, R(φ))` inversion nodes.
    pub fn table(&self) -> Vec<(f64, f64)> {
        self.nodes.iter().map(|n| (n.phi, n.density)).collect()
    }
}
