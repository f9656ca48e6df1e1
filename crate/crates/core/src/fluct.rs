//! Fluctuation fields of the particle system around the hydrodynamic
//! reference and martingale diagnostics for their linearized dynamics.
//!
//! The field is `Y^N(t) = N^{d/2} ⟨𝔤, ρ(t) − ρ^N(t)⟩` with
//! `⟨𝔤, ρ^N⟩ = N^{−d} Σ_x 𝔤(x) η_t(x)`, lattice sites at the cell centres
//! `(x + ½)/N`. With this scaling the static variance is `χ(ρ*)∫𝔤²`.
//!
//! The infinitesimal quadratic variation of `Y^N[𝔤]` is
//! `N^{−d} Σ_x 2 g(η(x)) |∇𝔤(x)|² → 2∫Φ(ρ)|∇𝔤|²`: every site has `2d`
//! neighbours with weight one, and each axis contributes a forward and a
//! backward jump.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{DensityField, Grid};
use crate::path::PathRecord;
use crate::stats::{self, MeanEstimate};
use crate::thermo::Ensemble;
use crate::zrp_sim::{self, replica_rng, Configuration, Record};

/// One Fourier term `a cos(2π k·x) + b sin(2π k·x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Mode {
    pub k: [i32; 2],
    pub cos: f64,
    pub sin: f64,
}

/// Finite real Fourier sum on `𝕋^d` with closed-form derivatives.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestFunction {
    pub constant: f64,
    pub modes: Vec<Mode>,
}

impl TestFunction {
    pub fn constant(c: f64) -> Self {
        TestFunction { constant: c, modes: Vec::new() }
    }

    pub fn cosine(k: [i32; 2], amplitude: f64) -> Self {
        TestFunction { constant: 0.0, modes: vec![Mode { k, cos: amplitude, sin: 0.0 }] }
    }

    pub fn sine(k: [i32; 2], amplitude: f64) -> Self {
        TestFunction { constant: 0.0, modes: vec![Mode { k, cos: 0.0, sin: amplitude }] }
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.modes.push(mode);
        self
    }

    fn phase(k: [i32; 2], x: [f64; 2]) -> f64 {
        2.0 * PI * (k[0] as f64 * x[0] + k[1] as f64 * x[1])
    }

    pub fn value(&self, x: [f64; 2]) -> f64 {
        self.constant
            + self
                .modes
                .iter()
                .map(|m| {
                    let p = Self::phase(m.k, x);
                    m.cos * p.cos() + m.sin * p.sin()
                })
                .sum::<f64>()
    }

    pub fn gradient(&self, x: [f64; 2]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for m in &self.modes {
            let p = Self::phase(m.k, x);
            let d = -m.cos * p.sin() + m.sin * p.cos();
            for (a, ga) in g.iter_mut().enumerate() {
                *ga += 2.0 * PI * m.k[a] as f64 * d;
            }
        }
        g
    }

    pub fn laplacian(&self, x: [f64; 2]) -> f64 {
        self.modes
            .iter()
            .map(|m| {
                let p = Self::phase(m.k, x);
                -Self::eigenvalue(m.k) * (m.cos * p.cos() + m.sin * p.sin())
            })
            .sum()
    }

    /// `4π²|k|²`.
    pub fn eigenvalue(k: [i32; 2]) -> f64 {
        4.0 * PI * PI * ((k[0] * k[0] + k[1] * k[1]) as f64)
    }

    /// Mean `∫𝔤`.
    pub fn mean(&self) -> f64 {
        self.constant + self.modes.iter().filter(|m| m.k == [0, 0]).map(|m| m.cos).sum::<f64>()
    }

    /// `∫_{𝕋^d} 𝔤²`, assuming the nonzero wave vectors are distinct up to sign.
    pub fn l2_norm_sq(&self) -> f64 {
        let c0 = self.mean();
        c0 * c0 + self.modes.iter().filter(|m| m.k != [0, 0]).map(|m| 0.5 * (m.cos * m.cos + m.sin * m.sin)).sum::<f64>()
    }
}

/// Real polynomial `Σ c_j y^j` of degree at most 4.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Polynomial(Vec<f64>);

impl Polynomial {
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() > 5 {
            return Err(Error::arg(format!("polynomial degree must be ≤ 4, got {}", coefficients.len() - 1)));
        }
        Ok(Polynomial(coefficients))
    }

    pub fn eval(&self, y: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * y + c)
    }

    pub fn derivative(&self) -> Polynomial {
        Polynomial(self.0.iter().enumerate().skip(1).map(|(j, c)| j as f64 * c).collect())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FluctuationSample {
    pub replica: u64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

/// Constant reference path `ρ ≡ ρ*` at times `0, dt, …, horizon`.
pub fn equilibrium_reference(rho_star: f64, grid: Grid, horizon: f64, dt: f64) -> Result<PathRecord<DensityField>> {
    let mut path = PathRecord::new();
    let field = DensityField::constant(grid, rho_star)?;
    let steps = (horizon / dt).round() as usize;
    for k in 0..=steps {
        path.push(k as f64 * dt, field.clone());
    }
    Ok(path)
}

/// Evaluates `Y^N[ψ_t]` for a time-dependent test function given by its site
/// values and its integral against the reference.
struct Observable {
    /// `ψ_t(x)` at lattice sites, one vector per reference time
    sites: Vec<Vec<f64>>,
    /// `⟨ψ_t, ρ(t)⟩`
    reference: Vec<f64>,
}

impl Observable {
    fn eval(&self, k: usize, config: &Configuration, scale: f64) -> f64 {
        let n_sites = config.eta().len() as f64;
        let particle: f64 = self.sites[k].iter().zip(config.eta()).map(|(p, &e)| p * e as f64).sum::<f64>() / n_sites;
        scale * (self.reference[k] - particle)
    }
}

struct Reference<'a> {
    times: Vec<f64>,
    fields: Vec<&'a DensityField>,
    dt: f64,
}

impl<'a> Reference<'a> {
    fn new(rho_ref: &'a PathRecord<DensityField>) -> Result<Self> {
        let times: Vec<f64> = rho_ref.iter().map(|(t, _)| t).collect();
        let fields: Vec<&DensityField> = rho_ref.iter().map(|(_, f)| f).collect();
        if times.len() < 2 {
            return Err(Error::arg("reference path needs at least two snapshots"));
        }
        let dt = times[1] - times[0];
        for w in times.windows(2) {
            if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt {
                return Err(Error::arg("reference snapshots must be uniformly spaced"));
            }
        }
        Ok(Reference { times, fields, dt })
    }

    fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Builds `ψ_t = f(ρ_ref(t, x), x)` at lattice sites and its reference integral.
    fn observable(&self, lattice: Grid, f: impl Fn(f64, [f64; 2]) -> f64) -> Observable {
        let mut sites = Vec::with_capacity(self.times.len());
        let mut reference = Vec::with_capacity(self.times.len());
        for field in &self.fields {
            let fg = field.grid();
            let vals = field.values();
            sites.push((0..lattice.len()).map(|x| {
                let c = lattice.centre(x);
                f(vals[fg.locate(c)], c)
            }).collect());
            let integrand: Vec<f64> = (0..fg.len()).map(|i| f(vals[i], fg.centre(i)) * vals[i]).collect();
            reference.push(fg.integral(&integrand));
        }
        Observable { sites, reference }
    }
}

/// Runs `replicas` trajectories started from the product measure with
/// profile `ρ_ref(0)` and returns `Y^N` on the reference time grid for each
/// observable.
fn simulate(
    ens: &Ensemble,
    reference: &Reference,
    observables: &[&Observable],
    side: usize,
    replicas: usize,
    seed: u64,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let dim = reference.fields[0].grid().dim();
    let scale = (side as f64).powf(dim as f64 / 2.0);
    (0..replicas as u64)
        .into_par_iter()
        .map(|r| -> Result<Vec<Vec<f64>>> {
            let mut rng = replica_rng(seed, r);
            let config = zrp_sim::sample_profile_with(ens, reference.fields[0], side, &mut rng)?;
            let out = zrp_sim::run_with(ens, config, reference.horizon(), &mut rng, Record::Snapshots(reference.dt))?;
            let snaps = out.snapshots.expect("snapshots requested");
            let configs: Vec<&Configuration> = snaps.iter().map(|(_, c)| c).collect();
            if configs.len() != reference.times.len() {
                return Err(Error::arg(format!("simulation produced {} snapshots for {} reference times", configs.len(), reference.times.len())));
            }
            Ok(observables.iter().map(|obs| configs.iter().enumerate().map(|(k, c)| obs.eval(k, c, scale)).collect()).collect())
        })
        .collect()
}

/// `Y^N[𝔤]` along replicas of the particle system.
pub fn fluctuation_samples(
    ens: &Ensemble,
    rho_ref: &PathRecord<DensityField>,
    g: &TestFunction,
    side: usize,
    replicas: usize,
    seed: u64,
) -> Result<Vec<FluctuationSample>> {
    let reference = Reference::new(rho_ref)?;
    let lattice = Grid::new(side, reference.fields[0].grid().dim())?;
    let obs = reference.observable(lattice, |_, x| g.value(x));
    let raw = simulate(ens, &reference, &[&obs], side, replicas, seed)?;
    Ok(raw
        .into_iter()
        .enumerate()
        .map(|(r, mut v)| FluctuationSample { replica: r as u64, times: reference.times.clone(), values: v.remove(0) })
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct VarianceCheck {
    /// `χ(ρ*)∫𝔤²`
    pub static_prediction: f64,
    /// Mode-by-mode stationary variance of the linearized dynamics.
    pub ou_prediction: f64,
    pub sample: MeanEstimate,
    pub z: f64,
    /// Sample variance at the later time, when requested.
    pub dynamic: Option<MeanEstimate>,
    pub dynamic_z: Option<f64>,
    pub pass: bool,
}

/// Stationary variance of `dZ = Φ′ΔZ dt + noise`, mode by mode: a mode with
/// eigenvalue `λ` has drift `Φ′λ` and noise intensity `2Φλ`, hence variance
/// `Φ/Φ′` per unit `L²` mass; the constant mode keeps its initial variance
/// `χ` because mass is conserved.
pub fn ou_stationary_variance(ens: &Ensemble, rho_star: f64, g: &TestFunction) -> Result<f64> {
    let phi = ens.mean_jump_rate(rho_star)?;
    let dphi = ens.mean_jump_rate_derivative(rho_star)?;
    let chi = ens.compressibility(rho_star)?;
    let mut var = 0.0;
    let c0 = g.mean();
    var += chi * c0 * c0;
    for m in g.modes.iter().filter(|m| m.k != [0, 0]) {
        let lambda = TestFunction::eigenvalue(m.k);
        let (drift, noise) = (dphi * lambda, 2.0 * phi * lambda);
        var += 0.5 * (m.cos * m.cos + m.sin * m.sin) * noise / (2.0 * drift);
    }
    Ok(var)
}

/// Compares the variance of `Y^N[𝔤]` in equilibrium against `χ(ρ*)∫𝔤²` at
/// time 0 and, if `dynamic_time` is given, against the stationary prediction
/// at that time. Passes iff every z-score is within 4.
pub fn equilibrium_variance_check(
    ens: &Ensemble,
    rho_star: f64,
    g: &TestFunction,
    side: usize,
    dim: usize,
    replicas: usize,
    seed: u64,
    dynamic_time: Option<f64>,
) -> Result<VarianceCheck> {
    if replicas < 2 {
        return Err(Error::arg("variance check needs at least two replicas"));
    }
    let lattice = Grid::new(side, dim)?;
    let chi = ens.compressibility(rho_star)?;
    let static_prediction = chi * lattice.integral(&lattice.sample(|x| g.value(x).powi(2)));
    let ou_prediction = ou_stationary_variance(ens, rho_star, g)?;
    let scale = (side as f64).powf(dim as f64 / 2.0);
    let sites = lattice.sample(|x| g.value(x));
    let mean_g = lattice.integral(&sites);
    let y = |c: &Configuration| -> f64 {
        let p: f64 = sites.iter().zip(c.eta()).map(|(s, &e)| s * e as f64).sum::<f64>() / lattice.len() as f64;
        scale * (rho_star * mean_g - p)
    };
    let pairs = (0..replicas as u64)
        .into_par_iter()
        .map(|r| -> Result<(f64, Option<f64>)> {
            let mut rng = replica_rng(seed, r);
            let c = zrp_sim::sample_equilibrium_with(ens, rho_star, lattice, &mut rng)?;
            let y0 = y(&c);
            let yt = match dynamic_time {
                Some(t) => Some(y(&zrp_sim::run_with(ens, c, t, &mut rng, Record::None)?.config)),
                None => None,
            };
            Ok((y0, yt))
        })
        .collect::<Result<Vec<_>>>()?;
    let y0: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let sample = stats::variance_about(&y0, 0.0);
    let z = sample.z(static_prediction);
    let (dynamic, dynamic_z) = match dynamic_time {
        Some(_) => {
            let yt: Vec<f64> = pairs.iter().map(|p| p.1.unwrap()).collect();
            let d = stats::variance_about(&yt, 0.0);
            let dz = d.z(ou_prediction);
            (Some(d), Some(dz))
        }
        None => (None, None),
    };
    let pass = z.abs() < 4.0 && dynamic_z.is_none_or(|dz| dz.abs() < 4.0);
    Ok(VarianceCheck { static_prediction, ou_prediction, sample, z, dynamic, dynamic_z, pass })
}

#[derive(Debug, Clone, Serialize)]
pub struct MartingaleReport {
    pub mean_increment: f64,
    pub stderr: f64,
    pub z: f64,
    pub replicas: usize,
    #[serde(skip)]
    pub increments: Vec<f64>,
}

/// Per-replica increments `M(t₂) − M(t₁)` of
/// `M(t) = F(Y_t) − F(Y_0) − ∫₀ᵗ F′(Y_s) Y_s[Φ′(ρ_s)Δ𝔤] ds − ½∫₀ᵗ F″(Y_s) · 2∫Φ(ρ_s)|∇𝔤|² ds`,
/// time integrals by trapezoid on the reference grid.
pub fn martingale_increments(
    ens: &Ensemble,
    rho_ref: &PathRecord<DensityField>,
    g: &TestFunction,
    polys: &[Polynomial],
    side: usize,
    replicas: usize,
    window: (f64, f64),
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let reference = Reference::new(rho_ref)?;
    let (t1, t2) = window;
    if !(t1 < t2) || t1 < 0.0 || t2 > reference.horizon() * (1.0 + 1e-12) {
        return Err(Error::arg(format!("window ({t1}, {t2}) must satisfy 0 ≤ t₁ < t₂ ≤ {}", reference.horizon())));
    }
    let k1 = rho_ref.index_of(t1, 1e-9 * reference.dt.max(1.0))?;
    let k2 = rho_ref.index_of(t2, 1e-9 * reference.dt.max(1.0))?;
    let lattice = Grid::new(side, reference.fields[0].grid().dim())?;
    let y_obs = reference.observable(lattice, |_, x| g.value(x));
    let dphi = |r: f64| ens.mean_jump_rate_derivative(r).unwrap_or(f64::NAN);
    let drift_obs = reference.observable(lattice, |r, x| dphi(r) * g.laplacian(x));
    if drift_obs.sites.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Domain("Φ′ undefined on the reference path".into()));
    }
    let qv: Vec<f64> = reference
        .fields
        .iter()
        .map(|f| -> Result<f64> {
            let fg = f.grid();
            let vals: Vec<f64> = (0..fg.len())
                .map(|i| {
                    let gr = g.gradient(fg.centre(i));
                    Ok(2.0 * ens.mean_jump_rate(f.values()[i])? * (gr[0] * gr[0] + gr[1] * gr[1]))
                })
                .collect::<Result<_>>()?;
            Ok(fg.integral(&vals))
        })
        .collect::<Result<_>>()?;
    let raw = simulate(ens, &reference, &[&y_obs, &drift_obs], side, replicas, seed)?;
    let dt = reference.dt;
    let derivs: Vec<(Polynomial, Polynomial)> = polys.iter().map(|p| {
        let d1 = p.derivative();
        let d2 = d1.derivative();
        (d1, d2)
    }).collect();
    Ok(polys
        .iter()
        .zip(&derivs)
        .map(|(p, (d1, d2))| {
            raw.iter()
                .map(|series| {
                    let (y, a) = (&series[0], &series[1]);
                    let integrand = |k: usize| d1.eval(y[k]) * a[k] + 0.5 * d2.eval(y[k]) * qv[k];
                    let mut compensator = 0.0;
                    for k in k1..k2 {
                        compensator += 0.5 * dt * (integrand(k) + integrand(k + 1));
                    }
                    p.eval(y[k2]) - p.eval(y[k1]) - compensator
                })
                .collect()
        })
        .collect())
}

/// z-score of the mean martingale increment over `window`.
pub fn martingale_residual(
    ens: &Ensemble,
    rho_ref: &PathRecord<DensityField>,
    g: &TestFunction,
    f: &Polynomial,
    side: usize,
    replicas: usize,
    window: (f64, f64),
    seed: u64,
) -> Result<MartingaleReport> {
    if replicas < 100 {
        return Err(Error::arg(format!("martingale test needs at least 100 replicas, got {replicas}")));
    }
    let inc = martingale_increments(ens, rho_ref, g, std::slice::from_ref(f), side, replicas, window, seed)?.remove(0);
    Ok(report(inc))
}

/// Summary statistics of one set of increments.
pub fn report(increments: Vec<f64>) -> MartingaleReport {
    let est = stats::mean_stderr(&increments);
    let z = if est.stderr > 0.0 { est.mean / est.stderr } else if est.mean == 0.0 { 0.0 } else { f64::INFINITY };
    MartingaleReport { mean_increment: est.mean, stderr: est.stderr, z, replicas: increments.len(), increments }
}

#[derive(Debug, Clone, Serialize)]
pub struct DriftSlope {
    /// Regression slope of `Y(Δt)` on `Y(0)`.
    pub slope: MeanEstimate,
    /// `exp(−Φ′(ρ*) λ Δt)`
    pub predicted: f64,
}

/// Conditional mean decay of a single-mode fluctuation over one short step.
pub fn drift_slope(ens: &Ensemble, rho_star: f64, k: [i32; 2], side: usize, dim: usize, lag: f64, replicas: usize, seed: u64) -> Result<DriftSlope> {
    let g = TestFunction::cosine(k, 2f64.sqrt());
    let lattice = Grid::new(side, dim)?;
    let reference = equilibrium_reference(rho_star, lattice, lag, lag)?;
    let samples = fluctuation_samples(ens, &reference, &g, side, replicas, seed)?;
    let x: Vec<f64> = samples.iter().map(|s| s.values[0]).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.values[1]).collect();
    let lambda = TestFunction::eigenvalue(k);
    Ok(DriftSlope { slope: stats::regression_slope(&x, &y), predicted: (-ens.mean_jump_rate_derivative(rho_star)? * lambda * lag).exp() })
}
