//! Large-deviation rate functionals and the frozen-weight JKO scheme.
//!
//! The field functional is
//! `I(ρ) = ∫₀ᵀ ‖∂tρ − ΔΦ(ρ)‖²_{H⁻¹_{Φ(ρ)}} dt`, discretized with midpoint
//! fields in both the weight and the flux. Expanding the square splits it into
//! a metric action, the entropy dissipation and twice the entropy change.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{DensityField, Grid};
use crate::metric::{self, WeightField};
use crate::path::PathRecord;
use crate::pde;
use crate::thermo::Ensemble;

/// A scalar potential `V` with derivative.
pub trait ToyPotential {
    fn value(&self, x: f64) -> f64;
    fn derivative(&self, x: f64) -> f64;
}

/// `V(x) = κx²/2`.
#[derive(Debug, Clone, Copy)]
pub struct Quadratic(pub f64);

impl ToyPotential for Quadratic {
    fn value(&self, x: f64) -> f64 {
        0.5 * self.0 * x * x
    }

    fn derivative(&self, x: f64) -> f64 {
        self.0 * x
    }
}

/// Potential given by a pair of closures.
pub struct FnPotential<F, G> {
    pub value: F,
    pub derivative: G,
}

impl<F: Fn(f64) -> f64, G: Fn(f64) -> f64> ToyPotential for FnPotential<F, G> {
    fn value(&self, x: f64) -> f64 {
        (self.value)(x)
    }

    fn derivative(&self, x: f64) -> f64 {
        (self.derivative)(x)
    }
}

/// Positions `x_0 … x_K` at uniform times on `[0, T]`.
#[derive(Debug, Clone)]
pub struct ToyPath<V> {
    pub t_final: f64,
    pub positions: Vec<f64>,
    pub potential: V,
}

impl<V: ToyPotential> ToyPath<V> {
    pub fn new(t_final: f64, positions: Vec<f64>, potential: V) -> Result<Self> {
        if !(t_final > 0.0) || positions.len() < 2 {
            return Err(Error::arg("toy path needs T > 0 and at least two points"));
        }
        Ok(ToyPath { t_final, positions, potential })
    }

    /// Samples `x(t) = f(t)` at `K + 1` uniform times.
    pub fn from_fn(t_final: f64, steps: usize, potential: V, f: impl Fn(f64) -> f64) -> Result<Self> {
        let dt = t_final / steps as f64;
        Self::new(t_final, (0..=steps).map(|k| f(k as f64 * dt)).collect(), potential)
    }

    /// The flow `ẋ = −V′(x)` from `x0`, by explicit Euler with `substeps`
    /// substeps per recorded interval.
    pub fn gradient_flow(potential: V, x0: f64, t_final: f64, steps: usize, substeps: usize) -> Result<Self> {
        let h = t_final / (steps * substeps.max(1)) as f64;
        let mut x = x0;
        let mut positions = vec![x];
        for _ in 0..steps {
            for _ in 0..substeps.max(1) {
                x -= h * potential.derivative(x);
            }
            positions.push(x);
        }
        Self::new(t_final, positions, potential)
    }

    pub fn steps(&self) -> usize {
        self.positions.len() - 1
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.steps() as f64
    }
}

/// `Σ_k Δt · ½((x_{k+1} − x_k)/Δt + V′(x_{k+½}))²`.
pub fn toy_rate<V: ToyPotential>(path: &ToyPath<V>) -> f64 {
    let dt = path.dt();
    path.positions
        .windows(2)
        .map(|w| {
            let v = (w[1] - w[0]) / dt + path.potential.derivative(0.5 * (w[0] + w[1]));
            0.5 * v * v * dt
        })
        .sum()
}

/// `∫½ẋ² + ∫½V′(x)² + V(x(T)) − V(x(0))`, same quadrature as [`toy_rate`].
pub fn toy_rate_split<V: ToyPotential>(path: &ToyPath<V>) -> f64 {
    let dt = path.dt();
    let mut kinetic = 0.0;
    let mut potential = 0.0;
    for w in path.positions.windows(2) {
        let v = (w[1] - w[0]) / dt;
        let g = path.potential.derivative(0.5 * (w[0] + w[1]));
        kinetic += 0.5 * v * v * dt;
        potential += 0.5 * g * g * dt;
    }
    let (first, last) = (path.positions[0], *path.positions.last().unwrap());
    kinetic + potential + path.potential.value(last) - path.potential.value(first)
}

/// Density fields at uniform times sharing one grid and one mass.
#[derive(Debug, Clone)]
pub struct FieldPath {
    dt: f64,
    fields: Vec<DensityField>,
}

impl FieldPath {
    pub fn new(dt: f64, fields: Vec<DensityField>) -> Result<Self> {
        if !(dt > 0.0) || fields.len() < 2 {
            return Err(Error::arg("field path needs Δt > 0 and at least two fields"));
        }
        let grid = fields[0].grid();
        let mass = fields[0].mass();
        for f in &fields {
            f.check_same_grid(&fields[0])?;
            if (f.mass() - mass).abs() > 1e-10 * mass.abs().max(f64::MIN_POSITIVE) {
                return Err(Error::arg(format!("field path masses differ: {} vs {mass}", f.mass())));
            }
        }
        let _ = grid;
        Ok(FieldPath { dt, fields })
    }

    /// Uses the snapshots of a record, which must be uniformly spaced.
    pub fn from_record(record: &PathRecord<DensityField>) -> Result<Self> {
        let times: Vec<f64> = record.iter().map(|(t, _)| t).collect();
        if times.len() < 2 {
            return Err(Error::arg("field path needs at least two snapshots"));
        }
        let dt = times[1] - times[0];
        for w in times.windows(2) {
            if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt {
                return Err(Error::arg("snapshots are not uniformly spaced"));
            }
        }
        Self::new(dt, record.iter().map(|(_, f)| f.clone()).collect())
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn fields(&self) -> &[DensityField] {
        &self.fields
    }

    pub fn grid(&self) -> Grid {
        self.fields[0].grid()
    }

    /// Time-reversed path.
    pub fn reversed(&self) -> Self {
        let mut fields = self.fields.clone();
        fields.reverse();
        FieldPath { dt: self.dt, fields }
    }
}

struct Interval {
    weight: WeightField,
    mid: DensityField,
    velocity: Vec<f64>,
    flux: Vec<f64>,
}

fn intervals<'a>(ens: &'a Ensemble, path: &'a FieldPath) -> impl Iterator<Item = Result<Interval>> + 'a {
    let grid = path.grid();
    path.fields.windows(2).map(move |w| {
        let (a, b) = (w[0].values(), w[1].values());
        let mid = DensityField::new(grid, a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect())?;
        let phi = pde::phi_values(ens, &mid)?;
        let flux = pde::discrete_laplacian(grid, &phi);
        let mut velocity: Vec<f64> = a.iter().zip(b).map(|(x, y)| (y - x) / path.dt).collect();
        grid.project_zero_mean(&mut velocity);
        Ok(Interval { weight: WeightField::new(grid, phi)?, mid, velocity, flux })
    })
}

/// `Σ_k Δt ‖(ρ_{k+1} − ρ_k)/Δt − Δ_hΦ(ρ_{k+½})‖²_{H⁻¹_{Φ(ρ_{k+½})}}`.
pub fn path_rate(ens: &Ensemble, path: &FieldPath) -> Result<f64> {
    let mut total = 0.0;
    for iv in intervals(ens, path) {
        let iv = iv?;
        let r: Vec<f64> = iv.velocity.iter().zip(&iv.flux).map(|(v, f)| v - f).collect();
        total += path.dt * metric::hneg1w_inner(&iv.weight, &r, &r)?;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateDecomposition {
    /// `Σ Δt g_{ρ_{k+½}}(∂ρ, ∂ρ)`
    pub action: f64,
    /// `Σ Δt · dissipation(ρ_{k+½})`
    pub dissipation: f64,
    /// `𝒮(ρ_K) − 𝒮(ρ_0)`
    pub entropy_delta: f64,
    /// `−2 Σ Δt ⟨∂ρ, Δ_hΦ(ρ_{k+½})⟩_{H⁻¹}`, the cross term evaluated directly.
    pub cross_direct: f64,
    pub path_rate: f64,
}

impl RateDecomposition {
    /// `path_rate − (action + dissipation + 2·entropy_delta)`.
    pub fn residual(&self) -> f64 {
        self.path_rate - (self.action + self.dissipation + 2.0 * self.entropy_delta)
    }
}

pub fn rate_decomposition(ens: &Ensemble, path: &FieldPath) -> Result<RateDecomposition> {
    let dt = path.dt;
    let (mut action, mut dissipation, mut cross, mut rate) = (0.0, 0.0, 0.0, 0.0);
    for iv in intervals(ens, path) {
        let iv = iv?;
        let xi_v = metric::poisson_solve(&iv.weight, &iv.velocity)?;
        let xi_f = metric::poisson_solve(&iv.weight, &iv.flux)?;
        let grid = iv.weight.grid();
        let vv = -grid.dot(&iv.velocity, xi_v.values());
        let vf = -grid.dot(&iv.velocity, xi_f.values());
        let ff = -grid.dot(&iv.flux, xi_f.values());
        action += dt * vv;
        cross += -2.0 * dt * vf;
        rate += dt * (vv - 2.0 * vf + ff);
        dissipation += dt * pde::dissipation(ens, &iv.mid)?;
    }
    let entropy_delta = pde::entropy_functional(ens, path.fields.last().unwrap())? - pde::entropy_functional(ens, &path.fields[0])?;
    Ok(RateDecomposition { action, dissipation, entropy_delta, cross_direct: cross, path_rate: rate })
}

/// Stopping threshold on `‖(ρ − ρ_prev)/h − Δ_{Φ(ρ_prev)} S′(ρ)‖₂`.
pub const JKO_TOL: f64 = 1e-9;
const JKO_MAX_NEWTON: usize = 100;

/// `(1/2h)‖ρ − ρ_prev‖²_{H⁻¹_{Φ(ρ_prev)}} + 𝒮(ρ)`.
pub fn jko_objective(ens: &Ensemble, rho_prev: &DensityField, rho: &DensityField, hstep: f64) -> Result<f64> {
    let w = WeightField::mobility(ens, rho_prev)?;
    let mut d: Vec<f64> = rho.values().iter().zip(rho_prev.values()).map(|(a, b)| a - b).collect();
    rho.grid().project_zero_mean(&mut d);
    Ok(metric::hneg1w_inner(&w, &d, &d)? / (2.0 * hstep) + pde::entropy_functional(ens, rho)?)
}

/// Euler–Lagrange residual `(ρ − ρ_prev) − h·Δ_w μ` with `μ = S′(ρ)`.
fn jko_residual(w: &WeightField, prev: &[f64], rho: &[f64], mu: &[f64], hstep: f64) -> Result<Vec<f64>> {
    let l = metric::weighted_laplacian(w, mu)?;
    Ok(rho.iter().zip(prev).zip(&l).map(|((r, p), l)| r - p - hstep * l).collect())
}

/// Densities `R(e^μ)` of the chemical potentials `μ`, or `None` outside the
/// fugacity domain.
fn densities(ens: &Ensemble, mu: &[f64]) -> Option<Vec<f64>> {
    mu.iter().map(|&m| ens.density(m.exp()).ok().filter(|r| r.is_finite())).collect()
}

fn euclid(u: &[f64]) -> f64 {
    u.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solves `(diag χ − h Δ_w) y = b` by Jacobi-preconditioned CG.
fn solve_newton_system(w: &WeightField, chi: &[f64], hstep: f64, b: &[f64]) -> Result<Vec<f64>> {
    let grid = w.grid();
    let n = grid.len();
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let wv = w.values();
    let diag: Vec<f64> = (0..n)
        .map(|i| chi[i] + hstep * inv_h2 * (0..2 * grid.dim()).map(|d| 0.5 * (wv[i] + wv[grid.neighbour(i, d)])).sum::<f64>())
        .collect();
    let apply = |x: &[f64]| -> Vec<f64> {
        let l = metric::weighted_laplacian(w, x).expect("grid checked");
        x.iter().zip(chi).zip(&l).map(|((x, c), l)| c * x - hstep * l).collect()
    };
    let b_norm = euclid(b);
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(a, d)| a / d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let max_iter = 20 * n + 200;
    for _ in 0..max_iter {
        let ap = apply(&p);
        let alpha = rz / p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if euclid(&r) <= 1e-14 * b_norm {
            return Ok(x);
        }
        z = r.iter().zip(&diag).map(|(a, d)| a / d).collect();
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let r = euclid(&r) / b_norm;
    if r < 1e-10 {
        return Ok(x);
    }
    Err(Error::Solver { solver: "jko-cg", iterations: max_iter, residual: r })
}

/// One proximal step minimizing [`jko_objective`] at fixed mass.
///
/// The Euler–Lagrange equation `ρ − ρ_prev = h Δ_{Φ(ρ_prev)} S′(ρ)` is solved
/// by damped Newton in the chemical potential `μ = S′(ρ)`, so iterates stay
/// strictly positive; `ρ_prev` is floored at `ρ_floor` for the initial guess.
pub fn jko_step(ens: &Ensemble, rho_prev: &DensityField, hstep: f64) -> Result<DensityField> {
    if !(hstep > 0.0) || !hstep.is_finite() {
        return Err(Error::arg(format!("JKO step must be finite and > 0, got {hstep}")));
    }
    let grid = rho_prev.grid();
    let w = WeightField::mobility(ens, rho_prev)?;
    let prev = rho_prev.values();
    let prev_sum: f64 = prev.iter().sum();
    let mut rho: Vec<f64> = prev.iter().map(|&r| r.max(pde::RHO_FLOOR)).collect();
    let mut mu: Vec<f64> = rho.iter().map(|&r| ens.entropy_derivative(r)).collect::<Result<_>>()?;
    let mut f = jko_residual(&w, prev, &rho, &mu, hstep)?;
    let mut f_norm = euclid(&f);
    let mut iterations = 0;
    while f_norm / hstep > JKO_TOL && iterations < JKO_MAX_NEWTON {
        iterations += 1;
        let chi: Vec<f64> = rho.iter().map(|&r| ens.compressibility(r)).collect::<Result<_>>()?;
        let b: Vec<f64> = f.iter().map(|v| -v).collect();
        let delta = solve_newton_system(&w, &chi, hstep, &b)?;
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial_mu: Vec<f64> = mu.iter().zip(&delta).map(|(m, d)| m + alpha * d).collect();
            if let Some(trial) = densities(ens, &trial_mu) {
                let ft = jko_residual(&w, prev, &trial, &trial_mu, hstep)?;
                let nt = euclid(&ft);
                if nt <= (1.0 - 1e-4 * alpha) * f_norm || nt / hstep <= JKO_TOL {
                    (rho, mu, f, f_norm) = (trial, trial_mu, ft, nt);
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if f_norm / hstep > JKO_TOL {
        return Err(Error::Solver { solver: "jko-newton (reduce the step)", iterations, residual: f_norm / hstep });
    }
    // remove the last rounding-level mass defect
    let scale = prev_sum / rho.iter().sum::<f64>();
    for r in &mut rho {
        *r *= scale;
    }
    DensityField::new(grid, rho)
}

#[derive(Debug, Clone)]
pub struct JkoFlow {
    pub path: PathRecord<DensityField>,
    pub entropy: Vec<f64>,
}

/// Iterates [`jko_step`] `nsteps` times.
pub fn jko_flow(ens: &Ensemble, rho0: &DensityField, hstep: f64, nsteps: usize) -> Result<JkoFlow> {
    let mut path = PathRecord::new();
    let mut entropy = vec![pde::entropy_functional(ens, rho0)?];
    path.push(0.0, rho0.clone());
    let mut rho = rho0.clone();
    for k in 1..=nsteps {
        rho = jko_step(ens, &rho, hstep)?;
        entropy.push(pde::entropy_functional(ens, &rho)?);
        path.push(k as f64 * hstep, rho.clone());
    }
    Ok(JkoFlow { path, entropy })
}
