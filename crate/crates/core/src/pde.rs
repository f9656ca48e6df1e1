//! Explicit conservative finite-volume solver for `∂t ρ = ΔΦ(ρ)` on the
//! periodic unit torus, with the discrete entropy `𝒮(ρ) = ∫ S(ρ) dx` and its
//! dissipation.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{DensityField, Grid};
use crate::path::PathRecord;
use crate::thermo::Ensemble;

/// Densities are floored at this value inside `S′ = log Φ` only.
pub const RHO_FLOOR: f64 = 1e-12;

/// Cellwise `Φ(ρ_i)`.
pub fn phi_values(ens: &Ensemble, field: &DensityField) -> Result<Vec<f64>> {
    field.values().iter().map(|&r| ens.mean_jump_rate(r)).collect()
}

/// Cellwise `S′(max(ρ_i, ρ_floor))`.
pub fn entropy_derivative_values(ens: &Ensemble, field: &DensityField) -> Result<Vec<f64>> {
    field.values().iter().map(|&r| ens.entropy_derivative(r.max(RHO_FLOOR))).collect()
}

/// Periodic 2d-point Laplacian `(1/h²) Σ_j (u_j − u_i)`.
pub fn discrete_laplacian(grid: Grid, u: &[f64]) -> Vec<f64> {
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    (0..grid.len())
        .map(|i| {
            let mut acc = 0.0;
            for dir in 0..2 * grid.dim() {
                acc += u[grid.neighbour(i, dir)] - u[i];
            }
            acc * inv_h2
        })
        .collect()
}

/// Largest stable explicit step `h²/(2d · max_i Φ′(ρ_i))`.
pub fn cfl_bound(ens: &Ensemble, field: &DensityField) -> Result<f64> {
    let grid = field.grid();
    let mut max = 0.0f64;
    for &r in field.values() {
        max = max.max(ens.mean_jump_rate_derivative(r)?);
    }
    Ok(grid.h() * grid.h() / (2.0 * grid.dim() as f64 * max))
}

fn apply_step(grid: Grid, values: &[f64], phi: &[f64], dt: f64) -> Vec<f64> {
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    // fluxes are accumulated face by face so that the update telescopes
    let mut out = values.to_vec();
    for i in 0..grid.len() {
        for axis in 0..grid.dim() {
            let j = grid.forward(i, axis);
            let flux = dt * inv_h2 * (phi[j] - phi[i]);
            out[i] += flux;
            out[j] -= flux;
        }
    }
    for v in &mut out {
        // rounding can leave −1e−17 next to an empty cell
        if *v < 0.0 && *v > -1e-14 {
            *v = 0.0;
        }
    }
    out
}

/// One explicit Euler step `ρ_i + (dt/h²) Σ_j (Φ(ρ_j) − Φ(ρ_i))`.
pub fn step(ens: &Ensemble, field: &DensityField, dt: f64) -> Result<DensityField> {
    if !(dt > 0.0) {
        return Err(Error::arg(format!("time step must be > 0, got {dt}")));
    }
    let bound = cfl_bound(ens, field)?;
    if dt > bound * (1.0 + 1e-12) {
        return Err(Error::Cfl { dt, bound });
    }
    let phi = phi_values(ens, field)?;
    DensityField::new(field.grid(), apply_step(field.grid(), field.values(), &phi, dt))
}

/// Trajectory of [`solve_monitored`].
#[derive(Debug, Clone, Serialize)]
pub struct Solution {
    #[serde(skip)]
    pub path: PathRecord<DensityField>,
    /// `(t, 𝒮(ρ_t))` after every accepted step, starting at `t = 0`.
    pub entropy_series: Vec<(f64, f64)>,
    /// `max_t |mass(ρ_t) − mass(ρ₀)| / mass(ρ₀)`.
    pub mass_drift: f64,
    pub steps: usize,
    pub halvings: usize,
}

/// Integrates to time `horizon` with nominal step `dt`, recording
/// snapshots at multiples of `snapshot_dt` and at `horizon`.
pub fn solve(ens: &Ensemble, field0: &DensityField, horizon: f64, dt: f64, snapshot_dt: f64) -> Result<PathRecord<DensityField>> {
    Ok(integrate(ens, field0, horizon, dt, snapshot_dt, false)?.path)
}

/// [`solve`] together with the entropy series and mass drift.
pub fn solve_monitored(ens: &Ensemble, field0: &DensityField, horizon: f64, dt: f64, snapshot_dt: f64) -> Result<Solution> {
    integrate(ens, field0, horizon, dt, snapshot_dt, true)
}

fn integrate(ens: &Ensemble, field0: &DensityField, horizon: f64, dt: f64, snapshot_dt: f64, monitor: bool) -> Result<Solution> {
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::arg(format!("final time must be finite and ≥ 0, got {horizon}")));
    }
    if !(dt > 0.0) || !(snapshot_dt > 0.0) {
        return Err(Error::arg(format!("time steps must be > 0, got dt={dt}, snapshot_dt={snapshot_dt}")));
    }
    let grid = field0.grid();
    let mass0 = field0.mass();
    let mut path = PathRecord::new();
    path.push(0.0, field0.clone());
    let mut sol = Solution { path: PathRecord::new(), entropy_series: Vec::new(), mass_drift: 0.0, steps: 0, halvings: 0 };
    if monitor {
        sol.entropy_series.push((0.0, entropy_functional(ens, field0)?));
    }
    let mut values = field0.values().to_vec();
    let mut t = 0.0;
    let mut k = 1u64;
    let eps = 1e-12 * horizon.max(dt);
    while t < horizon - eps {
        let target = (k as f64 * snapshot_dt).min(horizon);
        while t < target - eps {
            let current = DensityField::new(grid, values)?;
            let phi = phi_values(ens, &current)?;
            let bound = cfl_bound(ens, &current)?;
            let mut h = dt.min(target - t);
            while h > bound * (1.0 + 1e-12) {
                h *= 0.5;
                sol.halvings += 1;
            }
            values = apply_step(grid, current.values(), &phi, h);
            t = if target - t - h <= eps { target } else { t + h };
            sol.steps += 1;
            let field = DensityField::new(grid, values.clone())?;
            if mass0 > 0.0 {
                sol.mass_drift = sol.mass_drift.max((field.mass() - mass0).abs() / mass0);
            }
            if monitor {
                sol.entropy_series.push((t, entropy_functional(ens, &field)?));
            }
        }
        path.push(target, DensityField::new(grid, values.clone())?);
        k += 1;
    }
    sol.path = path;
    Ok(sol)
}

/// `𝒮(ρ) = h^d Σ_i S(ρ_i)`; grid fields carry no singular part.
pub fn entropy_functional(ens: &Ensemble, field: &DensityField) -> Result<f64> {
    let mut acc = 0.0;
    for &r in field.values() {
        acc += ens.entropy(r)?;
    }
    Ok(acc * field.grid().cell_volume())
}

/// Entropy production `h^d Σ_faces Φ_face (δ_face S′(ρ)/h)²`, with
/// arithmetic-mean face weights.
pub fn dissipation(ens: &Ensemble, field: &DensityField) -> Result<f64> {
    let grid = field.grid();
    let phi = phi_values(ens, field)?;
    let ds = entropy_derivative_values(ens, field)?;
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let mut acc = 0.0;
    for i in 0..grid.len() {
        for axis in 0..grid.dim() {
            let j = grid.forward(i, axis);
            let w = 0.5 * (phi[i] + phi[j]);
            let d = ds[j] - ds[i];
            acc += w * d * d * inv_h2;
        }
    }
    Ok(acc * grid.cell_volume())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jump_rates::JumpRateSpec;
    use std::f64::consts::PI;

    fn ens(spec: JumpRateSpec) -> Ensemble {
        Ensemble::new(spec).unwrap()
    }

    fn cosine(m: usize, amp: f64) -> DensityField {
        DensityField::from_fn(Grid::new(m, 1).unwrap(), |u| 1.0 + amp * (2.0 * PI * u[0]).cos()).unwrap()
    }

    #[test]
    fn constant_field_is_fixed() {
        let e = ens(JumpRateSpec::evans(1.0));
        let f = DensityField::constant(Grid::new(8, 2).unwrap(), 0.4).unwrap();
        let dt = 0.5 * cfl_bound(&e, &f).unwrap();
        let g = step(&e, &f, dt).unwrap();
        assert!(g.sup_distance(&f).unwrap() < 1e-15);
    }

    #[test]
    fn heat_mode_decay() {
        let e = ens(JumpRateSpec::linear());
        let m = 128;
        let f0 = cosine(m, 0.1);
        let t = 0.05;
        let path = solve(&e, &f0, t, 2e-5, t).unwrap();
        let last = path.last().unwrap();
        let grid = last.grid();
        let amp = 2.0 * grid.dot(&last.values().iter().map(|v| v - 1.0).collect::<Vec<_>>(), &grid.sample(|u| (2.0 * PI * u[0]).cos()));
        let exact = 0.1 * (-4.0 * PI * PI * t).exp();
        assert!((amp - exact).abs() / exact < 1e-2, "{amp} vs {exact}");
    }

    #[test]
    fn cfl_violation_reports_bound() {
        let e = ens(JumpRateSpec::linear());
        let f = cosine(16, 0.5);
        match step(&e, &f, 1.0) {
            Err(Error::Cfl { bound, .. }) => assert!((bound - 1.0 / (16.0 * 16.0 * 2.0)).abs() < 1e-15),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn step_conserves_mass() {
        let e = ens(JumpRateSpec::constant());
        let f = DensityField::from_fn(Grid::new(16, 2).unwrap(), |u| 1.0 + 0.5 * (2.0 * PI * u[0]).sin() * (2.0 * PI * u[1]).cos()).unwrap();
        let g = step(&e, &f, cfl_bound(&e, &f).unwrap()).unwrap();
        assert!((g.mass() - f.mass()).abs() / f.mass() < 1e-14);
    }

    #[test]
    fn zero_horizon_returns_initial() {
        let e = ens(JumpRateSpec::linear());
        let f = cosine(8, 0.2);
        let p = solve(&e, &f, 0.0, 1e-3, 1e-3).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.first().unwrap(), &f);
    }

    #[test]
    fn adaptive_halving_keeps_stability() {
        let e = ens(JumpRateSpec::linear());
        let f = cosine(32, 0.9);
        let sol = solve_monitored(&e, &f, 0.01, 1e-2, 5e-3).unwrap();
        assert!(sol.halvings > 0);
        assert_eq!(sol.path.len(), 3);
        let last = sol.path.last().unwrap();
        assert!(last.min() >= f.min() - 1e-14 && last.max() <= f.max() + 1e-14);
    }

    #[test]
    fn entropy_functional_known_values() {
        let g = Grid::new(4, 1).unwrap();
        let lin = ens(JumpRateSpec::linear());
        assert_eq!(entropy_functional(&lin, &DensityField::constant(g, 0.0).unwrap()).unwrap(), 0.0);
        assert!((entropy_functional(&lin, &DensityField::constant(g, 1.0).unwrap()).unwrap() + 1.0).abs() < 1e-14);
        for e in [lin, ens(JumpRateSpec::constant()), ens(JumpRateSpec::landim(3.0))] {
            let f = DensityField::from_fn(Grid::new(16, 1).unwrap(), |u| 0.3 + 0.2 * (2.0 * PI * u[0]).sin()).unwrap();
            let flat = DensityField::constant(f.grid(), f.mass()).unwrap();
            assert!(entropy_functional(&e, &f).unwrap() >= entropy_functional(&e, &flat).unwrap());
        }
    }

    #[test]
    fn dissipation_known_values() {
        let e = ens(JumpRateSpec::constant());
        let flat = DensityField::constant(Grid::new(8, 2).unwrap(), 2.0).unwrap();
        assert_eq!(dissipation(&e, &flat).unwrap(), 0.0);
        let half = DensityField::from_fn(Grid::new(16, 1).unwrap(), |u| if u[0] < 0.5 { 0.0 } else { 1.0 }).unwrap();
        let d = dissipation(&e, &half).unwrap();
        assert!(d.is_finite() && d > 0.0);
    }

    #[test]
    fn chain_rule_for_dissipation() {
        let e = ens(JumpRateSpec::constant());
        let m = 64;
        let f = DensityField::from_fn(Grid::new(m, 1).unwrap(), |u| 1.0 + 0.5 * (2.0 * PI * u[0]).sin()).unwrap();
        let dt = 1e-3 * cfl_bound(&e, &f).unwrap();
        let g = step(&e, &f, dt).unwrap();
        let rate = -(entropy_functional(&e, &g).unwrap() - entropy_functional(&e, &f).unwrap()) / dt;
        let d = dissipation(&e, &f).unwrap();
        assert!((rate - d).abs() / d < 5e-3, "{rate} vs {d}");
    }
}
