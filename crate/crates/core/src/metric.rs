//! Weighted elliptic operators on the periodic grid: `div(w∇·)`, its
//! zero-mean inverse, the `H¹_w` and `H⁻¹_w` inner products, the
//! thermodynamic metric `g_ρ` and the Onsager operator.
//!
//! Face weights are arithmetic means of the two adjacent cells, the same
//! stencil as [`crate::pde`].

use crate::error::{Error, Result};
use crate::field::{DensityField, Grid};
use crate::pde;
use crate::thermo::Ensemble;

pub const WEIGHT_FLOOR: f64 = 1e-12;

/// Relative residual targeted by [`poisson_solve`].
pub const POISSON_TOL: f64 = 1e-12;

/// Positive cell weights, floored.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightField {
    grid: Grid,
    values: Vec<f64>,
    floor: f64,
}

impl WeightField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        Self::with_floor(grid, values, WEIGHT_FLOOR)
    }

    pub fn with_floor(grid: Grid, mut values: Vec<f64>, floor: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::arg(format!("weight has {} cells, grid has {}", values.len(), grid.len())));
        }
        if !(floor > 0.0) {
            return Err(Error::arg(format!("weight floor must be > 0, got {floor}")));
        }
        for v in &mut values {
            if !(v.is_finite() && *v >= 0.0) {
                return Err(Error::arg(format!("weights must be finite and ≥ 0, got {v}")));
            }
            *v = v.max(floor);
        }
        Ok(WeightField { grid, values, floor })
    }

    pub fn uniform(grid: Grid, w: f64) -> Result<Self> {
        Self::new(grid, vec![w; grid.len()])
    }

    /// `w = Φ(ρ)`.
    pub fn mobility(ens: &Ensemble, rho: &DensityField) -> Result<Self> {
        Self::new(rho.grid(), pde::phi_values(ens, rho)?)
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    #[inline]
    fn face(&self, i: usize, j: usize) -> f64 {
        0.5 * (self.values[i] + self.values[j])
    }
}

/// Grid function with zero mean.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    grid: Grid,
    values: Vec<f64>,
}

impl Potential {
    /// Projects `values` onto zero mean.
    pub fn new(grid: Grid, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::arg(format!("potential has {} cells, grid has {}", values.len(), grid.len())));
        }
        grid.project_zero_mean(&mut values);
        Ok(Potential { grid, values })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

fn check_len(grid: Grid, u: &[f64]) -> Result<()> {
    if u.len() != grid.len() {
        return Err(Error::arg(format!("grid function has {} cells, grid has {}", u.len(), grid.len())));
    }
    Ok(())
}

/// `(1/h²) Σ_faces w_face (ξ_j − ξ_i)`.
pub fn weighted_laplacian(w: &WeightField, xi: &[f64]) -> Result<Vec<f64>> {
    let grid = w.grid;
    check_len(grid, xi)?;
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let mut out = vec![0.0; grid.len()];
    for i in 0..grid.len() {
        for axis in 0..grid.dim() {
            let j = grid.forward(i, axis);
            let flux = w.face(i, j) * (xi[j] - xi[i]) * inv_h2;
            out[i] += flux;
            out[j] -= flux;
        }
    }
    Ok(out)
}

/// `Δ_w⁻¹ u` in the zero-mean gauge, residual `≤ 1e−12` relative.
pub fn poisson_solve(w: &WeightField, u: &[f64]) -> Result<Potential> {
    poisson_solve_with(w, u, POISSON_TOL)
}

/// Jacobi-preconditioned conjugate gradients on `−div(w∇ξ) = −u`.
pub fn poisson_solve_with(w: &WeightField, u: &[f64], tol: f64) -> Result<Potential> {
    let grid = w.grid;
    check_len(grid, u)?;
    let abs_mass: f64 = u.iter().map(|x| x.abs()).sum();
    let mass: f64 = u.iter().sum();
    if mass.abs() > 1e-10 * abs_mass.max(f64::MIN_POSITIVE) {
        return Err(Error::arg(format!("Poisson data must have zero mean, got mean {}", mass / u.len() as f64)));
    }
    let mut b: Vec<f64> = u.iter().map(|x| -x).collect();
    grid.project_zero_mean(&mut b);
    let n = grid.len();
    let b_norm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if b_norm == 0.0 {
        return Potential::new(grid, vec![0.0; n]);
    }
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let diag: Vec<f64> = (0..n)
        .map(|i| (0..2 * grid.dim()).map(|dir| w.face(i, grid.neighbour(i, dir))).sum::<f64>() * inv_h2)
        .collect();
    let apply = |x: &[f64]| -> Vec<f64> {
        let mut y = weighted_laplacian(w, x).expect("grid checked");
        for v in &mut y {
            *v = -*v;
        }
        y
    };
    let mut x = vec![0.0; n];
    let mut r = b.clone();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(a, d)| a / d).collect();
    grid.project_zero_mean(&mut z);
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let max_iter = 20 * n + 200;
    let mut res = b_norm;
    for _ in 0..max_iter {
        let ap = apply(&p);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if res <= tol * b_norm {
            // confirm against the true residual
            let true_r = apply(&x);
            let true_res = true_r.iter().zip(&b).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt();
            if true_res <= 10.0 * tol * b_norm {
                return Potential::new(grid, x);
            }
            r = b.iter().zip(&true_r).map(|(a, c)| a - c).collect();
        }
        z = r.iter().zip(&diag).map(|(a, d)| a / d).collect();
        grid.project_zero_mean(&mut z);
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Solver { solver: "pcg", iterations: max_iter, residual: res / b_norm })
}

/// `h^d Σ_faces w_face (δu/h)(δv/h)`.
pub fn h1w_inner(w: &WeightField, u: &[f64], v: &[f64]) -> Result<f64> {
    let grid = w.grid;
    check_len(grid, u)?;
    check_len(grid, v)?;
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let mut acc = 0.0;
    for i in 0..grid.len() {
        for axis in 0..grid.dim() {
            let j = grid.forward(i, axis);
            acc += w.face(i, j) * (u[j] - u[i]) * (v[j] - v[i]);
        }
    }
    Ok(acc * inv_h2 * grid.cell_volume())
}

/// `−h^d Σ u · Δ_w⁻¹ v`.
pub fn hneg1w_inner(w: &WeightField, u: &[f64], v: &[f64]) -> Result<f64> {
    check_len(w.grid, u)?;
    let xi = poisson_solve(w, v)?;
    Ok(-w.grid.dot(u, xi.values()))
}

/// `g_ρ(ζ₁, ζ₂) = ⟨ξ₁, ξ₂⟩_{H¹_{Φ(ρ)}}` with `ξ_i = Δ_{Φ(ρ)}⁻¹ ζ_i`.
pub fn metric_tensor(ens: &Ensemble, rho: &DensityField, zeta1: &[f64], zeta2: &[f64]) -> Result<f64> {
    let w = WeightField::mobility(ens, rho)?;
    let xi1 = poisson_solve(&w, zeta1)?;
    let xi2 = poisson_solve(&w, zeta2)?;
    h1w_inner(&w, xi1.values(), xi2.values())
}

/// `g_ρ(ζ₁, ζ₂)` evaluated as `⟨ζ₁, ζ₂⟩_{H⁻¹_{Φ(ρ)}}`.
pub fn metric_tensor_dual(ens: &Ensemble, rho: &DensityField, zeta1: &[f64], zeta2: &[f64]) -> Result<f64> {
    hneg1w_inner(&WeightField::mobility(ens, rho)?, zeta1, zeta2)
}

/// Onsager operator `K(ρ)ξ = −div(Φ(ρ)∇ξ)`.
pub fn onsager_apply(ens: &Ensemble, rho: &DensityField, xi: &[f64]) -> Result<Vec<f64>> {
    let w = WeightField::mobility(ens, rho)?;
    let mut out = weighted_laplacian(&w, xi)?;
    for v in &mut out {
        *v = -*v;
    }
    Ok(out)
}
