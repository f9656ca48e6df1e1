//! Uniform periodic grids on the unit torus `𝕋^d` and density fields on them.

use serde::Serialize;

use crate::error::{Error, Result};

/// Uniform periodic grid with `side` cells per axis in dimension `dim ∈ {1, 2}`.
///
/// Cells are stored row-major; cell `i` along an axis is centred at `(i + ½)/side`.
/// The same geometry is used for the particle lattice `𝕋_N^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Grid {
    side: usize,
    dim: usize,
}

impl Grid {
    pub fn new(side: usize, dim: usize) -> Result<Self> {
        if side == 0 {
            return Err(Error::arg("grid side must be ≥ 1"));
        }
        if !(1..=2).contains(&dim) {
            return Err(Error::arg(format!("dimension must be 1 or 2, got {dim}")));
        }
        Ok(Grid { side, dim })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.side.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Mesh width `1/side`.
    pub fn h(&self) -> f64 {
        1.0 / self.side as f64
    }

    /// Cell volume `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }

    /// Index of the neighbour of `i` shifted by `+1` along `axis`.
    #[inline]
    pub fn forward(&self, i: usize, axis: usize) -> usize {
        let n = self.side;
        if axis == 0 {
            let x = i % n;
            if x + 1 == n {
                i + 1 - n
            } else {
                i + 1
            }
        } else {
            let total = n * n;
            if i + n >= total {
                i + n - total
            } else {
                i + n
            }
        }
    }

    /// Index of the neighbour of `i` shifted by `−1` along `axis`.
    #[inline]
    pub fn backward(&self, i: usize, axis: usize) -> usize {
        let n = self.side;
        if axis == 0 {
            if i % n == 0 {
                i + n - 1
            } else {
                i - 1
            }
        } else if i < n {
            i + n * n - n
        } else {
            i - n
        }
    }

    /// Neighbour `dir ∈ 0..2d`: even directions step forward, odd backward,
    /// along axis `dir / 2`.
    #[inline]
    pub fn neighbour(&self, i: usize, dir: usize) -> usize {
        if dir % 2 == 0 {
            self.forward(i, dir / 2)
        } else {
            self.backward(i, dir / 2)
        }
    }

    /// Integer coordinates of cell `i`.
    pub fn coords(&self, i: usize) -> [usize; 2] {
        if self.dim == 1 {
            [i, 0]
        } else {
            [i % self.side, i / self.side]
        }
    }

    /// Centre of cell `i` in `[0, 1)^d` (unused axes are 0).
    pub fn centre(&self, i: usize) -> [f64; 2] {
        let c = self.coords(i);
        let h = self.h();
        if self.dim == 1 {
            [(c[0] as f64 + 0.5) * h, 0.0]
        } else {
            [(c[0] as f64 + 0.5) * h, (c[1] as f64 + 0.5) * h]
        }
    }

    /// Index of the cell whose centre is nearest to the point `x ∈ [0, 1)^d`.
    pub fn locate(&self, x: [f64; 2]) -> usize {
        let n = self.side as f64;
        let axis = |u: f64| -> usize { ((u.rem_euclid(1.0) * n).floor() as usize).min(self.side - 1) };
        if self.dim == 1 {
            axis(x[0])
        } else {
            axis(x[0]) + self.side * axis(x[1])
        }
    }

    /// Discrete `L²` inner product `h^d Σ u_i v_i`.
    pub fn dot(&self, u: &[f64], v: &[f64]) -> f64 {
        self.cell_volume() * u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.dot(u, u).sqrt()
    }

    /// `h^d Σ u_i`.
    pub fn integral(&self, u: &[f64]) -> f64 {
        self.cell_volume() * u.iter().sum::<f64>()
    }

    /// Mean over the unit torus (equal to the integral).
    pub fn mean(&self, u: &[f64]) -> f64 {
        u.iter().sum::<f64>() / u.len() as f64
    }

    /// Subtracts the mean in place.
    pub fn project_zero_mean(&self, u: &mut [f64]) {
        let m = self.mean(u);
        for x in u.iter_mut() {
            *x -= m;
        }
    }

    /// Samples `f` at the cell centres.
    pub fn sample(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        (0..self.len()).map(|i| f(self.centre(i))).collect()
    }
}

/// Nonnegative cell-averaged density on a [`Grid`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityField {
    grid: Grid,
    values: Vec<f64>,
}

impl DensityField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::arg(format!(
                "field has {} values but the grid has {} cells",
                values.len(),
                grid.len()
            )));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::arg(format!("density must be finite and ≥ 0, cell {i} holds {v}")));
        }
        Ok(DensityField { grid, values })
    }

    pub fn constant(grid: Grid, value: f64) -> Result<Self> {
        Self::new(grid, vec![value; grid.len()])
    }

    /// Samples `f` at cell centres.
    pub fn from_fn(grid: Grid, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        Self::new(grid, grid.sample(f))
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

    /// `h^d Σ ρ_i`.
    pub fn mass(&self) -> f64 {
        self.grid.integral(&self.values)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `h^d Σ |ρ_i − σ_i|`.
    pub fn l1_distance(&self, other: &DensityField) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self.grid.cell_volume() * self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).sum::<f64>())
    }

    pub fn sup_distance(&self, other: &DensityField) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }

    pub(crate) fn check_same_grid(&self, other: &DensityField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::arg(format!("grids differ: {:?} vs {:?}", self.grid, other.grid)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neighbours_wrap() {
        let g = Grid::new(4, 2).unwrap();
        assert_eq!(g.forward(3, 0), 0);
        assert_eq!(g.backward(0, 0), 3);
        assert_eq!(g.forward(13, 1), 1);
        assert_eq!(g.backward(1, 1), 13);
        for i in 0..g.len() {
            for axis in 0..2 {
                assert_eq!(g.backward(g.forward(i, axis), axis), i);
            }
        }
        let g1 = Grid::new(5, 1).unwrap();
        assert_eq!(g1.neighbour(4, 0), 0);
        assert_eq!(g1.neighbour(0, 1), 4);
    }

    #[test]
    fn locate_inverts_centre() {
        for g in [Grid::new(7, 1).unwrap(), Grid::new(6, 2).unwrap()] {
            for i in 0..g.len() {
                assert_eq!(g.locate(g.centre(i)), i);
            }
        }
    }

    #[test]
    fn rejects_negative_density() {
        let g = Grid::new(3, 1).unwrap();
        assert!(DensityField::new(g, vec![1.0, -1e-3, 0.0]).is_err());
        assert!(DensityField::new(g, vec![1.0]).is_err());
        assert!(Grid::new(3, 3).is_err());
    }

    #[test]
    fn mass_of_constant() {
        let g = Grid::new(8, 2).unwrap();
        let f = DensityField::constant(g, 2.5).unwrap();
        assert!((f.mass() - 2.5).abs() < 1e-15);
    }
}
