//! Numerical laboratory for the zero range process and its hydrodynamic limit
//! `∂t ρ = ΔΦ(ρ)`.
//!
//! The crate is layered bottom-up:
//!
//! * [`jump_rates`]: local jump rates `g(k)` and their factorial products.
//! * [`thermo`]: grand canonical thermodynamics: `Z`, `R`, `Φ = R⁻¹`, entropy,
//!   compressibility, together with the `₂F₁` and `Li_s` evaluators.
//! * [`zrp_sim`]: exact kinetic Monte Carlo on the discrete torus.
//! * [`pde`]: conservative finite-volume solver for the hydrodynamic equation.
//! * [`metric`]: weighted elliptic operators and the thermodynamic metric.
//! * [`ldt`]: rate functionals and the frozen-weight JKO scheme.
//! * [`fluct`]: fluctuation fields and martingale diagnostics.

pub mod error;
pub mod field;
pub mod fluct;
pub mod jump_rates;
pub mod ldt;
pub mod metric;
pub mod path;
pub mod pde;
pub mod stats;
pub mod thermo;
pub mod zrp_sim;

pub use error::{Error, Result};
pub use field::{DensityField, Grid};
pub use jump_rates::{JumpRateSpec, RateModel, TailRule};
pub use path::PathRecord;
pub use thermo::Ensemble;
