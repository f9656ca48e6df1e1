use std::f64::consts::PI;

use proptest::prelude::*;
use zrp_core::field::{DensityField, Grid};
use zrp_core::metric::{self, WeightField};
use zrp_core::pde;
use zrp_core::{Ensemble, JumpRateSpec};

fn smooth(m: usize) -> DensityField {
    DensityField::from_fn(Grid::new(m, 1).unwrap(), |u| 1.0 + 0.5 * (2.0 * PI * u[0]).sin() + 0.2 * (4.0 * PI * u[0]).cos()).unwrap()
}

/// Restricts a fine field to a coarse grid by averaging `r` cells.
fn restrict(f: &DensityField, m: usize) -> Vec<f64> {
    let r = f.values().len() / m;
    (0..m).map(|i| f.values()[i * r..(i + 1) * r].iter().sum::<f64>() / r as f64).collect()
}

#[test]
fn spatial_self_convergence_is_second_order() {
    let e = Ensemble::new(JumpRateSpec::constant()).unwrap();
    let t = 0.02;
    // common dt well below every CFL bound so time error is shared
    let dt = 5e-6;
    let sols: Vec<DensityField> = [32, 64, 128]
        .iter()
        .map(|&m| {
            // cell averages of the smooth profile
            let fine = smooth(m * 16);
            let f0 = DensityField::new(Grid::new(m, 1).unwrap(), restrict(&fine, m)).unwrap();
            pde::solve(&e, &f0, t, dt, t).unwrap().last().unwrap().clone()
        })
        .collect();
    let d1: f64 = restrict(&sols[1], 32).iter().zip(sols[0].values()).map(|(a, b)| (a - b).abs()).sum::<f64>() / 32.0;
    let d2: f64 = restrict(&sols[2], 64).iter().zip(sols[1].values()).map(|(a, b)| (a - b).abs()).sum::<f64>() / 64.0;
    let order = (d1 / d2).log2();
    assert!((order - 2.0).abs() < 0.3, "order {order}: {d1} {d2}");
}

#[test]
fn long_time_limit_is_flat() {
    let e = Ensemble::new(JumpRateSpec::evans(1.0)).unwrap();
    let f0 = DensityField::from_fn(Grid::new(16, 1).unwrap(), |u| 0.5 + 0.4 * (2.0 * PI * u[0]).sin()).unwrap();
    let last = pde::solve(&e, &f0, 2.0, 1e-3, 2.0).unwrap().last().unwrap().clone();
    let flat = DensityField::constant(last.grid(), f0.mass()).unwrap();
    assert!(last.sup_distance(&flat).unwrap() < 1e-6);
}

fn ensembles() -> Vec<Ensemble> {
    [JumpRateSpec::linear(), JumpRateSpec::constant(), JumpRateSpec::evans(2.0), JumpRateSpec::landim(3.0)]
        .into_iter()
        .map(|s| Ensemble::new(s).unwrap())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn entropy_decreases_and_extrema_are_kept(model in 0usize..4, a in 0.05f64..0.25, b in -0.1f64..0.1, phase in 0.0f64..1.0, base in 0.3f64..0.5) {
        let e = &ensembles()[model];
        let f0 = DensityField::from_fn(Grid::new(16, 2).unwrap(), |u| {
            base + a * (2.0 * PI * (u[0] + phase)).sin() + b * (2.0 * PI * (u[1] - u[0])).cos()
        }).unwrap();
        let sol = pde::solve_monitored(e, &f0, 0.01, 1e-3, 0.005).unwrap();
        for w in sol.entropy_series.windows(2) {
            prop_assert!(w[1].1 <= w[0].1 + 1e-12);
        }
        prop_assert!(sol.mass_drift <= 1e-13);
        for (_, f) in sol.path.iter() {
            prop_assert!(f.min() >= f0.min() - 1e-14 && f.max() <= f0.max() + 1e-14);
        }
    }
}

fn log_identity_error(e: &Ensemble, m: usize) -> f64 {
    // scaled below the Landim saturation density
    let rho = DensityField::new(Grid::new(m, 1).unwrap(), smooth(m).values().iter().map(|v| 0.4 * v).collect()).unwrap();
    let phi = pde::phi_values(e, &rho).unwrap();
    let w = WeightField::new(rho.grid(), phi.clone()).unwrap();
    let lap = pde::discrete_laplacian(rho.grid(), &phi);
    let xi = metric::poisson_solve(&w, &lap).unwrap();
    let mut logphi: Vec<f64> = phi.iter().map(|p| p.ln()).collect();
    rho.grid().project_zero_mean(&mut logphi);
    xi.values().iter().zip(&logphi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

#[test]
fn log_identity_order() {
    for e in ensembles() {
        let errs: Vec<f64> = [32, 64, 128].iter().map(|&m| log_identity_error(&e, m)).collect();
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() >= 1.8, "{:?}: {errs:?}", e.spec());
        }
    }
}

#[test]
fn onsager_gradient_matches_pde_stencil() {
    let e = Ensemble::new(JumpRateSpec::constant()).unwrap();
    let errs: Vec<f64> = [32, 64, 128]
        .iter()
        .map(|&m| {
            let rho = smooth(m);
            let ds = pde::entropy_derivative_values(&e, &rho).unwrap();
            let k = metric::onsager_apply(&e, &rho, &ds).unwrap();
            let lap = pde::discrete_laplacian(rho.grid(), &pde::phi_values(&e, &rho).unwrap());
            k.iter().zip(&lap).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max)
        })
        .collect();
    for w in errs.windows(2) {
        assert!(w[0] / w[1] > 3.0, "{errs:?}");
    }
}

#[test]
fn entropy_pairing_representation() {
    // ⟨d𝒮(ρ), ζ⟩ = g_ρ(ζ, K(ρ)S′(ρ))
    let e = Ensemble::new(JumpRateSpec::landim(3.0)).unwrap();
    let grid = Grid::new(12, 2).unwrap();
    let rho = DensityField::from_fn(grid, |u| 0.4 + 0.2 * (2.0 * PI * u[0]).cos() * (2.0 * PI * u[1]).sin()).unwrap();
    let ds = pde::entropy_derivative_values(&e, &rho).unwrap();
    let k = metric::onsager_apply(&e, &rho, &ds).unwrap();
    for seed in 0..5 {
        let mut zeta = grid.sample(|u| ((seed as f64 + 1.0) * 7.3 * u[0]).sin() + (3.1 * u[1] * seed as f64).cos());
        grid.project_zero_mean(&mut zeta);
        let lhs = grid.dot(&zeta, &ds);
        let rhs = metric::metric_tensor(&e, &rho, &zeta, &k).unwrap();
        assert!((lhs - rhs).abs() < 1e-8, "{lhs} vs {rhs}");
    }
}

#[test]
fn metric_symmetric_psd_on_random_pairs() {
    let e = Ensemble::new(JumpRateSpec::evans(1.0)).unwrap();
    let grid = Grid::new(16, 1).unwrap();
    let rho = DensityField::from_fn(grid, |u| 0.5 + 0.3 * (2.0 * PI * u[0]).sin()).unwrap();
    for s in 0..10 {
        let mut a = grid.sample(|u| ((s as f64 + 2.0) * u[0] * 5.0).sin());
        let mut b = grid.sample(|u| ((s as f64 + 1.0) * u[0] * 3.0).cos());
        grid.project_zero_mean(&mut a);
        grid.project_zero_mean(&mut b);
        let ab = metric::metric_tensor(&e, &rho, &a, &b).unwrap();
        let ba = metric::metric_tensor(&e, &rho, &b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-10 * (1.0 + ab.abs()));
        assert!(metric::metric_tensor(&e, &rho, &a, &a).unwrap() >= 0.0);
    }
}
