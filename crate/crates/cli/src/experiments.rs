//! One function per experiment kind, each writing its artifacts into a run
//! directory.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use zrp_core::fluct::{self, Polynomial, TestFunction};
use zrp_core::ldt::{self, FieldPath};
use zrp_core::zrp_sim::{self, replica_rng, Record};
use zrp_core::{pde, DensityField, Ensemble, Grid, JumpRateSpec, Result};

use crate::artifacts::{num, RunDir};
use crate::config::{ExperimentConfig, Kind, DEFAULT_AMPLITUDE, DEFAULT_NS, DEFAULT_POINTS};

/// z-score beyond which a built-in statistical self-check fails.
pub const STAT_Z_MAX: f64 = 4.0;

/// `ρ*(1 + a sin 2πu₁)`.
pub fn initial_profile(grid: Grid, rho_star: f64, amplitude: f64) -> Result<DensityField> {
    DensityField::from_fn(grid, |u| rho_star * (1.0 + amplitude * (2.0 * PI * u[0]).sin()))
}

/// What a finished experiment reports back to the manifest.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Outcome {
    /// `false` when a statistical self-check of the kind failed.
    pub checks_passed: bool,
    pub notes: Vec<String>,
}

impl Outcome {
    fn ok() -> Self {
        Outcome { checks_passed: true, notes: Vec::new() }
    }
}

#[derive(Debug)]
pub enum ExperimentError {
    Module { context: String, source: zrp_core::Error },
    Io(std::io::Error),
}

impl From<std::io::Error> for ExperimentError {
    fn from(e: std::io::Error) -> Self {
        ExperimentError::Io(e)
    }
}

impl std::fmt::Display for ExperimentError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExperimentError::Module { context, source } => write!(f, "{context}: {source}"),
            ExperimentError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

trait Context<T> {
    fn context(self, what: &str) -> std::result::Result<T, ExperimentError>;
}

impl<T> Context<T> for Result<T> {
    fn context(self, what: &str) -> std::result::Result<T, ExperimentError> {
        self.map_err(|source| ExperimentError::Module { context: what.to_string(), source })
    }
}

type Run<T> = std::result::Result<T, ExperimentError>;

/// Dispatches on the kind. The config must have passed validation.
pub fn dispatch(cfg: &ExperimentConfig, dir: &mut RunDir) -> Run<Outcome> {
    let kind = cfg.kind.expect("validated config has a kind");
    if kind == Kind::Figures {
        return figures(cfg, dir);
    }
    let spec = cfg.model.as_ref().expect("validated config has a model").to_spec().expect("validated model");
    let ens = Ensemble::new(spec).context("building the ensemble")?;
    match kind {
        Kind::ThermoTable => thermo_table(&ens, cfg, dir),
        Kind::Simulate => simulate(&ens, cfg, dir),
        Kind::HydroCompare => hydro_compare(&ens, cfg, dir),
        Kind::Jko => jko(&ens, cfg, dir),
        Kind::Ldrate => ldrate(&ens, cfg, dir),
        Kind::Fluct => fluct_run(&ens, cfg, dir),
        Kind::Tagged => tagged(&ens, cfg, dir),
        Kind::Figures => unreachable!(),
    }
}

fn dim(cfg: &ExperimentConfig) -> usize {
    cfg.params.d.unwrap_or(1)
}

fn thermo_table(ens: &Ensemble, cfg: &ExperimentConfig, dir: &mut RunDir) -> Run<Outcome> {
    let points = cfg.params.points.unwrap_or(DEFAULT_POINTS);
    let rho_max = cfg.params.rho_max.unwrap_or_else(|| (0.9 * ens.saturation_density()).min(10.0));
    let mut rows = Vec::with_capacity(points);
    for i in 1..=points {
        let rho = rho_max * i as f64 / points as f64;
        let v = ens.thermo_value(rho).context(&format!("thermodynamics at ρ = {rho}"))?;
        rows.push(vec![num(rho), num(v.phi), num(v.entropy), num(v.entropy_derivative), num(v.sigma), num(v.chi)]);
    }
    dir.write_csv("thermo.csv", &["rho", "Phi", "S", "dS", "sigma", "chi"], &rows)?;

    let phi_max = ens.mean_jump_rate(rho_max).context("fugacity at rho_max")?;
    let mut rows = Vec::with_capacity(points + 1);
    for i in 0..=points {
        let phi = phi_max * i as f64 / points as f64;
        let (z, _) = ens.partition_function(phi).context(&format!("partition function at φ = {phi}"))?;
        let r = ens.density(phi).context(&format!("density at φ = {phi}"))?;
        rows.push(vec![num(phi), num(z), num(r)]);
    }
    dir.write_csv("fugacity.csv", &["phi", "Z", "R"], &rows)?;
    Ok(Outcome::ok())
}

/// Evans and Landim densities on `φ ∈ [0, 0.99]`, three shape parameters each.
fn figures(cfg: &ExperimentConfig, dir: &mut RunDir) -> Run<Outcome> {
    let points = cfg.params.points.unwrap_or(100).max(2);
    let families: [(&str, fn(f64) -> JumpRateSpec, [f64; 3]); 2] =
        [("evans", JumpRateSpec::evans, [1.0, 2.5, 3.5]), ("landim", JumpRateSpec::landim, [0.5, 3.0, 5.0])];
    for (name, make, bs) in families {
        for b in bs {
            let ens = Ensemble::new(make(b)).context(&format!("{name} model with b = {b}"))?;
            let mut rows = Vec::with_capacity(points);
            for i in 0..points {
                let phi = 0.99 * i as f64 / (points - 1) as f64;
                let r = ens.density(phi).context(&format!("{name} b = {b} density at φ = {phi}"))?;
                rows.push(vec![num(phi), num(r)]);
            }
            dir.write_csv(&format!("{name}_b{b}.csv"), &["phi", "R"], &rows)?;
        }
    }
    Ok(Outcome::ok())
}

fn simulate(ens: &Ensemble, cfg: &ExperimentConfig, dir: &mut RunDir) -> Run<Outcome> {
    let p = &cfg.params;
    let (seed, n, d, t, rho) = (cfg.seed.unwrap(), p.n.unwrap(), dim(cfg), p.t.unwrap(), p.rho_star.unwrap());
    let grid = Grid::new(n, d).context("lattice")?;
    let mut rng = replica_rng(seed, 0);
    let config = zrp_sim::sample_equilibrium_with(ens, rho, grid, &mut rng).context("sampling the initial configuration")?;
    let particles = config.total();
    let record = p.snapshot_dt.map_or(Record::None, Record::Snapshots);
    let out = zrp_sim::run_with(ens, config, t, &mut rng, record).context("running the particle system")?;
    if let Some(snaps) = &out.snapshots {
        let mut rows = Vec::new();
        for (time, c) in snaps.iter() {
            for (site, &eta) in c.eta().iter().enumerate() {
                rows.push(vec![num(time), site.to_string(), eta.to_string()]);
            }
        }
        dir.write_csv("snapshots.csv", &["t", "site", "eta"], &rows)?;
    }
    let predicted = ens.mean_jump_rate(rho).context("mean jump rate")?;
    dir.write_json(
        "summary.json",
        &json!({
            "seed": seed,
            "N": n,
            "d": d,
            "T": t,
            "rho_star": rho,
            "particles": particles,
            "events": out.event_count,
            "final_time": out.final_time,
            "mean_jump_rate_timeavg": out.mean_jump_rate_timeavg,
            "Phi_rho_star": predicted,
        }),
    )?;
    Ok(Outcome::ok())
}

fn pde_dt(ens: &Ensemble, field: &DensityField, requested: Option<f64>, fraction: f64) -> Run<f64> {
    match requested {
        Some(dt) => Ok(dt),
        None => Ok(fraction * pde::cfl_bound(ens, field).context("stability bound")?),
    }
}

fn hydro_compare(ens: &Ensemble, cfg: &ExperimentConfig, dir: &mut RunDir) -> Run<Outcome> {
    let p = &cfg.params;
    let (seed, m, d, t, replicas, rho) = (cfg.seed.unwrap(), p.m.unwrap(), dim(cfg), p.t.unwrap(), p.replicas.unwrap(), p.rho_star.unwrap());
    let amplitude = p.amplitude.unwrap_or(DEFAULT_AMPLITUDE);
    let ns = p.ns.clone().unwrap_or_else(|| DEFAULT_NS.to_vec());
    let field0 = initial_profile(Grid::new(m, d).context("grid")?, rho, amplitude).context("initial profile")?;
    let dt = pde_dt(ens, &field0, p.dt, 0.5)?;
    let reference = pde::solve(ens, &field0, t, dt, t).context("pde reference")?.last().cloned().expect("nonempty path");
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for &n in &ns {
        let rho0 = initial_profile(Grid::new(n, d).context("lattice")?, rho, amplitude).context("lattice profile")?;
        let stream = seed.wrapping_add(n as u64);
        let fields = (0..replicas as u64)
            .into_par_iter()
            .map(|r| -> Result<Vec<f64>> {
                let mut rng = replica_rng(stream, r);
                let c = zrp_sim::sample_profile_with(ens, &rho0, n, &mut rng)?;
                let out = zrp_sim::run_with(ens, c, t, &mut rng, Record::None)?;
                Ok(zrp_sim::empirical_density(&out.config, m)?.into_values())
            })
            .collect::<Result<Vec<_>>>()
            .context(&format!("particle replicas at N = {n}"))?;
        let mean: Vec<f64> = (0..reference.grid().len()).map(|i| fields.iter().map(|f| f[i]).sum::<f64>() / fields.len() as f64).collect();
        let err = DensityField::new(reference.grid(), mean).and_then(|f| f.l1_distance(&reference)).context("L¹ error")?;
        errors.push(err);
        rows.push(vec![n.to_string(), num(err)]);
    }
    dir.write_csv("hydro_compare.csv", &["N", "l1_error"], &rows)?;
    let mut outcome = Outcome::ok();
    if !errors.windows(2).all(|w| w[1] < w[0]) {
        outcome.notes.push("L¹ error is not strictly decreasing in N".into());
    }
    Ok(outcome)
}

fn jko(ens: &Ensemble, cfg: &ExperimentConfig, dir: &mut RunDir) -> Run<Outcome> {
    let p = &cfg.params;
    let (m, d, t, h, rho) = (p.m.unwrap(), dim(cfg), p.t.unwrap(), p.hstep.unwrap(), p.rho_star.unwrap());
    let field0 = initial_profile(Grid::new(m, d).context("grid")?, rho, p.amplitude.unwrap_or(DEFAULT_AMPLITUDE)).context("initial profile")?;
    let nsteps = ((t / h).round() as usize).max(1);
    let flow = ldt::jko_flow(ens, &field0, h, nsteps).context("JKO flow")?;
    let dt = pde_dt(ens, &field0, p.dt, 0.25)?;
    let reference = pde::solve(ens, &field0, nsteps as f64 * h, dt, h).context("pde reference")?;
    let mut rows = Vec::with_capacity(nsteps + 1);
    for (k, ((time, f), s)) in flow.path.iter().zip(&flow.entropy).enumerate() {
        let idx = reference.index_of(time, 1e-9).context("aligning the pde reference")?;
        let l1 = f.l1_distance(&reference.states[idx]).context("L¹ distance")?;
        rows.push(vec![k.to_string(), num(time), num(*s), num(l1)]);
    }
    dir.write_csv("jko.csv", &["k", "t", "entropy", "l1_vs_pde"], &rows)?;
    let mut outcome = Outcome::ok();
    if !flow.entropy.windows(2).all(|w| w[1] <= w[0]) {
        outcome.notes.push("entropy increased on some JKO step".into());
    }
    Ok(outcome)
}

fn ldrate(ens: &Ensemble, cfg: &ExperimentConfig, dir: &mut RunDir) -> Run<Outcome> {
    let p = &cfg.params;
    let (m, d, t, dt, rho) = (p.m.unwrap(), dim(cfg), p.t.unwrap(), p.dt.unwrap(), p.rho_star.unwrap());
    let field0 = initial_profile(Grid::new(m, d).context("grid")?, rho, p.amplitude.unwrap_or(DEFAULT_AMPLITUDE)).context("initial profile")?;
    let record = pde::solve(ens, &field0, t, dt, dt).context("pde trajectory")?;
    let path = FieldPath::from_record(&record).context("field path")?;
    let mut rows = Vec::new();
    for (k, pair) in path.fields().windows(2).enumerate() {
        let iv = FieldPath::new(path.dt(), pair.to_vec()).and_then(|iv| ldt::rate_decomposition(ens, &iv)).context(&format!("interval {k}"))?;
        rows.push(vec![
            k.to_string(),
            num(record.times[k]),
            num(iv.action),
            num(iv.dissipation),
            num(iv.entropy_delta),
            num(iv.cross_direct),
            num(iv.path_rate),
            num(iv.residual()),
        ]);
    }
    dir.write_csv("ldrate.csv", &["k", "t", "action", "dissipation", "entropy_delta", "cross_direct", "path_rate", "residual"], &rows)?;
    let total = ldt::rate_decomposition(ens, &path).context("rate decomposition")?;
    let reversed = ldt::path_rate(ens, &path.reversed()).context("reversed path rate")?;
    dir.write_json(
        "summary.json",
        &json!({
            "M": m,
            "d": d,
            "T": t,
            "dt": path.dt(),
            "intervals": path.fields().len() - 1,
            "decomposition": total,
            "residual": total.residual(),
            "reversed_path_rate": reversed,
        }),
    )?;
    Ok(Outcome::ok())
}

fn fluct_run(ens: &Ensemble, cfg: &ExperimentConfig, dir: &mut RunDir) -> Run<Outcome> {
    let p = &cfg.params;
    let (seed, n, d, t, replicas, rho) = (cfg.seed.unwrap(), p.n.unwrap(), dim(cfg), p.t.unwrap(), p.replicas.unwrap(), p.rho_star.unwrap());
    let g = TestFunction::cosine([1, 0], 2f64.sqrt());
    let variance = fluct::equilibrium_variance_check(ens, rho, &g, n, d, replicas, seed, Some(t)).context("variance check")?;
    let snapshot_dt = p.snapshot_dt.unwrap_or(t / 50.0);
    let lattice = Grid::new(n, d).context("lattice")?;
    let reference = fluct::equilibrium_reference(rho, lattice, t, snapshot_dt).context("reference path")?;
    let polys = [Polynomial::new(vec![0.0, 1.0]).unwrap(), Polynomial::new(vec![0.0, 0.0, 1.0]).unwrap()];
    let increments = fluct::martingale_increments(ens, &reference, &g, &polys, n, replicas, (0.0, t), seed.wrapping_add(1))
        .context("martingale increments")?;
    let reports: Vec<_> = increments.into_iter().map(fluct::report).collect();
    let mut outcome = Outcome { checks_passed: variance.pass, notes: Vec::new() };
    let mut martingale = Vec::new();
    for (label, r) in ["y", "y^2"].iter().zip(&reports) {
        if !(r.z.abs() < STAT_Z_MAX) {
            outcome.checks_passed = false;
            outcome.notes.push(format!("martingale residual for F = {label} has z = {}", r.z));
        }
        martingale.push(json!({"F": label, "mean_increment": r.mean_increment, "stderr": r.stderr, "z": r.z}));
    }
    if !variance.pass {
        outcome.notes.push("equilibrium variance check failed".into());
    }
    dir.write_json(
        "fluct.json",
        &json!({
            "ensemble": ens.spec(),
            "N": n,
            "d": d,
            "rho_star": rho,
            "replicas": replicas,
            "window": [0.0, t],
            "seeds": {"variance": seed, "martingale": seed.wrapping_add(1)},
            "variance": variance,
            "martingale": martingale,
        }),
    )?;
    Ok(outcome)
}

fn tagged(ens: &Ensemble, cfg: &ExperimentConfig, dir: &mut RunDir) -> Run<Outcome> {
    let p = &cfg.params;
    let (seed, n, d, t, replicas, rho) = (cfg.seed.unwrap(), p.n.unwrap(), dim(cfg), p.t.unwrap(), p.replicas.unwrap(), p.rho_star.unwrap());
    let est = zrp_sim::tagged_run(ens, rho, n, d, t, seed, replicas).context("tagged particle")?;
    let predicted = ens.self_diffusivity(rho).context("self-diffusivity")?;
    let z = (est.sigma_hat - predicted) / est.stderr;
    let mut outcome = Outcome::ok();
    if !(z.abs() < STAT_Z_MAX) {
        outcome.checks_passed = false;
        outcome.notes.push(format!("σ̂ is {z} standard errors from Φ(ρ)/ρ"));
    }
    dir.write_json(
        "tagged.json",
        &json!({
            "seed": seed,
            "N": n,
            "d": d,
            "T": t,
            "rho_star": rho,
            "replicas": est.replicas,
            "sigma_hat": est.sigma_hat,
            "stderr": est.stderr,
            "predicted": predicted,
            "z": z,
        }),
    )?;
    Ok(outcome)
}
