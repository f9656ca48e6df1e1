//! Static checks on a configuration, run before any computation.

use std::fmt;

use serde::Serialize;
use zrp_core::{pde, Ensemble, Grid};

use crate::config::{ExperimentConfig, Kind, DEFAULT_AMPLITUDE, DEFAULT_NS};
use crate::experiments::initial_profile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub field: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}: {}", self.field, self.message)
    }
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(|d| d.severity == Severity::Error)
}

/// Fraction of `φ_c` above which a density counts as near saturation.
const SATURATION_WARN: f64 = 0.95;
const MIN_REPLICAS: usize = 100;

struct Collector(Vec<Diagnostic>);

impl Collector {
    fn error(&mut self, field: &str, message: impl Into<String>) {
        self.0.push(Diagnostic { severity: Severity::Error, field: field.into(), message: message.into() });
    }

    fn warn(&mut self, field: &str, message: impl Into<String>) {
        self.0.push(Diagnostic { severity: Severity::Warning, field: field.into(), message: message.into() });
    }

    fn require<T: Copy>(&mut self, kind: Kind, field: &str, value: Option<T>) -> Option<T> {
        if value.is_none() {
            self.error(field, format!("required for kind `{kind}`"));
        }
        value
    }

    fn positive(&mut self, field: &str, value: Option<f64>) {
        if let Some(v) = value {
            if !(v > 0.0 && v.is_finite()) {
                self.error(field, format!("must be positive and finite, got {v}"));
            }
        }
    }
}

/// Returns every problem found; never fails.
pub fn validate(cfg: &ExperimentConfig) -> Vec<Diagnostic> {
    let mut c = Collector(Vec::new());
    let Some(kind) = cfg.kind else {
        c.error("kind", "missing experiment kind");
        return c.0;
    };
    let p = &cfg.params;

    if kind.is_stochastic() && cfg.seed.is_none() {
        c.error("seed", format!("a seed is mandatory for the stochastic kind `{kind}`"));
    }

    let ensemble = if kind.needs_model() {
        match &cfg.model {
            None => {
                c.error("model", format!("required for kind `{kind}`"));
                None
            }
            Some(m) => match m.to_spec() {
                Ok(spec) => match Ensemble::new(spec) {
                    Ok(e) => Some(e),
                    Err(e) => {
                        c.error("model", e.to_string());
                        None
                    }
                },
                Err((field, msg)) => {
                    c.error(&field, msg);
                    None
                }
            },
        }
    } else {
        None
    };

    let d = p.d.unwrap_or(1);
    if !(1..=2).contains(&d) {
        c.error("params.d", format!("dimension must be 1 or 2, got {d}"));
    }
    for (field, v) in [("params.t", p.t), ("params.dt", p.dt), ("params.hstep", p.hstep), ("params.snapshot_dt", p.snapshot_dt), ("params.rho_max", p.rho_max)] {
        c.positive(field, v);
    }
    if let Some(r) = p.rho_star {
        if !(r >= 0.0 && r.is_finite()) {
            c.error("params.rho_star", format!("must be finite and ≥ 0, got {r}"));
        }
    }
    let amplitude = p.amplitude.unwrap_or(DEFAULT_AMPLITUDE);
    if !(0.0..1.0).contains(&amplitude) {
        c.error("params.amplitude", format!("must lie in [0, 1), got {amplitude}"));
    }
    if let Some(n) = p.n {
        if n < 2 {
            c.error("params.n", format!("lattice side must be ≥ 2, got {n}"));
        }
    }
    if let Some(m) = p.m {
        if m < 4 {
            c.error("params.m", format!("grid side must be ≥ 4, got {m}"));
        }
    }
    if let Some(0) = p.points {
        c.error("params.points", "must be ≥ 1");
    }

    match kind {
        Kind::ThermoTable | Kind::Figures => {}
        Kind::Simulate | Kind::Tagged => {
            c.require(kind, "params.n", p.n);
            c.require(kind, "params.t", p.t);
            c.require(kind, "params.rho_star", p.rho_star);
            if kind == Kind::Tagged {
                c.require(kind, "params.replicas", p.replicas);
                if p.rho_star == Some(0.0) {
                    c.error("params.rho_star", "the tagged particle needs a positive density");
                }
            }
        }
        Kind::HydroCompare => {
            let m = c.require(kind, "params.m", p.m);
            c.require(kind, "params.t", p.t);
            c.require(kind, "params.replicas", p.replicas);
            c.require(kind, "params.rho_star", p.rho_star);
            let ns = p.ns.clone().unwrap_or_else(|| DEFAULT_NS.to_vec());
            if ns.is_empty() {
                c.error("params.ns", "needs at least one lattice side");
            }
            if let Some(m) = m.filter(|&m| m > 0) {
                for n in ns.iter().filter(|&&n| n % m != 0) {
                    c.error("params.ns", format!("lattice side {n} is not a multiple of m = {m}"));
                }
            }
        }
        Kind::Jko => {
            c.require(kind, "params.m", p.m);
            c.require(kind, "params.hstep", p.hstep);
            c.require(kind, "params.t", p.t);
            c.require(kind, "params.rho_star", p.rho_star);
            if let (Some(t), Some(h)) = (p.t, p.hstep) {
                if h > t {
                    c.error("params.hstep", format!("hstep {h} exceeds the horizon t = {t}"));
                }
            }
        }
        Kind::Ldrate => {
            c.require(kind, "params.m", p.m);
            c.require(kind, "params.t", p.t);
            c.require(kind, "params.dt", p.dt);
            c.require(kind, "params.rho_star", p.rho_star);
            if let (Some(t), Some(dt)) = (p.t, p.dt) {
                let steps = t / dt;
                if dt > 0.0 && (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
                    c.error("params.dt", format!("t = {t} is not a whole number of steps dt = {dt}"));
                }
            }
        }
        Kind::Fluct => {
            c.require(kind, "params.n", p.n);
            c.require(kind, "params.t", p.t);
            c.require(kind, "params.rho_star", p.rho_star);
            c.require(kind, "params.replicas", p.replicas);
        }
    }

    if kind.is_stochastic() {
        if let Some(r) = p.replicas {
            if r == 0 {
                c.error("params.replicas", "must be ≥ 1");
            } else if r < MIN_REPLICAS {
                c.warn("params.replicas", format!("{r} replicas give little statistical power; at least {MIN_REPLICAS} are recommended"));
            }
        }
    }

    if let Some(e) = &ensemble {
        check_saturation(&mut c, e, kind, cfg, amplitude);
        if c.0.iter().all(|d| d.severity != Severity::Error) {
            check_cfl(&mut c, e, kind, cfg, amplitude, d);
        }
    }
    c.0
}

fn check_saturation(c: &mut Collector, e: &Ensemble, kind: Kind, cfg: &ExperimentConfig, amplitude: f64) {
    let p = &cfg.params;
    let (field, rho) = match kind {
        Kind::ThermoTable => ("params.rho_max", p.rho_max),
        Kind::HydroCompare | Kind::Jko | Kind::Ldrate => ("params.rho_star", p.rho_star.map(|r| r * (1.0 + amplitude))),
        _ => ("params.rho_star", p.rho_star),
    };
    let Some(rho) = rho else { return };
    let sup = e.saturation_density();
    if rho >= sup {
        c.error(field, format!("peak density {rho} is at or beyond saturation (sup R ≈ {sup})"));
        return;
    }
    let phi_c = e.critical_fugacity();
    if phi_c.is_finite() {
        if let Ok(phi) = e.mean_jump_rate(rho) {
            if phi > SATURATION_WARN * phi_c {
                c.warn(field, format!("peak density {rho} has fugacity {phi} close to φ_c = {phi_c} (sup R ≈ {sup})"));
            }
        }
    }
}

fn check_cfl(c: &mut Collector, e: &Ensemble, kind: Kind, cfg: &ExperimentConfig, amplitude: f64, d: usize) {
    if !matches!(kind, Kind::HydroCompare | Kind::Jko | Kind::Ldrate) {
        return;
    }
    let p = &cfg.params;
    let (Some(dt), Some(m), Some(rho_star)) = (p.dt, p.m, p.rho_star) else { return };
    let Ok(grid) = Grid::new(m, d) else { return };
    let Ok(field) = initial_profile(grid, rho_star, amplitude) else { return };
    if let Ok(bound) = pde::cfl_bound(e, &field) {
        if dt > bound {
            c.warn(
                "params.dt",
                format!("dt = {dt} exceeds the stability estimate {bound:.3e}; steps will be halved, suggested dt = {:.3e}", 0.9 * bound),
            );
        }
    }
}
