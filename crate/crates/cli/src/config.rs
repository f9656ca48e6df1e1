//! Experiment configuration files.
//!
//! One experiment per TOML file:
//!
//! ```toml
//! kind = "simulate"
//! seed = 7
//! out = "runs"
//!
//! [model]
//! name = "evans"
//! b = 2.5
//! epsilon = 0.0
//!
//! [params]
//! n = 128
//! d = 1
//! t = 1.0
//! rho_star = 1.0
//! ```

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use zrp_core::{JumpRateSpec, RateModel, TailRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    ThermoTable,
    Figures,
    Simulate,
    HydroCompare,
    Jko,
    Ldrate,
    Fluct,
    Tagged,
}

impl Kind {
    /// Kinds that draw random numbers and therefore need a seed.
    pub fn is_stochastic(self) -> bool {
        matches!(self, Kind::Simulate | Kind::HydroCompare | Kind::Fluct | Kind::Tagged)
    }

    pub fn needs_model(self) -> bool {
        self != Kind::Figures
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Kind::ThermoTable => "thermo-table",
            Kind::Figures => "figures",
            Kind::Simulate => "simulate",
            Kind::HydroCompare => "hydro-compare",
            Kind::Jko => "jko",
            Kind::Ldrate => "ldrate",
            Kind::Fluct => "fluct",
            Kind::Tagged => "tagged",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    pub b: Option<f64>,
    #[serde(default)]
    pub epsilon: f64,
    pub values: Option<Vec<f64>>,
    pub tail: Option<TailRule>,
}

impl ModelConfig {
    /// Builds the jump rate, or explains which field is wrong.
    pub fn to_spec(&self) -> Result<JumpRateSpec, (String, String)> {
        let need_b = |field: &str| self.b.ok_or_else(|| (format!("model.{field}"), format!("model `{}` needs parameter b", self.name)));
        let model = match self.name.as_str() {
            "linear" => RateModel::Linear,
            "constant" => RateModel::Constant,
            "evans" => RateModel::Evans { b: need_b("b")? },
            "landim" => RateModel::Landim { b: need_b("b")? },
            "tabulated" => RateModel::Tabulated {
                values: self.values.clone().ok_or_else(|| ("model.values".to_string(), "tabulated model needs a `values` list".to_string()))?,
                tail: self.tail,
            },
            other => {
                return Err((
                    "model.name".into(),
                    format!("unknown model `{other}` (expected linear, constant, evans, landim or tabulated)"),
                ))
            }
        };
        JumpRateSpec::new(model, self.epsilon).map_err(|e| ("model".into(), e.to_string()))
    }
}

/// Numeric parameters; which ones are required depends on the kind.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    /// Lattice side `N`.
    pub n: Option<usize>,
    /// PDE grid side `M`.
    pub m: Option<usize>,
    pub d: Option<usize>,
    /// Time horizon.
    pub t: Option<f64>,
    /// PDE time step.
    pub dt: Option<f64>,
    /// JKO step.
    pub hstep: Option<f64>,
    pub replicas: Option<usize>,
    pub rho_star: Option<f64>,
    pub snapshot_dt: Option<f64>,
    /// Relative amplitude of the sinusoidal initial profile.
    pub amplitude: Option<f64>,
    /// Number of table points.
    pub points: Option<usize>,
    pub rho_max: Option<f64>,
    /// Lattice sides compared by `hydro-compare`.
    pub ns: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Option<Kind>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub params: Params,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Canonical JSON form without the output directory; the input of the
    /// run hash.
    pub fn canonical_json(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        serde_json::to_string(&c).expect("config serializes")
    }
}

pub const DEFAULT_AMPLITUDE: f64 = 0.5;
pub const DEFAULT_POINTS: usize = 50;
pub const DEFAULT_NS: [usize; 3] = [32, 64, 128];
