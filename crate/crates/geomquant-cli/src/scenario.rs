//! Scenario configuration: which model, levels, resolutions, observables
//! and suites to run, with fixed tolerances and a seed for full
//! determinism.

use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub model: ModelSpec,
    #[serde(default)]
    pub resolution: Resolution,
    #[serde(default)]
    pub params: Params,
    pub suites: Suites,
    #[serde(default)]
    pub observables: Vec<ObservableSpec>,
}

fn default_seed() -> u64 {
    7
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    #[serde(default = "default_levels")]
    pub levels: Vec<u32>,
}

fn default_levels() -> Vec<u32> {
    vec![3]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Sphere,
    Torus,
    Darboux,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Resolution {
    /// Prequantum grid points per direction.
    pub grid: usize,
    /// Loop vertices.
    pub loop_n: usize,
    /// Liouville quadrature points per direction.
    pub quadrature: usize,
}

impl Default for Resolution {
    fn default() -> Self {
        Resolution { grid: 64, loop_n: 256, quadrature: 128 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub tau: f64,
    pub volume: f64,
    pub tolerance_scale: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params { tau: 0.5, volume: 2.0, tolerance_scale: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Suites {
    pub run: Vec<String>,
}

/// Named observable presets usable from scenario files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableSpec {
    pub name: String,
    pub kind: ObservableKind,
    #[serde(default)]
    pub mp: i32,
    #[serde(default)]
    pub mq: i32,
    #[serde(default = "one")]
    pub amp: f64,
    #[serde(default)]
    pub phase: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObservableKind {
    Height,
    X,
    Y,
    Z,
    P,
    Q,
    Trig,
}

impl ObservableSpec {
    pub fn build(&self) -> geomquant::f64_types::Observable {
        use geomquant::phase::Observable as Obs;
        match self.kind {
            ObservableKind::Height | ObservableKind::Z => {
                Obs::Coord(2).scaled(self.amp)
            }
            ObservableKind::X => Obs::Coord(0).scaled(self.amp),
            ObservableKind::Y => Obs::Coord(1).scaled(self.amp),
            ObservableKind::P => Obs::Coord(0).scaled(self.amp),
            ObservableKind::Q => Obs::Coord(1).scaled(self.amp),
            ObservableKind::Trig => Obs::Trig {
                mp: self.mp,
                mq: self.mq,
                amp: self.amp,
                phase: self.phase,
            },
        }
    }
}

/// Load a scenario from TOML or JSON (decided by extension, with fallback).
pub fn load(path: &Path) -> Result<Scenario, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let is_json = path.extension().map(|e| e == "json").unwrap_or(false);
    if is_json {
        serde_json::from_str(&text).map_err(|e| format!("json parse error: {e}"))
    } else {
        match toml::from_str(&text) {
            Ok(s) => Ok(s),
            Err(toml_err) => serde_json::from_str(&text)
                .map_err(|json_err| format!("toml parse error: {toml_err}; json fallback: {json_err}")),
        }
    }
}
