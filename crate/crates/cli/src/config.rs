//! Scenario configs: one JSON document drives every subcommand, with
//! optional blocks for the analyses that need them. Unknown keys are
//! rejected everywhere so a typo cannot silently fall back to a default.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use lcc_core::region_scanner::{AxisRange, GainRef};
use lcc_core::simulator::{DEFAULT_DT, DEFAULT_HORIZON};
use lcc_core::{
    DriverParams, FeedbackGains, LccTopology, OmegaGrid, Perturbation,
};

use crate::CliError;

pub const SCHEMA: &str = "lcc-scenario/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Must be "lcc-scenario/1"; bumped on breaking layout changes.
    pub schema: String,
    #[serde(default)]
    pub driver: DriverParams,
    #[serde(default)]
    pub equilibrium: EquilibriumSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<LccTopology>,
    #[serde(default, skip_serializing_if = "FeedbackGains::is_empty")]
    pub feedback: FeedbackGains,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_grid: Option<OmegaGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<Perturbation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationBlock>,
}

/// Equilibrium pinned by either spacing or velocity; the other coordinate
/// is derived from the driver model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EquilibriumSpec {
    Spacing {
        s_star: f64,
    },
    Velocity {
        v_star: f64,
    },
}

impl Default for EquilibriumSpec {
    fn default() -> Self {
        EquilibriumSpec::Spacing { s_star: 20.0 }
    }
}

/// Axes of a gain-region scan; the system under study comes from the
/// scenario-level fields, gains held fixed from the `feedback` block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanBlock {
    pub x_gain: GainRef,
    pub y_gain: GainRef,
    #[serde(default = "AxisRange::default_gain_axis")]
    pub x_range: AxisRange,
    #[serde(default = "AxisRange::default_gain_axis")]
    pub y_range: AxisRange,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulationMode {
    #[default]
    Linear,
    Nonlinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationBlock {
    #[serde(default)]
    pub mode: SimulationMode,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

impl Default for SimulationBlock {
    fn default() -> Self {
        SimulationBlock {
            mode: SimulationMode::Linear,
            horizon: DEFAULT_HORIZON,
            dt: DEFAULT_DT,
        }
    }
}

fn default_horizon() -> f64 {
    DEFAULT_HORIZON
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

/// Parse and validate a config document, reporting the JSON path of
/// whatever field fails.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." { "top level".into() } else { format!("field `{path}`") };
        CliError::Config(format!("{field}: {}", e.inner()))
    })?;
    if config.schema != SCHEMA {
        return Err(CliError::Config(format!(
            "field `schema`: expected \"{SCHEMA}\", got \"{}\"",
            config.schema
        )));
    }
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text)
}
