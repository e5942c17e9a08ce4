//! Run configuration: a versioned JSON document, strict about unknown keys.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::control::PidGains;
use crate::metrics::GridSpec;
use crate::perception::{NoiseModel, SortConfig};
use crate::planning::{preset, PlannerConfig, PlannerVariant};
use crate::prediction::PredictionConfig;
use crate::syncbridge::LatencyModel;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentMode {
    /// Exact outputs derived from simulator state.
    GroundTruth,
    #[default]
    Pipeline,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComponentConfig {
    pub mode: ComponentMode,
    /// `None` charges nothing, except for planning, which is charged its
    /// preset's P99 runtime.
    pub latency: Option<LatencyModel>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Components {
    pub detection: ComponentConfig,
    pub tracking: ComponentConfig,
    pub prediction: ComponentConfig,
    pub planning: ComponentConfig,
    pub control: ComponentConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialSpeed {
    /// The ego starts at the run's target speed.
    #[default]
    Target,
    /// The ego keeps the speed given in the scenario file.
    Scenario,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Bundled scenario name or path to a scenario file.
    pub scenario: String,
    #[serde(default = "default_preset")]
    pub preset: String,
    /// Replaces the preset's planner configuration; the preset still names
    /// the run and supplies the default planner latency.
    #[serde(default)]
    pub planner: Option<PlannerConfig>,
    #[serde(default)]
    pub target_speed: Option<f64>,
    #[serde(default)]
    pub initial_speed: InitialSpeed,
    #[serde(default)]
    pub tick_rate: Option<u32>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub components: Components,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub sort: SortConfig,
    #[serde(default)]
    pub prediction: PredictionConfig,
    #[serde(default)]
    pub gains: PidGains,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "yes")]
    pub stop_on_goal: bool,
    #[serde(default)]
    pub out: Option<String>,
}

fn default_preset() -> String {
    "fot-fast".to_string()
}

fn yes() -> bool {
    true
}

impl RunConfig {
    pub fn new(scenario: impl Into<String>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            scenario: scenario.into(),
            preset: default_preset(),
            planner: None,
            target_speed: None,
            initial_speed: InitialSpeed::default(),
            tick_rate: None,
            seed: None,
            components: Components::default(),
            noise: NoiseModel::default(),
            sort: SortConfig::default(),
            prediction: PredictionConfig::default(),
            gains: PidGains::default(),
            grid: GridSpec::default(),
            stop_on_goal: true,
            out: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// The planner configuration and its default charged runtime.
    pub fn planner(&self) -> Result<(PlannerConfig, u64), HarnessError> {
        let p = preset(&self.preset).ok_or_else(|| HarnessError::Config(format!("unknown planner preset {:?}", self.preset)))?;
        Ok((self.planner.clone().unwrap_or(p.config), p.p99_runtime_micros))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        let (planner, _) = self.planner()?;
        if let Some(r) = self.tick_rate {
            if r < 200 || 1_000_000 % r != 0 {
                return bad(format!("tick_rate {r} must be at least 200 Hz and divide one second"));
            }
        }
        if let Some(v) = self.target_speed {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("target_speed {v} must be finite and non-negative"));
            }
        }
        let c = &self.components;
        for (name, comp) in [
            ("detection", &c.detection),
            ("tracking", &c.tracking),
            ("prediction", &c.prediction),
            ("planning", &c.planning),
            ("control", &c.control),
        ] {
            if let Some(l) = &comp.latency {
                l.validate().map_err(|e| HarnessError::Config(format!("{name} latency: {e}")))?;
            }
        }
        if c.tracking.mode == ComponentMode::GroundTruth && c.detection.mode != ComponentMode::GroundTruth {
            return bad("ground-truth tracking needs ground-truth detection".into());
        }
        let noisy = c.detection.mode == ComponentMode::Pipeline && !self.noise.is_noiseless();
        if self.seed.is_none() && (noisy || matches!(planner.planner, PlannerVariant::RrtStar(_))) {
            return bad("a seed is required when noisy detection or a sampling planner is enabled".into());
        }
        if !(self.noise.jitter_std >= 0.0 && (0.0..=1.0).contains(&self.noise.drop_prob)) {
            return bad("noise parameters out of range".into());
        }
        self.gains.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        if !(self.grid.cell_size > 0.0 && self.grid.width > 0 && self.grid.height > 0) {
            return bad("grid must have positive cell size and dimensions".into());
        }
        Ok(())
    }
}
