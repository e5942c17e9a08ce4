//! Planar ground-truth world: a kinematic-bicycle ego vehicle, scripted
//! agents, center-ray occlusion sensing and rectangle collision checks.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataflow::Timestamp;
use crate::geometry::{rect_rect_overlap, seg_rect_intersect, Aabb, OrientedRect, Point2, Polyline, Pose2D};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    pub wheelbase: f64,
    pub max_steer: f64,
    pub max_accel: f64,
    pub max_brake: f64,
    pub drag: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            wheelbase: 2.85,
            max_steer: 0.61,
            max_accel: 3.0,
            max_brake: 8.0,
            drag: 0.05,
        }
    }
}

/// Normalized actuation. Positive steer turns right (clockwise), matching
/// common simulator conventions; the wheel angle is `-steer * max_steer`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EgoCommand {
    pub steer: f64,
    pub throttle: f64,
    pub brake: f64,
}

impl EgoCommand {
    pub fn clamped(self) -> Self {
        Self {
            steer: self.steer.clamp(-1.0, 1.0),
            throttle: self.throttle.clamp(0.0, 1.0),
            brake: self.brake.clamp(0.0, 1.0),
        }
    }

    pub fn full_brake() -> Self {
        Self {
            steer: 0.0,
            throttle: 0.0,
            brake: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Ego,
    Vehicle,
    Truck,
    Pedestrian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "on", rename_all = "snake_case", deny_unknown_fields)]
pub enum Trigger {
    /// Fires once simulation time reaches `time` seconds.
    AtTime { time: f64 },
    /// Fires when the ego-to-agent center distance, minus the ground the ego
    /// covers in `lead_time` seconds at its current speed, drops to
    /// `distance`. A missing distance takes the scenario's trigger distance.
    EgoApproach {
        #[serde(default)]
        distance: Option<f64>,
        #[serde(default)]
        lead_time: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "do", rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    /// Move at `speed` m/s along world heading `heading` radians.
    SetVelocity {
        speed: f64,
        heading: f64,
    },
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptStep {
    pub trigger: Trigger,
    pub action: Action,
    #[serde(default)]
    pub fired: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentState {
    pub id: u32,
    pub kind: AgentKind,
    pub pose: Pose2D,
    #[serde(default)]
    pub speed: f64,
    pub length: f64,
    pub width: f64,
    #[serde(default)]
    pub script: Vec<ScriptStep>,
}

impl AgentState {
    pub fn footprint(&self) -> OrientedRect {
        OrientedRect::new(self.pose.position(), self.pose.heading, self.length, self.width)
    }

    pub fn velocity(&self) -> Point2 {
        Point2::new(self.pose.heading.cos(), self.pose.heading.sin()) * self.speed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Road {
    pub centerline: Polyline,
    pub lane_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub sim_time: Timestamp,
    pub agents: Vec<AgentState>,
    pub road: Road,
    pub vehicle: VehicleParams,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("time step must be positive")]
    NonPositiveDt,
    #[error("world has no ego agent")]
    NoEgo,
}

impl WorldState {
    pub fn ego(&self) -> &AgentState {
        self.agents
            .iter()
            .find(|a| a.kind == AgentKind::Ego)
            .expect("validated worlds have an ego")
    }

    fn ego_index(&self) -> Option<usize> {
        self.agents.iter().position(|a| a.kind == AgentKind::Ego)
    }

    pub fn agent(&self, id: u32) -> Option<&AgentState> {
        self.agents.iter().find(|a| a.id == id)
    }
}

/// Advances the world by `dt_micros` with explicit Euler integration.
/// Acceleration the bicycle model applies for a clamped command at speed
/// `v`; braking at rest produces none.
pub fn longitudinal_accel(vp: &VehicleParams, c: &EgoCommand, v: f64) -> f64 {
    let a = vp.max_accel * c.throttle - vp.max_brake * c.brake - vp.drag * v;
    if v <= 0.0 {
        a.max(0.0)
    } else {
        a
    }
}

pub fn step(world: &WorldState, dt_micros: u64, cmd: &EgoCommand) -> Result<WorldState, WorldError> {
    if dt_micros == 0 {
        return Err(WorldError::NonPositiveDt);
    }
    let ego_idx = world.ego_index().ok_or(WorldError::NoEgo)?;
    let dt = dt_micros as f64 * 1e-6;
    let t = world.sim_time.as_secs_f64();
    let ego = &world.agents[ego_idx];
    let vp = &world.vehicle;
    let mut next = world.clone();

    for (i, a) in next.agents.iter_mut().enumerate() {
        if i == ego_idx {
            let c = cmd.clamped();
            let delta = -c.steer * vp.max_steer;
            let v = ego.speed;
            let th = ego.pose.heading;
            let accel = longitudinal_accel(vp, &c, v);
            a.pose = Pose2D::new(
                ego.pose.x + v * th.cos() * dt,
                ego.pose.y + v * th.sin() * dt,
                th + v * delta.tan() / vp.wheelbase * dt,
            );
            a.speed = (v + accel * dt).max(0.0);
            continue;
        }
        for s in a.script.iter_mut().filter(|s| !s.fired) {
            let fire = match s.trigger {
                Trigger::AtTime { time } => t >= time,
                Trigger::EgoApproach { distance, lead_time } => {
                    let gap = ego.pose.position().distance(a.pose.position());
                    gap - ego.speed * lead_time <= distance.unwrap_or(0.0)
                }
            };
            if fire {
                s.fired = true;
                match s.action {
                    Action::SetVelocity { speed, heading } => {
                        a.speed = speed.max(0.0);
                        a.pose = Pose2D::new(a.pose.x, a.pose.y, heading);
                    }
                    Action::Stop => a.speed = 0.0,
                }
            }
        }
        let v = a.velocity();
        a.pose = Pose2D::new(a.pose.x + v.x * dt, a.pose.y + v.y * dt, a.pose.heading);
    }
    next.sim_time = world.sim_time.add_micros(dt_micros);
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthDetection {
    pub agent_id: u32,
    pub kind: AgentKind,
    /// Axis-aligned box in the sensor frame (x forward, y left).
    pub bbox: Aabb,
}

/// Agents within `range` of the sensor whose center is visible along a
/// straight ray, i.e. the ray crosses no other agent's footprint.
pub fn sense(world: &WorldState, sensor: &Pose2D, range: f64) -> Vec<GroundTruthDetection> {
    let origin = sensor.position();
    let others: Vec<&AgentState> = world.agents.iter().filter(|a| a.kind != AgentKind::Ego).collect();
    others
        .iter()
        .filter(|a| a.pose.position().distance(origin) <= range)
        .filter(|a| {
            others
                .iter()
                .filter(|b| b.id != a.id)
                .all(|b| !seg_rect_intersect(origin, a.pose.position(), &b.footprint()))
        })
        .map(|a| {
            let fp = a.footprint();
            let local = OrientedRect::new(sensor.to_local(fp.center), fp.heading - sensor.heading, fp.length, fp.width);
            GroundTruthDetection {
                agent_id: a.id,
                kind: a.kind,
                bbox: Aabb::of_rect(&local),
            }
        })
        .collect()
}

/// First (ego, agent) pair, in agent order, whose footprints overlap.
pub fn check_collision(world: &WorldState) -> Option<(u32, u32)> {
    let ego = world.agents.iter().find(|a| a.kind == AgentKind::Ego)?;
    let fp = ego.footprint();
    world
        .agents
        .iter()
        .filter(|a| a.id != ego.id)
        .find(|a| rect_rect_overlap(&fp, &a.footprint()))
        .map(|a| (ego.id, a.id))
}

fn default_target_speeds() -> Vec<f64> {
    vec![]
}
fn default_tick_rate() -> u32 {
    200
}
fn default_sensor_rate() -> u32 {
    20
}
fn default_sensor_range() -> f64 {
    60.0
}
fn default_trigger_distance() -> f64 {
    20.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioParams {
    /// Speed used when a run does not override it.
    pub target_speed: f64,
    /// Speeds a sweep iterates over.
    #[serde(default = "default_target_speeds")]
    pub target_speeds: Vec<f64>,
    #[serde(default = "default_trigger_distance")]
    pub trigger_distance: f64,
    pub goal: Point2,
    #[serde(default = "default_tick_rate")]
    pub tick_rate: u32,
    #[serde(default = "default_sensor_rate")]
    pub sensor_rate: u32,
    #[serde(default = "default_sensor_range")]
    pub sensor_range: f64,
    /// Seconds of simulated time before the run ends.
    pub duration: f64,
    #[serde(default)]
    pub vehicle: VehicleParams,
}

impl ScenarioParams {
    pub fn tick_micros(&self) -> u64 {
        1_000_000 / self.tick_rate as u64
    }

    pub fn sensor_period_micros(&self) -> u64 {
        1_000_000 / self.sensor_rate as u64
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub road: Road,
    pub agents: Vec<AgentState>,
    pub params: ScenarioParams,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("scenario parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid scenario field {field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

pub fn parse_scenario(text: &str) -> Result<(WorldState, ScenarioParams), ScenarioError> {
    let file: ScenarioFile = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let ScenarioFile { road, mut agents, params } = file;
    if agents.iter().filter(|a| a.kind == AgentKind::Ego).count() != 1 {
        return Err(invalid("agents", "exactly one ego agent required"));
    }
    let mut ids = BTreeSet::new();
    for (i, a) in agents.iter_mut().enumerate() {
        if !ids.insert(a.id) {
            return Err(invalid(format!("agents[{i}].id"), format!("duplicate id {}", a.id)));
        }
        if !(a.length > 0.0 && a.width > 0.0) {
            return Err(invalid(format!("agents[{i}]"), "footprint must be positive"));
        }
        if a.speed < 0.0 {
            return Err(invalid(format!("agents[{i}].speed"), "must be non-negative"));
        }
        a.pose = Pose2D::new(a.pose.x, a.pose.y, a.pose.heading);
        for s in &mut a.script {
            if let Trigger::EgoApproach { distance, .. } = &mut s.trigger {
                distance.get_or_insert(params.trigger_distance);
            }
        }
    }
    if params.tick_rate < 200 || 1_000_000 % params.tick_rate != 0 {
        return Err(invalid(
            "params.tick_rate",
            "must be >= 200 Hz and divide one second into whole microseconds",
        ));
    }
    if params.sensor_rate == 0 || params.tick_rate % params.sensor_rate != 0 {
        return Err(invalid("params.sensor_rate", "must divide the tick rate"));
    }
    if !(road.lane_width > 0.0) {
        return Err(invalid("road.lane_width", "must be positive"));
    }
    if !(params.duration > 0.0) {
        return Err(invalid("params.duration", "must be positive"));
    }
    let world = WorldState {
        sim_time: Timestamp::ZERO,
        agents,
        road,
        vehicle: params.vehicle,
    };
    Ok((world, params))
}

pub fn load_scenario(path: &Path) -> Result<(WorldState, ScenarioParams), ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&text)
}

/// Scenarios shipped with the crate, by name.
pub fn bundled_scenario(name: &str) -> Option<&'static str> {
    match name {
        "occluded_pedestrian" => Some(include_str!("../scenarios/occluded_pedestrian.json")),
        "crossing_vehicle" => Some(include_str!("../scenarios/crossing_vehicle.json")),
        "city_drive" => Some(include_str!("../scenarios/city_drive.json")),
        "straight_road" => Some(include_str!("../scenarios/straight_road.json")),
        _ => None,
    }
}

pub const BUNDLED_SCENARIOS: [&str; 4] = ["occluded_pedestrian", "crossing_vehicle", "city_drive", "straight_road"];

/// Resolves a bundled name or a file path.
pub fn resolve_scenario(name_or_path: &str) -> Result<(WorldState, ScenarioParams), ScenarioError> {
    match bundled_scenario(name_or_path) {
        Some(text) => parse_scenario(text),
        None => load_scenario(Path::new(name_or_path)),
    }
}
