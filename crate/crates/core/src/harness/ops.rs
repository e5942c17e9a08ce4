//! Pipeline messages and operators.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::ComponentMode;
use crate::control::{pid_step, ControllerState, PidGains};
use crate::dataflow::{Context, Operator, OperatorError, StreamEvent, Timestamp};
use crate::geometry::{Aabb, OrientedRect, Point2, Polyline, Pose2D};
use crate::perception::{
    perfect_detect, BBox2D, NoiseModel, ObstacleMessage, ObstacleTrajectoryMessage, SortConfig, SortTracker, TrackedObstacle,
};
use crate::planning::{build_world, emergency_stop, plan, EgoSnapshot, PlannerConfig, PlanningInputs, PlanningWorld, Trajectory};
use crate::prediction::{predict_linear_window, ObstaclePrediction, ObstaclePredictionMessage, PredictionConfig};
use crate::rng::mix;
use crate::syncbridge::Synchronizer;
use crate::worldsim::{check_collision, longitudinal_accel, sense, step, EgoCommand, GroundTruthDetection, VehicleParams, WorldState};

pub mod streams {
    use crate::dataflow::StreamId;
    pub const SENSOR: StreamId = 1;
    pub const POSE: StreamId = 2;
    pub const OBSTACLES: StreamId = 3;
    pub const TRACKS: StreamId = 4;
    pub const PREDICTIONS: StreamId = 5;
    pub const PLAN: StreamId = 6;
    pub const COMMAND: StreamId = 7;
    pub const TRUTH: StreamId = 8;
}

pub mod operators {
    use crate::dataflow::OperatorId;
    pub const SIM: OperatorId = 1;
    pub const DETECTION: OperatorId = 2;
    pub const TRACKING: OperatorId = 3;
    pub const PREDICTION: OperatorId = 4;
    pub const PLANNING: OperatorId = 5;
    pub const CONTROL: OperatorId = 6;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    pub ego: Pose2D,
    pub speed: f64,
    pub detections: Vec<GroundTruthDetection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoPose {
    pub pose: Pose2D,
    pub speed: f64,
    pub size: (f64, f64),
    /// Path curvature under the steering currently applied, 1/m, left positive.
    pub curvature: f64,
    /// Longitudinal acceleration under the command currently applied, m/s^2.
    pub acceleration: f64,
}

/// Detections in the ego frame at sensing time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionFrame {
    pub ego: Pose2D,
    pub obstacles: ObstacleMessage,
    /// Agent ids parallel to `obstacles.boxes`; only filled in ground-truth
    /// mode.
    pub agent_ids: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanMessage {
    pub trajectory: Trajectory,
    /// Planner error that triggered the emergency-stop fallback.
    pub fallback: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentPose {
    pub id: u32,
    pub pose: Pose2D,
    pub speed: f64,
}

/// A command taking effect in the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Actuation {
    pub command: EgoCommand,
    pub sensor_time: Timestamp,
    pub pipeline_runtime: u64,
    pub apply_at: Timestamp,
    /// Simulation instant from which the command drives the ego.
    pub applied_at: Timestamp,
}

/// Simulator state after one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFrame {
    pub agents: Vec<AgentPose>,
    pub collision: Option<u32>,
    pub goal_reached: bool,
    pub actuation: Option<Actuation>,
    /// Commands superseded so far.
    pub dropped: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "body", rename_all = "snake_case")]
pub enum Msg {
    Sensor(SensorFrame),
    Pose(EgoPose),
    Obstacles(DetectionFrame),
    Tracks(ObstacleTrajectoryMessage),
    Predictions(ObstaclePredictionMessage),
    Plan(PlanMessage),
    Command(EgoCommand),
    Truth(TruthFrame),
}

fn err(e: impl std::fmt::Display) -> OperatorError {
    OperatorError::new(e.to_string())
}

/// Buffers one payload per timestamp until the watermark releases it.
#[derive(Debug)]
struct Inbox<T> {
    items: BTreeMap<Timestamp, T>,
}

impl<T> Default for Inbox<T> {
    fn default() -> Self {
        Self { items: BTreeMap::new() }
    }
}

impl<T> Inbox<T> {
    fn put(&mut self, t: Timestamp, v: T) {
        self.items.insert(t, v);
    }

    /// Removes and returns the entry at `t`, dropping anything older.
    fn take(&mut self, t: Timestamp) -> Option<T> {
        let later = self.items.split_off(&t.add_micros(1));
        let mut upto = std::mem::replace(&mut self.items, later);
        upto.remove(&t)
    }
}

pub struct SimParams {
    pub tick_micros: u64,
    pub sensor_period_micros: u64,
    pub sensor_range: f64,
    pub route: Polyline,
    pub goal_s: f64,
    pub goal_tolerance: f64,
    pub stop_on_goal: bool,
}

/// The simulator as a source: advances the world every tick, applies
/// commands through the synchronizer and publishes sensor data at the
/// sensor rate.
pub struct SimOperator {
    world: WorldState,
    params: SimParams,
    sync: Synchronizer,
    command: EgoCommand,
    done: bool,
}

impl SimOperator {
    pub fn new(world: WorldState, params: SimParams) -> Self {
        let sync = Synchronizer::new(params.tick_micros);
        Self {
            world,
            params,
            sync,
            command: EgoCommand::default(),
            done: false,
        }
    }
}

impl Operator<Msg> for SimOperator {
    fn on_data(&mut self, ctx: &mut Context<Msg>, event: &StreamEvent<Msg>) -> Result<(), OperatorError> {
        if let Some(Msg::Command(c)) = event.data() {
            let runtime = ctx.start_time().as_micros() - event.timestamp.as_micros();
            self.sync.submit(*c, event.timestamp, runtime);
        }
        Ok(())
    }

    fn next_tick(&self, after: Option<Timestamp>) -> Option<Timestamp> {
        if self.done {
            return None;
        }
        Some(after.map_or(Timestamp::ZERO, |t| t.add_micros(self.params.tick_micros)))
    }

    fn on_tick(&mut self, ctx: &mut Context<Msg>) -> Result<(), OperatorError> {
        let t = ctx.timestamp();
        let tick = self.params.tick_micros;
        let mut actuation = None;
        if t.as_micros() > 0 {
            // Commands due at the start of the interval drive it.
            let start = Timestamp::from_micros(t.as_micros() - tick);
            if let Some(p) = self.sync.poll(start).map_err(err)? {
                self.command = p.command;
                actuation = Some(Actuation {
                    command: p.command,
                    sensor_time: p.sensor_time,
                    pipeline_runtime: p.pipeline_runtime,
                    apply_at: p.apply_at,
                    applied_at: start,
                });
            }
            self.world = step(&self.world, tick, &self.command).map_err(err)?;
        }
        let ego = self.world.ego().clone();
        let collision = check_collision(&self.world).map(|c| c.1);
        let goal_reached = self
            .params
            .route
            .to_frenet(ego.pose.position())
            .is_ok_and(|(s, _)| s >= self.params.goal_s - self.params.goal_tolerance);
        ctx.send(
            streams::TRUTH,
            Msg::Truth(TruthFrame {
                agents: self
                    .world
                    .agents
                    .iter()
                    .map(|a| AgentPose {
                        id: a.id,
                        pose: a.pose,
                        speed: a.speed,
                    })
                    .collect(),
                collision,
                goal_reached,
                actuation,
                dropped: self.sync.dropped(),
            }),
        );
        ctx.send_watermark(streams::TRUTH);
        if t.as_micros().is_multiple_of(self.params.sensor_period_micros) {
            ctx.send(
                streams::SENSOR,
                Msg::Sensor(SensorFrame {
                    ego: ego.pose,
                    speed: ego.speed,
                    detections: sense(&self.world, &ego.pose, self.params.sensor_range),
                }),
            );
            ctx.send(
                streams::POSE,
                Msg::Pose(EgoPose {
                    pose: ego.pose,
                    speed: ego.speed,
                    size: (ego.length, ego.width),
                    curvature: (-self.command.steer * self.world.vehicle.max_steer).tan() / self.world.vehicle.wheelbase,
                    acceleration: longitudinal_accel(&self.world.vehicle, &self.command.clamped(), ego.speed),
                }),
            );
            ctx.send_watermark(streams::SENSOR);
            ctx.send_watermark(streams::POSE);
        }
        if collision.is_some() || (goal_reached && self.params.stop_on_goal) {
            self.done = true;
        }
        Ok(())
    }
}

pub struct DetectionOperator {
    pub mode: ComponentMode,
    pub noise: NoiseModel,
    inbox: Inbox<SensorFrame>,
}

impl DetectionOperator {
    pub fn new(mode: ComponentMode, noise: NoiseModel) -> Self {
        Self {
            mode,
            noise,
            inbox: Inbox::default(),
        }
    }
}

impl Operator<Msg> for DetectionOperator {
    fn on_data(&mut self, _ctx: &mut Context<Msg>, event: &StreamEvent<Msg>) -> Result<(), OperatorError> {
        if let Some(Msg::Sensor(f)) = event.data() {
            self.inbox.put(event.timestamp, f.clone());
        }
        Ok(())
    }

    fn on_watermark(&mut self, ctx: &mut Context<Msg>) -> Result<(), OperatorError> {
        let t = ctx.timestamp();
        if let Some(f) = self.inbox.take(t) {
            let (obstacles, agent_ids) = match self.mode {
                ComponentMode::GroundTruth => (
                    perfect_detect(&f.detections, &NoiseModel::default(), t),
                    f.detections.iter().map(|d| d.agent_id).collect(),
                ),
                ComponentMode::Pipeline => (perfect_detect(&f.detections, &self.noise, t), vec![]),
            };
            ctx.send(
                streams::OBSTACLES,
                Msg::Obstacles(DetectionFrame {
                    ego: f.ego,
                    obstacles,
                    agent_ids,
                }),
            );
        }
        ctx.send_watermark(streams::OBSTACLES);
        Ok(())
    }
}

/// Axis-aligned world-frame bounds of an ego-frame box.
pub fn box_to_world(ego: &Pose2D, b: &BBox2D) -> BBox2D {
    let r = OrientedRect::new(ego.to_world(b.center()), ego.heading, b.width(), b.height());
    Aabb::of_rect(&r)
}

enum Tracker {
    Sort(SortTracker),
    Exact {
        history: BTreeMap<u32, Vec<(Timestamp, BBox2D)>>,
        window: usize,
    },
}

pub struct TrackingOperator {
    tracker: Tracker,
    inbox: Inbox<DetectionFrame>,
}

impl TrackingOperator {
    pub fn new(mode: ComponentMode, config: SortConfig) -> Self {
        let tracker = match mode {
            ComponentMode::Pipeline => Tracker::Sort(SortTracker::new(config)),
            ComponentMode::GroundTruth => Tracker::Exact {
                history: BTreeMap::new(),
                window: config.history_len,
            },
        };
        Self {
            tracker,
            inbox: Inbox::default(),
        }
    }
}

impl Operator<Msg> for TrackingOperator {
    fn on_data(&mut self, _ctx: &mut Context<Msg>, event: &StreamEvent<Msg>) -> Result<(), OperatorError> {
        if let Some(Msg::Obstacles(f)) = event.data() {
            self.inbox.put(event.timestamp, f.clone());
        }
        Ok(())
    }

    fn on_watermark(&mut self, ctx: &mut Context<Msg>) -> Result<(), OperatorError> {
        let t = ctx.timestamp();
        if let Some(f) = self.inbox.take(t) {
            let mut world = f.obstacles.clone();
            for d in &mut world.boxes {
                d.bbox = box_to_world(&f.ego, &d.bbox);
            }
            let msg = match &mut self.tracker {
                Tracker::Sort(s) => s.step(&world),
                Tracker::Exact { history, window } => {
                    if f.agent_ids.len() != world.boxes.len() {
                        return Err(OperatorError::new("ground-truth tracking needs agent ids"));
                    }
                    let mut next = BTreeMap::new();
                    let mut tracks = Vec::new();
                    for (id, d) in f.agent_ids.iter().zip(&world.boxes) {
                        let mut h = history.remove(id).unwrap_or_default();
                        h.push((t, d.bbox));
                        let from = h.len().saturating_sub(*window);
                        h.drain(..from);
                        tracks.push(TrackedObstacle {
                            track_id: *id as u64,
                            label: d.label,
                            bbox: d.bbox,
                            history: h.clone(),
                        });
                        next.insert(*id, h);
                    }
                    *history = next;
                    ObstacleTrajectoryMessage { timestamp: t, tracks }
                }
            };
            ctx.send(streams::TRACKS, Msg::Tracks(msg));
        }
        ctx.send_watermark(streams::TRACKS);
        Ok(())
    }
}

pub struct PredictionOperator {
    config: PredictionConfig,
    inbox: Inbox<ObstacleTrajectoryMessage>,
}

impl PredictionOperator {
    pub fn new(config: PredictionConfig) -> Self {
        Self {
            config,
            inbox: Inbox::default(),
        }
    }
}

/// Linear predictions for every track; a track with too little history
/// is predicted to stay where it is.
pub fn predict_tracks(msg: &ObstacleTrajectoryMessage, config: &PredictionConfig) -> ObstaclePredictionMessage {
    let obstacles = msg
        .tracks
        .iter()
        .map(|tr| {
            let past: Vec<(Timestamp, Point2)> = tr.history.iter().map(|(t, b)| (*t, b.center())).collect();
            let predicted = predict_linear_window(&past, config.horizon, config.step, config.window).unwrap_or_default();
            ObstaclePrediction {
                track_id: tr.track_id,
                label: tr.label,
                size: (tr.bbox.width(), tr.bbox.height()),
                past,
                predicted,
            }
        })
        .collect();
    ObstaclePredictionMessage {
        timestamp: msg.timestamp,
        obstacles,
    }
}

impl Operator<Msg> for PredictionOperator {
    fn on_data(&mut self, _ctx: &mut Context<Msg>, event: &StreamEvent<Msg>) -> Result<(), OperatorError> {
        if let Some(Msg::Tracks(m)) = event.data() {
            self.inbox.put(event.timestamp, m.clone());
        }
        Ok(())
    }

    fn on_watermark(&mut self, ctx: &mut Context<Msg>) -> Result<(), OperatorError> {
        if let Some(m) = self.inbox.take(ctx.timestamp()) {
            ctx.send(streams::PREDICTIONS, Msg::Predictions(predict_tracks(&m, &self.config)));
        }
        ctx.send_watermark(streams::PREDICTIONS);
        Ok(())
    }
}

pub struct PlanningOperator {
    pub config: PlannerConfig,
    pub route: Polyline,
    pub lane_width: f64,
    pub route_goal: Point2,
    pub target_speed: f64,
    pub seed: u64,
    poses: Inbox<EgoPose>,
    predictions: Inbox<ObstaclePredictionMessage>,
}

impl PlanningOperator {
    pub fn new(config: PlannerConfig, route: Polyline, lane_width: f64, route_goal: Point2, target_speed: f64, seed: u64) -> Self {
        Self {
            config,
            route,
            lane_width,
            route_goal,
            target_speed,
            seed,
            poses: Inbox::default(),
            predictions: Inbox::default(),
        }
    }

    fn fallback_world(&self, t: Timestamp, ego: &EgoPose) -> PlanningWorld {
        PlanningWorld {
            timestamp: t,
            ego: ego.pose,
            ego_speed: ego.speed,
            ego_size: ego.size,
            ego_curvature: ego.curvature,
            ego_accel: ego.acceleration,
            static_obstacles: vec![],
            dynamic_obstacles: vec![],
            route: self.route.clone(),
            lane_width: self.lane_width,
            goal: ego.pose.position(),
            goal_tolerance: self.config.goal.tolerance,
            target_speed: 0.0,
        }
    }
}

impl Operator<Msg> for PlanningOperator {
    fn on_data(&mut self, _ctx: &mut Context<Msg>, event: &StreamEvent<Msg>) -> Result<(), OperatorError> {
        match event.data() {
            Some(Msg::Pose(p)) => self.poses.put(event.timestamp, *p),
            Some(Msg::Predictions(m)) => self.predictions.put(event.timestamp, m.clone()),
            _ => {}
        }
        Ok(())
    }

    fn on_watermark(&mut self, ctx: &mut Context<Msg>) -> Result<(), OperatorError> {
        let t = ctx.timestamp();
        let preds = self.predictions.take(t);
        if let Some(ego) = self.poses.take(t) {
            let inputs = PlanningInputs {
                predictions: preds.as_ref(),
                static_obstacles: vec![],
            };
            let snapshot = EgoSnapshot {
                pose: ego.pose,
                speed: ego.speed,
                size: ego.size,
                curvature: ego.curvature,
                accel: ego.acceleration,
            };
            let planned = build_world(
                t,
                snapshot,
                &inputs,
                &self.route,
                self.lane_width,
                self.route_goal,
                self.target_speed,
                &self.config.goal,
            )
            .and_then(|w| plan(&w, &self.config, mix(self.seed, t.as_micros(), 0)));
            let msg = match planned {
                Ok(trajectory) => PlanMessage {
                    trajectory,
                    fallback: None,
                },
                Err(e) => {
                    let world = self.fallback_world(t, &ego);
                    PlanMessage {
                        trajectory: emergency_stop(&world, &self.config.limits, &self.config.profile),
                        fallback: Some(e.to_string()),
                    }
                }
            };
            ctx.send(streams::PLAN, Msg::Plan(msg));
        }
        ctx.send_watermark(streams::PLAN);
        Ok(())
    }
}

pub struct ControlOperator {
    gains: PidGains,
    vehicle: VehicleParams,
    dt: f64,
    state: ControllerState,
    poses: Inbox<EgoPose>,
    plans: Inbox<PlanMessage>,
}

impl ControlOperator {
    pub fn new(gains: PidGains, vehicle: VehicleParams, period_micros: u64) -> Self {
        Self {
            gains,
            vehicle,
            dt: period_micros as f64 * 1e-6,
            state: ControllerState::default(),
            poses: Inbox::default(),
            plans: Inbox::default(),
        }
    }
}

impl Operator<Msg> for ControlOperator {
    fn on_data(&mut self, _ctx: &mut Context<Msg>, event: &StreamEvent<Msg>) -> Result<(), OperatorError> {
        match event.data() {
            Some(Msg::Pose(p)) => self.poses.put(event.timestamp, *p),
            Some(Msg::Plan(p)) => self.plans.put(event.timestamp, p.clone()),
            _ => {}
        }
        Ok(())
    }

    fn on_watermark(&mut self, ctx: &mut Context<Msg>) -> Result<(), OperatorError> {
        let t = ctx.timestamp();
        let plan = self.plans.take(t);
        if let Some(ego) = self.poses.take(t) {
            let cmd = match plan {
                Some(p) => match pid_step(
                    &ego.pose,
                    ego.speed,
                    &p.trajectory,
                    &self.gains,
                    &self.vehicle,
                    &self.state,
                    self.dt,
                ) {
                    Ok((c, s)) => {
                        self.state = s;
                        c
                    }
                    Err(_) => EgoCommand::full_brake(),
                },
                None => EgoCommand::full_brake(),
            };
            ctx.send(streams::COMMAND, Msg::Command(cmd));
        }
        ctx.send_watermark(streams::COMMAND);
        Ok(())
    }
}
