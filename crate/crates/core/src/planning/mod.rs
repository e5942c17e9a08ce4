//! World aggregation, trajectory validation and three motion planners.

mod fot;
mod hybrid;
mod profile;
mod rrt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fot::{fot_candidates, plan_fot, plan_fot_best, FotCandidate, FotParams, FotWeights};
pub use hybrid::{plan_hybrid_astar, HybridParams, HybridStats};
pub use profile::{emergency_stop, path_to_trajectory, ProfileParams};
pub use rrt::{plan_rrt_star, RrtParams, RrtStats};

use crate::dataflow::Timestamp;
use crate::geometry::{point_segment_distance, three_point_curvature, Aabb, OrientedRect, Point2, Polyline, Pose2D};
use crate::prediction::ObstaclePredictionMessage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub point: Point2,
    pub heading: f64,
    pub speed: f64,
    /// Seconds after the planning timestamp.
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub waypoints: Vec<Waypoint>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn path_length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| w[0].point.distance(w[1].point)).sum()
    }
}

/// An obstacle that moves along a predicted path. Positions between
/// samples are interpolated linearly; beyond the last sample the obstacle
/// holds its final position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicObstacle {
    pub id: u64,
    /// Extents along x and y, m.
    pub size: (f64, f64),
    pub position: Point2,
    /// (seconds after the planning timestamp, center).
    pub predicted: Vec<(f64, Point2)>,
}

impl DynamicObstacle {
    pub fn position_at(&self, t: f64) -> Point2 {
        let mut prev = (0.0, self.position);
        for &(ti, p) in &self.predicted {
            if t <= ti {
                let span = ti - prev.0;
                if span <= 0.0 {
                    return p;
                }
                return prev.1.lerp(p, ((t - prev.0) / span).clamp(0.0, 1.0));
            }
            prev = (ti, p);
        }
        prev.1
    }

    pub fn footprint_at(&self, t: f64) -> Aabb {
        Aabb::from_center(self.position_at(t), self.size.0, self.size.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanningWorld {
    pub timestamp: Timestamp,
    pub ego: Pose2D,
    pub ego_speed: f64,
    /// Ego footprint (length, width), m.
    pub ego_size: (f64, f64),
    /// Current path curvature of the ego, 1/m, left positive.
    pub ego_curvature: f64,
    /// Current longitudinal acceleration of the ego, m/s^2.
    pub ego_accel: f64,
    pub static_obstacles: Vec<OrientedRect>,
    pub dynamic_obstacles: Vec<DynamicObstacle>,
    pub route: Polyline,
    pub lane_width: f64,
    pub goal: Point2,
    pub goal_tolerance: f64,
    pub target_speed: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanningError {
    #[error("planning inputs incomplete: {0}")]
    IncompleteInputs(String),
    #[error("every candidate trajectory was infeasible")]
    NoFeasibleTrajectory,
    #[error("no path found within {0} iterations")]
    NoPathWithinBudget(usize),
    #[error("search exhausted without reaching the goal")]
    NoPath,
    #[error("ego lies outside the route's Frenet domain")]
    OffRoute,
}

/// Inputs a planning snapshot is assembled from.
#[derive(Debug, Clone, Default)]
pub struct PlanningInputs<'a> {
    pub predictions: Option<&'a ObstaclePredictionMessage>,
    pub static_obstacles: Vec<OrientedRect>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoSnapshot {
    pub pose: Pose2D,
    pub speed: f64,
    pub size: (f64, f64),
    pub curvature: f64,
    pub accel: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GoalParams {
    /// Local goal distance ahead of the ego along the route: the larger of
    /// `min_distance` and `horizon` seconds at the current speed.
    pub min_distance: f64,
    pub horizon: f64,
    pub tolerance: f64,
}

impl Default for GoalParams {
    fn default() -> Self {
        Self {
            min_distance: 20.0,
            horizon: 2.0,
            tolerance: 1.0,
        }
    }
}

/// Joins a prediction message with the ego state into one snapshot. A
/// missing prediction stream yields no dynamic obstacles.
#[allow(clippy::too_many_arguments)]
pub fn build_world(
    timestamp: Timestamp,
    ego: EgoSnapshot,
    inputs: &PlanningInputs<'_>,
    route: &Polyline,
    lane_width: f64,
    route_goal: Point2,
    target_speed: f64,
    goal: &GoalParams,
) -> Result<PlanningWorld, PlanningError> {
    if let Some(p) = inputs.predictions {
        if p.timestamp != timestamp {
            return Err(PlanningError::IncompleteInputs(format!(
                "predictions at {} for snapshot at {}",
                p.timestamp, timestamp
            )));
        }
    }
    let t0 = timestamp.as_micros() as f64;
    let dynamic_obstacles = inputs
        .predictions
        .map(|m| {
            m.obstacles
                .iter()
                .map(|o| DynamicObstacle {
                    id: o.track_id,
                    size: o.size,
                    position: o.past.last().map(|p| p.1).unwrap_or_default(),
                    predicted: o.predicted.iter().map(|(t, p)| ((t.as_micros() as f64 - t0) * 1e-6, *p)).collect(),
                })
                .collect()
        })
        .unwrap_or_default();
    let (s0, _) = route.to_frenet(ego.pose.position()).map_err(|_| PlanningError::OffRoute)?;
    let (s_goal, _) = route.to_frenet(route_goal).map_err(|_| PlanningError::OffRoute)?;
    let ahead = goal.min_distance.max(goal.horizon * ego.speed);
    let s = (s0 + ahead).min(s_goal.max(s0 + goal.tolerance)).min(route.length());
    Ok(PlanningWorld {
        timestamp,
        ego: ego.pose,
        ego_speed: ego.speed,
        ego_size: ego.size,
        ego_curvature: ego.curvature,
        ego_accel: ego.accel,
        static_obstacles: inputs.static_obstacles.clone(),
        dynamic_obstacles,
        route: route.clone(),
        lane_width,
        goal: route.point_at(s),
        goal_tolerance: goal.tolerance,
        target_speed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Limits {
    pub max_speed: f64,
    pub max_accel: f64,
    pub max_curvature: f64,
    pub max_waypoint_gap: f64,
    /// Extra clearance on top of half the ego width.
    pub safety_margin: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_speed: 45.0,
            max_accel: 8.0,
            max_curvature: 0.25,
            max_waypoint_gap: 1.0,
            safety_margin: 0.5,
        }
    }
}

/// Three equal discs along the heading that cover the ego rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Footprint {
    /// Distance of the outer disc centers from the ego center, m.
    pub offset: f64,
    /// Disc radius plus the safety margin, m.
    pub inflation: f64,
}

impl Footprint {
    /// Disc centers for a pose at `p` facing `heading`.
    pub fn centers(&self, p: Point2, heading: f64) -> [Point2; 3] {
        let d = Point2::new(heading.cos(), heading.sin()) * self.offset;
        [p - d, p, p + d]
    }
}

impl Limits {
    pub fn footprint(&self, world: &PlanningWorld) -> Footprint {
        let (length, width) = world.ego_size;
        Footprint {
            offset: length / 3.0,
            inflation: (0.5 * width).hypot(length / 6.0) + self.safety_margin,
        }
    }

    /// Clearance the footprint needs ahead of its center when driving
    /// straight at an obstacle.
    pub fn front_reach(&self, world: &PlanningWorld) -> f64 {
        let f = self.footprint(world);
        f.offset + f.inflation
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ViolationKind {
    Empty,
    Collision,
    Speed,
    Curvature,
    Acceleration,
    Spacing,
    Time,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub index: usize,
    pub kind: ViolationKind,
}

const COLLISION_SUBSTEP: f64 = 0.25;

fn disc_collides(world: &PlanningWorld, c: Point2, t: f64, inflation: f64) -> bool {
    world.static_obstacles.iter().any(|r| r.distance_to(c) < inflation)
        || world.dynamic_obstacles.iter().any(|o| {
            let b = o.footprint_at(t);
            let dx = (b.x_min - c.x).max(c.x - b.x_max).max(0.0);
            let dy = (b.y_min - c.y).max(c.y - b.y_max).max(0.0);
            dx.hypot(dy) < inflation
        })
}

/// True when the ego footprint at `p`, facing `heading`, comes within the
/// safety margin of an obstacle at time `t`.
pub fn point_collides(world: &PlanningWorld, p: Point2, heading: f64, t: f64, fp: &Footprint) -> bool {
    fp.centers(p, heading).iter().any(|c| disc_collides(world, *c, t, fp.inflation))
}

/// Smallest distance between the footprint discs and any obstacle at
/// time `t`, minus the inflation. Negative when colliding.
pub fn footprint_gap(world: &PlanningWorld, p: Point2, heading: f64, t: f64, fp: &Footprint) -> f64 {
    let mut best = f64::INFINITY;
    for c in fp.centers(p, heading) {
        for r in &world.static_obstacles {
            best = best.min(r.distance_to(c));
        }
        for o in &world.dynamic_obstacles {
            let b = o.footprint_at(t);
            let dx = (b.x_min - c.x).max(c.x - b.x_max).max(0.0);
            let dy = (b.y_min - c.y).max(c.y - b.y_max).max(0.0);
            best = best.min(dx.hypot(dy));
        }
    }
    best - fp.inflation
}

/// Checks a segment by sampling at most `COLLISION_SUBSTEP` apart, with
/// time interpolated between the endpoint times. The footprint faces along
/// the segment, or along `heading` when the segment has no length.
pub fn segment_collides(world: &PlanningWorld, a: (Point2, f64), b: (Point2, f64), heading: f64, fp: &Footprint) -> bool {
    let d = b.0 - a.0;
    let h = if d.norm() > 1e-9 { d.y.atan2(d.x) } else { heading };
    let n = (a.0.distance(b.0) / COLLISION_SUBSTEP).ceil().max(1.0) as usize;
    (1..=n).any(|k| {
        let u = k as f64 / n as f64;
        point_collides(world, a.0.lerp(b.0, u), h, a.1 + (b.1 - a.1) * u, fp)
    })
}

/// Distance from `p` to the closest static obstacle at any time, and to
/// every dynamic obstacle's predicted path.
pub fn clearance(world: &PlanningWorld, p: Point2) -> f64 {
    let s = world.static_obstacles.iter().map(|r| r.distance_to(p));
    let d = world.dynamic_obstacles.iter().map(|o| {
        let pts: Vec<Point2> = std::iter::once(o.position).chain(o.predicted.iter().map(|x| x.1)).collect();
        let half = 0.5 * o.size.0.max(o.size.1);
        let core = if pts.len() == 1 {
            pts[0].distance(p)
        } else {
            pts.windows(2)
                .map(|w| point_segment_distance(p, w[0], w[1]))
                .fold(f64::INFINITY, f64::min)
        };
        (core - half).max(0.0)
    });
    s.chain(d).fold(f64::INFINITY, f64::min)
}

/// First violation of `traj` against `world` and `limits`, scanning
/// waypoints in order.
pub fn validate_trajectory(traj: &Trajectory, world: &PlanningWorld, limits: &Limits) -> Option<Violation> {
    let w = &traj.waypoints;
    if w.is_empty() {
        return Some(Violation {
            index: 0,
            kind: ViolationKind::Empty,
        });
    }
    let fp = limits.footprint(world);
    let fail = |index, kind| Some(Violation { index, kind });
    for i in 0..w.len() {
        let cur = &w[i];
        let collided = if i == 0 {
            point_collides(world, cur.point, cur.heading, cur.time, &fp)
        } else {
            segment_collides(world, (w[i - 1].point, w[i - 1].time), (cur.point, cur.time), cur.heading, &fp)
        };
        if collided {
            return fail(i, ViolationKind::Collision);
        }
        if !(cur.speed >= 0.0 && cur.speed <= limits.max_speed + 1e-9) {
            return fail(i, ViolationKind::Speed);
        }
        if i >= 1 && i + 1 < w.len() {
            let k = three_point_curvature(w[i - 1].point, cur.point, w[i + 1].point);
            if k.abs() > limits.max_curvature + 1e-9 {
                return fail(i, ViolationKind::Curvature);
            }
        }
        if i >= 1 {
            let prev = &w[i - 1];
            let dt = cur.time - prev.time;
            if !(dt >= 0.0) {
                return fail(i, ViolationKind::Time);
            }
            let dv = (cur.speed - prev.speed).abs();
            if dv > 1e-9 && (dt <= 0.0 || dv / dt > limits.max_accel + 1e-9) {
                return fail(i, ViolationKind::Acceleration);
            }
            if prev.point.distance(cur.point) > limits.max_waypoint_gap + 1e-9 {
                return fail(i, ViolationKind::Spacing);
            }
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlannerVariant {
    Fot(FotParams),
    RrtStar(RrtParams),
    HybridAStar(HybridParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerConfig {
    pub planner: PlannerVariant,
    #[serde(default)]
    pub limits: Limits,
    #[serde(default)]
    pub profile: ProfileParams,
    #[serde(default)]
    pub goal: GoalParams,
}

/// A named planner configuration together with the P99 runtime its
/// configuration is charged in emulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerPreset {
    pub name: String,
    pub config: PlannerConfig,
    pub p99_runtime_micros: u64,
}

pub const PRESET_NAMES: [&str; 6] = ["fot-fast", "fot-slow", "rrt-fast", "rrt-slow", "hybrid-fast", "hybrid-slow"];

pub fn preset(name: &str) -> Option<PlannerPreset> {
    let cfg = |planner| PlannerConfig {
        planner,
        limits: Limits::default(),
        profile: ProfileParams::default(),
        goal: GoalParams::default(),
    };
    let (planner, micros) = match name {
        "fot-fast" => (PlannerVariant::Fot(FotParams::with_discretization(0.5, 0.3)), 30_000),
        "fot-slow" => (PlannerVariant::Fot(FotParams::with_discretization(0.1, 0.1)), 550_000),
        "rrt-fast" => (PlannerVariant::RrtStar(RrtParams::with_step(0.5)), 15_000),
        "rrt-slow" => (PlannerVariant::RrtStar(RrtParams::with_step(0.1)), 76_000),
        "hybrid-fast" => (PlannerVariant::HybridAStar(HybridParams::with_discretization(6.0, 0.75)), 25_000),
        "hybrid-slow" => (PlannerVariant::HybridAStar(HybridParams::with_discretization(3.0, 0.25)), 760_000),
        _ => return None,
    };
    Some(PlannerPreset {
        name: name.to_string(),
        config: cfg(planner),
        p99_runtime_micros: micros,
    })
}

/// Runs the configured planner. `seed` only affects sampling planners.
pub fn plan(world: &PlanningWorld, config: &PlannerConfig, seed: u64) -> Result<Trajectory, PlanningError> {
    match &config.planner {
        PlannerVariant::Fot(p) => plan_fot(world, p, &config.limits),
        PlannerVariant::RrtStar(p) => plan_rrt_star(world, p, &config.limits, &config.profile, seed).map(|r| r.0),
        PlannerVariant::HybridAStar(p) => plan_hybrid_astar(world, p, &config.limits, &config.profile).map(|r| r.0),
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    pub fn straight_world(speed: f64) -> PlanningWorld {
        PlanningWorld {
            timestamp: Timestamp::ZERO,
            ego: Pose2D::new(0.0, 0.0, 0.0),
            ego_speed: speed,
            ego_size: (4.5, 2.0),
            ego_curvature: 0.0,
            ego_accel: 0.0,
            static_obstacles: vec![],
            dynamic_obstacles: vec![],
            route: Polyline::straight(Point2::new(-10.0, 0.0), Point2::new(300.0, 0.0)).unwrap(),
            lane_width: 3.5,
            goal: Point2::new(30.0, 0.0),
            goal_tolerance: 1.0,
            target_speed: speed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::straight_world;
    use super::*;

    fn wp(x: f64, speed: f64, time: f64) -> Waypoint {
        Waypoint {
            point: Point2::new(x, 0.0),
            heading: 0.0,
            speed,
            time,
        }
    }

    #[test]
    fn stationary_trajectory_is_clean() {
        let t = Trajectory {
            waypoints: vec![wp(0.0, 0.0, 0.0), wp(0.0, 0.0, 1.0)],
        };
        assert_eq!(validate_trajectory(&t, &straight_world(0.0), &Limits::default()), None);
    }

    #[test]
    fn waypoint_inside_obstacle() {
        let mut w = straight_world(1.0);
        w.static_obstacles.push(OrientedRect::axis_aligned(3.8, -1.0, 4.2, 1.0));
        let t = Trajectory {
            waypoints: vec![wp(0.0, 1.0, 0.0), wp(1.0, 1.0, 1.0), wp(2.0, 1.0, 2.0)],
        };
        // front disc: 1.5 m ahead, radius 1.25 + 0.5 margin; at x = 1 it
        // sits 1.3 m from the block
        assert_eq!(
            validate_trajectory(&t, &w, &Limits::default()),
            Some(Violation {
                index: 1,
                kind: ViolationKind::Collision
            })
        );
    }

    #[test]
    fn acceleration_from_finite_difference() {
        // 0 -> 10 m/s over 0.1 s is 100 m/s²
        let t = Trajectory {
            waypoints: vec![wp(0.0, 0.0, 0.0), wp(0.5, 10.0, 0.1)],
        };
        let limits = Limits {
            max_accel: 3.0,
            ..Limits::default()
        };
        assert_eq!(
            validate_trajectory(&t, &straight_world(0.0), &limits),
            Some(Violation {
                index: 1,
                kind: ViolationKind::Acceleration
            })
        );
    }

    #[test]
    fn dynamic_obstacle_interpolation() {
        let o = DynamicObstacle {
            id: 1,
            size: (1.0, 1.0),
            position: Point2::new(0.0, 0.0),
            predicted: vec![(1.0, Point2::new(2.0, 0.0)), (2.0, Point2::new(4.0, 0.0))],
        };
        assert_eq!(o.position_at(0.5), Point2::new(1.0, 0.0));
        assert_eq!(o.position_at(1.5), Point2::new(3.0, 0.0));
        assert_eq!(o.position_at(9.0), Point2::new(4.0, 0.0));
    }

    #[test]
    fn build_world_passes_predictions_through() {
        use crate::prediction::{ObstaclePrediction, ObstaclePredictionMessage};
        use crate::worldsim::AgentKind;
        let t = Timestamp::from_micros(1_000_000);
        let msg = ObstaclePredictionMessage {
            timestamp: t,
            obstacles: (0..2)
                .map(|i| ObstaclePrediction {
                    track_id: i,
                    label: AgentKind::Vehicle,
                    size: (4.0, 2.0),
                    past: vec![(t, Point2::new(10.0 * i as f64, 5.0))],
                    predicted: vec![(Timestamp::from_micros(1_500_000), Point2::new(10.0 * i as f64 + 1.0, 5.0))],
                })
                .collect(),
        };
        let route = Polyline::straight(Point2::new(0.0, 0.0), Point2::new(100.0, 0.0)).unwrap();
        let ego = EgoSnapshot {
            pose: Pose2D::new(5.0, 0.0, 0.0),
            speed: 5.0,
            size: (4.5, 2.0),
            curvature: 0.0,
            accel: 0.0,
        };
        let inputs = PlanningInputs {
            predictions: Some(&msg),
            static_obstacles: vec![],
        };
        let w = build_world(t, ego, &inputs, &route, 3.5, Point2::new(90.0, 0.0), 5.0, &GoalParams::default()).unwrap();
        assert_eq!(w.dynamic_obstacles.len(), 2);
        assert_eq!(w.dynamic_obstacles[1].predicted, vec![(0.5, Point2::new(11.0, 5.0))]);
        assert_eq!(w.goal, Point2::new(25.0, 0.0));
        let none = build_world(
            t,
            ego,
            &PlanningInputs::default(),
            &route,
            3.5,
            Point2::new(90.0, 0.0),
            5.0,
            &GoalParams::default(),
        )
        .unwrap();
        assert!(none.dynamic_obstacles.is_empty());
        let stale = ObstaclePredictionMessage {
            timestamp: Timestamp::ZERO,
            obstacles: vec![],
        };
        let inputs = PlanningInputs {
            predictions: Some(&stale),
            static_obstacles: vec![],
        };
        assert!(matches!(
            build_world(t, ego, &inputs, &route, 3.5, Point2::new(90.0, 0.0), 5.0, &GoalParams::default()),
            Err(PlanningError::IncompleteInputs(_))
        ));
    }

    #[test]
    fn presets_exist() {
        for n in PRESET_NAMES {
            let p = preset(n).unwrap();
            let json = serde_json::to_string(&p.config).unwrap();
            let back: PlannerConfig = serde_json::from_str(&json).unwrap();
            assert_eq!(back, p.config);
        }
        assert!(preset("nope").is_none());
    }
}
