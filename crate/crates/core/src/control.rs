//! PID waypoint following.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point2, Pose2D};
use crate::planning::Trajectory;
use crate::worldsim::{EgoCommand, VehicleParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidTerms {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PidGains {
    pub longitudinal: PidTerms,
    pub lateral: PidTerms,
    /// Symmetric clamp on the longitudinal integral, m.
    pub longitudinal_integral_limit: f64,
    /// Symmetric clamp on the lateral integral, s.
    pub lateral_integral_limit: f64,
    pub lookahead_min: f64,
    /// Lookahead growth with speed, s.
    pub lookahead_gain: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self {
            longitudinal: PidTerms {
                kp: 0.5,
                ki: 0.05,
                kd: 0.0,
            },
            lateral: PidTerms {
                kp: 1.0,
                ki: 0.0,
                kd: 0.02,
            },
            longitudinal_integral_limit: 2.0,
            lateral_integral_limit: 1.0,
            lookahead_min: 2.0,
            lookahead_gain: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("time step must be positive")]
    NonPositiveDt,
    #[error("invalid gains: {0}")]
    InvalidGains(&'static str),
}

impl PidGains {
    pub fn validate(&self) -> Result<(), ControlError> {
        let terms = [self.longitudinal, self.lateral];
        if terms
            .iter()
            .any(|t| !(t.kp >= 0.0 && t.ki >= 0.0 && t.kd >= 0.0) || !(t.kp + t.ki + t.kd).is_finite())
        {
            return Err(ControlError::InvalidGains("gains must be finite and non-negative"));
        }
        for l in [self.longitudinal_integral_limit, self.lateral_integral_limit] {
            if !(l.is_finite() && l >= 0.0) {
                return Err(ControlError::InvalidGains("integral limits must be finite and non-negative"));
            }
        }
        if !(self.lookahead_min > 0.0 && self.lookahead_gain >= 0.0 && self.lookahead_gain.is_finite()) {
            return Err(ControlError::InvalidGains("lookahead must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub lon_integral: f64,
    pub lon_prev_error: Option<f64>,
    pub lat_integral: f64,
    pub lat_prev_error: Option<f64>,
}

fn nearest_index(traj: &Trajectory, p: Point2) -> usize {
    traj.waypoints
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.point.distance(p).total_cmp(&b.1.point.distance(p)))
        .map_or(0, |(i, _)| i)
}

/// First waypoint at or after `from` that is at least `lookahead` away;
/// past the end, the last waypoint is extended along its heading.
fn lookahead_point(traj: &Trajectory, from: usize, ego: Point2, lookahead: f64) -> (Point2, f64) {
    if let Some(w) = traj.waypoints[from..].iter().find(|w| w.point.distance(ego) >= lookahead) {
        return (w.point, w.speed.max(0.0));
    }
    let last = traj.waypoints.last().expect("non-empty");
    let dir = Point2::new(last.heading.cos(), last.heading.sin());
    let along = (ego - last.point).dot(dir);
    let lateral = (ego - last.point).cross(dir).abs();
    let ahead = (lookahead * lookahead - lateral * lateral).max(0.0).sqrt();
    (last.point + dir * (along + ahead).max(0.0), last.speed.max(0.0))
}

fn pid(terms: &PidTerms, error: f64, integral: &mut f64, prev: &mut Option<f64>, limit: f64, dt: f64) -> f64 {
    *integral = (*integral + error * dt).clamp(-limit, limit);
    let deriv = prev.map_or(0.0, |p| (error - p) / dt);
    *prev = Some(error);
    terms.kp * error + terms.ki * *integral + terms.kd * deriv
}

/// One controller update. Returns the clamped command and the new state.
pub fn pid_step(
    ego: &Pose2D,
    speed: f64,
    traj: &Trajectory,
    gains: &PidGains,
    vehicle: &VehicleParams,
    state: &ControllerState,
    dt: f64,
) -> Result<(EgoCommand, ControllerState), ControlError> {
    if traj.waypoints.is_empty() {
        return Err(ControlError::EmptyTrajectory);
    }
    if !(dt > 0.0) {
        return Err(ControlError::NonPositiveDt);
    }
    let mut st = *state;
    let pos = ego.position();
    let near = nearest_index(traj, pos);
    let target = traj.waypoints[near].speed.max(0.0);
    let lookahead = gains.lookahead_min.max(gains.lookahead_gain * speed);
    let (ahead, ahead_speed) = lookahead_point(traj, near, pos, lookahead);

    // Acceleration the plan asks for between here and the lookahead point.
    let span = ahead.distance(traj.waypoints[near].point);
    let a_plan = if span > 1e-6 {
        (ahead_speed * ahead_speed - target * target) / (2.0 * span)
    } else {
        0.0
    };
    let a_ff = a_plan + vehicle.drag * target;
    let feedforward = if a_ff >= 0.0 {
        a_ff / vehicle.max_accel
    } else {
        a_ff / vehicle.max_brake
    };
    let err_v = target - speed;
    let u = feedforward
        + pid(
            &gains.longitudinal,
            err_v,
            &mut st.lon_integral,
            &mut st.lon_prev_error,
            gains.longitudinal_integral_limit,
            dt,
        );
    let (throttle, brake) = if u >= 0.0 { (u, 0.0) } else { (0.0, -u) };

    let local = ego.to_local(ahead);
    // Pure-pursuit wheel angle toward the lookahead point as a fraction of
    // full lock, left positive.
    let alpha = if local.norm() > 1e-9 { local.y.atan2(local.x) } else { 0.0 };
    let ld = local.norm().max(1e-3);
    let pursuit = (2.0 * vehicle.wheelbase * alpha.sin() / ld).atan() / vehicle.max_steer;
    let turn_left = pid(
        &gains.lateral,
        pursuit,
        &mut st.lat_integral,
        &mut st.lat_prev_error,
        gains.lateral_integral_limit,
        dt,
    );
    let cmd = EgoCommand {
        steer: -turn_left,
        throttle,
        brake,
    }
    .clamped();
    let cmd = EgoCommand {
        steer: if cmd.steer.is_finite() { cmd.steer } else { 0.0 },
        throttle: if cmd.throttle.is_finite() { cmd.throttle } else { 0.0 },
        brake: if cmd.brake.is_finite() { cmd.brake } else { 1.0 },
    };
    Ok((cmd, st))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataflow::Timestamp;
    use crate::geometry::Polyline;
    use crate::planning::Waypoint;
    use crate::worldsim::{step, AgentKind, AgentState, Road, WorldState};

    fn line(speed: f64) -> Trajectory {
        Trajectory {
            waypoints: (0..2000)
                .map(|i| Waypoint {
                    point: Point2::new(i as f64 * 0.5 - 10.0, 0.0),
                    heading: 0.0,
                    speed,
                    time: 0.0,
                })
                .collect(),
        }
    }

    fn cmd(pose: Pose2D, speed: f64, traj: &Trajectory) -> EgoCommand {
        pid_step(
            &pose,
            speed,
            traj,
            &PidGains::default(),
            &VehicleParams::default(),
            &ControllerState::default(),
            0.005,
        )
        .unwrap()
        .0
    }

    #[test]
    fn on_track_at_speed_cancels_drag() {
        let c = cmd(Pose2D::new(0.0, 0.0, 0.0), 10.0, &line(10.0));
        let vp = VehicleParams::default();
        assert_eq!(c.steer, 0.0);
        assert!((c.throttle - vp.drag * 10.0 / vp.max_accel).abs() < 1e-6);
        assert_eq!(c.brake, 0.0);
    }

    #[test]
    fn left_offset_steers_right() {
        assert!(cmd(Pose2D::new(0.0, 1.0, 0.0), 10.0, &line(10.0)).steer > 0.0);
        assert!(cmd(Pose2D::new(0.0, -1.0, 0.0), 10.0, &line(10.0)).steer < 0.0);
    }

    #[test]
    fn zero_target_brakes() {
        let c = cmd(Pose2D::new(0.0, 0.0, 0.0), 8.0, &line(0.0));
        assert!(c.brake > 0.0);
        assert_eq!(c.throttle, 0.0);
    }

    #[test]
    fn errors() {
        let empty = Trajectory { waypoints: vec![] };
        let r = pid_step(
            &Pose2D::new(0.0, 0.0, 0.0),
            0.0,
            &empty,
            &PidGains::default(),
            &VehicleParams::default(),
            &ControllerState::default(),
            0.1,
        );
        assert_eq!(r, Err(ControlError::EmptyTrajectory));
        let r = pid_step(
            &Pose2D::new(0.0, 0.0, 0.0),
            0.0,
            &line(1.0),
            &PidGains::default(),
            &VehicleParams::default(),
            &ControllerState::default(),
            0.0,
        );
        assert_eq!(r, Err(ControlError::NonPositiveDt));
    }

    fn world(y: f64, speed: f64) -> WorldState {
        WorldState {
            sim_time: Timestamp::ZERO,
            agents: vec![AgentState {
                id: 0,
                kind: AgentKind::Ego,
                pose: Pose2D::new(0.0, y, 0.0),
                speed,
                length: 4.5,
                width: 2.0,
                script: vec![],
            }],
            road: Road {
                centerline: Polyline::straight(Point2::new(-10.0, 0.0), Point2::new(1000.0, 0.0)).unwrap(),
                lane_width: 3.5,
            },
            vehicle: VehicleParams::default(),
        }
    }

    fn closed_loop(mut w: WorldState, target: f64, seconds: f64) -> Vec<(f64, f64)> {
        let traj = line(target);
        let mut st = ControllerState::default();
        let mut out = vec![];
        for _ in 0..(seconds / 0.005) as usize {
            let e = w.ego().clone();
            let (c, s) = pid_step(&e.pose, e.speed, &traj, &PidGains::default(), &w.vehicle, &st, 0.005).unwrap();
            st = s;
            w = step(&w, 5000, &c).unwrap();
            out.push((w.ego().speed, w.ego().pose.y));
        }
        out
    }

    #[test]
    fn speed_converges_from_rest() {
        let trace = closed_loop(world(0.0, 0.0), 10.0, 10.0);
        let (v, _) = *trace.last().unwrap();
        assert!((v - 10.0).abs() <= 0.5, "{v}");
    }

    #[test]
    fn cross_track_decays() {
        let trace = closed_loop(world(1.0, 10.0), 10.0, 10.0);
        let (_, y) = *trace.last().unwrap();
        assert!(y.abs() < 0.1, "{y}");
        assert!(trace.iter().all(|(_, y)| y.abs() <= 1.5));
    }
}
