//! Speed profiles for geometric paths.

use serde::{Deserialize, Serialize};

use super::{validate_trajectory, Limits, PlanningWorld, Trajectory, Violation, ViolationKind, Waypoint};
use crate::geometry::{three_point_curvature, Point2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileParams {
    pub accel: f64,
    pub decel: f64,
    /// Deceleration used when `decel` cannot stop in time.
    pub hard_decel: f64,
    pub lateral_accel: f64,
    /// Distance kept before a predicted collision point when stopping, m.
    pub stop_buffer: f64,
    pub max_stop_attempts: usize,
}

impl Default for ProfileParams {
    fn default() -> Self {
        Self {
            accel: 2.0,
            decel: 5.0,
            hard_decel: 7.5,
            lateral_accel: 4.0,
            stop_buffer: 1.0,
            max_stop_attempts: 12,
        }
    }
}

/// Inserts points so no gap exceeds `max_gap` and drops repeated points.
pub fn densify(points: &[Point2], max_gap: f64) -> Vec<Point2> {
    let mut out: Vec<Point2> = Vec::with_capacity(points.len());
    for &p in points {
        match out.last().copied() {
            None => out.push(p),
            Some(q) => {
                let d = q.distance(p);
                if d < 1e-9 {
                    continue;
                }
                let n = (d / max_gap).ceil().max(1.0) as usize;
                for k in 1..=n {
                    out.push(q.lerp(p, k as f64 / n as f64));
                }
            }
        }
    }
    out
}

fn headings(points: &[Point2], first: f64) -> Vec<f64> {
    let mut h: Vec<f64> = points
        .windows(2)
        .map(|w| {
            let d = w[1] - w[0];
            d.y.atan2(d.x)
        })
        .collect();
    match h.last().copied() {
        Some(l) => h.push(l),
        None => h.push(first),
    }
    h
}

/// Forward/backward pass over speed caps. Returns `None` when the start
/// speed cannot be shed in time with deceleration `dec`.
fn speed_pass(caps: &[f64], ds: &[f64], v0: f64, acc: f64, dec: f64) -> Option<Vec<f64>> {
    let n = caps.len();
    let mut v = caps.to_vec();
    v[0] = v0;
    for i in 0..n - 1 {
        v[i + 1] = v[i + 1].min((v[i] * v[i] + 2.0 * acc * ds[i]).sqrt());
    }
    for i in (0..n - 1).rev() {
        v[i] = v[i].min((v[i + 1] * v[i + 1] + 2.0 * dec * ds[i]).sqrt());
    }
    (v[0] >= v0 - 1e-9).then(|| {
        v[0] = v0;
        v
    })
}

fn build(points: &[Point2], speeds: &[f64], heading0: f64) -> Trajectory {
    let hs = headings(points, heading0);
    let mut wps = Vec::with_capacity(points.len());
    let mut t = 0.0;
    for i in 0..points.len() {
        if i > 0 {
            let ds = points[i - 1].distance(points[i]);
            let vs = speeds[i - 1] + speeds[i];
            if vs <= 1e-12 {
                break;
            }
            t += 2.0 * ds / vs;
        }
        wps.push(Waypoint {
            point: points[i],
            heading: hs[i],
            speed: speeds[i],
            time: t,
        });
        if speeds[i] <= 0.0 && i > 0 {
            break;
        }
    }
    Trajectory { waypoints: wps }
}

/// Attaches a speed profile to a path that starts at the ego, validates
/// it, and pulls a stop point back before any predicted collision until
/// the result is clean.
pub fn path_to_trajectory(
    path: &[Point2],
    world: &PlanningWorld,
    limits: &Limits,
    params: &ProfileParams,
) -> Result<Trajectory, Violation> {
    let pts = densify(path, limits.max_waypoint_gap);
    if pts.len() < 2 {
        return Err(Violation {
            index: 0,
            kind: ViolationKind::Empty,
        });
    }
    let n = pts.len();
    let ds: Vec<f64> = pts.windows(2).map(|w| w[0].distance(w[1])).collect();
    let mut cum = vec![0.0; n];
    for i in 1..n {
        cum[i] = cum[i - 1] + ds[i - 1];
    }
    let v_target = world.target_speed.min(limits.max_speed).max(0.0);
    let v0 = world.ego_speed.min(limits.max_speed);
    // Above the target, the cap ramps down from the start speed at `decel`.
    let target_cap = |i: usize| v_target.max((v0 * v0 - 2.0 * params.decel * cum[i]).max(0.0).sqrt());
    let base: Vec<f64> = (0..n)
        .map(|i| {
            let cap = target_cap(i);
            if i == 0 || i + 1 == n {
                return cap;
            }
            let k = three_point_curvature(pts[i - 1], pts[i], pts[i + 1]).abs();
            if k > 1e-9 {
                cap.min((params.lateral_accel / k).sqrt())
            } else {
                cap
            }
        })
        .collect();
    let mut stop_at: Option<usize> = None;
    let mut last = Violation {
        index: 0,
        kind: ViolationKind::Empty,
    };
    for _ in 0..=params.max_stop_attempts {
        let len = stop_at.map_or(n, |s| s + 1);
        let mut caps = base[..len].to_vec();
        if let Some(s) = stop_at {
            caps[s] = 0.0;
        }
        let speeds = speed_pass(&caps, &ds[..len - 1], v0, params.accel, params.decel)
            .or_else(|| speed_pass(&caps, &ds[..len - 1], v0, params.accel, params.hard_decel))
            .ok_or(Violation {
                index: 0,
                kind: ViolationKind::Acceleration,
            })?;
        let traj = build(&pts[..len], &speeds, world.ego.heading);
        match validate_trajectory(&traj, world, limits) {
            None => return Ok(traj),
            Some(v) if v.kind == ViolationKind::Collision && v.index > 0 => {
                last = v;
                let limit = cum[v.index] - params.stop_buffer;
                match (1..v.index).rev().find(|&j| cum[j] <= limit) {
                    Some(j) if stop_at.is_none_or(|s| j < s) => stop_at = Some(j),
                    _ => return Err(v),
                }
            }
            Some(v) => return Err(v),
        }
    }
    Err(last)
}

/// Straight-ahead braking at `hard_decel`; the fallback when no planner
/// output is usable.
pub fn emergency_stop(world: &PlanningWorld, limits: &Limits, params: &ProfileParams) -> Trajectory {
    let dir = Point2::new(world.ego.heading.cos(), world.ego.heading.sin());
    let v0 = world.ego_speed.max(0.0);
    let dec = params.hard_decel.min(limits.max_accel);
    let start = world.ego.position();
    let mut wps = vec![Waypoint {
        point: start,
        heading: world.ego.heading,
        speed: v0,
        time: 0.0,
    }];
    let dist = v0 * v0 / (2.0 * dec);
    let n = (dist / limits.max_waypoint_gap).ceil() as usize;
    for k in 1..=n {
        let s = dist * k as f64 / n as f64;
        let v = (v0 * v0 - 2.0 * dec * s).max(0.0).sqrt();
        wps.push(Waypoint {
            point: start + dir * s,
            heading: world.ego.heading,
            speed: if k == n { 0.0 } else { v },
            time: (v0 - v) / dec,
        });
    }
    if wps.len() == 1 {
        wps.push(wps[0]);
    }
    Trajectory { waypoints: wps }
}
