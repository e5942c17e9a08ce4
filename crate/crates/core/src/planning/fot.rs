//! Frenet optimal trajectory planner: quintic lateral and quartic
//! longitudinal candidates, scored and validated.

use serde::{Deserialize, Serialize};

use super::{footprint_gap, validate_trajectory, Limits, PlanningError, PlanningWorld, Trajectory, Waypoint};
use crate::geometry::{normalize_angle, QuarticPoly, QuinticPoly};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FotWeights {
    pub jerk: f64,
    pub time: f64,
    pub offset: f64,
    pub speed: f64,
    /// Weight of the proximity penalty, which grows quadratically as the
    /// smallest footprint gap along a candidate shrinks below `clearance`.
    pub proximity: f64,
    /// Gap, m, beyond which obstacles cost nothing.
    pub clearance: f64,
}

impl Default for FotWeights {
    fn default() -> Self {
        Self {
            jerk: 0.1,
            time: 0.1,
            offset: 1.0,
            speed: 1.0,
            proximity: 50.0,
            clearance: 0.7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FotParams {
    /// Spacing of terminal lateral offsets, m.
    pub lateral_step: f64,
    /// Sampling period along each candidate and spacing of terminal
    /// times, s.
    pub time_step: f64,
    pub lateral_min: f64,
    pub lateral_max: f64,
    pub min_t: f64,
    pub max_t: f64,
    /// Terminal speeds as fractions of the target speed.
    pub speed_fractions: Vec<f64>,
    #[serde(default)]
    pub weights: FotWeights,
}

impl FotParams {
    pub fn with_discretization(lateral_step: f64, time_step: f64) -> Self {
        Self {
            lateral_step,
            time_step,
            lateral_min: -3.5,
            lateral_max: 3.5,
            min_t: 2.0,
            max_t: 5.0,
            speed_fractions: vec![1.0, 0.75, 0.5, 0.25, 0.0],
            weights: FotWeights::default(),
        }
    }

    pub fn lateral_grid(&self) -> Vec<f64> {
        let n = ((self.lateral_max - self.lateral_min) / self.lateral_step + 1e-9).floor() as usize;
        (0..=n)
            .map(|k| ((self.lateral_min + k as f64 * self.lateral_step) * 1e9).round() / 1e9)
            .collect()
    }

    pub fn time_grid(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut k = 0;
        loop {
            let t = self.min_t + k as f64 * self.time_step;
            if t >= self.max_t - 1e-9 {
                break;
            }
            out.push(t);
            k += 1;
        }
        out
    }
}

/// One candidate's terminal conditions, cost and (when checked) validity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FotCandidate {
    pub lateral: f64,
    pub duration: f64,
    pub speed: f64,
    pub cost: f64,
    pub valid: bool,
}

struct Start {
    s: f64,
    ds: f64,
    dds: f64,
    d: f64,
    dd: f64,
    ddd: f64,
}

fn start_state(world: &PlanningWorld) -> Result<Start, PlanningError> {
    let (s, d) = world.route.to_frenet(world.ego.position()).map_err(|_| PlanningError::OffRoute)?;
    let phi = normalize_angle(world.ego.heading - world.route.heading_at(s));
    // Route curvature by central difference of the heading.
    let h = 1.0;
    let route_k = normalize_angle(world.route.heading_at(s + h) - world.route.heading_at((s - h).max(0.0))) / (s + h - (s - h).max(0.0));
    let v = world.ego_speed;
    Ok(Start {
        s,
        ds: v * phi.cos(),
        dds: world.ego_accel,
        d,
        dd: v * phi.sin(),
        ddd: v * v * (world.ego_curvature - route_k) * phi.cos(),
    })
}

fn polys(st: &Start, lateral: f64, duration: f64, speed: f64) -> Option<(QuinticPoly, QuarticPoly)> {
    let lat = QuinticPoly::new((st.d, st.dd, st.ddd), (lateral, 0.0, 0.0), duration).ok()?;
    let lon = QuarticPoly::new((st.s, st.ds, st.dds), (speed, 0.0), duration).ok()?;
    Some((lat, lon))
}

fn sample_times(duration: f64, step: f64) -> Vec<f64> {
    let mut ts: Vec<f64> = (0..).map(|k| k as f64 * step).take_while(|t| *t < duration - 1e-9).collect();
    ts.push(duration);
    ts
}

fn cost(st: &Start, p: &FotParams, target: f64, lateral: f64, duration: f64, speed: f64) -> Option<f64> {
    let (lat, lon) = polys(st, lateral, duration, speed)?;
    let jerk: f64 = sample_times(duration, p.time_step)
        .iter()
        .map(|&t| lat.d3(t).powi(2) + lon.d3(t).powi(2))
        .sum::<f64>()
        * p.time_step;
    let w = &p.weights;
    Some(w.jerk * jerk + w.time * duration + w.offset * lateral * lateral + w.speed * (target - speed).powi(2))
}

fn proximity_cost(world: &PlanningWorld, p: &FotParams, limits: &Limits, traj: &Trajectory) -> f64 {
    let w = &p.weights;
    if w.proximity == 0.0 || !(w.clearance > 0.0) {
        return 0.0;
    }
    let fp = limits.footprint(world);
    let gap = traj
        .waypoints
        .iter()
        .map(|wp| footprint_gap(world, wp.point, wp.heading, wp.time, &fp))
        .fold(f64::INFINITY, f64::min);
    w.proximity * (1.0 - gap.max(0.0) / w.clearance).max(0.0).powi(2)
}

/// Cartesian trajectory of one candidate. Each `time_step` interval is
/// subdivided so waypoints stay within the limits' spacing.
fn realize(
    world: &PlanningWorld,
    st: &Start,
    p: &FotParams,
    limits: &Limits,
    lateral: f64,
    duration: f64,
    speed: f64,
) -> Option<Trajectory> {
    let (lat, lon) = polys(st, lateral, duration, speed)?;
    let coarse = sample_times(duration, p.time_step);
    let mut times = vec![0.0];
    for w in coarse.windows(2) {
        let (a, b) = (w[0], w[1]);
        let dist = (lon.eval(b) - lon.eval(a)).hypot(lat.eval(b) - lat.eval(a));
        let n = (dist / (0.9 * limits.max_waypoint_gap)).ceil().max(1.0) as usize;
        times.extend((1..=n).map(|k| a + (b - a) * k as f64 / n as f64));
    }
    let mut wps: Vec<Waypoint> = Vec::with_capacity(times.len());
    for &t in &times {
        let point = world.route.from_frenet(lon.eval(t), lat.eval(t)).ok()?;
        let v = lon.d1(t).hypot(lat.d1(t));
        wps.push(Waypoint {
            point,
            heading: 0.0,
            speed: if v < 1e-9 { 0.0 } else { v },
            time: t,
        });
    }
    for i in 0..wps.len() {
        let (a, b) = if i + 1 < wps.len() { (i, i + 1) } else { (i.saturating_sub(1), i) };
        let d = wps[b].point - wps[a].point;
        wps[i].heading = if d.norm() > 1e-9 {
            d.y.atan2(d.x)
        } else if i > 0 {
            wps[i - 1].heading
        } else {
            world.ego.heading
        };
    }
    // A stopping candidate ends where it comes to rest.
    if let Some(k) = wps.iter().skip(1).position(|w| w.speed == 0.0) {
        wps.truncate(k + 2);
    }
    Some(Trajectory { waypoints: wps })
}

/// Every candidate with its cost and validity. Realizable candidates
/// carry the full cost including the proximity penalty.
pub fn fot_candidates(world: &PlanningWorld, p: &FotParams, limits: &Limits) -> Result<Vec<FotCandidate>, PlanningError> {
    let st = start_state(world)?;
    let mut out = Vec::new();
    for &lateral in &p.lateral_grid() {
        for &duration in &p.time_grid() {
            for &f in &p.speed_fractions {
                let speed = world.target_speed * f;
                let Some(base) = cost(&st, p, world.target_speed, lateral, duration, speed) else {
                    continue;
                };
                let (c, valid) = match realize(world, &st, p, limits, lateral, duration, speed) {
                    Some(t) => (
                        base + proximity_cost(world, p, limits, &t),
                        validate_trajectory(&t, world, limits).is_none(),
                    ),
                    None => (base, false),
                };
                out.push(FotCandidate {
                    lateral,
                    duration,
                    speed,
                    cost: c,
                    valid,
                });
            }
        }
    }
    Ok(out)
}

/// The cheapest valid candidate and its trajectory. Candidates are visited
/// in order of their obstacle-free cost, which bounds the full cost from
/// below, so the scan stops once no remaining candidate can win.
pub fn plan_fot_best(world: &PlanningWorld, p: &FotParams, limits: &Limits) -> Result<(Trajectory, FotCandidate), PlanningError> {
    let st = start_state(world)?;
    let mut scored = Vec::new();
    for &lateral in &p.lateral_grid() {
        for &duration in &p.time_grid() {
            for &f in &p.speed_fractions {
                let speed = world.target_speed * f;
                if let Some(c) = cost(&st, p, world.target_speed, lateral, duration, speed) {
                    scored.push((c, lateral, duration, speed));
                }
            }
        }
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best: Option<(Trajectory, FotCandidate)> = None;
    for (base, lateral, duration, speed) in scored {
        if best.as_ref().is_some_and(|b| base >= b.1.cost) {
            break;
        }
        let Some(t) = realize(world, &st, p, limits, lateral, duration, speed) else {
            continue;
        };
        if validate_trajectory(&t, world, limits).is_some() {
            continue;
        }
        let c = base + proximity_cost(world, p, limits, &t);
        if best.as_ref().is_none_or(|b| c < b.1.cost) {
            let cand = FotCandidate {
                lateral,
                duration,
                speed,
                cost: c,
                valid: true,
            };
            best = Some((t, cand));
        }
    }
    best.ok_or(PlanningError::NoFeasibleTrajectory)
}

pub fn plan_fot(world: &PlanningWorld, p: &FotParams, limits: &Limits) -> Result<Trajectory, PlanningError> {
    plan_fot_best(world, p, limits).map(|r| r.0)
}
