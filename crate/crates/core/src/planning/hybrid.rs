//! Hybrid A* over forward bicycle-model arcs.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use serde::{Deserialize, Serialize};

use super::profile::{path_to_trajectory, ProfileParams};
use super::{segment_collides, Limits, PlanningError, PlanningWorld, Trajectory};
use crate::geometry::{normalize_angle, Point2, Pose2D};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HybridParams {
    /// Arc length of one expansion, m.
    pub step: f64,
    /// Spacing of the steering set, rad.
    pub steer_resolution: f64,
    pub max_steer: f64,
    pub wheelbase: f64,
    pub cell_size: f64,
    pub heading_bins: usize,
    pub max_expansions: usize,
    /// Extra cost per meter per radian of steering.
    pub steer_penalty: f64,
    pub lateral_min: f64,
    pub lateral_max: f64,
    pub margin: f64,
}

impl HybridParams {
    pub fn with_discretization(step: f64, steer_resolution: f64) -> Self {
        Self {
            step,
            steer_resolution,
            max_steer: 0.61,
            wheelbase: 2.85,
            cell_size: step / 2.0,
            heading_bins: 36,
            max_expansions: 50_000,
            steer_penalty: 0.5,
            lateral_min: -3.5,
            lateral_max: 3.5,
            margin: 2.0,
        }
    }

    /// Steering angles: zero, multiples of the resolution below the
    /// maximum, and the maximum itself, each in both directions.
    pub fn steering_set(&self) -> Vec<f64> {
        let mut out = vec![0.0];
        let mut k = 1;
        while (k as f64) * self.steer_resolution < self.max_steer - 1e-9 {
            let a = k as f64 * self.steer_resolution;
            out.extend([a, -a]);
            k += 1;
        }
        out.extend([self.max_steer, -self.max_steer]);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridStats {
    pub expansions: usize,
    pub path_length: f64,
}

struct Node {
    pose: Pose2D,
    g: f64,
    parent: usize,
    /// Points of the arc from the parent, excluding the parent's pose.
    arc: Vec<Point2>,
}

#[derive(PartialEq)]
struct Open {
    f: f64,
    seq: u64,
    node: usize,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, o: &Self) -> Ordering {
        o.f.total_cmp(&self.f).then(o.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

const SUBSTEP: f64 = 0.5;
const GOAL_HEADING_TOL: f64 = 0.15;

pub fn plan_hybrid_astar(
    world: &PlanningWorld,
    p: &HybridParams,
    limits: &Limits,
    profile: &ProfileParams,
) -> Result<(Trajectory, HybridStats), PlanningError> {
    let goal = world.goal;
    let (s0, _) = world.route.to_frenet(world.ego.position()).map_err(|_| PlanningError::OffRoute)?;
    let (sg, _) = world.route.to_frenet(goal).map_err(|_| PlanningError::OffRoute)?;
    let (s_lo, s_hi) = (s0.min(sg) - p.margin, s0.max(sg) + p.margin);
    let fp = limits.footprint(world);
    let v = world.ego_speed.max(1.0);
    let steers = p.steering_set();
    let n_sub = (p.step / SUBSTEP).ceil().max(1.0) as usize;
    let ds = p.step / n_sub as f64;

    let key = |q: &Pose2D| {
        let h = normalize_angle(q.heading).rem_euclid(std::f64::consts::TAU);
        (
            (q.x / p.cell_size).floor() as i64,
            (q.y / p.cell_size).floor() as i64,
            ((h / std::f64::consts::TAU * p.heading_bins as f64) as usize).min(p.heading_bins - 1),
        )
    };
    let in_corridor = |pt: Point2| {
        world
            .route
            .to_frenet(pt)
            .is_ok_and(|(s, d)| s >= s_lo && s <= s_hi && d >= p.lateral_min && d <= p.lateral_max)
    };

    let mut nodes = vec![Node {
        pose: world.ego,
        g: 0.0,
        parent: 0,
        arc: vec![],
    }];
    let mut open = BinaryHeap::new();
    let mut closed = HashSet::new();
    let mut seq = 0u64;
    open.push(Open {
        f: world.ego.position().distance(goal),
        seq,
        node: 0,
    });
    let mut expansions = 0usize;
    while let Some(Open { node, .. }) = open.pop() {
        let cur = nodes[node].pose;
        if !closed.insert(key(&cur)) {
            continue;
        }
        expansions += 1;
        let here = cur.position();
        let to_goal = here.distance(goal);
        let dir_ok = to_goal <= world.goal_tolerance
            || normalize_angle((goal.y - here.y).atan2(goal.x - here.x) - cur.heading).abs() <= GOAL_HEADING_TOL;
        if to_goal <= p.step.max(world.goal_tolerance)
            && dir_ok
            && !segment_collides(world, (here, nodes[node].g / v), (goal, (nodes[node].g + to_goal) / v), 0.0, &fp)
        {
            let mut pts = vec![goal];
            let mut n = node;
            loop {
                pts.extend(nodes[n].arc.iter().rev().copied());
                if n == 0 {
                    break;
                }
                n = nodes[n].parent;
            }
            pts.push(world.ego.position());
            pts.reverse();
            pts.dedup_by(|a, b| a.distance(*b) < 1e-9);
            let path_length = pts.windows(2).map(|w| w[0].distance(w[1])).sum();
            let traj = path_to_trajectory(&pts, world, limits, profile).map_err(|_| PlanningError::NoFeasibleTrajectory)?;
            return Ok((traj, HybridStats { expansions, path_length }));
        }
        if expansions >= p.max_expansions {
            break;
        }
        'steer: for &delta in &steers {
            let mut q = cur;
            let mut arc = Vec::with_capacity(n_sub);
            let g0 = nodes[node].g;
            for k in 0..n_sub {
                let prev = q.position();
                let h = q.heading + ds * delta.tan() / p.wheelbase;
                let mid = 0.5 * (q.heading + h);
                q = Pose2D::new(q.x + ds * mid.cos(), q.y + ds * mid.sin(), h);
                let pt = q.position();
                let g_prev = g0 + k as f64 * ds;
                if !in_corridor(pt) || segment_collides(world, (prev, g_prev / v), (pt, (g_prev + ds) / v), 0.0, &fp) {
                    continue 'steer;
                }
                arc.push(pt);
            }
            if closed.contains(&key(&q)) {
                continue;
            }
            let g = g0 + p.step * (1.0 + p.steer_penalty * delta.abs());
            nodes.push(Node {
                pose: q,
                g,
                parent: node,
                arc,
            });
            seq += 1;
            open.push(Open {
                f: g + q.position().distance(goal),
                seq,
                node: nodes.len() - 1,
            });
        }
    }
    Err(PlanningError::NoPath)
}
