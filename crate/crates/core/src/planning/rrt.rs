//! RRT* in the plane over a route-aligned corridor.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::profile::{path_to_trajectory, ProfileParams};
use super::{segment_collides, Footprint, Limits, PlanningError, PlanningWorld, Trajectory};
use crate::geometry::Point2;
use crate::rng::keyed_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RrtParams {
    pub step_size: f64,
    pub max_iterations: usize,
    pub goal_bias: f64,
    /// Near-neighbor radius is `gamma * sqrt(ln n / n)`, capped at
    /// `radius_cap`.
    pub gamma: f64,
    pub radius_cap: f64,
    pub lateral_min: f64,
    pub lateral_max: f64,
    /// Corridor extension behind the ego and past the goal, m.
    pub margin: f64,
}

impl RrtParams {
    pub fn with_step(step_size: f64) -> Self {
        Self {
            step_size,
            max_iterations: if step_size < 0.3 { 5000 } else { 1500 },
            goal_bias: 0.2,
            gamma: 30.0 * step_size,
            radius_cap: 3.0 * step_size,
            lateral_min: -3.5,
            lateral_max: 3.5,
            margin: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RrtStats {
    /// Tree cost of the best goal-connected path, before smoothing.
    pub path_cost: f64,
    pub iterations: usize,
    pub nodes: usize,
}

struct Tree {
    pts: Vec<Point2>,
    parent: Vec<usize>,
    cost: Vec<f64>,
    children: Vec<Vec<usize>>,
    cell: f64,
    grid: HashMap<(i64, i64), Vec<usize>>,
}

impl Tree {
    fn new(root: Point2, cell: f64) -> Self {
        let mut t = Self {
            pts: vec![],
            parent: vec![],
            cost: vec![],
            children: vec![],
            cell,
            grid: HashMap::new(),
        };
        t.push(root, 0, 0.0);
        t
    }

    fn key(&self, p: Point2) -> (i64, i64) {
        ((p.x / self.cell).floor() as i64, (p.y / self.cell).floor() as i64)
    }

    fn push(&mut self, p: Point2, parent: usize, cost: f64) -> usize {
        let id = self.pts.len();
        self.pts.push(p);
        self.parent.push(parent);
        self.cost.push(cost);
        self.children.push(vec![]);
        if id != 0 {
            self.children[parent].push(id);
        }
        let k = self.key(p);
        self.grid.entry(k).or_default().push(id);
        id
    }

    fn nearest(&self, p: Point2) -> usize {
        let (cx, cy) = self.key(p);
        let mut best = (f64::INFINITY, usize::MAX);
        for r in 0i64.. {
            for dx in -r..=r {
                for dy in -r..=r {
                    if dx.abs() != r && dy.abs() != r {
                        continue;
                    }
                    for &i in self.grid.get(&(cx + dx, cy + dy)).into_iter().flatten() {
                        let d = self.pts[i].distance(p);
                        if (d, i) < best {
                            best = (d, i);
                        }
                    }
                }
            }
            if best.1 != usize::MAX && best.0 <= r as f64 * self.cell {
                break;
            }
        }
        best.1
    }

    fn near(&self, p: Point2, radius: f64) -> Vec<usize> {
        let (cx, cy) = self.key(p);
        let reach = (radius / self.cell).ceil() as i64;
        let mut out = Vec::new();
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                for &i in self.grid.get(&(cx + dx, cy + dy)).into_iter().flatten() {
                    if self.pts[i].distance(p) <= radius {
                        out.push(i);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    fn reparent(&mut self, node: usize, new_parent: usize, new_cost: f64) {
        let old = self.parent[node];
        self.children[old].retain(|&c| c != node);
        self.children[new_parent].push(node);
        self.parent[node] = new_parent;
        let delta = new_cost - self.cost[node];
        let mut stack = vec![node];
        while let Some(n) = stack.pop() {
            self.cost[n] += delta;
            stack.extend(self.children[n].iter().copied());
        }
    }

    fn path_to(&self, mut n: usize) -> Vec<Point2> {
        let mut out = vec![self.pts[n]];
        while n != 0 {
            n = self.parent[n];
            out.push(self.pts[n]);
        }
        out.reverse();
        out
    }
}

fn edge_free(world: &PlanningWorld, a: Point2, ca: f64, b: Point2, cb: f64, v: f64, fp: &Footprint) -> bool {
    !segment_collides(world, (a, ca / v), (b, cb / v), 0.0, fp)
}

/// Greedy shortcutting: from each kept point jump to the farthest point
/// reachable by a collision-free straight segment.
fn shortcut(world: &PlanningWorld, path: &[Point2], v: f64, fp: &Footprint) -> Vec<Point2> {
    let mut cum = vec![0.0; path.len()];
    for i in 1..path.len() {
        cum[i] = cum[i - 1] + path[i - 1].distance(path[i]);
    }
    let mut out = vec![path[0]];
    let mut i = 0;
    while i + 1 < path.len() {
        let j = (i + 1..path.len())
            .rev()
            .find(|&j| edge_free(world, path[i], cum[i], path[j], cum[i] + path[i].distance(path[j]), v, fp))
            .unwrap_or(i + 1);
        out.push(path[j]);
        i = j;
    }
    out
}

fn chaikin(path: &[Point2], rounds: usize) -> Vec<Point2> {
    let mut p = path.to_vec();
    for _ in 0..rounds {
        if p.len() < 3 {
            break;
        }
        let mut q = vec![p[0]];
        for w in p.windows(2) {
            q.push(w[0].lerp(w[1], 0.25));
            q.push(w[0].lerp(w[1], 0.75));
        }
        q.push(*p.last().unwrap());
        // drop the cut points adjacent to the fixed ends
        q.remove(1);
        q.remove(q.len() - 2);
        p = q;
    }
    p
}

/// Plans with RRT*. The random stream is keyed by `seed` and the
/// snapshot timestamp, so identical inputs give identical trees.
pub fn plan_rrt_star(
    world: &PlanningWorld,
    p: &RrtParams,
    limits: &Limits,
    profile: &ProfileParams,
    seed: u64,
) -> Result<(Trajectory, RrtStats), PlanningError> {
    let start = world.ego.position();
    let goal = world.goal;
    let (s0, _) = world.route.to_frenet(start).map_err(|_| PlanningError::OffRoute)?;
    let (sg, _) = world.route.to_frenet(goal).map_err(|_| PlanningError::OffRoute)?;
    let (s_lo, s_hi) = (s0.min(sg) - p.margin, s0.max(sg) + p.margin);
    let fp = limits.footprint(world);
    let v = world.ego_speed.max(1.0);
    let tol = world.goal_tolerance.max(1e-6);

    let mut rng = keyed_rng(seed, world.timestamp.micros().unwrap_or(0), 0x5252_542a);
    let mut tree = Tree::new(start, (p.radius_cap * 2.0).max(2.0));
    let mut goal_nodes: Vec<usize> = Vec::new();
    if start.distance(goal) <= tol {
        goal_nodes.push(0);
    }
    for _ in 0..p.max_iterations {
        let sample = if rng.random::<f64>() < p.goal_bias {
            goal
        } else {
            let s = rng.random_range(s_lo..=s_hi);
            let d = rng.random_range(p.lateral_min..=p.lateral_max);
            match world.route.from_frenet(s.clamp(0.0, world.route.length()), d) {
                Ok(q) => q,
                Err(_) => continue,
            }
        };
        let nearest = tree.nearest(sample);
        let from = tree.pts[nearest];
        let dist = from.distance(sample);
        if dist < 1e-9 {
            continue;
        }
        let new = if dist <= p.step_size {
            sample
        } else {
            from + (sample - from) * (p.step_size / dist)
        };
        let c_near = tree.cost[nearest] + from.distance(new);
        if !edge_free(world, from, tree.cost[nearest], new, c_near, v, &fp) {
            continue;
        }
        let n = tree.pts.len() as f64 + 1.0;
        let radius = (p.gamma * (n.ln() / n).sqrt()).min(p.radius_cap).max(p.step_size);
        let near = tree.near(new, radius);
        let mut parent = (c_near, nearest);
        for &j in &near {
            let c = tree.cost[j] + tree.pts[j].distance(new);
            if c < parent.0 - 1e-12 && edge_free(world, tree.pts[j], tree.cost[j], new, c, v, &fp) {
                parent = (c, j);
            }
        }
        let id = tree.push(new, parent.1, parent.0);
        for &j in &near {
            if j == parent.1 || j == 0 {
                continue;
            }
            let c = parent.0 + new.distance(tree.pts[j]);
            if c < tree.cost[j] - 1e-12 && edge_free(world, new, parent.0, tree.pts[j], c, v, &fp) {
                tree.reparent(j, id, c);
            }
        }
        if new.distance(goal) <= tol {
            goal_nodes.push(id);
        }
    }

    let best = goal_nodes
        .iter()
        .map(|&g| (tree.cost[g] + tree.pts[g].distance(goal), g))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .ok_or(PlanningError::NoPathWithinBudget(p.max_iterations))?;
    let stats = RrtStats {
        path_cost: best.0,
        iterations: p.max_iterations,
        nodes: tree.pts.len(),
    };
    let mut raw = tree.path_to(best.1);
    let last = *raw.last().unwrap();
    if last.distance(goal) > 1e-9 && edge_free(world, last, tree.cost[best.1], goal, best.0, v, &fp) {
        raw.push(goal);
    }
    let short = shortcut(world, &raw, v, &fp);
    for cand in [chaikin(&short, 3), short, raw] {
        if let Ok(t) = path_to_trajectory(&cand, world, limits, profile) {
            return Ok((t, stats));
        }
    }
    Err(PlanningError::NoFeasibleTrajectory)
}
