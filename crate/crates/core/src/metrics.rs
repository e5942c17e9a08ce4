//! Offline evaluation: timely AP50 and mIoU, lateral jerk and the
//! collision matrix.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataflow::Timestamp;
use crate::geometry::{Point2, Polyline, Pose2D};
use crate::perception::{iou, BBox2D, Detection};
use crate::worldsim::{AgentKind, WorldState};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("no ground truth at {0}")]
    MissingGroundTruth(Timestamp),
    #[error("grid specs differ")]
    GridMismatch,
    #[error("need at least 4 samples, got {0}")]
    TooFewSamples(usize),
    #[error("samples are not uniformly spaced at index {0}")]
    NonUniform(usize),
    #[error("pose at index {0} cannot be projected on the route")]
    OffRoute(usize),
    #[error("missing cell: preset {preset} at {speed} m/s")]
    IncompleteSweep { preset: String, speed: f64 },
    #[error("more than one outcome for preset {preset} at {speed} m/s")]
    DuplicateCell { preset: String, speed: f64 },
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimelyEvalConfig {
    pub runtime_micros: u64,
    pub iou_threshold: f64,
}

impl Default for TimelyEvalConfig {
    fn default() -> Self {
        Self {
            runtime_micros: 0,
            iou_threshold: 0.5,
        }
    }
}

/// All-points interpolated average precision of one frame. Detections are
/// matched greedily by descending confidence, each to the unmatched
/// ground-truth box of highest IoU at or above `threshold`.
pub fn frame_ap(dets: &[Detection], gt: &[BBox2D], threshold: f64) -> f64 {
    if gt.is_empty() {
        return if dets.is_empty() { 1.0 } else { 0.0 };
    }
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence).then(a.cmp(&b)));
    let mut used = vec![false; gt.len()];
    let mut tp = 0usize;
    let mut curve = Vec::with_capacity(dets.len());
    for (k, &i) in order.iter().enumerate() {
        let best = gt
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, g)| (iou(&dets[i].bbox, g), j))
            .filter(|(v, _)| *v >= threshold)
            .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
        if let Some((_, j)) = best {
            used[j] = true;
            tp += 1;
        }
        curve.push((tp as f64 / gt.len() as f64, tp as f64 / (k + 1) as f64));
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for i in 0..curve.len() {
        let p_interp = curve[i..].iter().map(|c| c.1).fold(0.0, f64::max);
        ap += (curve[i].0 - prev_recall) * p_interp;
        prev_recall = curve[i].0;
    }
    ap
}

fn shifted<T>(gt: &BTreeMap<Timestamp, T>, t: Timestamp, runtime_micros: u64) -> Result<&T, MetricsError> {
    let at = t.add_micros(runtime_micros);
    gt.get(&at).ok_or(MetricsError::MissingGroundTruth(at))
}

/// Per-frame AP50 of outputs computed on inputs at `t1`, scored against
/// ground truth at `t1 + runtime`.
pub fn timely_ap50_frames(
    outputs: &[(Timestamp, Vec<Detection>)],
    ground_truth: &BTreeMap<Timestamp, Vec<BBox2D>>,
    cfg: &TimelyEvalConfig,
) -> Result<Vec<(Timestamp, f64)>, MetricsError> {
    outputs
        .iter()
        .map(|(t, dets)| {
            Ok((
                *t,
                frame_ap(dets, shifted(ground_truth, *t, cfg.runtime_micros)?, cfg.iou_threshold),
            ))
        })
        .collect()
}

/// Mean over frames; 1.0 for an empty series.
pub fn timely_ap50(
    outputs: &[(Timestamp, Vec<Detection>)],
    ground_truth: &BTreeMap<Timestamp, Vec<BBox2D>>,
    cfg: &TimelyEvalConfig,
) -> Result<f64, MetricsError> {
    Ok(mean_or_one(&timely_ap50_frames(outputs, ground_truth, cfg)?))
}

fn mean_or_one(frames: &[(Timestamp, f64)]) -> f64 {
    if frames.is_empty() {
        1.0
    } else {
        frames.iter().map(|f| f.1).sum::<f64>() / frames.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum SemanticClass {
    Background = 0,
    Road = 1,
    Vehicle = 2,
    Pedestrian = 3,
}

pub const CLASSES: [SemanticClass; 4] = [
    SemanticClass::Background,
    SemanticClass::Road,
    SemanticClass::Vehicle,
    SemanticClass::Pedestrian,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub cell_size: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            cell_size: 0.5,
            width: 200,
            height: 80,
        }
    }
}

/// Row-major class raster; cell `(i, j)` covers
/// `[origin.x + i*cell, origin.x + (i+1)*cell) x [origin.y + j*cell, ...)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticGrid {
    pub origin: Point2,
    pub cell_size: f64,
    pub width: usize,
    pub height: usize,
    pub cells: Vec<SemanticClass>,
}

impl SemanticGrid {
    pub fn get(&self, i: usize, j: usize) -> SemanticClass {
        self.cells[j * self.width + i]
    }

    pub fn count(&self, class: SemanticClass) -> usize {
        self.cells.iter().filter(|c| **c == class).count()
    }

    fn same_shape(&self, o: &Self) -> bool {
        self.width == o.width && self.height == o.height && self.cell_size == o.cell_size
    }
}

/// Rasterizes the world on an axis-aligned window centered on `center`.
/// A cell takes the class of whatever covers its center.
pub fn rasterize_at(world: &WorldState, center: Point2, spec: &GridSpec) -> SemanticGrid {
    let origin = center - Point2::new(spec.width as f64 * spec.cell_size / 2.0, spec.height as f64 * spec.cell_size / 2.0);
    let mut cells = vec![SemanticClass::Background; spec.width * spec.height];
    let cell_center = |i: usize, j: usize| origin + Point2::new((i as f64 + 0.5) * spec.cell_size, (j as f64 + 0.5) * spec.cell_size);
    for j in 0..spec.height {
        for i in 0..spec.width {
            if world.road.centerline.distance_to(cell_center(i, j)) <= world.road.lane_width {
                cells[j * spec.width + i] = SemanticClass::Road;
            }
        }
    }
    let mut agents: Vec<_> = world
        .agents
        .iter()
        .filter_map(|a| match a.kind {
            AgentKind::Pedestrian => Some((SemanticClass::Pedestrian, a)),
            AgentKind::Vehicle | AgentKind::Truck => Some((SemanticClass::Vehicle, a)),
            AgentKind::Ego => None,
        })
        .collect();
    agents.sort_by_key(|(c, _)| *c);
    for (class, a) in agents {
        let fp = a.footprint();
        let (x0, y0, x1, y1) = fp.bounds();
        let i0 = (((x0 - origin.x) / spec.cell_size).floor().max(0.0) as usize).min(spec.width);
        let i1 = (((x1 - origin.x) / spec.cell_size).ceil().max(0.0) as usize).min(spec.width);
        let j0 = (((y0 - origin.y) / spec.cell_size).floor().max(0.0) as usize).min(spec.height);
        let j1 = (((y1 - origin.y) / spec.cell_size).ceil().max(0.0) as usize).min(spec.height);
        for j in j0..j1 {
            for i in i0..i1 {
                if fp.contains(cell_center(i, j)) {
                    cells[j * spec.width + i] = class;
                }
            }
        }
    }
    SemanticGrid {
        origin,
        cell_size: spec.cell_size,
        width: spec.width,
        height: spec.height,
        cells,
    }
}

/// Ego-centered raster.
pub fn rasterize(world: &WorldState, spec: &GridSpec) -> SemanticGrid {
    let center = world
        .agents
        .iter()
        .find(|a| a.kind == AgentKind::Ego)
        .map_or(Point2::new(0.0, 0.0), |e| e.pose.position());
    rasterize_at(world, center, spec)
}

/// Mean IoU over classes present in either grid; 1.0 if neither has any
/// cells (impossible for non-empty grids).
pub fn grid_miou(pred: &SemanticGrid, gt: &SemanticGrid) -> Result<f64, MetricsError> {
    if !pred.same_shape(gt) {
        return Err(MetricsError::GridMismatch);
    }
    let mut inter = [0usize; 4];
    let mut union = [0usize; 4];
    for (a, b) in pred.cells.iter().zip(&gt.cells) {
        let (a, b) = (*a as usize, *b as usize);
        if a == b {
            inter[a] += 1;
            union[a] += 1;
        } else {
            union[a] += 1;
            union[b] += 1;
        }
    }
    let ious: Vec<f64> = (0..4)
        .filter(|&c| union[c] > 0)
        .map(|c| inter[c] as f64 / union[c] as f64)
        .collect();
    Ok(if ious.is_empty() {
        1.0
    } else {
        ious.iter().sum::<f64>() / ious.len() as f64
    })
}

pub fn timely_miou_frames(
    outputs: &[(Timestamp, SemanticGrid)],
    ground_truth: &BTreeMap<Timestamp, SemanticGrid>,
    runtime_micros: u64,
) -> Result<Vec<(Timestamp, f64)>, MetricsError> {
    outputs
        .iter()
        .map(|(t, g)| Ok((*t, grid_miou(g, shifted(ground_truth, *t, runtime_micros)?)?)))
        .collect()
}

/// Mean over frames of the per-frame mIoU; 1.0 for an empty series.
pub fn timely_miou(
    outputs: &[(Timestamp, SemanticGrid)],
    ground_truth: &BTreeMap<Timestamp, SemanticGrid>,
    runtime_micros: u64,
) -> Result<f64, MetricsError> {
    Ok(mean_or_one(&timely_miou_frames(outputs, ground_truth, runtime_micros)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JerkSeries {
    /// Each value sits at the midpoint of its four-sample stencil.
    pub samples: Vec<(Timestamp, f64)>,
    pub max_abs: f64,
    pub rms: f64,
}

/// Third derivative of the signed lateral offset from `route`, by the
/// four-point difference `(d[i+2] - 3d[i+1] + 3d[i] - d[i-1]) / h^3`.
pub fn lateral_jerk(trace: &[(Timestamp, Pose2D)], route: &Polyline) -> Result<JerkSeries, MetricsError> {
    if trace.len() < 4 {
        return Err(MetricsError::TooFewSamples(trace.len()));
    }
    let micros: Vec<u64> = trace.iter().map(|(t, _)| t.micros().unwrap_or(u64::MAX)).collect();
    let h_us = micros[1].saturating_sub(micros[0]);
    if h_us == 0 {
        return Err(MetricsError::NonUniform(1));
    }
    for i in 1..micros.len() {
        if micros[i].checked_sub(micros[i - 1]) != Some(h_us) {
            return Err(MetricsError::NonUniform(i));
        }
    }
    let d = trace
        .iter()
        .enumerate()
        .map(|(i, (_, p))| route.to_frenet(p.position()).map(|f| f.1).map_err(|_| MetricsError::OffRoute(i)))
        .collect::<Result<Vec<f64>, _>>()?;
    let h = h_us as f64 * 1e-6;
    let samples: Vec<(Timestamp, f64)> = (1..d.len() - 2)
        .map(|i| {
            let j = (d[i + 2] - 3.0 * d[i + 1] + 3.0 * d[i] - d[i - 1]) / (h * h * h);
            (Timestamp::from_micros(micros[i] + h_us / 2), j)
        })
        .collect();
    let max_abs = samples.iter().map(|s| s.1.abs()).fold(0.0, f64::max);
    let rms = (samples.iter().map(|s| s.1 * s.1).sum::<f64>() / samples.len() as f64).sqrt();
    Ok(JerkSeries { samples, max_abs, rms })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub preset: String,
    pub target_speed: f64,
    pub collided: bool,
    pub planner_runtimes_micros: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixCell {
    pub preset: String,
    pub target_speed: f64,
    pub collided: bool,
    pub p99_runtime_micros: u64,
}

/// Nearest-rank percentile; 0 for an empty sample.
pub fn percentile_nearest_rank(values: &[u64], pct: f64) -> u64 {
    if values.is_empty() {
        return 0;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let rank = ((pct / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    v[rank.min(v.len()) - 1]
}

/// One cell per (preset, speed), in the given orders.
pub fn collision_matrix(outcomes: &[RunOutcome], presets: &[String], speeds: &[f64]) -> Result<Vec<MatrixCell>, MetricsError> {
    let mut cells = Vec::with_capacity(presets.len() * speeds.len());
    for preset in presets {
        for &speed in speeds {
            let mut matching = outcomes.iter().filter(|o| &o.preset == preset && o.target_speed == speed);
            let o = matching.next().ok_or_else(|| MetricsError::IncompleteSweep {
                preset: preset.clone(),
                speed,
            })?;
            if matching.next().is_some() {
                return Err(MetricsError::DuplicateCell {
                    preset: preset.clone(),
                    speed,
                });
            }
            cells.push(MatrixCell {
                preset: preset.clone(),
                target_speed: speed,
                collided: o.collided,
                p99_runtime_micros: percentile_nearest_rank(&o.planner_runtimes_micros, 99.0),
            });
        }
    }
    Ok(cells)
}

pub fn matrix_csv(cells: &[MatrixCell]) -> Result<String, MetricsError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| MetricsError::Csv(e.to_string());
    w.write_record(["preset", "target_speed", "outcome", "p99_runtime_micros"])
        .map_err(err)?;
    for c in cells {
        w.write_record([
            c.preset.clone(),
            c.target_speed.to_string(),
            if c.collided { "collide" } else { "avoid" }.to_string(),
            c.p99_runtime_micros.to_string(),
        ])
        .map_err(err)?;
    }
    String::from_utf8(w.into_inner().map_err(|e| MetricsError::Csv(e.to_string()))?).map_err(|e| MetricsError::Csv(e.to_string()))
}

/// Two-column CSV of a per-frame or per-sample series.
pub fn series_csv(header: [&str; 2], rows: &[(Timestamp, f64)]) -> Result<String, MetricsError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| MetricsError::Csv(e.to_string());
    w.write_record(header).map_err(err)?;
    for (t, v) in rows {
        w.write_record([t.to_string(), v.to_string()]).map_err(err)?;
    }
    String::from_utf8(w.into_inner().map_err(|e| MetricsError::Csv(e.to_string()))?).map_err(|e| MetricsError::Csv(e.to_string()))
}
