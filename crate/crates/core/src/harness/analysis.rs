//! Offline evaluation of finished runs.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::ops::{streams, Actuation, DetectionFrame, Msg, PlanMessage, TruthFrame};
use super::{io_err, HarnessError, Prepared, PAYLOAD_FILE, RUNLOG_FILE};
use crate::dataflow::{EventKind, LogFile, RunLog, Timestamp};
use crate::geometry::{Polyline, Pose2D};
use crate::metrics::{
    lateral_jerk, rasterize, series_csv, timely_ap50_frames, timely_miou_frames, JerkSeries, MetricsError, SemanticGrid, TimelyEvalConfig,
};
use crate::perception::BBox2D;
use crate::worldsim::{sense, AgentKind, WorldState};

/// The payloads of one run that evaluation needs, keyed by timestamp.
#[derive(Debug, Clone, Default)]
pub struct RunData {
    pub truth: BTreeMap<Timestamp, TruthFrame>,
    pub detections: Vec<(Timestamp, DetectionFrame)>,
    pub plans: Vec<(Timestamp, PlanMessage)>,
}

impl RunData {
    fn push(&mut self, t: Timestamp, m: Msg) {
        match m {
            Msg::Truth(f) => {
                self.truth.insert(t, f);
            }
            Msg::Obstacles(f) => self.detections.push((t, f)),
            Msg::Plan(p) => self.plans.push((t, p)),
            _ => {}
        }
    }

    pub fn from_log(log: &RunLog<Msg>) -> Self {
        let mut d = Self::default();
        for s in [streams::TRUTH, streams::OBSTACLES, streams::PLAN] {
            for (r, p) in log.stream_data(s) {
                d.push(r.event.timestamp, p.clone());
            }
        }
        d
    }

    /// Reads a run directory's log and payload store.
    pub fn load(dir: &Path) -> Result<Self, HarnessError> {
        let log_path = dir.join(RUNLOG_FILE);
        let text = fs::read_to_string(&log_path).map_err(|e| io_err(&log_path, e))?;
        let file = LogFile::parse(&text).map_err(|e| io_err(&log_path, format!("line {}: {}", e.line, e.message)))?;
        let store_path = dir.join(PAYLOAD_FILE);
        let store_text = fs::read_to_string(&store_path).map_err(|e| io_err(&store_path, e))?;
        let mut store = HashMap::new();
        for line in store_text.lines().filter(|l| !l.is_empty()) {
            let (digest, json) = line.split_once('\t').ok_or_else(|| io_err(&store_path, "malformed payload line"))?;
            store.insert(digest.to_string(), json.to_string());
        }
        let mut d = Self::default();
        for l in &file.lines {
            if l.kind != EventKind::Data || ![streams::TRUTH, streams::OBSTACLES, streams::PLAN].contains(&l.stream_id) {
                continue;
            }
            let digest = l.digest.as_deref().ok_or_else(|| io_err(&log_path, "data record without digest"))?;
            let json = store
                .get(digest)
                .ok_or_else(|| io_err(&store_path, format!("missing payload {digest}")))?;
            let msg: Msg = serde_json::from_str(json).map_err(|e| io_err(&store_path, e))?;
            d.push(l.timestamp, msg);
        }
        Ok(d)
    }

    pub fn actuations(&self) -> Vec<Actuation> {
        self.truth.values().filter_map(|f| f.actuation).collect()
    }

    pub fn ego_trace(&self, ego_id: u32) -> Vec<(Timestamp, Pose2D)> {
        self.truth
            .iter()
            .filter_map(|(t, f)| f.agents.iter().find(|a| a.id == ego_id).map(|a| (*t, a.pose)))
            .collect()
    }
}

/// Truth in force at `t`: the latest tick at or before it.
fn truth_at(data: &RunData, t: Timestamp) -> Option<(Timestamp, &TruthFrame)> {
    data.truth.range(..=t).next_back().map(|(k, f)| (*k, f))
}

/// The scenario's world with the agent states of one truth frame.
pub fn world_at(base: &WorldState, t: Timestamp, f: &TruthFrame) -> WorldState {
    let mut w = base.clone();
    w.sim_time = t;
    for a in &mut w.agents {
        if let Some(p) = f.agents.iter().find(|p| p.id == a.id) {
            a.pose = p.pose;
            a.speed = p.speed;
        }
    }
    w
}

fn ego_id(base: &WorldState) -> u32 {
    base.agents.iter().find(|a| a.kind == AgentKind::Ego).map_or(0, |a| a.id)
}

/// Output frames whose shifted timestamp still lies within the run.
fn frames_within<T: Clone>(data: &RunData, items: &[(Timestamp, T)], lt: u64) -> Vec<(Timestamp, T)> {
    let end = data.truth.keys().next_back().copied().unwrap_or(Timestamp::ZERO);
    items.iter().filter(|(t, _)| t.add_micros(lt) <= end).cloned().collect()
}

/// Timely AP50 of the logged detections against ego-frame ground truth
/// `lt` microseconds later: the mean and the per-frame values.
pub fn timely_ap50_at(p: &Prepared, data: &RunData, lt: u64) -> Result<(f64, Vec<(Timestamp, f64)>), MetricsError> {
    let dets: Vec<(Timestamp, DetectionFrame)> = frames_within(data, &data.detections, lt);
    let outputs: Vec<_> = dets.iter().map(|(t, f)| (*t, f.obstacles.boxes.clone())).collect();
    let id = ego_id(&p.world);
    let mut gt: BTreeMap<Timestamp, Vec<BBox2D>> = BTreeMap::new();
    for (t, _) in &outputs {
        let at = t.add_micros(lt);
        if let Some((tick, f)) = truth_at(data, at) {
            let w = world_at(&p.world, tick, f);
            let ego = w.agents.iter().find(|a| a.id == id).map_or(Pose2D::new(0.0, 0.0, 0.0), |a| a.pose);
            gt.insert(at, sense(&w, &ego, p.params.sensor_range).into_iter().map(|d| d.bbox).collect());
        }
    }
    let frames = timely_ap50_frames(
        &outputs,
        &gt,
        &TimelyEvalConfig {
            runtime_micros: lt,
            iou_threshold: 0.5,
        },
    )?;
    Ok((mean(&frames), frames))
}

/// Timely mIoU of perfect ego-centered rasters at sensing time against
/// rasters `lt` microseconds later.
pub fn timely_miou_at(p: &Prepared, data: &RunData, lt: u64) -> Result<(f64, Vec<(Timestamp, f64)>), MetricsError> {
    let times: Vec<(Timestamp, ())> = data.detections.iter().map(|(t, _)| (*t, ())).collect();
    let times = frames_within(data, &times, lt);
    let raster = |t: Timestamp| truth_at(data, t).map(|(tick, f)| rasterize(&world_at(&p.world, tick, f), &p.config.grid));
    let mut outputs: Vec<(Timestamp, SemanticGrid)> = Vec::new();
    let mut gt = BTreeMap::new();
    for (t, _) in times {
        if let Some(g) = raster(t) {
            outputs.push((t, g));
        }
        let at = t.add_micros(lt);
        if let Some(g) = raster(at) {
            gt.insert(at, g);
        }
    }
    let frames = timely_miou_frames(&outputs, &gt, lt)?;
    Ok((mean(&frames), frames))
}

pub fn ego_jerk(data: &RunData, route: &Polyline) -> Result<JerkSeries, MetricsError> {
    let ego = data.truth.values().next().and_then(|f| f.agents.first()).map_or(0, |a| a.id);
    lateral_jerk(&data.ego_trace(ego), route)
}

fn mean(frames: &[(Timestamp, f64)]) -> f64 {
    if frames.is_empty() {
        1.0
    } else {
        frames.iter().map(|f| f.1).sum::<f64>() / frames.len() as f64
    }
}

/// Median of a sample; the mean of the middle pair for even sizes.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricSpec {
    pub runtimes_micros: Vec<u64>,
    pub ap50: bool,
    pub miou: bool,
    pub jerk: bool,
}

impl Default for MetricSpec {
    fn default() -> Self {
        Self {
            runtimes_micros: vec![0, 10_000, 20_000, 35_000, 50_000, 100_000],
            ap50: true,
            miou: true,
            jerk: true,
        }
    }
}

fn write_csv(path: &Path, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Writes one row per runtime for each timely metric, per-frame series,
/// and the jerk series; returns a JSON summary.
pub fn write_metrics(p: &Prepared, data: &RunData, spec: &MetricSpec, dir: &Path) -> Result<serde_json::Value, HarnessError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut summary = serde_json::Map::new();
    type Metric = fn(&Prepared, &RunData, u64) -> Result<(f64, Vec<(Timestamp, f64)>), MetricsError>;
    let metrics: [(&str, bool, Metric); 2] = [
        ("timely_ap50", spec.ap50, timely_ap50_at),
        ("timely_miou", spec.miou, timely_miou_at),
    ];
    for (name, enabled, f) in metrics {
        if !enabled {
            continue;
        }
        let mut rows = Vec::new();
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["runtime_micros", "mean", "median", "frames"])
            .map_err(|e| io_err(dir, e))?;
        for &lt in &spec.runtimes_micros {
            let (m, frames) = f(p, data, lt)?;
            let med = median(&frames.iter().map(|x| x.1).collect::<Vec<_>>());
            w.write_record([lt.to_string(), m.to_string(), med.to_string(), frames.len().to_string()])
                .map_err(|e| io_err(dir, e))?;
            write_csv(
                &dir.join(format!("{name}_frames_{lt}.csv")),
                &series_csv(["timestamp", name], &frames)?,
            )?;
            rows.push(json!({"runtime_micros": lt, "mean": m, "median": med, "frames": frames.len()}));
        }
        let text = String::from_utf8(w.into_inner().map_err(|e| io_err(dir, e))?).expect("utf8");
        write_csv(&dir.join(format!("{name}.csv")), &text)?;
        summary.insert(name.to_string(), json!(rows));
    }
    if spec.jerk {
        let j = ego_jerk(data, &p.world.road.centerline)?;
        write_csv(&dir.join("jerk.csv"), &series_csv(["timestamp", "lateral_jerk"], &j.samples)?)?;
        summary.insert(
            "lateral_jerk".into(),
            json!({"max_abs": j.max_abs, "rms": j.rms, "samples": j.samples.len()}),
        );
    }
    Ok(serde_json::Value::Object(summary))
}
