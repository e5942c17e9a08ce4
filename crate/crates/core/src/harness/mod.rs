//! Experiment driver: assembles the pipeline graph from a run config,
//! executes runs and sweeps, replays logs and computes metrics.

mod analysis;
mod config;
mod ops;
mod sweep;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use analysis::{ego_jerk, median, timely_ap50_at, timely_miou_at, MetricSpec, RunData};
pub use config::{ComponentConfig, ComponentMode, Components, InitialSpeed, RunConfig, SCHEMA_VERSION};
pub use ops::{
    box_to_world, operators, predict_tracks, streams, Actuation, AgentPose, DetectionFrame, EgoPose, Msg, PlanMessage, SensorFrame,
    TruthFrame,
};
pub use sweep::{cell_seed, cmd_sweep, SweepAxes, SweepRow};

use crate::dataflow::{
    audit_log, build_graph, export_trace, replay, run, Graph, InvocationKind, LogFile, OperatorSpec, RunLog, RunOptions, Timestamp,
};
use crate::metrics::{percentile_nearest_rank, series_csv, MetricsError};
use crate::planning::PlannerConfig;
use crate::rng::mix;
use crate::syncbridge::LatencyModel;
use crate::worldsim::{resolve_scenario, AgentKind, ScenarioParams, WorldState};
use ops::{ControlOperator, DetectionOperator, PlanningOperator, PredictionOperator, SimOperator, SimParams, TrackingOperator};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("run failed: {0}")]
    Run(String),
    #[error("io: {0}")]
    Io(String),
    #[error("metrics: {0}")]
    Metrics(#[from] MetricsError),
    #[error("replay mismatch at line {line}: expected {expected:?}, replay produced {found:?}")]
    ReplayMismatch { line: usize, expected: String, found: String },
}

impl HarnessError {
    /// Process exit code: 1 config, 2 runtime, 3 replay mismatch.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            HarnessError::ReplayMismatch { .. } => 3,
            _ => 2,
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io(format!("{}: {e}", path.display()))
}

/// A validated config resolved against its scenario.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: RunConfig,
    pub world: WorldState,
    pub params: ScenarioParams,
    pub planner: PlannerConfig,
    pub planner_latency: LatencyModel,
    pub target_speed: f64,
    pub seed: u64,
}

pub fn prepare(config: &RunConfig) -> Result<Prepared, HarnessError> {
    config.validate()?;
    let (mut world, mut params) = resolve_scenario(&config.scenario).map_err(|e| HarnessError::Config(e.to_string()))?;
    if let Some(r) = config.tick_rate {
        if r % params.sensor_rate != 0 {
            return Err(HarnessError::Config(format!(
                "tick_rate {r} is not a multiple of the sensor rate {}",
                params.sensor_rate
            )));
        }
        params.tick_rate = r;
    }
    let target_speed = config.target_speed.unwrap_or(params.target_speed);
    if config.initial_speed == InitialSpeed::Target {
        if let Some(e) = world.agents.iter_mut().find(|a| a.kind == AgentKind::Ego) {
            e.speed = target_speed;
        }
    }
    let (planner, p99) = config.planner()?;
    let planner_latency = config
        .components
        .planning
        .latency
        .clone()
        .unwrap_or(LatencyModel::Fixed { micros: p99 });
    Ok(Prepared {
        config: config.clone(),
        world,
        params,
        planner,
        planner_latency,
        target_speed,
        seed: config.seed.unwrap_or(0),
    })
}

fn latency(c: &ComponentConfig) -> LatencyModel {
    c.latency.clone().unwrap_or(LatencyModel::Fixed { micros: 0 })
}

/// The six-operator pipeline with control fed back to the simulator.
pub fn build_pipeline(p: &Prepared) -> Result<Graph<Msg>, HarnessError> {
    use operators::*;
    use streams::*;
    let cfg = &p.config;
    let route = p.world.road.centerline.clone();
    let goal_s = route
        .to_frenet(p.params.goal)
        .map_err(|e| HarnessError::Config(format!("goal: {e}")))?
        .0;
    let sim = SimOperator::new(
        p.world.clone(),
        SimParams {
            tick_micros: p.params.tick_micros(),
            sensor_period_micros: p.params.sensor_period_micros(),
            sensor_range: p.params.sensor_range,
            route: route.clone(),
            goal_s,
            goal_tolerance: p.planner.goal.tolerance,
            stop_on_goal: cfg.stop_on_goal,
        },
    );
    let mut noise = cfg.noise;
    noise.seed = mix(p.seed, 0x00de_7ec7, noise.seed);
    let c = &cfg.components;
    let specs = vec![
        OperatorSpec::new(SIM, "simulator", vec![COMMAND], vec![SENSOR, POSE, TRUTH], sim),
        OperatorSpec::new(
            DETECTION,
            "detection",
            vec![SENSOR],
            vec![OBSTACLES],
            DetectionOperator::new(c.detection.mode, noise),
        )
        .with_latency(latency(&c.detection)),
        OperatorSpec::new(
            TRACKING,
            "tracking",
            vec![OBSTACLES],
            vec![TRACKS],
            TrackingOperator::new(c.tracking.mode, cfg.sort),
        )
        .with_latency(latency(&c.tracking)),
        OperatorSpec::new(
            PREDICTION,
            "prediction",
            vec![TRACKS],
            vec![PREDICTIONS],
            PredictionOperator::new(cfg.prediction),
        )
        .with_latency(latency(&c.prediction)),
        OperatorSpec::new(
            PLANNING,
            "planning",
            vec![POSE, PREDICTIONS],
            vec![PLAN],
            PlanningOperator::new(
                p.planner.clone(),
                route,
                p.world.road.lane_width,
                p.params.goal,
                p.target_speed,
                mix(p.seed, 0x91a2, 0),
            ),
        )
        .with_latency(p.planner_latency.clone()),
        OperatorSpec::new(
            CONTROL,
            "control",
            vec![POSE, PLAN],
            vec![COMMAND],
            ControlOperator::new(cfg.gains, p.params.vehicle, p.params.sensor_period_micros()),
        )
        .with_latency(latency(&c.control)),
    ];
    build_graph(specs, &[COMMAND]).map_err(|e| HarnessError::Config(e.to_string()))
}

pub fn run_options(p: &Prepared) -> RunOptions {
    RunOptions::until(Timestamp::from_micros((p.params.duration * 1e6).round() as u64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuntimeStats {
    pub count: usize,
    pub p50_micros: u64,
    pub p99_micros: u64,
    pub max_micros: u64,
}

/// Summary of one run, written as `outcome.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub scenario: String,
    pub preset: String,
    pub target_speed: f64,
    pub seed: Option<u64>,
    pub collided: bool,
    pub collision_agent: Option<u32>,
    pub collision_time: Option<Timestamp>,
    pub goal_reached: bool,
    pub completion_time: Timestamp,
    pub runlog_hash: String,
    pub planner_p99_micros: u64,
    pub operator_runtimes: BTreeMap<String, RuntimeStats>,
    pub planner_runtimes_micros: Vec<u64>,
    pub planner_fallbacks: usize,
    pub commands_applied: usize,
    pub commands_dropped: u64,
    pub log_audit_clean: bool,
}

pub fn outcome_of(p: &Prepared, log: &RunLog<Msg>) -> Outcome {
    let data = RunData::from_log(log);
    let last = data.truth.iter().next_back();
    let collision = data.truth.iter().find_map(|(t, f)| f.collision.map(|a| (*t, a)));
    let mut operator_runtimes = BTreeMap::new();
    let mut planner_runtimes = Vec::new();
    for (id, name) in &log.operator_names {
        let rts: Vec<u64> = log
            .invocations
            .iter()
            .filter(|i| i.operator_id == *id && i.kind != InvocationKind::Data && !i.timestamp.is_top())
            .map(|i| i.runtime_micros)
            .collect();
        if *id == operators::PLANNING {
            planner_runtimes = rts.clone();
        }
        operator_runtimes.insert(
            name.clone(),
            RuntimeStats {
                count: rts.len(),
                p50_micros: percentile_nearest_rank(&rts, 50.0),
                p99_micros: percentile_nearest_rank(&rts, 99.0),
                max_micros: rts.iter().copied().max().unwrap_or(0),
            },
        );
    }
    Outcome {
        scenario: p.config.scenario.clone(),
        preset: p.config.preset.clone(),
        target_speed: p.target_speed,
        seed: p.config.seed,
        collided: collision.is_some(),
        collision_agent: collision.map(|c| c.1),
        collision_time: collision.map(|c| c.0),
        goal_reached: data.truth.values().any(|f| f.goal_reached),
        completion_time: last.map_or(Timestamp::ZERO, |l| *l.0),
        runlog_hash: log.hash(),
        planner_p99_micros: percentile_nearest_rank(&planner_runtimes, 99.0),
        operator_runtimes,
        planner_fallbacks: data.plans.iter().filter(|p| p.1.fallback.is_some()).count(),
        planner_runtimes_micros: planner_runtimes,
        commands_applied: data.actuations().len(),
        commands_dropped: last.map_or(0, |l| l.1.dropped),
        log_audit_clean: audit_log(log).is_clean(),
    }
}

/// A finished run held in memory.
#[derive(Debug)]
pub struct RunResult {
    pub prepared: Prepared,
    pub log: RunLog<Msg>,
    pub outcome: Outcome,
}

pub fn execute(config: &RunConfig) -> Result<RunResult, HarnessError> {
    let prepared = prepare(config)?;
    let graph = build_pipeline(&prepared)?;
    let log = run(graph, run_options(&prepared)).map_err(|f| HarnessError::Run(f.to_string()))?;
    let outcome = outcome_of(&prepared, &log);
    Ok(RunResult { prepared, log, outcome })
}

pub const RUNLOG_FILE: &str = "runlog.txt";
pub const PAYLOAD_FILE: &str = "payloads.jsonl";
pub const CONFIG_FILE: &str = "config.json";
pub const TRACE_FILE: &str = "trace.json";
pub const OUTCOME_FILE: &str = "outcome.json";

fn write(path: PathBuf, text: &str) -> Result<(), HarnessError> {
    fs::write(&path, text).map_err(|e| io_err(&path, e))
}

/// Writes the run directory: log, payload store, config, trace, outcome,
/// and the per-run metric CSVs.
pub fn write_run_dir(result: &RunResult, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir.join("metrics")).map_err(|e| io_err(dir, e))?;
    write(dir.join(RUNLOG_FILE), &result.log.serialize())?;
    let mut store = String::new();
    for (digest, json) in result.log.payload_store() {
        store.push_str(&digest);
        store.push('\t');
        store.push_str(&json);
        store.push('\n');
    }
    write(dir.join(PAYLOAD_FILE), &store)?;
    write(dir.join(CONFIG_FILE), &result.prepared.config.to_json())?;
    let trace = serde_json::to_string(&export_trace(&result.log)).expect("trace serializes");
    write(dir.join(TRACE_FILE), &trace)?;
    write(
        dir.join(OUTCOME_FILE),
        &serde_json::to_string_pretty(&result.outcome).expect("outcome serializes"),
    )?;

    let data = RunData::from_log(&result.log);
    let mut act = csv::Writer::from_writer(Vec::new());
    act.write_record(["sensor_time", "pipeline_runtime_micros", "apply_at", "applied_at"])
        .map_err(|e| io_err(dir, e))?;
    for a in data.actuations() {
        act.write_record([
            a.sensor_time.to_string(),
            a.pipeline_runtime.to_string(),
            a.apply_at.to_string(),
            a.applied_at.to_string(),
        ])
        .map_err(|e| io_err(dir, e))?;
    }
    write(
        dir.join("metrics/actuation.csv"),
        &String::from_utf8(act.into_inner().map_err(|e| io_err(dir, e))?).expect("utf8"),
    )?;
    if let Ok(j) = ego_jerk(&data, &result.prepared.world.road.centerline) {
        write(
            dir.join("metrics/jerk.csv"),
            &series_csv(["timestamp", "lateral_jerk"], &j.samples)?,
        )?;
    }
    Ok(())
}

/// Runs one config and writes its directory.
pub fn cmd_run(config: &RunConfig, out: &Path) -> Result<Outcome, HarnessError> {
    let result = execute(config)?;
    write_run_dir(&result, out)?;
    Ok(result.outcome)
}

/// Re-executes a run directory with its recorded runtimes and checks the
/// regenerated log byte for byte.
pub fn cmd_replay(dir: &Path) -> Result<(), HarnessError> {
    replay_dir(dir).map(|_| ())
}

/// Replays a run directory and writes its Chrome trace to `out`, or to the
/// directory's `trace.json` when no path is given.
pub fn cmd_trace(dir: &Path, out: Option<&Path>) -> Result<PathBuf, HarnessError> {
    let log = replay_dir(dir)?;
    let path = out.map_or_else(|| dir.join(TRACE_FILE), Path::to_path_buf);
    let trace = serde_json::to_string(&export_trace(&log)).expect("trace serializes");
    write(path.clone(), &trace)?;
    Ok(path)
}

fn replay_dir(dir: &Path) -> Result<RunLog<Msg>, HarnessError> {
    let config = RunConfig::load(&dir.join(CONFIG_FILE))?;
    let path = dir.join(RUNLOG_FILE);
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let file = LogFile::parse(&text).map_err(|e| HarnessError::ReplayMismatch {
        line: e.line,
        expected: e.message.clone(),
        found: "unparseable record".into(),
    })?;
    let prepared = prepare(&config)?;
    let graph = build_pipeline(&prepared)?;
    let log = replay(&file, graph).map_err(|f| HarnessError::Run(f.to_string()))?;
    compare_logs(&text, &log.serialize())?;
    Ok(log)
}

/// First differing line (1-based) between a recorded and a regenerated log.
pub fn compare_logs(recorded: &str, regenerated: &str) -> Result<(), HarnessError> {
    let mut a = recorded.lines();
    let mut b = regenerated.lines();
    let mut line = 0;
    loop {
        line += 1;
        match (a.next(), b.next()) {
            (None, None) => return Ok(()),
            (x, y) if x == y => continue,
            (x, y) => {
                return Err(HarnessError::ReplayMismatch {
                    line,
                    expected: x.unwrap_or("<end of log>").to_string(),
                    found: y.unwrap_or("<end of log>").to_string(),
                })
            }
        }
    }
}

/// Computes the requested metrics for a run directory and writes them
/// under `metrics/`. Returns the summary that is also written as JSON.
pub fn cmd_metrics(dir: &Path, spec: &MetricSpec) -> Result<serde_json::Value, HarnessError> {
    let config = RunConfig::load(&dir.join(CONFIG_FILE))?;
    let prepared = prepare(&config)?;
    let data = RunData::load(dir)?;
    let summary = analysis::write_metrics(&prepared, &data, spec, &dir.join("metrics"))?;
    write(
        dir.join("metrics/summary.json"),
        &serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    Ok(summary)
}
