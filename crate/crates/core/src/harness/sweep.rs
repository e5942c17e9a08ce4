//! Parameter sweeps over presets, target speeds and injected latencies.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::analysis::{ego_jerk, timely_ap50_at, timely_miou_at, RunData};
use super::{execute, io_err, write_run_dir, HarnessError, RunConfig};
use crate::metrics::{collision_matrix, matrix_csv, RunOutcome};
use crate::rng::mix;
use crate::syncbridge::LatencyModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    pub presets: Vec<String>,
    pub speeds: Vec<f64>,
    /// Planning latencies to inject; `None` keeps each preset's own model.
    #[serde(default)]
    pub latencies_micros: Option<Vec<u64>>,
}

/// One cell of a finished sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub preset: String,
    pub target_speed: f64,
    pub latency_micros: Option<u64>,
    pub seed: u64,
    pub collided: bool,
    pub goal_reached: bool,
    pub planner_p99_micros: u64,
    /// Runtime at which the timely metrics were evaluated.
    pub eval_runtime_micros: u64,
    pub timely_ap50: f64,
    pub timely_miou: f64,
    pub jerk_max_abs: Option<f64>,
    pub jerk_rms: Option<f64>,
    #[serde(skip)]
    pub planner_runtimes_micros: Vec<u64>,
}

/// Per-cell seed derived from the sweep's base seed and the cell coordinates.
pub fn cell_seed(base: u64, preset: &str, speed: f64, latency_micros: Option<u64>) -> u64 {
    let name = preset
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    mix(mix(base, name, speed.to_bits()), latency_micros.unwrap_or(u64::MAX), 0)
}

fn cell_name(preset: &str, speed: f64, latency: Option<u64>) -> String {
    match latency {
        Some(l) => format!("{preset}_{speed}_{l}"),
        None => format!("{preset}_{speed}"),
    }
}

fn run_cell(template: &RunConfig, preset: &str, speed: f64, latency: Option<u64>, out: &Path) -> Result<SweepRow, HarnessError> {
    let mut cfg = template.clone();
    cfg.preset = preset.to_string();
    cfg.target_speed = Some(speed);
    let seed = cell_seed(template.seed.unwrap_or(0), preset, speed, latency);
    cfg.seed = Some(seed);
    if let Some(micros) = latency {
        cfg.components.planning.latency = Some(LatencyModel::Fixed { micros });
    }
    let result = execute(&cfg)?;
    write_run_dir(&result, &out.join("cells").join(cell_name(preset, speed, latency)))?;
    let data = RunData::from_log(&result.log);
    let lt = latency.unwrap_or(result.outcome.planner_p99_micros);
    let (ap, _) = timely_ap50_at(&result.prepared, &data, lt)?;
    let (miou, _) = timely_miou_at(&result.prepared, &data, lt)?;
    let jerk = ego_jerk(&data, &result.prepared.world.road.centerline).ok();
    Ok(SweepRow {
        preset: preset.to_string(),
        target_speed: speed,
        latency_micros: latency,
        seed,
        collided: result.outcome.collided,
        goal_reached: result.outcome.goal_reached,
        planner_p99_micros: result.outcome.planner_p99_micros,
        eval_runtime_micros: lt,
        timely_ap50: ap,
        timely_miou: miou,
        jerk_max_abs: jerk.as_ref().map(|j| j.max_abs),
        jerk_rms: jerk.as_ref().map(|j| j.rms),
        planner_runtimes_micros: result.outcome.planner_runtimes_micros,
    })
}

/// Runs every cell in parallel, writes each run directory under
/// `out/cells/`, one collision matrix per latency, and `sweep.csv`.
/// Rows come back in axis order.
pub fn cmd_sweep(template: &RunConfig, axes: &SweepAxes, out: &Path) -> Result<Vec<SweepRow>, HarnessError> {
    if axes.presets.is_empty() || axes.speeds.is_empty() {
        return Err(HarnessError::Config("sweep needs at least one preset and one speed".into()));
    }
    let lats: Vec<Option<u64>> = match &axes.latencies_micros {
        Some(l) if !l.is_empty() => l.iter().copied().map(Some).collect(),
        _ => vec![None],
    };
    let mut cells = Vec::new();
    for &lat in &lats {
        for preset in &axes.presets {
            for &speed in &axes.speeds {
                cells.push((preset.clone(), speed, lat));
            }
        }
    }
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let rows: Vec<SweepRow> = cells
        .par_iter()
        .map(|(preset, speed, lat)| {
            run_cell(template, preset, *speed, *lat, out).map_err(|e| match e {
                HarnessError::Config(m) => HarnessError::Config(format!("cell {}: {m}", cell_name(preset, *speed, *lat))),
                HarnessError::Run(m) => HarnessError::Run(format!("cell {}: {m}", cell_name(preset, *speed, *lat))),
                HarnessError::Io(m) => HarnessError::Io(format!("cell {}: {m}", cell_name(preset, *speed, *lat))),
                other => other,
            })
        })
        .collect::<Result<_, _>>()?;

    for &lat in &lats {
        let outcomes: Vec<RunOutcome> = rows
            .iter()
            .filter(|r| r.latency_micros == lat)
            .map(|r| RunOutcome {
                preset: r.preset.clone(),
                target_speed: r.target_speed,
                collided: r.collided,
                planner_runtimes_micros: r.planner_runtimes_micros.clone(),
            })
            .collect();
        let matrix = collision_matrix(&outcomes, &axes.presets, &axes.speeds)?;
        let name = match lat {
            Some(l) => format!("collision_matrix_{l}.csv"),
            None => "collision_matrix.csv".to_string(),
        };
        let path = out.join(name);
        fs::write(&path, matrix_csv(&matrix)?).map_err(|e| io_err(&path, e))?;
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    let path = out.join("sweep.csv");
    w.write_record([
        "preset",
        "target_speed",
        "latency_micros",
        "seed",
        "collided",
        "goal_reached",
        "planner_p99_micros",
        "eval_runtime_micros",
        "timely_ap50",
        "timely_miou",
        "jerk_max_abs",
        "jerk_rms",
    ])
    .map_err(|e| io_err(&path, e))?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in &rows {
        w.write_record([
            r.preset.clone(),
            r.target_speed.to_string(),
            r.latency_micros.map_or(String::new(), |l| l.to_string()),
            r.seed.to_string(),
            r.collided.to_string(),
            r.goal_reached.to_string(),
            r.planner_p99_micros.to_string(),
            r.eval_runtime_micros.to_string(),
            r.timely_ap50.to_string(),
            r.timely_miou.to_string(),
            opt(r.jerk_max_abs),
            opt(r.jerk_rms),
        ])
        .map_err(|e| io_err(&path, e))?;
    }
    let text = String::from_utf8(w.into_inner().map_err(|e| io_err(&path, e))?).expect("utf8");
    fs::write(&path, text).map_err(|e| io_err(&path, e))?;
    Ok(rows)
}
