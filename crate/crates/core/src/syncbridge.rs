//! Pseudo-asynchronous bridge between the control operator and the
//! simulator: commands are held until simulation time has caught up with the
//! sensor time plus the pipeline runtime that produced them.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataflow::Timestamp;
use crate::rng::keyed_rng;
use crate::worldsim::EgoCommand;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Distribution1D {
    Uniform { lo: u64, hi: u64 },
    Normal { mean: f64, std: f64 },
}

/// Emulated runtime of an operator invocation, in microseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum LatencyModel {
    Fixed {
        micros: u64,
    },
    /// Draws are keyed by (seed, invocation timestamp), so a sample does not
    /// depend on how many other samples were taken before it.
    Seeded {
        distribution: Distribution1D,
        seed: u64,
    },
    /// Per-invocation runtimes, cycled when exhausted.
    TraceDriven {
        micros: Vec<u64>,
    },
}

#[derive(Debug, Error)]
pub enum LatencyError {
    #[error("cannot read latency trace: {0}")]
    Io(#[from] std::io::Error),
    #[error("latency trace line {line}: {text:?} is not a non-negative integer")]
    BadLine { line: usize, text: String },
    #[error("latency trace is empty")]
    Empty,
    #[error("invalid distribution parameters: {0}")]
    BadDistribution(String),
}

impl LatencyModel {
    pub fn fixed_ms(ms: f64) -> Self {
        LatencyModel::Fixed {
            micros: (ms * 1000.0).round() as u64,
        }
    }

    pub fn sample(&self, timestamp: Timestamp, invocation: u64) -> u64 {
        match self {
            LatencyModel::Fixed { micros } => *micros,
            LatencyModel::Seeded { distribution, seed } => {
                let key = timestamp.micros().unwrap_or(u64::MAX);
                let mut rng = keyed_rng(*seed, key, 0);
                match distribution {
                    Distribution1D::Uniform { lo, hi } if lo >= hi => *lo,
                    Distribution1D::Uniform { lo, hi } => rng.random_range(*lo..=*hi),
                    Distribution1D::Normal { mean, std } => {
                        let v = Normal::new(*mean, std.max(0.0)).map(|d| d.sample(&mut rng)).unwrap_or(*mean);
                        v.max(0.0).round() as u64
                    }
                }
            }
            LatencyModel::TraceDriven { micros } if micros.is_empty() => 0,
            LatencyModel::TraceDriven { micros } => micros[(invocation % micros.len() as u64) as usize],
        }
    }

    pub fn validate(&self) -> Result<(), LatencyError> {
        match self {
            LatencyModel::Seeded {
                distribution: Distribution1D::Normal { mean, std },
                ..
            } if !(mean.is_finite() && std.is_finite() && *std >= 0.0) => {
                Err(LatencyError::BadDistribution(format!("normal({mean}, {std})")))
            }
            LatencyModel::Seeded {
                distribution: Distribution1D::Uniform { lo, hi },
                ..
            } => Uniform::new_inclusive(*lo, *hi)
                .map(|_| ())
                .map_err(|e| LatencyError::BadDistribution(e.to_string())),
            LatencyModel::TraceDriven { micros } if micros.is_empty() => Err(LatencyError::Empty),
            _ => Ok(()),
        }
    }

    /// Parses a one-column text trace; blank lines and `#` comments skipped.
    pub fn parse_trace(text: &str) -> Result<Self, LatencyError> {
        let mut micros = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            micros.push(t.parse::<u64>().map_err(|_| LatencyError::BadLine {
                line: i + 1,
                text: t.to_string(),
            })?);
        }
        if micros.is_empty() {
            return Err(LatencyError::Empty);
        }
        Ok(LatencyModel::TraceDriven { micros })
    }

    pub fn load_trace(path: &Path) -> Result<Self, LatencyError> {
        Self::parse_trace(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendingCommand {
    pub command: EgoCommand,
    pub sensor_time: Timestamp,
    pub pipeline_runtime: u64,
    pub apply_at: Timestamp,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SyncError {
    #[error("poll at {now} after poll at {last}")]
    TimeRegression { now: Timestamp, last: Timestamp },
    #[error("poll time {0} is not a tick boundary")]
    OffTick(Timestamp),
}

/// Rounds `t` up to the next multiple of `tick`.
pub fn ceil_to_tick(t: u64, tick: u64) -> u64 {
    t.div_ceil(tick) * tick
}

#[derive(Debug, Clone)]
pub struct Synchronizer {
    tick_micros: u64,
    pending: Vec<PendingCommand>,
    last_poll: Option<Timestamp>,
    last_applied_sensor: Option<Timestamp>,
    dropped: u64,
}

impl Synchronizer {
    pub fn new(tick_micros: u64) -> Self {
        assert!(tick_micros > 0, "tick must be positive");
        Self {
            tick_micros,
            pending: Vec::new(),
            last_poll: None,
            last_applied_sensor: None,
            dropped: 0,
        }
    }

    pub fn tick_micros(&self) -> u64 {
        self.tick_micros
    }

    pub fn pending(&self) -> &[PendingCommand] {
        &self.pending
    }

    /// Commands superseded before they could be applied.
    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn submit(&mut self, command: EgoCommand, sensor_time: Timestamp, pipeline_runtime: u64) -> PendingCommand {
        let due = sensor_time.add_micros(pipeline_runtime).as_micros();
        let cmd = PendingCommand {
            command,
            sensor_time,
            pipeline_runtime,
            apply_at: Timestamp::from_micros(ceil_to_tick(due, self.tick_micros)),
        };
        if self.last_applied_sensor.is_some_and(|s| sensor_time <= s) {
            self.dropped += 1;
            return cmd;
        }
        let before = self.pending.len();
        self.pending
            .retain(|p| !(p.apply_at >= cmd.apply_at && p.sensor_time < cmd.sensor_time));
        self.dropped += (before - self.pending.len()) as u64;
        self.pending.push(cmd);
        cmd
    }

    /// Removes every command due at `sim_time` and returns the freshest.
    pub fn poll(&mut self, sim_time: Timestamp) -> Result<Option<PendingCommand>, SyncError> {
        if let Some(last) = self.last_poll {
            if sim_time < last {
                return Err(SyncError::TimeRegression { now: sim_time, last });
            }
        }
        if !sim_time.as_micros().is_multiple_of(self.tick_micros) {
            return Err(SyncError::OffTick(sim_time));
        }
        self.last_poll = Some(sim_time);
        let (due, rest): (Vec<_>, Vec<_>) = self.pending.iter().partition(|p| p.apply_at <= sim_time);
        self.pending = rest;
        let best = due.iter().copied().max_by_key(|p| p.sensor_time);
        if let Some(b) = best {
            self.dropped += due.len() as u64 - 1;
            self.last_applied_sensor = Some(b.sensor_time);
            let before = self.pending.len();
            self.pending.retain(|p| p.sensor_time > b.sensor_time);
            self.dropped += (before - self.pending.len()) as u64;
        }
        Ok(best)
    }
}
