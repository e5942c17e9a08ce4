//! Timestamped dataflow runtime.
//!
//! Operators exchange immutable messages over streams. Every stream carries
//! data events and watermarks; a watermark with timestamp `t` promises that
//! no further event at or below `t` will appear on that stream. An operator's
//! watermark callback for `t` runs once the minimum watermark over its read
//! streams reaches `t`, which makes every operator a sequential process that
//! only reacts to complete inputs. The executor drains a single priority
//! queue in canonical key order so runs are reproducible bit for bit.

mod executor;
mod graph;
mod log;
mod trace;

use std::fmt;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use executor::{low_watermark_of, recompute_operator, replay, run, Executor, RunOptions};
pub use graph::{build_graph, Graph, GraphError};
pub use log::{audit_log, payload_digest, Invocation, InvocationKind, LogAudit, LogFile, LogLine, LogParseError, LogRecord, RunLog};
pub use trace::{export_trace, TraceEvent};

use crate::syncbridge::LatencyModel;

pub type StreamId = u32;
pub type OperatorId = u32;

/// Simulation time in integer microseconds, plus a `TOP` element that is
/// greater than every finite instant.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(u64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);
    pub const TOP: Timestamp = Timestamp(u64::MAX);

    pub const fn from_micros(micros: u64) -> Self {
        assert!(micros < u64::MAX, "finite timestamps stay below TOP");
        Timestamp(micros)
    }

    pub fn from_secs_f64(secs: f64) -> Self {
        Self::from_micros((secs * 1e6).round().max(0.0) as u64)
    }

    /// Finite microseconds, `None` for `TOP`.
    pub fn micros(self) -> Option<u64> {
        (!self.is_top()).then_some(self.0)
    }

    pub fn is_top(self) -> bool {
        self.0 == u64::MAX
    }

    /// Finite microseconds; panics on `TOP`.
    pub fn as_micros(self) -> u64 {
        self.micros().expect("TOP has no finite value")
    }

    pub fn as_secs_f64(self) -> f64 {
        self.as_micros() as f64 * 1e-6
    }

    /// `TOP` absorbs any duration.
    pub fn add_micros(self, d: u64) -> Self {
        if self.is_top() {
            return self;
        }
        Timestamp(self.0.checked_add(d).filter(|v| *v < u64::MAX).expect("timestamp overflow"))
    }

    pub fn parse(s: &str) -> Option<Self> {
        if s == "top" {
            Some(Self::TOP)
        } else {
            s.parse::<u64>().ok().filter(|v| *v < u64::MAX).map(Timestamp)
        }
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_top() {
            f.write_str("top")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl fmt::Debug for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T({self})")
    }
}

/// Message types that can flow through a graph.
pub trait Payload: Clone + Serialize + DeserializeOwned + Send + 'static {}
impl<T: Clone + Serialize + DeserializeOwned + Send + 'static> Payload for T {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Data,
    Watermark,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamEvent<P> {
    pub kind: EventKind,
    pub timestamp: Timestamp,
    pub stream_id: StreamId,
    pub seq: u64,
    pub payload: Option<P>,
}

impl<P> StreamEvent<P> {
    pub fn data(&self) -> Option<&P> {
        self.payload.as_ref()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{0}")]
pub struct OperatorError(pub String);

impl OperatorError {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

/// A sequential process in the graph. State lives in the implementing type;
/// all communication goes through the [`Context`].
pub trait Operator<P>: Send {
    fn on_data(&mut self, _ctx: &mut Context<P>, _event: &StreamEvent<P>) -> Result<(), OperatorError> {
        Ok(())
    }

    fn on_watermark(&mut self, _ctx: &mut Context<P>) -> Result<(), OperatorError> {
        Ok(())
    }

    /// Sources only: the next instant at which `on_tick` should run, strictly
    /// after `after` (or the first instant when `after` is `None`).
    fn next_tick(&self, _after: Option<Timestamp>) -> Option<Timestamp> {
        None
    }

    fn on_tick(&mut self, _ctx: &mut Context<P>) -> Result<(), OperatorError> {
        Ok(())
    }
}

/// Everything an operator needs to know about one invocation, plus the
/// emission buffer. Emissions always carry the invocation's timestamp.
pub struct Context<P> {
    timestamp: Timestamp,
    operator_id: OperatorId,
    start: Timestamp,
    runtime_micros: u64,
    pub(crate) emissions: Vec<(StreamId, EventKind, Option<P>)>,
}

impl<P> Context<P> {
    pub(crate) fn new(timestamp: Timestamp, operator_id: OperatorId, start: Timestamp, runtime_micros: u64) -> Self {
        Self {
            timestamp,
            operator_id,
            start,
            runtime_micros,
            emissions: Vec::new(),
        }
    }

    pub fn timestamp(&self) -> Timestamp {
        self.timestamp
    }

    pub fn operator_id(&self) -> OperatorId {
        self.operator_id
    }

    /// Emulated runtime charged to this invocation.
    pub fn runtime_micros(&self) -> u64 {
        self.runtime_micros
    }

    /// Emulated instant at which the invocation's inputs were all available.
    pub fn start_time(&self) -> Timestamp {
        self.start
    }

    /// Emulated instant at which this invocation's outputs become available.
    pub fn completion_time(&self) -> Timestamp {
        self.start.add_micros(self.runtime_micros)
    }

    pub fn send(&mut self, stream: StreamId, payload: P) {
        self.emissions.push((stream, EventKind::Data, Some(payload)));
    }

    pub fn send_watermark(&mut self, stream: StreamId) {
        self.emissions.push((stream, EventKind::Watermark, None));
    }
}

/// Declarative description of one operator.
pub struct OperatorSpec<P> {
    pub id: OperatorId,
    pub name: String,
    pub reads: Vec<StreamId>,
    pub writes: Vec<StreamId>,
    /// Emulated runtime charged to watermark and tick invocations.
    pub latency: LatencyModel,
    pub operator: Box<dyn Operator<P>>,
}

impl<P> OperatorSpec<P> {
    pub fn new(
        id: OperatorId,
        name: impl Into<String>,
        reads: Vec<StreamId>,
        writes: Vec<StreamId>,
        operator: impl Operator<P> + 'static,
    ) -> Self {
        Self {
            id,
            name: name.into(),
            reads,
            writes,
            latency: LatencyModel::Fixed { micros: 0 },
            operator: Box::new(operator),
        }
    }

    pub fn with_latency(mut self, latency: LatencyModel) -> Self {
        self.latency = latency;
        self
    }
}

impl<P> fmt::Debug for OperatorSpec<P> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OperatorSpec")
            .field("id", &self.id)
            .field("name", &self.name)
            .field("reads", &self.reads)
            .field("writes", &self.writes)
            .finish()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RunError {
    #[error("operator {operator} emitted on stream {stream} at {timestamp} not above its watermark {watermark}")]
    WatermarkRegression {
        operator: OperatorId,
        stream: StreamId,
        timestamp: Timestamp,
        watermark: Timestamp,
    },
    #[error("operator {operator} failed at {timestamp}: {message}")]
    CallbackPanic {
        operator: OperatorId,
        timestamp: Timestamp,
        message: String,
    },
    #[error("operator {operator} wrote to undeclared stream {stream}")]
    UndeclaredStream { operator: OperatorId, stream: StreamId },
    #[error("unknown operator {0}")]
    UnknownOperator(OperatorId),
    #[error("log topology {found} does not match graph topology {expected}")]
    TopologyMismatch { expected: String, found: String },
}

/// A failed run together with everything logged before the failure.
#[derive(Debug)]
pub struct RunFailure<P> {
    pub error: RunError,
    pub partial: RunLog<P>,
}

impl<P> fmt::Display for RunFailure<P> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({} records logged)", self.error, self.partial.records.len())
    }
}

impl<P: fmt::Debug> std::error::Error for RunFailure<P> {}
