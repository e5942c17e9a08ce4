use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use super::graph::Graph;
use super::log::{Invocation, InvocationKind, LogFile, LogRecord, RunLog};
use super::{Context, EventKind, OperatorId, OperatorSpec, Payload, RunError, RunFailure, StreamEvent, StreamId, Timestamp};

/// Queue key: (timestamp, operator, stream, seq). Ticks use `TICK_STREAM`.
type Key = (Timestamp, OperatorId, u32, u64);
const TICK_STREAM: u32 = u32::MAX;
const CLOSE_INVOCATION: u64 = u64::MAX;

enum Pending<P> {
    Deliver { event: StreamEvent<P>, ready_at: Timestamp },
    Tick,
}

struct Host<P> {
    spec: OperatorSpec<P>,
    /// Latest watermark per non-feedback read stream (`None`: nothing yet).
    input_wm: BTreeMap<StreamId, Option<Timestamp>>,
    low: Option<Timestamp>,
    pending_ts: BTreeSet<Timestamp>,
    input_ready: BTreeMap<Timestamp, Timestamp>,
    charged: u64,
    is_source: bool,
}

impl<P> Host<P> {
    fn low_watermark(&self) -> Option<Timestamp> {
        low_watermark_of(self.input_wm.values().copied())
    }
}

/// Minimum over read-stream watermarks; `TOP` for no inputs, `None` while
/// any input has not delivered a watermark yet.
pub fn low_watermark_of(inputs: impl IntoIterator<Item = Option<Timestamp>>) -> Option<Timestamp> {
    inputs.into_iter().try_fold(Timestamp::TOP, |acc, w| w.map(|w| acc.min(w)))
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Source ticks after `stop` are never scheduled.
    pub stop: Timestamp,
    /// Recorded runtimes keyed by (operator, invocation timestamp); used on
    /// replay in place of the operators' latency models.
    pub runtime_overrides: Option<BTreeMap<(OperatorId, Timestamp), u64>>,
    /// Measure host wall-clock per invocation. Never affects scheduling.
    pub profile: bool,
}

impl RunOptions {
    pub fn until(stop: Timestamp) -> Self {
        Self {
            stop,
            runtime_overrides: None,
            profile: false,
        }
    }
}

/// Canonical sequential executor.
pub struct Executor<P> {
    hosts: BTreeMap<OperatorId, Host<P>>,
    readers: BTreeMap<StreamId, Vec<OperatorId>>,
    feedback: BTreeSet<StreamId>,
    queue: BTreeMap<Key, Pending<P>>,
    next_seq: BTreeMap<StreamId, u64>,
    sent_wm: BTreeMap<StreamId, Timestamp>,
    log: RunLog<P>,
    opts: RunOptions,
    emissions: u64,
}

impl<P: Payload> Executor<P> {
    pub fn new(graph: Graph<P>, opts: RunOptions) -> Self {
        let topology = graph.topology_fingerprint();
        let names = graph.operator_names();
        let Graph {
            operators,
            readers,
            feedback,
            ..
        } = graph;
        let hosts = operators.into_iter().map(|(id, spec)| (id, Self::host(spec, &feedback))).collect();
        Self {
            hosts,
            readers,
            feedback,
            queue: BTreeMap::new(),
            next_seq: BTreeMap::new(),
            sent_wm: BTreeMap::new(),
            log: RunLog::new(topology, opts.stop, names),
            opts,
            emissions: 0,
        }
    }

    fn host(spec: OperatorSpec<P>, feedback: &BTreeSet<StreamId>) -> Host<P> {
        let input_wm: BTreeMap<StreamId, Option<Timestamp>> =
            spec.reads.iter().filter(|s| !feedback.contains(s)).map(|s| (*s, None)).collect();
        let is_source = input_wm.is_empty();
        Host {
            spec,
            input_wm,
            low: None,
            pending_ts: BTreeSet::new(),
            input_ready: BTreeMap::new(),
            charged: 0,
            is_source,
        }
    }

    pub fn low_watermark(&self, op: OperatorId) -> Result<Option<Timestamp>, RunError> {
        self.hosts.get(&op).map(Host::low_watermark).ok_or(RunError::UnknownOperator(op))
    }

    pub fn run(mut self) -> Result<RunLog<P>, RunFailure<P>> {
        match self.drive() {
            Ok(()) => Ok(self.log),
            Err(error) => Err(RunFailure { error, partial: self.log }),
        }
    }

    fn drive(&mut self) -> Result<(), RunError> {
        let ids: Vec<OperatorId> = self.hosts.keys().copied().collect();
        for id in ids {
            let host = &self.hosts[&id];
            if !host.is_source {
                continue;
            }
            match host.spec.operator.next_tick(None).filter(|t| *t <= self.opts.stop) {
                Some(t) => {
                    self.queue.insert((t, id, TICK_STREAM, 0), Pending::Tick);
                }
                None => self.close_outputs(id)?,
            }
        }
        while let Some(((t, op, _, _), pending)) = self.queue.pop_first() {
            match pending {
                Pending::Tick => self.tick(op, t)?,
                Pending::Deliver { event, ready_at } => self.deliver(op, event, ready_at)?,
            }
        }
        Ok(())
    }

    fn tick(&mut self, op: OperatorId, t: Timestamp) -> Result<(), RunError> {
        self.invoke(op, InvocationKind::Tick, t, t, None)?;
        let next = self.hosts[&op]
            .spec
            .operator
            .next_tick(Some(t))
            .filter(|n| *n > t && *n <= self.opts.stop);
        match next {
            Some(n) => {
                self.queue.insert((n, op, TICK_STREAM, 0), Pending::Tick);
                Ok(())
            }
            None => self.close_outputs(op),
        }
    }

    fn deliver(&mut self, op: OperatorId, event: StreamEvent<P>, ready_at: Timestamp) -> Result<(), RunError> {
        let t = event.timestamp;
        let feedback = self.feedback.contains(&event.stream_id);
        match event.kind {
            EventKind::Data => {
                if !feedback {
                    let host = self.hosts.get_mut(&op).unwrap();
                    host.pending_ts.insert(t);
                    let r = host.input_ready.entry(t).or_insert(t);
                    *r = (*r).max(ready_at);
                }
                self.invoke(op, InvocationKind::Data, t, ready_at.max(t), Some(&event))
            }
            EventKind::Watermark => {
                if feedback {
                    return Ok(());
                }
                let host = self.hosts.get_mut(&op).unwrap();
                host.input_wm.insert(event.stream_id, Some(t));
                if !t.is_top() {
                    host.pending_ts.insert(t);
                }
                let new_low = host.low_watermark();
                if new_low <= host.low {
                    return Ok(());
                }
                host.low = new_low;
                let bound = new_low.unwrap();
                let fire: Vec<Timestamp> = host.pending_ts.range(..=bound).copied().collect();
                for ts in fire {
                    let host = self.hosts.get_mut(&op).unwrap();
                    host.pending_ts.remove(&ts);
                    let mut start = host.input_ready.remove(&ts).unwrap_or(ts).max(ts);
                    if ts == t {
                        start = start.max(ready_at);
                    }
                    self.invoke(op, InvocationKind::Watermark, ts, start, None)?;
                }
                if bound.is_top() {
                    self.close_outputs(op)?;
                }
                Ok(())
            }
        }
    }

    fn invoke(
        &mut self,
        op: OperatorId,
        kind: InvocationKind,
        t: Timestamp,
        start: Timestamp,
        event: Option<&StreamEvent<P>>,
    ) -> Result<(), RunError> {
        let host = self.hosts.get_mut(&op).unwrap();
        let runtime = if kind == InvocationKind::Data {
            0
        } else {
            let sampled = host.spec.latency.sample(t, host.charged);
            host.charged += 1;
            self.opts
                .runtime_overrides
                .as_ref()
                .and_then(|m| m.get(&(op, t)).copied())
                .unwrap_or(sampled)
        };
        let mut ctx = Context::new(t, op, start, runtime);
        let clock = self.opts.profile.then(Instant::now);
        let operator = &mut host.spec.operator;
        let outcome = catch_unwind(AssertUnwindSafe(|| match kind {
            InvocationKind::Data => operator.on_data(&mut ctx, event.expect("data invocation carries its event")),
            InvocationKind::Watermark => operator.on_watermark(&mut ctx),
            InvocationKind::Tick => operator.on_tick(&mut ctx),
        }));
        let wall_nanos = clock.map(|c| c.elapsed().as_nanos() as u64);
        let message = match outcome {
            Ok(Ok(())) => None,
            Ok(Err(e)) => Some(e.0),
            Err(panic) => Some(
                panic
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| panic.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "operator panicked".into()),
            ),
        };
        if let Some(message) = message {
            return Err(RunError::CallbackPanic {
                operator: op,
                timestamp: t,
                message,
            });
        }
        let index = self.log.invocations.len() as u64;
        self.log.invocations.push(Invocation {
            index,
            operator_id: op,
            kind,
            timestamp: t,
            start,
            runtime_micros: runtime,
            wall_nanos,
        });
        let ready_at = ctx.completion_time();
        for (stream, kind, payload) in std::mem::take(&mut ctx.emissions) {
            self.emit(op, stream, kind, payload, t, ready_at, runtime, index)?;
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn emit(
        &mut self,
        op: OperatorId,
        stream: StreamId,
        kind: EventKind,
        payload: Option<P>,
        t: Timestamp,
        ready_at: Timestamp,
        runtime: u64,
        invocation: u64,
    ) -> Result<(), RunError> {
        if !self.hosts[&op].spec.writes.contains(&stream) {
            return Err(RunError::UndeclaredStream { operator: op, stream });
        }
        if let Some(w) = self.sent_wm.get(&stream).copied() {
            if t <= w {
                return Err(RunError::WatermarkRegression {
                    operator: op,
                    stream,
                    timestamp: t,
                    watermark: w,
                });
            }
        }
        let seq = self.next_seq.entry(stream).or_insert(0);
        let event = StreamEvent {
            kind,
            timestamp: t,
            stream_id: stream,
            seq: *seq,
            payload,
        };
        *seq += 1;
        if kind == EventKind::Watermark {
            self.sent_wm.insert(stream, t);
        }
        for r in self.readers.get(&stream).into_iter().flatten() {
            self.queue.insert(
                (t, *r, stream, event.seq),
                Pending::Deliver {
                    event: event.clone(),
                    ready_at,
                },
            );
        }
        self.log.records.push(LogRecord {
            event,
            operator_id: op,
            emission_index: self.emissions,
            invocation,
            runtime_micros: runtime,
            ready_at,
        });
        self.emissions += 1;
        Ok(())
    }

    /// Sends `TOP` on every output stream that is not yet closed.
    fn close_outputs(&mut self, op: OperatorId) -> Result<(), RunError> {
        let writes = self.hosts[&op].spec.writes.clone();
        for s in writes {
            if self.sent_wm.get(&s) != Some(&Timestamp::TOP) {
                self.emit(
                    op,
                    s,
                    EventKind::Watermark,
                    None,
                    Timestamp::TOP,
                    Timestamp::TOP,
                    0,
                    CLOSE_INVOCATION,
                )?;
            }
        }
        Ok(())
    }
}

/// Runs `graph` to completion in canonical order.
pub fn run<P: Payload>(graph: Graph<P>, opts: RunOptions) -> Result<RunLog<P>, RunFailure<P>> {
    Executor::new(graph, opts).run()
}

/// Re-executes a graph with the runtimes recorded in `log`.
pub fn replay<P: Payload>(log: &LogFile, graph: Graph<P>) -> Result<RunLog<P>, RunFailure<P>> {
    let expected = graph.topology_fingerprint();
    if expected != log.topology {
        let partial = RunLog::new(log.topology.clone(), log.stop, graph.operator_names());
        return Err(RunFailure {
            error: RunError::TopologyMismatch {
                expected,
                found: log.topology.clone(),
            },
            partial,
        });
    }
    let opts = RunOptions {
        stop: log.stop,
        runtime_overrides: Some(log.runtime_annotations()),
        profile: false,
    };
    run(graph, opts)
}

/// Hosts operator `op` alone, feeds it the events its read streams carried
/// in `log`, and returns what it emits. Because operators see nothing but
/// their streams, the result must match the operator's logged emissions.
pub fn recompute_operator<P: Payload>(log: &RunLog<P>, graph: Graph<P>, op: OperatorId) -> Result<Vec<LogRecord<P>>, RunError> {
    let feedback = graph.feedback.clone();
    let spec = graph.take_operator(op).ok_or(RunError::UnknownOperator(op))?;
    let mut overrides = BTreeMap::new();
    for r in log.records.iter().filter(|r| r.operator_id == op && !r.event.timestamp.is_top()) {
        let e = overrides.entry((op, r.event.timestamp)).or_insert(0);
        *e = r.runtime_micros.max(*e);
    }
    let reads: BTreeSet<StreamId> = spec.reads.iter().copied().collect();
    let mut exec = Executor {
        hosts: BTreeMap::from([(op, Executor::host(spec, &feedback))]),
        readers: BTreeMap::new(),
        feedback,
        queue: BTreeMap::new(),
        next_seq: BTreeMap::new(),
        sent_wm: BTreeMap::new(),
        log: RunLog::new(log.topology.clone(), log.stop, log.operator_names.clone()),
        opts: RunOptions {
            stop: log.stop,
            runtime_overrides: Some(overrides),
            profile: false,
        },
        emissions: 0,
    };
    for r in log.records.iter().filter(|r| reads.contains(&r.event.stream_id)) {
        exec.queue.insert(
            (r.event.timestamp, op, r.event.stream_id, r.event.seq),
            Pending::Deliver {
                event: r.event.clone(),
                ready_at: r.ready_at,
            },
        );
    }
    exec.drive()?;
    Ok(exec.log.records)
}
