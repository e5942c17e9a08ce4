use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{EventKind, OperatorId, StreamEvent, StreamId, Timestamp};

const HEADER_PREFIX: &str = "#runlog v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum InvocationKind {
    Data,
    Watermark,
    Tick,
}

/// One operator callback with its emulated runtime annotation.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Invocation {
    pub index: u64,
    pub operator_id: OperatorId,
    pub kind: InvocationKind,
    pub timestamp: Timestamp,
    pub start: Timestamp,
    pub runtime_micros: u64,
    /// Host wall-clock nanoseconds; only filled in profiling mode and never
    /// serialized into the canonical log.
    pub wall_nanos: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord<P> {
    pub event: StreamEvent<P>,
    pub operator_id: OperatorId,
    /// Global emission order across the run.
    pub emission_index: u64,
    pub invocation: u64,
    pub runtime_micros: u64,
    /// Emulated availability instant (start of producing invocation plus
    /// its runtime). Derived state; recomputed on replay.
    pub ready_at: Timestamp,
}

/// Everything that happened in one run, in emission order.
#[derive(Debug, Clone)]
pub struct RunLog<P> {
    pub topology: String,
    pub stop: Timestamp,
    pub operator_names: BTreeMap<OperatorId, String>,
    pub records: Vec<LogRecord<P>>,
    pub invocations: Vec<Invocation>,
}

pub fn payload_digest<P: Serialize>(payload: &P) -> String {
    let bytes = serde_json::to_vec(payload).expect("payloads serialize to JSON");
    hex::encode(&Sha256::digest(&bytes)[..8])
}

fn canonical_key<P>(r: &LogRecord<P>) -> (Timestamp, StreamId, EventKind, u64) {
    (r.event.timestamp, r.event.stream_id, r.event.kind, r.event.seq)
}

impl<P: Serialize> RunLog<P> {
    pub fn new(topology: String, stop: Timestamp, operator_names: BTreeMap<OperatorId, String>) -> Self {
        Self {
            topology,
            stop,
            operator_names,
            records: Vec::new(),
            invocations: Vec::new(),
        }
    }

    /// Records sorted by (timestamp, stream, data-before-watermark, seq).
    pub fn canonical_records(&self) -> Vec<&LogRecord<P>> {
        let mut v: Vec<&LogRecord<P>> = self.records.iter().collect();
        v.sort_by_key(|r| canonical_key(r));
        v
    }

    /// Newline-delimited canonical form: a header line, then one
    /// tab-separated record per event with fields timestamp, stream, kind,
    /// seq, operator, payload digest, runtime.
    pub fn serialize(&self) -> String {
        let mut out = format!("{HEADER_PREFIX} topology={} stop={}\n", self.topology, self.stop);
        for r in self.canonical_records() {
            let digest = match &r.event.payload {
                Some(p) => payload_digest(p),
                None => "-".to_string(),
            };
            let kind = match r.event.kind {
                EventKind::Data => "D",
                EventKind::Watermark => "W",
            };
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.event.timestamp, r.event.stream_id, kind, r.event.seq, r.operator_id, digest, r.runtime_micros
            )
            .unwrap();
        }
        out
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.serialize().as_bytes()))
    }

    /// Digest → JSON for every distinct payload, in canonical order of first
    /// appearance.
    pub fn payload_store(&self) -> Vec<(String, String)> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for r in self.canonical_records() {
            if let Some(p) = &r.event.payload {
                let d = payload_digest(p);
                if seen.insert(d.clone()) {
                    out.push((d, serde_json::to_string(p).unwrap()));
                }
            }
        }
        out
    }

    /// Data payloads on `stream` in canonical order.
    pub fn stream_data(&self, stream: StreamId) -> Vec<(&LogRecord<P>, &P)> {
        self.canonical_records()
            .into_iter()
            .filter(|r| r.event.stream_id == stream)
            .filter_map(|r| r.event.payload.as_ref().map(|p| (r, p)))
            .collect()
    }
}

/// One parsed line of a serialized log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogLine {
    pub timestamp: Timestamp,
    pub stream_id: StreamId,
    pub kind: EventKind,
    pub seq: u64,
    pub operator_id: OperatorId,
    pub digest: Option<String>,
    pub runtime_micros: u64,
}

impl LogLine {
    pub fn render(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.timestamp,
            self.stream_id,
            if self.kind == EventKind::Data { "D" } else { "W" },
            self.seq,
            self.operator_id,
            self.digest.as_deref().unwrap_or("-"),
            self.runtime_micros
        )
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("run log line {line}: {message}")]
pub struct LogParseError {
    pub line: usize,
    pub message: String,
}

/// A serialized run log read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct LogFile {
    pub topology: String,
    pub stop: Timestamp,
    pub lines: Vec<LogLine>,
}

impl LogFile {
    pub fn parse(text: &str) -> Result<Self, LogParseError> {
        let err = |line: usize, message: String| LogParseError { line, message };
        let mut it = text.lines().enumerate();
        let (_, header) = it.next().ok_or_else(|| err(1, "empty log".into()))?;
        let rest = header.strip_prefix(HEADER_PREFIX).ok_or_else(|| err(1, "missing header".into()))?;
        let mut topology = None;
        let mut stop = None;
        for kv in rest.split_whitespace() {
            match kv.split_once('=') {
                Some(("topology", v)) => topology = Some(v.to_string()),
                Some(("stop", v)) => stop = Timestamp::parse(v),
                _ => return Err(err(1, format!("unexpected header field {kv:?}"))),
            }
        }
        let topology = topology.ok_or_else(|| err(1, "header lacks topology".into()))?;
        let stop = stop.ok_or_else(|| err(1, "header lacks stop".into()))?;
        let mut lines = Vec::new();
        for (i, l) in it {
            let n = i + 1;
            if l.is_empty() {
                continue;
            }
            let f: Vec<&str> = l.split('\t').collect();
            if f.len() != 7 {
                return Err(err(n, format!("expected 7 fields, found {}", f.len())));
            }
            let num =
                |s: &str, what: &str| -> Result<u64, LogParseError> { s.parse::<u64>().map_err(|_| err(n, format!("bad {what} {s:?}"))) };
            let timestamp = Timestamp::parse(f[0]).ok_or_else(|| err(n, format!("bad timestamp {:?}", f[0])))?;
            let kind = match f[2] {
                "D" => EventKind::Data,
                "W" => EventKind::Watermark,
                k => return Err(err(n, format!("bad kind {k:?}"))),
            };
            lines.push(LogLine {
                timestamp,
                stream_id: num(f[1], "stream")? as StreamId,
                kind,
                seq: num(f[3], "seq")?,
                operator_id: num(f[4], "operator")? as OperatorId,
                digest: (f[5] != "-").then(|| f[5].to_string()),
                runtime_micros: num(f[6], "runtime")?,
            });
        }
        Ok(Self { topology, stop, lines })
    }

    /// Recorded runtime per (operator, timestamp). Data callbacks are always
    /// free, so the maximum over an operator's emissions at one timestamp is
    /// the runtime of its watermark or tick invocation.
    pub fn runtime_annotations(&self) -> BTreeMap<(OperatorId, Timestamp), u64> {
        let mut m: BTreeMap<(OperatorId, Timestamp), u64> = BTreeMap::new();
        for l in &self.lines {
            if l.timestamp.is_top() {
                continue;
            }
            let e = m.entry((l.operator_id, l.timestamp)).or_default();
            *e = (*e).max(l.runtime_micros);
        }
        m
    }
}

/// Result of checking stream invariants over a log.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LogAudit {
    pub events: usize,
    pub late_data: usize,
    pub watermark_regressions: usize,
    pub seq_violations: usize,
}

impl LogAudit {
    pub fn is_clean(&self) -> bool {
        self.late_data == 0 && self.watermark_regressions == 0 && self.seq_violations == 0
    }
}

/// Replays the emission order and counts late data, non-increasing
/// watermarks and sequence-number gaps, per stream.
pub fn audit_log<P>(log: &RunLog<P>) -> LogAudit {
    let mut order: Vec<&LogRecord<P>> = log.records.iter().collect();
    order.sort_by_key(|r| r.emission_index);
    let mut last_wm: BTreeMap<StreamId, Timestamp> = BTreeMap::new();
    let mut next_seq: BTreeMap<StreamId, u64> = BTreeMap::new();
    let mut audit = LogAudit {
        events: order.len(),
        ..Default::default()
    };
    for r in order {
        let s = r.event.stream_id;
        let expected = next_seq.entry(s).or_insert(0);
        if r.event.seq != *expected {
            audit.seq_violations += 1;
        }
        *expected = r.event.seq + 1;
        let wm = last_wm.get(&s).copied();
        match r.event.kind {
            EventKind::Data => {
                if wm.is_some_and(|w| r.event.timestamp <= w) {
                    audit.late_data += 1;
                }
            }
            EventKind::Watermark => {
                if wm.is_some_and(|w| r.event.timestamp <= w) {
                    audit.watermark_regressions += 1;
                }
                last_wm.insert(s, r.event.timestamp);
            }
        }
    }
    audit
}
