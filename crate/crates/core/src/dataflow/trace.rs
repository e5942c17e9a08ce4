use serde::{Deserialize, Serialize};

use super::log::RunLog;
use super::OperatorId;

/// Complete ("X") event in the Chrome trace-event format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub name: String,
    pub ph: String,
    pub ts: u64,
    pub dur: u64,
    pub pid: u32,
    pub tid: OperatorId,
}

/// One event per finite invocation, with `ts` at the invocation timestamp
/// and `dur` equal to its emulated runtime.
pub fn export_trace<P>(log: &RunLog<P>) -> Vec<TraceEvent> {
    let mut events: Vec<TraceEvent> = log
        .invocations
        .iter()
        .filter_map(|inv| {
            let ts = inv.timestamp.micros()?;
            Some(TraceEvent {
                name: log
                    .operator_names
                    .get(&inv.operator_id)
                    .cloned()
                    .unwrap_or_else(|| format!("op{}", inv.operator_id)),
                ph: "X".into(),
                ts,
                dur: inv.runtime_micros,
                pid: 1,
                tid: inv.operator_id,
            })
        })
        .collect();
    events.sort_by_key(|e| (e.ts, e.tid));
    events
}
