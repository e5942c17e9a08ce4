use std::collections::{BTreeMap, BTreeSet, VecDeque};

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{OperatorId, OperatorSpec, StreamId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("operator id {0} registered twice")]
    DuplicateOperator(OperatorId),
    #[error("stream {0} has more than one writer")]
    DuplicateWriter(StreamId),
    #[error("stream {0} is read or flagged but never written")]
    UnknownStream(StreamId),
    #[error("cycle through operators {0:?} uses no feedback stream")]
    UnflaggedCycle(Vec<OperatorId>),
    #[error("graph is not connected")]
    Disconnected,
}

/// A validated operator graph.
pub struct Graph<P> {
    pub(crate) operators: BTreeMap<OperatorId, OperatorSpec<P>>,
    pub(crate) readers: BTreeMap<StreamId, Vec<OperatorId>>,
    pub(crate) writers: BTreeMap<StreamId, OperatorId>,
    pub(crate) feedback: BTreeSet<StreamId>,
}

impl<P> Graph<P> {
    pub fn operator_ids(&self) -> impl Iterator<Item = OperatorId> + '_ {
        self.operators.keys().copied()
    }

    pub fn operator(&self, id: OperatorId) -> Option<&OperatorSpec<P>> {
        self.operators.get(&id)
    }

    pub fn is_feedback(&self, stream: StreamId) -> bool {
        self.feedback.contains(&stream)
    }

    pub fn writer_of(&self, stream: StreamId) -> Option<OperatorId> {
        self.writers.get(&stream).copied()
    }

    pub fn operator_names(&self) -> BTreeMap<OperatorId, String> {
        self.operators.iter().map(|(k, v)| (*k, v.name.clone())).collect()
    }

    /// Fingerprint of ids, names, stream wiring and feedback flags.
    pub fn topology_fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for (id, op) in &self.operators {
            h.update(format!("op {id} {} r{:?} w{:?}\n", op.name, op.reads, op.writes));
        }
        h.update(format!("feedback {:?}\n", self.feedback));
        hex::encode(&h.finalize()[..8])
    }

    /// Removes and returns one operator spec; used to re-host an operator
    /// in isolation.
    pub(crate) fn take_operator(mut self, id: OperatorId) -> Option<OperatorSpec<P>> {
        self.operators.remove(&id)
    }
}

/// Validates operator wiring. Operators are keyed by id, so registration
/// order never matters. Cycles are allowed only through `feedback` streams.
pub fn build_graph<P>(operators: Vec<OperatorSpec<P>>, feedback: &[StreamId]) -> Result<Graph<P>, GraphError> {
    let mut ops = BTreeMap::new();
    for op in operators {
        if ops.contains_key(&op.id) {
            return Err(GraphError::DuplicateOperator(op.id));
        }
        ops.insert(op.id, op);
    }
    let mut writers = BTreeMap::new();
    for (id, op) in &ops {
        for s in &op.writes {
            if writers.insert(*s, *id).is_some() {
                return Err(GraphError::DuplicateWriter(*s));
            }
        }
    }
    let mut readers: BTreeMap<StreamId, Vec<OperatorId>> = BTreeMap::new();
    for (id, op) in &ops {
        for s in &op.reads {
            if !writers.contains_key(s) {
                return Err(GraphError::UnknownStream(*s));
            }
            readers.entry(*s).or_default().push(*id);
        }
    }
    let feedback: BTreeSet<StreamId> = feedback.iter().copied().collect();
    if let Some(s) = feedback.iter().find(|s| !writers.contains_key(s)) {
        return Err(GraphError::UnknownStream(*s));
    }

    // Kahn's algorithm over non-feedback edges; leftovers lie on a cycle.
    let mut indeg: BTreeMap<OperatorId, usize> = ops.keys().map(|k| (*k, 0)).collect();
    let mut succ: BTreeMap<OperatorId, Vec<OperatorId>> = BTreeMap::new();
    for (s, rs) in &readers {
        if feedback.contains(s) {
            continue;
        }
        let w = writers[s];
        for r in rs {
            succ.entry(w).or_default().push(*r);
            *indeg.get_mut(r).unwrap() += 1;
        }
    }
    let mut ready: VecDeque<OperatorId> = indeg.iter().filter(|(_, d)| **d == 0).map(|(k, _)| *k).collect();
    let mut seen = 0;
    while let Some(n) = ready.pop_front() {
        seen += 1;
        for m in succ.get(&n).into_iter().flatten() {
            let d = indeg.get_mut(m).unwrap();
            *d -= 1;
            if *d == 0 {
                ready.push_back(*m);
            }
        }
    }
    if seen != ops.len() {
        let cyc = indeg.iter().filter(|(_, d)| **d > 0).map(|(k, _)| *k).collect();
        return Err(GraphError::UnflaggedCycle(cyc));
    }

    // Undirected connectivity over every stream.
    if let Some(first) = ops.keys().next().copied() {
        let mut adj: BTreeMap<OperatorId, BTreeSet<OperatorId>> = BTreeMap::new();
        for (s, rs) in &readers {
            let w = writers[s];
            for r in rs {
                adj.entry(w).or_default().insert(*r);
                adj.entry(*r).or_default().insert(w);
            }
        }
        let mut visited = BTreeSet::from([first]);
        let mut stack = vec![first];
        while let Some(n) = stack.pop() {
            for m in adj.get(&n).into_iter().flatten() {
                if visited.insert(*m) {
                    stack.push(*m);
                }
            }
        }
        if visited.len() != ops.len() {
            return Err(GraphError::Disconnected);
        }
    }

    Ok(Graph {
        operators: ops,
        readers,
        writers,
        feedback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataflow::Operator;

    struct Nop;
    impl Operator<u64> for Nop {}

    fn spec(id: OperatorId, reads: Vec<StreamId>, writes: Vec<StreamId>) -> OperatorSpec<u64> {
        OperatorSpec::new(id, format!("op{id}"), reads, writes, Nop)
    }

    #[test]
    fn minimal_pipeline_is_valid() {
        let g = build_graph(vec![spec(0, vec![], vec![0]), spec(1, vec![0], vec![])], &[]).unwrap();
        assert_eq!(g.writer_of(0), Some(0));
    }

    #[test]
    fn duplicate_writer_rejected() {
        let r = build_graph(
            vec![spec(0, vec![], vec![0]), spec(1, vec![], vec![0]), spec(2, vec![0], vec![])],
            &[],
        );
        assert_eq!(r.err(), Some(GraphError::DuplicateWriter(0)));
    }

    #[test]
    fn unknown_stream_rejected() {
        let r = build_graph(vec![spec(0, vec![], vec![0]), spec(1, vec![0, 9], vec![])], &[]);
        assert_eq!(r.err(), Some(GraphError::UnknownStream(9)));
    }

    #[test]
    fn cycles_need_feedback_flag() {
        let ops = || vec![spec(0, vec![1], vec![0]), spec(1, vec![0], vec![1])];
        assert!(matches!(build_graph(ops(), &[]), Err(GraphError::UnflaggedCycle(_))));
        assert!(build_graph(ops(), &[1]).is_ok());
    }

    #[test]
    fn disconnected_rejected() {
        let r = build_graph(
            vec![
                spec(0, vec![], vec![0]),
                spec(1, vec![0], vec![]),
                spec(2, vec![], vec![5]),
                spec(3, vec![5], vec![]),
            ],
            &[],
        );
        assert_eq!(r.err(), Some(GraphError::Disconnected));
    }

    #[test]
    fn registration_order_does_not_change_fingerprint() {
        let a = build_graph(vec![spec(0, vec![], vec![0]), spec(1, vec![0], vec![])], &[]).unwrap();
        let b = build_graph(vec![spec(1, vec![0], vec![]), spec(0, vec![], vec![0])], &[]).unwrap();
        assert_eq!(a.topology_fingerprint(), b.topology_fingerprint());
    }
}
