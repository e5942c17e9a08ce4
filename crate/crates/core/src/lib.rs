//! Deterministic autonomous-driving research platform: a timestamped
//! dataflow runtime, a planar world simulator, a latency-faithful command
//! bridge, and the perception, prediction, planning, control and metrics
//! components that run on top of them.

// `!(x > 0.0)` deliberately rejects NaN; run failures carry the partial log.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::result_large_err)]

pub mod control;
pub mod dataflow;
pub mod geometry;
pub mod harness;
pub mod metrics;
pub mod perception;
pub mod planning;
pub mod prediction;
pub mod rng;
pub mod syncbridge;
pub mod worldsim;
