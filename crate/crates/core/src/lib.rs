//! State-aware fuzzing workbench for a simulated SSD flash translation layer.
//!
//! The crate bundles a deterministic SSD firmware model with block-level
//! instrumentation, a byte-genome codec for host command sequences, a state
//! engine that steers input selection by firmware-variable changes, and the
//! campaign driver and report writers built on top of them.

pub mod campaign;
pub mod codec;
pub mod coverage;
pub mod engine;
pub mod report;
pub mod ssd;
