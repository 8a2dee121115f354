//! Event-triggered consensus of linear multi-agent systems over jointly
//! connected switching topologies.
//!
//! The crate provides:
//! - a dense linear-algebra kernel (matrix exponential, neutral-stability
//!   decomposition, gain synthesis, regulator equations) in [`linalg`];
//! - undirected switching-topology modelling and joint-connectivity checks
//!   in [`graph`];
//! - the broadcast-estimate consensus protocol for homogeneous agents in
//!   [`homogeneous`] and the observer-based output-consensus protocol for
//!   heterogeneous agents in [`heterogeneous`];
//! - a deterministic fixed-step simulation engine with event logging and
//!   Zeno diagnostics in [`engine`];
//! - scenario-file loading, validation, and result serialization in
//!   [`scenario`].

// Negated comparisons like `!(c > 0.0)` are used on purpose: they reject NaN
// along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod graph;
pub mod heterogeneous;
pub mod homogeneous;
pub mod linalg;
pub mod scenario;

pub use nalgebra::{DMatrix, DVector};
