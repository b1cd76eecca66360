//! Symbolic tracking of entity existence and location through procedural
//! text, driven by semantic parses.
//!
//! The prediction path is [`parse_model`] → [`abstraction`] →
//! [`local_rules`] → [`global_reasoning`], wrapped by [`pipeline`].
//! [`semgraph`] exports parse-derived graphs for neural consumers,
//! [`gat_ref`] is a numeric reference for the graph-attention layer, and
//! [`metrics`] scores predictions at sentence, document and decision level.

pub mod abstraction;
pub mod corpus;
pub mod error;
pub mod gat_ref;
pub mod global_reasoning;
pub mod local_rules;
pub mod metrics;
pub mod par;
pub mod parse_model;
pub mod pipeline;
pub mod prediction;
pub mod semgraph;
pub mod text;

pub use error::{Error, Result};
