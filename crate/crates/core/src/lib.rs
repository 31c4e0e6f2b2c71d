//! Streaming contact-graph sketch for digital contact tracing.
//!
//! Device proximity streams are folded into an undirected contact graph whose
//! edge labels are fixed-width circular bit vectors covering the latest `D`
//! days. The graph answers direct and multilevel indirect trace queries and
//! clusters the resulting infection pathways with a disjoint-set forest.
//!
//! Module map:
//! - [`model`]: configuration, timestamps, contact vectors
//! - [`ids`]: virtual-ID assignment, rotation and resolution
//! - [`graph`]: the indexed adjacency store with its vector store, plus the
//!   binary snapshot codec
//! - [`stream`]: wire parsing, watch window and stream processing
//! - [`trace`]: the trace operator and level-wise contact tracing
//! - [`pathways`]: infection forest and cluster queries
//! - [`streamgen`]: synthetic streams and an independent ground-truth oracle
//! - [`engine`]: the stateful facade shared by the CLI and the C ABI

pub mod engine;
pub mod error;
pub mod graph;
pub mod ids;
pub mod model;
pub mod pathways;
pub mod stream;
pub mod streamgen;
pub mod trace;

#[doc(hidden)]
pub mod cli;

#[cfg(test)]
mod fixtures;

pub use engine::{Engine, IngestReport};
pub use error::{Error, Result};
pub use graph::ContactGraph;
pub use ids::{IdMode, VirtualIdTable};
pub use model::{ContactVector, SlotBits, Timestamp, TraceConfig, UserId};
pub use pathways::InfectionForest;
pub use trace::{sigma, trace_contacts, TraceEntry, TraceResult};
