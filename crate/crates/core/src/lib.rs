//! Heterogeneous academic graph store, neighbour sampling, node encoding and
//! cascade-based citation prediction.

pub mod cascade;
pub mod config;
pub mod dataset;
pub mod encoder;
pub mod error;
pub mod graph;
pub mod hashing;
pub mod metrics;
pub mod pipeline;
pub mod sampler;
pub mod synth;
pub mod util;

pub use error::{Error, Result};
pub use graph::{EdgeKind, EdgeRecord, GraphBuilder, HeteroGraph, NodeId, NodeKind, NodeRecord};
