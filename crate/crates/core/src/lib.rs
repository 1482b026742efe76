//! Turns multi-table relational databases into learning-ready artifacts:
//! heterogeneous temporal graphs with leakage-free subgraph sampling, and
//! flattened feature tables from a cutoff-aware deep feature synthesis
//! engine, together with task splits and evaluation metrics.

pub mod dfs;
pub mod error;
pub mod rdb;
pub mod graph;
pub mod metrics;
pub mod sampler;
pub mod synth;
pub mod task;
pub mod transform;

pub use error::{Error, Result};
