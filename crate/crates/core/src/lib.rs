//! Attention-based heterogeneous graph network for dialogue relation extraction.

pub mod annotate;
pub mod autograd;
pub mod cache;
pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod gat;
pub mod hetgraph;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod synthetic;
pub mod traineval;
pub mod nn;
pub mod vectors;

pub use error::{Error, Result};
