//! Graph-driven multi-task variational autoencoder over admission records.

pub mod checkpoint;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod neural;
pub mod trainer;

pub use error::{Error, Result};
