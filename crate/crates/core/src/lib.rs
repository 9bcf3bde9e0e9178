//! Dialogue distillation: build augmented post-response pairs from unpaired
//! sentences by two-hop BM25 retrieval through a paired corpus and a learned
//! matching filter, then train matching and generation students against
//! frozen teachers on the enlarged data.

pub mod bm25;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod distiller;
pub mod error;
pub mod matcher;
pub mod metrics;
pub mod model;
pub mod synth;

pub use error::{Error, ErrorClass, Result};
