//! Task-specific embeddings for check-in data.
//!
//! The crate turns raw check-in logs into two bipartite graphs (users versus
//! temporal-locations, locations versus temporal-users), reweights the
//! entity-to-composite edges by how strongly each composite node is skewed
//! toward a prediction target's classes, runs weighted random walks over the
//! result, trains skip-gram vectors with negative sampling on the walks and
//! evaluates them with logistic regression.
//!
//! The stages live in their own modules and can be driven individually or
//! through [`pipeline::run_pipeline`].

pub mod classify;
pub mod cli;
pub mod config;
pub mod embed;
pub mod error;
pub mod graph;
pub mod ingest;
pub mod pipeline;
pub mod rng;
pub mod sampling;
pub mod synth;
pub mod task;
pub mod walker;

pub use error::{Error, Result};
