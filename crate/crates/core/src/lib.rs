//! Feature engineering for sandbox API-call-sequence reports.
//!
//! Two rival pipelines turn reports into model input: knowledge-based
//! encoders ([`encoders`]) produce a 132-dimensional vector per call, while
//! the NLP pipeline ([`nlp`]) cleans the raw report text into a fixed-length
//! token-id sequence. [`split`] builds bias-aware temporal splits, [`model`]
//! trains a multi-width 1-D CNN over either representation and [`explain`]
//! attributes its decisions to feature blocks or tokens.

pub mod cli;
pub mod encoders;
pub mod error;
pub mod experiment;
pub mod explain;
pub mod ingest;
pub mod model;
pub mod nlp;
pub mod split;
pub mod synth;

pub use error::{Error, Result};
