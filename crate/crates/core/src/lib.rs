//! Cascaded extractive question answering with an integrated triage stage.
//!
//! A small recurrent reader is split at layer `T`. A replicated output head
//! scores answer spans on the layer-`T` features and either answers
//! immediately (early exit) or keeps only the sentences that contain its top
//! `K` candidates before the deeper layers run (context pruning).
//!
//! The crate is `no_std` and only needs `alloc`. File formats, timing and the
//! command line live in the `itriage` companion crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod config;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod metrics;
pub mod params;
pub mod ranker;
pub mod spanner;
pub mod tensor;
pub mod text;
pub mod train;
pub mod triage;

pub use config::{ModelConfig, Threshold, Variant};
pub use corpus::{GoldSpan, QASample};
pub use error::{Error, Result};
pub use params::Parameters;
pub use spanner::{SpanDistribution, SpanScore};
pub use text::{tokenize, Token, TokenizedText};
pub use triage::{AnswerStats, Origin, TriageDecision};
