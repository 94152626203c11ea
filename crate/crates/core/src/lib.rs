//! Toolkit for building cognition-chain annotated stress-detection datasets.
//!
//! The crate covers the whole offline pipeline: prompt construction
//! ([`prompt`]), a chat-completions gateway with record/replay
//! ([`gateway`]), the three-stage self-reflective annotator ([`pipeline`]),
//! quality filtering ([`quality`]), corpus ingestion and instruction-tuning
//! export ([`dataset`]) and evaluation ([`eval`]). [`demo`] runs all of them
//! offline against a recorded cassette.

pub mod chain;
pub mod dataset;
pub mod demo;
pub mod eval;
pub mod gateway;
pub mod par;
pub mod pipeline;
pub mod prompt;
pub mod quality;
