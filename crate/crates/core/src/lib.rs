//! Toolkit for building and evaluating music-understanding benchmarks.
//!
//! The crate is split along the pipeline:
//!
//! - [`audio`]: clip standardization, the (3072, 128) log-mel front-end,
//!   16x16 patch tokens, token mean-pooling and white-noise substitutes.
//! - [`bench`]: metadata normalization, prompt rendering, annotation clients,
//!   benchmark records, dataset splits and the tool-use dataset generator.
//! - [`metrics`]: BLEU-1/BLEU-4, ROUGE-1, ROUGE-L, METEOR-lite, BertScore over
//!   a pluggable embedding provider, and multiple-choice scoring.
//! - [`toolcall`]: the bracketed `[Name(args)]` tool-call language: parser,
//!   renderer, scorer and executor.
//! - [`mir`]: native tempo, key, chord and downbeat estimators.
//! - [`mllm`]: a tiny decoder-only LM with a music-token prefix, an MLP
//!   projector, LoRA adapters and two-stage training.

pub mod audio;
pub mod bench;
pub mod jsonl;
pub mod metrics;
pub mod mir;
pub mod mllm;
pub mod toolcall;

/// Crate version string embedded in manifests and reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
