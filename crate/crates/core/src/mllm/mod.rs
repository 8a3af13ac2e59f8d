//! A tiny decoder-only byte LM with a music-token prefix.
//!
//! Music tokens pass through a frozen linear encoder stub and a trainable
//! two-layer MLP projector before being prepended to the text. Training runs
//! in stages: stage 1 updates the projector only, later stages add LoRA
//! adapters on the attention projections while the base stays frozen.

mod checkpoint;
mod config;
mod data;
mod decode;
mod model;
mod ops;
mod store;
mod train;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, manifest_path, save_checkpoint,
    CheckpointManifest, CHECKPOINT_FORMAT,
};
pub use config::{LoraConfig, ModelConfig, Stage, TrainConfig};
pub use data::{
    answer_probes, music_tokens, noise_tokens, toy_clip, toy_dataset, toy_mcq_probes, toy_pretrain_corpus, McqProbe,
    TOY_POOL_FACTOR,
};
pub use decode::greedy_decode;
pub use model::{Sequence, TinyModel};
pub use ops::{gelu, lora_forward, merge_lora, project, LoraParams, ProjectorParams};
pub use store::{ParamGroup, ParamStore, TensorMeta};
pub use train::{
    dataset_loss, lr_at, pretrain_base, train_stage, PretrainConfig, PretrainLog, StepRecord, TextExample,
    TrainExample, TrainLog,
};

use thiserror::Error;

use crate::audio::AudioError;

/// Bytes 0..=255, then BOS and EOS.
pub const VOCAB_SIZE: usize = 258;
pub const BOS: u32 = 256;
pub const EOS: u32 = 257;

#[derive(Debug, Error)]
pub enum MllmError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("context overflow: need {needed} positions, model allows {max}")]
    ContextOverflow { needed: usize, max: usize },
    #[error("stage mismatch: {0}")]
    StageMismatch(String),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("training data is empty")]
    EmptyData,
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Metric(#[from] crate::metrics::MetricError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MllmError>;

/// UTF-8 bytes as token ids.
pub fn encode_text(text: &str) -> Vec<u32> {
    text.bytes().map(u32::from).collect()
}

/// Lossy inverse of [`encode_text`]; special tokens are dropped.
pub fn decode_text(tokens: &[u32]) -> String {
    let bytes: Vec<u8> = tokens.iter().filter_map(|&t| u8::try_from(t).ok()).collect();
    String::from_utf8_lossy(&bytes).into_owned()
}
