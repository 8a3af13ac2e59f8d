//! Benchmark construction: metadata normalization, prompts, annotation,
//! records, splits and the tool-use dataset.

mod annotate;
mod metadata;
mod prompt;
mod record;
mod split;
mod tooluse;

pub use annotate::{
    annotate, annotate_all, build_annotated_records, Annotation, AnnotationClient, MockAnnotator,
    MockTemplates, RemoteAnnotator, RemoteConfig, ANNOTATION_TOKEN_ENV,
};
pub use metadata::{
    canonicalize_tag, level_to_term, normalize_metadata, tempo_to_term, ClipMetadata,
    LevelAttribute, NormalizedMetadata, TagRules, TempoRow, TempoTermTable,
};
pub use prompt::{render_prompt, PromptTemplate};
pub use record::{make_record, BenchRecord, Task};
pub use split::{split_dataset, SplitKey, SplitSpec};
pub use tooluse::{build_tool_use_dataset, TOOL_USE_DATASET};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("tempo must be positive, got {0}")]
    BadTempo(f64),
    #[error("{attribute} score must lie in [0, 1], got {score}")]
    ScoreOutOfRange { attribute: String, score: f64 },
    #[error("invalid tempo table: {0}")]
    TempoTable(String),
    #[error("invalid tag rules: {0}")]
    TagRules(String),
    #[error("template: {0}")]
    Template(String),
    #[error("unresolved mandatory placeholder {{{0}}}")]
    MissingPlaceholder(String),
    #[error("record field `{0}` is empty")]
    EmptyField(&'static str),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("invalid split: {0}")]
    Split(String),
    #[error("unknown tool `{0}`")]
    UnknownTool(String),
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("annotation transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("annotation provider refused the request with status {status} after {attempts} attempt(s)")]
    Refused { status: u16, attempts: u32 },
    #[error("malformed annotation response: {0}")]
    Malformed(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, BenchError>;
