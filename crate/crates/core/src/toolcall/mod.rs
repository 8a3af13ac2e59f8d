//! The bracketed tool-call language, e.g. `[GetMusicChords(10, 20)]`.
//!
//! ```text
//! Call    := '[' Ident '(' ArgList? ')' ']'
//! ArgList := Number (',' Number)*
//! Ident   := [A-Za-z][A-Za-z0-9]*
//! Number  := '-'? digits ('.' digits)?
//! ```
//!
//! Spaces are allowed between all tokens. Calls are embedded in free prose;
//! brackets that do not start a call are ignored.

mod exec;
mod parse;
mod score;

pub use exec::{execute_and_render, ToolFn, ToolRegistry, ToolSpec};
pub use parse::{parse_calls, parse_calls_with_diagnostics, Diagnostic, ParseOutput, ToolCallExpr};
pub use score::{score_corpus, score_tool_use, CorpusScore, Reason, Score, Verdict};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ToolError {
    #[error("invalid tool name `{0}`")]
    BadName(String),
    #[error("argument {0} is not finite")]
    NonFinite(f64),
    #[error("gold answer contains no tool call")]
    NoGoldCall,
    #[error("unknown tool `{0}`")]
    UnknownTool(String),
    #[error("tool `{name}` takes {expected} argument(s), got {got}")]
    Arity { name: String, expected: usize, got: usize },
    #[error("tool `{name}` at byte {offset} failed: {message}")]
    Estimator { name: String, offset: usize, message: String },
}

pub type Result<T> = std::result::Result<T, ToolError>;
