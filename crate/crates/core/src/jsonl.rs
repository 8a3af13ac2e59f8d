//! Line-oriented JSON helpers shared by the dataset and evaluation readers.

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Parses one value per non-blank line. Errors carry the 1-based line number.
pub fn parse_jsonl<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, JsonlError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| JsonlError::Schema {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<std::path::Path>) -> Result<Vec<T>, JsonlError> {
    parse_jsonl(&std::fs::read_to_string(path)?)
}

/// One compact JSON object per line, trailing newline included.
pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("serializable value"));
        out.push('\n');
    }
    out
}
