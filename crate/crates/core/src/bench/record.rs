use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Captioning,
    Reasoning,
    Lyrics,
    ToolUse,
    MultipleChoice,
}

impl Task {
    pub const ALL: [Task; 5] = [
        Task::Captioning,
        Task::Reasoning,
        Task::Lyrics,
        Task::ToolUse,
        Task::MultipleChoice,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Captioning => "captioning",
            Task::Reasoning => "reasoning",
            Task::Lyrics => "lyrics",
            Task::ToolUse => "tool_use",
            Task::MultipleChoice => "multiple_choice",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| BenchError::UnknownTask(s.to_string()))
    }
}

/// One instruction/response example tied to an audio file. Serializes to an
/// object with exactly the keys `instruction`, `output`, `local_audio_path`,
/// `task`, `dataset`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawRecord")]
pub struct BenchRecord {
    pub instruction: String,
    pub output: String,
    pub local_audio_path: String,
    pub task: Task,
    pub dataset: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    instruction: String,
    output: String,
    local_audio_path: String,
    task: String,
    dataset: String,
}

impl TryFrom<RawRecord> for BenchRecord {
    type Error = BenchError;

    fn try_from(r: RawRecord) -> Result<Self> {
        make_record(&r.instruction, &r.output, &r.local_audio_path, &r.task, &r.dataset)
    }
}

pub fn make_record(
    instruction: &str,
    output: &str,
    local_audio_path: &str,
    task: &str,
    dataset: &str,
) -> Result<BenchRecord> {
    for (name, value) in [
        ("instruction", instruction),
        ("output", output),
        ("local_audio_path", local_audio_path),
        ("task", task),
        ("dataset", dataset),
    ] {
        if value.trim().is_empty() {
            return Err(BenchError::EmptyField(name));
        }
    }
    Ok(BenchRecord {
        instruction: instruction.to_string(),
        output: output.to_string(),
        local_audio_path: local_audio_path.to_string(),
        task: task.parse()?,
        dataset: dataset.to_string(),
    })
}
