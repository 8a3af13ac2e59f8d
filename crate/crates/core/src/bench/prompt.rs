//! Prompt templates with `{key}` placeholders.
//!
//! A template is processed line by line: a line whose placeholders cannot all
//! be resolved is dropped entirely, unless one of the missing placeholders is
//! written `{key!}`, in which case rendering fails. `{{` and `}}` are literal
//! braces.

use serde::Deserialize;

use super::{BenchError, NormalizedMetadata, Result, Task};

#[derive(Debug, Clone, PartialEq)]
enum Piece {
    Text(String),
    Slot { key: String, mandatory: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    task: Task,
    lines: Vec<Vec<Piece>>,
}

fn parse_line(line: &str) -> Result<Vec<Piece>> {
    let mut pieces = Vec::new();
    let mut text = String::new();
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '{' if chars.peek() == Some(&'{') => {
                chars.next();
                text.push('{');
            }
            '}' if chars.peek() == Some(&'}') => {
                chars.next();
                text.push('}');
            }
            '{' => {
                let mut name = String::new();
                loop {
                    match chars.next() {
                        Some('}') => break,
                        Some(ch) => name.push(ch),
                        None => return Err(BenchError::Template(format!("unterminated placeholder in `{line}`"))),
                    }
                }
                let (key, mandatory) = match name.strip_suffix('!') {
                    Some(k) => (k.to_string(), true),
                    None => (name, false),
                };
                if !NormalizedMetadata::KEYS.contains(&key.as_str()) {
                    return Err(BenchError::Template(format!("unknown placeholder {{{key}}}")));
                }
                if !text.is_empty() {
                    pieces.push(Piece::Text(std::mem::take(&mut text)));
                }
                pieces.push(Piece::Slot { key, mandatory });
            }
            '}' => return Err(BenchError::Template(format!("stray `}}` in `{line}`"))),
            _ => text.push(c),
        }
    }
    if !text.is_empty() {
        pieces.push(Piece::Text(text));
    }
    Ok(pieces)
}

impl PromptTemplate {
    pub fn parse(task: Task, source: &str) -> Result<Self> {
        let lines = source.split('\n').map(parse_line).collect::<Result<_>>()?;
        Ok(Self { task, lines })
    }

    pub fn task(&self) -> Task {
        self.task
    }

    /// Placeholder keys in order of appearance.
    pub fn placeholders(&self) -> Vec<&str> {
        self.lines
            .iter()
            .flatten()
            .filter_map(|p| match p {
                Piece::Slot { key, .. } => Some(key.as_str()),
                Piece::Text(_) => None,
            })
            .collect()
    }

    /// The shipped template for a task, if there is one.
    pub fn builtin(task: Task) -> Option<Self> {
        #[derive(Deserialize)]
        struct Entry {
            task: Task,
            template: String,
        }
        let all: std::collections::BTreeMap<String, Entry> =
            serde_json::from_str(include_str!("../../data/prompt_templates.json")).expect("shipped templates parse");
        all.into_values()
            .find(|e| e.task == task)
            .map(|e| Self::parse(e.task, &e.template).expect("shipped template is valid"))
    }
}

pub fn render_prompt(template: &PromptTemplate, meta: &NormalizedMetadata) -> Result<String> {
    let mut rendered: Vec<String> = Vec::with_capacity(template.lines.len());
    'lines: for line in &template.lines {
        let mut out = String::new();
        for piece in line {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot { key, mandatory } => match meta.lookup(key) {
                    Some(v) => out.push_str(&v),
                    None if *mandatory => return Err(BenchError::MissingPlaceholder(key.clone())),
                    None => continue 'lines,
                },
            }
        }
        rendered.push(out);
    }
    Ok(rendered.join("\n"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{normalize_metadata, ClipMetadata, TagRules, TempoTermTable};

    fn example() -> NormalizedMetadata {
        let meta = ClipMetadata {
            dataset_name: "music4all".into(),
            audio_filename: "4MqXFtyr1XwxrShX.mp3".into(),
            tempo_bpm: Some(92.0),
            energy: Some(0.81),
            valence: Some(0.45),
            danceability: Some(0.52),
            genres: vec!["rock".into(), "pop".into(), "electronic".into()],
            moods: vec!["ambient".into()],
            ..Default::default()
        };
        normalize_metadata(&meta, &TempoTermTable::default(), &TagRules::default()).unwrap()
    }

    #[test]
    fn substitutes_and_omits() {
        let t = PromptTemplate::parse(Task::Captioning, "Tempo: {tempo}\nMood: {mood}\nInstruments: {instrument}\nend").unwrap();
        let p = render_prompt(&t, &example()).unwrap();
        assert_eq!(p, "Tempo: walking pace tempo\nMood: ambient\nend");
        let mut no_mood = example();
        no_mood.mood.clear();
        let p = render_prompt(&t, &no_mood).unwrap();
        assert!(!p.contains("Mood"));
    }

    #[test]
    fn builtin_prompt_carries_example_attributes() {
        let t = PromptTemplate::builtin(Task::Captioning).unwrap();
        let p = render_prompt(&t, &example()).unwrap();
        assert!(p.contains("high energy"));
        assert!(p.contains("walking pace tempo"));
        assert!(p.contains("rock, pop, electronic"));
        assert!(!p.contains("instrument:"));
        assert!(PromptTemplate::builtin(Task::Reasoning).is_some());
        assert!(PromptTemplate::builtin(Task::ToolUse).is_none());
    }

    #[test]
    fn mandatory_and_malformed() {
        let t = PromptTemplate::parse(Task::Captioning, "Instruments: {instrument!}").unwrap();
        assert!(matches!(render_prompt(&t, &example()), Err(BenchError::MissingPlaceholder(k)) if k == "instrument"));
        assert!(PromptTemplate::parse(Task::Captioning, "{nope}").is_err());
        assert!(PromptTemplate::parse(Task::Captioning, "{tempo").is_err());
        assert!(PromptTemplate::parse(Task::Captioning, "oops }").is_err());
        let lit = PromptTemplate::parse(Task::Captioning, "{{\"k\": \"{tempo}\"}}").unwrap();
        assert_eq!(render_prompt(&lit, &example()).unwrap(), "{\"k\": \"walking pace tempo\"}");
    }
}
