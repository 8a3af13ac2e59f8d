use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{MetricError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum McqLabel {
    A,
    B,
    C,
    D,
}

impl McqLabel {
    pub const ALL: [McqLabel; 4] = [McqLabel::A, McqLabel::B, McqLabel::C, McqLabel::D];

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'A' => Some(Self::A),
            'B' => Some(Self::B),
            'C' => Some(Self::C),
            'D' => Some(Self::D),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_char(self) -> char {
        (b'A' + self as u8) as char
    }
}

impl fmt::Display for McqLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl FromStr for McqLabel {
    type Err = MetricError;
    fn from_str(s: &str) -> Result<Self> {
        let mut it = s.trim().chars();
        match (it.next().and_then(Self::from_char), it.next()) {
            (Some(l), None) => Ok(l),
            _ => Err(MetricError::BadLabel(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extraction {
    Label(McqLabel),
    NoFollow,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McqItem {
    pub question: String,
    pub options: [String; 4],
    pub gold: McqLabel,
    pub model_answer: String,
}

impl McqItem {
    pub fn validate(&self) -> Result<()> {
        for (i, a) in self.options.iter().enumerate() {
            if a.trim().is_empty() {
                return Err(MetricError::BadOptions("empty option".into()));
            }
            if self.options[..i].iter().any(|b| b.trim().eq_ignore_ascii_case(a.trim())) {
                return Err(MetricError::BadOptions(format!("duplicate option `{a}`")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemVerdict {
    Correct,
    Wrong,
    NoFollow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McqOutcome {
    pub accuracy: f64,
    pub ifr: f64,
    pub n_items: usize,
    pub per_item: Vec<ItemVerdict>,
}

fn label_at(chars: &[char], i: usize) -> Option<McqLabel> {
    chars.get(i).copied().and_then(McqLabel::from_char)
}

fn boundary(chars: &[char], i: usize) -> bool {
    chars.get(i).is_none_or(|c| !c.is_alphanumeric())
}

fn parenthesized(chars: &[char]) -> Option<McqLabel> {
    (0..chars.len().saturating_sub(2))
        .find_map(|i| (chars[i] == '(' && chars[i + 2] == ')').then(|| label_at(chars, i + 1)).flatten())
}

fn leading(chars: &[char]) -> Option<McqLabel> {
    let start = chars.iter().position(|c| !c.is_whitespace())?;
    let l = label_at(chars, start)?;
    matches!(chars.get(start + 1), Some(')' | '.' | ':')).then_some(l)
}

fn normalize_option(s: &str) -> String {
    s.trim().trim_end_matches(['.', '!']).trim().to_lowercase()
}

fn full_option(answer: &str, options: &[String; 4]) -> Option<McqLabel> {
    let a = normalize_option(answer);
    options.iter().position(|o| normalize_option(o) == a).map(|i| McqLabel::ALL[i])
}

fn answer_is(answer: &str) -> Option<McqLabel> {
    let orig: Vec<char> = answer.chars().collect();
    let lower: Vec<char> = orig.iter().map(char::to_ascii_lowercase).collect();
    let needle: Vec<char> = "answer is".chars().collect();
    for i in 0..lower.len().saturating_sub(needle.len() - 1) {
        if lower[i..i + needle.len()] != needle[..] {
            continue;
        }
        let mut k = i + needle.len();
        while lower.get(k).is_some_and(|c| c.is_whitespace() || *c == ':') {
            k += 1;
        }
        let paren = lower.get(k) == Some(&'(');
        if paren {
            k += 1;
        }
        if let Some(l) = orig.get(k).and_then(|c| McqLabel::from_char(c.to_ascii_uppercase())) {
            if boundary(&orig, k + 1) {
                return Some(l);
            }
        }
    }
    None
}

/// Reads the chosen option out of a free-form answer. Rules, first match
/// wins: `(X)` anywhere; `X)`, `X.` or `X:` at the start; the whole answer
/// equal to one option text (case-insensitive); `answer is X`.
pub fn mcq_extract(answer: &str, options: &[String; 4]) -> Extraction {
    let chars: Vec<char> = answer.chars().collect();
    parenthesized(&chars)
        .or_else(|| leading(&chars))
        .or_else(|| full_option(answer, options))
        .or_else(|| answer_is(answer))
        .map_or(Extraction::NoFollow, Extraction::Label)
}

/// Accuracy over all items (unparseable answers count as wrong) and the
/// share of answers that followed the format.
pub fn mcq_score(items: &[McqItem]) -> Result<McqOutcome> {
    if items.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    let per_item: Vec<ItemVerdict> = items
        .iter()
        .map(|it| match mcq_extract(&it.model_answer, &it.options) {
            Extraction::NoFollow => ItemVerdict::NoFollow,
            Extraction::Label(l) if l == it.gold => ItemVerdict::Correct,
            Extraction::Label(_) => ItemVerdict::Wrong,
        })
        .collect();
    let n = items.len() as f64;
    let correct = per_item.iter().filter(|v| **v == ItemVerdict::Correct).count() as f64;
    let followed = per_item.iter().filter(|v| **v != ItemVerdict::NoFollow).count() as f64;
    Ok(McqOutcome { accuracy: correct / n, ifr: followed / n, n_items: items.len(), per_item })
}
