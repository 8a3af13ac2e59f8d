use serde::{Deserialize, Serialize};

/// Bumped whenever [`tokenize`] changes in a way that can move scores.
pub const TOKENIZER_VERSION: &str = "lower-punct-v1";

/// Lowercased word tokens; every punctuation or symbol character is a token
/// of its own.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct TokenizedText {
    pub tokens: Vec<String>,
}

impl TokenizedText {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn join(&self) -> String {
        self.tokens.join(" ")
    }
}

impl<S: Into<String>> FromIterator<S> for TokenizedText {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Self { tokens: iter.into_iter().map(Into::into).collect() }
    }
}

pub fn tokenize(text: &str) -> TokenizedText {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for c in text.chars().flat_map(char::to_lowercase) {
        if c.is_alphanumeric() {
            word.push(c);
            continue;
        }
        if !word.is_empty() {
            tokens.push(std::mem::take(&mut word));
        }
        if !c.is_whitespace() {
            tokens.push(c.to_string());
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    TokenizedText { tokens }
}
