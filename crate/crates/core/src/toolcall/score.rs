use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{parse_calls_with_diagnostics, Result, ToolCallExpr, ToolError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Hit,
    Miss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    Exact,
    WrongName,
    WrongArgs,
    ExtraCall,
    MissingCall,
    ParseFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Score {
    pub verdict: Verdict,
    pub reason: Reason,
}

impl Score {
    fn of(reason: Reason) -> Self {
        let verdict = if reason == Reason::Exact { Verdict::Hit } else { Verdict::Miss };
        Self { verdict, reason }
    }

    pub fn is_hit(&self) -> bool {
        self.verdict == Verdict::Hit
    }
}

/// Ordered comparison of two call sequences. The only place that decides how
/// multi-call answers are matched.
fn compare_sequences(pred: &[ToolCallExpr], gold: &[ToolCallExpr], pred_malformed: bool) -> Reason {
    if pred.len() > gold.len() {
        return Reason::ExtraCall;
    }
    if pred.len() < gold.len() {
        return if pred.is_empty() && pred_malformed {
            Reason::ParseFailure
        } else {
            Reason::MissingCall
        };
    }
    for (p, g) in pred.iter().zip(gold) {
        if p.name() != g.name() {
            return Reason::WrongName;
        }
        // f64 equality: 10 == 10.0 and -0 == 0
        if p.args().len() != g.args().len() || p.args().iter().zip(g.args()).any(|(a, b)| a != b) {
            return Reason::WrongArgs;
        }
    }
    Reason::Exact
}

/// Exact-match scoring: hit iff the prediction contains the same calls as
/// the gold text, in the same order, and nothing else.
pub fn score_tool_use(prediction: &str, gold: &str) -> Result<Score> {
    let gold_calls: Vec<ToolCallExpr> = parse_calls_with_diagnostics(gold).calls.into_iter().map(|(c, _)| c).collect();
    if gold_calls.is_empty() {
        return Err(ToolError::NoGoldCall);
    }
    let pred = parse_calls_with_diagnostics(prediction);
    let malformed = !pred.diagnostics.is_empty();
    let pred_calls: Vec<ToolCallExpr> = pred.calls.into_iter().map(|(c, _)| c).collect();
    Ok(Score::of(compare_sequences(&pred_calls, &gold_calls, malformed)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusScore {
    pub accuracy: f64,
    pub n_items: usize,
    pub per_reason_counts: BTreeMap<Reason, usize>,
}

/// Scores aligned (prediction, gold) pairs.
pub fn score_corpus<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<CorpusScore> {
    let mut counts = BTreeMap::new();
    let (mut hits, mut n) = (0usize, 0usize);
    for (p, g) in pairs {
        let s = score_tool_use(p, g)?;
        hits += usize::from(s.is_hit());
        n += 1;
        *counts.entry(s.reason).or_insert(0) += 1;
    }
    Ok(CorpusScore {
        accuracy: if n == 0 { 0.0 } else { hits as f64 / n as f64 },
        n_items: n,
        per_reason_counts: counts,
    })
}
