//! Text-generation metrics (BLEU, ROUGE, METEOR-lite, BertScore) and
//! multiple-choice scoring.

mod bertscore;
mod io;
mod mcq;
mod meteor;
mod ngram;
mod tokenize;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bertscore::{bertscore_f1, EmbeddingProvider, OrthogonalProvider};
pub use io::{pair_by_id, reference_rows, PredictionRow, ReferenceInput, ReferenceRow};
pub use mcq::{mcq_extract, mcq_score, Extraction, ItemVerdict, McqItem, McqLabel, McqOutcome};
pub use meteor::{align, count_chunks, meteor_lite, Alignment, METEOR_VARIANT};
pub use ngram::{bleu, rouge_l, rouge_n};
pub use tokenize::{tokenize, TokenizedText, TOKENIZER_VERSION};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("{predictions} prediction(s) but {references} reference(s)")]
    LengthMismatch { predictions: usize, references: usize },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("n-gram order must be at least 1, got {0}")]
    BadOrder(usize),
    #[error("embedding provider: {0}")]
    Provider(String),
    #[error("zero-norm embedding vector")]
    ZeroNorm,
    #[error("invalid option label `{0}`")]
    BadLabel(String),
    #[error("invalid options: {0}")]
    BadOptions(String),
    #[error("pairing: {0}")]
    Pairing(String),
}

pub type Result<T> = std::result::Result<T, MetricError>;

/// Corpus scores in `[0, 1]`. BertScore is kept as a raw F1 in `[-1, 1]`.
/// Serialized as percentages, with BertScore mapped to `(x + 1) / 2` first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ReportJson", try_from = "ReportJson")]
pub struct MetricReport {
    pub bleu1: f64,
    /// BLEU-4.
    pub bleu: f64,
    pub rouge1: f64,
    pub rouge_l: f64,
    pub meteor: f64,
    pub bertscore: Option<f64>,
    pub n_items: usize,
    pub tokenizer_version: String,
    pub meteor_variant: String,
}

#[derive(Serialize, Deserialize)]
struct ReportJson {
    bleu1: f64,
    bleu: f64,
    rouge1: f64,
    #[serde(rename = "rougeL")]
    rouge_l: f64,
    meteor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bertscore: Option<f64>,
    n_items: usize,
    tokenizer_version: String,
    meteor_variant: String,
}

impl From<MetricReport> for ReportJson {
    fn from(r: MetricReport) -> Self {
        Self {
            bleu1: r.bleu1 * 100.0,
            bleu: r.bleu * 100.0,
            rouge1: r.rouge1 * 100.0,
            rouge_l: r.rouge_l * 100.0,
            meteor: r.meteor * 100.0,
            bertscore: r.bertscore.map(|b| (b + 1.0) / 2.0 * 100.0),
            n_items: r.n_items,
            tokenizer_version: r.tokenizer_version,
            meteor_variant: r.meteor_variant,
        }
    }
}

impl TryFrom<ReportJson> for MetricReport {
    type Error = String;
    fn try_from(j: ReportJson) -> std::result::Result<Self, String> {
        let pct = |name: &str, v: f64| {
            if (0.0..=100.0).contains(&v) {
                Ok(v / 100.0)
            } else {
                Err(format!("{name} = {v} is outside [0, 100]"))
            }
        };
        Ok(Self {
            bleu1: pct("bleu1", j.bleu1)?,
            bleu: pct("bleu", j.bleu)?,
            rouge1: pct("rouge1", j.rouge1)?,
            rouge_l: pct("rougeL", j.rouge_l)?,
            meteor: pct("meteor", j.meteor)?,
            bertscore: j.bertscore.map(|b| pct("bertscore", b).map(|x| x * 2.0 - 1.0)).transpose()?,
            n_items: j.n_items,
            tokenizer_version: j.tokenizer_version,
            meteor_variant: j.meteor_variant,
        })
    }
}

struct PairScores {
    rouge1: f64,
    rouge_l: f64,
    meteor: f64,
    bertscore: Option<f64>,
}

/// Corpus BLEU-1/BLEU-4 plus ROUGE-1, ROUGE-L, METEOR-lite and (when a
/// provider is given) BertScore averaged over pairs. Pairs are scored in
/// parallel and summed in input order.
pub fn evaluate_corpus<S: AsRef<str> + Sync>(
    predictions: &[S],
    references: &[S],
    provider: Option<&dyn EmbeddingProvider>,
) -> Result<MetricReport> {
    if predictions.len() != references.len() {
        return Err(MetricError::LengthMismatch { predictions: predictions.len(), references: references.len() });
    }
    if predictions.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    let hyps: Vec<TokenizedText> = predictions.par_iter().map(|p| tokenize(p.as_ref())).collect();
    let refs: Vec<TokenizedText> = references.par_iter().map(|r| tokenize(r.as_ref())).collect();
    let pairs: Vec<PairScores> = (0..hyps.len())
        .into_par_iter()
        .map(|i| -> Result<PairScores> {
            Ok(PairScores {
                rouge1: rouge_n(&hyps[i], &refs[i], 1)?,
                rouge_l: rouge_l(&hyps[i], &refs[i]),
                meteor: meteor_lite(&hyps[i], &refs[i]),
                bertscore: provider
                    .map(|p| bertscore_f1(predictions[i].as_ref(), references[i].as_ref(), p))
                    .transpose()?,
            })
        })
        .collect::<Result<_>>()?;
    let n = pairs.len() as f64;
    let mean = |f: &dyn Fn(&PairScores) -> f64| pairs.iter().map(f).sum::<f64>() / n;
    Ok(MetricReport {
        bleu1: bleu(&hyps, &refs, 1)?,
        bleu: bleu(&hyps, &refs, 4)?,
        rouge1: mean(&|p| p.rouge1),
        rouge_l: mean(&|p| p.rouge_l),
        meteor: mean(&|p| p.meteor),
        bertscore: provider.map(|_| mean(&|p| p.bertscore.unwrap_or(0.0))),
        n_items: pairs.len(),
        tokenizer_version: TOKENIZER_VERSION.to_string(),
        meteor_variant: METEOR_VARIANT.to_string(),
    })
}
