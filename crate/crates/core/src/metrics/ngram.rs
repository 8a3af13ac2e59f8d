use std::collections::HashMap;

use super::{MetricError, Result, TokenizedText};

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if n == 0 || tokens.len() < n {
        return m;
    }
    for w in tokens.windows(n) {
        *m.entry(w).or_insert(0) += 1;
    }
    m
}

/// (clipped overlap, hypothesis n-gram count, reference n-gram count)
fn overlap(hyp: &[String], reference: &[String], n: usize) -> (usize, usize, usize) {
    let h = ngram_counts(hyp, n);
    let r = ngram_counts(reference, n);
    let clipped = h.iter().map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0))).sum();
    (clipped, hyp.len().saturating_sub(n - 1), reference.len().saturating_sub(n - 1))
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Corpus BLEU with one reference per hypothesis, uniform weights over
/// n = 1..=max_n, standard brevity penalty and no smoothing.
pub fn bleu(hypotheses: &[TokenizedText], references: &[TokenizedText], max_n: usize) -> Result<f64> {
    if hypotheses.len() != references.len() {
        return Err(MetricError::LengthMismatch { predictions: hypotheses.len(), references: references.len() });
    }
    if hypotheses.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    if max_n == 0 {
        return Err(MetricError::BadOrder(max_n));
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let (mut num, mut den) = (0usize, 0usize);
        for (h, r) in hypotheses.iter().zip(references) {
            let (o, hc, _) = overlap(&h.tokens, &r.tokens, n);
            num += o;
            den += hc;
        }
        if num == 0 || den == 0 {
            return Ok(0.0);
        }
        log_sum += (num as f64 / den as f64).ln();
    }
    let c: usize = hypotheses.iter().map(TokenizedText::len).sum();
    let r: usize = references.iter().map(TokenizedText::len).sum();
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    Ok(bp * (log_sum / max_n as f64).exp())
}

/// F1 of clipped n-gram overlap.
pub fn rouge_n(hyp: &TokenizedText, reference: &TokenizedText, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(MetricError::BadOrder(n));
    }
    let (o, hc, rc) = overlap(&hyp.tokens, &reference.tokens, n);
    if o == 0 {
        return Ok(0.0);
    }
    Ok(f1(o as f64 / hc as f64, o as f64 / rc as f64))
}

pub(crate) fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// F1 over the longest common subsequence.
pub fn rouge_l(hyp: &TokenizedText, reference: &TokenizedText) -> f64 {
    if hyp.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let l = lcs_len(&hyp.tokens, &reference.tokens) as f64;
    f1(l / hyp.len() as f64, l / reference.len() as f64)
}
