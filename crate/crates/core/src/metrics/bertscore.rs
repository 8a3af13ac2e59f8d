use std::collections::HashMap;
use std::sync::Mutex;

use super::{tokenize, MetricError, Result};

/// Maps a text to one embedding vector per token. Implementations must be
/// deterministic: the same text always yields the same vectors.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<Vec<f64>>>;
}

fn unit(v: &[f64]) -> Result<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(MetricError::ZeroNorm);
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

/// Greedy-matching F1 over token cosine similarities. Empty inputs score 0.
pub fn bertscore_f1(hyp: &str, reference: &str, provider: &dyn EmbeddingProvider) -> Result<f64> {
    let embed = |t: &str| -> Result<Vec<Vec<f64>>> {
        let vs = provider.embed(t)?;
        if vs.iter().any(|v| v.len() != provider.dim()) {
            return Err(MetricError::Provider(format!("expected {}-dimensional vectors", provider.dim())));
        }
        vs.iter().map(|v| unit(v)).collect()
    };
    let h = embed(hyp)?;
    let r = embed(reference)?;
    if h.is_empty() || r.is_empty() {
        return Ok(0.0);
    }
    let sim: Vec<Vec<f64>> =
        r.iter().map(|rv| h.iter().map(|hv| rv.iter().zip(hv).map(|(a, b)| a * b).sum()).collect()).collect();
    let recall = sim.iter().map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max)).sum::<f64>() / r.len() as f64;
    let precision = (0..h.len())
        .map(|k| sim.iter().map(|row| row[k]).fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / h.len() as f64;
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Gives every distinct token its own basis vector, so cosine similarity is
/// 1 for equal tokens and 0 otherwise. Useful as a lexical baseline and for
/// testing; fails once more than `dim` distinct tokens have been seen.
#[derive(Debug)]
pub struct OrthogonalProvider {
    dim: usize,
    ids: Mutex<HashMap<String, usize>>,
}

impl OrthogonalProvider {
    pub fn new(dim: usize) -> Self {
        Self { dim, ids: Mutex::new(HashMap::new()) }
    }
}

impl EmbeddingProvider for OrthogonalProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<Vec<f64>>> {
        let mut ids = self.ids.lock().map_err(|_| MetricError::Provider("vocabulary lock poisoned".into()))?;
        tokenize(text)
            .tokens
            .into_iter()
            .map(|t| {
                let next = ids.len();
                let id = *ids.entry(t).or_insert(next);
                if id >= self.dim {
                    return Err(MetricError::Provider(format!("more than {} distinct tokens", self.dim)));
                }
                let mut v = vec![0.0; self.dim];
                v[id] = 1.0;
                Ok(v)
            })
            .collect()
    }
}
