use super::model::TinyModel;
use super::{MllmError, Result, BOS, EOS};
use crate::audio::TokenGrid;

/// Argmax continuation of `[BOS] prompt` until EOS or `max_new` tokens. The
/// EOS token is not included in the output.
pub fn greedy_decode(model: &TinyModel, music: &TokenGrid, prompt: &[u32], max_new: usize) -> Result<Vec<u32>> {
    let needed = music.n_tokens() + 1 + prompt.len() + max_new;
    let max = model.config().max_context;
    if needed > max {
        return Err(MllmError::ContextOverflow { needed, max });
    }
    let mut text = Vec::with_capacity(1 + prompt.len() + max_new);
    text.push(BOS);
    text.extend_from_slice(prompt);
    let mut out = Vec::with_capacity(max_new);
    for _ in 0..max_new {
        let logits = model.forward(music, &text)?;
        let last = logits.row(logits.nrows() - 1);
        let next = last
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
            .0 as u32;
        if next == EOS {
            break;
        }
        out.push(next);
        text.push(next);
    }
    Ok(out)
}
