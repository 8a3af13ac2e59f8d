use super::onset::{active_span_secs, onset_envelope};
use super::{MirError, OnsetEnvelope, Result};
use crate::audio::WaveformClip;

pub(crate) const MIN_BPM: f64 = 40.0;
pub(crate) const MAX_BPM: f64 = 240.0;
const MIN_ACTIVE_SECS: f64 = 5.0;

/// Tempo in BPM, rounded to one decimal.
pub fn estimate_tempo(clip: &WaveformClip) -> Result<f64> {
    let env = onset_envelope(clip)?;
    if active_span_secs(clip) < MIN_ACTIVE_SECS {
        return Err(MirError::InsufficientOnsetEnergy);
    }
    let period = tempo_period(&env)?;
    Ok((60.0 * env.frame_rate / period * 10.0).round() / 10.0)
}

/// Beat period in (fractional) onset frames.
pub(crate) fn tempo_period(env: &OnsetEnvelope) -> Result<f64> {
    let n = env.values.len();
    let mean = env.values.iter().sum::<f64>() / n.max(1) as f64;
    let x: Vec<f64> = env.values.iter().map(|v| v - mean).collect();
    let energy: f64 = x.iter().map(|v| v * v).sum();
    if !(energy > 1e-12) {
        return Err(MirError::InsufficientOnsetEnergy);
    }
    let lo = (60.0 * env.frame_rate / MAX_BPM).floor() as usize;
    let hi = (60.0 * env.frame_rate / MIN_BPM).ceil() as usize;
    if hi + 2 >= n {
        return Err(MirError::InsufficientOnsetEnergy);
    }
    // unbiased autocorrelation, weighted by 1/lag so the fastest of several
    // equally periodic candidates wins
    let score = |lag: usize| -> f64 {
        let r: f64 = (0..n - lag).map(|t| x[t] * x[t + lag]).sum::<f64>() / (n - lag) as f64;
        r / lag as f64
    };
    let scores: Vec<f64> = (lo - 1..=hi + 1).map(score).collect();
    let mut best = 1;
    for i in 1..scores.len() - 1 {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    if !(scores[best] > 0.0) {
        return Err(MirError::InsufficientOnsetEnergy);
    }
    let (a, b, c) = (scores[best - 1], scores[best], scores[best + 1]);
    let denom = a - 2.0 * b + c;
    let delta = if denom.abs() > 1e-300 { (0.5 * (a - c) / denom).clamp(-0.5, 0.5) } else { 0.0 };
    Ok((best + lo - 1) as f64 + delta)
}
