use serde::{Deserialize, Serialize};

use super::stft::stft;
use super::{check_rate, Result};
use crate::audio::WaveformClip;

pub(crate) const ONSET_WINDOW: usize = 512;
pub(crate) const ONSET_HOP: usize = 160;
/// Frames per second of [`OnsetEnvelope`] at 16 kHz.
pub const ONSET_FRAME_RATE: f64 = 100.0;
const LOG_GAIN: f64 = 100.0;

/// Half-wave-rectified spectral flux of the log-compressed magnitude spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnsetEnvelope {
    pub values: Vec<f64>,
    pub frame_rate: f64,
}

impl OnsetEnvelope {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn frame_time(&self, i: f64) -> f64 {
        i / self.frame_rate
    }
}

pub fn onset_envelope(clip: &WaveformClip) -> Result<OnsetEnvelope> {
    check_rate(clip)?;
    let spec = stft(clip.samples(), clip.sample_rate(), ONSET_WINDOW, ONSET_HOP);
    let mut values = Vec::with_capacity(spec.n_frames);
    let mut prev: Vec<f64> = vec![0.0; spec.n_bins];
    for i in 0..spec.n_frames {
        let mut flux = 0.0;
        for (k, m) in spec.frame(i).iter().enumerate() {
            let v = (LOG_GAIN * m).ln_1p();
            if i > 0 {
                flux += (v - prev[k]).max(0.0);
            }
            prev[k] = v;
        }
        values.push(flux);
    }
    Ok(OnsetEnvelope { values, frame_rate: spec.frame_rate() })
}

/// Seconds between the first and last frame whose RMS exceeds a fixed floor.
pub(crate) fn active_span_secs(clip: &WaveformClip) -> f64 {
    const FLOOR: f64 = 1e-4;
    let s = clip.samples();
    let rms = |c: &[f32]| (c.iter().map(|&x| (x as f64).powi(2)).sum::<f64>() / c.len() as f64).sqrt();
    let chunks: Vec<bool> = s.chunks(ONSET_HOP).map(|c| rms(c) > FLOOR).collect();
    match (chunks.iter().position(|&a| a), chunks.iter().rposition(|&a| a)) {
        (Some(a), Some(b)) => ((b + 1 - a) * ONSET_HOP) as f64 / clip.sample_rate() as f64,
        _ => 0.0,
    }
}
