use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{resample, AudioError, Result};

/// Sample rate every downstream stage expects.
pub const TARGET_SAMPLE_RATE: u32 = 16_000;
/// Longest clip the front-end accepts.
pub const MAX_SECONDS: f64 = 30.0;

/// Mono audio with amplitudes in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveformClip {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl WaveformClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(AudioError::Empty);
        }
        if sample_rate == 0 {
            return Err(AudioError::BadSampleRate(sample_rate));
        }
        if let Some((index, &value)) = samples
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || v.abs() > 1.0)
        {
            return Err(AudioError::BadSample { index, value });
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    /// Builds a clip from samples that may exceed the unit range, clamping
    /// them. Non-finite samples are still rejected.
    pub fn from_unclamped(mut samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        for s in &mut samples {
            *s = s.clamp(-1.0, 1.0);
        }
        Self::new(samples, sample_rate)
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// True when the clip is at 16 kHz and exactly `seconds` long.
    pub fn is_standardized_to(&self, seconds: f64) -> bool {
        self.sample_rate == TARGET_SAMPLE_RATE
            && self.samples.len() == seconds_to_samples(seconds)
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }
}

pub(crate) fn seconds_to_samples(seconds: f64) -> usize {
    (seconds * TARGET_SAMPLE_RATE as f64).round() as usize
}

/// Resamples to 16 kHz and fixes the length to `target_seconds`, truncating
/// or zero-padding at the end.
pub fn standardize_clip(raw: &WaveformClip, target_seconds: f64) -> Result<WaveformClip> {
    if !(target_seconds > 0.0 && target_seconds <= MAX_SECONDS) {
        return Err(AudioError::BadDuration {
            got: target_seconds,
            max: MAX_SECONDS,
        });
    }
    let target_len = seconds_to_samples(target_seconds);

    let mut samples = if raw.sample_rate == TARGET_SAMPLE_RATE {
        raw.samples[..raw.samples.len().min(target_len)].to_vec()
    } else {
        // Only the input span that can reach the kept output is resampled.
        let ratio = raw.sample_rate as f64 / TARGET_SAMPLE_RATE as f64;
        let needed = ((target_len as f64 * ratio).ceil() as usize + 256).min(raw.samples.len());
        let mut out = resample(&raw.samples[..needed], raw.sample_rate, TARGET_SAMPLE_RATE);
        let expected = (raw.samples.len() as f64 / ratio).round() as usize;
        out.truncate(target_len.min(expected));
        for s in &mut out {
            *s = s.clamp(-1.0, 1.0);
        }
        out
    };
    samples.resize(target_len, 0.0);
    WaveformClip::new(samples, TARGET_SAMPLE_RATE)
}

/// Uniform white noise in `[-1, 1]` at 16 kHz, reproducible from `seed`.
pub fn white_noise_clip(seconds: f64, seed: u64) -> Result<WaveformClip> {
    if !(seconds > 0.0 && seconds.is_finite()) {
        return Err(AudioError::BadDuration {
            got: seconds,
            max: f64::INFINITY,
        });
    }
    let n = seconds_to_samples(seconds).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n).map(|_| rng.random_range(-1.0f32..=1.0)).collect();
    WaveformClip::new(samples, TARGET_SAMPLE_RATE)
}
