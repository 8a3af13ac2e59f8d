use rustfft::{num_complex::Complex, FftPlanner};
use std::f64::consts::PI;

use super::clip::TARGET_SAMPLE_RATE;
use super::{AudioError, Result, WaveformClip, MAX_SECONDS};

pub const N_MELS: usize = 128;
pub const N_SEGMENTS: usize = 3;
pub const FRAMES_PER_SEGMENT: usize = 1024;
pub const N_FRAMES: usize = N_SEGMENTS * FRAMES_PER_SEGMENT;
/// 25 ms at 16 kHz.
pub const WIN_LENGTH: usize = 400;
/// 10 ms at 16 kHz.
pub const HOP_LENGTH: usize = 160;
pub const N_FFT: usize = 512;
pub const LOG_EPSILON: f64 = 1e-10;

const SEGMENT_SAMPLES: usize = 160_000;
const F_MAX: f64 = 8000.0;

/// Log-mel energies, frames x bins, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    values: Vec<f32>,
    n_frames: usize,
    n_bins: usize,
}

impl MelSpectrogram {
    /// Wraps row-major values; the shape must be (3072, 128) and every value finite.
    pub fn from_values(values: Vec<f32>, n_frames: usize, n_bins: usize) -> Result<Self> {
        if n_frames != N_FRAMES || n_bins != N_MELS {
            return Err(AudioError::Shape {
                expected_rows: N_FRAMES,
                expected_cols: N_MELS,
                rows: n_frames,
                cols: n_bins,
            });
        }
        if values.len() != n_frames * n_bins {
            return Err(AudioError::MelFormat(format!(
                "{} values for a {n_frames} x {n_bins} matrix",
                values.len()
            )));
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(AudioError::BadSample { index, value });
        }
        Ok(Self {
            values,
            n_frames,
            n_bins,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_frames, self.n_bins)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, frame: usize, bin: usize) -> f32 {
        self.values[frame * self.n_bins + bin]
    }

    pub fn frame(&self, frame: usize) -> &[f32] {
        &self.values[frame * self.n_bins..(frame + 1) * self.n_bins]
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters (peak 1) over the `N_FFT / 2 + 1` power bins, one row
/// per mel band, spanning 0 to 8 kHz.
pub fn mel_filterbank() -> Vec<Vec<f64>> {
    let n_freqs = N_FFT / 2 + 1;
    let mel_max = hz_to_mel(F_MAX);
    let edges: Vec<f64> = (0..N_MELS + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (N_MELS + 1) as f64))
        .collect();
    let bin_hz = TARGET_SAMPLE_RATE as f64 / N_FFT as f64;

    (0..N_MELS)
        .map(|m| {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_freqs)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= center {
                        (f - lo) / (center - lo)
                    } else {
                        (hi - f) / (hi - center)
                    }
                })
                .collect()
        })
        .collect()
}

fn periodic_hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

fn reflect(idx: isize, len: usize) -> usize {
    let len = len as isize;
    let mut i = idx;
    while i < 0 || i >= len {
        if i < 0 {
            i = -i;
        }
        if i >= len {
            i = 2 * (len - 1) - i;
        }
    }
    i as usize
}

/// Pre-log mel power for one segment, centered frames with reflect padding.
fn segment_mel_power(segment: &[f32], filters: &[Vec<f64>], out: &mut Vec<[f64; N_MELS]>) {
    let window = periodic_hann(WIN_LENGTH);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(N_FFT);
    let n_frames = 1 + segment.len() / HOP_LENGTH;
    let half = (WIN_LENGTH / 2) as isize;
    let mut buf = vec![Complex::new(0.0, 0.0); N_FFT];
    let mut power = vec![0.0; N_FFT / 2 + 1];

    for t in 0..n_frames {
        let start = (t * HOP_LENGTH) as isize - half;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = if i < WIN_LENGTH {
                let s = segment[reflect(start + i as isize, segment.len())] as f64;
                Complex::new(s * window[i], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process(&mut buf);
        for (p, c) in power.iter_mut().zip(&buf) {
            *p = c.norm_sqr();
        }
        let mut row = [0.0; N_MELS];
        for (r, filt) in row.iter_mut().zip(filters) {
            *r = filt.iter().zip(&power).map(|(w, p)| w * p).sum();
        }
        out.push(row);
    }
}

/// Log-mel spectrogram of a 30 s, 16 kHz clip, shape (3072, 128).
///
/// Each 10 s segment yields 1001 centered frames, right-padded with
/// `ln(LOG_EPSILON)` to 1024.
pub fn mel_spectrogram(clip: &WaveformClip) -> Result<MelSpectrogram> {
    if !clip.is_standardized_to(MAX_SECONDS) {
        return Err(AudioError::NotStandardized {
            expected_len: N_SEGMENTS * SEGMENT_SAMPLES,
            got_len: clip.len(),
            got_rate: clip.sample_rate(),
        });
    }
    let filters = mel_filterbank();
    let floor = LOG_EPSILON.ln() as f32;
    let mut values = vec![floor; N_FRAMES * N_MELS];
    let mut rows = Vec::with_capacity(FRAMES_PER_SEGMENT);

    for (seg, chunk) in clip.samples().chunks(SEGMENT_SAMPLES).enumerate() {
        rows.clear();
        segment_mel_power(chunk, &filters, &mut rows);
        for (t, row) in rows.iter().take(FRAMES_PER_SEGMENT).enumerate() {
            let base = (seg * FRAMES_PER_SEGMENT + t) * N_MELS;
            for (b, &p) in row.iter().enumerate() {
                values[base + b] = (p + LOG_EPSILON).ln() as f32;
            }
        }
    }
    MelSpectrogram::from_values(values, N_FRAMES, N_MELS)
}
