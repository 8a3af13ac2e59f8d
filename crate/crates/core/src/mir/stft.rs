use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Magnitude spectrogram, frame-major. Frame `i` is centered on sample
/// `i * hop`; samples outside the signal are zero.
pub(crate) struct Spectrogram {
    pub mags: Vec<f64>,
    pub n_frames: usize,
    pub n_bins: usize,
    pub n_fft: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl Spectrogram {
    pub fn frame(&self, i: usize) -> &[f64] {
        &self.mags[i * self.n_bins..(i + 1) * self.n_bins]
    }

    pub fn bin_hz(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate as f64 / self.n_fft as f64
    }

    pub fn frame_rate(&self) -> f64 {
        self.sample_rate as f64 / self.hop as f64
    }
}

pub(crate) fn stft(samples: &[f32], sample_rate: u32, n_fft: usize, hop: usize) -> Spectrogram {
    let n_bins = n_fft / 2 + 1;
    let n_frames = samples.len() / hop + 1;
    let window: Vec<f64> = (0..n_fft).map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / n_fft as f64).cos()).collect();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut mags = Vec::with_capacity(n_frames * n_bins);
    let half = (n_fft / 2) as isize;
    for i in 0..n_frames {
        let start = (i * hop) as isize - half;
        for (n, slot) in buf.iter_mut().enumerate() {
            let idx = start + n as isize;
            let x = if idx >= 0 && (idx as usize) < samples.len() { samples[idx as usize] as f64 } else { 0.0 };
            *slot = Complex::new(x * window[n], 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        mags.extend(buf[..n_bins].iter().map(|c| c.norm()));
    }
    Spectrogram { mags, n_frames, n_bins, n_fft, hop, sample_rate }
}

/// Folds a spectrogram frame into 12 pitch classes (C = 0) over
/// `[lo_hz, hi_hz]`, using power per bin.
pub(crate) fn chroma_of(spec: &Spectrogram, frame: usize, lo_hz: f64, hi_hz: f64) -> [f64; 12] {
    let mut c = [0.0; 12];
    for (k, m) in spec.frame(frame).iter().enumerate() {
        let f = spec.bin_hz(k);
        if f < lo_hz || f > hi_hz {
            continue;
        }
        let midi = 69.0 + 12.0 * (f / 440.0).log2();
        let pc = (midi.round() as i64).rem_euclid(12) as usize;
        c[pc] += m * m;
    }
    c
}
