//! Test signals with known ground truth.

use std::f64::consts::PI;

use crate::audio::WaveformClip;

pub const SR: usize = 16_000;

pub fn midi_hz(m: f64) -> f64 {
    440.0 * 2f64.powf((m - 69.0) / 12.0)
}

/// Decaying 1 kHz bursts at the given BPM, first click at `offset` seconds.
/// Every `accent_every`-th click (starting with the first) is scaled by `accent`.
pub fn click_track(bpm: f64, seconds: f64, offset: f64, accent_every: usize, accent: f32) -> WaveformClip {
    let n = (seconds * SR as f64) as usize;
    let mut x = vec![0f32; n];
    let period = 60.0 / bpm;
    let mut k = 0usize;
    loop {
        let t = offset + k as f64 * period;
        let start = (t * SR as f64).round() as usize;
        if start >= n {
            break;
        }
        let amp = if accent_every > 0 && k % accent_every == 0 { accent } else { 1.0 } * 0.4;
        for j in 0..320.min(n - start) {
            let tt = j as f64 / SR as f64;
            x[start + j] += amp * ((2.0 * PI * 1000.0 * tt).sin() * (-tt * 200.0).exp()) as f32;
        }
        k += 1;
    }
    WaveformClip::from_unclamped(x, SR as u32).unwrap()
}

/// Sum of equal-amplitude sines at the given MIDI pitches.
pub fn tones(midis: &[f64], seconds: f64) -> Vec<f32> {
    let n = (seconds * SR as f64) as usize;
    let a = 0.8 / midis.len().max(1) as f64;
    (0..n)
        .map(|i| {
            let t = i as f64 / SR as f64;
            midis.iter().map(|&m| a * (2.0 * PI * midi_hz(m) * t).sin()).sum::<f64>() as f32
        })
        .collect()
}

/// Ascending major scale (8 notes, tonic doubled at the octave) starting at
/// `tonic_midi`, each note held `note_secs`.
pub fn major_scale(tonic_midi: f64, note_secs: f64) -> WaveformClip {
    let steps = [0.0, 2.0, 4.0, 5.0, 7.0, 9.0, 11.0, 12.0];
    let mut x = Vec::new();
    for s in steps {
        x.extend(tones(&[tonic_midi + s], note_secs));
    }
    WaveformClip::new(x, SR as u32).unwrap()
}
