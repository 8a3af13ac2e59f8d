//! Band-limited resampling with a Blackman-windowed sinc kernel.

use std::f64::consts::PI;

use rayon::prelude::*;

const ZERO_CROSSINGS: f64 = 32.0;
const ROLLOFF: f64 = 0.95;

fn blackman(x: f64) -> f64 {
    // x in [-1, 1]
    let t = (x + 1.0) * 0.5;
    0.42 - 0.5 * (2.0 * PI * t).cos() + 0.08 * (4.0 * PI * t).cos()
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Phase tables larger than this are computed on the fly instead.
const MAX_PHASES: u64 = 4096;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Kernel taps for an output sample sitting `frac` input samples past an
/// input index: `(first tap offset, weights)`.
fn taps(frac: f64, cutoff: f64, half_width: f64) -> (i64, Vec<f64>) {
    let lo = (frac - half_width).ceil() as i64;
    let hi = (frac + half_width).floor() as i64;
    let w = (lo..=hi)
        .map(|j| {
            let d = frac - j as f64;
            cutoff * sinc(cutoff * d) * blackman(d / half_width)
        })
        .collect();
    (lo, w)
}

/// Resamples `input` from `from_rate` to `to_rate`. Equal rates return a copy.
pub fn resample(input: &[f32], from_rate: u32, to_rate: u32) -> Vec<f32> {
    if from_rate == to_rate || input.is_empty() {
        return input.to_vec();
    }
    let ratio = to_rate as f64 / from_rate as f64;
    // Cutoff relative to the input Nyquist.
    let cutoff = ratio.min(1.0) * ROLLOFF;
    let half_width = ZERO_CROSSINGS / cutoff;
    let out_len = (input.len() as f64 * ratio).round() as usize;

    // Output n sits at input position n * down / up = q + rem / up, so the
    // kernel only depends on rem.
    let g = gcd(from_rate as u64, to_rate as u64);
    let (up, down) = (to_rate as u64 / g, from_rate as u64 / g);
    let table: Option<Vec<(i64, Vec<f64>)>> = (up <= MAX_PHASES)
        .then(|| (0..up).map(|rem| taps(rem as f64 / up as f64, cutoff, half_width)).collect());

    let n_in = input.len() as i64;
    (0..out_len)
        .into_par_iter()
        .map(|n| {
            let pos = n as u64 * down;
            let (q, rem) = ((pos / up) as i64, pos % up);
            let computed;
            let (lo, w) = match &table {
                Some(t) => &t[rem as usize],
                None => {
                    computed = taps(rem as f64 / up as f64, cutoff, half_width);
                    &computed
                }
            };
            let mut acc = 0.0;
            for (j, &wj) in w.iter().enumerate() {
                let k = q + lo + j as i64;
                if (0..n_in).contains(&k) {
                    acc += input[k as usize] as f64 * wj;
                }
            }
            acc as f32
        })
        .collect()
}
