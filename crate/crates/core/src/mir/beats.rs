use serde::{Deserialize, Serialize};

use super::onset::onset_envelope;
use super::{estimate_tempo, MirError, Result};
use crate::audio::WaveformClip;

pub const DEFAULT_METER: usize = 4;
/// Beats may shift this many onset frames from the predicted grid.
const REFINE_FRAMES: isize = 3;
/// Best bar phase must beat the runner-up by this factor to be trusted.
const CONFIDENCE_RATIO: f64 = 1.15;
/// Peaks weaker than this share of the median beat strength do not count
/// as onset support.
const EDGE_SUPPORT: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatGrid {
    pub beat_times: Vec<f64>,
    pub downbeat_times: Vec<f64>,
    pub meter: usize,
    /// Set when no bar phase clearly dominates.
    pub low_confidence: bool,
}

fn local_peak(values: &[f64], center: isize) -> Option<usize> {
    let lo = (center - REFINE_FRAMES).max(0);
    let hi = (center + REFINE_FRAMES).min(values.len() as isize - 1);
    if lo > hi {
        return None;
    }
    (lo..=hi).map(|i| i as usize).max_by(|&a, &b| values[a].total_cmp(&values[b]).then(b.cmp(&a)))
}

/// Steps one period at a time from `start`, snapping to the local onset
/// peak. With a `floor`, peaks below it are not snapped to and the beat is
/// marked unsupported.
fn walk(o: &[f64], start: f64, period: f64, floor: Option<f64>) -> Vec<(usize, bool)> {
    let mut beats: Vec<(usize, bool)> = Vec::new();
    let mut predicted = start;
    while (predicted.round() as usize) < o.len() {
        let center = predicted.round() as usize;
        let Some(peak) = local_peak(o, center as isize) else { break };
        let (b, supported) = match floor {
            Some(f) if o[peak] < f => (center, false),
            _ => (peak, true),
        };
        if beats.last().is_none_or(|&(last, _)| b > last) {
            beats.push((b, supported));
        }
        predicted = if supported { b as f64 } else { predicted } + period;
    }
    beats
}

pub fn track_downbeats(clip: &WaveformClip, meter: usize) -> Result<BeatGrid> {
    if meter == 0 {
        return Err(MirError::BadMeter);
    }
    let bpm = estimate_tempo(clip)?;
    let env = onset_envelope(clip)?;
    let o = &env.values;
    let period = 60.0 * env.frame_rate / bpm;

    // comb phase: the offset whose grid collects the most onset strength
    let n_phases = period.ceil() as usize;
    let comb = |phase: usize| -> f64 {
        let mut s = 0.0;
        let mut k = 0.0;
        loop {
            let i = (phase as f64 + k * period).round() as usize;
            if i >= o.len() {
                return s;
            }
            s += o[i];
            k += 1.0;
        }
    };
    let phase = (0..n_phases).max_by(|&a, &b| comb(a).total_cmp(&comb(b)).then(b.cmp(&a))).unwrap_or(0);

    // First walk snaps everywhere and only serves to measure typical beat
    // strength; the second snaps only to supported peaks so silent stretches
    // do not drift the grid.
    let first = walk(o, phase as f64, period, None);
    let mut strengths: Vec<f64> = first.iter().map(|&(b, _)| o[b]).collect();
    strengths.sort_by(f64::total_cmp);
    let floor = EDGE_SUPPORT * strengths.get(strengths.len() / 2).copied().unwrap_or(0.0);
    let mut walked = walk(o, phase as f64, period, Some(floor));
    while walked.last().is_some_and(|&(_, supported)| !supported) {
        walked.pop();
    }
    let lead = walked.iter().take_while(|&&(_, supported)| !supported).count();
    let beats: Vec<usize> = walked.drain(lead..).map(|(b, _)| b).collect();

    let strength: Vec<f64> = (0..meter)
        .map(|j| {
            let picks: Vec<f64> = beats.iter().skip(j).step_by(meter).map(|&b| o[b]).collect();
            if picks.is_empty() {
                0.0
            } else {
                picks.iter().sum::<f64>() / picks.len() as f64
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..meter).collect();
    order.sort_by(|&a, &b| strength[b].total_cmp(&strength[a]).then(a.cmp(&b)));
    let bar_phase = order[0];
    let low_confidence = meter == 1 || strength[order[0]] < CONFIDENCE_RATIO * strength[order[1]];

    let beat_times: Vec<f64> = beats.iter().map(|&b| env.frame_time(b as f64)).collect();
    let downbeat_times = beat_times.iter().skip(bar_phase).step_by(meter).copied().collect();
    Ok(BeatGrid { beat_times, downbeat_times, meter, low_confidence })
}
