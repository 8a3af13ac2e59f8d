use super::stft::{chroma_of, stft};
use super::{check_rate, ChordLabel, MirError, Mode, Result};
use crate::audio::WaveformClip;

const WINDOW: usize = 4096;
const HOP: usize = 800;
const LO_HZ: f64 = 65.0;
const HI_HZ: f64 = 2000.0;
const MEDIAN_SECS: f64 = 0.5;
const MIN_SEGMENT_SECS: f64 = 0.3;
const SILENCE: f64 = 1e-8;

/// Index into the 24 triads: root * 2 + (0 major, 1 minor).
fn template(idx: usize) -> [f64; 12] {
    let root = idx / 2;
    let third = if idx % 2 == 0 { 4 } else { 3 };
    let mut t = [0.0; 12];
    for iv in [0, third, 7] {
        t[(root + iv) % 12] = 1.0 / 3f64.sqrt();
    }
    t
}

fn best_triad(chroma: &[f64; 12]) -> usize {
    let norm = chroma.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut best = (f64::NEG_INFINITY, 0);
    for idx in 0..24 {
        let t = template(idx);
        let s = chroma.iter().zip(&t).map(|(a, b)| a * b).sum::<f64>() / norm;
        if s > best.0 {
            best = (s, idx);
        }
    }
    best.1
}

fn median_filter(frames: &[[f64; 12]], width: usize) -> Vec<[f64; 12]> {
    let half = width / 2;
    let mut buf = Vec::with_capacity(width);
    (0..frames.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(frames.len());
            std::array::from_fn(|pc| {
                buf.clear();
                buf.extend(frames[lo..hi].iter().map(|f| f[pc]));
                buf.sort_by(f64::total_cmp);
                let m = buf.len();
                if m % 2 == 1 {
                    buf[m / 2]
                } else {
                    0.5 * (buf[m / 2 - 1] + buf[m / 2])
                }
            })
        })
        .collect()
}

/// Merges segments shorter than `min_len` into a neighbour, shortest first.
/// Ties prefer the longer neighbour, then the earlier one.
fn absorb_short(mut segs: Vec<(usize, f64, f64)>, min_len: f64) -> Vec<(usize, f64, f64)> {
    loop {
        segs = merge_equal(segs);
        if segs.len() < 2 {
            return segs;
        }
        let Some(i) = (0..segs.len())
            .filter(|&i| segs[i].2 - segs[i].1 < min_len)
            .min_by(|&a, &b| (segs[a].2 - segs[a].1).total_cmp(&(segs[b].2 - segs[b].1)))
        else {
            return segs;
        };
        let len = |j: usize| segs[j].2 - segs[j].1;
        let target = match (i.checked_sub(1), (i + 1 < segs.len()).then_some(i + 1)) {
            (Some(l), Some(r)) => {
                if len(r) > len(l) {
                    r
                } else {
                    l
                }
            }
            (Some(l), None) => l,
            (None, Some(r)) => r,
            (None, None) => return segs,
        };
        let (_, s, e) = segs.remove(i);
        let t = if target > i { target - 1 } else { target };
        segs[t].1 = segs[t].1.min(s);
        segs[t].2 = segs[t].2.max(e);
    }
}

fn merge_equal(segs: Vec<(usize, f64, f64)>) -> Vec<(usize, f64, f64)> {
    let mut out: Vec<(usize, f64, f64)> = Vec::with_capacity(segs.len());
    for s in segs {
        match out.last_mut() {
            Some(last) if last.0 == s.0 => last.2 = s.2,
            _ => out.push(s),
        }
    }
    out
}

/// Major/minor triad segments tiling `[t1, t2]`.
pub fn recognize_chords(clip: &WaveformClip, t1: f64, t2: f64) -> Result<Vec<ChordLabel>> {
    check_rate(clip)?;
    let duration = clip.duration_secs();
    if !(t1.is_finite() && t2.is_finite()) || t1 < 0.0 || t2 > duration + 1e-9 || t1 > t2 {
        return Err(MirError::InvalidRange { t1, t2, duration });
    }
    if t1 == t2 {
        return Err(MirError::EmptyWindow);
    }
    let sr = clip.sample_rate() as f64;
    let a = (t1 * sr).round() as usize;
    let b = ((t2 * sr).round() as usize).min(clip.len());
    if b <= a {
        return Err(MirError::EmptyWindow);
    }
    let spec = stft(&clip.samples()[a..b], clip.sample_rate(), WINDOW, HOP);
    let raw: Vec<[f64; 12]> = (0..spec.n_frames).map(|i| chroma_of(&spec, i, LO_HZ, HI_HZ)).collect();
    let energy: Vec<f64> = raw.iter().map(|c| c.iter().sum()).collect();
    if energy.iter().all(|&e| !(e > SILENCE)) {
        return Err(MirError::SilentWindow);
    }
    let width = ((MEDIAN_SECS * spec.frame_rate()).round() as usize) | 1;
    let smooth = median_filter(&raw, width);

    // silent frames inherit the nearest earlier label (or the first later one)
    let mut labels: Vec<Option<usize>> = smooth
        .iter()
        .zip(&energy)
        .map(|(c, &e)| (e > SILENCE && c.iter().sum::<f64>() > 0.0).then(|| best_triad(c)))
        .collect();
    let first = labels.iter().flatten().next().copied().unwrap_or(0);
    let mut prev = first;
    for l in labels.iter_mut() {
        match l {
            Some(v) => prev = *v,
            None => *l = Some(prev),
        }
    }

    let hop_secs = HOP as f64 / sr;
    let n = labels.len();
    let segs: Vec<(usize, f64, f64)> = labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| {
            let s = if i == 0 { t1 } else { (t1 + (i as f64 - 0.5) * hop_secs).min(t2) };
            let e = if i + 1 == n { t2 } else { (t1 + (i as f64 + 0.5) * hop_secs).min(t2) };
            (l.unwrap_or(first), s, e)
        })
        .filter(|s| s.2 > s.1)
        .collect();
    Ok(absorb_short(segs, MIN_SEGMENT_SECS)
        .into_iter()
        .map(|(idx, start, end)| ChordLabel {
            root: (idx / 2) as u8,
            quality: if idx % 2 == 0 { Mode::Major } else { Mode::Minor },
            start,
            end,
        })
        .collect())
}
