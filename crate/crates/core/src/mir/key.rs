use serde::Deserialize;

use super::stft::{chroma_of, stft};
use super::{check_rate, KeyLabel, MirError, Mode, Result};
use crate::audio::WaveformClip;

const WINDOW: usize = 4096;
const HOP: usize = 2048;
const LO_HZ: f64 = 65.0;
const HI_HZ: f64 = 2000.0;
const SILENCE: f64 = 1e-8;

/// Major and minor key profiles indexed from the tonic.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct KeyProfiles {
    pub major: [f64; 12],
    pub minor: [f64; 12],
}

impl KeyProfiles {
    pub fn from_json(src: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(src).map_err(|e| MirError::Profiles(e.to_string()))?;
        if p.major.iter().chain(&p.minor).any(|v| !v.is_finite()) {
            return Err(MirError::Profiles("non-finite weight".into()));
        }
        Ok(p)
    }
}

impl Default for KeyProfiles {
    /// Krumhansl-Kessler probe-tone ratings.
    fn default() -> Self {
        Self::from_json(include_str!("../../data/key_profiles.json")).expect("shipped key profiles parse")
    }
}

fn pearson(a: &[f64; 12], b: &[f64; 12]) -> f64 {
    let ma = a.iter().sum::<f64>() / 12.0;
    let mb = b.iter().sum::<f64>() / 12.0;
    let (mut num, mut da, mut db) = (0.0, 0.0, 0.0);
    for i in 0..12 {
        num += (a[i] - ma) * (b[i] - mb);
        da += (a[i] - ma).powi(2);
        db += (b[i] - mb).powi(2);
    }
    if da <= 0.0 || db <= 0.0 {
        return 0.0;
    }
    num / (da * db).sqrt()
}

/// Mean chroma over the whole clip, normalized to unit sum.
pub(crate) fn mean_chroma(clip: &WaveformClip) -> Result<[f64; 12]> {
    check_rate(clip)?;
    let spec = stft(clip.samples(), clip.sample_rate(), WINDOW, HOP);
    let mut acc = [0.0; 12];
    for i in 0..spec.n_frames {
        let c = chroma_of(&spec, i, LO_HZ, HI_HZ);
        for (a, v) in acc.iter_mut().zip(c) {
            *a += v;
        }
    }
    let total: f64 = acc.iter().sum();
    if !(total / spec.n_frames as f64 > SILENCE) {
        return Err(MirError::Silent);
    }
    Ok(acc.map(|v| v / total))
}

/// Best-correlated of the 24 rotated profiles. Ties go to the lower pitch
/// class, then to major.
pub fn detect_key_with(clip: &WaveformClip, profiles: &KeyProfiles) -> Result<KeyLabel> {
    let chroma = mean_chroma(clip)?;
    let mut best = (f64::NEG_INFINITY, KeyLabel::new(0, Mode::Major));
    for tonic in 0..12u8 {
        for (mode, profile) in [(Mode::Major, &profiles.major), (Mode::Minor, &profiles.minor)] {
            let rotated: [f64; 12] = std::array::from_fn(|pc| profile[(pc + 12 - tonic as usize) % 12]);
            let r = pearson(&chroma, &rotated);
            if r > best.0 {
                best = (r, KeyLabel::new(tonic, mode));
            }
        }
    }
    Ok(best.1)
}

pub fn detect_key(clip: &WaveformClip) -> Result<KeyLabel> {
    detect_key_with(clip, &KeyProfiles::default())
}
