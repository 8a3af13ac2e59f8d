//! Small music-information-retrieval estimators used as the tool backends:
//! tempo, key, chords and downbeats. All run on their own STFT of a 16 kHz
//! mono clip and are pure functions of the clip.

mod beats;
mod chords;
mod key;
mod onset;
mod stft;
#[cfg(test)]
pub(crate) mod synth;
mod tempo;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use beats::{track_downbeats, BeatGrid, DEFAULT_METER};
pub use chords::recognize_chords;
pub use key::{detect_key, KeyProfiles};
pub use onset::{onset_envelope, OnsetEnvelope, ONSET_FRAME_RATE};
pub use tempo::estimate_tempo;

use crate::audio::{WaveformClip, TARGET_SAMPLE_RATE};

#[derive(Debug, Error, PartialEq)]
pub enum MirError {
    #[error("insufficient onset energy")]
    InsufficientOnsetEnergy,
    #[error("silent input")]
    Silent,
    #[error("silent analysis window")]
    SilentWindow,
    #[error("empty analysis window")]
    EmptyWindow,
    #[error("invalid range [{t1}, {t2}] for a {duration:.2} s clip")]
    InvalidRange { t1: f64, t2: f64, duration: f64 },
    #[error("expected {TARGET_SAMPLE_RATE} Hz audio, got {0} Hz")]
    SampleRate(u32),
    #[error("meter must be at least 1")]
    BadMeter,
    #[error("bad key profile data: {0}")]
    Profiles(String),
}

pub type Result<T> = std::result::Result<T, MirError>;

pub(crate) fn check_rate(clip: &WaveformClip) -> Result<()> {
    if clip.sample_rate() != TARGET_SAMPLE_RATE {
        return Err(MirError::SampleRate(clip.sample_rate()));
    }
    Ok(())
}

pub const PITCH_NAMES: [&str; 12] = ["C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Major,
    Minor,
}

impl Mode {
    fn short(self) -> &'static str {
        match self {
            Mode::Major => "maj",
            Mode::Minor => "min",
        }
    }
}

/// One of the 24 major/minor keys, rendered as `C:maj` or `A:min`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KeyLabel {
    pub tonic: u8,
    pub mode: Mode,
}

impl KeyLabel {
    pub fn new(tonic: u8, mode: Mode) -> Self {
        Self { tonic: tonic % 12, mode }
    }

    pub fn transposed(self, semitones: i32) -> Self {
        Self::new((self.tonic as i32 + semitones).rem_euclid(12) as u8, self.mode)
    }
}

fn fmt_label(f: &mut fmt::Formatter<'_>, pc: u8, mode: Mode) -> fmt::Result {
    write!(f, "{}:{}", PITCH_NAMES[pc as usize % 12], mode.short())
}

fn parse_label(s: &str) -> Option<(u8, Mode)> {
    let (root, q) = s.trim().split_once(':')?;
    let pc = PITCH_NAMES.iter().position(|n| *n == root)? as u8;
    let mode = match q {
        "maj" => Mode::Major,
        "min" => Mode::Minor,
        _ => return None,
    };
    Some((pc, mode))
}

impl fmt::Display for KeyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_label(f, self.tonic, self.mode)
    }
}

impl FromStr for KeyLabel {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        parse_label(s).map(|(pc, m)| Self::new(pc, m)).ok_or_else(|| format!("bad key label `{s}`"))
    }
}

/// A major or minor triad held over `[start, end)` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChordLabel {
    pub root: u8,
    pub quality: Mode,
    pub start: f64,
    pub end: f64,
}

impl ChordLabel {
    /// The label without timing, e.g. `G:maj`.
    pub fn name(&self) -> String {
        format!("{}:{}", PITCH_NAMES[self.root as usize % 12], self.quality.short())
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

impl fmt::Display for ChordLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_label(f, self.root, self.quality)
    }
}

pub fn render_tempo(bpm: f64) -> String {
    format!("{bpm:.1}")
}

/// `C:maj from 10.00 to 14.50, G:maj from 14.50 to 20.00`
pub fn render_chords(chords: &[ChordLabel]) -> String {
    chords
        .iter()
        .map(|c| format!("{} from {:.2} to {:.2}", c.name(), c.start, c.end))
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn render_downbeats(grid: &BeatGrid) -> String {
    grid.downbeat_times.iter().map(|t| format!("{t:.2}")).collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_roundtrip() {
        for pc in 0..12 {
            for mode in [Mode::Major, Mode::Minor] {
                let k = KeyLabel::new(pc, mode);
                assert_eq!(k.to_string().parse::<KeyLabel>().unwrap(), k);
            }
        }
        assert_eq!(KeyLabel::new(0, Mode::Major).to_string(), "C:maj");
        assert_eq!(KeyLabel::new(9, Mode::Minor).to_string(), "A:min");
        assert_eq!(KeyLabel::new(11, Mode::Major).transposed(1), KeyLabel::new(0, Mode::Major));
        assert!("H:maj".parse::<KeyLabel>().is_err());
    }

    #[test]
    fn renderers() {
        assert_eq!(render_tempo(120.0), "120.0");
        assert_eq!(render_tempo(89.96), "90.0");
        let c = [
            ChordLabel { root: 0, quality: Mode::Major, start: 10.0, end: 14.5 },
            ChordLabel { root: 9, quality: Mode::Minor, start: 14.5, end: 20.0 },
        ];
        assert_eq!(render_chords(&c), "C:maj from 10.00 to 14.50, A:min from 14.50 to 20.00");
        let g = BeatGrid {
            beat_times: vec![0.5, 1.0, 1.5],
            downbeat_times: vec![0.5, 2.5],
            meter: 4,
            low_confidence: false,
        };
        assert_eq!(render_downbeats(&g), "0.50 2.50");
    }
}
