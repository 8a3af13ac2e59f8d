use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::decode::greedy_decode;
use super::model::TinyModel;
use super::train::{TextExample, TrainExample};
use super::{encode_text, decode_text, Result};
use crate::audio::{
    mean_pool_tokens, mel_spectrogram, normalize_mel, patchify, standardize_clip, white_noise_clip, MelNorm,
    PoolConfig, TokenGrid, WaveformClip, MAX_SECONDS, TARGET_SAMPLE_RATE,
};
use crate::metrics::{mcq_score, McqItem, McqLabel, McqOutcome};

/// Pool factor used by the toy presets: 1536 patches become 12 tokens.
pub const TOY_POOL_FACTOR: usize = 128;

const TOY_PROMPT: &str = "Describe the music.";
const MOODS: [&str; 8] = ["calm", "dark", "warm", "odd", "loud", "sad", "glad", "cold"];
const SOUNDS: [&str; 4] = ["bass", "pads", "keys", "horn"];

/// Standardized clip to patch tokens: log-mel, per-clip normalization,
/// 16x16 patches, then mean pooling.
pub fn music_tokens(clip: &WaveformClip, pool: PoolConfig) -> Result<TokenGrid> {
    let clip = standardize_clip(clip, MAX_SECONDS)?;
    let mel = normalize_mel(&mel_spectrogram(&clip)?, MelNorm::PerClip);
    Ok(mean_pool_tokens(&patchify(&mel)?, pool)?)
}

/// A synthetic clip whose timbre and pitch set are determined by `index`:
/// a few harmonic tones with per-clip tremolo.
pub fn toy_clip(index: usize, seconds: f64) -> Result<WaveformClip> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + index as u64);
    let sr = TARGET_SAMPLE_RATE as f64;
    let n = (seconds * sr).round() as usize;
    let voices: Vec<(f64, usize)> = (0..3)
        .map(|_| {
            let midi = rng.random_range(36..96) as f64;
            (440.0 * 2f64.powf((midi - 69.0) / 12.0), rng.random_range(1..5))
        })
        .collect();
    let tremolo = rng.random_range(0.5..6.0);
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let env = 0.6 + 0.4 * (std::f64::consts::TAU * tremolo * t).sin();
            let s: f64 = voices
                .iter()
                .map(|&(f, harmonics)| {
                    (1..=harmonics)
                        .filter(|&h| f * (h as f64) < sr / 2.0)
                        .map(|h| (std::f64::consts::TAU * f * h as f64 * t).sin() / h as f64)
                        .sum::<f64>()
                })
                .sum();
            (0.15 * env * s) as f32
        })
        .collect();
    Ok(WaveformClip::new(samples, TARGET_SAMPLE_RATE)?)
}

fn toy_caption(i: usize) -> String {
    format!("{} {}", MOODS[i % MOODS.len()], SOUNDS[(i / MOODS.len()) % SOUNDS.len()])
}

/// `n` captioning examples over distinct synthetic clips, with short
/// mood-plus-sound captions.
pub fn toy_dataset(n: usize, pool: PoolConfig) -> Result<Vec<TrainExample>> {
    let prompt = encode_text(TOY_PROMPT);
    (0..n)
        .map(|i| {
            let caption = toy_caption(i);
            Ok(TrainExample {
                music: music_tokens(&toy_clip(i, MAX_SECONDS)?, pool)?,
                prompt: prompt.clone(),
                target: encode_text(&caption),
            })
        })
        .collect()
}

/// Text-only corpus that teaches the base to answer the toy prompts from
/// descriptor words found anywhere in a `context_len`-byte window, the
/// window a music prefix of that length later occupies.
pub fn toy_pretrain_corpus(context_len: usize, variants: usize, seed: u64) -> Vec<TextExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut place = |words: Vec<String>| -> Vec<u32> {
        let mut text = words.join(" ");
        text.truncate(context_len);
        let pad = rng.random_range(0..=context_len - text.len());
        let mut ctx = vec![u32::from(b' '); context_len];
        for (slot, b) in ctx[pad..].iter_mut().zip(text.bytes()) {
            *slot = u32::from(b);
        }
        ctx
    };
    let mut out = Vec::new();
    let caption_prompt = encode_text(TOY_PROMPT);
    for i in 0..MOODS.len() * SOUNDS.len() {
        let caption = toy_caption(i);
        let words: Vec<String> = caption.split(' ').map(String::from).collect();
        for v in 0..variants {
            let mut w = words.clone();
            if v % 2 == 1 {
                w.reverse();
            }
            out.push(TextExample { context: place(w), prompt: caption_prompt.clone(), target: encode_text(&caption) });
        }
    }
    let probe_prompt = encode_text(&probe_prompt_text());
    for label in McqLabel::ALL {
        for v in 0..variants {
            let cue = if v % 2 == 0 { label.to_string() } else { label.to_string().to_lowercase() };
            out.push(TextExample {
                context: place(vec!["pick".to_string(), cue]),
                prompt: probe_prompt.clone(),
                target: encode_text(&format!("({label})")),
            });
        }
    }
    out
}

const PROBE_QUESTION: &str = "Which sound is this?";
const PROBE_OPTIONS: [&str; 4] = ["low drone", "bright bells", "fast pulse", "soft choir"];

fn probe_prompt_text() -> String {
    let opts: Vec<String> = McqLabel::ALL.iter().zip(PROBE_OPTIONS).map(|(l, o)| format!("({l}) {o}")).collect();
    format!("{PROBE_QUESTION} {} Answer:", opts.join(" "))
}

/// A multiple-choice question about one clip; the question text and options
/// are shared across probes so only the music identifies the answer.
#[derive(Debug, Clone, PartialEq)]
pub struct McqProbe {
    pub music: TokenGrid,
    pub question: String,
    pub options: [String; 4],
    pub gold: McqLabel,
}

impl McqProbe {
    pub fn prompt_text(&self) -> String {
        let opts: Vec<String> = McqLabel::ALL
            .iter()
            .zip(&self.options)
            .map(|(l, o)| format!("({l}) {o}"))
            .collect();
        format!("{} {} Answer:", self.question, opts.join(" "))
    }

    pub fn train_example(&self) -> TrainExample {
        TrainExample {
            music: self.music.clone(),
            prompt: encode_text(&self.prompt_text()),
            target: encode_text(&format!("({})", self.gold)),
        }
    }
}

/// Four probes over four toy clips, one per answer label.
pub fn toy_mcq_probes(pool: PoolConfig) -> Result<Vec<McqProbe>> {
    let options = PROBE_OPTIONS.map(String::from);
    McqLabel::ALL
        .iter()
        .enumerate()
        .map(|(i, &gold)| {
            Ok(McqProbe {
                music: music_tokens(&toy_clip(100 + i, MAX_SECONDS)?, pool)?,
                question: PROBE_QUESTION.to_string(),
                options: options.clone(),
                gold,
            })
        })
        .collect()
}

/// White-noise substitutes, one per requested clip, pooled like real clips.
pub fn noise_tokens(n: usize, seed: u64, pool: PoolConfig) -> Result<Vec<TokenGrid>> {
    (0..n)
        .map(|i| music_tokens(&white_noise_clip(MAX_SECONDS, seed.wrapping_add(i as u64))?, pool))
        .collect()
}

/// Greedy answers to each probe, scored as multiple choice. `music` replaces
/// each probe's own tokens when given (e.g. with [`noise_tokens`]).
pub fn answer_probes(model: &TinyModel, probes: &[McqProbe], music: Option<&[TokenGrid]>) -> Result<McqOutcome> {
    let items = probes
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let grid = music.map_or(&p.music, |m| &m[i % m.len()]);
            let out = greedy_decode(model, grid, &encode_text(&p.prompt_text()), 8)?;
            Ok(McqItem {
                question: p.question.clone(),
                options: p.options.clone(),
                gold: p.gold,
                model_answer: decode_text(&out),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(mcq_score(&items)?)
}
