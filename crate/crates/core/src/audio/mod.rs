//! Audio front-end: waveform standardization, log-mel spectrograms, patch
//! tokens and token pooling.
//!
//! Shape chain for a standardized clip:
//!
//! ```text
//! 30 s @ 16 kHz -> (3072, 128) log-mel -> 1536 x 256 patch tokens -> (1536 / p) x 256
//! ```

mod clip;
mod mel;
mod melbin;
mod resample;
mod tokens;
mod wav;

pub use clip::{standardize_clip, white_noise_clip, WaveformClip, MAX_SECONDS, TARGET_SAMPLE_RATE};
pub use mel::{
    hz_to_mel, mel_filterbank, mel_spectrogram, mel_to_hz, MelSpectrogram, FRAMES_PER_SEGMENT,
    HOP_LENGTH, LOG_EPSILON, N_FFT, N_FRAMES, N_MELS, N_SEGMENTS, WIN_LENGTH,
};
pub use melbin::{decode_mel, encode_mel, MEL_MAGIC};
pub use resample::resample;
pub use tokens::{
    mean_pool_tokens, normalize_mel, patchify, MelNorm, PoolConfig, TokenGrid,
    ALLOWED_POOL_FACTORS, PATCH_DIM, PATCH_SIZE, RAW_TOKENS,
};
pub use wav::{decode_wav, read_wav, write_wav, WavEncoding};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("audio clip is empty")]
    Empty,
    #[error("sample rate must be positive, got {0}")]
    BadSampleRate(u32),
    #[error("duration must be positive and at most {max} s, got {got}")]
    BadDuration { got: f64, max: f64 },
    #[error("sample {index} is out of range or not finite: {value}")]
    BadSample { index: usize, value: f32 },
    #[error("clip is not standardized: expected {expected_len} samples at 16000 Hz, got {got_len} at {got_rate} Hz")]
    NotStandardized {
        expected_len: usize,
        got_len: usize,
        got_rate: u32,
    },
    #[error("expected shape ({expected_rows}, {expected_cols}), got ({rows}, {cols})")]
    Shape {
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },
    #[error("pool factor {factor} does not divide {n_tokens} tokens")]
    PoolFactor { factor: usize, n_tokens: usize },
    #[error("pool factor {0} is not one of the allowed factors")]
    PoolFactorNotAllowed(usize),
    #[error("mel binary: {0}")]
    MelFormat(String),
    #[error("wav: {0}")]
    Wav(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AudioError>;
