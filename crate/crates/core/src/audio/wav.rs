use std::io::{Cursor, Read, Seek};
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{AudioError, Result, WaveformClip};

/// Sample encodings accepted on read and offered on write.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

fn wav_err(e: impl std::fmt::Display) -> AudioError {
    AudioError::Wav(e.to_string())
}

fn read_from<R: Read + Seek>(reader: R) -> Result<WaveformClip> {
    let mut reader = WavReader::new(reader).map_err(wav_err)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(AudioError::Wav(format!(
            "expected mono audio, found {} channels",
            spec.channels
        )));
    }
    let samples: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err)?,
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err)?,
        (fmt, bits) => {
            return Err(AudioError::Wav(format!(
                "unsupported sample format {fmt:?} with {bits} bits"
            )))
        }
    };
    WaveformClip::from_unclamped(samples, spec.sample_rate)
}

/// Decodes an in-memory WAV file (mono, 16-bit PCM or 32-bit float).
pub fn decode_wav(bytes: &[u8]) -> Result<WaveformClip> {
    read_from(Cursor::new(bytes))
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<WaveformClip> {
    let file = std::fs::File::open(path)?;
    read_from(std::io::BufReader::new(file))
}

/// Encodes a clip as a mono WAV file in memory.
pub fn write_wav(clip: &WaveformClip, encoding: WavEncoding) -> Result<Vec<u8>> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate(),
        bits_per_sample: match encoding {
            WavEncoding::Pcm16 => 16,
            WavEncoding::Float32 => 32,
        },
        sample_format: match encoding {
            WavEncoding::Pcm16 => SampleFormat::Int,
            WavEncoding::Float32 => SampleFormat::Float,
        },
    };
    let mut buf = Cursor::new(Vec::new());
    {
        let mut w = WavWriter::new(&mut buf, spec).map_err(wav_err)?;
        for &s in clip.samples() {
            match encoding {
                WavEncoding::Pcm16 => w
                    .write_sample((s * 32767.0).round() as i16)
                    .map_err(wav_err)?,
                WavEncoding::Float32 => w.write_sample(s).map_err(wav_err)?,
            }
        }
        w.finalize().map_err(wav_err)?;
    }
    Ok(buf.into_inner())
}
