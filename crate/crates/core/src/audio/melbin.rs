//! Binary mel export: 16-byte header (`"OMKMEL1\0"`, u32 frames, u32 bins,
//! little-endian) followed by row-major little-endian f32 values.

use super::{AudioError, MelSpectrogram, Result};

pub const MEL_MAGIC: &[u8; 8] = b"OMKMEL1\0";
const HEADER_LEN: usize = 16;

pub fn encode_mel(mel: &MelSpectrogram) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + mel.values().len() * 4);
    out.extend_from_slice(MEL_MAGIC);
    out.extend_from_slice(&(mel.n_frames() as u32).to_le_bytes());
    out.extend_from_slice(&(mel.n_bins() as u32).to_le_bytes());
    for v in mel.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_mel(bytes: &[u8]) -> Result<MelSpectrogram> {
    if bytes.len() < HEADER_LEN {
        return Err(AudioError::MelFormat(format!(
            "truncated header: {} bytes",
            bytes.len()
        )));
    }
    if &bytes[..8] != MEL_MAGIC {
        return Err(AudioError::MelFormat("bad magic".into()));
    }
    let frames = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let bins = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let body = &bytes[HEADER_LEN..];
    let expected = frames
        .checked_mul(bins)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| AudioError::MelFormat("dimension overflow".into()))?;
    if body.len() != expected {
        return Err(AudioError::MelFormat(format!(
            "payload is {} bytes, header implies {expected}",
            body.len()
        )));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    MelSpectrogram::from_values(values, frames, bins)
}
