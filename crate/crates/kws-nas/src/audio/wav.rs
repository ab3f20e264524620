//! Minimal RIFF/WAVE reader and writer for PCM 16-bit mono 16 kHz files.

use super::{label_for_word, AudioClip, AudioError, Result, SAMPLE_RATE};
use crate::tensor::Real;
use std::path::Path;

fn io_err(path: &Path, source: std::io::Error) -> AudioError {
    AudioError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Parse WAV bytes into samples scaled to [-1, 1] by dividing by 32768.
/// Accepts only PCM, mono, 16 kHz, 16-bit; anything else is a structured
/// error naming the offending field.
pub fn parse_wav(bytes: &[u8]) -> Result<Vec<Real>> {
    let need = |offset: usize, n: usize, what: &'static str| -> Result<&[u8]> {
        bytes
            .get(offset..offset + n)
            .ok_or(AudioError::Malformed { what, offset })
    };
    if need(0, 4, "missing RIFF magic")? != b"RIFF" {
        return Err(AudioError::NotRiff { offset: 0 });
    }
    if need(8, 4, "missing WAVE magic")? != b"WAVE" {
        return Err(AudioError::NotRiff { offset: 8 });
    }

    let u16_at = |o: usize, what: &'static str| -> Result<u16> {
        let b = need(o, 2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    };
    let u32_at = |o: usize, what: &'static str| -> Result<u32> {
        let b = need(o, 4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    };

    let mut offset = 12;
    let mut fmt_seen = false;
    let mut data: Option<(usize, usize)> = None;
    while offset + 8 <= bytes.len() {
        let id = need(offset, 4, "truncated chunk id")?;
        let size = u32_at(offset + 4, "truncated chunk size")? as usize;
        let body = offset + 8;
        match id {
            b"fmt " => {
                let format = u16_at(body, "truncated fmt chunk")?;
                if format != 1 {
                    return Err(AudioError::BadField {
                        field: "audio_format",
                        expected: "1 (PCM)".into(),
                        got: format.to_string(),
                    });
                }
                let channels = u16_at(body + 2, "truncated fmt chunk")?;
                if channels != 1 {
                    return Err(AudioError::BadField {
                        field: "channels",
                        expected: "1 (mono)".into(),
                        got: channels.to_string(),
                    });
                }
                let rate = u32_at(body + 4, "truncated fmt chunk")?;
                if rate != SAMPLE_RATE {
                    return Err(AudioError::BadField {
                        field: "sample_rate",
                        expected: SAMPLE_RATE.to_string(),
                        got: rate.to_string(),
                    });
                }
                let bits = u16_at(body + 14, "truncated fmt chunk")?;
                if bits != 16 {
                    return Err(AudioError::BadField {
                        field: "bits_per_sample",
                        expected: "16".into(),
                        got: bits.to_string(),
                    });
                }
                fmt_seen = true;
            }
            b"data" => {
                if body + size > bytes.len() {
                    return Err(AudioError::Malformed {
                        what: "data chunk extends past end of file",
                        offset: body,
                    });
                }
                data = Some((body, size));
            }
            _ => {}
        }
        // Chunks are word-aligned.
        offset = body + size + (size & 1);
    }

    if !fmt_seen {
        return Err(AudioError::Malformed {
            what: "no fmt chunk",
            offset: bytes.len(),
        });
    }
    let (start, size) = data.ok_or(AudioError::Malformed {
        what: "no data chunk",
        offset: bytes.len(),
    })?;
    let samples = bytes[start..start + size]
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]) as Real / 32768.0)
        .collect();
    Ok(samples)
}

/// Read a WAV without the one-second pad/trim (background-noise files).
pub fn read_wav_raw(path: &Path) -> Result<Vec<Real>> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    parse_wav(&bytes)
}

/// Read a WAV as a one-second [`AudioClip`].
///
/// Label and speaker follow the Speech Commands layout: the parent directory
/// is the word and the file stem up to `_nohash_` is the speaker. A word
/// outside the keyword list maps to the unknown class.
pub fn read_wav(path: &Path) -> Result<AudioClip> {
    let samples = read_wav_raw(path)?;
    let word = path
        .parent()
        .and_then(|p| p.file_name())
        .map(|n| n.to_string_lossy().to_string())
        .unwrap_or_default();
    AudioClip::new(samples, label_for_word(&word), speaker_from_path(path))
}

/// The speaker hash portion of a Speech Commands file name.
pub fn speaker_from_path(path: &Path) -> String {
    let stem = path
        .file_stem()
        .map(|n| n.to_string_lossy().to_string())
        .unwrap_or_default();
    match stem.split_once("_nohash_") {
        Some((speaker, _)) => speaker.to_string(),
        None => stem,
    }
}

/// Write mono 16-bit PCM at 16 kHz (quantizing by 32767); used by fixtures
/// and the synthetic exporter.
pub fn write_wav(path: &Path, samples: &[Real]) -> Result<()> {
    let data_size = samples.len() * 2;
    let mut bytes = Vec::with_capacity(44 + data_size);
    bytes.extend_from_slice(b"RIFF");
    bytes.extend_from_slice(&((36 + data_size) as u32).to_le_bytes());
    bytes.extend_from_slice(b"WAVE");
    bytes.extend_from_slice(b"fmt ");
    bytes.extend_from_slice(&16u32.to_le_bytes());
    bytes.extend_from_slice(&1u16.to_le_bytes()); // PCM
    bytes.extend_from_slice(&1u16.to_le_bytes()); // mono
    bytes.extend_from_slice(&SAMPLE_RATE.to_le_bytes());
    bytes.extend_from_slice(&(SAMPLE_RATE * 2).to_le_bytes());
    bytes.extend_from_slice(&2u16.to_le_bytes());
    bytes.extend_from_slice(&16u16.to_le_bytes());
    bytes.extend_from_slice(b"data");
    bytes.extend_from_slice(&(data_size as u32).to_le_bytes());
    for &s in samples {
        let q = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        bytes.extend_from_slice(&q.to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(|e| io_err(path, e))
}
