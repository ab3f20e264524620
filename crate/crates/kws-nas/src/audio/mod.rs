//! Audio ingestion and features: WAV parsing, 40-dim MFCC extraction,
//! speaker-disjoint dataset splitting, and a synthetic keyword generator for
//! desk-scale experiments.

mod batch;
mod dataset;
mod mfcc;
mod synth;
mod wav;

pub use batch::{make_batches, make_batches_ordered, Batch};
pub use dataset::{
    load_examples, split_dataset, split_manifest, ClipRef, ClipSource, DatasetSplits, Manifest,
    SplitSpec,
};
pub use mfcc::{compute_mfcc, compute_mfcc_samples, mel_filterbank, MFCC_FRAMES, N_MFCC};
pub use synth::{synth_dataset, synthesize_clip, SynthSpec};
pub use wav::{parse_wav, read_wav, read_wav_raw, write_wav};

use crate::tensor::{Real, Tensor};
use thiserror::Error;

pub const SAMPLE_RATE: u32 = 16_000;
/// Every clip is exactly one second.
pub const CLIP_SAMPLES: usize = 16_000;
pub const NUM_CLASSES: usize = 12;
pub const SILENCE_LABEL: usize = 10;
pub const UNKNOWN_LABEL: usize = 11;

/// The ten target keywords, in label order 0..=9.
pub const KEYWORDS: [&str; 10] = [
    "yes", "no", "up", "down", "left", "right", "on", "off", "stop", "go",
];

pub fn label_name(label: usize) -> &'static str {
    match label {
        SILENCE_LABEL => "_silence_",
        UNKNOWN_LABEL => "_unknown_",
        l if l < 10 => KEYWORDS[l],
        _ => "?",
    }
}

/// Label for a Speech Commands word directory: a keyword index, or the
/// unknown class for any other word.
pub fn label_for_word(word: &str) -> usize {
    KEYWORDS
        .iter()
        .position(|k| k.eq_ignore_ascii_case(word))
        .unwrap_or(UNKNOWN_LABEL)
}

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("not a RIFF/WAVE file: bad magic at byte offset {offset}")]
    NotRiff { offset: usize },
    #[error("malformed WAV: {what} at byte offset {offset}")]
    Malformed { what: &'static str, offset: usize },
    #[error("unsupported WAV {field}: expected {expected}, got {got}")]
    BadField {
        field: &'static str,
        expected: String,
        got: String,
    },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("dataset root {root} is missing keyword directories: {missing:?}")]
    MissingKeywords { root: String, missing: Vec<String> },
    #[error("manifest line {line}: {msg}")]
    ManifestParse { line: usize, msg: String },
    #[error("synthetic dataset needs at least {min} clips, got {got}")]
    TooFewClips { got: usize, min: usize },
}

type Result<T> = std::result::Result<T, AudioError>;

/// One second of mono 16 kHz audio with its class label and speaker.
#[derive(Debug, Clone)]
pub struct AudioClip {
    pub samples: Vec<Real>,
    pub sample_rate: u32,
    pub label: usize,
    pub speaker_id: String,
}

impl AudioClip {
    /// Pads with trailing zeros or truncates to exactly one second.
    pub fn new(
        mut samples: Vec<Real>,
        label: usize,
        speaker_id: impl Into<String>,
    ) -> Result<Self> {
        if label >= NUM_CLASSES {
            return Err(AudioError::LabelOutOfRange {
                label,
                classes: NUM_CLASSES,
            });
        }
        samples.resize(CLIP_SAMPLES, 0.0);
        Ok(AudioClip {
            samples,
            sample_rate: SAMPLE_RATE,
            label,
            speaker_id: speaker_id.into(),
        })
    }

    pub fn rms(&self) -> Real {
        let e: Real = self.samples.iter().map(|s| s * s).sum();
        (e / self.samples.len() as Real).sqrt()
    }
}

/// A 40 x T_frames MFCC map; the network's input representation.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    pub mfcc: Tensor,
}

impl FeatureMap {
    pub fn t_frames(&self) -> usize {
        self.mfcc.shape()[1]
    }
}

/// A featurized training example.
#[derive(Debug, Clone)]
pub struct Example {
    pub features: Tensor,
    pub label: usize,
}

/// Stable 64-bit FNV-1a, used wherever a platform-independent hash is needed
/// (speaker bucketing, config hashes).
pub fn stable_hash(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}
