//! Deterministic synthetic keyword dataset.
//!
//! Each class has a distinct template: keyword classes are tones (even
//! labels) or upward chirps (odd labels) on a geometric frequency ladder,
//! silence is near-zero noise, unknown is broadband noise. Every clip is a
//! pure function of (clip seed, label, speaker): the speaker contributes a
//! pitch offset of up to one semitone, the clip seed drives phase and the
//! additive noise.

use super::{
    dataset::{ClipRef, ClipSource, Manifest},
    stable_hash, AudioClip, AudioError, Result, CLIP_SAMPLES, NUM_CLASSES, SAMPLE_RATE,
    SILENCE_LABEL, UNKNOWN_LABEL,
};
use crate::tensor::{Real, PI};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Parameters of a generated dataset.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub speakers: usize,
    pub clips: usize,
    pub seed: u64,
}

const KEYWORD_AMP: Real = 0.32;
const SILENCE_AMP: Real = 0.002;
const UNKNOWN_AMP: Real = 0.15;
const CLIP_NOISE_AMP: Real = 0.01;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Base frequency of a keyword class: a geometric ladder from 350 Hz.
fn class_base_freq(label: usize) -> Real {
    350.0 * (1.32 as Real).powi(label as i32)
}

/// Per-speaker pitch offset in [-1, 1] semitones, derived from the id.
fn speaker_pitch_factor(speaker_id: &str) -> Real {
    let h = stable_hash(speaker_id.as_bytes());
    let semitones = (h % 20_001) as Real / 10_000.0 - 1.0;
    (2.0 as Real).powf(semitones / 12.0)
}

/// Smooth on/off envelope: the keyword is active from 0.15 s to 0.85 s with
/// 50 ms raised-cosine ramps.
fn envelope(i: usize) -> Real {
    let t = i as Real / SAMPLE_RATE as Real;
    let (start, stop, ramp) = (0.15, 0.85, 0.05);
    if t < start || t > stop {
        0.0
    } else if t < start + ramp {
        0.5 - 0.5 * (PI * (t - start) / ramp).cos()
    } else if t > stop - ramp {
        0.5 - 0.5 * (PI * (stop - t) / ramp).cos()
    } else {
        1.0
    }
}

/// Deterministically generate the audio for one manifest record.
pub fn synthesize_clip(clip_seed: u64, label: usize, speaker_id: &str) -> Result<AudioClip> {
    if label >= NUM_CLASSES {
        return Err(AudioError::LabelOutOfRange {
            label,
            classes: NUM_CLASSES,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(clip_seed);
    let samples: Vec<Real> = match label {
        SILENCE_LABEL => (0..CLIP_SAMPLES)
            .map(|_| SILENCE_AMP * (rng.gen::<f64>() as Real * 2.0 - 1.0))
            .collect(),
        UNKNOWN_LABEL => (0..CLIP_SAMPLES)
            .map(|_| UNKNOWN_AMP * (rng.gen::<f64>() as Real * 2.0 - 1.0))
            .collect(),
        _ => {
            let f0 = class_base_freq(label) * speaker_pitch_factor(speaker_id);
            // Odd labels sweep up 25% over the active window.
            let sweep = if label % 2 == 1 { 0.25 } else { 0.0 };
            let phase0 = rng.gen::<f64>() as Real * 2.0 * PI;
            let mut phase = phase0;
            (0..CLIP_SAMPLES)
                .map(|i| {
                    let progress = i as Real / CLIP_SAMPLES as Real;
                    let f = f0 * (1.0 + sweep * progress);
                    phase += 2.0 * PI * f / SAMPLE_RATE as Real;
                    let tone = KEYWORD_AMP * envelope(i) * phase.sin();
                    tone + CLIP_NOISE_AMP * (rng.gen::<f64>() as Real * 2.0 - 1.0)
                })
                .collect()
        }
    };
    AudioClip::new(samples, label, speaker_id)
}

/// Generate a balanced synthetic manifest: labels cycle through the 12
/// classes, speakers cycle through `speakers` ids, and every record is
/// reproducible from the dataset seed alone.
pub fn synth_dataset(spec: &SynthSpec) -> Result<Manifest> {
    if spec.clips < NUM_CLASSES {
        return Err(AudioError::TooFewClips {
            got: spec.clips,
            min: NUM_CLASSES,
        });
    }
    let speakers = spec.speakers.max(1);
    let clips = (0..spec.clips)
        .map(|i| {
            let label = i % NUM_CLASSES;
            // Block assignment so every speaker covers all twelve classes;
            // speaker identity must not predict the label.
            let speaker_id = format!(
                "spk{:08x}_{:05}",
                spec.seed,
                (i / NUM_CLASSES) % speakers
            );
            ClipRef {
                source: ClipSource::Synth {
                    clip_seed: splitmix64(spec.seed ^ (i as u64).wrapping_mul(0x9e3779b97f4a7c15)),
                },
                label,
                speaker_id,
            }
        })
        .collect();
    Ok(Manifest { clips })
}
