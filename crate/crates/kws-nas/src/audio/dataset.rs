//! Dataset references, manifests, and the speaker-disjoint 8:1:1 split.

use super::{
    compute_mfcc, label_for_word, read_wav_raw, stable_hash, synth::synthesize_clip,
    wav::speaker_from_path, AudioClip, AudioError, Example, Result, CLIP_SAMPLES, KEYWORDS,
    SILENCE_LABEL, UNKNOWN_LABEL,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;
use std::path::{Path, PathBuf};

pub const BACKGROUND_DIR: &str = "_background_noise_";

/// Where a clip's audio comes from. Synthetic clips and noise crops are
/// regenerated on demand, so a manifest line fully determines the audio.
#[derive(Debug, Clone, PartialEq)]
pub enum ClipSource {
    Wav(PathBuf),
    Synth { clip_seed: u64 },
    SilenceCrop { path: PathBuf, offset: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipRef {
    pub source: ClipSource,
    pub label: usize,
    pub speaker_id: String,
}

impl ClipRef {
    pub fn load(&self) -> Result<AudioClip> {
        match &self.source {
            ClipSource::Wav(path) => {
                let samples = read_wav_raw(path)?;
                AudioClip::new(samples, self.label, self.speaker_id.clone())
            }
            ClipSource::Synth { clip_seed } => {
                synthesize_clip(*clip_seed, self.label, &self.speaker_id)
            }
            ClipSource::SilenceCrop { path, offset } => {
                let samples = read_wav_raw(path)?;
                let end = (offset + CLIP_SAMPLES).min(samples.len());
                let crop = samples[(*offset).min(samples.len())..end].to_vec();
                AudioClip::new(crop, self.label, self.speaker_id.clone())
            }
        }
    }
}

/// Featurize a list of clips in order.
pub fn load_examples(clips: &[ClipRef]) -> Result<Vec<Example>> {
    clips
        .iter()
        .map(|c| {
            let clip = c.load()?;
            Ok(Example {
                features: compute_mfcc(&clip).mfcc,
                label: clip.label,
            })
        })
        .collect()
}

/// A flat list of clip records, serializable as one CSV row per clip
/// (`source,label,speaker_id`).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub clips: Vec<ClipRef>,
}

impl Manifest {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("source,label,speaker_id\n");
        for c in &self.clips {
            let source = match &c.source {
                ClipSource::Wav(p) => format!("wav:{}", p.display()),
                ClipSource::Synth { clip_seed } => format!("synth:{clip_seed}"),
                ClipSource::SilenceCrop { path, offset } => {
                    format!("crop:{}@{}", path.display(), offset)
                }
            };
            out.push_str(&format!("{source},{},{}\n", c.label, c.speaker_id));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut clips = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let parse = |msg: &str| AudioError::ManifestParse {
                line: i + 1,
                msg: msg.to_string(),
            };
            let mut fields = line.splitn(3, ',');
            let source_str = fields.next().ok_or_else(|| parse("missing source"))?;
            let label: usize = fields
                .next()
                .ok_or_else(|| parse("missing label"))?
                .trim()
                .parse()
                .map_err(|_| parse("label is not an integer"))?;
            let speaker_id = fields
                .next()
                .ok_or_else(|| parse("missing speaker_id"))?
                .trim()
                .to_string();
            let source = if let Some(seed) = source_str.strip_prefix("synth:") {
                ClipSource::Synth {
                    clip_seed: seed.parse().map_err(|_| parse("bad synth seed"))?,
                }
            } else if let Some(p) = source_str.strip_prefix("wav:") {
                ClipSource::Wav(PathBuf::from(p))
            } else if let Some(rest) = source_str.strip_prefix("crop:") {
                let (p, off) = rest
                    .rsplit_once('@')
                    .ok_or_else(|| parse("crop source needs path@offset"))?;
                ClipSource::SilenceCrop {
                    path: PathBuf::from(p),
                    offset: off.parse().map_err(|_| parse("bad crop offset"))?,
                }
            } else {
                return Err(parse("unknown source kind"));
            };
            clips.push(ClipRef {
                source,
                label,
                speaker_id,
            });
        }
        Ok(Manifest { clips })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| AudioError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AudioError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_csv(&text)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SplitSpec {
    /// Seed for silence crop offsets and unknown-class subsampling only; the
    /// speaker-to-split assignment is seed-free so splits never move.
    pub seed: u64,
}

#[derive(Debug, Clone, Default)]
pub struct DatasetSplits {
    pub train: Vec<ClipRef>,
    pub valid: Vec<ClipRef>,
    pub test: Vec<ClipRef>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Split {
    Train,
    Valid,
    Test,
}

/// 8:1:1 speaker bucketing by stable hash.
fn speaker_split(speaker_id: &str) -> Split {
    match stable_hash(speaker_id.as_bytes()) % 10 {
        8 => Split::Valid,
        9 => Split::Test,
        _ => Split::Train,
    }
}

/// Split an in-memory manifest (synthetic data path). Pure function of the
/// manifest: speakers hash into 8:1:1 buckets.
pub fn split_manifest(manifest: &Manifest, _spec: &SplitSpec) -> DatasetSplits {
    let mut out = DatasetSplits::default();
    for clip in &manifest.clips {
        match speaker_split(&clip.speaker_id) {
            Split::Train => out.train.push(clip.clone()),
            Split::Valid => out.valid.push(clip.clone()),
            Split::Test => out.test.push(clip.clone()),
        }
    }
    out
}

/// Split a Speech Commands directory tree.
///
/// Ten keyword directories are required. Other word directories feed the
/// unknown class (uniformly subsampled to the mean per-keyword count of each
/// split) and `_background_noise_` files provide one-second silence crops at
/// seeded random offsets, count-matched the same way. When
/// `validation_list.txt` / `testing_list.txt` exist at the root they override
/// the speaker hash for the files they name.
pub fn split_dataset(root: &Path, spec: &SplitSpec) -> Result<DatasetSplits> {
    let read_dir_sorted = |dir: &Path| -> Result<Vec<PathBuf>> {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| AudioError::Io {
                path: dir.display().to_string(),
                source: e,
            })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        entries.sort();
        Ok(entries)
    };

    let mut word_dirs = Vec::new();
    for entry in read_dir_sorted(root)? {
        if entry.is_dir() {
            word_dirs.push(entry);
        }
    }
    let dir_names: Vec<String> = word_dirs
        .iter()
        .filter_map(|d| d.file_name().map(|n| n.to_string_lossy().to_string()))
        .collect();
    let missing: Vec<String> = KEYWORDS
        .iter()
        .filter(|k| !dir_names.iter().any(|d| d.eq_ignore_ascii_case(k)))
        .map(|k| k.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(AudioError::MissingKeywords {
            root: root.display().to_string(),
            missing,
        });
    }

    let read_list = |name: &str| -> HashSet<String> {
        std::fs::read_to_string(root.join(name))
            .map(|text| {
                text.lines()
                    .map(|l| l.trim().replace('\\', "/"))
                    .filter(|l| !l.is_empty())
                    .collect()
            })
            .unwrap_or_default()
    };
    let valid_list = read_list("validation_list.txt");
    let test_list = read_list("testing_list.txt");

    let assign = |rel: &str, speaker: &str| -> Split {
        if test_list.contains(rel) {
            Split::Test
        } else if valid_list.contains(rel) {
            Split::Valid
        } else {
            speaker_split(speaker)
        }
    };

    let mut keyword_clips: Vec<(Split, ClipRef)> = Vec::new();
    let mut unknown_clips: Vec<(Split, ClipRef)> = Vec::new();
    let mut noise_files: Vec<PathBuf> = Vec::new();

    for dir in &word_dirs {
        let word = dir
            .file_name()
            .map(|n| n.to_string_lossy().to_string())
            .unwrap_or_default();
        if word == BACKGROUND_DIR {
            noise_files = read_dir_sorted(dir)?
                .into_iter()
                .filter(|p| p.extension().is_some_and(|e| e == "wav"))
                .collect();
            continue;
        }
        let label = label_for_word(&word);
        for file in read_dir_sorted(dir)? {
            if !file.extension().is_some_and(|e| e == "wav") {
                continue;
            }
            let speaker = speaker_from_path(&file);
            let rel = format!(
                "{}/{}",
                word,
                file.file_name().map(|n| n.to_string_lossy()).unwrap_or_default()
            );
            let split = assign(&rel, &speaker);
            let clip = ClipRef {
                source: ClipSource::Wav(file),
                label,
                speaker_id: speaker,
            };
            if label == UNKNOWN_LABEL {
                unknown_clips.push((split, clip));
            } else {
                keyword_clips.push((split, clip));
            }
        }
    }

    let mut out = DatasetSplits::default();
    for (split_idx, split) in [Split::Train, Split::Valid, Split::Test].iter().enumerate() {
        let keywords: Vec<ClipRef> = keyword_clips
            .iter()
            .filter(|(s, _)| s == split)
            .map(|(_, c)| c.clone())
            .collect();
        // Silence and unknown are count-matched to the mean keyword count.
        let per_class = ((keywords.len() as f64 / KEYWORDS.len() as f64).round()) as usize;

        let mut unknown: Vec<ClipRef> = unknown_clips
            .iter()
            .filter(|(s, _)| s == split)
            .map(|(_, c)| c.clone())
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ (0xa11ce ^ split_idx as u64));
        unknown.shuffle(&mut rng);
        unknown.truncate(per_class);

        // Background files hash into splits like speakers (file stem as id),
        // keeping noise sources disjoint across splits.
        let split_noise: Vec<&PathBuf> = noise_files
            .iter()
            .filter(|p| {
                let stem = p
                    .file_stem()
                    .map(|n| n.to_string_lossy().to_string())
                    .unwrap_or_default();
                speaker_split(&stem) == *split
            })
            .collect();
        let mut silence = Vec::new();
        if !split_noise.is_empty() {
            let mut noise_rng =
                ChaCha8Rng::seed_from_u64(spec.seed ^ (0x51_1e_4c ^ (split_idx as u64) << 8));
            for i in 0..per_class {
                let path = split_noise[i % split_noise.len()];
                let len = read_wav_raw(path)?.len();
                let max_off = len.saturating_sub(CLIP_SAMPLES);
                let offset = if max_off == 0 {
                    0
                } else {
                    noise_rng.gen_range(0..=max_off)
                };
                let stem = path
                    .file_stem()
                    .map(|n| n.to_string_lossy().to_string())
                    .unwrap_or_default();
                silence.push(ClipRef {
                    source: ClipSource::SilenceCrop {
                        path: path.clone(),
                        offset,
                    },
                    label: SILENCE_LABEL,
                    speaker_id: stem,
                });
            }
        }

        let bucket = match split {
            Split::Train => &mut out.train,
            Split::Valid => &mut out.valid,
            Split::Test => &mut out.test,
        };
        bucket.extend(keywords);
        bucket.extend(unknown);
        bucket.extend(silence);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{synth_dataset, SynthSpec};

    #[test]
    fn manifest_round_trips_through_csv() {
        let m = Manifest {
            clips: vec![
                ClipRef {
                    source: ClipSource::Synth { clip_seed: 99 },
                    label: 3,
                    speaker_id: "spk_a".into(),
                },
                ClipRef {
                    source: ClipSource::Wav(PathBuf::from("/x/yes/a_nohash_0.wav")),
                    label: 0,
                    speaker_id: "a".into(),
                },
                ClipRef {
                    source: ClipSource::SilenceCrop {
                        path: PathBuf::from("/x/_background_noise_/hum.wav"),
                        offset: 4000,
                    },
                    label: 10,
                    speaker_id: "hum".into(),
                },
            ],
        };
        let parsed = Manifest::from_csv(&m.to_csv()).unwrap();
        assert_eq!(parsed, m);
    }

    #[test]
    fn manifest_parse_error_carries_line_number() {
        let err = Manifest::from_csv("source,label,speaker_id\nbogus\n").unwrap_err();
        assert!(matches!(err, AudioError::ManifestParse { line: 2, .. }));
    }

    #[test]
    fn split_is_speaker_disjoint() {
        let m = synth_dataset(&SynthSpec {
            speakers: 40,
            clips: 600,
            seed: 11,
        })
        .unwrap();
        let splits = split_manifest(&m, &SplitSpec::default());
        let set = |v: &[ClipRef]| -> HashSet<String> {
            v.iter().map(|c| c.speaker_id.clone()).collect()
        };
        let (tr, va, te) = (set(&splits.train), set(&splits.valid), set(&splits.test));
        assert!(tr.is_disjoint(&va));
        assert!(tr.is_disjoint(&te));
        assert!(va.is_disjoint(&te));
        assert_eq!(
            splits.train.len() + splits.valid.len() + splits.test.len(),
            600
        );
    }

    #[test]
    fn split_is_deterministic() {
        let m = synth_dataset(&SynthSpec {
            speakers: 25,
            clips: 200,
            seed: 5,
        })
        .unwrap();
        let a = split_manifest(&m, &SplitSpec::default());
        let b = split_manifest(&m, &SplitSpec::default());
        assert_eq!(a.train, b.train);
        assert_eq!(a.valid, b.valid);
        assert_eq!(a.test, b.test);
    }

    #[test]
    fn bucket_proportions_near_eight_one_one() {
        let n = 10_000;
        let mut counts = [0usize; 3];
        for i in 0..n {
            let speaker = format!("spk{:08x}_{:05}", 0xfeedu64, i);
            match speaker_split(&speaker) {
                Split::Train => counts[0] += 1,
                Split::Valid => counts[1] += 1,
                Split::Test => counts[2] += 1,
            }
        }
        let frac = |c: usize| c as f64 / n as f64;
        assert!((frac(counts[0]) - 0.8).abs() < 0.02, "train {:?}", counts);
        assert!((frac(counts[1]) - 0.1).abs() < 0.02, "valid {:?}", counts);
        assert!((frac(counts[2]) - 0.1).abs() < 0.02, "test {:?}", counts);
    }
}
