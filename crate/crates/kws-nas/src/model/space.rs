//! The searchable space: layer schedule and per-layer candidate sets.

use super::genotype::{CandidateSpec, ALLOWED_KERNELS};
use super::{Genotype, ModelError, Result};
use crate::audio::stable_hash;
use serde::{Deserialize, Serialize};

/// Layer schedule and candidate vocabulary of the supernet.
///
/// The default is a nine-layer schedule following the TC-ResNet channel
/// doubling pattern under a 1.5 multiplier, with the full candidate set of
/// four kernel sizes, each with and without squeeze-and-excitation, plus a
/// skip connection.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSpaceConfig {
    pub num_layers: usize,
    /// Output channels per layer (multiplier already applied).
    pub channels: Vec<usize>,
    /// Temporal stride per layer, 1 or 2.
    pub strides: Vec<usize>,
    pub in_channels: usize,
    pub stem_channels: usize,
    pub num_classes: usize,
    /// Candidate names (`tc3`, `tc5se`, `skip`, ...); per layer, skip is
    /// dropped automatically where the shape changes.
    pub candidates: Vec<String>,
    pub se_reduction: usize,
}

impl Default for SearchSpaceConfig {
    fn default() -> Self {
        SearchSpaceConfig {
            num_layers: 9,
            channels: vec![36, 36, 54, 54, 72, 72, 108, 108, 108],
            strides: vec![2, 1, 2, 1, 2, 1, 2, 1, 1],
            in_channels: 40,
            stem_channels: 24,
            num_classes: 12,
            candidates: default_candidate_names(),
            se_reduction: 4,
        }
    }
}

fn default_candidate_names() -> Vec<String> {
    let mut names = Vec::new();
    for k in ALLOWED_KERNELS {
        names.push(format!("tc{k}"));
        names.push(format!("tc{k}se"));
    }
    names.push("skip".to_string());
    names
}

impl SearchSpaceConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Err(ModelError::InvalidConfig { reason });
        if self.num_layers == 0 {
            return fail("num_layers must be positive".into());
        }
        if self.channels.len() != self.num_layers {
            return fail(format!(
                "channels has {} entries for {} layers",
                self.channels.len(),
                self.num_layers
            ));
        }
        if self.strides.len() != self.num_layers {
            return fail(format!(
                "strides has {} entries for {} layers",
                self.strides.len(),
                self.num_layers
            ));
        }
        if self.strides.iter().any(|s| !matches!(s, 1 | 2)) {
            return fail("strides must be 1 or 2".into());
        }
        if self.channels.contains(&0)
            || self.in_channels == 0
            || self.stem_channels == 0
            || self.num_classes == 0
            || self.se_reduction == 0
        {
            return fail("channel counts, class count and se_reduction must be positive".into());
        }
        if self.candidates.is_empty() {
            return fail("candidate set is empty".into());
        }
        for name in &self.candidates {
            CandidateSpec::parse_name(name)?;
        }
        Ok(())
    }

    pub fn candidate_specs(&self) -> Vec<CandidateSpec> {
        self.candidates
            .iter()
            .map(|n| CandidateSpec::parse_name(n).expect("validated candidate name"))
            .collect()
    }

    /// Input channels of searchable layer `l`.
    pub fn layer_in_channels(&self, l: usize) -> usize {
        if l == 0 {
            self.stem_channels
        } else {
            self.channels[l - 1]
        }
    }

    /// True when a skip connection preserves shape at layer `l`.
    pub fn skip_allowed(&self, l: usize) -> bool {
        self.strides[l] == 1 && self.layer_in_channels(l) == self.channels[l]
    }

    /// The candidate set of layer `l`: the configured vocabulary with skip
    /// removed where the layer changes shape.
    pub fn layer_candidates(&self, l: usize) -> Vec<CandidateSpec> {
        self.candidate_specs()
            .into_iter()
            .filter(|c| !c.is_skip() || self.skip_allowed(l))
            .collect()
    }

    /// Check a genotype against this space.
    pub fn validate_genotype(&self, genotype: &Genotype) -> Result<()> {
        if genotype.num_layers() != self.num_layers {
            return Err(ModelError::GenotypeMismatch {
                layer: 0,
                reason: format!(
                    "genotype has {} layers, space has {}",
                    genotype.num_layers(),
                    self.num_layers
                ),
            });
        }
        for (l, entry) in genotype.layers.iter().enumerate() {
            if entry.is_empty() {
                return Err(ModelError::GenotypeMismatch {
                    layer: l,
                    reason: "empty candidate set".into(),
                });
            }
            for spec in entry {
                spec.validate()?;
                if spec.is_skip() && !self.skip_allowed(l) {
                    return Err(ModelError::SkipShapeChange { layer: l });
                }
            }
        }
        Ok(())
    }

    /// Stable hash of the space, recorded in genotype files so a genotype can
    /// be matched to the schedule it was searched under.
    pub fn config_hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("space serialization");
        format!("{:016x}", stable_hash(canon.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_space_validates() {
        let s = SearchSpaceConfig::default();
        s.validate().unwrap();
        assert_eq!(s.candidates.len(), 9);
    }

    #[test]
    fn skip_is_dropped_on_shape_changing_layers() {
        let s = SearchSpaceConfig::default();
        // Strides [2,1,2,1,2,1,2,1,1] with channel bumps at 2, 4, 6.
        assert!(!s.skip_allowed(0), "stride-2 layer");
        assert!(s.skip_allowed(1));
        assert!(!s.skip_allowed(2));
        assert!(s.skip_allowed(8));
        assert_eq!(s.layer_candidates(0).len(), 8);
        assert_eq!(s.layer_candidates(1).len(), 9);
    }

    #[test]
    fn genotype_with_skip_on_reduction_layer_is_rejected() {
        let s = SearchSpaceConfig::default();
        let mut g = Genotype::uniform(CandidateSpec::Tc { kernel: 3, se: false }, 9);
        g.layers[0] = vec![CandidateSpec::Skip];
        assert!(matches!(
            s.validate_genotype(&g),
            Err(ModelError::SkipShapeChange { layer: 0 })
        ));
    }

    #[test]
    fn config_hash_tracks_content() {
        let a = SearchSpaceConfig::default();
        let mut b = a.clone();
        assert_eq!(a.config_hash(), b.config_hash());
        b.channels[3] = 55;
        assert_ne!(a.config_hash(), b.config_hash());
    }

    #[test]
    fn mismatched_schedule_lengths_are_rejected() {
        let mut s = SearchSpaceConfig::default();
        s.channels.pop();
        assert!(s.validate().is_err());
    }
}
