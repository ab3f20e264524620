//! Discrete architectures: candidate operations and genotypes.

use super::{ModelError, Result};
use serde::{Deserialize, Serialize};

pub const ALLOWED_KERNELS: [usize; 4] = [3, 5, 7, 9];

/// One candidate operation for a searchable layer: a TC-ResNet block with a
/// kernel size and optional squeeze-and-excitation, or a skip connection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CandidateSpec {
    Tc { kernel: usize, se: bool },
    Skip,
}

impl CandidateSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            CandidateSpec::Tc { kernel, .. } if !ALLOWED_KERNELS.contains(kernel) => {
                Err(ModelError::BadKernel { kernel: *kernel })
            }
            _ => Ok(()),
        }
    }

    /// Short stable name used in CSV exports: `tc5`, `tc5se`, `skip`.
    pub fn canonical_name(&self) -> String {
        match self {
            CandidateSpec::Tc { kernel, se: false } => format!("tc{kernel}"),
            CandidateSpec::Tc { kernel, se: true } => format!("tc{kernel}se"),
            CandidateSpec::Skip => "skip".to_string(),
        }
    }

    pub fn parse_name(name: &str) -> Result<Self> {
        let bad = || ModelError::GenotypeParse {
            msg: format!("unknown candidate name {name:?}"),
        };
        if name == "skip" {
            return Ok(CandidateSpec::Skip);
        }
        let rest = name.strip_prefix("tc").ok_or_else(bad)?;
        let (digits, se) = match rest.strip_suffix("se") {
            Some(d) => (d, true),
            None => (rest, false),
        };
        let kernel: usize = digits.parse().map_err(|_| bad())?;
        let spec = CandidateSpec::Tc { kernel, se };
        spec.validate()?;
        Ok(spec)
    }

    pub fn is_skip(&self) -> bool {
        matches!(self, CandidateSpec::Skip)
    }
}

/// Serialized form: `{kind, kernel?, se?}` with a stable field order.
#[derive(Serialize, Deserialize)]
struct SpecRepr {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kernel: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    se: Option<bool>,
}

impl From<&CandidateSpec> for SpecRepr {
    fn from(s: &CandidateSpec) -> Self {
        match s {
            CandidateSpec::Tc { kernel, se } => SpecRepr {
                kind: "tc".into(),
                kernel: Some(*kernel),
                se: Some(*se),
            },
            CandidateSpec::Skip => SpecRepr {
                kind: "skip".into(),
                kernel: None,
                se: None,
            },
        }
    }
}

impl TryFrom<SpecRepr> for CandidateSpec {
    type Error = ModelError;
    fn try_from(r: SpecRepr) -> Result<Self> {
        match r.kind.as_str() {
            "tc" => {
                let kernel = r.kernel.ok_or_else(|| ModelError::GenotypeParse {
                    msg: "tc candidate missing kernel".into(),
                })?;
                let spec = CandidateSpec::Tc {
                    kernel,
                    se: r.se.unwrap_or(false),
                };
                spec.validate()?;
                Ok(spec)
            }
            "skip" => {
                if r.kernel.is_some() || r.se.is_some() {
                    return Err(ModelError::GenotypeParse {
                        msg: "skip candidate must not carry kernel or se".into(),
                    });
                }
                Ok(CandidateSpec::Skip)
            }
            other => Err(ModelError::GenotypeParse {
                msg: format!("unknown candidate kind {other:?}"),
            }),
        }
    }
}

/// The discrete architecture: per searchable layer, a non-empty set of
/// selected candidates. Multi-candidate entries come from threshold-style
/// derivation and are built as a sum of the selected blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Genotype {
    pub layers: Vec<Vec<CandidateSpec>>,
}

#[derive(Serialize, Deserialize)]
struct GenotypeFile {
    layers: Vec<Vec<SpecRepr>>,
    config_hash: String,
}

impl Genotype {
    pub fn uniform(spec: CandidateSpec, num_layers: usize) -> Self {
        Genotype {
            layers: vec![vec![spec]; num_layers],
        }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Layers whose selection includes a skip connection.
    pub fn skip_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| l.iter().any(CandidateSpec::is_skip))
            .count()
    }

    pub fn to_json(&self, config_hash: &str) -> String {
        let file = GenotypeFile {
            layers: self
                .layers
                .iter()
                .map(|l| l.iter().map(SpecRepr::from).collect())
                .collect(),
            config_hash: config_hash.to_string(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("genotype serialization");
        s.push('\n');
        s
    }

    /// Parse a genotype file, returning the genotype and its config hash.
    pub fn from_json(text: &str) -> Result<(Self, String)> {
        let file: GenotypeFile =
            serde_json::from_str(text).map_err(|e| ModelError::GenotypeParse {
                msg: e.to_string(),
            })?;
        let mut layers = Vec::with_capacity(file.layers.len());
        for (i, reprs) in file.layers.into_iter().enumerate() {
            if reprs.is_empty() {
                return Err(ModelError::GenotypeMismatch {
                    layer: i,
                    reason: "empty candidate set".into(),
                });
            }
            layers.push(
                reprs
                    .into_iter()
                    .map(CandidateSpec::try_from)
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Ok((Genotype { layers }, file.config_hash))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for spec in [
            CandidateSpec::Tc { kernel: 3, se: false },
            CandidateSpec::Tc { kernel: 9, se: true },
            CandidateSpec::Skip,
        ] {
            assert_eq!(CandidateSpec::parse_name(&spec.canonical_name()).unwrap(), spec);
        }
        assert!(CandidateSpec::parse_name("tc4").is_err());
        assert!(CandidateSpec::parse_name("conv3").is_err());
    }

    #[test]
    fn json_round_trip_preserves_genotype_and_hash() {
        let g = Genotype {
            layers: vec![
                vec![CandidateSpec::Tc { kernel: 5, se: true }],
                vec![CandidateSpec::Skip, CandidateSpec::Tc { kernel: 3, se: false }],
            ],
        };
        let json = g.to_json("abc123");
        let (back, hash) = Genotype::from_json(&json).unwrap();
        assert_eq!(back, g);
        assert_eq!(hash, "abc123");
        // Serialization is byte-stable.
        assert_eq!(back.to_json("abc123"), json);
    }

    #[test]
    fn skip_with_kernel_is_rejected() {
        let text = r#"{"layers": [[{"kind": "skip", "kernel": 3}]], "config_hash": "x"}"#;
        assert!(Genotype::from_json(text).is_err());
    }

    #[test]
    fn skip_count_counts_layers_containing_skip() {
        let g = Genotype {
            layers: vec![
                vec![CandidateSpec::Skip],
                vec![CandidateSpec::Tc { kernel: 3, se: false }, CandidateSpec::Skip],
                vec![CandidateSpec::Tc { kernel: 7, se: true }],
            ],
        };
        assert_eq!(g.skip_count(), 2);
    }
}
