//! Architectural parameters: snapshots and the trajectory CSV.

use super::{Result, SearchError, SearchMethod};
use crate::model::CandidateSpec;
use crate::tensor::Real;

/// A snapshot of the per-layer architectural parameters. Rows can have
/// different widths because skip is dropped from shape-changing layers.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaTable {
    pub method: SearchMethod,
    layers: Vec<LayerAlpha>,
}

#[derive(Debug, Clone, PartialEq)]
struct LayerAlpha {
    candidates: Vec<CandidateSpec>,
    alpha: Vec<Real>,
}

pub(crate) fn softmax_row(alpha: &[Real]) -> Vec<Real> {
    let max = alpha.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
    let exps: Vec<Real> = alpha.iter().map(|a| (a - max).exp()).collect();
    let denom: Real = exps.iter().sum();
    exps.into_iter().map(|e| e / denom).collect()
}

pub(crate) fn sigmoid_scalar(a: Real) -> Real {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

impl AlphaTable {
    pub fn new(
        method: SearchMethod,
        layers: Vec<(Vec<CandidateSpec>, Vec<Real>)>,
    ) -> Self {
        let layers = layers
            .into_iter()
            .map(|(candidates, alpha)| {
                debug_assert_eq!(candidates.len(), alpha.len());
                LayerAlpha { candidates, alpha }
            })
            .collect();
        AlphaTable { method, layers }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn candidates(&self, layer: usize) -> &[CandidateSpec] {
        &self.layers[layer].candidates
    }

    pub fn raw(&self, layer: usize) -> &[Real] {
        &self.layers[layer].alpha
    }

    /// Gate values of a layer under this table's method: softmax over the
    /// row, or elementwise sigmoid for FairDARTS.
    pub fn gates(&self, layer: usize) -> Vec<Real> {
        let row = &self.layers[layer].alpha;
        if self.method.uses_sigmoid_gates() {
            row.iter().map(|&a| sigmoid_scalar(a)).collect()
        } else {
            softmax_row(row)
        }
    }
}

/// One CSV row per (epoch, layer, candidate): raw alpha and its gate value.
pub fn trajectory_to_csv(snapshots: &[AlphaTable]) -> String {
    let mut out = String::from("epoch,layer,candidate,raw_alpha,gate_value\n");
    for (epoch, table) in snapshots.iter().enumerate() {
        for layer in 0..table.num_layers() {
            let gates = table.gates(layer);
            for (c, spec) in table.candidates(layer).iter().enumerate() {
                out.push_str(&format!(
                    "{epoch},{layer},{},{},{}\n",
                    spec.canonical_name(),
                    table.raw(layer)[c],
                    gates[c]
                ));
            }
        }
    }
    out
}

/// Parse a trajectory CSV back into per-epoch snapshots. Gate values are
/// recomputed from the raw alphas under `method`.
pub fn trajectory_from_csv(text: &str, method: SearchMethod) -> Result<Vec<AlphaTable>> {
    let mut rows: Vec<(usize, usize, CandidateSpec, Real)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let fail = |msg: String| SearchError::AlphaCsv {
            msg: format!("line {}: {msg}", i + 1),
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(fail(format!("expected 5 fields, got {}", fields.len())));
        }
        let epoch: usize = fields[0].parse().map_err(|_| fail("bad epoch".into()))?;
        let layer: usize = fields[1].parse().map_err(|_| fail("bad layer".into()))?;
        let spec = CandidateSpec::parse_name(fields[2])
            .map_err(|e| fail(format!("bad candidate: {e}")))?;
        let alpha: Real = fields[3].parse().map_err(|_| fail("bad raw_alpha".into()))?;
        rows.push((epoch, layer, spec, alpha));
    }
    if rows.is_empty() {
        return Err(SearchError::AlphaCsv {
            msg: "no data rows".into(),
        });
    }
    let max_epoch = rows.iter().map(|r| r.0).max().unwrap();
    let mut snapshots = Vec::with_capacity(max_epoch + 1);
    for epoch in 0..=max_epoch {
        let mut layers: Vec<(Vec<CandidateSpec>, Vec<Real>)> = Vec::new();
        for &(e, layer, spec, alpha) in &rows {
            if e != epoch {
                continue;
            }
            if layer >= layers.len() {
                layers.resize_with(layer + 1, || (Vec::new(), Vec::new()));
            }
            layers[layer].0.push(spec);
            layers[layer].1.push(alpha);
        }
        if layers.iter().any(|(c, _)| c.is_empty()) {
            return Err(SearchError::AlphaCsv {
                msg: format!("epoch {epoch} has an empty layer"),
            });
        }
        snapshots.push(AlphaTable::new(method, layers));
    }
    Ok(snapshots)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_table(method: SearchMethod) -> AlphaTable {
        AlphaTable::new(
            method,
            vec![
                (
                    vec![
                        CandidateSpec::Tc { kernel: 3, se: false },
                        CandidateSpec::Tc { kernel: 5, se: true },
                        CandidateSpec::Skip,
                    ],
                    vec![0.25, -1.5, 2.0],
                ),
                (
                    vec![
                        CandidateSpec::Tc { kernel: 7, se: false },
                        CandidateSpec::Tc { kernel: 9, se: true },
                    ],
                    vec![-0.125, 0.5],
                ),
            ],
        )
    }

    #[test]
    fn softmax_gates_sum_to_one() {
        let t = sample_table(SearchMethod::Darts);
        for l in 0..t.num_layers() {
            let s: Real = t.gates(l).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sigmoid_gates_are_independent() {
        let t = sample_table(SearchMethod::FairDarts);
        let g = t.gates(0);
        assert!((g[0] - sigmoid_scalar(0.25)).abs() < 1e-15);
        assert!((g[2] - sigmoid_scalar(2.0)).abs() < 1e-15);
    }

    #[test]
    fn csv_round_trips_exactly() {
        let snaps = vec![sample_table(SearchMethod::Darts), {
            let mut t = sample_table(SearchMethod::Darts);
            t.layers[0].alpha[2] = -0.75;
            t
        }];
        let csv = trajectory_to_csv(&snaps);
        let back = trajectory_from_csv(&csv, SearchMethod::Darts).unwrap();
        assert_eq!(back, snaps);
        // Byte-stable: re-serializing gives the same text.
        assert_eq!(trajectory_to_csv(&back), csv);
    }

    #[test]
    fn csv_rejects_malformed_rows() {
        assert!(matches!(
            trajectory_from_csv("epoch,layer,candidate,raw_alpha,gate_value\n0,0,tc3\n", SearchMethod::Darts),
            Err(SearchError::AlphaCsv { .. })
        ));
    }
}
