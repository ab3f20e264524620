//! Detection ROC: keywords against silence + unknown.
//!
//! Binary framing: the ten keyword classes are positives, silence and
//! unknown are negatives. A clip's score is its maximum keyword posterior
//! under a softmax of the logits. At a threshold, a positive counts as
//! detected only when its score clears the threshold AND the keyword argmax
//! is the true label; a negative counts as a false trigger whenever its
//! score clears the threshold.

use super::{Result, RocPoint, Scorer, TrainError};
use crate::audio::{make_batches_ordered, Example};
use crate::tensor::Real;

pub(crate) struct ClipScore {
    pub score: Real,
    pub keyword_argmax: usize,
    pub label: usize,
}

pub(crate) fn score_clips(scorer: &mut dyn Scorer, examples: &[Example]) -> Result<Vec<ClipScore>> {
    let k = scorer.num_classes();
    let mut out = Vec::with_capacity(examples.len());
    for batch in make_batches_ordered(examples, 256) {
        let logits = scorer.logits(&batch)?;
        for (n, &label) in batch.labels.iter().enumerate() {
            let row = &logits[n * k..(n + 1) * k];
            let max = row.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
            let exps: Vec<Real> = row.iter().map(|v| (v - max).exp()).collect();
            let denom: Real = exps.iter().sum();
            let mut best_kw = 0;
            let mut best_p = Real::NEG_INFINITY;
            for (i, e) in exps.iter().take(10).enumerate() {
                let p = e / denom;
                if p > best_p {
                    best_p = p;
                    best_kw = i;
                }
            }
            out.push(ClipScore {
                score: best_p,
                keyword_argmax: best_kw,
                label,
            });
        }
    }
    Ok(out)
}

/// Sweep detection thresholds. With `thresholds = None` the sweep runs over
/// the split's sorted unique scores (descending, so the false-positive rate
/// is non-decreasing down the rows).
pub fn compute_roc(
    scorer: &mut dyn Scorer,
    examples: &[Example],
    thresholds: Option<&[Real]>,
) -> Result<Vec<RocPoint>> {
    if examples.is_empty() {
        return Err(TrainError::EmptySplit { split: "roc" });
    }
    let scored = score_clips(scorer, examples)?;
    let positives = scored.iter().filter(|c| c.label < 10).count();
    let negatives = scored.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(TrainError::OneSidedSplit {
            positives,
            negatives,
        });
    }

    let thresholds: Vec<Real> = match thresholds {
        Some(t) => {
            let mut t = t.to_vec();
            t.sort_by(|a, b| b.partial_cmp(a).unwrap());
            t
        }
        None => {
            let mut t: Vec<Real> = scored.iter().map(|c| c.score).collect();
            t.sort_by(|a, b| b.partial_cmp(a).unwrap());
            t.dedup();
            t
        }
    };

    let points = thresholds
        .into_iter()
        .map(|threshold| {
            let mut true_pos = 0usize;
            let mut false_pos = 0usize;
            for c in &scored {
                let triggered = c.score >= threshold;
                if c.label < 10 {
                    if triggered && c.keyword_argmax == c.label {
                        true_pos += 1;
                    }
                } else if triggered {
                    false_pos += 1;
                }
            }
            RocPoint {
                threshold,
                fpr: false_pos as Real / negatives as Real,
                fnr: (positives - true_pos) as Real / positives as Real,
            }
        })
        .collect();
    Ok(points)
}
