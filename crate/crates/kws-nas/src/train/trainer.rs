//! Training loop and top-1 evaluation.

use super::{compute_roc, Result, RunMetrics, TrainConfig, TrainError};
use crate::audio::{make_batches, make_batches_ordered, Batch, Example};
use crate::model::{build_network, count_madds, count_params, Genotype, Network, SearchSpaceConfig};
use crate::tensor::{optim::SgdMomentum, BnMode, Real, Tape};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Anything that scores a batch into logits. The batch carries its labels so
/// test oracles can be expressed as scorers too; models ignore them.
pub trait Scorer {
    fn num_classes(&self) -> usize;
    fn logits(&mut self, batch: &Batch) -> Result<Vec<Real>>;
}

/// A network scoring in eval mode (running statistics, no noise).
pub struct NetworkScorer<'a>(pub &'a mut Network);

impl Scorer for NetworkScorer<'_> {
    fn num_classes(&self) -> usize {
        self.0.space().num_classes
    }

    fn logits(&mut self, batch: &Batch) -> Result<Vec<Real>> {
        let mut tape = Tape::new();
        let x = tape.leaf(&batch.features);
        let out = self.0.forward(&mut tape, x, BnMode::Eval)?;
        Ok(tape.values(out).to_vec())
    }
}

/// Argmax-of-logits accuracy; ties break to the lowest class index.
pub fn evaluate_top1(scorer: &mut dyn Scorer, examples: &[Example]) -> Result<Real> {
    if examples.is_empty() {
        return Err(TrainError::EmptySplit { split: "eval" });
    }
    let k = scorer.num_classes();
    let mut correct = 0usize;
    for batch in make_batches_ordered(examples, 256) {
        let logits = scorer.logits(&batch)?;
        for (n, &label) in batch.labels.iter().enumerate() {
            let row = &logits[n * k..(n + 1) * k];
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            if best == label {
                correct += 1;
            }
        }
    }
    Ok(correct as Real / examples.len() as Real)
}

/// A trained network with its metrics and per-epoch history.
pub struct TrainedModel {
    pub network: Network,
    pub metrics: RunMetrics,
    /// `(epoch, train_loss, valid_top1)` per epoch.
    pub history: Vec<(usize, Real, Real)>,
}

/// Train a genotype from scratch: cross-entropy with momentum SGD and weight
/// decay, stepped learning rate, best checkpoint by validation top-1, final
/// metrics on the test split. Deterministic in (genotype, data, config).
pub fn train_model(
    genotype: &Genotype,
    space: &SearchSpaceConfig,
    train: &[Example],
    valid: &[Example],
    test: &[Example],
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptySplit { split: "train" });
    }
    if valid.is_empty() {
        return Err(TrainError::EmptySplit { split: "valid" });
    }
    if test.is_empty() {
        return Err(TrainError::EmptySplit { split: "test" });
    }
    let mut net = build_network(genotype, space, cfg.seed)?;
    let mut opt = SgdMomentum::new(cfg.lr, cfg.momentum).with_weight_decay(cfg.weight_decay);
    let mut data_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    data_rng.set_stream(1);

    let mut best_top1 = Real::NEG_INFINITY;
    let mut best_state: Vec<(String, Vec<Real>)> = Vec::new();
    let mut last_finite = Real::NAN;
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        opt.lr = cfg.lr_at(epoch);
        let mut epoch_loss = 0.0;
        let batches = make_batches(train, cfg.batch_size, &mut data_rng);
        let n_batches = batches.len();
        for batch in &batches {
            let mut tape = Tape::new();
            let x = tape.leaf(&batch.features);
            let logits = net.forward(&mut tape, x, BnMode::Train)?;
            let loss = tape.cross_entropy(logits, &batch.labels)?;
            let value = tape.values(loss)[0];
            if !value.is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    last_loss: last_finite as f64,
                });
            }
            last_finite = value;
            epoch_loss += value;
            // Exploding weights can surface as non-finite gradients while
            // batch norm still keeps the loss itself finite.
            match tape.backward(loss) {
                Err(crate::tensor::TensorError::NonFiniteGrad { .. }) => {
                    return Err(TrainError::Diverged {
                        epoch,
                        last_loss: last_finite as f64,
                    })
                }
                other => other?,
            }
            net.store_mut().pull_grads(&tape);
            opt.step(net.store_mut())?;
        }

        let valid_top1 = evaluate_top1(&mut NetworkScorer(&mut net), valid)?;
        history.push((epoch, epoch_loss / n_batches as Real, valid_top1));
        if valid_top1 > best_top1 {
            best_top1 = valid_top1;
            best_state = net
                .store()
                .iter()
                .map(|(name, t, _)| (name.to_string(), t.values().to_vec()))
                .collect();
        }
    }

    // Restore the best validation checkpoint before the test pass.
    for (name, values) in &best_state {
        net.store_mut().load_values(name, values);
    }

    let top1 = evaluate_top1(&mut NetworkScorer(&mut net), test)?;
    let t_in = test[0].features.shape()[1];
    let params = count_params(&net);
    let madds = count_madds(&net, t_in);
    let roc = compute_roc(&mut NetworkScorer(&mut net), test, None)?;
    Ok(TrainedModel {
        network: net,
        metrics: RunMetrics {
            top1,
            params,
            madds,
            roc,
        },
        history,
    })
}
