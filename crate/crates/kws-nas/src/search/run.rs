//! The bi-level optimization loop: interleaved architecture (Adam on alpha,
//! validation loss) and weight (momentum SGD, training loss) half-steps,
//! each on the current batch.

use super::alpha::AlphaTable;
use super::supernet::{build_supernet, Supernet};
use super::{Result, SearchConfig, SearchError, SearchMethod};
use crate::audio::{make_batches, Batch, Example};
use crate::model::SearchSpaceConfig;
use crate::tensor::{
    optim::{Adam, SgdMomentum},
    BnMode, Real, Tape,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Losses and gate diagnostics of one bi-level step.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub arch_loss: Real,
    pub weight_loss: Real,
    /// Per-layer sums of the gate values after the step (1 for softmax
    /// methods up to float noise).
    pub gate_sums: Vec<Real>,
}

pub struct SearchState {
    pub supernet: Supernet,
    w_opt: SgdMomentum,
    a_opt: Adam,
    cfg: SearchConfig,
    noise_rng: ChaCha8Rng,
}

impl SearchState {
    pub fn new(space: &SearchSpaceConfig, cfg: &SearchConfig) -> Result<Self> {
        let supernet = build_supernet(space, cfg)?;
        let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        noise_rng.set_stream(2);
        Ok(SearchState {
            supernet,
            w_opt: SgdMomentum::new(cfg.w_lr, cfg.w_momentum),
            a_opt: Adam::new(cfg.alpha_lr),
            cfg: cfg.clone(),
            noise_rng,
        })
    }

    /// Architecture half-step: validation cross-entropy (plus the weighted
    /// zero-one loss for FairDARTS), Adam on alpha only.
    pub fn arch_half_step(&mut self, valid: &Batch) -> Result<Real> {
        let mut tape = Tape::new();
        let x = tape.leaf(&valid.features);
        let logits = self
            .supernet
            .forward(&mut tape, x, BnMode::Train, &mut self.noise_rng)?;
        let ce = tape.cross_entropy(logits, &valid.labels)?;
        let loss = if self.supernet.method() == SearchMethod::FairDarts {
            let l01 = self.supernet.l01_loss(&mut tape)?;
            let weighted = tape.scale(l01, self.cfg.w01_weight);
            tape.add(ce, weighted)?
        } else {
            ce
        };
        let value = tape.values(loss)[0];
        tape.backward(loss)?;
        self.supernet.alphas.pull_grads(&tape);
        self.a_opt.step(&mut self.supernet.alphas)?;
        Ok(value)
    }

    /// Weight half-step: training cross-entropy, momentum SGD on the network
    /// weights only.
    pub fn weight_half_step(&mut self, train: &Batch) -> Result<Real> {
        let mut tape = Tape::new();
        let x = tape.leaf(&train.features);
        let logits = self
            .supernet
            .forward(&mut tape, x, BnMode::Train, &mut self.noise_rng)?;
        let loss = tape.cross_entropy(logits, &train.labels)?;
        let value = tape.values(loss)[0];
        tape.backward(loss)?;
        self.supernet.weights.pull_grads(&tape);
        self.w_opt.step(&mut self.supernet.weights)?;
        Ok(value)
    }

    pub fn step(&mut self, train: &Batch, valid: &Batch) -> Result<StepReport> {
        let (arch_loss, weight_loss) = if self.cfg.arch_step_first {
            let a = self.arch_half_step(valid)?;
            let w = self.weight_half_step(train)?;
            (a, w)
        } else {
            let w = self.weight_half_step(train)?;
            let a = self.arch_half_step(valid)?;
            (a, w)
        };
        let table = self.supernet.alpha_table();
        let gate_sums = (0..table.num_layers())
            .map(|l| table.gates(l).iter().sum())
            .collect();
        Ok(StepReport {
            arch_loss,
            weight_loss,
            gate_sums,
        })
    }
}

/// One interleaved bi-level step on explicit batches.
pub fn search_step(state: &mut SearchState, train: &Batch, valid: &Batch) -> Result<StepReport> {
    state.step(train, valid)
}

/// Everything a finished search leaves behind.
pub struct SearchOutcome {
    /// Alpha snapshot per epoch, including the initial state
    /// (`epochs + 1` entries).
    pub trajectory: Vec<AlphaTable>,
    pub reports: Vec<StepReport>,
    pub supernet: Supernet,
    /// Supernet top-1 on the validation split after the last epoch
    /// (eval mode, noise off).
    pub valid_top1: Real,
}

/// Per-epoch progress line.
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: Real,
    pub valid_loss: Real,
    pub gate_min: Real,
    pub gate_mean: Real,
    pub gate_max: Real,
    pub skip_gate_mean: Option<Real>,
}

/// Run the full search: `epochs` passes over the training split, pairing
/// each training batch with a validation batch (cycled when the validation
/// split is smaller). Deterministic for a fixed config and seed.
pub fn run_search(
    space: &SearchSpaceConfig,
    cfg: &SearchConfig,
    train: &[Example],
    valid: &[Example],
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<SearchOutcome> {
    if train.is_empty() {
        return Err(SearchError::EmptySplit { split: "train" });
    }
    if valid.is_empty() {
        return Err(SearchError::EmptySplit { split: "valid" });
    }
    let mut state = SearchState::new(space, cfg)?;
    let mut data_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    data_rng.set_stream(1);

    let mut trajectory = vec![state.supernet.alpha_table()];
    let mut reports = Vec::new();
    for epoch in 0..cfg.epochs {
        let train_batches = make_batches(train, cfg.batch_size, &mut data_rng);
        let valid_batches = make_batches(valid, cfg.batch_size, &mut data_rng);
        let mut epoch_train = 0.0;
        let mut epoch_valid = 0.0;
        for (i, tb) in train_batches.iter().enumerate() {
            let vb = &valid_batches[i % valid_batches.len()];
            let report = state.step(tb, vb)?;
            epoch_train += report.weight_loss;
            epoch_valid += report.arch_loss;
            reports.push(report);
        }
        let table = state.supernet.alpha_table();
        trajectory.push(table.clone());

        let mut gates = Vec::new();
        let mut skip_gates = Vec::new();
        for l in 0..table.num_layers() {
            let g = table.gates(l);
            for (spec, &gv) in table.candidates(l).iter().zip(&g) {
                gates.push(gv);
                if spec.is_skip() {
                    skip_gates.push(gv);
                }
            }
        }
        let n = train_batches.len() as Real;
        on_epoch(&EpochLog {
            epoch,
            train_loss: epoch_train / n,
            valid_loss: epoch_valid / n,
            gate_min: gates.iter().cloned().fold(Real::INFINITY, Real::min),
            gate_mean: gates.iter().sum::<Real>() / gates.len() as Real,
            gate_max: gates.iter().cloned().fold(Real::NEG_INFINITY, Real::max),
            skip_gate_mean: if skip_gates.is_empty() {
                None
            } else {
                Some(skip_gates.iter().sum::<Real>() / skip_gates.len() as Real)
            },
        });
    }

    let valid_top1 = supernet_top1(&mut state.supernet, valid, cfg.batch_size)?;
    Ok(SearchOutcome {
        trajectory,
        reports,
        supernet: state.supernet,
        valid_top1,
    })
}

/// Supernet accuracy in eval mode with noise disabled.
fn supernet_top1(supernet: &mut Supernet, examples: &[Example], batch_size: usize) -> Result<Real> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut order_rng = ChaCha8Rng::seed_from_u64(0);
    let batches = make_batches(examples, batch_size, &mut order_rng);
    let mut correct = 0usize;
    let mut total = 0usize;
    for b in &batches {
        let mut tape = Tape::new();
        let x = tape.leaf(&b.features);
        let logits = supernet.forward(&mut tape, x, BnMode::Eval, &mut rng)?;
        let vals = tape.values(logits);
        let k = tape.shape(logits)[1];
        for (n, &label) in b.labels.iter().enumerate() {
            let row = &vals[n * k..(n + 1) * k];
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            if best == label {
                correct += 1;
            }
            total += 1;
        }
    }
    Ok(correct as Real / total as Real)
}
