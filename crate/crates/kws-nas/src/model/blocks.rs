//! Differentiable building blocks and network assembly.

use super::{CandidateSpec, Genotype, ModelError, Result, SearchSpaceConfig};
use crate::tensor::{BnMode, ParamId, ParamStore, Real, Tape, Tensor, TensorId};
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub(crate) const BN_MOMENTUM: Real = 0.1;
pub(crate) const BN_EPS: Real = 1e-5;

/// Convolution (no bias) followed by batch norm.
pub(crate) struct ConvBn {
    pub(crate) w: ParamId,
    gamma: ParamId,
    beta: ParamId,
    running: ParamId,
    stride: usize,
}

impl ConvBn {
    pub(crate) fn new(
        store: &mut ParamStore,
        prefix: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let w = store.add_trainable(
            format!("{prefix}.conv.w"),
            Tensor::fan_in_init(&[c_out, c_in, k], c_in * k, rng),
        );
        let gamma = store.add_trainable(format!("{prefix}.bn.gamma"), Tensor::filled(&[c_out], 1.0));
        let beta = store.add_trainable(format!("{prefix}.bn.beta"), Tensor::zeros(&[c_out]));
        let mut running = Tensor::zeros(&[2, c_out]);
        running.values_mut()[c_out..].fill(1.0);
        let running = store.add_buffer(format!("{prefix}.bn.running"), running);
        ConvBn {
            w,
            gamma,
            beta,
            running,
            stride,
        }
    }

    pub(crate) fn forward(
        &self,
        store: &mut ParamStore,
        tape: &mut Tape,
        x: TensorId,
        mode: BnMode,
    ) -> Result<TensorId> {
        let w = store.bind(tape, self.w);
        let y = tape.conv1d(x, w, self.stride)?;
        let gamma = store.bind(tape, self.gamma);
        let beta = store.bind(tape, self.beta);
        let running = store.buffer_mut(self.running);
        Ok(tape.batchnorm1d(y, gamma, beta, running, mode, BN_MOMENTUM, BN_EPS)?)
    }
}

/// Squeeze-and-excitation: pooled two-linear bottleneck gating the channels.
pub(crate) struct SeModule {
    pub(crate) w1: ParamId,
    pub(crate) b1: ParamId,
    pub(crate) w2: ParamId,
    pub(crate) b2: ParamId,
}

impl SeModule {
    pub(crate) fn new(
        store: &mut ParamStore,
        prefix: &str,
        c: usize,
        reduction: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mid = (c / reduction).max(1);
        let w1 = store.add_trainable(
            format!("{prefix}.se.w1"),
            Tensor::fan_in_init(&[mid, c], c, rng),
        );
        let b1 = store.add_trainable(
            format!("{prefix}.se.b1"),
            Tensor::fan_in_init(&[mid], c, rng),
        );
        let w2 = store.add_trainable(
            format!("{prefix}.se.w2"),
            Tensor::fan_in_init(&[c, mid], mid, rng),
        );
        let b2 = store.add_trainable(
            format!("{prefix}.se.b2"),
            Tensor::fan_in_init(&[c], mid, rng),
        );
        SeModule { w1, b1, w2, b2 }
    }

    pub(crate) fn forward(
        &self,
        store: &mut ParamStore,
        tape: &mut Tape,
        x: TensorId,
    ) -> Result<TensorId> {
        let pooled = tape.global_avg_pool(x)?;
        let w1 = store.bind(tape, self.w1);
        let b1 = store.bind(tape, self.b1);
        let h = tape.linear(pooled, w1, b1)?;
        let h = tape.relu(h);
        let w2 = store.bind(tape, self.w2);
        let b2 = store.bind(tape, self.b2);
        let g = tape.linear(h, w2, b2)?;
        let gate = tape.sigmoid(g);
        Ok(tape.broadcast_mul(x, gate)?)
    }
}

/// The searchable TC-ResNet block: two temporal convolutions with batch norm
/// and ReLU, an optional SE module on the main path, and a residual that is
/// an identity when shape is preserved or a 1x1 strided projection otherwise.
pub struct TcBlock {
    pub(crate) conv1: ConvBn,
    pub(crate) conv2: ConvBn,
    pub(crate) downsample: Option<ConvBn>,
    pub(crate) se: Option<SeModule>,
}

impl TcBlock {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        store: &mut ParamStore,
        prefix: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        se: bool,
        se_reduction: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let conv1 = ConvBn::new(store, &format!("{prefix}.c1"), c_in, c_out, kernel, stride, rng);
        let conv2 = ConvBn::new(store, &format!("{prefix}.c2"), c_out, c_out, kernel, 1, rng);
        let downsample = (stride != 1 || c_in != c_out)
            .then(|| ConvBn::new(store, &format!("{prefix}.ds"), c_in, c_out, 1, stride, rng));
        let se = se.then(|| SeModule::new(store, prefix, c_out, se_reduction, rng));
        TcBlock {
            conv1,
            conv2,
            downsample,
            se,
        }
    }

    pub(crate) fn forward(
        &self,
        store: &mut ParamStore,
        tape: &mut Tape,
        x: TensorId,
        mode: BnMode,
    ) -> Result<TensorId> {
        let h = self.conv1.forward(store, tape, x, mode)?;
        let h = tape.relu(h);
        let mut main = self.conv2.forward(store, tape, h, mode)?;
        if let Some(se) = &self.se {
            main = se.forward(store, tape, main)?;
        }
        let residual = match &self.downsample {
            Some(ds) => ds.forward(store, tape, x, mode)?,
            None => x,
        };
        let sum = tape.add(main, residual)?;
        Ok(tape.relu(sum))
    }
}

/// A concrete candidate instance inside a built network or supernet layer.
pub enum CandidateOp {
    Tc(TcBlock),
    Skip,
}

impl CandidateOp {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn build(
        store: &mut ParamStore,
        prefix: &str,
        spec: &CandidateSpec,
        c_in: usize,
        c_out: usize,
        stride: usize,
        se_reduction: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        match spec {
            CandidateSpec::Tc { kernel, se } => CandidateOp::Tc(TcBlock::new(
                store,
                prefix,
                c_in,
                c_out,
                *kernel,
                stride,
                *se,
                se_reduction,
                rng,
            )),
            CandidateSpec::Skip => CandidateOp::Skip,
        }
    }

    pub(crate) fn forward(
        &self,
        store: &mut ParamStore,
        tape: &mut Tape,
        x: TensorId,
        mode: BnMode,
    ) -> Result<TensorId> {
        match self {
            CandidateOp::Tc(block) => block.forward(store, tape, x, mode),
            CandidateOp::Skip => Ok(x),
        }
    }
}

/// A concrete network: stem, per-layer selected candidates (summed when an
/// entry holds several), and the pooled linear tail.
pub struct Network {
    pub(crate) store: ParamStore,
    pub(crate) stem: ConvBn,
    pub(crate) layers: Vec<Vec<CandidateOp>>,
    pub(crate) tail_w: ParamId,
    pub(crate) tail_b: ParamId,
    genotype: Genotype,
    space: SearchSpaceConfig,
}

/// Instantiate a genotype under a space. Same genotype, space and seed give
/// bitwise-identical initial weights.
pub fn build_network(
    genotype: &Genotype,
    space: &SearchSpaceConfig,
    seed: u64,
) -> Result<Network> {
    space.validate()?;
    space.validate_genotype(genotype)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let stem = ConvBn::new(
        &mut store,
        "stem",
        space.in_channels,
        space.stem_channels,
        3,
        1,
        &mut rng,
    );
    let mut layers = Vec::with_capacity(space.num_layers);
    for (l, entry) in genotype.layers.iter().enumerate() {
        let c_in = space.layer_in_channels(l);
        let c_out = space.channels[l];
        let stride = space.strides[l];
        let ops = entry
            .iter()
            .map(|spec| {
                CandidateOp::build(
                    &mut store,
                    &format!("l{l}.{}", spec.canonical_name()),
                    spec,
                    c_in,
                    c_out,
                    stride,
                    space.se_reduction,
                    &mut rng,
                )
            })
            .collect();
        layers.push(ops);
    }
    let last_c = space.channels[space.num_layers - 1];
    let tail_w = store.add_trainable(
        "tail.w",
        Tensor::fan_in_init(&[space.num_classes, last_c], last_c, &mut rng),
    );
    let tail_b = store.add_trainable(
        "tail.b",
        Tensor::fan_in_init(&[space.num_classes], last_c, &mut rng),
    );
    Ok(Network {
        store,
        stem,
        layers,
        tail_w,
        tail_b,
        genotype: genotype.clone(),
        space: space.clone(),
    })
}

impl Network {
    /// Logits for a `[N, C, T]` (or `[C, T]`) feature batch.
    pub fn forward(&mut self, tape: &mut Tape, x: TensorId, mode: BnMode) -> Result<TensorId> {
        self.store.begin_pass();
        let h = self.stem.forward(&mut self.store, tape, x, mode)?;
        let mut cur = tape.relu(h);
        for ops in &self.layers {
            let mut acc: Option<TensorId> = None;
            for op in ops {
                let out = op.forward(&mut self.store, tape, cur, mode)?;
                acc = Some(match acc {
                    None => out,
                    Some(a) => tape.add(a, out)?,
                });
            }
            cur = acc.ok_or(ModelError::GenotypeMismatch {
                layer: 0,
                reason: "empty layer".into(),
            })?;
        }
        let pooled = tape.global_avg_pool(cur)?;
        let w = self.store.bind(tape, self.tail_w);
        let b = self.store.bind(tape, self.tail_b);
        Ok(tape.linear(pooled, w, b)?)
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn genotype(&self) -> &Genotype {
        &self.genotype
    }

    pub fn space(&self) -> &SearchSpaceConfig {
        &self.space
    }
}

/// Round half-up channel scaling.
pub(crate) fn scaled(base: usize, multiplier: f64) -> usize {
    ((base as f64) * multiplier).round() as usize
}

/// The fixed six-block reference schedule (base channels {24, 24, 32, 32,
/// 48, 48}, stride 2 at the first block and each channel increase).
pub fn tc_resnet14_space(multiplier: f64) -> SearchSpaceConfig {
    let base = [24, 24, 32, 32, 48, 48];
    SearchSpaceConfig {
        num_layers: 6,
        channels: base.iter().map(|&c| scaled(c, multiplier)).collect(),
        strides: vec![2, 1, 2, 1, 2, 1],
        stem_channels: scaled(16, multiplier),
        ..SearchSpaceConfig::default()
    }
}

/// Uniform-kernel genotype over the six-block schedule.
pub fn tc_resnet14_genotype(kernel: usize, se: bool) -> Genotype {
    Genotype::uniform(CandidateSpec::Tc { kernel, se }, 6)
}

/// The TC-ResNet-14 baseline: kernel 9, no SE.
pub fn build_tc_resnet14(multiplier: f64, seed: u64) -> Result<Network> {
    build_network(
        &tc_resnet14_genotype(9, false),
        &tc_resnet14_space(multiplier),
        seed,
    )
}
