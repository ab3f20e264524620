//! The over-parameterized network: every candidate at every searchable
//! layer, mixed by gated summation.

use super::alpha::AlphaTable;
use super::{Result, SearchConfig, SearchError, SearchMethod};
use crate::model::{CandidateOp, ConvBn, SearchSpaceConfig};
use crate::tensor::{BnMode, ParamId, ParamStore, Real, Tape, Tensor, TensorId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Gaussian by Box-Muller from the uniform stream.
fn sample_gaussian(rng: &mut ChaCha8Rng, mean: Real, std: Real) -> Real {
    let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
    let u2: f64 = rng.gen();
    let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
    mean + std * z as Real
}

/// Skip-connection forward with additive Gaussian noise: `x + N(mean, std)`
/// sampled i.i.d. per element. The noise is a constant on the tape, so the
/// gradient passes through to `x` unchanged. `std == 0` returns `x` itself.
pub fn noisy_skip_forward(
    tape: &mut Tape,
    x: TensorId,
    mean: Real,
    std: Real,
    rng: &mut ChaCha8Rng,
) -> Result<TensorId> {
    if std < 0.0 {
        return Err(SearchError::NegativeNoiseStd { beta: std as f64 });
    }
    if std == 0.0 && mean == 0.0 {
        return Ok(x);
    }
    let n = tape.values(x).len();
    let noise: Vec<Real> = (0..n).map(|_| sample_gaussian(rng, mean, std)).collect();
    let noise = tape.constant(tape.shape(x).to_vec(), noise)?;
    Ok(tape.add(x, noise)?)
}

struct SupernetLayer {
    candidates: Vec<(crate::model::CandidateSpec, CandidateOp)>,
    alpha: ParamId,
}

/// Shared stem and tail, one instantiated block per candidate per layer, and
/// one alpha row per layer living in its own parameter store so the two
/// optimizers cannot touch each other's state.
pub struct Supernet {
    pub(crate) weights: ParamStore,
    pub(crate) alphas: ParamStore,
    stem: ConvBn,
    layers: Vec<SupernetLayer>,
    tail_w: ParamId,
    tail_b: ParamId,
    space: SearchSpaceConfig,
    method: SearchMethod,
    noise_mean: Real,
    noise_std: Real,
}

/// Instantiate the supernet. Alphas start at exactly zero: uniform softmax
/// mixing, or 0.5 sigmoid gates.
pub fn build_supernet(space: &SearchSpaceConfig, search: &SearchConfig) -> Result<Supernet> {
    space.validate()?;
    search.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(search.seed);
    let mut weights = ParamStore::new();
    let mut alphas = ParamStore::new();
    let stem = ConvBn::new(
        &mut weights,
        "stem",
        space.in_channels,
        space.stem_channels,
        3,
        1,
        &mut rng,
    );
    let mut layers = Vec::with_capacity(space.num_layers);
    for l in 0..space.num_layers {
        let specs = space.layer_candidates(l);
        if specs.is_empty() {
            return Err(SearchError::IncompatibleCandidate {
                layer: l,
                candidate: "skip".into(),
                reason: "no shape-compatible candidates remain at this layer".into(),
            });
        }
        let c_in = space.layer_in_channels(l);
        let c_out = space.channels[l];
        let candidates = specs
            .into_iter()
            .map(|spec| {
                let op = CandidateOp::build(
                    &mut weights,
                    &format!("l{l}.{}", spec.canonical_name()),
                    &spec,
                    c_in,
                    c_out,
                    space.strides[l],
                    space.se_reduction,
                    &mut rng,
                );
                (spec, op)
            })
            .collect::<Vec<_>>();
        let alpha = alphas.add_trainable(
            format!("alpha.l{l}"),
            Tensor::zeros(&[candidates.len()]),
        );
        layers.push(SupernetLayer { candidates, alpha });
    }
    let last_c = space.channels[space.num_layers - 1];
    let tail_w = weights.add_trainable(
        "tail.w",
        Tensor::fan_in_init(&[space.num_classes, last_c], last_c, &mut rng),
    );
    let tail_b = weights.add_trainable(
        "tail.b",
        Tensor::fan_in_init(&[space.num_classes], last_c, &mut rng),
    );
    Ok(Supernet {
        weights,
        alphas,
        stem,
        layers,
        tail_w,
        tail_b,
        space: space.clone(),
        method: search.method,
        noise_mean: search.noise_mean,
        noise_std: search.noise_std,
    })
}

impl Supernet {
    /// Mixed forward: each layer's output is the gate-weighted sum of every
    /// candidate's output. With NoisyDARTS in training mode, skip candidates
    /// emit `x + noise`; in eval mode and at derivation the noise is off.
    pub fn forward(
        &mut self,
        tape: &mut Tape,
        x: TensorId,
        mode: BnMode,
        noise_rng: &mut ChaCha8Rng,
    ) -> Result<TensorId> {
        self.weights.begin_pass();
        self.alphas.begin_pass();
        let inject_noise = self.method == SearchMethod::NoisyDarts && mode == BnMode::Train;
        let h = self.stem.forward(&mut self.weights, tape, x, mode)?;
        let mut cur = tape.relu(h);
        for layer in &self.layers {
            let alpha = self.alphas.bind(tape, layer.alpha);
            let gates = if self.method.uses_sigmoid_gates() {
                tape.sigmoid(alpha)
            } else {
                tape.softmax(alpha, 0)?
            };
            let mut acc: Option<TensorId> = None;
            for (i, (spec, op)) in layer.candidates.iter().enumerate() {
                let out = if spec.is_skip() && inject_noise {
                    noisy_skip_forward(tape, cur, self.noise_mean, self.noise_std, noise_rng)?
                } else {
                    op.forward(&mut self.weights, tape, cur, mode)?
                };
                let weighted = tape.gate_scale(out, gates, i)?;
                acc = Some(match acc {
                    None => weighted,
                    Some(a) => tape.add(a, weighted)?,
                });
            }
            cur = acc.expect("layer has at least one candidate");
        }
        let pooled = tape.global_avg_pool(cur)?;
        let w = self.weights.bind(tape, self.tail_w);
        let b = self.weights.bind(tape, self.tail_b);
        Ok(tape.linear(pooled, w, b)?)
    }

    /// FairDARTS zero-one loss over all alpha rows:
    /// `-(1/N) * sum((sigmoid(alpha) - 0.5)^2)` with N the total entry count.
    pub fn l01_loss(&mut self, tape: &mut Tape) -> Result<TensorId> {
        let total: usize = self.layers.iter().map(|l| l.candidates.len()).sum();
        let mut acc: Option<TensorId> = None;
        for layer in &self.layers {
            let alpha = self.alphas.bind(tape, layer.alpha);
            let s = zero_one_sum(tape, alpha)?;
            acc = Some(match acc {
                None => s,
                Some(a) => tape.add(a, s)?,
            });
        }
        let sum = acc.expect("supernet has layers");
        Ok(tape.scale(sum, -1.0 / total as Real))
    }

    pub fn alpha_table(&self) -> AlphaTable {
        AlphaTable::new(
            self.method,
            self.layers
                .iter()
                .map(|l| {
                    (
                        l.candidates.iter().map(|(s, _)| *s).collect(),
                        self.alphas.tensor(l.alpha).values().to_vec(),
                    )
                })
                .collect(),
        )
    }

    pub fn method(&self) -> SearchMethod {
        self.method
    }

    pub fn space(&self) -> &SearchSpaceConfig {
        &self.space
    }

    pub fn weights_fingerprint(&self) -> u64 {
        self.weights.fingerprint()
    }

    pub fn alphas_fingerprint(&self) -> u64 {
        self.alphas.fingerprint()
    }

    pub fn weights_mut(&mut self) -> &mut ParamStore {
        &mut self.weights
    }

    pub fn alphas_mut(&mut self) -> &mut ParamStore {
        &mut self.alphas
    }
}

/// `sum((sigmoid(alpha) - 0.5)^2)` for one row, on the tape.
fn zero_one_sum(tape: &mut Tape, alpha: TensorId) -> Result<TensorId> {
    let sig = tape.sigmoid(alpha);
    let centered = tape.add_scalar(sig, -0.5);
    let sq = tape.mul(centered, centered)?;
    Ok(tape.sum(sq))
}

/// Per-row FairDARTS auxiliary loss: `-(1/N) * sum((sigmoid(a) - 0.5)^2)`.
/// Zero at alpha = 0 (its maximum) and tending to -0.25 as |alpha| grows.
pub fn fairdarts_aux_loss(tape: &mut Tape, alpha_row: TensorId) -> Result<TensorId> {
    let n = tape.values(alpha_row).len();
    let s = zero_one_sum(tape, alpha_row)?;
    Ok(tape.scale(s, -1.0 / n as Real))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_space() -> SearchSpaceConfig {
        SearchSpaceConfig {
            num_layers: 2,
            channels: vec![8, 8],
            strides: vec![2, 1],
            in_channels: 4,
            stem_channels: 8,
            candidates: vec!["tc3".into(), "tc5".into(), "skip".into()],
            se_reduction: 4,
            ..SearchSpaceConfig::default()
        }
    }

    fn cfg(method: SearchMethod) -> SearchConfig {
        SearchConfig {
            method,
            seed: 9,
            ..SearchConfig::default()
        }
    }

    #[test]
    fn alpha_table_shape_follows_per_layer_candidates() {
        let net = build_supernet(&tiny_space(), &cfg(SearchMethod::Darts)).unwrap();
        let t = net.alpha_table();
        assert_eq!(t.num_layers(), 2);
        assert_eq!(t.candidates(0).len(), 2, "skip dropped on stride-2 layer");
        assert_eq!(t.candidates(1).len(), 3);
    }

    #[test]
    fn default_nine_by_nine_table() {
        let space = SearchSpaceConfig::default();
        let net = build_supernet(&space, &cfg(SearchMethod::Darts)).unwrap();
        let t = net.alpha_table();
        assert_eq!(t.num_layers(), 9);
        // Layers with stride 1 and equal channels keep all nine candidates.
        assert_eq!(t.candidates(1).len(), 9);
        assert_eq!(t.raw(1), &[0.0; 9]);
    }

    #[test]
    fn zero_alpha_darts_mixes_uniformly() {
        let net = build_supernet(&tiny_space(), &cfg(SearchMethod::Darts)).unwrap();
        let t = net.alpha_table();
        for g in t.gates(1) {
            assert!((g - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_alpha_fairdarts_gates_at_half() {
        let net = build_supernet(&tiny_space(), &cfg(SearchMethod::FairDarts)).unwrap();
        let t = net.alpha_table();
        for g in t.gates(0) {
            assert!((g - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn layer_with_no_candidates_is_an_error() {
        let mut space = tiny_space();
        space.candidates = vec!["skip".into()];
        match build_supernet(&space, &cfg(SearchMethod::Darts)) {
            Err(SearchError::IncompatibleCandidate { layer: 0, .. }) => {}
            other => panic!("expected IncompatibleCandidate, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn noisy_skip_beta_zero_is_exact_identity() {
        let mut tape = Tape::new();
        let x = tape.constant(vec![2, 3], vec![1.0, -2.0, 3.0, 0.0, 0.5, -0.25]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = noisy_skip_forward(&mut tape, x, 0.0, 0.0, &mut rng).unwrap();
        assert_eq!(x, y, "beta = 0 must return the identical node");
    }

    #[test]
    fn noisy_skip_negative_beta_is_an_error() {
        let mut tape = Tape::new();
        let x = tape.constant(vec![1], vec![0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            noisy_skip_forward(&mut tape, x, 0.0, -0.1, &mut rng),
            Err(SearchError::NegativeNoiseStd { .. })
        ));
    }

    #[test]
    fn noise_statistics_match_configured_moments() {
        let n = 10_000;
        let mut tape = Tape::new();
        let x = tape.constant(vec![n], vec![0.0; n]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let y = noisy_skip_forward(&mut tape, x, 0.0, 0.1, &mut rng).unwrap();
        let out = tape.values(y);
        let mean: Real = out.iter().sum::<Real>() / n as Real;
        let std: Real =
            (out.iter().map(|v| (v - mean) * (v - mean)).sum::<Real>() / n as Real).sqrt();
        assert!(mean.abs() < 0.005, "noise mean {mean}");
        assert!((std - 0.1).abs() < 0.1 * 0.05, "noise std {std}");
    }

    #[test]
    fn noisy_skip_gradient_is_all_ones() {
        let mut tape = Tape::new();
        let x = Tensor::new(vec![5], vec![0.1, -0.4, 2.0, 0.0, 1.0])
            .unwrap()
            .with_requires_grad();
        let x = tape.leaf(&x);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = noisy_skip_forward(&mut tape, x, 0.0, 0.5, &mut rng).unwrap();
        let loss = tape.sum(y);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.0; 5]);
    }

    #[test]
    fn l01_is_zero_at_alpha_zero_and_tends_to_quarter() {
        let mut tape = Tape::new();
        let zero = tape.constant(vec![4], vec![0.0; 4]).unwrap();
        let l = fairdarts_aux_loss(&mut tape, zero).unwrap();
        assert_eq!(tape.values(l), &[0.0]);

        let mut tape = Tape::new();
        let saturated = tape.constant(vec![4], vec![80.0, -80.0, 80.0, -80.0]).unwrap();
        let l = fairdarts_aux_loss(&mut tape, saturated).unwrap();
        assert!((tape.values(l)[0] - (-0.25)).abs() < 1e-9);
    }

    #[test]
    fn l01_gradient_matches_finite_differences() {
        let vals = [0.3, -1.2, 0.8, 2.0];
        let h = 1e-4;
        let eval = |v: &[Real]| -> Real {
            let mut tape = Tape::new();
            let a = tape.constant(vec![v.len()], v.to_vec()).unwrap();
            let l = fairdarts_aux_loss(&mut tape, a).unwrap();
            tape.values(l)[0]
        };
        let mut tape = Tape::new();
        let a = tape.leaf(
            &Tensor::new(vec![4], vals.to_vec())
                .unwrap()
                .with_requires_grad(),
        );
        let l = fairdarts_aux_loss(&mut tape, a).unwrap();
        tape.backward(l).unwrap();
        let grad = tape.grad(a).unwrap().to_vec();
        for i in 0..vals.len() {
            let mut plus = vals;
            plus[i] += h;
            let mut minus = vals;
            minus[i] -= h;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let rel = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(1.0);
            assert!(rel < 1e-3, "alpha[{i}]: {} vs {numeric}", grad[i]);
        }
    }
}
