//! Test support shared by the integration and acceptance suites: the
//! central-difference gradient oracle and the nested-loop convolution
//! oracle, plus per-operation check drivers. Everything here stays
//! independent of the tape's analytic gradient path.

use crate::tensor::{BnMode, Real, Tape, Tensor, TensorId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: Real = 1e-4;
pub const FD_TOL: Real = 1e-3;

/// Builds a scalar loss from leaf ids in the order the inputs were given.
pub type Graph = dyn Fn(&mut Tape, &[TensorId]) -> TensorId;

pub fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let values = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    Tensor::new(shape.to_vec(), values).unwrap()
}

/// Keeps elements away from the ReLU kink so finite differences are valid.
pub fn rand_tensor_off_kink(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let values = (0..n)
        .map(|_| {
            let v: Real = rng.gen_range(0.05..2.0);
            if rng.gen_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), values).unwrap()
}

fn eval(graph: &Graph, inputs: &[Tensor]) -> Real {
    let mut tape = Tape::new();
    let ids: Vec<TensorId> = inputs.iter().map(|t| tape.leaf(t)).collect();
    let loss = graph(&mut tape, &ids);
    tape.values(loss)[0]
}

/// Central-difference gradient of the loss w.r.t. every element of every
/// input, compared against the tape's analytic gradient. Panics with the
/// offending element on violation.
#[allow(clippy::needless_range_loop)]
pub fn check_grads(name: &str, graph: &Graph, inputs: &[Tensor]) {
    let inputs: Vec<Tensor> = inputs
        .iter()
        .map(|t| t.clone().with_requires_grad())
        .collect();
    let mut tape = Tape::new();
    let ids: Vec<TensorId> = inputs.iter().map(|t| tape.leaf(t)).collect();
    let loss = graph(&mut tape, &ids);
    tape.backward(loss).expect("backward failed");
    let analytic: Vec<Vec<Real>> = ids
        .iter()
        .map(|&id| tape.grad(id).expect("missing grad").to_vec())
        .collect();

    for (which, input) in inputs.iter().enumerate() {
        for elem in 0..input.numel() {
            let mut plus = inputs.clone();
            plus[which].values_mut()[elem] += FD_STEP;
            let mut minus = inputs.clone();
            minus[which].values_mut()[elem] -= FD_STEP;
            let numeric = (eval(graph, &plus) - eval(graph, &minus)) / (2.0 * FD_STEP);
            let a = analytic[which][elem];
            let scale = a.abs().max(numeric.abs()).max(1.0);
            let rel = (a - numeric).abs() / scale;
            assert!(
                rel < FD_TOL,
                "{name}: input {which} elem {elem}: analytic {a} vs numeric {numeric} (rel {rel})"
            );
        }
    }
}

/// Random projection head: turns any tensor into a scalar with non-uniform
/// weights so gradients are richer than a plain sum.
pub fn project(tape: &mut Tape, x: TensorId, rng: &mut ChaCha8Rng) -> TensorId {
    let shape = tape.shape(x).to_vec();
    let n: usize = shape.iter().product();
    let weights: Vec<Real> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let w = tape.constant(shape, weights).unwrap();
    let prod = tape.mul(x, w).unwrap();
    tape.sum(prod)
}

// ── per-operation drivers (one seed each) ───────────────────────────────

pub fn grad_elementwise(seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = rand_tensor(&[3, 4], &mut rng);
    let b = rand_tensor(&[3, 4], &mut rng);
    let proj = ChaCha8Rng::seed_from_u64(seed + 10_000);

    let p = proj.clone();
    check_grads(
        "add",
        &move |tape, ids| {
            let y = tape.add(ids[0], ids[1]).unwrap();
            project(tape, y, &mut p.clone())
        },
        &[a.clone(), b.clone()],
    );
    let p = proj.clone();
    check_grads(
        "mul",
        &move |tape, ids| {
            let y = tape.mul(ids[0], ids[1]).unwrap();
            project(tape, y, &mut p.clone())
        },
        &[a.clone(), b.clone()],
    );
    let p = proj.clone();
    check_grads(
        "add_scalar+scale",
        &move |tape, ids| {
            let y = tape.add_scalar(ids[0], -0.5);
            let z = tape.scale(y, 1.7);
            project(tape, z, &mut p.clone())
        },
        std::slice::from_ref(&a),
    );
    let p = proj.clone();
    check_grads(
        "sigmoid",
        &move |tape, ids| {
            let y = tape.sigmoid(ids[0]);
            project(tape, y, &mut p.clone())
        },
        std::slice::from_ref(&a),
    );
    let kink_free = rand_tensor_off_kink(&[3, 4], &mut rng);
    let p = proj.clone();
    check_grads(
        "relu",
        &move |tape, ids| {
            let y = tape.relu(ids[0]);
            project(tape, y, &mut p.clone())
        },
        std::slice::from_ref(&kink_free),
    );
    let p = proj.clone();
    check_grads(
        "mean",
        &move |tape, ids| {
            let y = tape.mean(ids[0]);
            project(tape, y, &mut p.clone())
        },
        std::slice::from_ref(&a),
    );
}

pub fn grad_softmax(seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
    let x = rand_tensor(&[3, 5], &mut rng);
    for axis in 0..2 {
        let p = ChaCha8Rng::seed_from_u64(seed);
        check_grads(
            &format!("softmax axis {axis}"),
            &move |tape, ids| {
                let y = tape.softmax(ids[0], axis).unwrap();
                project(tape, y, &mut p.clone())
            },
            std::slice::from_ref(&x),
        );
    }
}

pub fn grad_conv1d(seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
    for (shape, wshape, stride) in [
        (vec![3, 8], vec![4, 3, 3], 1),
        (vec![3, 8], vec![4, 3, 3], 2),
        (vec![2, 3, 7], vec![2, 3, 5], 2),
        (vec![1, 2, 5], vec![3, 2, 1], 1),
    ] {
        let x = rand_tensor(&shape, &mut rng);
        let w = rand_tensor(&wshape, &mut rng);
        let p = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        check_grads(
            "conv1d",
            &move |tape, ids| {
                let y = tape.conv1d(ids[0], ids[1], stride).unwrap();
                project(tape, y, &mut p.clone())
            },
            &[x, w],
        );
    }
}

pub fn grad_batchnorm(seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
    let x = rand_tensor(&[2, 3, 4], &mut rng);
    let gamma = rand_tensor(&[3], &mut rng);
    let beta = rand_tensor(&[3], &mut rng);
    for mode in [BnMode::Train, BnMode::Eval] {
        let p = ChaCha8Rng::seed_from_u64(seed ^ 0xdef);
        check_grads(
            "batchnorm1d",
            &move |tape, ids| {
                let mut running = vec![0.1, -0.2, 0.3, 1.5, 0.7, 1.1];
                let y = tape
                    .batchnorm1d(ids[0], ids[1], ids[2], &mut running, mode, 0.1, 1e-5)
                    .unwrap();
                project(tape, y, &mut p.clone())
            },
            &[x.clone(), gamma.clone(), beta.clone()],
        );
    }
}

pub fn grad_pool_linear_gating(seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
    let x3 = rand_tensor(&[2, 3, 5], &mut rng);
    let p = ChaCha8Rng::seed_from_u64(seed);
    check_grads(
        "global_avg_pool",
        &move |tape, ids| {
            let y = tape.global_avg_pool(ids[0]).unwrap();
            project(tape, y, &mut p.clone())
        },
        std::slice::from_ref(&x3),
    );

    let x = rand_tensor(&[4, 3], &mut rng);
    let w = rand_tensor(&[2, 3], &mut rng);
    let b = rand_tensor(&[2], &mut rng);
    let p = ChaCha8Rng::seed_from_u64(seed + 1);
    check_grads(
        "linear",
        &move |tape, ids| {
            let y = tape.linear(ids[0], ids[1], ids[2]).unwrap();
            project(tape, y, &mut p.clone())
        },
        &[x, w, b],
    );

    let gate = rand_tensor(&[2, 3], &mut rng);
    let p = ChaCha8Rng::seed_from_u64(seed + 2);
    check_grads(
        "broadcast_mul",
        &move |tape, ids| {
            let y = tape.broadcast_mul(ids[0], ids[1]).unwrap();
            project(tape, y, &mut p.clone())
        },
        &[x3.clone(), gate],
    );

    let gates = rand_tensor(&[4], &mut rng);
    let idx = (seed % 4) as usize;
    let p = ChaCha8Rng::seed_from_u64(seed + 3);
    check_grads(
        "gate_scale",
        &move |tape, ids| {
            let y = tape.gate_scale(ids[0], ids[1], idx).unwrap();
            project(tape, y, &mut p.clone())
        },
        &[x3, gates],
    );
}

pub fn grad_cross_entropy(seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
    let logits = rand_tensor(&[4, 6], &mut rng);
    let labels: Vec<usize> = (0..4).map(|_| rng.gen_range(0..6)).collect();
    let l = labels.clone();
    check_grads(
        "cross_entropy",
        &move |tape, ids| tape.cross_entropy(ids[0], &l).unwrap(),
        std::slice::from_ref(&logits),
    );
}

/// Every exported op against finite differences, `seeds` random seeds each.
pub fn run_gradient_suite(seeds: u64) {
    for seed in 0..seeds {
        grad_elementwise(seed);
        grad_softmax(seed);
        grad_conv1d(seed);
        grad_batchnorm(seed);
        grad_pool_linear_gating(seed);
        grad_cross_entropy(seed);
    }
}

// ── nested-loop convolution oracle ──────────────────────────────────────

/// Direct convolution; stays loop-literal and independent of the tape.
pub fn conv1d_oracle(
    x: &[Real],
    w: &[Real],
    c_in: usize,
    t: usize,
    c_out: usize,
    k: usize,
    stride: usize,
) -> Vec<Real> {
    let pad = (k - 1) / 2;
    let t_out = t.div_ceil(stride);
    let mut out = vec![0.0; c_out * t_out];
    for co in 0..c_out {
        for to in 0..t_out {
            let mut acc = 0.0;
            for ci in 0..c_in {
                for kk in 0..k {
                    let ti = (to * stride + kk) as isize - pad as isize;
                    if ti >= 0 && (ti as usize) < t {
                        acc += x[ci * t + ti as usize] * w[(co * c_in + ci) * k + kk];
                    }
                }
            }
            out[co * t_out + to] = acc;
        }
    }
    out
}

/// conv1d against the nested-loop oracle over several shapes, elementwise
/// within 1e-9.
pub fn conv1d_oracle_check(seeds: u64) {
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + seed);
        for (c_in, t, c_out, k, stride) in
            [(3, 8, 4, 3, 2), (3, 8, 4, 3, 1), (5, 13, 2, 7, 2), (1, 1, 1, 9, 1)]
        {
            let x: Vec<Real> = (0..c_in * t).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w: Vec<Real> = (0..c_out * c_in * k)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let expect = conv1d_oracle(&x, &w, c_in, t, c_out, k, stride);

            let mut tape = Tape::new();
            let xid = tape.constant(vec![c_in, t], x).unwrap();
            let wid = tape.constant(vec![c_out, c_in, k], w).unwrap();
            let y = tape.conv1d(xid, wid, stride).unwrap();
            let got = tape.values(y);
            assert_eq!(got.len(), expect.len());
            for (g, e) in got.iter().zip(&expect) {
                assert!((g - e).abs() < 1e-9, "conv mismatch: {g} vs {e}");
            }
        }
    }
}
