//! Wengert tape: operations recorded in forward order, replayed in reverse.
//!
//! A tape lives for one forward/backward pass. Persistent parameters are
//! copied onto it as leaves (see [`super::ParamStore`]); after
//! [`Tape::backward`] their gradients are read back out by id.

use super::{Real, Tensor, TensorError};

type Result<T> = std::result::Result<T, TensorError>;

/// Index of a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(usize);

/// Batch-norm forward mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Eval,
}

/// Canonicalized [N, C, T] view of a rank-2 or rank-3 tensor.
#[derive(Debug, Clone, Copy)]
struct Nct {
    n: usize,
    c: usize,
    t: usize,
}

fn as_nct(op: &'static str, shape: &[usize]) -> Result<Nct> {
    match *shape {
        [c, t] => Ok(Nct { n: 1, c, t }),
        [n, c, t] => Ok(Nct { n, c, t }),
        _ => Err(TensorError::BadRank {
            op,
            expected: "[C, T] or [N, C, T]",
            shape: shape.to_vec(),
        }),
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add {
        a: TensorId,
        b: TensorId,
    },
    Mul {
        a: TensorId,
        b: TensorId,
    },
    AddScalar {
        x: TensorId,
    },
    Scale {
        x: TensorId,
        c: Real,
    },
    Relu {
        x: TensorId,
    },
    Sigmoid {
        x: TensorId,
    },
    Softmax {
        x: TensorId,
        outer: usize,
        axis_len: usize,
        inner: usize,
    },
    Sum {
        x: TensorId,
    },
    Conv1d {
        x: TensorId,
        w: TensorId,
        stride: usize,
        pad_left: usize,
        dims: ConvDims,
    },
    BatchNorm {
        x: TensorId,
        gamma: TensorId,
        beta: TensorId,
        nct: Nct,
        mode: BnMode,
        mean: Vec<Real>,
        inv_std: Vec<Real>,
    },
    GlobalAvgPool {
        x: TensorId,
        nct: Nct,
    },
    Linear {
        x: TensorId,
        w: TensorId,
        b: TensorId,
        n: usize,
        f: usize,
        o: usize,
    },
    CrossEntropy {
        logits: TensorId,
        labels: Vec<usize>,
        classes: usize,
        probs: Vec<Real>,
    },
    BroadcastMul {
        x: TensorId,
        gate: TensorId,
        nct: Nct,
    },
    GateScale {
        x: TensorId,
        gates: TensorId,
        idx: usize,
    },
}

#[derive(Debug, Clone, Copy)]
struct ConvDims {
    n: usize,
    c_in: usize,
    t_in: usize,
    c_out: usize,
    k: usize,
    t_out: usize,
}

struct Node {
    tensor: Tensor,
    op: Op,
}

/// The recording tape. Nodes appear after all their parents, so the reverse
/// of recording order is a valid backward order.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    backward_done: bool,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Record a leaf holding a copy of `t`. Its `requires_grad` flag decides
    /// whether backward will produce a gradient for it.
    pub fn leaf(&mut self, t: &Tensor) -> TensorId {
        self.push(t.clone(), Op::Leaf)
    }

    /// Leaf from raw parts, without gradient tracking (inputs, noise).
    pub fn constant(&mut self, shape: Vec<usize>, values: Vec<Real>) -> Result<TensorId> {
        let t = Tensor::new(shape, values)?;
        Ok(self.push(t, Op::Leaf))
    }

    pub fn tensor(&self, id: TensorId) -> &Tensor {
        &self.nodes[id.0].tensor
    }

    pub fn values(&self, id: TensorId) -> &[Real] {
        self.nodes[id.0].tensor.values()
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        self.nodes[id.0].tensor.shape()
    }

    pub fn grad(&self, id: TensorId) -> Option<&[Real]> {
        self.nodes[id.0].tensor.grad()
    }

    fn push(&mut self, tensor: Tensor, op: Op) -> TensorId {
        self.nodes.push(Node { tensor, op });
        TensorId(self.nodes.len() - 1)
    }

    fn result(&mut self, shape: Vec<usize>, values: Vec<Real>, op: Op, requires_grad: bool) -> TensorId {
        let mut t = Tensor::new(shape, values).expect("op produced malformed tensor");
        if requires_grad {
            t = t.with_requires_grad();
        }
        self.push(t, op)
    }

    fn rg(&self, id: TensorId) -> bool {
        self.nodes[id.0].tensor.requires_grad()
    }

    // ── elementwise ──────────────────────────────────────────────────

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::ShapeMismatch {
                op: "add",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let values = self
            .values(a)
            .iter()
            .zip(self.values(b))
            .map(|(x, y)| x + y)
            .collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.result(self.shape(a).to_vec(), values, Op::Add { a, b }, rg))
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::ShapeMismatch {
                op: "mul",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let values = self
            .values(a)
            .iter()
            .zip(self.values(b))
            .map(|(x, y)| x * y)
            .collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.result(self.shape(a).to_vec(), values, Op::Mul { a, b }, rg))
    }

    pub fn add_scalar(&mut self, x: TensorId, c: Real) -> TensorId {
        let values = self.values(x).iter().map(|v| v + c).collect();
        let rg = self.rg(x);
        self.result(self.shape(x).to_vec(), values, Op::AddScalar { x }, rg)
    }

    pub fn scale(&mut self, x: TensorId, c: Real) -> TensorId {
        let values = self.values(x).iter().map(|v| v * c).collect();
        let rg = self.rg(x);
        self.result(self.shape(x).to_vec(), values, Op::Scale { x, c }, rg)
    }

    pub fn relu(&mut self, x: TensorId) -> TensorId {
        let values = self.values(x).iter().map(|v| v.max(0.0)).collect();
        let rg = self.rg(x);
        self.result(self.shape(x).to_vec(), values, Op::Relu { x }, rg)
    }

    pub fn sigmoid(&mut self, x: TensorId) -> TensorId {
        let values = self.values(x).iter().map(|&v| sigmoid(v)).collect();
        let rg = self.rg(x);
        self.result(self.shape(x).to_vec(), values, Op::Sigmoid { x }, rg)
    }

    /// Softmax along `axis`.
    pub fn softmax(&mut self, x: TensorId, axis: usize) -> Result<TensorId> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(TensorError::BadAxis { axis, shape });
        }
        let axis_len = shape[axis];
        if axis_len == 0 {
            return Err(TensorError::BadAxis { axis, shape });
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let xs = self.values(x);
        let mut values = vec![0.0; xs.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| o * axis_len * inner + k * inner + i;
                let mut max = Real::NEG_INFINITY;
                for k in 0..axis_len {
                    max = max.max(xs[at(k)]);
                }
                let mut denom = 0.0;
                for k in 0..axis_len {
                    let e = (xs[at(k)] - max).exp();
                    values[at(k)] = e;
                    denom += e;
                }
                for k in 0..axis_len {
                    values[at(k)] /= denom;
                }
            }
        }
        let rg = self.rg(x);
        Ok(self.result(
            shape,
            values,
            Op::Softmax {
                x,
                outer,
                axis_len,
                inner,
            },
            rg,
        ))
    }

    // ── reductions ───────────────────────────────────────────────────

    pub fn sum(&mut self, x: TensorId) -> TensorId {
        let s = self.values(x).iter().sum();
        let rg = self.rg(x);
        self.result(vec![1], vec![s], Op::Sum { x }, rg)
    }

    pub fn mean(&mut self, x: TensorId) -> TensorId {
        let n = self.values(x).len();
        let s = self.sum(x);
        self.scale(s, 1.0 / n as Real)
    }

    // ── network ops ──────────────────────────────────────────────────

    /// Temporal convolution with "same"-style symmetric zero padding
    /// totalling K-1, so `T_out = ceil(T / stride)`. No bias.
    ///
    /// `x` is `[C_in, T]` or `[N, C_in, T]`; `w` is `[C_out, C_in, K]` with K
    /// odd. Output rank matches the input rank.
    pub fn conv1d(&mut self, x: TensorId, w: TensorId, stride: usize) -> Result<TensorId> {
        let nct = as_nct("conv1d", self.shape(x))?;
        let wshape = self.shape(w).to_vec();
        let [c_out, w_cin, k] = match wshape[..] {
            [a, b, c] => [a, b, c],
            _ => {
                return Err(TensorError::BadRank {
                    op: "conv1d weight",
                    expected: "[C_out, C_in, K]",
                    shape: wshape,
                })
            }
        };
        if k % 2 == 0 {
            return Err(TensorError::EvenKernel { k });
        }
        if w_cin != nct.c {
            return Err(TensorError::ShapeMismatch {
                op: "conv1d",
                lhs: self.shape(x).to_vec(),
                rhs: wshape,
            });
        }
        assert!(stride >= 1, "conv1d stride must be >= 1");
        let pad_left = (k - 1) / 2;
        let t_out = nct.t.div_ceil(stride);
        let dims = ConvDims {
            n: nct.n,
            c_in: nct.c,
            t_in: nct.t,
            c_out,
            k,
            t_out,
        };

        let xs = self.values(x);
        let ws = self.values(w);
        let mut out = vec![0.0; nct.n * c_out * t_out];
        for n in 0..nct.n {
            for co in 0..c_out {
                let o_base = (n * c_out + co) * t_out;
                for ci in 0..nct.c {
                    let x_base = (n * nct.c + ci) * nct.t;
                    let w_base = (co * nct.c + ci) * k;
                    for kk in 0..k {
                        let wv = ws[w_base + kk];
                        if wv == 0.0 {
                            continue;
                        }
                        for to in 0..t_out {
                            let ti = (to * stride + kk) as isize - pad_left as isize;
                            if ti >= 0 && (ti as usize) < nct.t {
                                out[o_base + to] += wv * xs[x_base + ti as usize];
                            }
                        }
                    }
                }
            }
        }

        let out_shape = if self.shape(x).len() == 2 {
            vec![c_out, t_out]
        } else {
            vec![nct.n, c_out, t_out]
        };
        let rg = self.rg(x) || self.rg(w);
        Ok(self.result(
            out_shape,
            out,
            Op::Conv1d {
                x,
                w,
                stride,
                pad_left,
                dims,
            },
            rg,
        ))
    }

    /// Per-channel batch normalization over the batch and time axes.
    ///
    /// `running` packs the running mean then the running variance as one
    /// `[2, C]` buffer; in train mode it is updated in place with momentum
    /// `momentum`, in eval mode it supplies the statistics.
    #[allow(clippy::too_many_arguments)]
    pub fn batchnorm1d(
        &mut self,
        x: TensorId,
        gamma: TensorId,
        beta: TensorId,
        running: &mut [Real],
        mode: BnMode,
        momentum: Real,
        eps: Real,
    ) -> Result<TensorId> {
        let nct = as_nct("batchnorm1d", self.shape(x))?;
        let c = nct.c;
        for (name, id) in [("gamma", gamma), ("beta", beta)] {
            if self.shape(id) != [c] {
                return Err(TensorError::ShapeMismatch {
                    op: if name == "gamma" {
                        "batchnorm1d gamma"
                    } else {
                        "batchnorm1d beta"
                    },
                    lhs: vec![c],
                    rhs: self.shape(id).to_vec(),
                });
            }
        }
        if running.len() != 2 * c {
            return Err(TensorError::ShapeMismatch {
                op: "batchnorm1d running stats",
                lhs: vec![2, c],
                rhs: vec![running.len()],
            });
        }

        let count = nct.n * nct.t;
        let xs = self.values(x);
        let (mean, var) = match mode {
            BnMode::Train => {
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for ch in 0..c {
                    let mut s = 0.0;
                    for n in 0..nct.n {
                        let base = (n * c + ch) * nct.t;
                        for t in 0..nct.t {
                            s += xs[base + t];
                        }
                    }
                    let m = s / count as Real;
                    let mut v = 0.0;
                    for n in 0..nct.n {
                        let base = (n * c + ch) * nct.t;
                        for t in 0..nct.t {
                            let d = xs[base + t] - m;
                            v += d * d;
                        }
                    }
                    mean[ch] = m;
                    var[ch] = v / count as Real;
                }
                // Running variance uses the unbiased estimate.
                let correction = if count > 1 {
                    count as Real / (count - 1) as Real
                } else {
                    1.0
                };
                for ch in 0..c {
                    running[ch] = (1.0 - momentum) * running[ch] + momentum * mean[ch];
                    running[c + ch] =
                        (1.0 - momentum) * running[c + ch] + momentum * var[ch] * correction;
                }
                (mean, var)
            }
            BnMode::Eval => (running[..c].to_vec(), running[c..].to_vec()),
        };

        let inv_std: Vec<Real> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let gs = self.values(gamma);
        let bs = self.values(beta);
        let mut out = vec![0.0; xs.len()];
        for n in 0..nct.n {
            for ch in 0..c {
                let base = (n * c + ch) * nct.t;
                for t in 0..nct.t {
                    let xhat = (xs[base + t] - mean[ch]) * inv_std[ch];
                    out[base + t] = gs[ch] * xhat + bs[ch];
                }
            }
        }
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        Ok(self.result(
            self.shape(x).to_vec(),
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                nct,
                mode,
                mean,
                inv_std,
            },
            rg,
        ))
    }

    /// Mean over the time axis: `[N, C, T] -> [N, C]` (or `[C, T] -> [C]`).
    pub fn global_avg_pool(&mut self, x: TensorId) -> Result<TensorId> {
        let nct = as_nct("global_avg_pool", self.shape(x))?;
        let xs = self.values(x);
        let mut out = vec![0.0; nct.n * nct.c];
        for n in 0..nct.n {
            for ch in 0..nct.c {
                let base = (n * nct.c + ch) * nct.t;
                let s: Real = xs[base..base + nct.t].iter().sum();
                out[n * nct.c + ch] = s / nct.t as Real;
            }
        }
        let out_shape = if self.shape(x).len() == 2 {
            vec![nct.c]
        } else {
            vec![nct.n, nct.c]
        };
        let rg = self.rg(x);
        Ok(self.result(out_shape, out, Op::GlobalAvgPool { x, nct }, rg))
    }

    /// Fully connected layer: `x [N, F] (or [F]) × w [O, F] + b [O]`.
    pub fn linear(&mut self, x: TensorId, w: TensorId, b: TensorId) -> Result<TensorId> {
        let xshape = self.shape(x).to_vec();
        let (n, f) = match xshape[..] {
            [f] => (1, f),
            [n, f] => (n, f),
            _ => {
                return Err(TensorError::BadRank {
                    op: "linear",
                    expected: "[F] or [N, F]",
                    shape: xshape,
                })
            }
        };
        let wshape = self.shape(w).to_vec();
        let (o, wf) = match wshape[..] {
            [o, wf] => (o, wf),
            _ => {
                return Err(TensorError::BadRank {
                    op: "linear weight",
                    expected: "[O, F]",
                    shape: wshape,
                })
            }
        };
        if wf != f || self.shape(b) != [o] {
            return Err(TensorError::ShapeMismatch {
                op: "linear",
                lhs: xshape,
                rhs: wshape,
            });
        }
        let xs = self.values(x);
        let ws = self.values(w);
        let bs = self.values(b);
        let mut out = vec![0.0; n * o];
        for ni in 0..n {
            for oi in 0..o {
                let mut acc = bs[oi];
                let wrow = &ws[oi * f..(oi + 1) * f];
                let xrow = &xs[ni * f..(ni + 1) * f];
                for fi in 0..f {
                    acc += xrow[fi] * wrow[fi];
                }
                out[ni * o + oi] = acc;
            }
        }
        let out_shape = if self.shape(x).len() == 1 {
            vec![o]
        } else {
            vec![n, o]
        };
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.result(out_shape, out, Op::Linear { x, w, b, n, f, o }, rg))
    }

    /// Mean negative log-likelihood of `labels` under softmax of `logits`
    /// (`[N, K]` or `[K]`).
    pub fn cross_entropy(&mut self, logits: TensorId, labels: &[usize]) -> Result<TensorId> {
        let shape = self.shape(logits).to_vec();
        let (n, k) = match shape[..] {
            [k] => (1, k),
            [n, k] => (n, k),
            _ => {
                return Err(TensorError::BadRank {
                    op: "cross_entropy",
                    expected: "[K] or [N, K]",
                    shape,
                })
            }
        };
        if labels.len() != n {
            return Err(TensorError::ShapeMismatch {
                op: "cross_entropy labels",
                lhs: vec![n],
                rhs: vec![labels.len()],
            });
        }
        for &l in labels {
            if l >= k {
                return Err(TensorError::LabelOutOfRange {
                    label: l,
                    classes: k,
                });
            }
        }
        let xs = self.values(logits);
        let mut probs = vec![0.0; n * k];
        let mut loss = 0.0;
        for ni in 0..n {
            let row = &xs[ni * k..(ni + 1) * k];
            let max = row.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
            let mut denom = 0.0;
            for ki in 0..k {
                let e = (row[ki] - max).exp();
                probs[ni * k + ki] = e;
                denom += e;
            }
            for ki in 0..k {
                probs[ni * k + ki] /= denom;
            }
            loss -= (probs[ni * k + labels[ni]]).max(Real::MIN_POSITIVE).ln();
        }
        loss /= n as Real;
        let rg = self.rg(logits);
        Ok(self.result(
            vec![1],
            vec![loss],
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                classes: k,
                probs,
            },
            rg,
        ))
    }

    /// Per-channel gating: `x [N, C, T] * gate [N, C]` (or `[C, T] * [C]`),
    /// the squeeze-and-excitation multiply.
    pub fn broadcast_mul(&mut self, x: TensorId, gate: TensorId) -> Result<TensorId> {
        let nct = as_nct("broadcast_mul", self.shape(x))?;
        let expected: &[usize] = if self.shape(x).len() == 2 {
            &[nct.c]
        } else {
            &[nct.n, nct.c]
        };
        if self.shape(gate) != expected {
            return Err(TensorError::ShapeMismatch {
                op: "broadcast_mul",
                lhs: self.shape(x).to_vec(),
                rhs: self.shape(gate).to_vec(),
            });
        }
        let xs = self.values(x);
        let gs = self.values(gate);
        let mut out = vec![0.0; xs.len()];
        for n in 0..nct.n {
            for ch in 0..nct.c {
                let g = gs[n * nct.c + ch];
                let base = (n * nct.c + ch) * nct.t;
                for t in 0..nct.t {
                    out[base + t] = xs[base + t] * g;
                }
            }
        }
        let rg = self.rg(x) || self.rg(gate);
        Ok(self.result(
            self.shape(x).to_vec(),
            out,
            Op::BroadcastMul { x, gate, nct },
            rg,
        ))
    }

    /// Scales every element of `x` by `gates[idx]`, differentiable in both.
    /// This is the per-candidate weighting of the mixed layer.
    pub fn gate_scale(&mut self, x: TensorId, gates: TensorId, idx: usize) -> Result<TensorId> {
        let glen = self.values(gates).len();
        if idx >= glen {
            return Err(TensorError::GateIndexOutOfRange {
                op: "gate_scale",
                idx,
                len: glen,
            });
        }
        let g = self.values(gates)[idx];
        let values = self.values(x).iter().map(|v| v * g).collect();
        let rg = self.rg(x) || self.rg(gates);
        Ok(self.result(
            self.shape(x).to_vec(),
            values,
            Op::GateScale { x, gates, idx },
            rg,
        ))
    }

    // ── backward ─────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss. Populates `grad` on every node with
    /// `requires_grad`; nodes untouched by the loss get a zero gradient.
    ///
    /// A tape supports exactly one backward pass: a second call is an error
    /// rather than an accumulation.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        if self.backward_done {
            return Err(TensorError::BackwardAlreadyRun);
        }
        let numel = self.values(loss).len();
        if numel != 1 {
            return Err(TensorError::NonScalarLoss { numel });
        }
        self.backward_done = true;
        self.nodes[loss.0].tensor.set_grad(Some(vec![1.0]));

        for i in (0..self.nodes.len()).rev() {
            if !self.nodes[i].tensor.requires_grad() {
                continue;
            }
            let Some(d_out) = self.nodes[i].tensor.grad().map(<[Real]>::to_vec) else {
                continue;
            };
            self.propagate(i, &d_out);
        }

        for (i, node) in self.nodes.iter_mut().enumerate() {
            if !node.tensor.requires_grad() {
                continue;
            }
            match node.tensor.grad() {
                None => {
                    let n = node.tensor.numel();
                    node.tensor.set_grad(Some(vec![0.0; n]));
                }
                Some(g) => {
                    if g.iter().any(|v| !v.is_finite()) {
                        return Err(TensorError::NonFiniteGrad { node: i });
                    }
                }
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, id: TensorId, delta: &[Real]) {
        let t = &mut self.nodes[id.0].tensor;
        if !t.requires_grad() {
            return;
        }
        match t.grad() {
            Some(_) => {
                let n = t.numel();
                let g = t.grad_buf(n);
                for (gi, di) in g.iter_mut().zip(delta) {
                    *gi += di;
                }
            }
            None => t.set_grad(Some(delta.to_vec())),
        }
    }

    fn accumulate_at(&mut self, id: TensorId, flat_idx: usize, delta: Real) {
        let t = &mut self.nodes[id.0].tensor;
        if !t.requires_grad() {
            return;
        }
        let n = t.numel();
        t.grad_buf(n)[flat_idx] += delta;
    }

    fn propagate(&mut self, i: usize, d_out: &[Real]) {
        // The op is moved out so parent nodes can be mutated; Leaf is a valid
        // stand-in because a node is visited exactly once.
        let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
        match &op {
            Op::Leaf => {}
            Op::Add { a, b } => {
                self.accumulate(*a, d_out);
                self.accumulate(*b, d_out);
            }
            Op::Mul { a, b } => {
                let da: Vec<Real> = d_out
                    .iter()
                    .zip(self.values(*b))
                    .map(|(d, y)| d * y)
                    .collect();
                let db: Vec<Real> = d_out
                    .iter()
                    .zip(self.values(*a))
                    .map(|(d, x)| d * x)
                    .collect();
                self.accumulate(*a, &da);
                self.accumulate(*b, &db);
            }
            Op::AddScalar { x } => self.accumulate(*x, d_out),
            Op::Scale { x, c } => {
                let dx: Vec<Real> = d_out.iter().map(|d| d * c).collect();
                self.accumulate(*x, &dx);
            }
            Op::Relu { x } => {
                let dx: Vec<Real> = d_out
                    .iter()
                    .zip(self.values(*x))
                    .map(|(d, &v)| if v > 0.0 { *d } else { 0.0 })
                    .collect();
                self.accumulate(*x, &dx);
            }
            Op::Sigmoid { x } => {
                let out = self.nodes[i].tensor.values();
                let dx: Vec<Real> = d_out
                    .iter()
                    .zip(out)
                    .map(|(d, &s)| d * s * (1.0 - s))
                    .collect();
                self.accumulate(*x, &dx);
            }
            Op::Softmax {
                x,
                outer,
                axis_len,
                inner,
            } => {
                let out = self.nodes[i].tensor.values().to_vec();
                let mut dx = vec![0.0; out.len()];
                for o in 0..*outer {
                    for ii in 0..*inner {
                        let at = |k: usize| o * axis_len * inner + k * inner + ii;
                        let mut dot = 0.0;
                        for k in 0..*axis_len {
                            dot += d_out[at(k)] * out[at(k)];
                        }
                        for k in 0..*axis_len {
                            dx[at(k)] = out[at(k)] * (d_out[at(k)] - dot);
                        }
                    }
                }
                self.accumulate(*x, &dx);
            }
            Op::Sum { x } => {
                let n = self.values(*x).len();
                let dx = vec![d_out[0]; n];
                self.accumulate(*x, &dx);
            }
            Op::Conv1d {
                x,
                w,
                stride,
                pad_left,
                dims,
            } => {
                let ConvDims {
                    n,
                    c_in,
                    t_in,
                    c_out,
                    k,
                    t_out,
                } = *dims;
                let xs = self.values(*x).to_vec();
                let ws = self.values(*w).to_vec();
                let mut dx = vec![0.0; xs.len()];
                let mut dw = vec![0.0; ws.len()];
                for ni in 0..n {
                    for co in 0..c_out {
                        let o_base = (ni * c_out + co) * t_out;
                        for ci in 0..c_in {
                            let x_base = (ni * c_in + ci) * t_in;
                            let w_base = (co * c_in + ci) * k;
                            for kk in 0..k {
                                let wv = ws[w_base + kk];
                                let mut dw_acc = 0.0;
                                for to in 0..t_out {
                                    let ti = (to * stride + kk) as isize - *pad_left as isize;
                                    if ti >= 0 && (ti as usize) < t_in {
                                        let g = d_out[o_base + to];
                                        dx[x_base + ti as usize] += g * wv;
                                        dw_acc += g * xs[x_base + ti as usize];
                                    }
                                }
                                dw[w_base + kk] += dw_acc;
                            }
                        }
                    }
                }
                self.accumulate(*x, &dx);
                self.accumulate(*w, &dw);
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                nct,
                mode,
                mean,
                inv_std,
            } => {
                let Nct { n, c, t } = *nct;
                let count = (n * t) as Real;
                let xs = self.values(*x).to_vec();
                let gs = self.values(*gamma).to_vec();
                let mut dx = vec![0.0; xs.len()];
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for ch in 0..c {
                    let m = mean[ch];
                    let is = inv_std[ch];
                    let mut sum_d = 0.0;
                    let mut sum_dxhat = 0.0;
                    for ni in 0..n {
                        let base = (ni * c + ch) * t;
                        for ti in 0..t {
                            let d = d_out[base + ti];
                            let xhat = (xs[base + ti] - m) * is;
                            sum_d += d;
                            sum_dxhat += d * xhat;
                        }
                    }
                    dgamma[ch] = sum_dxhat;
                    dbeta[ch] = sum_d;
                    match mode {
                        BnMode::Train => {
                            for ni in 0..n {
                                let base = (ni * c + ch) * t;
                                for ti in 0..t {
                                    let d = d_out[base + ti];
                                    let xhat = (xs[base + ti] - m) * is;
                                    dx[base + ti] = gs[ch]
                                        * is
                                        * (d - sum_d / count - xhat * sum_dxhat / count);
                                }
                            }
                        }
                        BnMode::Eval => {
                            for ni in 0..n {
                                let base = (ni * c + ch) * t;
                                for ti in 0..t {
                                    dx[base + ti] = d_out[base + ti] * gs[ch] * is;
                                }
                            }
                        }
                    }
                }
                self.accumulate(*x, &dx);
                self.accumulate(*gamma, &dgamma);
                self.accumulate(*beta, &dbeta);
            }
            Op::GlobalAvgPool { x, nct } => {
                let Nct { n, c, t } = *nct;
                let mut dx = vec![0.0; n * c * t];
                for ni in 0..n {
                    for ch in 0..c {
                        let g = d_out[ni * c + ch] / t as Real;
                        let base = (ni * c + ch) * t;
                        for ti in 0..t {
                            dx[base + ti] = g;
                        }
                    }
                }
                self.accumulate(*x, &dx);
            }
            Op::Linear { x, w, b, n, f, o } => {
                let (n, f, o) = (*n, *f, *o);
                let xs = self.values(*x).to_vec();
                let ws = self.values(*w).to_vec();
                let mut dx = vec![0.0; n * f];
                let mut dw = vec![0.0; o * f];
                let mut db = vec![0.0; o];
                for ni in 0..n {
                    for oi in 0..o {
                        let g = d_out[ni * o + oi];
                        db[oi] += g;
                        let wrow = &ws[oi * f..(oi + 1) * f];
                        let xrow = &xs[ni * f..(ni + 1) * f];
                        for fi in 0..f {
                            dx[ni * f + fi] += g * wrow[fi];
                            dw[oi * f + fi] += g * xrow[fi];
                        }
                    }
                }
                self.accumulate(*x, &dx);
                self.accumulate(*w, &dw);
                self.accumulate(*b, &db);
            }
            Op::CrossEntropy {
                logits,
                labels,
                classes,
                probs,
            } => {
                let n = labels.len();
                let k = *classes;
                let scale = d_out[0] / n as Real;
                let mut dl = vec![0.0; n * k];
                for ni in 0..n {
                    for ki in 0..k {
                        let onehot = if ki == labels[ni] { 1.0 } else { 0.0 };
                        dl[ni * k + ki] = scale * (probs[ni * k + ki] - onehot);
                    }
                }
                self.accumulate(*logits, &dl);
            }
            Op::BroadcastMul { x, gate, nct } => {
                let Nct { n, c, t } = *nct;
                let xs = self.values(*x).to_vec();
                let gs = self.values(*gate).to_vec();
                let mut dx = vec![0.0; xs.len()];
                let mut dg = vec![0.0; gs.len()];
                for ni in 0..n {
                    for ch in 0..c {
                        let g = gs[ni * c + ch];
                        let base = (ni * c + ch) * t;
                        let mut acc = 0.0;
                        for ti in 0..t {
                            let d = d_out[base + ti];
                            dx[base + ti] = d * g;
                            acc += d * xs[base + ti];
                        }
                        dg[ni * c + ch] = acc;
                    }
                }
                self.accumulate(*x, &dx);
                self.accumulate(*gate, &dg);
            }
            Op::GateScale { x, gates, idx } => {
                let g = self.values(*gates)[*idx];
                let xs = self.values(*x).to_vec();
                let dx: Vec<Real> = d_out.iter().map(|d| d * g).collect();
                let dg: Real = d_out.iter().zip(&xs).map(|(d, x)| d * x).sum();
                self.accumulate(*x, &dx);
                self.accumulate_at(*gates, *idx, dg);
            }
        }
    }
}

impl Tensor {
    /// Gradient buffer, zero-initialised on first touch.
    fn grad_buf(&mut self, n: usize) -> &mut [Real] {
        if self.grad().is_none() {
            self.set_grad(Some(vec![0.0; n]));
        }
        self.grad_mut().unwrap()
    }

    fn grad_mut(&mut self) -> Option<&mut [Real]> {
        match self {
            Tensor { grad: Some(g), .. } => Some(g.as_mut_slice()),
            _ => None,
        }
    }
}

pub(crate) fn sigmoid(v: Real) -> Real {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}
