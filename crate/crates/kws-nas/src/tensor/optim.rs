//! Momentum SGD and Adam, operating in place on a store's trainable
//! parameters. State buffers are keyed by trainable-entry order and persist
//! across steps.

use super::{ParamStore, Real, TensorError};

type Result<T> = std::result::Result<T, TensorError>;

pub struct SgdMomentum {
    pub lr: Real,
    pub momentum: Real,
    pub weight_decay: Real,
    velocity: Vec<Vec<Real>>,
}

impl SgdMomentum {
    pub fn new(lr: Real, momentum: Real) -> Self {
        SgdMomentum {
            lr,
            momentum,
            weight_decay: 0.0,
            velocity: Vec::new(),
        }
    }

    pub fn with_weight_decay(mut self, wd: Real) -> Self {
        self.weight_decay = wd;
        self
    }

    /// `v = momentum * v + (g + wd * p); p -= lr * v`, applied to every
    /// trainable entry using the gradient pulled into it.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        let params: Vec<_> = store.trainable_mut().collect();
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|p| vec![0.0; p.numel()]).collect();
        }
        if self.velocity.len() != params.len() {
            return Err(TensorError::OptimizerShape {
                params: params.len(),
                got: self.velocity.len(),
            });
        }
        for (p, v) in params.into_iter().zip(&mut self.velocity) {
            if v.len() != p.numel() {
                return Err(TensorError::OptimizerShape {
                    params: p.numel(),
                    got: v.len(),
                });
            }
            let Some(grad) = p.grad().map(<[Real]>::to_vec) else {
                continue;
            };
            let (lr, mom, wd) = (self.lr, self.momentum, self.weight_decay);
            for ((pv, vv), g) in p.values_mut().iter_mut().zip(v.iter_mut()).zip(grad) {
                let g = g + wd * *pv;
                *vv = mom * *vv + g;
                *pv -= lr * *vv;
            }
        }
        Ok(())
    }
}

pub struct Adam {
    pub lr: Real,
    pub beta1: Real,
    pub beta2: Real,
    pub eps: Real,
    t: u64,
    m: Vec<Vec<Real>>,
    v: Vec<Vec<Real>>,
}

impl Adam {
    pub fn new(lr: Real) -> Self {
        Adam::with_betas(lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(lr: Real, beta1: Real, beta2: Real, eps: Real) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Bias-corrected Adam update on every trainable entry.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        let params: Vec<_> = store.trainable_mut().collect();
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.numel()]).collect();
            self.v = params.iter().map(|p| vec![0.0; p.numel()]).collect();
        }
        if self.m.len() != params.len() {
            return Err(TensorError::OptimizerShape {
                params: params.len(),
                got: self.m.len(),
            });
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, m), v) in params.into_iter().zip(&mut self.m).zip(&mut self.v) {
            if m.len() != p.numel() {
                return Err(TensorError::OptimizerShape {
                    params: p.numel(),
                    got: m.len(),
                });
            }
            let Some(grad) = p.grad().map(<[Real]>::to_vec) else {
                continue;
            };
            for (i, (pv, g)) in p.values_mut().iter_mut().zip(grad).enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                *pv -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{ParamId, Tape, Tensor};

    fn quadratic_grad(store: &mut ParamStore, pid: ParamId) {
        // f(theta) = (theta - 3)^2, via the tape so grads flow as in training.
        store.begin_pass();
        let mut tape = Tape::new();
        let theta = store.bind(&mut tape, pid);
        let shifted = tape.add_scalar(theta, -3.0);
        let sq = tape.mul(shifted, shifted).unwrap();
        let loss = tape.sum(sq);
        tape.backward(loss).unwrap();
        store.pull_grads(&tape);
    }

    #[test]
    fn sgd_zero_momentum_is_plain_descent() {
        let mut store = ParamStore::new();
        let pid = store.add_trainable("p", Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap());
        store
            .trainable_mut()
            .next()
            .unwrap()
            .set_grad(Some(vec![1.0, 2.0, -4.0]));
        let mut opt = SgdMomentum::new(0.1, 0.0);
        opt.step(&mut store).unwrap();
        let p = store.tensor(pid).values();
        assert!((p[0] - 0.9).abs() < 1e-12);
        assert!((p[1] - (-2.2)).abs() < 1e-12);
        assert!((p[2] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn adam_first_step_has_lr_magnitude_and_opposite_sign() {
        let mut store = ParamStore::new();
        let pid = store.add_trainable("p", Tensor::new(vec![2], vec![0.3, -0.7]).unwrap());
        store
            .trainable_mut()
            .next()
            .unwrap()
            .set_grad(Some(vec![5.0, -0.01]));
        let lr = 3e-4;
        let mut opt = Adam::new(lr);
        opt.step(&mut store).unwrap();
        let p = store.tensor(pid).values();
        let d0 = p[0] - 0.3;
        let d1 = p[1] - (-0.7);
        // First-step update is ~lr in magnitude whatever the gradient scale.
        assert!(d0 < 0.0 && (d0.abs() - lr).abs() < lr * 0.05, "d0 = {d0}");
        assert!(d1 > 0.0 && (d1.abs() - lr).abs() < lr * 0.05, "d1 = {d1}");
    }

    #[test]
    fn adam_converges_monotonically_on_quadratic_after_warmup() {
        let mut store = ParamStore::new();
        let pid = store.add_trainable("theta", Tensor::scalar(0.0));
        let mut opt = Adam::new(3e-4);
        let mut dists = Vec::new();
        for _ in 0..200 {
            quadratic_grad(&mut store, pid);
            opt.step(&mut store).unwrap();
            dists.push((store.tensor(pid).values()[0] - 3.0).abs());
        }
        for w in dists[10..].windows(2) {
            assert!(w[1] < w[0], "distance not strictly decreasing: {w:?}");
        }
    }

    #[test]
    fn optimizer_state_persists_and_momentum_accumulates() {
        let mut store = ParamStore::new();
        let pid = store.add_trainable("p", Tensor::scalar(0.0));
        let mut opt = SgdMomentum::new(0.1, 0.9);
        for _ in 0..2 {
            store.trainable_mut().next().unwrap().set_grad(Some(vec![1.0]));
            opt.step(&mut store).unwrap();
        }
        // v1 = 1, p1 = -0.1; v2 = 1.9, p2 = -0.29
        let p = store.tensor(pid).values()[0];
        assert!((p - (-0.29)).abs() < 1e-12, "p = {p}");
    }
}
