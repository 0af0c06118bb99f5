//! Momentum optimizers.
//!
//! Both rules keep one momentum buffer per trainable parameter and read the
//! gradients accumulated in the [`ParamStore`].

use crate::params::{ParamId, ParamStore};
use crate::real::Real;

pub trait Optimizer<T: Real> {
    fn step(&mut self, store: &mut ParamStore<T>);
    fn learning_rate(&self) -> f64;
}

/// Per-parameter momentum buffers.
#[derive(Clone, Debug, Default)]
pub struct OptimizerState<T> {
    buffers: Vec<Option<Vec<T>>>,
}

impl<T: Real> OptimizerState<T> {
    fn buffer(&mut self, id: ParamId, len: usize) -> &mut Vec<T> {
        if self.buffers.len() <= id.0 {
            self.buffers.resize(id.0 + 1, None);
        }
        self.buffers[id.0].get_or_insert_with(|| vec![T::zero(); len])
    }

    pub fn get(&self, id: ParamId) -> Option<&[T]> {
        self.buffers.get(id.0).and_then(|b| b.as_deref())
    }
}

/// SGD with Nesterov momentum in the lookahead form:
/// `b <- mu * b + g`, `w <- w - lr * (mu * b + g)`.
#[derive(Clone, Debug)]
pub struct SgdNesterov<T> {
    pub lr: f64,
    pub momentum: f64,
    pub state: OptimizerState<T>,
}

impl<T: Real> SgdNesterov<T> {
    pub fn new(lr: f64, momentum: f64) -> Self {
        Self { lr, momentum, state: OptimizerState { buffers: Vec::new() } }
    }
}

impl<T: Real> Optimizer<T> for SgdNesterov<T> {
    fn step(&mut self, store: &mut ParamStore<T>) {
        let (lr, mu) = (T::of(self.lr), T::of(self.momentum));
        let ids: Vec<ParamId> = store.iter().filter(|(_, p)| p.trainable).map(|(id, _)| id).collect();
        for id in ids {
            let p = store.get_mut(id);
            let buf = self.state.buffer(id, p.value.numel());
            for ((w, &g), b) in p.value.data_mut().iter_mut().zip(p.grad.data()).zip(buf.iter_mut()) {
                *b = mu * *b + g;
                *w -= lr * (mu * *b + g);
            }
        }
    }

    fn learning_rate(&self) -> f64 {
        self.lr
    }
}

/// Layer-wise adaptive rate scaling.
///
/// Per parameter tensor: `trust = eta * |w| / (|g| + wd * |w|)` (1 when either
/// norm vanishes), `v <- mu * v + lr * trust * (g + wd * w)`, `w <- w - v`.
#[derive(Clone, Debug)]
pub struct Lars<T> {
    pub lr: f64,
    pub momentum: f64,
    pub trust_coefficient: f64,
    pub weight_decay: f64,
    pub state: OptimizerState<T>,
}

impl<T: Real> Lars<T> {
    pub const DEFAULT_TRUST: f64 = 0.001;

    pub fn new(lr: f64, momentum: f64) -> Self {
        Self { lr, momentum, trust_coefficient: Self::DEFAULT_TRUST, weight_decay: 0.0, state: OptimizerState { buffers: Vec::new() } }
    }

    pub fn with_trust(mut self, eta: f64) -> Self {
        self.trust_coefficient = eta;
        self
    }

    pub fn with_weight_decay(mut self, wd: f64) -> Self {
        self.weight_decay = wd;
        self
    }

    pub fn trust_ratio(&self, w_norm: f64, g_norm: f64) -> f64 {
        if w_norm > 0.0 && g_norm > 0.0 {
            self.trust_coefficient * w_norm / (g_norm + self.weight_decay * w_norm)
        } else {
            1.0
        }
    }
}

impl<T: Real> Optimizer<T> for Lars<T> {
    fn step(&mut self, store: &mut ParamStore<T>) {
        let mu = T::of(self.momentum);
        let wd = T::of(self.weight_decay);
        let ids: Vec<ParamId> = store.iter().filter(|(_, p)| p.trainable).map(|(id, _)| id).collect();
        for id in ids {
            let p = store.get_mut(id);
            let w_norm = p.value.sq_norm().sqrt();
            let g_norm = p.grad.sq_norm().sqrt();
            let local = T::of(self.lr * self.trust_ratio(w_norm, g_norm));
            let buf = self.state.buffer(id, p.value.numel());
            for ((w, &g), v) in p.value.data_mut().iter_mut().zip(p.grad.data()).zip(buf.iter_mut()) {
                *v = mu * *v + local * (g + wd * *w);
                *w -= *v;
            }
        }
    }

    fn learning_rate(&self) -> f64 {
        self.lr
    }
}
