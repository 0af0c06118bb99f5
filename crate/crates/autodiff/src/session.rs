use std::cell::RefCell;
use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::params::{ParamId, ParamStore};
use crate::real::Real;
use crate::tape::{Gradients, Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// One forward/backward pass: a fresh tape, a read-only view of the
/// parameters, the train/eval mode and a seeded generator for stochastic
/// layers.
pub struct Session<'s, T: Real> {
    tape: Tape<T>,
    store: &'s ParamStore<T>,
    bound: RefCell<HashMap<ParamId, usize>>,
    mode: Mode,
    rng: RefCell<ChaCha8Rng>,
    updates: RefCell<Vec<(ParamId, Tensor<T>)>>,
}

impl<'s, T: Real> Session<'s, T> {
    pub fn new(store: &'s ParamStore<T>, mode: Mode, seed: u64) -> Self {
        Self {
            tape: Tape::new(),
            store,
            bound: RefCell::new(HashMap::new()),
            mode,
            rng: RefCell::new(ChaCha8Rng::seed_from_u64(seed)),
            updates: RefCell::new(Vec::new()),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn is_train(&self) -> bool {
        self.mode == Mode::Train
    }

    pub fn tape(&self) -> &Tape<T> {
        &self.tape
    }

    pub fn store(&self) -> &'s ParamStore<T> {
        self.store
    }

    /// Binds a parameter onto the tape; repeated calls return the same node.
    pub fn param(&self, id: ParamId) -> Var<'_, T> {
        if let Some(&node) = self.bound.borrow().get(&id) {
            return Var { tape: &self.tape, id: node };
        }
        let p = self.store.get(id);
        let v = self.tape.leaf(p.value.clone(), p.trainable);
        self.bound.borrow_mut().insert(id, v.id);
        v
    }

    pub fn input(&self, t: Tensor<T>) -> Var<'_, T> {
        self.tape.constant(t)
    }

    /// An input that receives a gradient.
    pub fn variable(&self, t: Tensor<T>) -> Var<'_, T> {
        self.tape.leaf(t, true)
    }

    pub fn with_rng<R>(&self, f: impl FnOnce(&mut ChaCha8Rng) -> R) -> R {
        f(&mut self.rng.borrow_mut())
    }

    pub(crate) fn push_update(&self, id: ParamId, t: Tensor<T>) {
        self.updates.borrow_mut().push((id, t));
    }

    /// Buffer updates produced in train mode (running statistics).
    pub fn take_updates(&self) -> Vec<(ParamId, Tensor<T>)> {
        std::mem::take(&mut self.updates.borrow_mut())
    }

    pub fn backward(&self, loss: Var<'_, T>) -> Result<ParamGrads<T>> {
        let all = self.tape.backward(loss)?;
        let mut params: Vec<(ParamId, Tensor<T>)> = self
            .bound
            .borrow()
            .iter()
            .filter(|(id, _)| self.store.get(**id).trainable)
            .map(|(&id, &node)| (id, all.wrt_id(node)))
            .collect();
        params.sort_by_key(|(id, _)| *id);
        Ok(ParamGrads { params, all })
    }
}

/// Gradients of one backward pass, keyed by parameter.
pub struct ParamGrads<T> {
    params: Vec<(ParamId, Tensor<T>)>,
    all: Gradients<T>,
}

impl<T: Real> ParamGrads<T> {
    pub fn get(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.params.iter().find(|(p, _)| *p == id).map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor<T>)> {
        self.params.iter().map(|(id, t)| (*id, t))
    }

    /// Gradient with respect to any recorded value, such as a
    /// [`Session::variable`] input.
    pub fn wrt(&self, v: Var<'_, T>) -> Tensor<T> {
        self.all.wrt(v)
    }
}
