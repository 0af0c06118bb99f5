use std::rc::Rc;

use crate::error::{shape_err, Result};
use crate::ops::Op;
use crate::real::Real;
use crate::tape::Var;
use crate::tensor::Tensor;

pub(crate) fn l2_normalize_backward<T: Real>(y: &Tensor<T>, norms: &[T], g: &[T]) -> Vec<T> {
    let d = y.dim(1);
    let mut dx = vec![T::zero(); y.numel()];
    for (r, &nrm) in norms.iter().enumerate() {
        let yr = &y.data()[r * d..(r + 1) * d];
        let gr = &g[r * d..(r + 1) * d];
        let dot: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
        for c in 0..d {
            dx[r * d + c] = (gr[c] - yr[c] * dot) / nrm;
        }
    }
    dx
}

pub(crate) fn masked_log_softmax_backward<T: Real>(out: &Tensor<T>, mask: &[bool], g: &[T]) -> Vec<T> {
    let n = out.dim(1);
    let mut dx = vec![T::zero(); out.numel()];
    for r in 0..out.dim(0) {
        let row = r * n..(r + 1) * n;
        let gsum: T = g[row.clone()].iter().zip(&mask[row.clone()]).filter(|(_, &m)| m).map(|(&v, _)| v).sum();
        for k in row {
            if mask[k] {
                dx[k] = g[k] - out.data()[k].exp() * gsum;
            }
        }
    }
    dx
}

impl<'t, T: Real> Var<'t, T> {
    /// Divides every row by its Euclidean norm.
    pub fn l2_normalize_rows(&self) -> Result<Var<'t, T>> {
        let x = self.value();
        if x.shape().len() != 2 {
            return shape_err("l2_normalize_rows", format!("expected 2-D, got {:?}", x.shape()));
        }
        let d = x.dim(1);
        let mut norms = Vec::with_capacity(x.dim(0));
        let mut out = Vec::with_capacity(x.numel());
        for row in x.data().chunks(d) {
            let nrm = row.iter().map(|&v| v * v).sum::<T>().sqrt().max(T::of(1e-12));
            norms.push(nrm);
            out.extend(row.iter().map(|&v| v / nrm));
        }
        let t = Tensor::new(x.shape().to_vec(), out)?;
        Ok(self.tape.push(t, Op::L2NormalizeRows { x: self.id, norms }))
    }

    /// Row-wise log-softmax restricted to entries where `mask` is true.
    /// Masked-out entries are 0 and receive no gradient.
    pub fn masked_log_softmax_rows(&self, mask: Rc<Vec<bool>>) -> Result<Var<'t, T>> {
        let x = self.value();
        if x.shape().len() != 2 || mask.len() != x.numel() {
            return shape_err("masked_log_softmax_rows", format!("mask of {} for shape {:?}", mask.len(), x.shape()));
        }
        let n = x.dim(1);
        let mut out = vec![T::zero(); x.numel()];
        for r in 0..x.dim(0) {
            let row = r * n..(r + 1) * n;
            let mx = row.clone().filter(|&k| mask[k]).map(|k| x.data()[k]).fold(T::neg_infinity(), T::max);
            if mx == T::neg_infinity() {
                continue;
            }
            let lse = mx + row.clone().filter(|&k| mask[k]).map(|k| (x.data()[k] - mx).exp()).sum::<T>().ln();
            for k in row.filter(|&k| mask[k]) {
                out[k] = x.data()[k] - lse;
            }
        }
        let t = Tensor::new(x.shape().to_vec(), out)?;
        Ok(self.tape.push(t, Op::MaskedLogSoftmaxRows { x: self.id, mask }))
    }

    /// Mean softmax cross-entropy of `[m, C]` logits against class ids.
    pub fn cross_entropy(&self, labels: Rc<Vec<usize>>) -> Result<Var<'t, T>> {
        let x = self.value();
        if x.shape().len() != 2 || x.dim(0) != labels.len() || labels.is_empty() {
            return shape_err("cross_entropy", format!("{} labels for logits {:?}", labels.len(), x.shape()));
        }
        let c = x.dim(1);
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return shape_err("cross_entropy", format!("label {bad} out of range for {c} classes"));
        }
        let mut probs = Vec::with_capacity(x.numel());
        let mut total = 0.0f64;
        for (row, &l) in x.data().chunks(c).zip(labels.iter()) {
            let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
            let z: T = row.iter().map(|&v| (v - mx).exp()).sum();
            total += (z.ln() + mx - row[l]).as_f64();
            probs.extend(row.iter().map(|&v| (v - mx).exp() / z));
        }
        let loss = T::of(total / labels.len() as f64);
        Ok(self.tape.push(Tensor::scalar(loss), Op::CrossEntropy { logits: self.id, labels, probs }))
    }

    /// `sum_k w[k] * self[k]` with constant weights.
    pub fn weighted_sum(&self, w: Rc<Vec<T>>) -> Result<Var<'t, T>> {
        let x = self.value();
        if w.len() != x.numel() {
            return shape_err("weighted_sum", format!("{} weights for {} elements", w.len(), x.numel()));
        }
        let s = x.data().iter().zip(w.iter()).map(|(&a, &b)| a * b).sum();
        Ok(self.tape.push(Tensor::scalar(s), Op::WeightedSum { x: self.id, w }))
    }
}
