//! Row-indexed operations used for message passing on edge lists.

use std::rc::Rc;

use crate::error::{shape_err, Result};
use crate::ops::Op;
use crate::real::Real;
use crate::tape::Var;
use crate::tensor::Tensor;

pub(crate) fn gather<T: Real>(x: &[T], idx: &[usize], d: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(idx.len() * d);
    for &i in idx {
        out.extend_from_slice(&x[i * d..(i + 1) * d]);
    }
    out
}

pub(crate) fn scatter_add<T: Real>(x: &[T], idx: &[usize], d: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n * d];
    for (e, &i) in idx.iter().enumerate() {
        let dst = &mut out[i * d..(i + 1) * d];
        for (o, &v) in dst.iter_mut().zip(&x[e * d..(e + 1) * d]) {
            *o += v;
        }
    }
    out
}

pub(crate) fn repeat_cols<T: Real>(x: &[T], f: usize) -> Vec<T> {
    x.iter().flat_map(|&v| std::iter::repeat_n(v, f)).collect()
}

pub(crate) fn sum_groups<T: Real>(x: &[T], f: usize) -> Vec<T> {
    x.chunks(f).map(|c| c.iter().copied().sum()).collect()
}

pub(crate) fn segment_softmax_backward<T: Real>(y: &Tensor<T>, seg: &[usize], g: &[T]) -> Vec<T> {
    let h = y.dim(1);
    let n = seg.iter().max().map_or(0, |m| m + 1);
    let mut s = vec![T::zero(); n * h];
    for (e, &sg) in seg.iter().enumerate() {
        for c in 0..h {
            s[sg * h + c] += y.data()[e * h + c] * g[e * h + c];
        }
    }
    let mut dx = vec![T::zero(); y.numel()];
    for (e, &sg) in seg.iter().enumerate() {
        for c in 0..h {
            let k = e * h + c;
            dx[k] = y.data()[k] * (g[k] - s[sg * h + c]);
        }
    }
    dx
}

impl<'t, T: Real> Var<'t, T> {
    fn rows_and_width(&self, op: &'static str) -> Result<(usize, usize)> {
        let s = self.shape();
        if s.len() != 2 {
            return shape_err(op, format!("expected 2-D input, got {s:?}"));
        }
        Ok((s[0], s[1]))
    }

    /// `out[e] = self[idx[e]]`.
    pub fn gather_rows(&self, idx: Rc<Vec<usize>>) -> Result<Var<'t, T>> {
        let (n, d) = self.rows_and_width("gather_rows")?;
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return shape_err("gather_rows", format!("row index {bad} out of range for {n} rows"));
        }
        let out = gather(self.value().data(), &idx, d);
        let t = Tensor::new(vec![idx.len(), d], out)?;
        Ok(self.tape.push(t, Op::GatherRows { x: self.id, idx }))
    }

    /// `out[idx[e]] += self[e]` into `n` zero-initialized rows.
    pub fn scatter_add_rows(&self, idx: Rc<Vec<usize>>, n: usize) -> Result<Var<'t, T>> {
        let (e, d) = self.rows_and_width("scatter_add_rows")?;
        if idx.len() != e {
            return shape_err("scatter_add_rows", format!("{} indices for {e} rows", idx.len()));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return shape_err("scatter_add_rows", format!("target row {bad} out of range for {n} rows"));
        }
        let out = scatter_add(self.value().data(), &idx, d, n);
        let t = Tensor::new(vec![n, d], out)?;
        Ok(self.tape.push(t, Op::ScatterAddRows { x: self.id, idx }))
    }

    /// Multiplies row `i` by the constant `f[i]`.
    pub fn scale_rows(&self, f: Rc<Vec<T>>) -> Result<Var<'t, T>> {
        let (n, d) = self.rows_and_width("scale_rows")?;
        if f.len() != n {
            return shape_err("scale_rows", format!("{} factors for {n} rows", f.len()));
        }
        let x = self.value();
        let out = x.data().iter().enumerate().map(|(k, &v)| v * f[k / d]).collect();
        Ok(self.tape.push(Tensor::new(vec![n, d], out)?, Op::ScaleRows { x: self.id, f }))
    }

    /// First `len` rows.
    pub fn narrow_rows(&self, len: usize) -> Result<Var<'t, T>> {
        let x = self.value();
        let s = x.shape();
        if s.is_empty() || len > s[0] {
            return shape_err("narrow_rows", format!("cannot take {len} rows of {s:?}"));
        }
        let inner: usize = s[1..].iter().product();
        let mut shape = s.to_vec();
        shape[0] = len;
        let t = Tensor::new(shape, x.data()[..len * inner].to_vec())?;
        Ok(self.tape.push(t, Op::NarrowRows { x: self.id }))
    }

    /// Column-wise softmax over groups of rows sharing a segment id.
    pub fn segment_softmax(&self, seg: Rc<Vec<usize>>) -> Result<Var<'t, T>> {
        let (e, h) = self.rows_and_width("segment_softmax")?;
        if seg.len() != e {
            return shape_err("segment_softmax", format!("{} segment ids for {e} rows", seg.len()));
        }
        let n = seg.iter().max().map_or(0, |m| m + 1);
        let x = self.value();
        let mut mx = vec![T::neg_infinity(); n * h];
        for (r, &s) in seg.iter().enumerate() {
            for c in 0..h {
                let v = x.data()[r * h + c];
                if v > mx[s * h + c] {
                    mx[s * h + c] = v;
                }
            }
        }
        let mut out: Vec<T> = Vec::with_capacity(e * h);
        let mut den = vec![T::zero(); n * h];
        for (r, &s) in seg.iter().enumerate() {
            for c in 0..h {
                let v = (x.data()[r * h + c] - mx[s * h + c]).exp();
                den[s * h + c] += v;
                out.push(v);
            }
        }
        for (r, &s) in seg.iter().enumerate() {
            for c in 0..h {
                out[r * h + c] /= den[s * h + c];
            }
        }
        Ok(self.tape.push(Tensor::new(vec![e, h], out)?, Op::SegmentSoftmax { x: self.id, seg }))
    }

    /// `[m, h] -> [m, h * f]`, repeating every column `f` times in place.
    pub fn repeat_cols(&self, f: usize) -> Result<Var<'t, T>> {
        let (m, h) = self.rows_and_width("repeat_cols")?;
        let out = repeat_cols(self.value().data(), f);
        Ok(self.tape.push(Tensor::new(vec![m, h * f], out)?, Op::RepeatCols { x: self.id, f }))
    }

    /// `[m, h * f] -> [m, h]`, summing consecutive groups of `f` columns.
    pub fn sum_groups(&self, f: usize) -> Result<Var<'t, T>> {
        let (m, w) = self.rows_and_width("sum_groups")?;
        if f == 0 || w % f != 0 {
            return shape_err("sum_groups", format!("width {w} not divisible by group size {f}"));
        }
        let out = sum_groups(self.value().data(), f);
        Ok(self.tape.push(Tensor::new(vec![m, w / f], out)?, Op::SumGroups { x: self.id, f }))
    }

    /// Concatenates 2-D values along columns.
    pub fn concat_cols(parts: &[Var<'t, T>]) -> Result<Var<'t, T>> {
        let Some(first) = parts.first() else {
            return shape_err("concat_cols", "no inputs");
        };
        let rows = first.rows_and_width("concat_cols")?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let (r, w) = p.rows_and_width("concat_cols")?;
            if r != rows {
                return shape_err("concat_cols", format!("row count {r} vs {rows}"));
            }
            widths.push(w);
        }
        let total: usize = widths.iter().sum();
        let vals: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (v, &w) in vals.iter().zip(&widths) {
                out.extend_from_slice(&v.data()[r * w..(r + 1) * w]);
            }
        }
        let t = Tensor::new(vec![rows, total], out)?;
        Ok(first.tape.push(t, Op::ConcatCols { xs: parts.iter().map(|p| p.id).collect() }))
    }
}
