use crate::error::{shape_err, Result};
use crate::ops::Op;
use crate::real::Real;
use crate::tape::Var;
use crate::tensor::Tensor;

/// `(channels, inner)` for a `[N, C, ...]` layout.
pub(crate) fn channel_layout(shape: &[usize]) -> (usize, usize) {
    (shape[1], shape[2..].iter().product())
}

/// Per-channel sums of `g` (optionally weighted elementwise by `w`).
pub(crate) fn channel_sums<T: Real>(shape: &[usize], g: &[T], w: Option<&[T]>) -> Vec<T> {
    let (c, inner) = channel_layout(shape);
    let mut out = vec![T::zero(); c];
    for (k, &gv) in g.iter().enumerate() {
        let ch = (k / inner) % c;
        out[ch] += match w {
            Some(w) => gv * w[k],
            None => gv,
        };
    }
    out
}

/// Transposes a row-major `rows x cols` matrix.
pub(crate) fn transpose<T: Real>(d: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); d.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = d[r * cols + c];
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn matmul_backward<T: Real>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    ta: bool,
    tb: bool,
    g: &[T],
    ia: usize,
    ib: usize,
    acc: &mut dyn FnMut(usize, Vec<T>),
) {
    let (m, k) = if ta { (a.dim(1), a.dim(0)) } else { (a.dim(0), a.dim(1)) };
    let n = if tb { b.dim(0) } else { b.dim(1) };
    let mut da = vec![T::zero(); m * k];
    if ta {
        T::gemm(k, n, m, b.data(), tb, g, true, T::zero(), &mut da);
    } else {
        T::gemm(m, n, k, g, false, b.data(), !tb, T::zero(), &mut da);
    }
    acc(ia, da);
    let mut db = vec![T::zero(); k * n];
    if tb {
        T::gemm(n, m, k, g, true, a.data(), ta, T::zero(), &mut db);
    } else {
        T::gemm(k, m, n, a.data(), !ta, g, false, T::zero(), &mut db);
    }
    acc(ib, db);
}

impl<'t, T: Real> Var<'t, T> {
    fn unary(&self, f: impl Fn(T) -> T, op: Op<T>) -> Var<'t, T> {
        let x = self.value();
        let data = x.data().iter().map(|&v| f(v)).collect();
        let out = Tensor::new(x.shape().to_vec(), data).expect("unary shape");
        self.tape.push(out, op)
    }

    fn same_shape(&self, other: &Var<'t, T>, op: &'static str) -> Result<()> {
        let (a, b) = (self.shape(), other.shape());
        if a != b {
            return shape_err(op, format!("left {a:?} vs right {b:?}"));
        }
        Ok(())
    }

    fn zip(&self, other: &Var<'t, T>, name: &'static str, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<Var<'t, T>> {
        self.same_shape(other, name)?;
        let (a, b) = (self.value(), other.value());
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        Ok(self.tape.push(Tensor::new(a.shape().to_vec(), data)?, op))
    }

    /// Matrix product of 2-D values.
    pub fn matmul(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        self.matmul_t(other, false, false)
    }

    /// `op(self) @ op(other)` where `op` transposes when the flag is set.
    pub fn matmul_t(&self, other: &Var<'t, T>, ta: bool, tb: bool) -> Result<Var<'t, T>> {
        let (a, b) = (self.value(), other.value());
        if a.shape().len() != 2 || b.shape().len() != 2 {
            return shape_err("matmul", format!("operands must be 2-D, got {:?} and {:?}", a.shape(), b.shape()));
        }
        let (m, k) = if ta { (a.dim(1), a.dim(0)) } else { (a.dim(0), a.dim(1)) };
        let (k2, n) = if tb { (b.dim(1), b.dim(0)) } else { (b.dim(0), b.dim(1)) };
        if k != k2 {
            return shape_err("matmul", format!("inner dimension {k} vs {k2}"));
        }
        let mut c = vec![T::zero(); m * n];
        T::gemm(m, k, n, a.data(), ta, b.data(), tb, T::zero(), &mut c);
        Ok(self.tape.push(Tensor::new(vec![m, n], c)?, Op::MatMul { a: self.id, b: other.id, ta, tb }))
    }

    pub fn add(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        self.zip(other, "add", |a, b| a + b, Op::Add { a: self.id, b: other.id })
    }

    pub fn sub(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        self.zip(other, "sub", |a, b| a - b, Op::Sub { a: self.id, b: other.id })
    }

    pub fn mul(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        self.zip(other, "mul", |a, b| a * b, Op::Mul { a: self.id, b: other.id })
    }

    fn channel_check(&self, v: &Var<'t, T>, name: &'static str) -> Result<(usize, usize)> {
        let xs = self.shape();
        let vs = v.shape();
        if xs.len() < 2 {
            return shape_err(name, format!("input must be at least 2-D, got {xs:?}"));
        }
        if vs.len() != 1 || vs[0] != xs[1] {
            return shape_err(name, format!("channel vector {vs:?} does not match dimension 1 of {xs:?}"));
        }
        Ok(channel_layout(&xs))
    }

    /// Broadcast-add a per-channel vector along dimension 1.
    pub fn add_channel(&self, b: &Var<'t, T>) -> Result<Var<'t, T>> {
        let (c, inner) = self.channel_check(b, "add_channel")?;
        let (x, bv) = (self.value(), b.value());
        let data = x.data().iter().enumerate().map(|(k, &v)| v + bv.data()[(k / inner) % c]).collect();
        Ok(self.tape.push(Tensor::new(x.shape().to_vec(), data)?, Op::AddChannel { x: self.id, b: b.id }))
    }

    /// Broadcast-multiply by a per-channel vector along dimension 1.
    pub fn mul_channel(&self, s: &Var<'t, T>) -> Result<Var<'t, T>> {
        let (c, inner) = self.channel_check(s, "mul_channel")?;
        let (x, sv) = (self.value(), s.value());
        let data = x.data().iter().enumerate().map(|(k, &v)| v * sv.data()[(k / inner) % c]).collect();
        Ok(self.tape.push(Tensor::new(x.shape().to_vec(), data)?, Op::MulChannel { x: self.id, s: s.id }))
    }

    pub fn scale(&self, c: T) -> Var<'t, T> {
        self.unary(|v| v * c, Op::Scale { x: self.id, c })
    }

    pub fn add_scalar(&self, c: T) -> Var<'t, T> {
        self.unary(|v| v + c, Op::AddScalar { x: self.id })
    }

    pub fn relu(&self) -> Var<'t, T> {
        self.unary(|v| if v > T::zero() { v } else { T::zero() }, Op::Relu { x: self.id })
    }

    pub fn leaky_relu(&self, slope: T) -> Var<'t, T> {
        self.unary(move |v| if v > T::zero() { v } else { v * slope }, Op::LeakyRelu { x: self.id, slope })
    }

    pub fn exp(&self) -> Var<'t, T> {
        self.unary(|v| v.exp(), Op::Exp { x: self.id })
    }

    pub fn ln(&self) -> Var<'t, T> {
        self.unary(|v| v.ln(), Op::Log { x: self.id })
    }

    pub fn sum(&self) -> Var<'t, T> {
        let s = self.value().data().iter().copied().sum();
        self.tape.push(Tensor::scalar(s), Op::Sum { x: self.id })
    }

    pub fn mean(&self) -> Var<'t, T> {
        let x = self.value();
        let s: T = x.data().iter().copied().sum();
        let m = s / T::of(x.numel().max(1) as f64);
        self.tape.push(Tensor::scalar(m), Op::Mean { x: self.id })
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'t, T>> {
        let x = (*self.value()).clone().reshaped(shape)?;
        Ok(self.tape.push(x, Op::Reshape { x: self.id }))
    }

    /// Transpose of a 2-D value.
    pub fn transpose(&self) -> Result<Var<'t, T>> {
        let x = self.value();
        if x.shape().len() != 2 {
            return shape_err("transpose", format!("expected 2-D, got {:?}", x.shape()));
        }
        let (r, c) = (x.dim(0), x.dim(1));
        let mut data = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = x.data()[i * c + j];
            }
        }
        Ok(self.tape.push(Tensor::new(vec![c, r], data)?, Op::Transpose { x: self.id }))
    }
}
