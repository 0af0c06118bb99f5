//! Layer vocabulary used by the patch encoders and the graph models.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{AutodiffError, Result};
use crate::ops::conv::window_out;
use crate::ops::norm::NormStats;
use crate::params::{ParamId, ParamStore};
use crate::real::Real;
use crate::session::Session;
use crate::tape::Var;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// No padding.
    Valid,
    /// Zero padding of `k / 2` on every side.
    Zero,
}

/// Declarative description of one layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d { k: usize, c: usize, s: usize, padding: Padding, bias: bool },
    FullyConnected { d: usize, bias: bool },
    BatchNorm,
    Relu,
    MaxPool { k: usize, s: usize },
    GlobalAvgPool,
    Dropout { p: f64 },
}

impl LayerSpec {
    pub fn conv(k: usize, c: usize, s: usize, padding: Padding) -> Self {
        LayerSpec::Conv2d { k, c, s, padding, bias: false }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AutodiffError::InvalidSpec(m));
        match *self {
            LayerSpec::Conv2d { k, c, s, .. } if k == 0 || c == 0 || s == 0 => {
                bad(format!("conv2d needs positive k, c, s (got {k}, {c}, {s})"))
            }
            LayerSpec::FullyConnected { d: 0, .. } => bad("fully-connected width must be positive".into()),
            LayerSpec::MaxPool { k, s } if k == 0 || s == 0 => bad(format!("max-pool needs positive k, s (got {k}, {s})")),
            LayerSpec::Dropout { p } if !(0.0..1.0).contains(&p) => bad(format!("dropout probability {p} outside [0, 1)")),
            _ => Ok(()),
        }
    }

    /// Output shape (without batch dimension) for an input of shape `input`
    /// (`[C, H, W]` or `[D]`).
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        self.validate()?;
        let spatial = |what: &str| -> Result<(usize, usize, usize)> {
            match input {
                [c, h, w] => Ok((*c, *h, *w)),
                _ => Err(AutodiffError::Shape { op: "layer", detail: format!("{what} needs [C, H, W] input, got {input:?}") }),
            }
        };
        match *self {
            LayerSpec::Conv2d { k, c, s, padding, .. } => {
                let (_, h, w) = spatial("conv2d")?;
                let p = if padding == Padding::Zero { k / 2 } else { 0 };
                match (window_out(h, k, s, p), window_out(w, k, s, p)) {
                    (Some(ho), Some(wo)) => Ok(vec![c, ho, wo]),
                    _ => Err(AutodiffError::Shape {
                        op: "conv2d",
                        detail: format!("spatial extent {h}x{w} too small for kernel {k} (padding {p})"),
                    }),
                }
            }
            LayerSpec::MaxPool { k, s } => {
                let (c, h, w) = spatial("max_pool")?;
                match (window_out(h, k, s, 0), window_out(w, k, s, 0)) {
                    (Some(ho), Some(wo)) => Ok(vec![c, ho, wo]),
                    _ => Err(AutodiffError::Shape { op: "max_pool", detail: format!("spatial extent {h}x{w} smaller than pool {k}") }),
                }
            }
            LayerSpec::GlobalAvgPool => Ok(vec![spatial("global_avg_pool")?.0]),
            LayerSpec::FullyConnected { d, .. } => Ok(vec![d]),
            LayerSpec::BatchNorm | LayerSpec::Relu | LayerSpec::Dropout { .. } => Ok(input.to_vec()),
        }
    }
}

/// Fully connected layer `y = x W + b` with `W: [in, out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, din: usize, dout: usize, bias: bool, rng: &mut impl Rng) -> Self {
        let w = store.add(format!("{name}.weight"), he_normal(&[din, dout], din, rng), true);
        let b = bias.then(|| store.add(format!("{name}.bias"), Tensor::zeros(&[dout]), true));
        Self { w, b }
    }

    pub fn forward<'a, T: Real>(&self, sess: &'a Session<'_, T>, x: Var<'a, T>) -> Result<Var<'a, T>> {
        let y = x.matmul(&sess.param(self.w))?;
        match self.b {
            Some(b) => y.add_channel(&sess.param(b)),
            None => Ok(y),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = cin * k * k;
        let w = store.add(format!("{name}.weight"), he_normal(&[cout, cin, k, k], fan_in, rng), true);
        let b = bias.then(|| store.add(format!("{name}.bias"), Tensor::zeros(&[cout]), true));
        Self { w, b, stride, pad }
    }

    pub fn forward<'a, T: Real>(&self, sess: &'a Session<'_, T>, x: Var<'a, T>) -> Result<Var<'a, T>> {
        let y = x.conv2d(&sess.param(self.w), self.stride, self.pad)?;
        match self.b {
            Some(b) => y.add_channel(&sess.param(b)),
            None => Ok(y),
        }
    }
}

/// Batch normalization over dimension 1 with running statistics updated by an
/// exponential moving average.
#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    pub const MOMENTUM: f64 = 0.1;
    pub const EPS: f64 = 1e-5;

    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, c: usize) -> Self {
        Self {
            gamma: store.add(format!("{name}.gamma"), Tensor::full(&[c], T::one()), true),
            beta: store.add(format!("{name}.beta"), Tensor::zeros(&[c]), true),
            running_mean: store.add(format!("{name}.running_mean"), Tensor::zeros(&[c]), false),
            running_var: store.add(format!("{name}.running_var"), Tensor::full(&[c], T::one()), false),
            momentum: Self::MOMENTUM,
            eps: Self::EPS,
        }
    }

    pub fn forward<'a, T: Real>(&self, sess: &'a Session<'_, T>, x: Var<'a, T>) -> Result<Var<'a, T>> {
        let (gamma, beta) = (sess.param(self.gamma), sess.param(self.beta));
        let eps = T::of(self.eps);
        if sess.is_train() {
            let (y, stats) = x.batch_norm(&gamma, &beta, NormStats::Batch, eps)?;
            let (mean, var) = stats.expect("batch statistics");
            let m = T::of(self.momentum);
            for (id, batch) in [(self.running_mean, mean), (self.running_var, var)] {
                let old = sess.store().value(id);
                let data = old.data().iter().zip(&batch).map(|(&o, &b)| (T::one() - m) * o + m * b).collect();
                sess.push_update(id, Tensor::new(old.shape().to_vec(), data)?);
            }
            Ok(y)
        } else {
            let store = sess.store();
            let stats = NormStats::Fixed { mean: store.value(self.running_mean).data(), var: store.value(self.running_var).data() };
            Ok(x.batch_norm(&gamma, &beta, stats, eps)?.0)
        }
    }
}

/// Inverted dropout: surviving values are scaled by `1 / (1 - p)` in train
/// mode; identity in eval mode.
pub fn dropout<'a, T: Real>(sess: &'a Session<'_, T>, x: Var<'a, T>, p: f64) -> Result<Var<'a, T>> {
    if !sess.is_train() || p == 0.0 {
        return Ok(x);
    }
    let shape = x.shape();
    let n: usize = shape.iter().product();
    let keep = 1.0 - p;
    let scale = T::of(1.0 / keep);
    let mask: Vec<T> = sess.with_rng(|rng| (0..n).map(|_| if rng.random::<f64>() < keep { scale } else { T::zero() }).collect());
    x.mul(&sess.input(Tensor::new(shape, mask)?))
}

/// Adds zero-mean Gaussian noise in train mode.
pub fn gaussian_noise<'a, T: Real>(sess: &'a Session<'_, T>, x: Var<'a, T>, std: f64) -> Result<Var<'a, T>> {
    if !sess.is_train() || std == 0.0 {
        return Ok(x);
    }
    let shape = x.shape();
    let n: usize = shape.iter().product();
    let normal = Normal::new(0.0, std).expect("finite std");
    let noise: Vec<T> = sess.with_rng(|rng| (0..n).map(|_| T::of(normal.sample(rng))).collect());
    x.add(&sess.input(Tensor::new(shape, noise)?))
}

pub fn he_normal<T: Real>(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor<T> {
    let std = (2.0 / fan_in.max(1) as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("finite std");
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| T::of(normal.sample(rng))).collect()).expect("init shape")
}

/// A built layer holding its parameter handles.
#[derive(Clone, Debug)]
pub enum Layer {
    Conv2d(Conv2d),
    Linear(Linear),
    BatchNorm(BatchNorm),
    Relu,
    MaxPool { k: usize, s: usize },
    GlobalAvgPool,
    Dropout { p: f64 },
}

impl Layer {
    /// Instantiates `spec` for an input with `cin` channels (or features);
    /// returns the layer and its output channel count.
    pub fn build<T: Real>(spec: &LayerSpec, cin: usize, store: &mut ParamStore<T>, name: &str, rng: &mut impl Rng) -> Result<(Layer, usize)> {
        spec.validate()?;
        Ok(match *spec {
            LayerSpec::Conv2d { k, c, s, padding, bias } => {
                let pad = if padding == Padding::Zero { k / 2 } else { 0 };
                (Layer::Conv2d(Conv2d::new(store, name, cin, c, k, s, pad, bias, rng)), c)
            }
            LayerSpec::FullyConnected { d, bias } => (Layer::Linear(Linear::new(store, name, cin, d, bias, rng)), d),
            LayerSpec::BatchNorm => (Layer::BatchNorm(BatchNorm::new(store, name, cin)), cin),
            LayerSpec::Relu => (Layer::Relu, cin),
            LayerSpec::MaxPool { k, s } => (Layer::MaxPool { k, s }, cin),
            LayerSpec::GlobalAvgPool => (Layer::GlobalAvgPool, cin),
            LayerSpec::Dropout { p } => (Layer::Dropout { p }, cin),
        })
    }

    pub fn forward<'a, T: Real>(&self, sess: &'a Session<'_, T>, x: Var<'a, T>) -> Result<Var<'a, T>> {
        match self {
            Layer::Conv2d(c) => c.forward(sess, x),
            Layer::Linear(l) => l.forward(sess, x),
            Layer::BatchNorm(b) => b.forward(sess, x),
            Layer::Relu => Ok(x.relu()),
            Layer::MaxPool { k, s } => x.max_pool2d(*k, *s),
            Layer::GlobalAvgPool => x.global_avg_pool(),
            Layer::Dropout { p } => dropout(sess, x, *p),
        }
    }
}
