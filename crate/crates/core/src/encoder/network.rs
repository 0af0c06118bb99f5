use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use cyto_autodiff::layers::{BatchNorm, Conv2d, Linear};
use cyto_autodiff::{window_out, LayerSpec, Padding, ParamStore, Real, Session, Var};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Base,
    Res,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub architecture: Architecture,
    /// Channel multiplier: 1 for the standard widths, 2 for the wide variants.
    pub width: usize,
    pub patch_side: usize,
    pub proj_dim: usize,
    pub tau: f64,
    /// Batch norm after each convolution of `base` (always used by `res`).
    pub base_batch_norm: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { architecture: Architecture::Res, width: 1, patch_side: 64, proj_dim: 128, tau: 0.07, base_batch_norm: true }
    }
}

impl EncoderConfig {
    /// Embedding width `D_e` at the global average pool.
    pub fn embed_dim(&self) -> usize {
        128 * self.width
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.proj_dim == 0 {
            return Err(Error::Config("encoder width multiplier and projection width must be positive".into()));
        }
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("temperature must be positive, got {}", self.tau)));
        }
        let rows = self.rows();
        let mut side = self.patch_side;
        if side == 0 {
            return Err(Error::Config("patch side must be positive".into()));
        }
        for (name, spec) in &rows {
            let (k, s, p) = match *spec {
                LayerSpec::Conv2d { k, s, padding, .. } => (k, s, if padding == Padding::Zero { k / 2 } else { 0 }),
                LayerSpec::MaxPool { k, s } => (k, s, 0),
                _ => continue,
            };
            side = window_out(side, k, s, p).ok_or_else(|| {
                Error::Config(format!(
                    "patch side {} too small: layer {name} receives {side}x{side}, kernel {k}",
                    self.patch_side
                ))
            })?;
        }
        Ok(())
    }

    /// Named layer rows of the convolutional stack and projection head, in
    /// order (residual shortcuts excluded).
    pub fn rows(&self) -> Vec<(String, LayerSpec)> {
        let w = self.width;
        let mut rows = Vec::new();
        let conv = |k, c, s, pad| LayerSpec::conv(k, c * w, s, pad);
        match self.architecture {
            Architecture::Base => {
                let v = Padding::Valid;
                rows.push(("conv_1_1".into(), conv(5, 16, 4, v)));
                rows.push(("conv_1_2".into(), conv(3, 16, 1, v)));
                rows.push(("pool_1".into(), LayerSpec::MaxPool { k: 2, s: 2 }));
                for (stage, c) in [(2, 32), (3, 64), (4, 64), (5, 128), (6, 128)] {
                    rows.push((format!("conv_{stage}_1"), conv(3, c, 1, v)));
                    rows.push((format!("conv_{stage}_2"), conv(3, c, 1, v)));
                    if stage < 6 {
                        rows.push((format!("pool_{stage}"), LayerSpec::MaxPool { k: 2, s: 2 }));
                    }
                }
            }
            Architecture::Res => {
                let z = Padding::Zero;
                rows.push(("conv_1_1".into(), conv(5, 16, 4, z)));
                rows.push(("conv_1_2".into(), conv(3, 16, 1, z)));
                rows.push(("pool_1".into(), LayerSpec::MaxPool { k: 2, s: 2 }));
                for (stage, c, s) in [(2, 32, 1), (3, 64, 2), (4, 64, 2), (5, 128, 2)] {
                    for i in 1..=4 {
                        rows.push((format!("conv_{stage}_{i}"), conv(3, c, if i == 1 { s } else { 1 }, z)));
                    }
                }
            }
        }
        rows.push(("gap".into(), LayerSpec::GlobalAvgPool));
        rows.push(("proj_1".into(), LayerSpec::FullyConnected { d: self.proj_dim, bias: true }));
        rows.push(("proj_2".into(), LayerSpec::FullyConnected { d: self.proj_dim, bias: true }));
        rows
    }
}

#[derive(Clone, Debug)]
enum Unit {
    Conv(Conv2d),
    Bn(BatchNorm),
    Relu,
    Pool,
    Block(ResBlock),
}

/// Pre-activation residual block:
/// `a = relu(bn1(x)); out = shortcut + conv2(relu(bn2(conv1(a))))`, where the
/// shortcut is `x`, or a strided 1x1 convolution of `a` when the shape changes.
#[derive(Clone, Debug)]
pub struct ResBlock {
    pub bn1: BatchNorm,
    pub conv1: Conv2d,
    pub bn2: BatchNorm,
    pub conv2: Conv2d,
    pub shortcut: Option<Conv2d>,
}

impl ResBlock {
    fn forward<'a, T: Real>(&self, sess: &'a Session<'_, T>, x: Var<'a, T>, skip_only: bool) -> Result<Var<'a, T>> {
        let a = self.bn1.forward(sess, x)?.relu();
        let short = match &self.shortcut {
            Some(c) => c.forward(sess, a)?,
            None => x,
        };
        if skip_only {
            return Ok(short);
        }
        let r = self.conv1.forward(sess, a)?;
        let r = self.bn2.forward(sess, r)?.relu();
        let r = self.conv2.forward(sess, r)?;
        Ok(short.add(&r)?)
    }
}

/// Patch encoder `f` (conv stack ending in global average pooling) with the
/// projection head `g` (two fully connected layers, L2-normalised output).
#[derive(Clone, Debug)]
pub struct Encoder {
    pub config: EncoderConfig,
    units: Vec<Unit>,
    head_bn: Option<BatchNorm>,
    proj1: Linear,
    proj2: Linear,
}

impl Encoder {
    /// Registers all parameters in `store` (deterministic names and order).
    pub fn build<T: Real>(config: &EncoderConfig, store: &mut ParamStore<T>, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let w = config.width;
        let mut units = Vec::new();
        let mut head_bn = None;
        match config.architecture {
            Architecture::Base => {
                let mut cin = 1;
                for (name, spec) in config.rows() {
                    match spec {
                        LayerSpec::Conv2d { k, c, s, .. } => {
                            let bn = config.base_batch_norm;
                            units.push(Unit::Conv(Conv2d::new(store, &name, cin, c, k, s, 0, !bn, rng)));
                            if bn {
                                units.push(Unit::Bn(BatchNorm::new(store, &format!("{name}.bn"), c)));
                            }
                            units.push(Unit::Relu);
                            cin = c;
                        }
                        LayerSpec::MaxPool { .. } => units.push(Unit::Pool),
                        _ => {}
                    }
                }
            }
            Architecture::Res => {
                units.push(Unit::Conv(Conv2d::new(store, "conv_1_1", 1, 16 * w, 5, 4, 2, false, rng)));
                units.push(Unit::Bn(BatchNorm::new(store, "conv_1_1.bn", 16 * w)));
                units.push(Unit::Relu);
                units.push(Unit::Conv(Conv2d::new(store, "conv_1_2", 16 * w, 16 * w, 3, 1, 1, false, rng)));
                units.push(Unit::Pool);
                let mut cin = 16 * w;
                for (stage, c, s) in [(2, 32 * w, 1), (3, 64 * w, 2), (4, 64 * w, 2), (5, 128 * w, 2)] {
                    for b in 0..2 {
                        let (stride, name) = (if b == 0 { s } else { 1 }, format!("conv_{stage}.block{}", b + 1));
                        let shortcut = (stride != 1 || cin != c)
                            .then(|| Conv2d::new(store, &format!("{name}.shortcut"), cin, c, 1, stride, 0, false, rng));
                        units.push(Unit::Block(ResBlock {
                            bn1: BatchNorm::new(store, &format!("{name}.bn1"), cin),
                            conv1: Conv2d::new(store, &format!("{name}.conv1"), cin, c, 3, stride, 1, false, rng),
                            bn2: BatchNorm::new(store, &format!("{name}.bn2"), c),
                            conv2: Conv2d::new(store, &format!("{name}.conv2"), c, c, 3, 1, 1, false, rng),
                            shortcut,
                        }));
                        cin = c;
                    }
                }
                head_bn = Some(BatchNorm::new(store, "head.bn", cin));
            }
        }
        let de = config.embed_dim();
        let proj1 = Linear::new(store, "proj_1", de, config.proj_dim, true, rng);
        let proj2 = Linear::new(store, "proj_2", config.proj_dim, config.proj_dim, true, rng);
        Ok(Self { config: config.clone(), units, head_bn, proj1, proj2 })
    }

    /// Rebuilds the handles for a store produced by [`Encoder::build`] with the
    /// same config (e.g. read from a checkpoint), checking names and shapes.
    pub fn attach<T: Real>(config: &EncoderConfig, store: &ParamStore<T>) -> Result<Self> {
        let mut fresh = ParamStore::<T>::new();
        let enc = Self::build(config, &mut fresh, &mut ChaCha8Rng::seed_from_u64(0))?;
        if fresh.len() != store.len() {
            return Err(Error::Input(format!("checkpoint has {} parameters, encoder needs {}", store.len(), fresh.len())));
        }
        for ((_, a), (_, b)) in fresh.iter().zip(store.iter()) {
            if a.name != b.name || a.value.shape() != b.value.shape() {
                return Err(Error::Input(format!("checkpoint parameter {} {:?} does not match {} {:?}", b.name, b.value.shape(), a.name, a.value.shape())));
            }
        }
        Ok(enc)
    }

    /// `h = f(x)` for `x: [B, 1, S, S]`, giving `[B, D_e]`.
    pub fn embed<'a, T: Real>(&self, sess: &'a Session<'_, T>, x: Var<'a, T>) -> Result<Var<'a, T>> {
        self.run(sess, x, false)
    }

    /// `f` with every residual branch removed, leaving only the shortcut path.
    pub fn embed_skip_path<'a, T: Real>(&self, sess: &'a Session<'_, T>, x: Var<'a, T>) -> Result<Var<'a, T>> {
        self.run(sess, x, true)
    }

    fn run<'a, T: Real>(&self, sess: &'a Session<'_, T>, mut x: Var<'a, T>, skip_only: bool) -> Result<Var<'a, T>> {
        for u in &self.units {
            x = match u {
                Unit::Conv(c) => c.forward(sess, x)?,
                Unit::Bn(b) => b.forward(sess, x)?,
                Unit::Relu => x.relu(),
                Unit::Pool => x.max_pool2d(2, 2)?,
                Unit::Block(b) => b.forward(sess, x, skip_only)?,
            };
        }
        if let Some(bn) = &self.head_bn {
            x = bn.forward(sess, x)?.relu();
        }
        Ok(x.global_avg_pool()?)
    }

    /// `z = g(h) / |g(h)|`, giving `[B, D_p]`.
    pub fn project<'a, T: Real>(&self, sess: &'a Session<'_, T>, h: Var<'a, T>) -> Result<Var<'a, T>> {
        let z = self.proj1.forward(sess, h)?.relu();
        Ok(self.proj2.forward(sess, z)?.l2_normalize_rows()?)
    }

    /// Residual blocks, in order (empty for `base`).
    pub fn blocks(&self) -> impl Iterator<Item = &ResBlock> {
        self.units.iter().filter_map(|u| match u {
            Unit::Block(b) => Some(b),
            _ => None,
        })
    }
}
