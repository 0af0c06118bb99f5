use log::info;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use cyto_autodiff::{Lars, Mode, Optimizer, ParamStore, Session, SgdNesterov, Tensor};

use super::augment::{augment, AugmentationConfig};
use super::network::{Encoder, EncoderConfig};
use super::supcon::supcon_loss;
use crate::error::{Error, Result};

/// Labelled square patches stored contiguously.
#[derive(Clone, Debug)]
pub struct PatchDataset {
    pub side: usize,
    pub num_classes: usize,
    pixels: Vec<f32>,
    labels: Vec<usize>,
}

impl PatchDataset {
    pub fn new(side: usize, num_classes: usize) -> Self {
        Self { side, num_classes, pixels: Vec::new(), labels: Vec::new() }
    }

    pub fn push(&mut self, patch: &[f32], label: usize) -> Result<()> {
        if patch.len() != self.side * self.side {
            return Err(Error::Input(format!("patch has {} pixels, expected {}", patch.len(), self.side * self.side)));
        }
        if label >= self.num_classes {
            return Err(Error::Input(format!("label {label} outside [0, {})", self.num_classes)));
        }
        if patch.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Input("patch values must lie in [0, 1]".into()));
        }
        self.pixels.extend_from_slice(patch);
        self.labels.push(label);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn patch(&self, i: usize) -> &[f32] {
        let n = self.side * self.side;
        &self.pixels[i * n..(i + 1) * n]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.num_classes];
        self.labels.iter().for_each(|&l| c[l] += 1);
        c
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderOptimizer {
    Lars,
    Sgd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderSchedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: EncoderOptimizer,
    /// Constant learning rate; `None` means `0.01 * batch_size / 128`.
    pub lr: Option<f64>,
    pub momentum: f64,
    /// LARS trust coefficient.
    pub trust: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for EncoderSchedule {
    fn default() -> Self {
        Self::desk()
    }
}

impl EncoderSchedule {
    /// Small-batch schedule for the synthetic phantom.
    pub fn desk() -> Self {
        Self { epochs: 20, batch_size: 64, optimizer: EncoderOptimizer::Lars, lr: None, momentum: 0.9, trust: 1.0, weight_decay: 0.0, seed: 0 }
    }

    /// Full-scale schedule: 150 epochs at batch 4096.
    pub fn full_scale() -> Self {
        Self { epochs: 150, batch_size: 4096, trust: Lars::<f32>::DEFAULT_TRUST, ..Self::desk() }
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr.unwrap_or(0.01 * self.batch_size as f64 / 128.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size < 2 {
            return Err(Error::Config("encoder schedule needs at least one epoch and batches of two or more".into()));
        }
        if !(self.learning_rate() > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("encoder learning rate must be positive and momentum in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct TrainedEncoder {
    pub encoder: Encoder,
    pub store: ParamStore<f32>,
    /// Mean batch loss over one pass with the initial weights.
    pub initial_loss: f64,
    /// Mean batch loss of every epoch.
    pub loss_curve: Vec<f64>,
}

impl TrainedEncoder {
    pub fn final_loss(&self) -> f64 {
        self.loss_curve.last().copied().unwrap_or(self.initial_loss)
    }
}

fn batches(order: &[usize], size: usize) -> impl Iterator<Item = &[usize]> {
    // Trailing partial batches are dropped unless the dataset is smaller
    // than one batch.
    let full = (order.len() / size).max(1);
    order.chunks(size).take(full)
}

struct Step<'e> {
    encoder: &'e Encoder,
    aug: &'e AugmentationConfig,
    data: &'e PatchDataset,
}

impl Step<'_> {
    fn input(&self, idx: &[usize], rng: &mut ChaCha8Rng) -> Result<Tensor<f32>> {
        let s = self.data.side;
        let mut px = Vec::with_capacity(idx.len() * s * s);
        for &i in idx {
            px.extend(augment(self.data.patch(i), s, self.aug, rng));
        }
        Ok(Tensor::new(vec![idx.len(), 1, s, s], px)?)
    }

    /// Loss of one batch; with an optimizer, also updates `store`.
    fn run(&self, store: &mut ParamStore<f32>, idx: &[usize], rng: &mut ChaCha8Rng, opt: Option<&mut dyn Optimizer<f32>>) -> Result<f64> {
        let x = self.input(idx, rng)?;
        let labels: Vec<usize> = idx.iter().map(|&i| self.data.label(i)).collect();
        let sess = Session::new(store, Mode::Train, rng.random());
        let h = self.encoder.embed(&sess, sess.input(x))?;
        let z = self.encoder.project(&sess, h)?;
        let loss = supcon_loss(z, &labels, self.encoder.config.tau)?;
        let value = loss.value().item() as f64;
        if !value.is_finite() {
            return Err(Error::Numeric(format!("contrastive loss became {value}")));
        }
        let Some(opt) = opt else { return Ok(value) };
        let grads = sess.backward(loss)?;
        let updates = sess.take_updates();
        drop(sess);
        store.zero_grad();
        store.accumulate(&grads);
        opt.step(store);
        store.apply_updates(updates);
        Ok(value)
    }
}

/// Trains `f` and `g` with the supervised contrastive loss. The projection
/// head stays in the returned store but only `f` is used downstream.
pub fn train_encoder(
    data: &PatchDataset,
    config: &EncoderConfig,
    aug: &AugmentationConfig,
    schedule: &EncoderSchedule,
) -> Result<TrainedEncoder> {
    schedule.validate()?;
    if data.side != config.patch_side {
        return Err(Error::Config(format!("dataset patch side {} differs from encoder patch side {}", data.side, config.patch_side)));
    }
    let counts = data.class_counts();
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::Input(format!("class {c} has no training patches")));
    }
    if data.len() < 2 {
        return Err(Error::Input("need at least two training patches".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut store = ParamStore::new();
    let encoder = Encoder::build(config, &mut store, &mut rng)?;
    let lr = schedule.learning_rate();
    let mut opt: Box<dyn Optimizer<f32>> = match schedule.optimizer {
        EncoderOptimizer::Lars => {
            Box::new(Lars::new(lr, schedule.momentum).with_trust(schedule.trust).with_weight_decay(schedule.weight_decay))
        }
        EncoderOptimizer::Sgd => Box::new(SgdNesterov::new(lr, schedule.momentum)),
    };
    let step = Step { encoder: &encoder, aug, data };
    let mut order: Vec<usize> = (0..data.len()).collect();
    let size = schedule.batch_size.min(data.len());

    let initial_loss = {
        let mut probe = store.clone();
        let mut r = ChaCha8Rng::seed_from_u64(schedule.seed ^ 0x1417);
        order.shuffle(&mut r);
        let losses = batches(&order, size).map(|b| step.run(&mut probe, b, &mut r, None)).collect::<Result<Vec<_>>>()?;
        losses.iter().sum::<f64>() / losses.len() as f64
    };
    info!("encoder: {} patches, {} classes, lr {lr}, initial loss {initial_loss:.4}", data.len(), data.num_classes);

    let mut loss_curve = Vec::with_capacity(schedule.epochs);
    for epoch in 0..schedule.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut n = 0;
        for b in batches(&order, size) {
            total += step.run(&mut store, b, &mut rng, Some(opt.as_mut()))?;
            n += 1;
        }
        loss_curve.push(total / n as f64);
        info!("encoder epoch {}/{}: loss {:.4}", epoch + 1, schedule.epochs, total / n as f64);
    }
    Ok(TrainedEncoder { encoder, store, initial_loss, loss_curve })
}
