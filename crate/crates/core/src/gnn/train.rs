use std::io::{Read, Write};
use std::path::Path;
use std::rc::Rc;

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use cyto_autodiff::{Mode, Optimizer, ParamStore, Session, SgdNesterov, Tensor};

use super::batch::GraphBatch;
use super::model::{FusionInputs, GnnArch, GnnConfig, GnnModel, InputDims};
use crate::error::{Error, Result};
use crate::eval::{macro_f1, EpochStats, EvalResult};
use crate::graph::{khop_subgraph, sample_fixed_neighbors, BalancedStream, CortexGraph, Split, Subgraph};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GnnSchedule {
    pub epochs: usize,
    pub batch_size: usize,
    /// Constant learning rate; `None` means `base_lr * batch_size / 4096`.
    pub lr: Option<f64>,
    pub base_lr: f64,
    pub momentum: f64,
    /// Optimizer steps per epoch; `None` means one pass over the streamable
    /// training nodes.
    pub steps_per_epoch: Option<usize>,
    pub seed: u64,
}

impl Default for GnnSchedule {
    fn default() -> Self {
        Self::desk()
    }
}

impl GnnSchedule {
    pub fn desk() -> Self {
        Self { epochs: 30, batch_size: 256, lr: None, base_lr: 0.001, momentum: 0.9, steps_per_epoch: None, seed: 0 }
    }

    /// Full-scale schedule: 100 epochs at batch 16384.
    pub fn full_scale() -> Self {
        Self { epochs: 100, batch_size: 16384, ..Self::desk() }
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr.unwrap_or(self.base_lr * self.batch_size as f64 / 4096.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.steps_per_epoch == Some(0) {
            return Err(Error::Config("GNN schedule needs positive epochs, batch size and steps".into()));
        }
        if !(self.learning_rate() > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("GNN learning rate must be positive and momentum in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct TrainedGnn {
    pub model: GnnModel,
    pub store: ParamStore<f32>,
    pub history: Vec<EpochStats>,
}

/// Subgraph fed to the model for centre `u`: sampled neighbourhoods for SAGE
/// training, full `K`-hop neighbourhoods otherwise.
pub fn model_subgraph(g: &CortexGraph, config: &GnnConfig, u: usize, train: bool, rng: &mut impl Rng) -> Subgraph {
    let k = config.radius() as u32;
    if train && config.architecture == GnnArch::Sage {
        sample_fixed_neighbors(g, u, k, config.fanout, rng)
    } else {
        khop_subgraph(g, u, k)
    }
}

/// Batch and gathered inputs for the given subgraphs; nodes lacking an
/// enabled input source are pruned.
pub fn prepare_batch<T: cyto_autodiff::Real>(g: &CortexGraph, config: &GnnConfig, subs: &[Subgraph]) -> Result<(GraphBatch, FusionInputs<T>)> {
    let fusion = &config.fusion;
    for s in subs {
        if !FusionInputs::<T>::available(g, s.center as usize, fusion) {
            return Err(Error::Input(format!("node {} lacks an enabled input source", s.center)));
        }
    }
    let batch = GraphBatch::new(subs, |v| FusionInputs::<T>::available(g, v as usize, fusion))?;
    let rows = batch.input_rows(config.radius())?;
    let x = FusionInputs::gather(g, &batch.nodes[..rows], fusion)?;
    Ok((batch, x))
}

fn argmax(row: &[f32]) -> u32 {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best as u32
}

/// Trains a node classifier on the labelled training split with a
/// class-balanced node stream, Nesterov SGD and cross-entropy.
pub fn train_gnn(g: &CortexGraph, config: &GnnConfig, schedule: &GnnSchedule) -> Result<TrainedGnn> {
    schedule.validate()?;
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut store = ParamStore::new();
    let model = GnnModel::build(config, InputDims::of(g), g.num_classes, &mut store, &mut rng)?;
    let mut stream = BalancedStream::new(g, Split::Train, rng.random())?;
    let usable: Vec<bool> = (0..g.len()).map(|u| FusionInputs::<f32>::available(g, u, &config.fusion)).collect();
    let steps = schedule.steps_per_epoch.unwrap_or_else(|| stream.population().div_ceil(schedule.batch_size));
    let mut opt = SgdNesterov::new(schedule.learning_rate(), schedule.momentum);
    info!(
        "{}: {} streamable training nodes, {steps} steps/epoch, lr {}",
        config.name(),
        stream.population(),
        schedule.learning_rate()
    );

    let mut history = Vec::with_capacity(schedule.epochs);
    for epoch in 1..=schedule.epochs {
        let (mut loss_sum, mut truth, mut pred) = (0.0, Vec::new(), Vec::new());
        for _ in 0..steps {
            let centers: Vec<usize> = stream.by_ref().filter(|&u| usable[u]).take(schedule.batch_size).collect();
            let subs: Vec<Subgraph> = centers.iter().map(|&u| model_subgraph(g, config, u, true, &mut rng)).collect();
            let (batch, x) = prepare_batch::<f32>(g, config, &subs)?;
            let labels: Vec<usize> = centers.iter().map(|&u| g.labels[u].expect("stream yields labelled nodes") as usize).collect();
            let sess = Session::new(&store, Mode::Train, rng.random());
            let logits = model.forward(&sess, &batch, &x)?;
            {
                let v = logits.value();
                for (i, &y) in labels.iter().enumerate() {
                    truth.push(y as u32);
                    pred.push(argmax(v.row(i)));
                }
            }
            let loss = logits.cross_entropy(Rc::new(labels))?;
            let lv = loss.value().item() as f64;
            if !lv.is_finite() {
                return Err(Error::Numeric(format!("{} loss became {lv} in epoch {epoch}", config.name())));
            }
            loss_sum += lv;
            let grads = sess.backward(loss)?;
            let updates = sess.take_updates();
            drop(sess);
            store.zero_grad();
            store.accumulate(&grads);
            opt.step(&mut store);
            store.apply_updates(updates);
        }
        let f1 = macro_f1(&truth, &pred, g.num_classes)?.macro_f1;
        let stats = EpochStats { epoch, loss: loss_sum / steps as f64, train_macro_f1: f1 };
        info!("{} epoch {epoch}/{}: loss {:.4}, train macro-F1 {:.4}", config.name(), schedule.epochs, stats.loss, f1);
        history.push(stats);
    }
    Ok(TrainedGnn { model, store, history })
}

/// Eval-mode class predictions for `nodes` over full neighbourhoods; `None`
/// for nodes lacking an enabled input source.
pub fn predict(model: &GnnModel, store: &ParamStore<f32>, g: &CortexGraph, nodes: &[usize], batch_size: usize) -> Result<Vec<Option<u32>>> {
    let config = &model.config;
    let usable: Vec<usize> = nodes.iter().copied().filter(|&u| FusionInputs::<f32>::available(g, u, &config.fusion)).collect();
    let chunks: Vec<Vec<(usize, u32)>> = usable
        .par_chunks(batch_size.max(1))
        .map(|chunk| -> Result<Vec<(usize, u32)>> {
            let mut unused = ChaCha8Rng::seed_from_u64(0);
            let subs: Vec<Subgraph> = chunk.iter().map(|&u| model_subgraph(g, config, u, false, &mut unused)).collect();
            let (batch, x) = prepare_batch::<f32>(g, config, &subs)?;
            let sess = Session::new(store, Mode::Eval, 0);
            let v = model.forward(&sess, &batch, &x)?.value();
            Ok(chunk.iter().enumerate().map(|(i, &u)| (u, argmax(v.row(i)))).collect())
        })
        .collect::<Result<_>>()?;
    let mut by_node = std::collections::HashMap::new();
    chunks.into_iter().flatten().for_each(|(u, c)| {
        by_node.insert(u, c);
    });
    Ok(nodes.iter().map(|u| by_node.get(u).copied()).collect())
}

/// Scores the labelled nodes of `split` that satisfy `filter`. Returns `None`
/// when no node qualifies; nodes without a prediction are counted in the
/// second value.
pub fn evaluate(
    model: &GnnModel,
    store: &ParamStore<f32>,
    g: &CortexGraph,
    split: Split,
    filter: impl Fn(usize) -> bool,
) -> Result<Option<(EvalResult, usize)>> {
    let nodes: Vec<usize> = g.nodes_in(split).into_iter().filter(|&u| g.labels[u].is_some() && filter(u)).collect();
    let preds = predict(model, store, g, &nodes, 512)?;
    let (mut truth, mut pred, mut missing) = (Vec::new(), Vec::new(), 0);
    for (&u, p) in nodes.iter().zip(preds) {
        match p {
            Some(p) => {
                truth.push(g.labels[u].unwrap());
                pred.push(p);
            }
            None => missing += 1,
        }
    }
    if truth.is_empty() {
        return Ok(None);
    }
    Ok(Some((macro_f1(&truth, &pred, g.num_classes)?, missing)))
}

#[derive(Serialize, Deserialize)]
struct GnnMeta {
    gnn: GnnConfig,
    num_classes: usize,
    dims: InputDims,
}

pub fn save_gnn(path: &Path, model: &GnnModel, dims: InputDims, store: &ParamStore<f32>) -> Result<()> {
    let meta = GnnMeta { gnn: model.config.clone(), num_classes: model.num_classes, dims };
    Ok(cyto_autodiff::save_checkpoint(path, store, serde_json::to_value(meta)?)?)
}

pub fn load_gnn(path: &Path) -> Result<(GnnModel, ParamStore<f32>)> {
    let (store, meta) = cyto_autodiff::load_checkpoint::<f32>(path)?;
    let meta: GnnMeta = serde_json::from_value(meta).map_err(|e| Error::Input(format!("checkpoint lacks a GNN config: {e}")))?;
    let mut fresh = ParamStore::<f32>::new();
    let model = GnnModel::build(&meta.gnn, meta.dims, meta.num_classes, &mut fresh, &mut ChaCha8Rng::seed_from_u64(0))?;
    let layout = |s: &ParamStore<f32>| s.iter().map(|(_, p)| (p.name.clone(), p.value.shape().to_vec())).collect::<Vec<_>>();
    if layout(&fresh) != layout(&store) {
        return Err(Error::Input("checkpoint parameters do not match the GNN config".into()));
    }
    Ok((model, store))
}

const PRED_MAGIC: &[u8; 8] = b"CYTOPRED";

/// `PRED_MAGIC`, u64 node count, then one little-endian i32 class id per
/// node (-1 = no prediction).
pub fn write_predictions(mut w: impl Write, preds: &[Option<u32>]) -> Result<()> {
    w.write_all(PRED_MAGIC)?;
    w.write_all(&(preds.len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(preds.len() * 4);
    preds.iter().for_each(|p| buf.extend(p.map_or(-1, |c| c as i32).to_le_bytes()));
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_predictions(mut r: impl Read) -> Result<Vec<Option<u32>>> {
    let mut head = [0u8; 16];
    r.read_exact(&mut head)?;
    if &head[..8] != PRED_MAGIC {
        return Err(Error::Input("not a prediction file".into()));
    }
    let n = u64::from_le_bytes(head[8..].try_into().unwrap()) as usize;
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(4)
        .map(|b| {
            let v = i32::from_le_bytes([b[0], b[1], b[2], b[3]]);
            (v >= 0).then_some(v as u32)
        })
        .collect())
}

/// Convenience for tests: logits of single centres as dense rows.
pub fn center_logits(model: &GnnModel, store: &ParamStore<f64>, g: &CortexGraph, subs: &[Subgraph]) -> Result<Tensor<f64>> {
    let (batch, x) = prepare_batch::<f64>(g, &model.config, subs)?;
    let sess = Session::new(store, Mode::Eval, 0);
    let v = model.forward(&sess, &batch, &x)?.value();
    Ok((*v).clone())
}
