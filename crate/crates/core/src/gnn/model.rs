use rand::Rng;
use serde::{Deserialize, Serialize};

use cyto_autodiff::layers::{dropout, gaussian_noise, BatchNorm, Linear};
use cyto_autodiff::{ParamStore, Real, Session, Tensor, Var};

use super::batch::GraphBatch;
use super::layers::{GatLayer, SageLayer};
use crate::error::{Error, Result};
use crate::graph::CortexGraph;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GnnArch {
    Sage,
    Gat,
    Mlp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorFusionConfig {
    pub use_cy: bool,
    pub use_pm: bool,
    pub use_co: bool,
    pub pm_dropout: f64,
    pub co_noise: f64,
    pub proj_width: usize,
}

impl Default for PriorFusionConfig {
    fn default() -> Self {
        Self { use_cy: true, use_pm: false, use_co: false, pm_dropout: 0.5, co_noise: 0.05, proj_width: 256 }
    }
}

impl PriorFusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.use_cy || self.use_pm || self.use_co) {
            return Err(Error::Config("prior fusion needs at least one input source".into()));
        }
        if !(0.0..1.0).contains(&self.pm_dropout) || !(self.co_noise >= 0.0) || self.proj_width == 0 {
            return Err(Error::Config("prior fusion needs dropout in [0, 1), non-negative noise, positive width".into()));
        }
        Ok(())
    }

    /// Short tag such as `CY+PM+CO`.
    pub fn tag(&self) -> String {
        let parts: Vec<&str> = [(self.use_cy, "CY"), (self.use_pm, "PM"), (self.use_co, "CO")]
            .into_iter()
            .filter_map(|(on, n)| on.then_some(n))
            .collect();
        parts.join("+")
    }

    /// Fused width for the given source widths.
    pub fn output_width(&self, cy: usize) -> usize {
        self.use_cy as usize * cy + (self.use_pm as usize + self.use_co as usize) * self.proj_width
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GnnConfig {
    pub architecture: GnnArch,
    /// Message-passing layers (hidden layers for the MLP).
    pub layers: usize,
    pub residual: bool,
    pub hidden: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub attention_dropout: f64,
    pub input_dropout: f64,
    pub hidden_dropout: f64,
    /// Neighbours drawn per node and hop when training SAGE models.
    pub fanout: usize,
    pub fusion: PriorFusionConfig,
}

impl Default for GnnConfig {
    fn default() -> Self {
        Self {
            architecture: GnnArch::Sage,
            layers: 3,
            residual: false,
            hidden: 256,
            heads: 8,
            head_dim: 32,
            attention_dropout: 0.5,
            input_dropout: 0.5,
            hidden_dropout: 0.25,
            fanout: 3,
            fusion: PriorFusionConfig::default(),
        }
    }
}

impl GnnConfig {
    pub fn mlp() -> Self {
        Self { architecture: GnnArch::Mlp, ..Self::default() }
    }

    pub fn sage(layers: usize, residual: bool) -> Self {
        Self { architecture: GnnArch::Sage, layers, residual, ..Self::default() }
    }

    pub fn gat(layers: usize, residual: bool) -> Self {
        Self { architecture: GnnArch::Gat, layers, residual, ..Self::default() }
    }

    /// Model name in the `SAGE[5+r]` style.
    pub fn name(&self) -> String {
        match self.architecture {
            GnnArch::Mlp => "MLP".into(),
            a => format!("{}[{}{}]", if a == GnnArch::Sage { "SAGE" } else { "GAT" }, self.layers, if self.residual { "+r" } else { "" }),
        }
    }

    /// Hop radius of the subgraphs the model consumes.
    pub fn radius(&self) -> usize {
        if self.architecture == GnnArch::Mlp { 0 } else { self.layers }
    }

    pub fn validate(&self) -> Result<()> {
        self.fusion.validate()?;
        if self.layers == 0 || self.hidden == 0 || self.fanout == 0 {
            return Err(Error::Config("GNN needs positive layer count, hidden width and fanout".into()));
        }
        if self.architecture == GnnArch::Gat && self.heads * self.head_dim != self.hidden {
            return Err(Error::Config(format!("GAT heads x units = {} x {} must equal hidden width {}", self.heads, self.head_dim, self.hidden)));
        }
        for p in [self.attention_dropout, self.input_dropout, self.hidden_dropout] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!("dropout probability {p} outside [0, 1)")));
            }
        }
        if self.architecture == GnnArch::Mlp && self.residual {
            return Err(Error::Config("the MLP baseline has no residual variant".into()));
        }
        Ok(())
    }
}

/// Per-row input blocks of a batch: `cy`, `pm`, `co` as enabled.
#[derive(Clone, Debug)]
pub struct FusionInputs<T> {
    pub rows: usize,
    pub cy: Option<Tensor<T>>,
    pub pm: Option<Tensor<T>>,
    pub co: Option<Tensor<T>>,
}

impl<T: Real> FusionInputs<T> {
    /// Gathers the enabled attribute blocks for `nodes`; a node lacking an
    /// enabled source is an error naming the node.
    pub fn gather(g: &CortexGraph, nodes: &[u32], fusion: &PriorFusionConfig) -> Result<Self> {
        let take = |on: bool, m: &Option<crate::graph::NodeMatrix>, what: &str| -> Result<Option<Tensor<T>>> {
            if !on {
                return Ok(None);
            }
            let m = m.as_ref().ok_or_else(|| Error::Input(format!("graph has no {what} block")))?;
            let mut data = Vec::with_capacity(nodes.len() * m.dim);
            for &u in nodes {
                if !m.present[u as usize] {
                    return Err(Error::Input(format!("node {u} has no {what} vector")));
                }
                data.extend(m.row(u as usize).iter().map(|&v| T::of(v as f64)));
            }
            Ok(Some(Tensor::new(vec![nodes.len(), m.dim], data)?))
        };
        Ok(Self {
            rows: nodes.len(),
            cy: take(fusion.use_cy, &g.features, "feature")?,
            pm: take(fusion.use_pm, &g.prior_pm, "probabilistic-map prior")?,
            co: take(fusion.use_co, &g.prior_co, "canonical-coordinate prior")?,
        })
    }

    /// Whether `u` carries every enabled source.
    pub fn available(g: &CortexGraph, u: usize, fusion: &PriorFusionConfig) -> bool {
        let ok = |on: bool, m: &Option<crate::graph::NodeMatrix>| !on || m.as_ref().is_some_and(|m| m.present[u]);
        ok(fusion.use_cy, &g.features) && ok(fusion.use_pm, &g.prior_pm) && ok(fusion.use_co, &g.prior_co)
    }
}

/// Prior projections: dropout (PM) or noise (CO) in train mode, then
/// Linear -> BN -> ReLU; concatenated after the raw CY features.
#[derive(Clone, Debug)]
pub struct Fusion {
    pub config: PriorFusionConfig,
    pub pm: Option<(Linear, BatchNorm)>,
    pub co: Option<(Linear, BatchNorm)>,
}

impl Fusion {
    pub fn new<T: Real>(store: &mut ParamStore<T>, config: &PriorFusionConfig, pm_dim: usize, co_dim: usize, rng: &mut impl Rng) -> Self {
        let w = config.proj_width;
        let mut proj = |on: bool, name: &str, din: usize| {
            on.then(|| (Linear::new(store, &format!("{name}.fc"), din, w, true, rng), BatchNorm::new(store, &format!("{name}.bn"), w)))
        };
        let pm = proj(config.use_pm, "fusion.pm", pm_dim);
        let co = proj(config.use_co, "fusion.co", co_dim);
        Self { config: config.clone(), pm, co }
    }

    pub fn forward<'a, T: Real>(&self, sess: &'a Session<'_, T>, x: &FusionInputs<T>) -> Result<Var<'a, T>> {
        let mut parts = Vec::new();
        if let Some(cy) = &x.cy {
            parts.push(sess.input(cy.clone()));
        }
        if let (Some((fc, bn)), Some(pm)) = (&self.pm, &x.pm) {
            let v = dropout(sess, sess.input(pm.clone()), self.config.pm_dropout)?;
            parts.push(bn.forward(sess, fc.forward(sess, v)?)?.relu());
        }
        if let (Some((fc, bn)), Some(co)) = (&self.co, &x.co) {
            let v = gaussian_noise(sess, sess.input(co.clone()), self.config.co_noise)?;
            parts.push(bn.forward(sess, fc.forward(sess, v)?)?.relu());
        }
        let expected = self.config.use_cy as usize + self.pm.is_some() as usize + self.co.is_some() as usize;
        if parts.len() != expected {
            return Err(Error::Input("fusion inputs do not match the enabled sources".into()));
        }
        if parts.len() == 1 {
            return Ok(parts.pop().unwrap());
        }
        Ok(Var::concat_cols(&parts)?)
    }
}

#[derive(Clone, Debug)]
pub enum GraphLayer {
    Sage(SageLayer),
    Gat(GatLayer),
}

impl GraphLayer {
    fn new<T: Real>(store: &mut ParamStore<T>, c: &GnnConfig, name: &str, din: usize, rng: &mut impl Rng) -> Self {
        match c.architecture {
            GnnArch::Gat => GraphLayer::Gat(GatLayer::new(store, name, din, c.heads, c.head_dim, c.attention_dropout, rng)),
            _ => GraphLayer::Sage(SageLayer::new(store, name, din, c.hidden, rng)),
        }
    }

    fn self_loops(&self) -> bool {
        matches!(self, GraphLayer::Gat(_))
    }

    pub fn forward<'a, T: Real>(&self, sess: &'a Session<'_, T>, h: Var<'a, T>, e: &super::batch::LayerEdges) -> Result<Var<'a, T>> {
        match self {
            GraphLayer::Sage(l) => l.forward(sess, h, e),
            GraphLayer::Gat(l) => l.forward(sess, h, e),
        }
    }
}

/// Pre-activation residual block `out = shortcut + layer(act(in))`, with
/// `act = dropout(ReLU(BN(.)))` (input dropout only, for the first block) and
/// a linear projection shortcut when the width changes.
#[derive(Clone, Debug)]
pub struct ResidualBlock {
    pub norm: Option<BatchNorm>,
    pub layer: GraphLayer,
    pub shortcut: Option<Linear>,
}

#[derive(Clone, Debug)]
enum Body {
    Mlp(Vec<(Linear, BatchNorm)>),
    Plain(Vec<(GraphLayer, BatchNorm)>),
    Residual { blocks: Vec<ResidualBlock>, norm: BatchNorm },
}

/// Node classifier: prior fusion, then an MLP, a plain GNN stack or a
/// residual GNN stack, then a linear classifier on the centre rows.
#[derive(Clone, Debug)]
pub struct GnnModel {
    pub config: GnnConfig,
    pub num_classes: usize,
    pub input_width: usize,
    pub fusion: Fusion,
    body: Body,
    pub head: Linear,
}

/// Source widths of the attribute blocks feeding a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDims {
    pub cy: usize,
    pub pm: usize,
    pub co: usize,
}

impl InputDims {
    pub fn of(g: &CortexGraph) -> Self {
        let w = |m: &Option<crate::graph::NodeMatrix>| m.as_ref().map_or(0, |m| m.dim);
        Self { cy: w(&g.features), pm: w(&g.prior_pm), co: w(&g.prior_co) }
    }
}

impl GnnModel {
    pub fn build<T: Real>(config: &GnnConfig, dims: InputDims, num_classes: usize, store: &mut ParamStore<T>, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        if num_classes == 0 {
            return Err(Error::Config("no classes to predict".into()));
        }
        let f = &config.fusion;
        for (on, d, what) in [(f.use_cy, dims.cy, "feature"), (f.use_pm, dims.pm, "probabilistic-map"), (f.use_co, dims.co, "coordinate")] {
            if on && d == 0 {
                return Err(Error::Config(format!("{what} input enabled but has width 0")));
            }
        }
        let fusion = Fusion::new(store, f, dims.pm, dims.co, rng);
        let input_width = f.output_width(dims.cy);
        let hw = config.hidden;
        let body = match (config.architecture, config.residual) {
            (GnnArch::Mlp, _) => Body::Mlp(
                (0..config.layers)
                    .map(|l| {
                        let din = if l == 0 { input_width } else { hw };
                        let name = format!("mlp.{}", l + 1);
                        (Linear::new(store, &name, din, hw, true, rng), BatchNorm::new(store, &format!("{name}.bn"), hw))
                    })
                    .collect(),
            ),
            (_, false) => Body::Plain(
                (0..config.layers)
                    .map(|l| {
                        let din = if l == 0 { input_width } else { hw };
                        let name = format!("gnn.{}", l + 1);
                        (GraphLayer::new(store, config, &name, din, rng), BatchNorm::new(store, &format!("{name}.bn"), hw))
                    })
                    .collect(),
            ),
            (_, true) => {
                let blocks = (0..config.layers)
                    .map(|l| {
                        let din = if l == 0 { input_width } else { hw };
                        let name = format!("block.{}", l + 1);
                        let norm = (l > 0).then(|| BatchNorm::new(store, &format!("{name}.bn"), din));
                        let layer = GraphLayer::new(store, config, &format!("{name}.layer"), din, rng);
                        let shortcut = (din != hw).then(|| Linear::new(store, &format!("{name}.shortcut"), din, hw, false, rng));
                        ResidualBlock { norm, layer, shortcut }
                    })
                    .collect();
                Body::Residual { blocks, norm: BatchNorm::new(store, "block.out.bn", hw) }
            }
        };
        let head = Linear::new(store, "classifier", hw, num_classes, true, rng);
        Ok(Self { config: config.clone(), num_classes, input_width, fusion, body, head })
    }

    /// Class scores `[centers, classes]` for the batch centres. `x` holds the
    /// inputs of the first `batch.input_rows(radius)` rows.
    pub fn forward<'a, T: Real>(&self, sess: &'a Session<'_, T>, batch: &GraphBatch, x: &FusionInputs<T>) -> Result<Var<'a, T>> {
        self.run(sess, batch, x, false)
    }

    /// As [`GnnModel::forward`] with every residual branch removed.
    pub fn forward_skip_path<'a, T: Real>(&self, sess: &'a Session<'_, T>, batch: &GraphBatch, x: &FusionInputs<T>) -> Result<Var<'a, T>> {
        self.run(sess, batch, x, true)
    }

    fn run<'a, T: Real>(&self, sess: &'a Session<'_, T>, batch: &GraphBatch, x: &FusionInputs<T>, skip_only: bool) -> Result<Var<'a, T>> {
        let k = self.config.radius();
        let rows = batch.input_rows(k)?;
        if x.rows != rows {
            return Err(Error::Input(format!("{} input rows for a batch needing {rows}", x.rows)));
        }
        let c = &self.config;
        let mut h = dropout(sess, self.fusion.forward(sess, x)?, c.input_dropout)?;
        match &self.body {
            Body::Mlp(layers) => {
                h = h.narrow_rows(batch.centers)?;
                for (fc, bn) in layers {
                    h = dropout(sess, bn.forward(sess, fc.forward(sess, h)?)?.relu(), c.hidden_dropout)?;
                }
            }
            Body::Plain(layers) => {
                for (l, (layer, bn)) in layers.iter().enumerate() {
                    let e = batch.layer_edges(l + 1, k, layer.self_loops())?;
                    h = dropout(sess, bn.forward(sess, layer.forward(sess, h, &e)?)?.relu(), c.hidden_dropout)?;
                }
            }
            Body::Residual { blocks, norm } => {
                for (l, b) in blocks.iter().enumerate() {
                    let e = batch.layer_edges(l + 1, k, b.layer.self_loops())?;
                    let a = match &b.norm {
                        Some(bn) => dropout(sess, bn.forward(sess, h)?.relu(), c.hidden_dropout)?,
                        None => h,
                    };
                    let short = match &b.shortcut {
                        Some(p) => p.forward(sess, a.narrow_rows(e.targets)?)?,
                        None => h.narrow_rows(e.targets)?,
                    };
                    h = if skip_only { short } else { short.add(&b.layer.forward(sess, a, &e)?)? };
                }
                h = dropout(sess, norm.forward(sess, h)?.relu(), c.hidden_dropout)?;
            }
        }
        Ok(self.head.forward(sess, h)?)
    }

    pub fn blocks(&self) -> &[ResidualBlock] {
        match &self.body {
            Body::Residual { blocks, .. } => blocks,
            _ => &[],
        }
    }

    pub fn graph_layers(&self) -> Vec<&GraphLayer> {
        match &self.body {
            Body::Mlp(_) => Vec::new(),
            Body::Plain(l) => l.iter().map(|x| &x.0).collect(),
            Body::Residual { blocks, .. } => blocks.iter().map(|b| &b.layer).collect(),
        }
    }
}
