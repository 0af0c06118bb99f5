use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoder::{config_hash, AugmentationConfig, EncoderConfig, EncoderOptimizer, EncoderSchedule};
use crate::error::{Error, Result};
use crate::gnn::{GnnConfig, GnnSchedule, PriorFusionConfig};
use crate::mesh::{CuttingPlane, LaplaceOptions, RemeshOptions, SegmentOptions};
use crate::synth::{PhantomConfig, PriorConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    /// In-plane voxel size of the reconstructed volume.
    pub voxel_um: f64,
    /// Use the phantom's true tissue maps instead of segmenting the images.
    pub ground_truth_tissue: bool,
    pub segmentation: SegmentOptions,
    pub laplace: LaplaceOptions,
    /// Mesh components with fewer vertices are discarded.
    pub min_component_vertices: usize,
    /// Keep only the part of the midsurface on the normal side of this plane.
    pub cutting_plane: Option<CuttingPlane>,
    pub remesh: RemeshOptions,
    /// Fraction of sections assigned to the test split.
    pub test_fraction: f64,
    pub split_seed: u64,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self {
            voxel_um: 50.0,
            ground_truth_tissue: false,
            segmentation: SegmentOptions::default(),
            laplace: LaplaceOptions::default(),
            min_component_vertices: 500,
            cutting_plane: None,
            remesh: RemeshOptions { target_edge: 130.0, ..RemeshOptions::default() },
            test_fraction: 0.2,
            split_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderStageConfig {
    pub network: EncoderConfig,
    pub schedule: EncoderSchedule,
    pub augmentation: AugmentationConfig,
    /// Training patches drawn per class from training-split nodes.
    pub patches_per_class: usize,
    pub embed_batch: usize,
}

impl Default for EncoderStageConfig {
    fn default() -> Self {
        Self {
            network: EncoderConfig { patch_side: 32, ..EncoderConfig::default() },
            // The phantom's areas differ mainly in dot coverage at a fixed
            // stain, so intensity jitter would erase the cue; LARS at rates
            // that learn in 20 epochs kills every unit.
            schedule: EncoderSchedule { optimizer: EncoderOptimizer::Sgd, lr: Some(0.05), ..EncoderSchedule::desk() },
            augmentation: AugmentationConfig::none(),
            patches_per_class: 400,
            embed_batch: 64,
        }
    }
}

/// A model to train and evaluate; the report key is `name` or, when empty,
/// the architecture name followed by the input tag (`SAGE[3] CY+PM+CO`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    pub model: GnnConfig,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self { name: String::new(), model: GnnConfig::desk(GnnConfig::default()) }
    }
}

impl ModelSpec {
    pub fn new(model: GnnConfig) -> Self {
        Self { name: String::new(), model }
    }

    pub fn key(&self) -> String {
        if self.name.is_empty() {
            format!("{} {}", self.model.name(), self.model.fusion.tag())
        } else {
            self.name.clone()
        }
    }

    /// File-name form of the key.
    pub fn slug(&self) -> String {
        let mut s: String = self.key().chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' }).collect();
        while s.contains("__") {
            s = s.replace("__", "_");
        }
        s.trim_matches('_').to_string()
    }
}

impl GnnConfig {
    /// Desk-scale widths: 64 hidden units (GAT: 4 heads of 16) and 64-wide
    /// prior projections.
    pub fn desk(mut self) -> Self {
        self.hidden = 64;
        self.heads = 4;
        self.head_dim = 16;
        self.fusion.proj_width = 64;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GnnStageConfig {
    pub models: Vec<ModelSpec>,
    pub schedule: GnnSchedule,
    pub predict_batch: usize,
}

impl Default for GnnStageConfig {
    fn default() -> Self {
        let with_priors = PriorFusionConfig { use_pm: true, use_co: true, ..PriorFusionConfig::default() };
        Self {
            models: vec![
                ModelSpec::new(GnnConfig::mlp().desk()),
                ModelSpec::new(GnnConfig::sage(3, false).desk()),
                ModelSpec::new(GnnConfig { fusion: with_priors, ..GnnConfig::sage(3, false) }.desk()),
            ],
            schedule: GnnSchedule { lr: Some(0.01), steps_per_epoch: Some(16), ..GnnSchedule::desk() },
            predict_batch: 256,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportConfig {
    /// Model whose predictions are exported; empty selects the model with
    /// the best mean test macro-F1.
    pub model: String,
    /// Seed of the exported run; defaults to the first seed.
    pub seed: Option<u64>,
}

/// Complete declarative description of a pipeline run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    /// One GNN training run per seed and model.
    pub seeds: Vec<u64>,
    pub phantom: PhantomConfig,
    pub mesh: MeshConfig,
    pub priors: PriorConfig,
    pub encoder: EncoderStageConfig,
    pub gnn: GnnStageConfig,
    pub export: ExportConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("run"),
            seeds: vec![0, 1, 2],
            phantom: PhantomConfig::default(),
            mesh: MeshConfig::default(),
            priors: PriorConfig::default(),
            encoder: EncoderStageConfig::default(),
            gnn: GnnStageConfig::default(),
            export: ExportConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_with_overrides(text, &[])
    }

    /// Parses `text` after applying `key.path=value` overrides, where the
    /// value is a TOML literal (bare words are taken as strings). Keys
    /// missing from both keep the values of [`RunConfig::default`], also
    /// inside partially given tables.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let parsed: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let mut root = match toml::Value::try_from(Self::default()) {
            Ok(toml::Value::Table(t)) => t,
            _ => unreachable!("run config serializes to a table"),
        };
        merge(&mut root, parsed);
        for o in overrides {
            apply_override(&mut root, o)?;
        }
        toml::Value::Table(root).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_with_overrides(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.phantom.validate()?;
        self.priors.validate()?;
        let m = &self.mesh;
        if !(m.voxel_um > 0.0) || !(m.remesh.target_edge > 0.0) || !(m.laplace.tol > 0.0) {
            return Err(Error::Config("mesh voxel size, remesh target and Laplace tolerance must be positive".into()));
        }
        if !(0.0..1.0).contains(&m.test_fraction) {
            return Err(Error::Config(format!("test_fraction must lie in [0, 1), got {}", m.test_fraction)));
        }
        self.encoder.network.validate()?;
        if self.encoder.patches_per_class == 0 || self.encoder.embed_batch == 0 {
            return Err(Error::Config("encoder patches_per_class and embed_batch must be positive".into()));
        }
        if self.encoder.schedule.batch_size > self.encoder.patches_per_class * self.phantom.areas {
            return Err(Error::Config(format!(
                "encoder batch {} exceeds the {} training patches",
                self.encoder.schedule.batch_size,
                self.encoder.patches_per_class * self.phantom.areas
            )));
        }
        self.gnn.schedule.validate()?;
        if self.gnn.models.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("at least one model and one seed are required".into()));
        }
        let mut keys = std::collections::BTreeSet::new();
        for spec in &self.gnn.models {
            spec.model.validate()?;
            if !keys.insert(spec.slug()) {
                return Err(Error::Config(format!("duplicate model name {:?}", spec.key())));
            }
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if !self.export.model.is_empty() && !self.gnn.models.iter().any(|s| s.key() == self.export.model) {
            return Err(Error::Config(format!("export model {:?} is not among the configured models", self.export.model)));
        }
        if let Some(s) = self.export.seed {
            if !self.seeds.contains(&s) {
                return Err(Error::Config(format!("export seed {s} is not among the configured seeds")));
            }
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::Config("output_dir is empty".into()));
        }
        Ok(())
    }

    /// Hash of everything except the output location.
    pub fn hash(&self) -> String {
        config_hash(&RunConfig { output_dir: PathBuf::new(), ..self.clone() })
    }
}

/// Recursively overwrites `base` with `over`; arrays are replaced whole.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn apply_override(root: &mut toml::Table, o: &str) -> Result<()> {
    let (path, raw) = o.split_once('=').ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("override {o:?} has an empty key")));
    }
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut table = root;
    for k in &keys[..keys.len() - 1] {
        let entry = table.entry(k.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| Error::Config(format!("override {o:?}: {k} is not a table")))?;
    }
    table.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}
