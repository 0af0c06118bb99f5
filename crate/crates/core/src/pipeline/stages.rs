use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ModelSpec, RunConfig};
use super::manifest::{require_stage, StageManifest};
use crate::encoder::{
    config_hash, embed_nodes, load_encoder, sample_patches, save_encoder, train_encoder, write_features,
};
use crate::error::{Error, Result};
use crate::eval::{export_colored_mesh, macro_f1, EpochStats, ModelRun, Palette, RunReport};
use crate::gnn::{load_gnn, predict, read_predictions, save_gnn, train_gnn, write_predictions, GnnSchedule, InputDims};
use crate::graph::{read_graph, write_graph, write_split_map, CortexGraph, Split};
use crate::image::GrayImage;
use crate::mesh::io::{read_obj, write_obj, write_volume};
use crate::mesh::{
    filter_components, marching_cubes, mesh_to_graph, reconstruct_stack, remesh_isotropic, segment_section, solve_laplace,
    split_by_plane, GraphBuildReport, LaplaceReport, StackGeometry, StackSection, Tissue, TriangleMesh,
};
use crate::synth::{annotate_graph, generate_phantom, read_dataset, synth_priors, write_dataset, PhantomDataset};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Phantom,
    Mesh,
    TrainEncoder,
    Features,
    TrainGnn,
    Eval,
    Export,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Ran,
    UpToDate,
}

impl Stage {
    /// Execution order of `all`.
    pub const ALL: [Stage; 7] =
        [Stage::Phantom, Stage::Mesh, Stage::TrainEncoder, Stage::Features, Stage::TrainGnn, Stage::Eval, Stage::Export];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Phantom => "phantom",
            Stage::Mesh => "mesh",
            Stage::TrainEncoder => "train-encoder",
            Stage::Features => "features",
            Stage::TrainGnn => "train-gnn",
            Stage::Eval => "eval",
            Stage::Export => "export",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|st| st.name() == s)
    }

    pub fn upstream(self) -> &'static [Stage] {
        match self {
            Stage::Phantom => &[],
            Stage::Mesh => &[Stage::Phantom],
            Stage::TrainEncoder => &[Stage::Phantom, Stage::Mesh],
            Stage::Features => &[Stage::Phantom, Stage::Mesh, Stage::TrainEncoder],
            Stage::TrainGnn => &[Stage::Features],
            Stage::Eval => &[Stage::Features, Stage::TrainGnn],
            Stage::Export => &[Stage::Mesh, Stage::Features, Stage::Eval],
        }
    }

    /// Hash of the configuration this stage's outputs depend on directly.
    pub fn config_hash(self, c: &RunConfig) -> String {
        match self {
            Stage::Phantom => config_hash(&c.phantom),
            Stage::Mesh => config_hash(&(&c.mesh, border_um(c))),
            Stage::TrainEncoder => {
                let e = &c.encoder;
                config_hash(&(&e.network, &e.schedule, &e.augmentation, e.patches_per_class))
            }
            Stage::Features => config_hash(&(c.encoder.embed_batch, &c.priors)),
            Stage::TrainGnn => config_hash(&(&c.gnn.models, &c.gnn.schedule, &c.seeds)),
            Stage::Eval => config_hash(&(c.hash(), c.gnn.predict_batch)),
            Stage::Export => config_hash(&c.export),
        }
    }
}

/// Nodes closer than one patch radius to an area border are border nodes.
fn border_um(c: &RunConfig) -> f64 {
    c.encoder.network.patch_side as f64 / 2.0 * c.phantom.pixel_um
}

/// Checks `stage` and, recursively, that every stage it was built from still
/// holds the outputs it consumed.
fn require_current(cfg: &RunConfig, root: &Path, stage: Stage) -> Result<StageManifest> {
    let m = require_stage(root, stage.name(), &stage.config_hash(cfg))?;
    for &up in stage.upstream() {
        let u = require_current(cfg, root, up)?;
        for (rel, hash) in &u.outputs {
            if m.inputs.get(rel) != Some(hash) {
                return Err(Error::Input(format!(
                    "stale artifact {}: built from an older {rel} (expected hash {hash}, recorded {}); rerun `{}`",
                    stage.name(),
                    m.inputs.get(rel).map_or("none", |h| h.as_str()),
                    stage.name()
                )));
            }
        }
    }
    Ok(m)
}

/// Runs one stage unless its recorded config and inputs match, in which case
/// it is a no-op. Upstream artifacts must exist and match their manifests.
pub fn run_stage(cfg: &RunConfig, stage: Stage) -> Result<Outcome> {
    cfg.validate()?;
    let root = cfg.output_dir.as_path();
    let mut inputs = BTreeMap::new();
    for &up in stage.upstream() {
        inputs.extend(require_current(cfg, root, up)?.outputs);
    }
    let name = stage.name();
    let hash = stage.config_hash(cfg);
    if let Some(m) = StageManifest::read(root, name)? {
        if m.complete && m.config_hash == hash && m.inputs == inputs && m.verify_outputs(root).is_ok() {
            info!("{name}: up to date");
            return Ok(Outcome::UpToDate);
        }
    }
    let dir = root.join(name);
    if dir.exists() {
        fs::remove_dir_all(&dir)?;
    }
    fs::create_dir_all(&dir)?;
    let mut manifest = StageManifest { stage: name.into(), config_hash: hash, inputs, outputs: BTreeMap::new(), complete: false };
    manifest.write(root)?;
    info!("{name}: running");
    match stage {
        Stage::Phantom => phantom_stage(cfg, &dir),
        Stage::Mesh => mesh_stage(cfg, root, &dir),
        Stage::TrainEncoder => encoder_stage(cfg, root, &dir),
        Stage::Features => features_stage(cfg, root, &dir),
        Stage::TrainGnn => train_gnn_stage(cfg, root, &dir),
        Stage::Eval => eval_stage(cfg, root, &dir),
        Stage::Export => export_stage(cfg, root, &dir),
    }?;
    manifest.outputs = StageManifest::hash_outputs(root, name)?;
    manifest.complete = true;
    manifest.write(root)?;
    info!("{name}: done");
    Ok(Outcome::Ran)
}

/// Runs every stage in order, stopping at the first failure.
pub fn run_all(cfg: &RunConfig) -> Result<Vec<(Stage, Outcome)>> {
    cfg.validate()?;
    Stage::ALL.iter().map(|&s| run_stage(cfg, s).map(|o| (s, o))).collect()
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

fn load_graph(path: &Path) -> Result<CortexGraph> {
    read_graph(&mut BufReader::new(fs::File::open(path)?))
}

fn save_graph(path: &Path, g: &CortexGraph) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_graph(&mut w, g)?;
    w.flush()?;
    Ok(())
}

fn section_images(ds: &PhantomDataset) -> Vec<Option<GrayImage>> {
    ds.sections.iter().map(|s| s.image.clone()).collect()
}

fn phantom_stage(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let ds = generate_phantom(&cfg.phantom)?;
    write_dataset(dir, &ds)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshReport {
    /// Gray-matter Dice of the segmentation per present section.
    pub gray_dice: Vec<f64>,
    pub laplace: LaplaceReport,
    pub isosurface_vertices: usize,
    pub mesh_vertices: usize,
    pub mean_edge_um: f64,
    pub mean_degree: f64,
    pub graph: GraphBuildReport,
    pub split_nodes: BTreeMap<String, usize>,
    pub border_nodes: usize,
}

pub fn gray_dice(truth: &[u8], seg: &[u8]) -> f64 {
    let g = Tissue::Gray as u8;
    let (mut both, mut a, mut b) = (0usize, 0usize, 0usize);
    for (&t, &s) in truth.iter().zip(seg) {
        a += (t == g) as usize;
        b += (s == g) as usize;
        both += (t == g && s == g) as usize;
    }
    if a + b == 0 {
        1.0
    } else {
        2.0 * both as f64 / (a + b) as f64
    }
}

/// Keeps the vertices whose flag is set, dropping triangles that touch any
/// other vertex; vertex order is preserved.
fn restrict_mesh(mesh: &TriangleMesh, keep: &[bool]) -> TriangleMesh {
    let mut remap = vec![u32::MAX; mesh.vertices.len()];
    let mut vertices = Vec::new();
    for (i, v) in mesh.vertices.iter().enumerate() {
        if keep[i] {
            remap[i] = vertices.len() as u32;
            vertices.push(*v);
        }
    }
    let triangles = mesh
        .triangles
        .iter()
        .filter(|t| t.iter().all(|&i| keep[i as usize]))
        .map(|t| t.map(|i| remap[i as usize]))
        .collect();
    TriangleMesh { vertices, triangles }
}

fn mesh_stage(cfg: &RunConfig, root: &Path, dir: &Path) -> Result<()> {
    let m = &cfg.mesh;
    let ds = read_dataset(&root.join(Stage::Phantom.name()))?;
    let p = &ds.config;
    let labels: Vec<Option<Vec<u8>>> = ds
        .sections
        .par_iter()
        .map(|s| {
            s.image.as_ref().map(|img| if m.ground_truth_tissue { s.tissue.clone() } else { segment_section(img, &m.segmentation) })
        })
        .collect();
    let gray_dice: Vec<f64> =
        ds.sections.iter().zip(&labels).filter_map(|(s, l)| l.as_ref().map(|l| gray_dice(&s.tissue, l))).collect();
    let sections: Vec<StackSection> =
        ds.sections.iter().zip(&labels).map(|(s, l)| StackSection { labels: l.as_deref(), transform: s.transform }).collect();
    let geom = StackGeometry { width: p.width, height: p.height, pixel_um: p.pixel_um, thickness_um: p.thickness_um, voxel_um: m.voxel_um };
    let vol = reconstruct_stack(&sections, &geom)?;
    write_volume(&mut BufWriter::new(fs::File::create(dir.join("volume.bin"))?), &vol)?;
    let (field, laplace) = solve_laplace(&vol, &m.laplace)?;
    if !laplace.converged {
        log::warn!("Laplace relaxation stopped at residual {:.3e} after {} iterations", laplace.residual, laplace.iterations);
    }
    let iso = marching_cubes(&field, 0.5);
    let isosurface_vertices = iso.vertices.len();
    let mut surface = filter_components(&iso, m.min_component_vertices);
    if let Some(plane) = &m.cutting_plane {
        surface = split_by_plane(&surface, plane).0;
    }
    if surface.is_empty() {
        return Err(Error::Numeric("the midsurface is empty after component filtering".into()));
    }
    let remeshed = remesh_isotropic(&surface, &m.remesh)?;
    let sz = vol.spacing[2];
    let keep: Vec<bool> = remeshed.vertices.iter().map(|v| (v.z / sz).floor() >= 0.0 && ((v.z / sz).floor() as usize) < vol.dims[2]).collect();
    let mesh = restrict_mesh(&remeshed, &keep);
    let (mut g, graph_report) = mesh_to_graph(&mesh, &vol)?;
    annotate_graph(&ds, &mut g, border_um(cfg))?;
    let mut rng = ChaCha8Rng::seed_from_u64(m.split_seed);
    let n_test = (m.test_fraction * p.sections as f64).round() as usize;
    let test: Vec<usize> = rand::seq::index::sample(&mut rng, p.sections, n_test).into_vec();
    let assignment: BTreeMap<u32, Split> =
        (0..p.sections as u32).map(|k| (k, if test.contains(&(k as usize)) { Split::Test } else { Split::Train })).collect();
    g.split_nodes(&assignment)?;
    write_obj(&mut BufWriter::new(fs::File::create(dir.join("midsurface.obj"))?), &mesh)?;
    save_graph(&dir.join("graph.bin"), &g)?;
    write_split_map(&mut BufWriter::new(fs::File::create(dir.join("splits.json"))?), &assignment)?;
    let report = MeshReport {
        gray_dice,
        laplace,
        isosurface_vertices,
        mesh_vertices: mesh.vertices.len(),
        mean_edge_um: mesh.mean_edge_length(),
        mean_degree: g.mean_degree(),
        graph: graph_report,
        split_nodes: g.split_counts().into_iter().map(|(s, n)| (s.name().to_string(), n)).collect(),
        border_nodes: g.border.iter().filter(|&&b| b).count(),
    };
    info!(
        "mesh: {} nodes, mean degree {:.2}, mean edge {:.1} um",
        report.mesh_vertices, report.mean_degree, report.mean_edge_um
    );
    write_json(&dir.join("report.json"), &report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderTrainingLog {
    pub patches: usize,
    pub initial_loss: f64,
    pub loss_curve: Vec<f64>,
}

fn encoder_stage(cfg: &RunConfig, root: &Path, dir: &Path) -> Result<()> {
    let e = &cfg.encoder;
    let ds = read_dataset(&root.join(Stage::Phantom.name()))?;
    let g = load_graph(&root.join(Stage::Mesh.name()).join("graph.bin"))?;
    let images = section_images(&ds);
    let train = g.nodes_in(Split::Train);
    let patches =
        sample_patches(&g, &train, &images, ds.config.pixel_um, e.network.patch_side, e.patches_per_class, e.schedule.seed)?;
    let trained = train_encoder(&patches, &e.network, &e.augmentation, &e.schedule)?;
    save_encoder(&dir.join("encoder.ckpt"), &trained.encoder.config, &trained.store)?;
    let log = EncoderTrainingLog { patches: patches.len(), initial_loss: trained.initial_loss, loss_curve: trained.loss_curve.clone() };
    write_json(&dir.join("training.json"), &log)
}

fn features_stage(cfg: &RunConfig, root: &Path, dir: &Path) -> Result<()> {
    let ds = read_dataset(&root.join(Stage::Phantom.name()))?;
    let mut g = load_graph(&root.join(Stage::Mesh.name()).join("graph.bin"))?;
    let (encoder, store) = load_encoder(&root.join(Stage::TrainEncoder.name()).join("encoder.ckpt"))?;
    let feats = embed_nodes(&encoder, &store, &g, &section_images(&ds), ds.config.pixel_um, cfg.encoder.embed_batch)?;
    info!("features: embedded {} of {} nodes", feats.rows() - feats.missing(), g.len());
    let mut w = BufWriter::new(fs::File::create(dir.join("features.bin"))?);
    write_features(&mut w, &feats, &config_hash(&encoder.config))?;
    w.flush()?;
    let (pm, co) = synth_priors(&ds, &g, &cfg.priors)?;
    g.features = Some(feats);
    g.prior_pm = Some(pm);
    g.prior_co = Some(co);
    save_graph(&dir.join("graph.bin"), &g)
}

fn run_file(dir: &Path, spec: &ModelSpec, seed: u64, ext: &str) -> std::path::PathBuf {
    dir.join(format!("{}_seed{seed}.{ext}", spec.slug()))
}

fn train_gnn_stage(cfg: &RunConfig, root: &Path, dir: &Path) -> Result<()> {
    let g = load_graph(&root.join(Stage::Features.name()).join("graph.bin"))?;
    for spec in &cfg.gnn.models {
        for &seed in &cfg.seeds {
            info!("train-gnn: {} seed {seed}", spec.key());
            let schedule = GnnSchedule { seed, ..cfg.gnn.schedule.clone() };
            let t = train_gnn(&g, &spec.model, &schedule)?;
            save_gnn(&run_file(dir, spec, seed, "ckpt"), &t.model, InputDims::of(&g), &t.store)?;
            write_json(&run_file(dir, spec, seed, "history.json"), &t.history)?;
        }
    }
    Ok(())
}

/// Split names scored in reports; `test_interior` excludes border nodes.
pub const REPORT_SPLITS: [&str; 3] = ["test", "test_interior", "unseen"];

fn eval_stage(cfg: &RunConfig, root: &Path, dir: &Path) -> Result<()> {
    let g = load_graph(&root.join(Stage::Features.name()).join("graph.bin"))?;
    let train_dir = root.join(Stage::TrainGnn.name());
    let scored: Vec<(&str, Vec<usize>)> = vec![
        ("test", g.nodes_in(Split::Test)),
        ("test_interior", g.nodes_in(Split::Test).into_iter().filter(|&u| !g.border[u]).collect()),
        ("unseen", g.nodes_in(Split::Unseen)),
    ];
    let mut counts: BTreeMap<String, usize> = g.split_counts().into_iter().map(|(s, n)| (s.name().to_string(), n)).collect();
    counts.insert("test_interior".into(), scored[1].1.len());
    let mut report = RunReport::new(cfg.hash(), cfg.seeds.clone(), counts);
    let all: Vec<usize> = (0..g.len()).collect();
    for spec in &cfg.gnn.models {
        for &seed in &cfg.seeds {
            let ckpt = run_file(&train_dir, spec, seed, "ckpt");
            if !ckpt.exists() {
                return Err(Error::Input(format!("missing artifact {}: run `train-gnn` first", ckpt.display())));
            }
            let (model, store) = load_gnn(&ckpt)?;
            let history: Vec<EpochStats> = read_json(&run_file(&train_dir, spec, seed, "history.json"))?;
            let preds = predict(&model, &store, &g, &all, cfg.gnn.predict_batch)?;
            write_predictions(BufWriter::new(fs::File::create(run_file(dir, spec, seed, "pred"))?), &preds)?;
            let mut results = BTreeMap::new();
            for (name, nodes) in &scored {
                let (truth, pred): (Vec<u32>, Vec<u32>) =
                    nodes.iter().filter_map(|&u| Some((g.labels[u]?, preds[u]?))).unzip();
                if !truth.is_empty() {
                    results.insert(name.to_string(), macro_f1(&truth, &pred, g.num_classes)?);
                }
            }
            if let Some(r) = results.get("test") {
                info!("eval: {} seed {seed}: test macro-F1 {:.4}", spec.key(), r.macro_f1);
            }
            report.add_run(&spec.key(), ModelRun { seed, history, results });
        }
    }
    let mut json = report.to_json();
    json.push('\n');
    fs::write(dir.join("report.json"), json)?;
    let splits: Vec<&str> = REPORT_SPLITS.iter().copied().filter(|s| report.models.values().any(|m| m.macro_f1.contains_key(*s))).collect();
    fs::write(dir.join("report.txt"), report.table(&splits))?;
    Ok(())
}

fn export_stage(cfg: &RunConfig, root: &Path, dir: &Path) -> Result<()> {
    let mesh = read_obj(BufReader::new(fs::File::open(root.join(Stage::Mesh.name()).join("midsurface.obj"))?))?;
    let g = load_graph(&root.join(Stage::Features.name()).join("graph.bin"))?;
    let report: RunReport = read_json(&root.join(Stage::Eval.name()).join("report.json"))?;
    let key = if cfg.export.model.is_empty() {
        report
            .models
            .iter()
            .filter_map(|(k, m)| m.macro_f1.get("test").map(|s| (k.clone(), s.mean)))
            .fold(None, |best: Option<(String, f64)>, (k, v)| match best {
                Some((_, b)) if b >= v => best,
                _ => Some((k, v)),
            })
            .map(|(k, _)| k)
            .ok_or_else(|| Error::Input("the report holds no test scores to pick a model from".into()))?
    } else {
        cfg.export.model.clone()
    };
    let spec = cfg.gnn.models.iter().find(|s| s.key() == key).ok_or_else(|| Error::Input(format!("model {key:?} is not configured")))?;
    let seed = cfg.export.seed.unwrap_or(cfg.seeds[0]);
    let preds = read_predictions(BufReader::new(fs::File::open(run_file(&root.join(Stage::Eval.name()), spec, seed, "pred"))?))?;
    let palette = Palette::new(g.num_classes);
    export_colored_mesh(&mut BufWriter::new(fs::File::create(dir.join("labels.ply"))?), &mesh, &g.labels, &palette)?;
    export_colored_mesh(&mut BufWriter::new(fs::File::create(dir.join("predictions.ply"))?), &mesh, &preds, &palette)?;
    write_json(&dir.join("export.json"), &serde_json::json!({ "model": key, "seed": seed }))
}
