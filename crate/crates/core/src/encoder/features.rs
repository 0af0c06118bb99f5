use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use cyto_autodiff::{Mode, ParamStore, Session, Tensor};

use super::network::{Encoder, EncoderConfig};
use super::train::PatchDataset;
use crate::error::{Error, Result};
use crate::graph::{CortexGraph, NodeMatrix};
use crate::image::GrayImage;

/// Pixel holding in-section coordinate `p` (micrometres).
pub fn pixel_of(p: [f64; 2], pixel_um: f64) -> (i64, i64) {
    ((p[0] / pixel_um).floor() as i64, (p[1] / pixel_um).floor() as i64)
}

/// Mirror-padded patch of `side` pixels centred on the node's coordinate, or
/// `None` when the node's section image is missing.
pub fn node_patch(g: &CortexGraph, u: usize, sections: &[Option<GrayImage>], pixel_um: f64, side: usize) -> Option<Vec<f32>> {
    let img = sections.get(g.sections[u] as usize)?.as_ref()?;
    let (cx, cy) = pixel_of(g.coords[u], pixel_um);
    Some(img.patch(cx, cy, side))
}

/// Draws `per_class` patches for every class, uniformly with replacement from
/// the labelled candidate nodes that have a section image. Small classes are
/// thereby oversampled. Classes without candidates stay empty.
pub fn sample_patches(
    g: &CortexGraph,
    candidates: &[usize],
    sections: &[Option<GrayImage>],
    pixel_um: f64,
    side: usize,
    per_class: usize,
    seed: u64,
) -> Result<PatchDataset> {
    let mut by_class = vec![Vec::new(); g.num_classes];
    for &u in candidates {
        let Some(c) = g.labels[u] else { continue };
        let has_image = sections.get(g.sections[u] as usize).is_some_and(|s| s.is_some());
        if has_image {
            by_class[c as usize].push(u);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = PatchDataset::new(side, g.num_classes);
    for (c, nodes) in by_class.iter().enumerate() {
        if nodes.is_empty() {
            continue;
        }
        for _ in 0..per_class {
            let u = nodes[rng.random_range(0..nodes.len())];
            let patch = node_patch(g, u, sections, pixel_um, side).expect("candidate has image");
            data.push(&patch, c)?;
        }
    }
    Ok(data)
}

/// Eval-mode embeddings `h_u = f(x_u)` for every node. Nodes whose section
/// image is missing are left absent in the returned matrix.
pub fn embed_nodes(
    encoder: &Encoder,
    store: &ParamStore<f32>,
    g: &CortexGraph,
    sections: &[Option<GrayImage>],
    pixel_um: f64,
    batch: usize,
) -> Result<NodeMatrix> {
    let side = encoder.config.patch_side;
    let dim = encoder.config.embed_dim();
    let nodes: Vec<usize> = (0..g.len()).filter(|&u| node_patch_available(g, u, sections)).collect();
    let chunks: Vec<Vec<(usize, Vec<f32>)>> = nodes
        .par_chunks(batch.max(1))
        .map(|chunk| -> Result<Vec<(usize, Vec<f32>)>> {
            let mut px = Vec::with_capacity(chunk.len() * side * side);
            for &u in chunk {
                px.extend(node_patch(g, u, sections, pixel_um, side).expect("filtered"));
            }
            let sess = Session::new(store, Mode::Eval, 0);
            let x = sess.input(Tensor::new(vec![chunk.len(), 1, side, side], px)?);
            let h = encoder.embed(&sess, x)?.value();
            Ok(chunk.iter().enumerate().map(|(i, &u)| (u, h.row(i).to_vec())).collect())
        })
        .collect::<Result<_>>()?;
    let mut out = NodeMatrix::zeros(g.len(), dim);
    for (u, row) in chunks.into_iter().flatten() {
        out.set_row(u, &row);
    }
    Ok(out)
}

fn node_patch_available(g: &CortexGraph, u: usize, sections: &[Option<GrayImage>]) -> bool {
    sections.get(g.sections[u] as usize).is_some_and(|s| s.is_some())
}

/// Hex SHA-256 of the canonical JSON form of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("serializable config");
    hex::encode(Sha256::digest(&json))
}

const MAGIC: &[u8; 8] = b"CYTOFEAT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureHeader {
    pub nodes: usize,
    pub dim: usize,
    pub encoder_config_hash: String,
}

/// Writes `MAGIC`, a u64 header length, the JSON header, then one row of
/// `dim` little-endian f32 per node and one presence byte per node.
pub fn write_features(mut w: impl Write, m: &NodeMatrix, encoder_config_hash: &str) -> Result<()> {
    let header = FeatureHeader { nodes: m.rows(), dim: m.dim, encoder_config_hash: encoder_config_hash.into() };
    let json = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    let mut buf = Vec::with_capacity(m.data.len() * 4 + m.rows());
    m.data.iter().for_each(|v| buf.extend(v.to_le_bytes()));
    buf.extend(m.present.iter().map(|&p| p as u8));
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_features(mut r: impl Read) -> Result<(NodeMatrix, FeatureHeader)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Input("not a feature file".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    if len > 1 << 20 {
        return Err(Error::Input(format!("feature header of {len} bytes")));
    }
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let header: FeatureHeader = serde_json::from_slice(&json)?;
    let mut data = vec![0u8; header.nodes * header.dim * 4];
    r.read_exact(&mut data)?;
    let mut present = vec![0u8; header.nodes];
    r.read_exact(&mut present)?;
    let m = NodeMatrix {
        dim: header.dim,
        data: data.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect(),
        present: present.iter().map(|&p| p != 0).collect(),
    };
    Ok((m, header))
}

/// Stores the encoder parameters with the config in the checkpoint metadata.
pub fn save_encoder(path: &std::path::Path, config: &EncoderConfig, store: &ParamStore<f32>) -> Result<()> {
    let meta = serde_json::json!({ "encoder": config, "config_hash": config_hash(config) });
    Ok(cyto_autodiff::save_checkpoint(path, store, meta)?)
}

pub fn load_encoder(path: &std::path::Path) -> Result<(Encoder, ParamStore<f32>)> {
    let (store, meta) = cyto_autodiff::load_checkpoint::<f32>(path)?;
    let config: EncoderConfig = serde_json::from_value(meta["encoder"].clone())
        .map_err(|e| Error::Input(format!("checkpoint lacks an encoder config: {e}")))?;
    let enc = Encoder::attach(&config, &store)?;
    Ok((enc, store))
}
