use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{CortexGraph, NodeMatrix, Split};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"CYTOGRPH";
const FORMAT: &str = "cyto-graph-v1";

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    nodes: usize,
    edges: usize,
    num_classes: usize,
    blocks: Vec<Block>,
}

#[derive(Serialize, Deserialize)]
struct Block {
    name: String,
    dtype: String,
    /// Values per node (or per edge for the adjacency block).
    cols: usize,
    offset: usize,
    bytes: usize,
}

#[derive(Default)]
struct Payload {
    blocks: Vec<Block>,
    data: Vec<u8>,
}

impl Payload {
    fn push(&mut self, name: &str, dtype: &str, cols: usize, bytes: Vec<u8>) {
        self.blocks.push(Block { name: name.into(), dtype: dtype.into(), cols, offset: self.data.len(), bytes: bytes.len() });
        self.data.extend(bytes);
    }
}

fn le<T: Copy, const N: usize>(xs: impl IntoIterator<Item = T>, f: impl Fn(T) -> [u8; N]) -> Vec<u8> {
    xs.into_iter().flat_map(f).collect()
}

/// Writes the container: 8-byte magic, u64 LE header length, JSON header,
/// then little-endian attribute blocks (adjacency as sorted u32 pairs).
pub fn write_graph<W: Write>(w: &mut W, g: &CortexGraph) -> Result<()> {
    g.validate()?;
    let mut p = Payload::default();
    p.push("positions", "f64", 3, le(g.positions.iter().flatten().copied(), f64::to_le_bytes));
    p.push("sections", "u32", 1, le(g.sections.iter().copied(), u32::to_le_bytes));
    p.push("coords", "f64", 2, le(g.coords.iter().flatten().copied(), f64::to_le_bytes));
    p.push("labels", "i32", 1, le(g.labels.iter().map(|l| l.map_or(-1, |v| v as i32)), i32::to_le_bytes));
    p.push("splits", "u8", 1, g.splits.iter().map(|&s| s as u8).collect());
    p.push("border", "u8", 1, g.border.iter().map(|&b| b as u8).collect());
    let edges = g.edges();
    p.push("edges", "u32", 2, le(edges.iter().flat_map(|&(a, b)| [a, b]), u32::to_le_bytes));
    for (name, m) in [("features", &g.features), ("prior_pm", &g.prior_pm), ("prior_co", &g.prior_co)] {
        if let Some(m) = m {
            p.push(name, "f32", m.dim, le(m.data.iter().copied(), f32::to_le_bytes));
            p.push(&format!("{name}_present"), "u8", 1, m.present.iter().map(|&b| b as u8).collect());
        }
    }
    let header = Header { format: FORMAT.into(), nodes: g.len(), edges: edges.len(), num_classes: g.num_classes, blocks: p.blocks };
    let json = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    w.write_all(&p.data)?;
    Ok(())
}

pub fn read_graph<R: Read>(r: &mut R) -> Result<CortexGraph> {
    let bad = |m: String| Error::Input(format!("graph file: {m}"));
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("bad magic".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    if len > 1 << 24 {
        return Err(bad(format!("implausible header length {len}")));
    }
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let h: Header = serde_json::from_slice(&json)?;
    if h.format != FORMAT {
        return Err(bad(format!("unsupported format {:?}", h.format)));
    }
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    let blocks: BTreeMap<&str, &Block> = h.blocks.iter().map(|b| (b.name.as_str(), b)).collect();
    let get = |name: &str, dtype: &str, width: usize, rows: usize| -> Result<Option<(&[u8], usize)>> {
        let Some(b) = blocks.get(name) else { return Ok(None) };
        if b.dtype != dtype || b.bytes != rows * b.cols * width || b.offset + b.bytes > data.len() {
            return Err(bad(format!("block {name} is malformed or truncated")));
        }
        Ok(Some((&data[b.offset..b.offset + b.bytes], b.cols)))
    };
    let need = |name: &str, dtype: &str, width: usize, rows: usize| {
        get(name, dtype, width, rows)?.ok_or_else(|| bad(format!("missing block {name}")))
    };
    let n = h.nodes;
    let f64s = |b: &[u8]| b.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect::<Vec<_>>();
    let u32s = |b: &[u8]| b.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect::<Vec<_>>();

    let pos = f64s(need("positions", "f64", 8, n)?.0);
    let coords = f64s(need("coords", "f64", 8, n)?.0);
    let edge_vals = u32s(need("edges", "u32", 4, h.edges)?.0);
    let edges: Vec<(u32, u32)> = edge_vals.chunks_exact(2).map(|c| (c[0], c[1])).collect();
    let mut g = CortexGraph::new(pos.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(), &edges)?;
    g.num_classes = h.num_classes;
    g.sections = u32s(need("sections", "u32", 4, n)?.0);
    g.coords = coords.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
    g.labels = need("labels", "i32", 4, n)?
        .0
        .chunks_exact(4)
        .map(|c| {
            let v = i32::from_le_bytes(c.try_into().unwrap());
            (v >= 0).then_some(v as u32)
        })
        .collect();
    g.splits = need("splits", "u8", 1, n)?
        .0
        .iter()
        .map(|&s| Split::from_u8(s).ok_or_else(|| bad(format!("unknown split code {s}"))))
        .collect::<Result<_>>()?;
    g.border = need("border", "u8", 1, n)?.0.iter().map(|&b| b != 0).collect();
    let matrix = |name: &str| -> Result<Option<NodeMatrix>> {
        let Some(b) = blocks.get(name) else { return Ok(None) };
        let (raw, dim) = need(name, "f32", 4, n)?;
        debug_assert_eq!(dim, b.cols);
        let present = need(&format!("{name}_present"), "u8", 1, n)?.0.iter().map(|&x| x != 0).collect();
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Some(NodeMatrix { dim, data, present }))
    };
    g.features = matrix("features")?;
    g.prior_pm = matrix("prior_pm")?;
    g.prior_co = matrix("prior_co")?;
    g.validate()?;
    Ok(g)
}

/// Section id to split, as a JSON object with string keys.
pub fn write_split_map<W: Write>(w: &mut W, m: &BTreeMap<u32, Split>) -> Result<()> {
    serde_json::to_writer_pretty(&mut *w, m)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn read_split_map<R: Read>(r: &mut R) -> Result<BTreeMap<u32, Split>> {
    Ok(serde_json::from_reader(r)?)
}
