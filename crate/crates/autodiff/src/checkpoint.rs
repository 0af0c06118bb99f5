//! Parameter checkpoints: an 8-byte little-endian header length, a JSON
//! header listing every parameter's name, shape and byte offset, then the
//! values as little-endian `f32`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AutodiffError, Result};
use crate::params::ParamStore;
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    trainable: bool,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    params: Vec<Entry>,
    #[serde(default)]
    meta: serde_json::Value,
}

const FORMAT: &str = "cyto-params-f32-le";

pub fn write_checkpoint<T: Real>(mut w: impl Write, store: &ParamStore<T>, meta: serde_json::Value) -> Result<()> {
    let mut offset = 0;
    let params = store
        .iter()
        .map(|(_, p)| {
            let e = Entry { name: p.name.clone(), shape: p.value.shape().to_vec(), offset, trainable: p.trainable };
            offset += p.value.numel() * 4;
            e
        })
        .collect();
    let header = serde_json::to_vec(&Header { format: FORMAT.into(), params, meta })
        .map_err(|e| AutodiffError::Checkpoint(e.to_string()))?;
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(&header)?;
    for (_, p) in store.iter() {
        for &v in p.value.data() {
            w.write_all(&(v.as_f64() as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<T: Real>(mut r: impl Read) -> Result<(ParamStore<T>, serde_json::Value)> {
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    if len > 1 << 30 {
        return Err(AutodiffError::Checkpoint(format!("implausible header length {len}")));
    }
    let mut header = vec![0u8; len];
    r.read_exact(&mut header)?;
    let header: Header = serde_json::from_slice(&header).map_err(|e| AutodiffError::Checkpoint(e.to_string()))?;
    if header.format != FORMAT {
        return Err(AutodiffError::Checkpoint(format!("unknown format {:?}", header.format)));
    }
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    let mut store = ParamStore::new();
    for e in header.params {
        let n: usize = e.shape.iter().product();
        let bytes = body
            .get(e.offset..e.offset + 4 * n)
            .ok_or_else(|| AutodiffError::Checkpoint(format!("{} extends past end of data", e.name)))?;
        let data = bytes.chunks_exact(4).map(|c| T::of(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)).collect();
        store.add(e.name, Tensor::new(e.shape, data)?, e.trainable);
    }
    Ok((store, header.meta))
}

pub fn save_checkpoint<T: Real>(path: &Path, store: &ParamStore<T>, meta: serde_json::Value) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, store, meta)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<(ParamStore<T>, serde_json::Value)> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
