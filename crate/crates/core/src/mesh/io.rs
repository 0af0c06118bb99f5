//! Mesh and volume interchange: ASCII OBJ, binary PLY with vertex colours,
//! and a raw label volume with JSON header.

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use super::{LabelVolume, RigidTransform2D, TriangleMesh};
use crate::error::{Error, Result};
use crate::geom::Vec3;

pub fn write_obj<W: Write>(w: &mut W, mesh: &TriangleMesh) -> Result<()> {
    for v in &mesh.vertices {
        writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for t in &mesh.triangles {
        writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    Ok(())
}

/// Reads `v` and triangular `f` records; other records are ignored.
pub fn read_obj<R: BufRead>(r: R) -> Result<TriangleMesh> {
    let mut mesh = TriangleMesh::default();
    for (ln, line) in r.lines().enumerate() {
        let line = line?;
        let mut it = line.split_whitespace();
        let bad = || Error::Input(format!("obj line {}: {line:?}", ln + 1));
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it.take(3).map(|s| s.parse().map_err(|_| bad())).collect::<Result<_>>()?;
                if c.len() != 3 {
                    return Err(bad());
                }
                mesh.vertices.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<u32> = it
                    .map(|s| s.split('/').next().unwrap_or("").parse::<u32>().map_err(|_| bad()).and_then(|i| i.checked_sub(1).ok_or_else(bad)))
                    .collect::<Result<_>>()?;
                if idx.len() != 3 {
                    return Err(Error::Input(format!("obj line {}: only triangles are supported", ln + 1)));
                }
                mesh.triangles.push([idx[0], idx[1], idx[2]]);
            }
            _ => {}
        }
    }
    mesh.validate()?;
    Ok(mesh)
}

/// Binary little-endian PLY with float positions and uchar RGB per vertex.
pub fn write_ply<W: Write>(w: &mut W, mesh: &TriangleMesh, colors: &[[u8; 3]]) -> Result<()> {
    if colors.len() != mesh.vertices.len() {
        return Err(Error::Input(format!("{} colours for {} vertices", colors.len(), mesh.vertices.len())));
    }
    write!(
        w,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nelement face {}\n\
         property list uchar int vertex_indices\nend_header\n",
        mesh.vertices.len(),
        mesh.triangles.len()
    )?;
    let mut buf = Vec::with_capacity(mesh.vertices.len() * 15 + mesh.triangles.len() * 13);
    for (v, c) in mesh.vertices.iter().zip(colors) {
        for x in [v.x, v.y, v.z] {
            buf.extend((x as f32).to_le_bytes());
        }
        buf.extend(c);
    }
    for t in &mesh.triangles {
        buf.push(3);
        for &i in t {
            buf.extend((i as i32).to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Reads the PLY layout produced by [`write_ply`].
pub fn read_ply<R: BufRead>(mut r: R) -> Result<(TriangleMesh, Vec<[u8; 3]>)> {
    let bad = |m: &str| Error::Input(format!("ply: {m}"));
    let mut header = Vec::new();
    loop {
        let mut line = String::new();
        if r.read_line(&mut line)? == 0 {
            return Err(bad("unexpected end of header"));
        }
        let line = line.trim_end().to_string();
        if line == "end_header" {
            break;
        }
        header.push(line);
    }
    let expect = [
        "ply",
        "format binary_little_endian 1.0",
        "",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        "",
        "property list uchar int vertex_indices",
    ];
    if header.len() != expect.len() {
        return Err(bad("unsupported header layout"));
    }
    let count = |line: &str, elem: &str| -> Result<usize> {
        line.strip_prefix(&format!("element {elem} ")).and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad element line"))
    };
    for (h, e) in header.iter().zip(expect) {
        if !e.is_empty() && h != e {
            return Err(bad(&format!("unexpected header line {h:?}")));
        }
    }
    let nv = count(&header[2], "vertex")?;
    let nf = count(&header[9], "face")?;
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() != nv * 15 + nf * 13 {
        return Err(bad("body length does not match header"));
    }
    let f = |o: usize| f32::from_le_bytes(body[o..o + 4].try_into().unwrap()) as f64;
    let mut mesh = TriangleMesh::default();
    let mut colors = Vec::with_capacity(nv);
    for i in 0..nv {
        let o = i * 15;
        mesh.vertices.push(Vec3::new(f(o), f(o + 4), f(o + 8)));
        colors.push([body[o + 12], body[o + 13], body[o + 14]]);
    }
    for i in 0..nf {
        let o = nv * 15 + i * 13;
        if body[o] != 3 {
            return Err(bad("non-triangular face"));
        }
        let idx = |k: usize| i32::from_le_bytes(body[o + 1 + 4 * k..o + 5 + 4 * k].try_into().unwrap());
        let t = [idx(0), idx(1), idx(2)];
        if t.iter().any(|&v| v < 0) {
            return Err(bad("negative vertex index"));
        }
        mesh.triangles.push(t.map(|v| v as u32));
    }
    mesh.validate()?;
    Ok((mesh, colors))
}

const VOLUME_MAGIC: &[u8; 8] = b"CYTOVOL1";

#[derive(Serialize, Deserialize)]
struct VolumeHeader {
    dims: [usize; 3],
    spacing_um: [f64; 3],
    transforms: Vec<RigidTransform2D>,
    missing: Vec<bool>,
}

/// Magic, u64 LE header length, JSON header, then one label byte per voxel
/// (x fastest, section index slowest).
pub fn write_volume<W: Write>(w: &mut W, vol: &LabelVolume) -> Result<()> {
    let h = VolumeHeader { dims: vol.dims, spacing_um: vol.spacing, transforms: vol.transforms.clone(), missing: vol.missing.clone() };
    let json = serde_json::to_vec(&h)?;
    w.write_all(VOLUME_MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    w.write_all(&vol.labels)?;
    Ok(())
}

pub fn read_volume<R: Read>(r: &mut R) -> Result<LabelVolume> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != VOLUME_MAGIC {
        return Err(Error::Input("volume file: bad magic".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    if len > 1 << 26 {
        return Err(Error::Input(format!("volume file: implausible header length {len}")));
    }
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let h: VolumeHeader = serde_json::from_slice(&json)?;
    let mut labels = Vec::new();
    r.read_to_end(&mut labels)?;
    let mut vol = LabelVolume::new(h.dims, h.spacing_um, labels)?;
    if h.transforms.len() != h.dims[2] || h.missing.len() != h.dims[2] {
        return Err(Error::Input("volume file: per-section arrays do not match depth".into()));
    }
    vol.transforms = h.transforms;
    vol.missing = h.missing;
    Ok(vol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tetra() -> TriangleMesh {
        TriangleMesh::new(
            vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.5, 0.0, 0.0), Vec3::new(0.0, 2.25, 0.0), Vec3::new(0.0, 0.0, -3.0)],
            vec![[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]],
        )
        .unwrap()
    }

    #[test]
    fn obj_round_trip() {
        let m = tetra();
        let mut buf = Vec::new();
        write_obj(&mut buf, &m).unwrap();
        assert_eq!(read_obj(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn ply_round_trip() {
        let m = tetra();
        let colors = vec![[1, 2, 3], [255, 0, 7], [9, 9, 9], [128, 64, 32]];
        let mut buf = Vec::new();
        write_ply(&mut buf, &m, &colors).unwrap();
        let (back, c) = read_ply(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        assert_eq!(c, colors);
        assert!(write_ply(&mut Vec::new(), &m, &colors[..2]).is_err());
    }

    #[test]
    fn volume_round_trip() {
        let mut v = LabelVolume::new([3, 2, 2], [25.0, 25.0, 100.0], vec![0, 1, 2, 2, 1, 0, 0, 0, 1, 1, 2, 2]).unwrap();
        v.transforms[1] = RigidTransform2D::new(0.1, -3.0, 4.5);
        v.missing[0] = true;
        let mut buf = Vec::new();
        write_volume(&mut buf, &v).unwrap();
        assert_eq!(read_volume(&mut buf.as_slice()).unwrap(), v);
    }
}
