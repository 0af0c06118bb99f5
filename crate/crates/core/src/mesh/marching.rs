use std::collections::HashMap;

use super::{ScalarField, TriangleMesh};
use crate::geom::Vec3;

/// Cube corner `c` sits at offset `(c & 1, (c >> 1) & 1, (c >> 2) & 1)`.
const CORNER: [[usize; 3]; 8] = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0], [0, 0, 1], [1, 0, 1], [0, 1, 1], [1, 1, 1]];

struct Tables {
    /// Cube edges as (low corner, axis, corner a, corner b).
    edges: [(usize, usize, usize, usize); 12],
    /// Counter-clockwise corner cycles seen from outside each face.
    faces: [[usize; 4]; 6],
    /// Edge id between two corners, `usize::MAX` when not adjacent.
    edge_of: [[usize; 8]; 8],
    /// Bitmask of the two faces containing each edge.
    face_mask: [u8; 12],
}

fn tables() -> Tables {
    let mut edges = [(0, 0, 0, 0); 12];
    let mut edge_of = [[usize::MAX; 8]; 8];
    let mut n = 0;
    for a in 0..8 {
        for axis in 0..3 {
            if CORNER[a][axis] == 0 {
                let b = a | (1 << axis);
                edges[n] = (a, axis, a, b);
                edge_of[a][b] = n;
                edge_of[b][a] = n;
                n += 1;
            }
        }
    }
    let mut faces = [[0; 4]; 6];
    let mut face_mask = [0u8; 12];
    for axis in 0..3 {
        for side in 0..2 {
            let f = 2 * axis + side;
            let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
            // (u, v, axis) is right-handed, so this cycle is counter-clockwise
            // about +axis; reverse it for the low face.
            let mut cyc = [0usize; 4];
            for (m, (du, dv)) in [(0, 0), (1, 0), (1, 1), (0, 1)].into_iter().enumerate() {
                let mut c = [0usize; 3];
                c[axis] = side;
                c[u] = du;
                c[v] = dv;
                cyc[m] = c[0] | (c[1] << 1) | (c[2] << 2);
            }
            if side == 0 {
                cyc.reverse();
            }
            faces[f] = cyc;
            for m in 0..4 {
                face_mask[edge_of[cyc[m]][cyc[(m + 1) % 4]]] |= 1 << f;
            }
        }
    }
    Tables { edges, faces, edge_of, face_mask }
}

/// Extracts the `iso` level set as a triangle mesh.
///
/// Each cube is triangulated from the polygon loops formed by its face
/// segments. Every face is resolved from its four corner values alone (the
/// asymptotic decider on ambiguous faces), so neighbouring cubes agree and the
/// surface has no cracks. Triangles are oriented with normals pointing towards
/// increasing field values. Values equal to `iso` count as below.
pub fn marching_cubes(field: &ScalarField, iso: f64) -> TriangleMesh {
    let [nx, ny, nz] = field.dims;
    let mut mesh = TriangleMesh::default();
    let (lo, hi) = field.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if nx < 2 || ny < 2 || nz < 2 || !(iso > lo && iso < hi) {
        return mesh;
    }
    let t = tables();
    let mut vertex_of: HashMap<(usize, usize), u32> = HashMap::new();
    let origin = Vec3::from_array(field.origin);
    let sp = field.spacing;

    let mut val = [0.0f64; 8];
    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let mut mask = 0u8;
                for c in 0..8 {
                    val[c] = field.at(i + CORNER[c][0], j + CORNER[c][1], k + CORNER[c][2]);
                    if val[c] > iso {
                        mask |= 1 << c;
                    }
                }
                if mask == 0 || mask == 0xff {
                    continue;
                }
                let pos = |c: usize| mask >> c & 1 == 1;

                // next[e] = edge reached from crossing e along its face segment.
                let mut next = [usize::MAX; 12];
                for face in &t.faces {
                    let mut cross: [(usize, bool); 4] = [(0, false); 4];
                    let mut n = 0;
                    for m in 0..4 {
                        let (a, b) = (face[m], face[(m + 1) % 4]);
                        if pos(a) != pos(b) {
                            // `true` marks an upward (below -> above) crossing.
                            cross[n] = (t.edge_of[a][b], pos(b));
                            n += 1;
                        }
                    }
                    match n {
                        0 => {}
                        2 => {
                            let (d, u) = if cross[0].1 { (cross[1].0, cross[0].0) } else { (cross[0].0, cross[1].0) };
                            next[d] = u;
                        }
                        4 => {
                            let s = if cross[0].1 { 1 } else { 0 };
                            let e: Vec<usize> = (0..4).map(|m| cross[(s + m) % 4].0).collect();
                            let v: Vec<f64> = face.iter().map(|&c| val[c]).collect();
                            let saddle = (v[0] * v[2] - v[1] * v[3]) / (v[0] + v[2] - v[1] - v[3]);
                            if saddle > iso {
                                next[e[0]] = e[1];
                                next[e[2]] = e[3];
                            } else {
                                next[e[0]] = e[3];
                                next[e[2]] = e[1];
                            }
                        }
                        _ => unreachable!("a square face has an even number of sign changes"),
                    }
                }

                let mut used = [false; 12];
                for start in 0..12 {
                    if next[start] == usize::MAX || used[start] {
                        continue;
                    }
                    let mut lp = Vec::with_capacity(12);
                    let mut e = start;
                    while !used[e] {
                        used[e] = true;
                        lp.push(e);
                        e = next[e];
                    }
                    debug_assert_eq!(e, start);
                    let ids: Vec<u32> = lp
                        .iter()
                        .map(|&e| {
                            let (c0, axis, a, b) = t.edges[e];
                            let (gi, gj, gk) = (i + CORNER[c0][0], j + CORNER[c0][1], k + CORNER[c0][2]);
                            *vertex_of.entry((field.index(gi, gj, gk), axis)).or_insert_with(|| {
                                let s = ((iso - val[a]) / (val[b] - val[a])).clamp(1e-4, 1.0 - 1e-4);
                                let mut p = [gi as f64, gj as f64, gk as f64];
                                p[axis] += s;
                                mesh.vertices.push(origin + Vec3::new(p[0] * sp[0], p[1] * sp[1], p[2] * sp[2]));
                                (mesh.vertices.len() - 1) as u32
                            })
                        })
                        .collect();
                    let masks: Vec<u8> = lp.iter().map(|&e| t.face_mask[e]).collect();
                    triangulate_loop(&mesh.vertices, &ids, &masks, &mut mesh.triangles);
                }
            }
        }
    }
    mesh
}

fn quality(a: Vec3, b: Vec3, c: Vec3) -> f64 {
    let l = (b - a).dot(b - a) + (c - b).dot(c - b) + (a - c).dot(a - c);
    if l == 0.0 {
        return 0.0;
    }
    4.0 * 3f64.sqrt() * crate::geom::tri_area(a, b, c) / l
}

/// Triangulates a closed polygon loop maximising the worst triangle quality.
/// Chords joining two vertices on a common cube face are excluded, since the
/// neighbouring cube could create the same edge.
fn triangulate_loop(verts: &[Vec3], ids: &[u32], masks: &[u8], out: &mut Vec<[u32; 3]>) {
    let n = ids.len();
    if n == 3 {
        out.push([ids[0], ids[1], ids[2]]);
        return;
    }
    let p = |m: usize| verts[ids[m] as usize];
    let chord_ok = |a: usize, b: usize| b == a + 1 || (a == 0 && b == n - 1) || masks[a] & masks[b] == 0;
    // best[a][b]: best min-quality triangulation of the sub-polygon a..=b.
    let mut best = vec![vec![f64::NEG_INFINITY; n]; n];
    let mut split = vec![vec![usize::MAX; n]; n];
    for a in 0..n - 1 {
        best[a][a + 1] = f64::INFINITY;
    }
    for len in 2..n {
        for a in 0..n - len {
            let b = a + len;
            if !chord_ok(a, b) {
                continue;
            }
            for m in a + 1..b {
                let q = best[a][m].min(best[m][b]).min(quality(p(a), p(m), p(b)));
                if q > best[a][b] {
                    best[a][b] = q;
                    split[a][b] = m;
                }
            }
        }
    }
    if split[0][n - 1] == usize::MAX {
        for m in 1..n - 1 {
            out.push([ids[0], ids[m], ids[m + 1]]);
        }
        return;
    }
    let mut stack = vec![(0, n - 1)];
    while let Some((a, b)) = stack.pop() {
        if b <= a + 1 {
            continue;
        }
        let m = split[a][b];
        out.push([ids[a], ids[m], ids[b]]);
        stack.push((a, m));
        stack.push((m, b));
    }
}
