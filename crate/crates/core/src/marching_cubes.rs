//! Regular lattices and iso-surface extraction.
//!
//! The per-configuration triangle table is built at first use rather than
//! copied in: on every cube face the inside corners are walked counter-clockwise
//! (seen from outside the cube) and each run of inside corners contributes one
//! segment, running from the crossing where the walk enters the run to the
//! crossing where it leaves. Faces shared by two cells see the same corner
//! values and make the same choice, so the output has no cracks, and the
//! segments chain into closed loops that are fan-triangulated with normals
//! pointing from high to low values.

use std::collections::HashMap;
use std::sync::OnceLock;

use crate::error::{invalid, Result};
use crate::mesh::TriMesh;
use crate::spatial::Point3;

/// `R^3` lattice points spanning `[min, max]`; `x` varies fastest.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Grid {
    pub resolution: usize,
    pub min: Point3,
    pub max: Point3,
}

impl Grid {
    pub fn new(resolution: usize, min: Point3, max: Point3) -> Result<Self> {
        if resolution < 2 {
            return Err(invalid("grid resolution must be at least 2"));
        }
        if (0..3).any(|a| !(max[a] > min[a]) || !min[a].is_finite() || !max[a].is_finite()) {
            return Err(invalid("grid bounds must be finite with max > min on every axis"));
        }
        Ok(Self { resolution, min, max })
    }

    /// Box `[lo, hi]` grown by `padding` times its extent on every side.
    /// Flat axes are widened to the largest extent so the box never degenerates.
    pub fn around(lo: Point3, hi: Point3, padding: f64, resolution: usize) -> Result<Self> {
        let largest = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
        if !(largest > 0.0) {
            return Err(crate::Error::DegenerateVolume("points span zero volume".into()));
        }
        let mut min = lo;
        let mut max = hi;
        for a in 0..3 {
            let extent = (hi[a] - lo[a]).max(1e-3 * largest);
            let mid = 0.5 * (lo[a] + hi[a]);
            min[a] = mid - extent * (0.5 + padding);
            max[a] = mid + extent * (0.5 + padding);
        }
        Self::new(resolution, min, max)
    }

    pub fn n_points(&self) -> usize {
        self.resolution.pow(3)
    }

    pub fn spacing(&self) -> Point3 {
        std::array::from_fn(|a| (self.max[a] - self.min[a]) / (self.resolution - 1) as f64)
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.resolution * (j + self.resolution * k)
    }

    pub fn point(&self, i: usize, j: usize, k: usize) -> Point3 {
        let h = self.spacing();
        [self.min[0] + i as f64 * h[0], self.min[1] + j as f64 * h[1], self.min[2] + k as f64 * h[2]]
    }

    pub fn lattice(&self) -> Vec<Point3> {
        let r = self.resolution;
        let mut out = Vec::with_capacity(self.n_points());
        for k in 0..r {
            for j in 0..r {
                for i in 0..r {
                    out.push(self.point(i, j, k));
                }
            }
        }
        out
    }

    pub fn cell_diagonal(&self) -> f64 {
        crate::spatial::norm(&self.spacing())
    }
}

// Corner c sits at offset (c & 1, c >> 1 & 1, c >> 2 & 1).
// Edge e joins corner EDGES[e].0 to EDGES[e].0 + (1 << axis).
const EDGES: [(usize, usize); 12] = {
    let mut e = [(0, 0); 12];
    let mut n = 0;
    let mut axis = 0;
    while axis < 3 {
        let mut c = 0;
        while c < 8 {
            if c & (1 << axis) == 0 {
                e[n] = (c, axis);
                n += 1;
            }
            c += 1;
        }
        axis += 1;
    }
    e
};

fn edge_between(a: usize, b: usize) -> usize {
    let (lo, hi) = (a.min(b), a.max(b));
    let axis = (hi ^ lo).trailing_zeros() as usize;
    EDGES.iter().position(|&(c, ax)| c == lo && ax == axis).expect("corners share an edge")
}

/// Counter-clockwise corner cycles of the six faces, seen from outside.
fn face_cycles() -> Vec<[usize; 4]> {
    let mut faces = Vec::with_capacity(6);
    for a in 0..3 {
        let (u, v) = ((a + 1) % 3, (a + 2) % 3);
        for side in 0..2 {
            let corner = |cu: usize, cv: usize| (side << a) | (cu << u) | (cv << v);
            let mut cyc = [corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)];
            if side == 0 {
                cyc.reverse();
            }
            faces.push(cyc);
        }
    }
    faces
}

fn build_config(config: usize, faces: &[[usize; 4]]) -> Vec<[u8; 3]> {
    let inside = |c: usize| config >> c & 1 == 1;
    let mut next = [usize::MAX; 12];
    for cyc in faces {
        let mut enter = None;
        // start the walk just after an outside corner so every run is seen whole
        let Some(start) = (0..4).find(|&k| !inside(cyc[k])) else { continue };
        for step in 0..4 {
            let a = cyc[(start + step) % 4];
            let b = cyc[(start + step + 1) % 4];
            match (inside(a), inside(b)) {
                (false, true) => enter = Some(edge_between(a, b)),
                (true, false) => {
                    let from = enter.take().expect("a run is entered before it is left");
                    next[from] = edge_between(a, b);
                }
                _ => {}
            }
        }
    }
    let mut seen = [false; 12];
    let mut tris = Vec::new();
    for e0 in 0..12 {
        if next[e0] == usize::MAX || seen[e0] {
            continue;
        }
        let mut ring = vec![e0];
        seen[e0] = true;
        let mut e = next[e0];
        while e != e0 {
            seen[e] = true;
            ring.push(e);
            e = next[e];
        }
        // triangulate a canonical form so a loop and its reverse get mirrored triangles
        let first = (0..ring.len()).min_by_key(|&k| ring[k]).unwrap_or(0);
        ring.rotate_left(first);
        let reversed = ring[1] > ring[ring.len() - 1];
        if reversed {
            ring[1..].reverse();
        }
        let ring: Vec<u8> = ring.iter().map(|&e| e as u8).collect();
        let loop_tris = triangulate_loop(&ring).expect("every loop has a triangulation without face chords");
        tris.extend(loop_tris.into_iter().map(|t| if reversed { [t[0], t[2], t[1]] } else { t }));
    }
    tris
}

/// True when two cube edges lie on a common face.
fn share_face(e1: u8, e2: u8) -> bool {
    let ((c1, a1), (c2, a2)) = (EDGES[e1 as usize], EDGES[e2 as usize]);
    (0..3).any(|f| f != a1 && f != a2 && (c1 >> f & 1) == (c2 >> f & 1))
}

/// Triangulates a loop without chords that run along a cube face. Such a chord
/// would also be an edge of the neighbouring cell and be shared by more than two
/// triangles.
fn triangulate_loop(ring: &[u8]) -> Option<Vec<[u8; 3]>> {
    let k = ring.len();
    let chord_ok = |i: usize, j: usize| j == i + 1 || (i == 0 && j == k - 1) || !share_face(ring[i], ring[j]);
    fn split(ring: &[u8], i: usize, j: usize, ok: &dyn Fn(usize, usize) -> bool, out: &mut Vec<[u8; 3]>) -> bool {
        if j - i < 2 {
            return true;
        }
        for mid in i + 1..j {
            if ok(i, mid) && ok(mid, j) {
                let len = out.len();
                out.push([ring[i], ring[mid], ring[j]]);
                if split(ring, i, mid, ok, out) && split(ring, mid, j, ok, out) {
                    return true;
                }
                out.truncate(len);
            }
        }
        false
    }
    let mut out = Vec::with_capacity(k - 2);
    split(ring, 0, k - 1, &chord_ok, &mut out).then_some(out)
}

fn table() -> &'static [Vec<[u8; 3]>] {
    static TABLE: OnceLock<Vec<Vec<[u8; 3]>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let faces = face_cycles();
        (0..256).map(|c| build_config(c, &faces)).collect()
    })
}

/// Triangulates `{x : value(x) = iso}` where a lattice point is inside when its
/// value exceeds `iso`. Shared edge vertices are welded; normals point towards
/// lower values.
pub fn marching_cubes(values: &[f64], grid: &Grid, iso: f64) -> Result<TriMesh> {
    crate::error::check_dim(grid.n_points(), values.len())?;
    if values.iter().any(|v| !v.is_finite()) || !iso.is_finite() {
        return Err(invalid("marching cubes needs finite values"));
    }
    let r = grid.resolution;
    let table = table();
    let mut vertices: Vec<Point3> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    let mut welded: HashMap<usize, u32> = HashMap::new();
    let corner_index = |i: usize, j: usize, k: usize, c: usize| grid.index(i + (c & 1), j + (c >> 1 & 1), k + (c >> 2 & 1));

    for k in 0..r - 1 {
        for j in 0..r - 1 {
            for i in 0..r - 1 {
                let mut config = 0;
                for c in 0..8 {
                    if values[corner_index(i, j, k, c)] > iso {
                        config |= 1 << c;
                    }
                }
                let tris = &table[config];
                if tris.is_empty() {
                    continue;
                }
                let mut vert = |e: u8| -> u32 {
                    let (c, axis) = EDGES[e as usize];
                    let p0 = corner_index(i, j, k, c);
                    let p1 = corner_index(i, j, k, c | (1 << axis));
                    *welded.entry(3 * p0 + axis).or_insert_with(|| {
                        let (v0, v1) = (values[p0], values[p1]);
                        let t = (iso - v0) / (v1 - v0);
                        let (ci, cj, ck) = (i + (c & 1), j + (c >> 1 & 1), k + (c >> 2 & 1));
                        let mut p = grid.point(ci, cj, ck);
                        p[axis] += t * grid.spacing()[axis];
                        vertices.push(p);
                        (vertices.len() - 1) as u32
                    })
                };
                for t in tris {
                    let tri = [vert(t[0]), vert(t[1]), vert(t[2])];
                    triangles.push(tri);
                }
            }
        }
    }
    TriMesh::new(vertices, triangles)
}
