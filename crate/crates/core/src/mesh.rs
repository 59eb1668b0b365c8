//! Indexed triangle meshes.

use std::collections::HashMap;

use crate::error::{invalid, Result};
use crate::spatial::{cross, norm, sub, Point3};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Point3>,
    triangles: Vec<[u32; 3]>,
}

impl TriMesh {
    /// Builds a mesh after checking index bounds and rejecting repeated indices.
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let n = vertices.len();
        for (f, t) in triangles.iter().enumerate() {
            if t.iter().any(|&i| i as usize >= n) {
                return Err(invalid(format!("triangle {f} references a vertex beyond {n}")));
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(invalid(format!("triangle {f} repeats a vertex index")));
            }
        }
        if vertices.iter().flatten().any(|c| !c.is_finite()) {
            return Err(invalid("mesh vertices must be finite"));
        }
        Ok(Self { vertices, triangles })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn corners(&self, f: usize) -> [Point3; 3] {
        let t = self.triangles[f];
        [self.vertices[t[0] as usize], self.vertices[t[1] as usize], self.vertices[t[2] as usize]]
    }

    /// Cross product of the two edges leaving the first corner (twice the area, along the normal).
    pub fn face_cross(&self, f: usize) -> Point3 {
        let [a, b, c] = self.corners(f);
        cross(&sub(&b, &a), &sub(&c, &a))
    }

    pub fn face_area(&self, f: usize) -> f64 {
        0.5 * norm(&self.face_cross(f))
    }

    pub fn face_normal(&self, f: usize) -> Option<Point3> {
        let c = self.face_cross(f);
        let l = norm(&c);
        (l > 0.0).then(|| [c[0] / l, c[1] / l, c[2] / l])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|f| self.face_area(f)).sum()
    }

    /// Area-weighted unit vertex normals; isolated vertices get a zero vector.
    pub fn vertex_normals(&self) -> Vec<Point3> {
        let mut acc = vec![[0.0; 3]; self.vertices.len()];
        for (f, t) in self.triangles.iter().enumerate() {
            let c = self.face_cross(f);
            for &i in t {
                for a in 0..3 {
                    acc[i as usize][a] += c[a];
                }
            }
        }
        for n in &mut acc {
            let l = norm(n);
            if l > 0.0 {
                n.iter_mut().for_each(|v| *v /= l);
            }
        }
        acc
    }

    fn edge_uses(&self) -> HashMap<(u32, u32), usize> {
        let mut edges = HashMap::with_capacity(self.triangles.len() * 3 / 2);
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        edges
    }

    /// `V - E + F` counting only vertices referenced by a triangle.
    pub fn euler_characteristic(&self) -> i64 {
        let mut used = vec![false; self.vertices.len()];
        for t in &self.triangles {
            for &i in t {
                used[i as usize] = true;
            }
        }
        let v = used.iter().filter(|u| **u).count() as i64;
        v - self.edge_uses().len() as i64 + self.triangles.len() as i64
    }

    /// True when every edge is shared by exactly two triangles.
    pub fn is_watertight(&self) -> bool {
        !self.triangles.is_empty() && self.edge_uses().values().all(|&c| c == 2)
    }

    /// Signed enclosed volume; positive for closed meshes with outward normals.
    pub fn signed_volume(&self) -> f64 {
        (0..self.triangles.len())
            .map(|f| {
                let [a, b, c] = self.corners(f);
                crate::spatial::dot(&a, &cross(&b, &c)) / 6.0
            })
            .sum()
    }

    pub fn bounds(&self) -> Option<(Point3, Point3)> {
        let first = *self.vertices.first()?;
        let (mut lo, mut hi) = (first, first);
        for v in &self.vertices {
            for a in 0..3 {
                lo[a] = lo[a].min(v[a]);
                hi[a] = hi[a].max(v[a]);
            }
        }
        Some((lo, hi))
    }

    pub fn map_vertices(&self, f: impl Fn(&Point3) -> Point3) -> Self {
        Self { vertices: self.vertices.iter().map(f).collect(), triangles: self.triangles.clone() }
    }

    /// Same surface with every triangle's winding reversed.
    pub fn flipped(&self) -> Self {
        Self { vertices: self.vertices.clone(), triangles: self.triangles.iter().map(|t| [t[0], t[2], t[1]]).collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tetra() -> TriMesh {
        let v = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        TriMesh::new(v, vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]]).unwrap()
    }

    #[test]
    fn validation() {
        assert!(TriMesh::new(vec![[0.0; 3]; 3], vec![[0, 1, 3]]).is_err());
        assert!(TriMesh::new(vec![[0.0; 3]; 3], vec![[0, 1, 1]]).is_err());
    }

    #[test]
    fn tetrahedron_topology_and_volume() {
        let t = tetra();
        assert_eq!(t.euler_characteristic(), 2);
        assert!(t.is_watertight());
        assert!((t.signed_volume() - 1.0 / 6.0).abs() < 1e-15);
        assert!((t.flipped().signed_volume() + 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn vertex_normals_are_unit() {
        for n in tetra().vertex_normals() {
            assert!((norm(&n) - 1.0).abs() < 1e-12);
        }
    }
}
