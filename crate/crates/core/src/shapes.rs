//! Analytic solids: signed distances, surface samplers and reference meshes.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::mesh::TriMesh;
use crate::spatial::{norm, Point3};

/// Signed distance shapes; negative inside. Tori lie in the xy-plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Shape {
    Sphere { center: Point3, radius: f64 },
    Torus { center: Point3, major: f64, minor: f64 },
    Box { center: Point3, half_extents: Point3 },
    Union { shapes: Vec<Shape> },
}

impl Shape {
    pub fn sdf(&self, p: &Point3) -> f64 {
        match self {
            Shape::Sphere { center, radius } => norm(&crate::spatial::sub(p, center)) - radius,
            Shape::Torus { center, major, minor } => {
                let d = crate::spatial::sub(p, center);
                let ring = d[0].hypot(d[1]) - major;
                ring.hypot(d[2]) - minor
            }
            Shape::Box { center, half_extents } => {
                let q: Point3 = std::array::from_fn(|a| (p[a] - center[a]).abs() - half_extents[a]);
                let outside = norm(&q.map(|v| v.max(0.0)));
                outside + q[0].max(q[1]).max(q[2]).min(0.0)
            }
            Shape::Union { shapes } => shapes.iter().map(|s| s.sdf(p)).fold(f64::INFINITY, f64::min),
        }
    }

    pub fn contains(&self, p: &Point3) -> bool {
        self.sdf(p) < 0.0
    }

    pub fn translated(&self, t: &Point3) -> Shape {
        let mv = |c: &Point3| -> Point3 { std::array::from_fn(|a| c[a] + t[a]) };
        match self {
            Shape::Sphere { center, radius } => Shape::Sphere { center: mv(center), radius: *radius },
            Shape::Torus { center, major, minor } => Shape::Torus { center: mv(center), major: *major, minor: *minor },
            Shape::Box { center, half_extents } => Shape::Box { center: mv(center), half_extents: *half_extents },
            Shape::Union { shapes } => Shape::Union { shapes: shapes.iter().map(|s| s.translated(t)).collect() },
        }
    }
}

/// Uniform samples on a sphere surface.
pub fn sample_sphere<R: Rng>(center: &Point3, radius: f64, n: usize, rng: &mut R) -> Vec<Point3> {
    (0..n)
        .map(|_| {
            let z: f64 = rng.random_range(-1.0..1.0);
            let phi: f64 = rng.random_range(0.0..2.0 * PI);
            let r = (1.0 - z * z).sqrt();
            [center[0] + radius * r * phi.cos(), center[1] + radius * r * phi.sin(), center[2] + radius * z]
        })
        .collect()
}

/// Area-uniform samples on a torus surface (rejection on the tube angle).
pub fn sample_torus<R: Rng>(center: &Point3, major: f64, minor: f64, n: usize, rng: &mut R) -> Vec<Point3> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let u: f64 = rng.random_range(0.0..2.0 * PI);
        let v: f64 = rng.random_range(0.0..2.0 * PI);
        let w = (major + minor * v.cos()) / (major + minor);
        if rng.random::<f64>() > w {
            continue;
        }
        let ring = major + minor * v.cos();
        out.push([center[0] + ring * u.cos(), center[1] + ring * u.sin(), center[2] + minor * v.sin()]);
    }
    out
}

/// Subdivided icosahedron projected onto a sphere; outward winding.
pub fn icosphere(center: &Point3, radius: f64, subdivisions: usize) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Point3> = vec![
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for v in &mut verts {
        let l = norm(v);
        v.iter_mut().for_each(|c| *c /= l);
    }
    for _ in 0..subdivisions {
        let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
        let mut midpoint = |a: u32, b: u32, verts: &mut Vec<Point3>| -> u32 {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let (p, q) = (verts[a as usize], verts[b as usize]);
                let mut m: Point3 = std::array::from_fn(|i| 0.5 * (p[i] + q[i]));
                let l = norm(&m);
                m.iter_mut().for_each(|c| *c /= l);
                verts.push(m);
                (verts.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let verts = verts.iter().map(|v| std::array::from_fn(|i| center[i] + radius * v[i])).collect();
    TriMesh::new(verts, faces).expect("icosphere indices are valid")
}

/// Parametric torus mesh in the xy-plane with `nu` ring and `nv` tube segments.
pub fn torus_mesh(center: &Point3, major: f64, minor: f64, nu: usize, nv: usize) -> TriMesh {
    let mut verts = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        let u = 2.0 * PI * i as f64 / nu as f64;
        for j in 0..nv {
            let v = 2.0 * PI * j as f64 / nv as f64;
            let ring = major + minor * v.cos();
            verts.push([center[0] + ring * u.cos(), center[1] + ring * u.sin(), center[2] + minor * v.sin()]);
        }
    }
    let id = |i: usize, j: usize| ((i % nu) * nv + (j % nv)) as u32;
    let mut faces = Vec::with_capacity(2 * nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    TriMesh::new(verts, faces).expect("torus indices are valid")
}
