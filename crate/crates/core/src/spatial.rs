//! Exact nearest-neighbour queries over 3-D points and ray casting against triangles.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

pub type Point3 = [f64; 3];

#[inline]
pub fn dist_sq(a: &Point3, b: &Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Static kd-tree. Queries are exact; distances are computed with [`dist_sq`],
/// so they agree bit for bit with a brute-force scan.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Point3>,
    index: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn new(points: &[Point3]) -> Self {
        let mut tree = Self { points: points.to_vec(), index: (0..points.len()).collect(), nodes: Vec::new() };
        if !points.is_empty() {
            tree.build(0, points.len());
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.index[start..end] {
            for a in 0..3 {
                lo[a] = lo[a].min(self.points[i][a]);
                hi[a] = hi[a].max(self.points[i][a]);
            }
        }
        let axis = (0..3).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap_or(0);
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.index[start..end]
            .select_nth_unstable_by(mid - start, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
        let value = self.points[self.index[mid]][axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    /// Index and squared distance of the closest point; ties resolve to the lowest index.
    pub fn nearest(&self, q: &Point3) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.nearest_rec(0, q, &mut best);
        Some(best)
    }

    fn nearest_rec(&self, node: usize, q: &Point3, best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.index[start..end] {
                    let d = dist_sq(q, &self.points[i]);
                    if d < best.1 || (d == best.1 && i < best.0) {
                        *best = (i, d);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let delta = q[axis] - value;
                let (near, far) = if delta < 0.0 { (left, right) } else { (right, left) };
                self.nearest_rec(near, q, best);
                if delta * delta <= best.1 {
                    self.nearest_rec(far, q, best);
                }
            }
        }
    }

    /// The `k` closest points sorted by increasing squared distance.
    pub fn k_nearest(&self, q: &Point3, k: usize) -> Vec<(usize, f64)> {
        if k == 0 || self.points.is_empty() {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn_rec(0, q, k, &mut heap);
        let mut out: Vec<(usize, f64)> = heap.into_iter().map(|c| (c.index, c.dist)).collect();
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        out
    }

    fn knn_rec(&self, node: usize, q: &Point3, k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.index[start..end] {
                    let c = Candidate { dist: dist_sq(q, &self.points[i]), index: i };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let delta = q[axis] - value;
                let (near, far) = if delta < 0.0 { (left, right) } else { (right, left) };
                self.knn_rec(near, q, k, heap);
                if heap.len() < k || delta * delta <= heap.peek().map_or(f64::INFINITY, |c| c.dist) {
                    self.knn_rec(far, q, k, heap);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist.total_cmp(&other.dist).then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy)]
struct Aabb {
    lo: Point3,
    hi: Point3,
}

impl Aabb {
    fn empty() -> Self {
        Self { lo: [f64::INFINITY; 3], hi: [f64::NEG_INFINITY; 3] }
    }

    fn grow(&mut self, p: &Point3) {
        for a in 0..3 {
            self.lo[a] = self.lo[a].min(p[a]);
            self.hi[a] = self.hi[a].max(p[a]);
        }
    }

    fn hit(&self, origin: &Point3, inv_dir: &Point3) -> bool {
        let mut t0 = 0.0f64;
        let mut t1 = f64::INFINITY;
        for a in 0..3 {
            let ta = (self.lo[a] - origin[a]) * inv_dir[a];
            let tb = (self.hi[a] - origin[a]) * inv_dir[a];
            let (near, far) = if ta < tb { (ta, tb) } else { (tb, ta) };
            t0 = t0.max(near);
            t1 = t1.min(far);
            if t0 > t1 {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone)]
struct BvhNode {
    bounds: Aabb,
    // leaf: triangles[start..end]; inner: children at `left` and `left + 1`.. encoded by `count == 0`
    start: usize,
    count: usize,
    left: usize,
    right: usize,
}

/// Bounding volume hierarchy over triangles, used for ray-parity inside tests.
#[derive(Debug, Clone)]
pub struct TriangleBvh {
    tris: Vec<[Point3; 3]>,
    order: Vec<usize>,
    nodes: Vec<BvhNode>,
}

impl TriangleBvh {
    pub fn new(vertices: &[Point3], triangles: &[[u32; 3]]) -> Self {
        let tris: Vec<[Point3; 3]> = triangles
            .iter()
            .map(|t| [vertices[t[0] as usize], vertices[t[1] as usize], vertices[t[2] as usize]])
            .collect();
        let mut bvh = Self { order: (0..tris.len()).collect(), tris, nodes: Vec::new() };
        if !bvh.tris.is_empty() {
            let centroids: Vec<Point3> = bvh
                .tris
                .iter()
                .map(|t| std::array::from_fn(|a| (t[0][a] + t[1][a] + t[2][a]) / 3.0))
                .collect();
            bvh.build(0, bvh.tris.len(), &centroids);
        }
        bvh
    }

    fn build(&mut self, start: usize, end: usize, centroids: &[Point3]) -> usize {
        let mut bounds = Aabb::empty();
        let mut cb = Aabb::empty();
        for &t in &self.order[start..end] {
            for v in &self.tris[t] {
                bounds.grow(v);
            }
            cb.grow(&centroids[t]);
        }
        let id = self.nodes.len();
        self.nodes.push(BvhNode { bounds, start, count: end - start, left: 0, right: 0 });
        if end - start <= 4 {
            return id;
        }
        let axis = (0..3).max_by(|&a, &b| (cb.hi[a] - cb.lo[a]).total_cmp(&(cb.hi[b] - cb.lo[b]))).unwrap_or(0);
        let mid = start + (end - start) / 2;
        self.order[start..end]
            .select_nth_unstable_by(mid - start, |&a, &b| centroids[a][axis].total_cmp(&centroids[b][axis]));
        let left = self.build(start, mid, centroids);
        let right = self.build(mid, end, centroids);
        let node = &mut self.nodes[id];
        node.count = 0;
        node.left = left;
        node.right = right;
        id
    }

    /// Number of triangles hit by the ray `origin + t * dir`, `t > 0`.
    pub fn count_hits(&self, origin: &Point3, dir: &Point3) -> usize {
        if self.nodes.is_empty() {
            return 0;
        }
        let inv_dir = [1.0 / dir[0], 1.0 / dir[1], 1.0 / dir[2]];
        let mut stack = vec![0usize];
        let mut hits = 0;
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if !node.bounds.hit(origin, &inv_dir) {
                continue;
            }
            if node.count > 0 {
                for &t in &self.order[node.start..node.start + node.count] {
                    if ray_triangle(origin, dir, &self.tris[t]) {
                        hits += 1;
                    }
                }
            } else {
                stack.push(node.left);
                stack.push(node.right);
            }
        }
        hits
    }
}

/// Möller–Trumbore intersection test for `t > 0`.
fn ray_triangle(origin: &Point3, dir: &Point3, tri: &[Point3; 3]) -> bool {
    let e1 = sub(&tri[1], &tri[0]);
    let e2 = sub(&tri[2], &tri[0]);
    let p = cross(dir, &e2);
    let det = dot(&e1, &p);
    if det.abs() < 1e-300 {
        return false;
    }
    let inv = 1.0 / det;
    let s = sub(origin, &tri[0]);
    let u = dot(&s, &p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return false;
    }
    let q = cross(&s, &e1);
    let v = dot(dir, &q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return false;
    }
    dot(&e2, &q) * inv > 0.0
}

#[inline]
pub(crate) fn sub(a: &Point3, b: &Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn dot(a: &Point3, b: &Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn cross(a: &Point3, b: &Point3) -> Point3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[inline]
pub(crate) fn norm(a: &Point3) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(n: usize, seed: u64) -> Vec<Point3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect()
    }

    #[test]
    fn nearest_matches_brute_force() {
        let pts = cloud(2000, 1);
        let tree = KdTree::new(&pts);
        for q in cloud(300, 2) {
            let (i, d) = tree.nearest(&q).unwrap();
            let brute = pts.iter().map(|p| dist_sq(&q, p)).fold(f64::INFINITY, f64::min);
            assert_eq!(d, brute);
            assert_eq!(dist_sq(&q, &pts[i]), d);
        }
    }

    #[test]
    fn k_nearest_matches_sorted_scan() {
        let pts = cloud(500, 3);
        let tree = KdTree::new(&pts);
        for q in cloud(20, 4) {
            let got = tree.k_nearest(&q, 12);
            let mut all: Vec<(usize, f64)> = pts.iter().enumerate().map(|(i, p)| (i, dist_sq(&q, p))).collect();
            all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            assert_eq!(got, all[..12].to_vec());
        }
        assert_eq!(tree.k_nearest(&[0.0; 3], 10_000).len(), 500);
    }

    #[test]
    fn empty_tree() {
        let tree = KdTree::new(&[]);
        assert!(tree.nearest(&[0.0; 3]).is_none());
        assert!(tree.k_nearest(&[0.0; 3], 3).is_empty());
    }

    #[test]
    fn ray_parity_against_a_cube() {
        // closed unit cube, 12 triangles
        let v: Vec<Point3> = (0..8).map(|i| [(i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64]).collect();
        let t = [
            [0, 2, 1], [1, 2, 3], [4, 5, 6], [5, 7, 6], [0, 1, 4], [1, 5, 4],
            [2, 6, 3], [3, 6, 7], [0, 4, 2], [2, 4, 6], [1, 3, 5], [3, 7, 5],
        ];
        let bvh = TriangleBvh::new(&v, &t);
        let dir = [0.31, 0.52, 0.79];
        assert_eq!(bvh.count_hits(&[0.5, 0.4, 0.3], &dir) % 2, 1);
        assert_eq!(bvh.count_hits(&[1.5, 0.4, 0.3], &dir) % 2, 0);
        assert_eq!(bvh.count_hits(&[-0.5, 0.4, 0.3], &dir) % 2, 0);
    }
}
