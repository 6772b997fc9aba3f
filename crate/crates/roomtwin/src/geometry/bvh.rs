//! Bounding-volume hierarchy for first-hit ray casts.
//!
//! Median-split over face centroids, iterative stack traversal with
//! near-child-first ordering, Moller-Trumbore triangle intersection.

use super::mesh::TriMesh;
use nalgebra::{Point3, Unit, Vector3};

/// Minimum hit distance: intersections closer than this are treated as
/// self-hits and skipped.
pub const RAY_EPS: f64 = 1e-4;

#[derive(Debug, Clone, Copy)]
struct Aabb {
    lo: Point3<f64>,
    hi: Point3<f64>,
}

impl Aabb {
    fn empty() -> Self {
        Aabb {
            lo: Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            hi: Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    fn grow_point(&mut self, p: &Point3<f64>) {
        for k in 0..3 {
            self.lo[k] = self.lo[k].min(p[k]);
            self.hi[k] = self.hi[k].max(p[k]);
        }
    }

    fn grow_tri(&mut self, m: &TriMesh, f: usize) {
        for v in m.face_vertices(f) {
            self.grow_point(&v);
        }
    }

    /// Slab test; returns entry distance if the ray hits within `t_max`.
    fn hit(&self, origin: &Point3<f64>, inv_dir: &Vector3<f64>, t_max: f64) -> Option<f64> {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for k in 0..3 {
            let a = (self.lo[k] - origin[k]) * inv_dir[k];
            let b = (self.hi[k] - origin[k]) * inv_dir[k];
            let (near, far) = if a <= b { (a, b) } else { (b, a) };
            t0 = t0.max(near);
            t1 = t1.min(far);
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { aabb: Aabb, start: usize, count: usize },
    Inner { aabb: Aabb, left: usize, right: usize, axis: usize },
}

#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    /// face indices in leaf order
    order: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub point: Point3<f64>,
    pub face: u32,
    pub distance: f64,
}

const LEAF_SIZE: usize = 4;

impl Bvh {
    pub fn build(mesh: &TriMesh) -> Self {
        let n = mesh.num_faces();
        let mut order: Vec<u32> = (0..n as u32).collect();
        let centroids: Vec<Point3<f64>> = (0..n).map(|f| mesh.face_centroid(f)).collect();
        let mut nodes = Vec::new();
        if n > 0 {
            build_node(mesh, &centroids, &mut order, 0, n, &mut nodes);
        }
        Bvh { nodes, order }
    }

    /// Nearest intersection with `t > t_min`, or `None`.
    pub fn first_hit(
        &self,
        mesh: &TriMesh,
        origin: &Point3<f64>,
        dir: &Unit<Vector3<f64>>,
        t_min: f64,
    ) -> Option<RayHit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = Vector3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best: Option<RayHit> = None;
        let mut best_t = f64::INFINITY;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            match &self.nodes[ni] {
                Node::Leaf { aabb, start, count } => {
                    if aabb.hit(origin, &inv, best_t).is_none() {
                        continue;
                    }
                    for &f in &self.order[*start..start + count] {
                        if let Some((t, p)) = intersect_tri(mesh, f as usize, origin, dir, t_min) {
                            if t < best_t {
                                best_t = t;
                                best = Some(RayHit { point: p, face: f, distance: t });
                            }
                        }
                    }
                }
                Node::Inner { aabb, left, right, axis } => {
                    if aabb.hit(origin, &inv, best_t).is_none() {
                        continue;
                    }
                    // visit the child on the ray's near side first
                    if dir[*axis] >= 0.0 {
                        stack.push(*right);
                        stack.push(*left);
                    } else {
                        stack.push(*left);
                        stack.push(*right);
                    }
                }
            }
        }
        best
    }
}

fn build_node(
    mesh: &TriMesh,
    centroids: &[Point3<f64>],
    order: &mut [u32],
    start: usize,
    count: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let mut aabb = Aabb::empty();
    for &f in &order[start..start + count] {
        aabb.grow_tri(mesh, f as usize);
    }
    let idx = nodes.len();
    if count <= LEAF_SIZE {
        nodes.push(Node::Leaf { aabb, start, count });
        return idx;
    }
    // split on the widest centroid axis at the median
    let mut clo = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut chi = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &f in &order[start..start + count] {
        let c = centroids[f as usize];
        for k in 0..3 {
            clo[k] = clo[k].min(c[k]);
            chi[k] = chi[k].max(c[k]);
        }
    }
    let extent = chi - clo;
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };
    let mid = count / 2;
    order[start..start + count].select_nth_unstable_by(mid, |&a, &b| {
        centroids[a as usize][axis]
            .partial_cmp(&centroids[b as usize][axis])
            .unwrap()
            .then(a.cmp(&b))
    });
    nodes.push(Node::Leaf { aabb, start, count }); // placeholder
    let left = build_node(mesh, centroids, order, start, mid, nodes);
    let right = build_node(mesh, centroids, order, start + mid, count - mid, nodes);
    nodes[idx] = Node::Inner { aabb, left, right, axis };
    idx
}

/// Moller-Trumbore; accepts hits with `t > t_min`.
fn intersect_tri(
    mesh: &TriMesh,
    face: usize,
    origin: &Point3<f64>,
    dir: &Unit<Vector3<f64>>,
    t_min: f64,
) -> Option<(f64, Point3<f64>)> {
    let [a, b, c] = mesh.face_vertices(face);
    let e1 = b - a;
    let e2 = c - a;
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv_det = 1.0 / det;
    let s = origin - a;
    let u = s.dot(&p) * inv_det;
    if !(-1e-12..=1.0 + 1e-12).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv_det;
    if v < -1e-12 || u + v > 1.0 + 1e-12 {
        return None;
    }
    let t = e2.dot(&q) * inv_det;
    if t <= t_min {
        return None;
    }
    Some((t, origin + dir.into_inner() * t))
}

/// First-hit ray cast against a mesh through its BVH (`t > `[`RAY_EPS`]).
pub fn ray_cast_first_hit(
    mesh: &TriMesh,
    bvh: &Bvh,
    origin: &Point3<f64>,
    dir: &Unit<Vector3<f64>>,
) -> Option<RayHit> {
    bvh.first_hit(mesh, origin, dir, RAY_EPS)
}

#[cfg(test)]
pub(crate) fn brute_force_first_hit(
    mesh: &TriMesh,
    origin: &Point3<f64>,
    dir: &Unit<Vector3<f64>>,
    t_min: f64,
) -> Option<RayHit> {
    let mut best: Option<RayHit> = None;
    for f in 0..mesh.num_faces() {
        if let Some((t, p)) = intersect_tri(mesh, f, origin, dir, t_min) {
            if best.map_or(true, |b| t < b.distance) {
                best = Some(RayHit { point: p, face: f as u32, distance: t });
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn unit_cube() -> TriMesh {
        TriMesh::axis_box(
            Point3::new(-0.5, -0.5, -0.5),
            Point3::new(0.5, 0.5, 0.5),
            true,
            [[1.0; 3]; 6],
        )
        .unwrap()
    }

    #[test]
    fn cube_center_ray_hits_face() {
        let m = unit_cube();
        let bvh = Bvh::build(&m);
        let hit = ray_cast_first_hit(
            &m,
            &bvh,
            &Point3::origin(),
            &Unit::new_normalize(Vector3::x()),
        )
        .unwrap();
        assert!((hit.distance - 0.5).abs() < 1e-12);
        assert!((hit.point - Point3::new(0.5, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn parallel_outside_ray_misses() {
        let m = unit_cube();
        let bvh = Bvh::build(&m);
        let hit = ray_cast_first_hit(
            &m,
            &bvh,
            &Point3::new(0.0, 2.0, 0.0),
            &Unit::new_normalize(Vector3::x()),
        );
        assert!(hit.is_none());
    }

    #[test]
    fn bvh_matches_brute_force_on_random_rays() {
        // shoebox with an interior box, 10k random rays
        let mut m = TriMesh::axis_box(
            Point3::origin(),
            Point3::new(4.0, 5.0, 3.0),
            true,
            [[1.0; 3]; 6],
        )
        .unwrap();
        let table = TriMesh::axis_box(
            Point3::new(1.0, 1.0, 0.05),
            Point3::new(2.0, 2.5, 0.8),
            false,
            [[0.5; 3]; 6],
        )
        .unwrap();
        m.append(&table);
        let bvh = Bvh::build(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..10_000 {
            let origin = Point3::new(
                rng.random_range(0.1..3.9),
                rng.random_range(0.1..4.9),
                rng.random_range(0.1..2.9),
            );
            let dir = Unit::new_normalize(Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0f64),
            ));
            let fast = ray_cast_first_hit(&m, &bvh, &origin, &dir);
            let slow = brute_force_first_hit(&m, &origin, &dir, RAY_EPS);
            match (fast, slow) {
                (None, None) => {}
                (Some(a), Some(b)) => {
                    assert!((a.distance - b.distance).abs() < 1e-9);
                    assert_eq!(a.face, b.face);
                }
                (a, b) => panic!("mismatch: {a:?} vs {b:?}"),
            }
        }
    }

    #[test]
    fn hit_point_lies_on_face_plane() {
        let m = unit_cube();
        let bvh = Bvh::build(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let dir = Unit::new_normalize(Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0f64),
            ));
            let hit = ray_cast_first_hit(&m, &bvh, &Point3::origin(), &dir).unwrap();
            assert!(hit.distance >= 0.0);
            let [a, _, _] = m.face_vertices(hit.face as usize);
            let n = m.face_normals[hit.face as usize];
            let off = n.dot(&(hit.point - a)).abs();
            assert!(off < 1e-6, "point off plane by {off}");
        }
    }
}
