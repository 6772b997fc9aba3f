//! Specular path enumeration by image-source expansion over per-segment
//! best-fit planes, with every candidate validated by ray casting each leg
//! for occlusion and on-face incidence.

use crate::error::{Error, Result};
use crate::geometry::{Scene, RAY_EPS};
use nalgebra::{Point3, Unit, Vector3};
use std::collections::HashSet;

/// Non-planar segments are subdivided until every reflector's vertices lie
/// within this distance of its plane (meters).
pub const PLANARITY_TOL: f64 = 0.02;

/// A planar reflecting patch: the mirror plane plus the faces that realize it.
#[derive(Debug, Clone)]
pub struct Reflector {
    pub point: Point3<f64>,
    pub normal: Unit<Vector3<f64>>,
    /// Sorted face ids belonging to this reflector.
    pub faces: Vec<u32>,
    pub segment: usize,
}

/// An ordered specular reflection sequence from Tx to Rx.
#[derive(Debug, Clone)]
pub struct SpecularPath {
    /// Tx, bounce points in order, Rx.
    pub points: Vec<Point3<f64>>,
    /// Segment id per bounce, Tx-to-Rx order.
    pub segments: Vec<usize>,
    /// Total length, meters (= sum of leg lengths).
    pub length: f64,
    /// Unit direction of the first leg, leaving Tx.
    pub departure: Unit<Vector3<f64>>,
    /// Unit direction of the last leg, arriving at Rx.
    pub arrival: Unit<Vector3<f64>>,
}

impl SpecularPath {
    pub fn bounces(&self) -> usize {
        self.segments.len()
    }
}

fn plane_of_faces(scene: &Scene, faces: &[u32]) -> (Point3<f64>, Unit<Vector3<f64>>) {
    let mesh = &scene.mesh;
    let mut centroid = Vector3::zeros();
    let mut normal = Vector3::zeros();
    let mut area_sum = 0.0;
    for &f in faces {
        let a = mesh.face_area(f as usize);
        centroid += mesh.face_centroid(f as usize).coords * a;
        normal += mesh.face_normals[f as usize].into_inner() * a;
        area_sum += a;
    }
    (
        Point3::from(centroid / area_sum),
        Unit::new_normalize(normal),
    )
}

fn max_plane_deviation(
    scene: &Scene,
    faces: &[u32],
    point: &Point3<f64>,
    normal: &Unit<Vector3<f64>>,
) -> f64 {
    let mut worst = 0.0f64;
    for &f in faces {
        for v in scene.mesh.face_vertices(f as usize) {
            worst = worst.max(normal.dot(&(v - point)).abs());
        }
    }
    worst
}

/// Splits each segment into planar reflectors. A planar segment maps to one
/// reflector; otherwise faces are greedily clustered (largest first) onto
/// refitted planes until the deviation bound holds.
pub fn build_reflectors(scene: &Scene) -> Vec<Reflector> {
    let mut out = Vec::new();
    for seg in &scene.segments {
        if seg.faces.is_empty() {
            continue;
        }
        let (point, normal) = plane_of_faces(scene, &seg.faces);
        if max_plane_deviation(scene, &seg.faces, &point, &normal) <= PLANARITY_TOL {
            let mut faces = seg.faces.clone();
            faces.sort_unstable();
            out.push(Reflector { point, normal, faces, segment: seg.id });
            continue;
        }
        // order by area (largest first, id breaks ties) and grow planar clusters
        let mut order = seg.faces.clone();
        order.sort_by(|&a, &b| {
            scene
                .mesh
                .face_area(b as usize)
                .partial_cmp(&scene.mesh.face_area(a as usize))
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut assigned: HashSet<u32> = HashSet::new();
        for &seed in &order {
            if assigned.contains(&seed) {
                continue;
            }
            let mut members = vec![seed];
            assigned.insert(seed);
            loop {
                let (p, n) = plane_of_faces(scene, &members);
                let mut grew = false;
                for &cand in &order {
                    if assigned.contains(&cand) {
                        continue;
                    }
                    let aligned = scene.mesh.face_normals[cand as usize].dot(&n) > 0.95;
                    if aligned && max_plane_deviation(scene, &[cand], &p, &n) <= PLANARITY_TOL {
                        members.push(cand);
                        assigned.insert(cand);
                        grew = true;
                    }
                }
                if !grew {
                    break;
                }
            }
            let (point, normal) = plane_of_faces(scene, &members);
            members.sort_unstable();
            out.push(Reflector { point, normal, faces: members, segment: seg.id });
        }
    }
    out
}

fn mirror(p: &Point3<f64>, r: &Reflector) -> Point3<f64> {
    let d = r.normal.dot(&(p - r.point));
    p - r.normal.into_inner() * (2.0 * d)
}

/// Distance from `p` to the closest point of triangle `face`.
fn point_triangle_distance(scene: &Scene, face: usize, p: &Point3<f64>) -> f64 {
    let [a, b, c] = scene.mesh.face_vertices(face);
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return ap.norm();
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return bp.norm();
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (ap - ab * v).norm();
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return cp.norm();
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (ap - ac * w).norm();
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (bp - (c - b) * w).norm();
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (ap - (ab * v + ac * w)).norm()
}

fn min_surface_distance(scene: &Scene, p: &Point3<f64>) -> f64 {
    (0..scene.mesh.num_faces())
        .map(|f| point_triangle_distance(scene, f, p))
        .fold(f64::INFINITY, f64::min)
}

/// Above this reflection order, empty axis-aligned rooms switch from the
/// mirror-recursion tree to the rectangular image lattice (candidates are
/// still individually ray-cast validated). The tree's interleaving factor
/// grows like 3^bounces, so deep orders are only practical on the lattice.
const GENERIC_BOUNCE_LIMIT: usize = 8;

/// Detected empty axis-aligned room: reflector index per wall, in the order
/// x-lo, x-hi, y-lo, y-hi, z-lo, z-hi.
struct AxisBox {
    lo: Point3<f64>,
    hi: Point3<f64>,
    wall_reflectors: [usize; 6],
}

/// Recognizes scenes whose reflectors are exactly the six axis-aligned
/// planes of the mesh bounding box (an empty shoebox).
fn detect_axis_box(scene: &Scene, reflectors: &[Reflector]) -> Option<AxisBox> {
    if reflectors.len() != 6 {
        return None;
    }
    let (lo, hi) = scene.mesh.aabb()?;
    let mut wall_reflectors = [usize::MAX; 6];
    for (ri, r) in reflectors.iter().enumerate() {
        let n = r.normal.into_inner();
        let axis = (0..3).find(|&k| n[k].abs() > 1.0 - 1e-9)?;
        // inward normals: +axis on the low wall, -axis on the high wall
        let (slot, plane) = if n[axis] > 0.0 {
            (2 * axis, lo[axis])
        } else {
            (2 * axis + 1, hi[axis])
        };
        if (r.point[axis] - plane).abs() > 1e-9 || wall_reflectors[slot] != usize::MAX {
            return None;
        }
        wall_reflectors[slot] = ri;
    }
    // every face must belong to a wall (no interior geometry)
    let wall_faces: usize = reflectors.iter().map(|r| r.faces.len()).sum();
    if wall_faces != scene.mesh.num_faces() {
        return None;
    }
    Some(AxisBox { lo, hi, wall_reflectors })
}

/// Rectangular-room image lattice: proposes every image cell (u, v, w) with
/// |u|+|v|+|w| <= max_bounces, reconstructs its wall bounce sequence from
/// the unfolded segment's plane crossings, and funnels each candidate
/// through the same backward ray-cast validation as the generic tree.
#[allow(clippy::too_many_arguments)]
fn lattice_descend(
    scene: &Scene,
    reflectors: &[Reflector],
    axis_box: &AxisBox,
    p_tx: &Point3<f64>,
    p_rx: &Point3<f64>,
    max_bounces: usize,
    seen: &mut HashSet<Vec<i64>>,
    paths: &mut Vec<SpecularPath>,
) {
    let lo = axis_box.lo;
    let size = axis_box.hi - lo;
    let b = max_bounces as i64;
    let image_axis = |u: i64, k: usize| -> f64 {
        let s = p_tx[k] - lo[k];
        let folded = if u.rem_euclid(2) == 0 { u as f64 * size[k] + s } else { (u + 1) as f64 * size[k] - s };
        lo[k] + folded
    };
    for u in -b..=b {
        for v in -(b - u.abs())..=(b - u.abs()) {
            let rem = b - u.abs() - v.abs();
            for w in -rem..=rem {
                if u == 0 && v == 0 && w == 0 {
                    continue;
                }
                let cell = [u, v, w];
                let image = Point3::new(image_axis(u, 0), image_axis(v, 1), image_axis(w, 2));
                // plane crossings of the unfolded segment rx -> image, in
                // crossing order from the rx side
                let mut crossings: Vec<(f64, usize)> = Vec::new();
                let mut degenerate = false;
                for k in 0..3 {
                    let a = p_rx[k];
                    let bq = image[k];
                    if cell[k] == 0 {
                        continue;
                    }
                    let dir = if cell[k] > 0 { 1i64 } else { -1 };
                    for step in 0..cell[k].abs() {
                        // grid plane index: 1, 2, ... toward the image cell
                        let plane_idx = if dir > 0 { step + 1 } else { -step };
                        let plane = lo[k] + plane_idx as f64 * size[k];
                        let t = (plane - a) / (bq - a);
                        if !(1e-12..=1.0 - 1e-12).contains(&t) {
                            degenerate = true;
                        }
                        // plane m*L maps to the low wall for even m
                        let slot = if plane_idx.rem_euclid(2) == 0 { 2 * k } else { 2 * k + 1 };
                        crossings.push((t, axis_box.wall_reflectors[slot]));
                    }
                }
                if degenerate {
                    continue;
                }
                crossings.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
                // bounce order tx->rx is the reverse of rx-side crossings
                let seq: Vec<usize> = crossings.iter().rev().map(|&(_, r)| r).collect();
                let mut images = Vec::with_capacity(seq.len() + 1);
                images.push(*p_tx);
                for &ri in &seq {
                    images.push(mirror(images.last().unwrap(), &reflectors[ri]));
                }
                if let Some(path) = validate(scene, reflectors, &seq, &images, p_rx) {
                    if seen.insert(path_key(&path)) {
                        paths.push(path);
                    }
                }
            }
        }
    }
}

/// Enumerates validated specular paths (direct path included when
/// unoccluded) up to `max_bounces` reflections, deduplicated by bounce
/// sequence, in deterministic order.
pub fn enumerate_paths(
    scene: &Scene,
    p_tx: &Point3<f64>,
    p_rx: &Point3<f64>,
    max_bounces: usize,
) -> Result<Vec<SpecularPath>> {
    for (name, p) in [("tx", p_tx), ("rx", p_rx)] {
        if min_surface_distance(scene, p) < RAY_EPS {
            return Err(Error::Render(format!("{name} position lies on a surface")));
        }
    }
    let reflectors = scene.reflectors();
    let mut paths = Vec::new();
    let mut seen: HashSet<Vec<i64>> = HashSet::new();

    // direct path
    let dvec = p_rx - p_tx;
    let d = dvec.norm();
    if d < RAY_EPS {
        return Err(Error::Render("tx and rx positions coincide".into()));
    }
    let dir = Unit::new_normalize(dvec);
    let occluded = scene
        .cast_ray(p_tx, &dir)
        .is_some_and(|h| h.distance < d - RAY_EPS);
    if !occluded {
        paths.push(SpecularPath {
            points: vec![*p_tx, *p_rx],
            segments: Vec::new(),
            length: d,
            departure: dir,
            arrival: dir,
        });
    }

    if max_bounces == 0 || reflectors.is_empty() {
        return Ok(paths);
    }

    if max_bounces > GENERIC_BOUNCE_LIMIT {
        if let Some(axis_box) = detect_axis_box(scene, reflectors) {
            lattice_descend(
                scene, reflectors, &axis_box, p_tx, p_rx, max_bounces, &mut seen, &mut paths,
            );
            return Ok(paths);
        }
    }

    let mut images: Vec<Point3<f64>> = vec![*p_tx];
    let mut seq: Vec<usize> = Vec::new();
    descend(
        scene, reflectors, p_rx, max_bounces, &mut images, &mut seq, &mut seen, &mut paths,
    );
    Ok(paths)
}

#[allow(clippy::too_many_arguments)]
fn descend(
    scene: &Scene,
    reflectors: &[Reflector],
    p_rx: &Point3<f64>,
    max_bounces: usize,
    images: &mut Vec<Point3<f64>>,
    seq: &mut Vec<usize>,
    seen: &mut HashSet<Vec<i64>>,
    paths: &mut Vec<SpecularPath>,
) {
    let depth = seq.len();
    let img = images[depth];
    for (ri, r) in reflectors.iter().enumerate() {
        if seq.last() == Some(&ri) {
            continue;
        }
        // the virtual source must face the mirror plane
        if r.normal.dot(&(img - r.point)) <= 1e-9 {
            continue;
        }
        seq.push(ri);
        images.push(mirror(&img, r));
        if let Some(path) = validate(scene, reflectors, seq, images, p_rx) {
            let key = path_key(&path);
            if seen.insert(key) {
                paths.push(path);
            }
        }
        if seq.len() < max_bounces {
            descend(scene, reflectors, p_rx, max_bounces, images, seq, seen, paths);
        }
        images.pop();
        seq.pop();
    }
}

fn path_key(path: &SpecularPath) -> Vec<i64> {
    let mut key: Vec<i64> = path.segments.iter().map(|&s| s as i64).collect();
    for p in &path.points[1..path.points.len() - 1] {
        for k in 0..3 {
            key.push((p[k] * 1e7).round() as i64);
        }
    }
    key
}

/// Backward construction from Rx: each leg must first-hit the expected
/// reflector face at the unfolded plane intersection, and the last leg must
/// reach Tx unoccluded.
fn validate(
    scene: &Scene,
    reflectors: &[Reflector],
    seq: &[usize],
    images: &[Point3<f64>],
    p_rx: &Point3<f64>,
) -> Option<SpecularPath> {
    let k = seq.len();
    let mut target = *p_rx;
    let mut rev_points: Vec<Point3<f64>> = vec![*p_rx];
    for j in (0..k).rev() {
        let r = &reflectors[seq[j]];
        let s = images[j + 1];
        let vec = s - target;
        let len = vec.norm();
        if len < RAY_EPS {
            return None;
        }
        let denom = r.normal.dot(&vec);
        if denom.abs() < 1e-12 {
            return None;
        }
        let t = r.normal.dot(&(r.point - target)) / denom;
        if !(1e-9..=1.0 - 1e-9).contains(&t) {
            return None;
        }
        let dir = Unit::new_normalize(vec);
        let hit = scene.cast_ray(&target, &dir)?;
        if r.faces.binary_search(&hit.face).is_err() {
            return None;
        }
        if (hit.distance - t * len).abs() > 1e-6 {
            return None;
        }
        target = hit.point;
        rev_points.push(target);
    }
    // final leg to the source
    let tx = images[0];
    let vec = tx - target;
    let len = vec.norm();
    if len < RAY_EPS {
        return None;
    }
    let dir = Unit::new_normalize(vec);
    if let Some(h) = scene.cast_ray(&target, &dir) {
        if h.distance < len - 1e-6 {
            return None;
        }
    }
    rev_points.push(tx);
    rev_points.reverse();
    let length: f64 = rev_points.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
    let departure = Unit::new_normalize(rev_points[1] - rev_points[0]);
    let n = rev_points.len();
    let arrival = Unit::new_normalize(rev_points[n - 1] - rev_points[n - 2]);
    debug_assert!(
        (length - (images[k] - p_rx).norm()).abs() < 1e-9,
        "unfolded length disagrees with leg sum"
    );
    Some(SpecularPath {
        points: rev_points,
        segments: seq.iter().map(|&ri| reflectors[ri].segment).collect(),
        length,
        departure,
        arrival,
    })
}
