//! Region-growing surface segmentation driven by per-face color and normal
//! coherence. Spatial adjacency means a shared mesh edge.

use super::mesh::TriMesh;
use nalgebra::Vector3;
use std::collections::{HashMap, VecDeque};

/// A group of faces sharing appearance and (approximate) orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSegment {
    pub id: usize,
    pub faces: Vec<u32>,
    /// Mean color of the member faces.
    pub color: [f64; 3],
    /// Material index bound to this segment.
    pub material: usize,
}

/// Face adjacency over shared (undirected) edges.
pub(crate) fn face_adjacency(mesh: &TriMesh) -> Vec<Vec<u32>> {
    let mut edge_faces: HashMap<(u32, u32), Vec<u32>> = HashMap::new();
    for (fi, face) in mesh.faces.iter().enumerate() {
        for k in 0..3 {
            let a = face[k];
            let b = face[(k + 1) % 3];
            let key = (a.min(b), a.max(b));
            edge_faces.entry(key).or_default().push(fi as u32);
        }
    }
    let mut adj = vec![Vec::new(); mesh.num_faces()];
    for faces in edge_faces.values() {
        for &a in faces {
            for &b in faces {
                if a != b {
                    adj[a as usize].push(b);
                }
            }
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

fn color_dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Grows regions from seed faces in ascending index order: a neighbor joins
/// when its color is within `color_tol` (Euclidean RGB) and its normal is
/// within `normal_tol_deg` of the region's running means. Every face ends up
/// in exactly one segment; the result is deterministic.
pub fn segment_mesh(mesh: &TriMesh, color_tol: f64, normal_tol_deg: f64) -> Vec<SurfaceSegment> {
    let n = mesh.num_faces();
    let adj = face_adjacency(mesh);
    let cos_tol = normal_tol_deg.to_radians().cos();
    let mut assigned = vec![false; n];
    let mut segments = Vec::new();

    for seed in 0..n {
        if assigned[seed] {
            continue;
        }
        let id = segments.len();
        let mut faces: Vec<u32> = vec![seed as u32];
        assigned[seed] = true;
        let mut color_sum = Vector3::new(
            mesh.face_colors[seed][0],
            mesh.face_colors[seed][1],
            mesh.face_colors[seed][2],
        );
        let mut normal_sum = mesh.face_normals[seed].into_inner();
        let mut queue = VecDeque::from([seed as u32]);

        while let Some(f) = queue.pop_front() {
            let count = faces.len() as f64;
            let mean_color = [color_sum.x / count, color_sum.y / count, color_sum.z / count];
            let mean_normal = normal_sum.normalize();
            for &nb in &adj[f as usize] {
                let nbi = nb as usize;
                if assigned[nbi] {
                    continue;
                }
                let ok_color = color_dist(mesh.face_colors[nbi], mean_color) <= color_tol;
                let ok_normal = mesh.face_normals[nbi].dot(&mean_normal) >= cos_tol;
                if ok_color && ok_normal {
                    assigned[nbi] = true;
                    faces.push(nb);
                    color_sum += Vector3::new(
                        mesh.face_colors[nbi][0],
                        mesh.face_colors[nbi][1],
                        mesh.face_colors[nbi][2],
                    );
                    normal_sum += mesh.face_normals[nbi].into_inner();
                    queue.push_back(nb);
                }
            }
        }

        let count = faces.len() as f64;
        segments.push(SurfaceSegment {
            id,
            faces,
            color: [color_sum.x / count, color_sum.y / count, color_sum.z / count],
            material: id,
        });
    }
    segments
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion};

    fn shoebox_mesh() -> TriMesh {
        TriMesh::axis_box(
            Point3::origin(),
            Point3::new(4.0, 5.0, 3.0),
            true,
            [
                [0.9, 0.1, 0.1],
                [0.1, 0.9, 0.1],
                [0.1, 0.1, 0.9],
                [0.9, 0.9, 0.1],
                [0.1, 0.9, 0.9],
                [0.9, 0.1, 0.9],
            ],
        )
        .unwrap()
    }

    #[test]
    fn six_walls_make_six_segments() {
        let segs = segment_mesh(&shoebox_mesh(), 0.15, 10.0);
        assert_eq!(segs.len(), 6);
        for s in &segs {
            assert_eq!(s.faces.len(), 2);
        }
    }

    #[test]
    fn two_tone_wall_splits() {
        // repaint one triangle of the x=0 wall far beyond color_tol
        let mut mesh = shoebox_mesh();
        mesh.face_colors[0] = [0.0, 0.0, 0.0];
        let segs = segment_mesh(&mesh, 0.15, 10.0);
        assert_eq!(segs.len(), 7);
    }

    #[test]
    fn degenerate_tolerance_gives_one_segment_per_component() {
        let segs = segment_mesh(&shoebox_mesh(), f64::INFINITY, 180.0);
        assert_eq!(segs.len(), 1);
    }

    #[test]
    fn partition_property() {
        let segs = segment_mesh(&shoebox_mesh(), 0.15, 15.0);
        let mut seen = vec![0u32; 12];
        for s in &segs {
            for &f in &s.faces {
                seen[f as usize] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn segmentation_invariant_under_rigid_transform() {
        let mesh = shoebox_mesh();
        let before = segment_mesh(&mesh, 0.15, 15.0);
        let iso = Isometry3::from_parts(
            Translation3::new(10.0, -3.0, 7.0),
            UnitQuaternion::from_euler_angles(0.3, -1.1, 2.0),
        );
        let after = segment_mesh(&mesh.transformed(&iso), 0.15, 15.0);
        assert_eq!(before.len(), after.len());
        for (a, b) in before.iter().zip(after.iter()) {
            assert_eq!(a.faces, b.faces);
        }
    }

    #[test]
    fn normals_gate_growth() {
        // same color everywhere: only the normal tolerance separates walls
        let mesh = TriMesh::axis_box(
            Point3::origin(),
            Point3::new(1.0, 1.0, 1.0),
            true,
            [[0.5; 3]; 6],
        )
        .unwrap();
        let segs = segment_mesh(&mesh, 10.0, 10.0);
        assert_eq!(segs.len(), 6);
        let merged = segment_mesh(&mesh, 10.0, 95.0);
        assert!(merged.len() < 6);
    }
}
