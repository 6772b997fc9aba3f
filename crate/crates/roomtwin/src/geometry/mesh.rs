//! Triangle meshes with per-face color and unit normals.

use crate::error::{Error, Result};
use nalgebra::{Isometry3, Point3, Unit, Vector3};

/// Faces with area below this are dropped at load time.
const DEGENERATE_AREA: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Point3<f64>>,
    pub faces: Vec<[u32; 3]>,
    /// RGB in [0, 1], one per face.
    pub face_colors: Vec<[f64; 3]>,
    /// Unit normals from the right-handed winding, one per face.
    pub face_normals: Vec<Unit<Vector3<f64>>>,
}

impl TriMesh {
    /// Builds a mesh, validating indices and removing degenerate
    /// (zero-area) faces. Missing colors default to white.
    pub fn new(
        vertices: Vec<Point3<f64>>,
        faces: Vec<[u32; 3]>,
        face_colors: Option<Vec<[f64; 3]>>,
    ) -> Result<Self> {
        if let Some(c) = &face_colors {
            if c.len() != faces.len() {
                return Err(Error::geometry("face_colors length differs from faces"));
            }
        }
        let nv = vertices.len() as u32;
        let mut kept_faces = Vec::with_capacity(faces.len());
        let mut kept_colors = Vec::with_capacity(faces.len());
        let mut kept_normals = Vec::with_capacity(faces.len());
        for (fi, f) in faces.iter().enumerate() {
            if f.iter().any(|&i| i >= nv) {
                return Err(Error::geometry(format!("face {fi} has out-of-range vertex index")));
            }
            let a = vertices[f[0] as usize];
            let b = vertices[f[1] as usize];
            let c = vertices[f[2] as usize];
            let n = (b - a).cross(&(c - a));
            let area2 = n.norm();
            if area2 * 0.5 < DEGENERATE_AREA {
                continue;
            }
            kept_faces.push(*f);
            kept_colors.push(face_colors.as_ref().map_or([1.0, 1.0, 1.0], |c| c[fi]));
            kept_normals.push(Unit::new_normalize(n));
        }
        Ok(TriMesh {
            vertices,
            faces: kept_faces,
            face_colors: kept_colors,
            face_normals: kept_normals,
        })
    }

    /// Mesh with no faces (free field).
    pub fn empty() -> Self {
        TriMesh {
            vertices: Vec::new(),
            faces: Vec::new(),
            face_colors: Vec::new(),
            face_normals: Vec::new(),
        }
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn face_vertices(&self, f: usize) -> [Point3<f64>; 3] {
        let [a, b, c] = self.faces[f];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.face_vertices(f);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn face_centroid(&self, f: usize) -> Point3<f64> {
        let [a, b, c] = self.face_vertices(f);
        Point3::from((a.coords + b.coords + c.coords) / 3.0)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_faces()).map(|f| self.face_area(f)).sum()
    }

    /// Axis-aligned bounds, or `None` for an empty mesh.
    pub fn aabb(&self) -> Option<(Point3<f64>, Point3<f64>)> {
        if self.vertices.is_empty() {
            return None;
        }
        let mut lo = self.vertices[0];
        let mut hi = self.vertices[0];
        for v in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        Some((lo, hi))
    }

    /// Rigidly transformed copy.
    pub fn transformed(&self, iso: &Isometry3<f64>) -> Self {
        TriMesh {
            vertices: self.vertices.iter().map(|v| iso * v).collect(),
            faces: self.faces.clone(),
            face_colors: self.face_colors.clone(),
            face_normals: self
                .face_normals
                .iter()
                .map(|n| Unit::new_normalize(iso.rotation * n.into_inner()))
                .collect(),
        }
    }

    /// Appends `other`'s geometry; returns the face-index offset at which it
    /// was inserted.
    pub fn append(&mut self, other: &TriMesh) -> usize {
        let voff = self.vertices.len() as u32;
        let foff = self.faces.len();
        self.vertices.extend_from_slice(&other.vertices);
        self.faces
            .extend(other.faces.iter().map(|f| [f[0] + voff, f[1] + voff, f[2] + voff]));
        self.face_colors.extend_from_slice(&other.face_colors);
        self.face_normals.extend_from_slice(&other.face_normals);
        foff
    }

    /// Axis-aligned box from `min` to `max`, two triangles per side.
    /// `normals_inward` selects the winding: inward for room shells,
    /// outward for solid objects placed in a room.
    pub fn axis_box(
        min: Point3<f64>,
        max: Point3<f64>,
        normals_inward: bool,
        face_colors: [[f64; 3]; 6],
    ) -> Result<Self> {
        let (lo, hi) = (min, max);
        let corner = |mask: [u8; 3]| {
            Point3::new(
                if mask[0] == 0 { lo.x } else { hi.x },
                if mask[1] == 0 { lo.y } else { hi.y },
                if mask[2] == 0 { lo.z } else { hi.z },
            )
        };
        let mut vertices = Vec::with_capacity(8);
        for m in 0..8u8 {
            vertices.push(corner([m & 1, (m >> 1) & 1, (m >> 2) & 1]));
        }
        // sides in order: x=lo, x=hi, y=lo, y=hi, z=lo, z=hi
        // each quad wound so its normal points OUT of the box
        let quads: [[u32; 4]; 6] = [
            [0, 4, 6, 2], // x = lo, normal -x
            [1, 3, 7, 5], // x = hi, normal +x
            [0, 1, 5, 4], // y = lo, normal -y
            [2, 6, 7, 3], // y = hi, normal +y
            [0, 2, 3, 1], // z = lo, normal -z
            [4, 5, 7, 6], // z = hi, normal +z
        ];
        let mut faces = Vec::with_capacity(12);
        let mut colors = Vec::with_capacity(12);
        for (side, q) in quads.iter().enumerate() {
            let [a, b, c, d] = *q;
            if normals_inward {
                faces.push([a, c, b]);
                faces.push([a, d, c]);
            } else {
                faces.push([a, b, c]);
                faces.push([a, c, d]);
            }
            colors.push(face_colors[side]);
            colors.push(face_colors[side]);
        }
        TriMesh::new(vertices, faces, Some(colors))
    }
}
