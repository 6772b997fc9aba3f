//! Scene representation: poses, triangle meshes, PLY I/O, BVH ray casting,
//! region-growing segmentation, and quasi-uniform sphere sampling.

mod bvh;
mod mesh;
pub mod ply;
mod segment;

pub use bvh::{ray_cast_first_hit, Bvh, RayHit, RAY_EPS};
pub use mesh::TriMesh;
pub(crate) use segment::face_adjacency;
pub use segment::{segment_mesh, SurfaceSegment};

use crate::error::{Error, Result};
use crate::raytrace::MaterialSpectrum;
use nalgebra::{Point3, Quaternion, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::OnceLock;

/// Default segmentation tolerances.
pub const COLOR_TOL: f64 = 0.15;
pub const NORMAL_TOL_DEG: f64 = 15.0;

/// Device position and orientation. The orientation maps device-local
/// directions into world space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Point3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Pose {
    pub fn new(position: Point3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Pose { position, orientation }
    }

    /// Identity orientation at `position`.
    pub fn at(x: f64, y: f64, z: f64) -> Self {
        Pose { position: Point3::new(x, y, z), orientation: UnitQuaternion::identity() }
    }

    /// Builds from a raw quaternion `[w, i, j, k]`, enforcing unit norm.
    pub fn from_raw(position: [f64; 3], quat_wijk: [f64; 4]) -> Result<Self> {
        let q = Quaternion::new(quat_wijk[0], quat_wijk[1], quat_wijk[2], quat_wijk[3]);
        if (q.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::geometry(format!(
                "orientation quaternion norm {:.8} != 1",
                q.norm()
            )));
        }
        Ok(Pose {
            position: Point3::new(position[0], position[1], position[2]),
            orientation: UnitQuaternion::new_normalize(q),
        })
    }

    /// World direction expressed in the device's local frame.
    pub fn world_to_local(&self, dir: &Unit<Vector3<f64>>) -> Unit<Vector3<f64>> {
        Unit::new_normalize(self.orientation.inverse_transform_vector(dir))
    }
}

/// Serialized form: `{"position": [x,y,z], "orientation": [w,i,j,k]}`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseRepr {
    position: [f64; 3],
    orientation: [f64; 4],
}

impl Serialize for Pose {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let q = self.orientation.quaternion();
        PoseRepr {
            position: [self.position.x, self.position.y, self.position.z],
            orientation: [q.w, q.i, q.j, q.k],
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = PoseRepr::deserialize(d)?;
        Pose::from_raw(r.position, r.orientation).map_err(serde::de::Error::custom)
    }
}

/// Deterministic quasi-uniform unit directions (Fibonacci lattice).
pub fn sphere_directions(k: usize) -> Result<Vec<Unit<Vector3<f64>>>> {
    if k == 0 {
        return Err(Error::geometry("direction count must be >= 1"));
    }
    let golden_angle = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    Ok((0..k)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / k as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden_angle * i as f64;
            Unit::new_normalize(Vector3::new(r * phi.cos(), r * phi.sin(), z))
        })
        .collect())
}

/// A full acoustic scene: mesh + segments + per-segment materials + medium.
/// Immutable after construction; queries are safe from any thread.
#[derive(Debug, Clone)]
pub struct Scene {
    pub mesh: TriMesh,
    pub segments: Vec<SurfaceSegment>,
    /// One material per segment, indexed by segment id.
    pub materials: Vec<MaterialSpectrum>,
    pub speed_of_sound: f64,
    bvh: Bvh,
    face_segment: Vec<u32>,
    reflectors: OnceLock<Vec<crate::raytrace::Reflector>>,
}

impl Scene {
    pub fn new(
        mesh: TriMesh,
        segments: Vec<SurfaceSegment>,
        materials: Vec<MaterialSpectrum>,
        speed_of_sound: f64,
    ) -> Result<Self> {
        if !(speed_of_sound > 0.0) {
            return Err(Error::geometry("speed of sound must be positive"));
        }
        if materials.len() != segments.len() {
            return Err(Error::geometry(format!(
                "{} segments but {} materials",
                segments.len(),
                materials.len()
            )));
        }
        let mut face_segment = vec![u32::MAX; mesh.num_faces()];
        for seg in &segments {
            for &f in &seg.faces {
                let fi = f as usize;
                if fi >= mesh.num_faces() {
                    return Err(Error::geometry(format!("segment {} references face {f}", seg.id)));
                }
                if face_segment[fi] != u32::MAX {
                    return Err(Error::geometry(format!("face {f} in more than one segment")));
                }
                face_segment[fi] = seg.id as u32;
            }
        }
        if face_segment.iter().any(|&s| s == u32::MAX) {
            return Err(Error::geometry("segments do not cover every face"));
        }
        let bvh = Bvh::build(&mesh);
        Ok(Scene {
            mesh,
            segments,
            materials,
            speed_of_sound,
            bvh,
            face_segment,
            reflectors: OnceLock::new(),
        })
    }

    /// Segments the mesh with the given tolerances and binds every segment
    /// to `material`.
    pub fn from_mesh(
        mesh: TriMesh,
        color_tol: f64,
        normal_tol_deg: f64,
        material: MaterialSpectrum,
        speed_of_sound: f64,
    ) -> Result<Self> {
        let segments = segment_mesh(&mesh, color_tol, normal_tol_deg);
        let materials = vec![material; segments.len()];
        Scene::new(mesh, segments, materials, speed_of_sound)
    }

    /// Free field: no surfaces at all.
    pub fn free_field(speed_of_sound: f64) -> Self {
        Scene::new(TriMesh::empty(), Vec::new(), Vec::new(), speed_of_sound).unwrap()
    }

    /// Axis-aligned empty room `[0, dims]` with inward-facing walls, one
    /// segment per wall in order x0, x1, y0, y1, floor (z0), ceiling (z1).
    pub fn shoebox(dims: [f64; 3], materials: [MaterialSpectrum; 6], c: f64) -> Result<Self> {
        let colors = [
            [0.85, 0.2, 0.2],
            [0.2, 0.85, 0.2],
            [0.2, 0.2, 0.85],
            [0.85, 0.85, 0.2],
            [0.45, 0.3, 0.15],
            [0.9, 0.9, 0.9],
        ];
        let mesh = TriMesh::axis_box(
            Point3::origin(),
            Point3::new(dims[0], dims[1], dims[2]),
            true,
            colors,
        )?;
        let segments = (0..6)
            .map(|i| SurfaceSegment {
                id: i,
                faces: vec![2 * i as u32, 2 * i as u32 + 1],
                color: colors[i],
                material: i,
            })
            .collect();
        Scene::new(mesh, segments, materials.to_vec(), c)
    }

    /// Shoebox with the same material on all six walls.
    pub fn shoebox_uniform(dims: [f64; 3], material: MaterialSpectrum, c: f64) -> Result<Self> {
        Scene::shoebox(dims, std::array::from_fn(|_| material.clone()), c)
    }

    /// First surface hit along a ray (`t` > [`RAY_EPS`]).
    pub fn cast_ray(&self, origin: &Point3<f64>, dir: &Unit<Vector3<f64>>) -> Option<RayHit> {
        ray_cast_first_hit(&self.mesh, &self.bvh, origin, dir)
    }

    pub fn bvh(&self) -> &Bvh {
        &self.bvh
    }

    pub fn segment_of_face(&self, face: u32) -> usize {
        self.face_segment[face as usize] as usize
    }

    pub fn material_of_segment(&self, segment: usize) -> &MaterialSpectrum {
        &self.materials[segment]
    }

    /// Whether `p` lies inside the scene's bounding volume. A free-field
    /// scene contains every point.
    pub fn contains(&self, p: &Point3<f64>) -> bool {
        match self.mesh.aabb() {
            None => true,
            Some((lo, hi)) => (0..3).all(|k| p[k] >= lo[k] && p[k] <= hi[k]),
        }
    }

    /// Image-source reflectors, built once per scene.
    pub(crate) fn reflectors(&self) -> &[crate::raytrace::Reflector] {
        self.reflectors
            .get_or_init(|| crate::raytrace::build_reflectors(self))
    }
}

/// On-disk scene description. Either `mesh` (a PLY path relative to the JSON
/// file) or `shoebox` must be present. Explicit `segments` win over
/// re-segmentation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shoebox: Option<[f64; 3]>,
    #[serde(default = "default_c")]
    pub speed_of_sound: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segmentation: Option<SegmentationParams>,
    /// Explicit segments as face-id lists (index = segment id).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segments: Option<Vec<Vec<u32>>>,
    /// Per-segment 7-band reflectivities, keyed by segment id.
    #[serde(default, skip_serializing_if = "std::collections::BTreeMap::is_empty")]
    pub materials: std::collections::BTreeMap<String, [f64; 7]>,
    #[serde(default = "default_material_bands")]
    pub default_material: [f64; 7],
}

fn default_c() -> f64 {
    crate::SPEED_OF_SOUND
}

fn default_material_bands() -> [f64; 7] {
    [0.8; 7]
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentationParams {
    #[serde(default = "default_color_tol")]
    pub color_tol: f64,
    #[serde(default = "default_normal_tol")]
    pub normal_tol_deg: f64,
}

fn default_color_tol() -> f64 {
    COLOR_TOL
}

fn default_normal_tol() -> f64 {
    NORMAL_TOL_DEG
}

impl Scene {
    /// Loads a scene from a JSON description (see [`SceneFile`]).
    pub fn load(path: impl AsRef<Path>) -> Result<Scene> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let file: SceneFile = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        let dir = path.parent().unwrap_or(Path::new("."));
        Scene::from_file(&file, dir)
    }

    pub fn from_file(file: &SceneFile, base_dir: &Path) -> Result<Scene> {
        let default = MaterialSpectrum::new(file.default_material)?;
        let mesh = match (&file.mesh, &file.shoebox) {
            (Some(p), None) => ply::load_ply(base_dir.join(p))?,
            (None, Some(dims)) => {
                let boxed = Scene::shoebox_uniform(*dims, default.clone(), file.speed_of_sound)?;
                boxed.mesh
            }
            _ => {
                return Err(Error::config(
                    "scene needs exactly one of `mesh` or `shoebox`",
                ))
            }
        };
        let segments = match &file.segments {
            Some(lists) => lists
                .iter()
                .enumerate()
                .map(|(id, faces)| SurfaceSegment {
                    id,
                    faces: faces.clone(),
                    color: faces
                        .first()
                        .map(|&f| mesh.face_colors[f as usize])
                        .unwrap_or([1.0; 3]),
                    material: id,
                })
                .collect(),
            None => {
                let p = file.segmentation.unwrap_or(SegmentationParams {
                    color_tol: COLOR_TOL,
                    normal_tol_deg: NORMAL_TOL_DEG,
                });
                segment_mesh(&mesh, p.color_tol, p.normal_tol_deg)
            }
        };
        let mut materials = vec![default; segments.len()];
        for (key, bands) in &file.materials {
            let id: usize = key
                .parse()
                .map_err(|_| Error::config(format!("bad segment id key `{key}`")))?;
            if id >= materials.len() {
                return Err(Error::config(format!(
                    "material bound to segment {id}, but only {} segments exist",
                    materials.len()
                )));
            }
            materials[id] = MaterialSpectrum::new(*bands)?;
        }
        Scene::new(mesh, segments, materials, file.speed_of_sound)
    }

    /// Writes the scene as `name.json` + `name.ply` under `dir`.
    pub fn save(&self, dir: impl AsRef<Path>, name: &str) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        ply::save_ply(dir.join(format!("{name}.ply")), &self.mesh)?;
        let file = SceneFile {
            mesh: Some(format!("{name}.ply")),
            shoebox: None,
            speed_of_sound: self.speed_of_sound,
            segmentation: None,
            segments: Some(self.segments.iter().map(|s| s.faces.clone()).collect()),
            materials: self
                .segments
                .iter()
                .map(|s| (s.id.to_string(), self.materials[s.id].bands))
                .collect(),
            default_material: default_material_bands(),
        };
        std::fs::write(
            dir.join(format!("{name}.json")),
            serde_json::to_string_pretty(&file)?,
        )?;
        Ok(())
    }
}
