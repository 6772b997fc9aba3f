//! Scene editing with re-rendering, and field-augmented acoustic
//! localization over an RIR database.
//!
//! Edits are pure: they return a new scene and leave the original untouched.
//! A fitted [`FieldModel`](crate::field::FieldModel) is conditioned on one
//! scene and Tx pose, so any geometry or material edit invalidates it; edits
//! re-render through the ray tracer only.

use crate::error::{Error, Result};
use crate::field::FieldModel;
use crate::geometry::{segment_mesh, Pose, Scene, SurfaceSegment, TriMesh};
use crate::raytrace::{render_rir, DeviceGains, FrequencyGrid, MaterialSpectrum};
use crate::signals::Rir;
use nalgebra::{Point3, Translation3, Vector3};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Localization feature length: log-spaced RMS envelope bins.
pub const FEATURE_BINS: usize = 64;

/// First log-spaced bin edge, seconds.
const FEATURE_T_MIN: f64 = 1e-3;

/// A single scene edit.
#[derive(Debug, Clone)]
pub enum EditOp {
    /// Rebind one segment's reflectivity.
    SetMaterial { segment: usize, material: MaterialSpectrum },
    /// Add a mesh (e.g. furniture); its faces are segmented independently
    /// and every new segment gets `material`.
    InsertMesh { mesh: TriMesh, material: MaterialSpectrum },
    /// Delete a segment and its faces.
    RemoveSegment { segment: usize },
    /// Rigidly translate a segment whose vertices are not shared outside it.
    MoveSegment { segment: usize, translation: Vector3<f64> },
}

/// Applies one edit, returning the new scene. Inserted meshes are
/// re-segmented in isolation; existing segment ids are preserved except by
/// `RemoveSegment`, which renumbers the survivors in order.
pub fn apply_edit(scene: &Scene, op: &EditOp) -> Result<Scene> {
    match op {
        EditOp::SetMaterial { segment, material } => {
            check_segment(scene, *segment)?;
            let mut materials = scene.materials.clone();
            materials[*segment] = material.clone();
            Scene::new(
                scene.mesh.clone(),
                scene.segments.clone(),
                materials,
                scene.speed_of_sound,
            )
        }
        EditOp::InsertMesh { mesh, material } => {
            let mut merged = scene.mesh.clone();
            let face_offset = merged.append(mesh) as u32;
            let mut segments = scene.segments.clone();
            let mut materials = scene.materials.clone();
            for mut seg in segment_mesh(mesh, crate::geometry::COLOR_TOL, crate::geometry::NORMAL_TOL_DEG)
            {
                seg.id = segments.len();
                seg.material = seg.id;
                for f in &mut seg.faces {
                    *f += face_offset;
                }
                segments.push(seg);
                materials.push(material.clone());
            }
            Scene::new(merged, segments, materials, scene.speed_of_sound)
        }
        EditOp::RemoveSegment { segment } => {
            check_segment(scene, *segment)?;
            let removed: BTreeSet<u32> = scene.segments[*segment].faces.iter().copied().collect();
            let mut face_map = vec![u32::MAX; scene.mesh.num_faces()];
            let mut faces = Vec::new();
            let mut colors = Vec::new();
            let mut normals = Vec::new();
            for f in 0..scene.mesh.num_faces() {
                if removed.contains(&(f as u32)) {
                    continue;
                }
                face_map[f] = faces.len() as u32;
                faces.push(scene.mesh.faces[f]);
                colors.push(scene.mesh.face_colors[f]);
                normals.push(scene.mesh.face_normals[f]);
            }
            let mesh = TriMesh {
                vertices: scene.mesh.vertices.clone(),
                faces,
                face_colors: colors,
                face_normals: normals,
            };
            let mut segments = Vec::new();
            let mut materials = Vec::new();
            for seg in &scene.segments {
                if seg.id == *segment {
                    continue;
                }
                segments.push(SurfaceSegment {
                    id: segments.len(),
                    faces: seg.faces.iter().map(|&f| face_map[f as usize]).collect(),
                    color: seg.color,
                    material: segments.len(),
                });
                materials.push(scene.materials[seg.id].clone());
            }
            Scene::new(mesh, segments, materials, scene.speed_of_sound)
        }
        EditOp::MoveSegment { segment, translation } => {
            check_segment(scene, *segment)?;
            let inside: BTreeSet<u32> = scene.segments[*segment].faces.iter().copied().collect();
            let mut owned: BTreeSet<u32> = BTreeSet::new();
            for &f in &scene.segments[*segment].faces {
                owned.extend(scene.mesh.faces[f as usize]);
            }
            for f in 0..scene.mesh.num_faces() as u32 {
                if !inside.contains(&f)
                    && scene.mesh.faces[f as usize].iter().any(|v| owned.contains(v))
                {
                    return Err(Error::Edit(format!(
                        "segment {segment} shares vertices with other segments; cannot move"
                    )));
                }
            }
            let mut mesh = scene.mesh.clone();
            let t = Translation3::from(*translation);
            for &v in &owned {
                mesh.vertices[v as usize] = t * mesh.vertices[v as usize];
            }
            Scene::new(mesh, scene.segments.clone(), scene.materials.clone(), scene.speed_of_sound)
        }
    }
}

fn check_segment(scene: &Scene, segment: usize) -> Result<()> {
    if segment >= scene.segments.len() {
        return Err(Error::Edit(format!(
            "segment {segment} does not exist ({} segments)",
            scene.segments.len()
        )));
    }
    Ok(())
}

/// JSON form of an edit script entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum EditOpFile {
    SetMaterial {
        segment: usize,
        bands: [f64; 7],
    },
    InsertMesh {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ply: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        vertices: Option<Vec<[f64; 3]>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        faces: Option<Vec<[u32; 3]>>,
        bands: [f64; 7],
    },
    RemoveSegment {
        segment: usize,
    },
    MoveSegment {
        segment: usize,
        translation: [f64; 3],
    },
}

impl EditOpFile {
    pub fn resolve(&self, base_dir: &std::path::Path) -> Result<EditOp> {
        Ok(match self {
            EditOpFile::SetMaterial { segment, bands } => EditOp::SetMaterial {
                segment: *segment,
                material: MaterialSpectrum::new(*bands)?,
            },
            EditOpFile::InsertMesh { ply, vertices, faces, bands } => {
                let mesh = match (ply, vertices, faces) {
                    (Some(p), None, None) => crate::geometry::ply::load_ply(base_dir.join(p))?,
                    (None, Some(v), Some(f)) => TriMesh::new(
                        v.iter().map(|p| Point3::new(p[0], p[1], p[2])).collect(),
                        f.clone(),
                        None,
                    )?,
                    _ => {
                        return Err(Error::config(
                            "insert_mesh needs either `ply` or `vertices`+`faces`",
                        ))
                    }
                };
                EditOp::InsertMesh { mesh, material: MaterialSpectrum::new(*bands)? }
            }
            EditOpFile::RemoveSegment { segment } => EditOp::RemoveSegment { segment: *segment },
            EditOpFile::MoveSegment { segment, translation } => EditOp::MoveSegment {
                segment: *segment,
                translation: Vector3::new(translation[0], translation[1], translation[2]),
            },
        })
    }
}

/// Loads a JSON edit script (an array of ops, applied in order).
pub fn load_edit_script(path: impl AsRef<std::path::Path>) -> Result<Vec<EditOp>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let ops: Vec<EditOpFile> = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    let dir = path.parent().unwrap_or(std::path::Path::new("."));
    ops.iter().map(|op| op.resolve(dir)).collect()
}

/// Whether a database entry came from capture or from a renderer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RirSource {
    Measured,
    Synthesized,
}

#[derive(Debug, Clone)]
pub struct DbEntry {
    pub position: Point3<f64>,
    pub features: Vec<f64>,
    pub source: RirSource,
}

/// Position-tagged RIR fingerprints for nearest-neighbor localization.
/// Immutable after build; queries are concurrent.
#[derive(Debug, Clone)]
pub struct RirDatabase {
    pub entries: Vec<DbEntry>,
    pub feature_dim: usize,
    pub tx_pose: Pose,
    /// Feature horizon, seconds of absolute time.
    pub duration: f64,
    pub sample_rate: f64,
}

/// 64 log-spaced RMS envelope bins over absolute time `[0, duration]`.
/// Taps are placed at their onset so the direct-path delay shifts the
/// envelope, which is what makes the feature position-dependent.
pub fn featurize(rir: &Rir, duration: f64) -> Vec<f64> {
    let n = (duration * rir.sample_rate).round() as usize;
    let abs = rir.to_absolute(n);
    let ratio = duration / FEATURE_T_MIN;
    let mut edges = Vec::with_capacity(FEATURE_BINS + 1);
    edges.push(0.0);
    for i in 0..FEATURE_BINS {
        edges.push(FEATURE_T_MIN * ratio.powf(i as f64 / (FEATURE_BINS - 1) as f64));
    }
    let mut out = Vec::with_capacity(FEATURE_BINS);
    for b in 0..FEATURE_BINS {
        let lo = ((edges[b] * rir.sample_rate) as usize).min(n);
        let hi = ((edges[b + 1] * rir.sample_rate) as usize).min(n).max(lo);
        if hi == lo {
            out.push(0.0);
            continue;
        }
        let ms: f64 = abs[lo..hi].iter().map(|v| v * v).sum::<f64>() / (hi - lo) as f64;
        out.push(ms.sqrt());
    }
    out
}

/// Anything that can synthesize an RIR at a receiver pose for the database's
/// fixed Tx.
pub trait RirSynth {
    fn synthesize(&self, rx: &Pose) -> Result<Rir>;
}

/// Ray-traced synthesizer.
pub struct RaytraceSynth<'a> {
    pub scene: &'a Scene,
    pub tx_pose: Pose,
    pub gains: DeviceGains,
    pub grid: FrequencyGrid,
    pub max_bounces: usize,
    pub duration: f64,
}

impl RirSynth for RaytraceSynth<'_> {
    fn synthesize(&self, rx: &Pose) -> Result<Rir> {
        render_rir(
            self.scene,
            &self.tx_pose,
            rx,
            &self.gains,
            &self.grid,
            self.max_bounces,
            self.duration,
        )
    }
}

/// Field-model synthesizer.
pub struct FieldSynth<'a> {
    pub scene: &'a Scene,
    pub model: &'a FieldModel,
}

impl RirSynth for FieldSynth<'_> {
    fn synthesize(&self, rx: &Pose) -> Result<Rir> {
        self.model.render(self.scene, rx)
    }
}

impl RirDatabase {
    /// Builds from measured (position, RIR) pairs.
    pub fn build(
        tx_pose: Pose,
        measured: &[(Point3<f64>, Rir)],
        duration: f64,
    ) -> Result<RirDatabase> {
        if measured.is_empty() {
            return Err(Error::Estimate("empty database".into()));
        }
        let fs = measured[0].1.sample_rate;
        let entries = measured
            .iter()
            .map(|(p, rir)| DbEntry {
                position: *p,
                features: featurize(rir, duration),
                source: RirSource::Measured,
            })
            .collect();
        Ok(RirDatabase {
            entries,
            feature_dim: FEATURE_BINS,
            tx_pose,
            duration,
            sample_rate: fs,
        })
    }

    /// Inverse-distance-weighted mean of the k nearest neighbors' positions.
    pub fn localize(&self, query: &Rir, k: usize) -> Result<Point3<f64>> {
        if self.entries.is_empty() {
            return Err(Error::Estimate("empty database".into()));
        }
        let qf = featurize(query, self.duration);
        if qf.len() != self.feature_dim {
            return Err(Error::Estimate("feature dimension mismatch".into()));
        }
        let mut scored: Vec<(f64, usize)> = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let d2: f64 = e
                    .features
                    .iter()
                    .zip(qf.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d2.sqrt(), i)
            })
            .collect();
        let k = k.max(1).min(scored.len());
        scored.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).unwrap());
        scored.truncate(k);
        scored.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut wsum = 0.0;
        let mut acc = Vector3::zeros();
        for (d, i) in scored {
            let w = 1.0 / (d + 1e-6);
            wsum += w;
            acc += self.entries[i].position.coords * w;
        }
        Ok(Point3::from(acc / wsum))
    }

    /// Appends renderer-synthesized entries at the grid positions; original
    /// entries are preserved bit-exactly.
    pub fn augment(&self, renderer: &dyn RirSynth, grid: &[Point3<f64>]) -> Result<RirDatabase> {
        let mut out = self.clone();
        for p in grid {
            let rir = renderer.synthesize(&Pose::new(*p, nalgebra::UnitQuaternion::identity()))?;
            out.entries.push(DbEntry {
                position: *p,
                features: featurize(&rir, self.duration),
                source: RirSource::Synthesized,
            });
        }
        Ok(out)
    }

    /// Binary blob with a JSON header (format version 1).
    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let header = serde_json::json!({
            "format": "roomtwin-rirdb",
            "version": 1,
            "count": self.entries.len(),
            "feature_dim": self.feature_dim,
            "duration": self.duration,
            "sample_rate": self.sample_rate,
            "tx_pose": self.tx_pose,
        });
        let stride = 3 + self.feature_dim + 1;
        let mut vals = Vec::with_capacity(self.entries.len() * stride);
        for e in &self.entries {
            vals.extend_from_slice(&[e.position.x, e.position.y, e.position.z]);
            vals.extend_from_slice(&e.features);
            vals.push(match e.source {
                RirSource::Measured => 0.0,
                RirSource::Synthesized => 1.0,
            });
        }
        crate::io::write_blob(path, &header, &crate::io::f64s_to_bytes(&vals))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<RirDatabase> {
        let path = path.as_ref();
        let (header, payload) = crate::io::read_blob(path)?;
        let bad = |d: &str| Error::Format { path: path.display().to_string(), detail: d.into() };
        if header["version"] != 1 || header["format"] != "roomtwin-rirdb" {
            return Err(bad("unsupported database blob"));
        }
        let count = header["count"].as_u64().ok_or_else(|| bad("count"))? as usize;
        let feature_dim = header["feature_dim"].as_u64().ok_or_else(|| bad("feature_dim"))? as usize;
        let duration = header["duration"].as_f64().ok_or_else(|| bad("duration"))?;
        let sample_rate = header["sample_rate"].as_f64().ok_or_else(|| bad("sample_rate"))?;
        let tx_pose: Pose = serde_json::from_value(header["tx_pose"].clone())?;
        let vals = crate::io::bytes_to_f64s(&payload)?;
        let stride = 3 + feature_dim + 1;
        if vals.len() != count * stride {
            return Err(bad("payload size mismatch"));
        }
        let entries = vals
            .chunks_exact(stride)
            .map(|c| DbEntry {
                position: Point3::new(c[0], c[1], c[2]),
                features: c[3..3 + feature_dim].to_vec(),
                source: if c[stride - 1] == 0.0 {
                    RirSource::Measured
                } else {
                    RirSource::Synthesized
                },
            })
            .collect();
        Ok(RirDatabase { entries, feature_dim, tx_pose, duration, sample_rate })
    }
}

/// Uniform grid of positions over a box, inclusive of both ends.
pub fn position_grid(
    lo: Point3<f64>,
    hi: Point3<f64>,
    counts: [usize; 3],
) -> Vec<Point3<f64>> {
    let mut out = Vec::with_capacity(counts.iter().product());
    let step = |a: f64, b: f64, n: usize, i: usize| {
        if n <= 1 {
            (a + b) / 2.0
        } else {
            a + (b - a) * i as f64 / (n - 1) as f64
        }
    };
    for ix in 0..counts[0] {
        for iy in 0..counts[1] {
            for iz in 0..counts[2] {
                out.push(Point3::new(
                    step(lo.x, hi.x, counts[0], ix),
                    step(lo.y, hi.y, counts[1], iy),
                    step(lo.z, hi.z, counts[2], iz),
                ));
            }
        }
    }
    out
}
