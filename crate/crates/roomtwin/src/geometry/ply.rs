//! PLY mesh I/O: ASCII and binary little-endian, vertices plus faces with
//! optional per-face uchar RGB.

use super::mesh::TriMesh;
use crate::error::{Error, Result};
use nalgebra::Point3;
use std::io::{BufRead, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Format {
    Ascii,
    BinaryLe,
}

#[derive(Debug, Clone, Copy)]
enum Scalar {
    F32,
    F64,
    U8,
    I8,
    U16,
    I16,
    U32,
    I32,
}

impl Scalar {
    fn parse(name: &str) -> Option<Scalar> {
        Some(match name {
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            "uchar" | "uint8" => Scalar::U8,
            "char" | "int8" => Scalar::I8,
            "ushort" | "uint16" => Scalar::U16,
            "short" | "int16" => Scalar::I16,
            "uint" | "uint32" => Scalar::U32,
            "int" | "int32" => Scalar::I32,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::U8 | Scalar::I8 => 1,
            Scalar::U16 | Scalar::I16 => 2,
            Scalar::U32 | Scalar::I32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, buf: &[u8]) -> f64 {
        match self {
            Scalar::U8 => buf[0] as f64,
            Scalar::I8 => buf[0] as i8 as f64,
            Scalar::U16 => u16::from_le_bytes([buf[0], buf[1]]) as f64,
            Scalar::I16 => i16::from_le_bytes([buf[0], buf[1]]) as f64,
            Scalar::U32 => u32::from_le_bytes(buf[..4].try_into().unwrap()) as f64,
            Scalar::I32 => i32::from_le_bytes(buf[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(buf[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(buf[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { count_ty: Scalar, item_ty: Scalar },
}

#[derive(Debug)]
struct ElementDef {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

fn fmt_err(path: &Path, detail: impl Into<String>) -> Error {
    Error::Format { path: path.display().to_string(), detail: detail.into() }
}

/// Loads a PLY mesh. Vertex x/y/z required; face colors read from
/// `red`/`green`/`blue` face properties when present (0-255 -> [0,1]).
pub fn load_ply(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);

    // header is always ASCII lines
    let mut line = String::new();
    file.read_line(&mut line)?;
    if line.trim() != "ply" {
        return Err(fmt_err(path, "missing ply magic"));
    }
    let mut format = None;
    let mut elements: Vec<ElementDef> = Vec::new();
    loop {
        line.clear();
        if file.read_line(&mut line)? == 0 {
            return Err(fmt_err(path, "unterminated header"));
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", f, _version] => {
                format = Some(match *f {
                    "ascii" => Format::Ascii,
                    "binary_little_endian" => Format::BinaryLe,
                    other => return Err(fmt_err(path, format!("unsupported format {other}"))),
                });
            }
            ["element", name, count] => {
                let count: usize = count
                    .parse()
                    .map_err(|_| fmt_err(path, "bad element count"))?;
                elements.push(ElementDef { name: name.to_string(), count, properties: Vec::new() });
            }
            ["property", "list", count_ty, item_ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| fmt_err(path, "property before element"))?;
                let _ = name;
                el.properties.push(Property::List {
                    count_ty: Scalar::parse(count_ty)
                        .ok_or_else(|| fmt_err(path, "unknown list count type"))?,
                    item_ty: Scalar::parse(item_ty)
                        .ok_or_else(|| fmt_err(path, "unknown list item type"))?,
                });
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| fmt_err(path, "property before element"))?;
                el.properties.push(Property::Scalar {
                    name: name.to_string(),
                    ty: Scalar::parse(ty).ok_or_else(|| fmt_err(path, "unknown property type"))?,
                });
            }
            ["end_header"] => break,
            other => return Err(fmt_err(path, format!("bad header line: {other:?}"))),
        }
    }
    let format = format.ok_or_else(|| fmt_err(path, "missing format line"))?;

    let mut vertices: Vec<Point3<f64>> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();
    let mut colors: Vec<[f64; 3]> = Vec::new();
    let mut has_colors = false;

    for el in &elements {
        match el.name.as_str() {
            "vertex" => {
                let (xi, yi, zi) = (
                    prop_index(el, "x").ok_or_else(|| fmt_err(path, "vertex missing x"))?,
                    prop_index(el, "y").ok_or_else(|| fmt_err(path, "vertex missing y"))?,
                    prop_index(el, "z").ok_or_else(|| fmt_err(path, "vertex missing z"))?,
                );
                for _ in 0..el.count {
                    let row = read_row(&mut file, el, format, path)?;
                    vertices.push(Point3::new(
                        row.scalars[xi],
                        row.scalars[yi],
                        row.scalars[zi],
                    ));
                }
            }
            "face" => {
                let ri = prop_index(el, "red");
                let gi = prop_index(el, "green");
                let bi = prop_index(el, "blue");
                has_colors = ri.is_some() && gi.is_some() && bi.is_some();
                for _ in 0..el.count {
                    let row = read_row(&mut file, el, format, path)?;
                    let idx = row
                        .list
                        .as_ref()
                        .ok_or_else(|| fmt_err(path, "face without vertex_indices"))?;
                    if idx.len() != 3 {
                        return Err(fmt_err(
                            path,
                            format!("only triangle faces supported, got {}-gon", idx.len()),
                        ));
                    }
                    faces.push([idx[0] as u32, idx[1] as u32, idx[2] as u32]);
                    if has_colors {
                        colors.push([
                            row.scalars[ri.unwrap()] / 255.0,
                            row.scalars[gi.unwrap()] / 255.0,
                            row.scalars[bi.unwrap()] / 255.0,
                        ]);
                    }
                }
            }
            _ => {
                // skip unknown elements completely
                for _ in 0..el.count {
                    read_row(&mut file, el, format, path)?;
                }
            }
        }
    }
    TriMesh::new(vertices, faces, if has_colors { Some(colors) } else { None })
}

/// Index of a scalar property within an element's flattened scalar row.
fn prop_index(el: &ElementDef, name: &str) -> Option<usize> {
    let mut idx = 0;
    for p in &el.properties {
        match p {
            Property::Scalar { name: n, .. } => {
                if n == name {
                    return Some(idx);
                }
                idx += 1;
            }
            Property::List { .. } => {}
        }
    }
    None
}

struct Row {
    scalars: Vec<f64>,
    list: Option<Vec<u64>>,
}

fn read_row(
    file: &mut impl BufRead,
    el: &ElementDef,
    format: Format,
    path: &Path,
) -> Result<Row> {
    let mut scalars = Vec::new();
    let mut list = None;
    match format {
        Format::Ascii => {
            let mut line = String::new();
            loop {
                line.clear();
                if file.read_line(&mut line)? == 0 {
                    return Err(fmt_err(path, "unexpected end of file"));
                }
                if !line.trim().is_empty() {
                    break;
                }
            }
            let mut toks = line.split_whitespace();
            let mut next = |p: &Path| -> Result<f64> {
                toks.next()
                    .ok_or_else(|| fmt_err(p, "short data row"))?
                    .parse::<f64>()
                    .map_err(|_| fmt_err(p, "bad number in data row"))
            };
            for p in &el.properties {
                match p {
                    Property::Scalar { .. } => scalars.push(next(path)?),
                    Property::List { .. } => {
                        let n = next(path)? as usize;
                        let mut items = Vec::with_capacity(n);
                        for _ in 0..n {
                            items.push(next(path)? as u64);
                        }
                        list = Some(items);
                    }
                }
            }
        }
        Format::BinaryLe => {
            let mut buf = [0u8; 8];
            for p in &el.properties {
                match p {
                    Property::Scalar { ty, .. } => {
                        file.read_exact(&mut buf[..ty.size()])?;
                        scalars.push(ty.read_le(&buf));
                    }
                    Property::List { count_ty, item_ty, .. } => {
                        file.read_exact(&mut buf[..count_ty.size()])?;
                        let n = count_ty.read_le(&buf) as usize;
                        let mut items = Vec::with_capacity(n);
                        for _ in 0..n {
                            file.read_exact(&mut buf[..item_ty.size()])?;
                            items.push(item_ty.read_le(&buf) as u64);
                        }
                        list = Some(items);
                    }
                }
            }
        }
    }
    Ok(Row { scalars, list })
}

/// Writes an ASCII PLY with per-face uchar RGB.
pub fn save_ply(path: impl AsRef<Path>, mesh: &TriMesh) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "ply")?;
    writeln!(f, "format ascii 1.0")?;
    writeln!(f, "element vertex {}", mesh.vertices.len())?;
    writeln!(f, "property double x")?;
    writeln!(f, "property double y")?;
    writeln!(f, "property double z")?;
    writeln!(f, "element face {}", mesh.num_faces())?;
    writeln!(f, "property list uchar uint vertex_indices")?;
    writeln!(f, "property uchar red")?;
    writeln!(f, "property uchar green")?;
    writeln!(f, "property uchar blue")?;
    writeln!(f, "end_header")?;
    for v in &mesh.vertices {
        writeln!(f, "{} {} {}", v.x, v.y, v.z)?;
    }
    for (i, face) in mesh.faces.iter().enumerate() {
        let c = mesh.face_colors[i];
        writeln!(
            f,
            "3 {} {} {} {} {} {}",
            face[0],
            face[1],
            face[2],
            (c[0] * 255.0).round() as u8,
            (c[1] * 255.0).round() as u8,
            (c[2] * 255.0).round() as u8,
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Point3;

    fn sample_mesh() -> TriMesh {
        TriMesh::axis_box(
            Point3::origin(),
            Point3::new(1.0, 2.0, 3.0),
            true,
            [
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
                [1.0, 1.0, 0.0],
                [0.0, 1.0, 1.0],
                [1.0, 0.0, 1.0],
            ],
        )
        .unwrap()
    }

    #[test]
    fn ascii_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ply");
        let m = sample_mesh();
        save_ply(&path, &m).unwrap();
        let back = load_ply(&path).unwrap();
        assert_eq!(back.num_faces(), m.num_faces());
        assert_eq!(back.vertices.len(), m.vertices.len());
        for (a, b) in back.face_colors.iter().zip(m.face_colors.iter()) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1.0 / 255.0);
            }
        }
    }

    #[test]
    fn binary_little_endian_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.ply");
        // hand-written 2-triangle square with face colors
        let mut bytes = Vec::new();
        bytes.extend_from_slice(
            b"ply\nformat binary_little_endian 1.0\nelement vertex 4\n\
              property float x\nproperty float y\nproperty float z\n\
              element face 2\nproperty list uchar int vertex_indices\n\
              property uchar red\nproperty uchar green\nproperty uchar blue\n\
              end_header\n",
        );
        let verts: [[f32; 3]; 4] = [
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [1.0, 1.0, 0.0],
            [0.0, 1.0, 0.0],
        ];
        for v in verts {
            for c in v {
                bytes.extend_from_slice(&c.to_le_bytes());
            }
        }
        for (tri, rgb) in [([0i32, 1, 2], [255u8, 0, 0]), ([0, 2, 3], [0, 255, 0])] {
            bytes.push(3u8);
            for i in tri {
                bytes.extend_from_slice(&i.to_le_bytes());
            }
            bytes.extend_from_slice(&rgb);
        }
        std::fs::write(&path, &bytes).unwrap();
        let m = load_ply(&path).unwrap();
        assert_eq!(m.vertices.len(), 4);
        assert_eq!(m.num_faces(), 2);
        assert_eq!(m.face_colors[0], [1.0, 0.0, 0.0]);
        assert_eq!(m.face_colors[1], [0.0, 1.0, 0.0]);
    }

    #[test]
    fn quad_faces_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.ply");
        std::fs::write(
            &path,
            "ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n",
        )
        .unwrap();
        assert!(load_ply(&path).is_err());
    }
}
