//! Binary little-endian PLY reader/writer for the de-facto Gaussian-splat
//! vertex layout: position, normal (ignored), 48 SH coefficients, logit
//! opacity, log scales, quaternion, plus an optional `object_id` property.
//!
//! All float fields pass through verbatim, so load→save round-trips are
//! bit-exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, WriteBytesExt};

use crate::error::{Error, Result};
use crate::scene::{GaussianPrimitive, GaussianScene, SH_COEFFS};

/// The 62 float properties of the canonical splat layout, in file order.
fn canonical_properties() -> Vec<String> {
    let mut names = vec![
        "x".to_string(),
        "y".to_string(),
        "z".to_string(),
        "nx".to_string(),
        "ny".to_string(),
        "nz".to_string(),
        "f_dc_0".to_string(),
        "f_dc_1".to_string(),
        "f_dc_2".to_string(),
    ];
    for i in 0..45 {
        names.push(format!("f_rest_{i}"));
    }
    names.push("opacity".to_string());
    for i in 0..3 {
        names.push(format!("scale_{i}"));
    }
    for i in 0..4 {
        names.push(format!("rot_{i}"));
    }
    names
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PropType {
    F32,
    F64,
    U8,
    I8,
    U16,
    I16,
    U32,
    I32,
}

impl PropType {
    fn parse(word: &str) -> Option<PropType> {
        Some(match word {
            "float" | "float32" => PropType::F32,
            "double" | "float64" => PropType::F64,
            "uchar" | "uint8" => PropType::U8,
            "char" | "int8" => PropType::I8,
            "ushort" | "uint16" => PropType::U16,
            "short" | "int16" => PropType::I16,
            "uint" | "uint32" => PropType::U32,
            "int" | "int32" => PropType::I32,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            PropType::U8 | PropType::I8 => 1,
            PropType::U16 | PropType::I16 => 2,
            PropType::F32 | PropType::U32 | PropType::I32 => 4,
            PropType::F64 => 8,
        }
    }
}

struct Header {
    vertex_count: usize,
    properties: Vec<(String, PropType)>,
}

fn read_header(reader: &mut impl BufRead, path: &Path) -> Result<Header> {
    let mut line = String::new();
    let mut read_line = |line: &mut String| -> Result<()> {
        line.clear();
        let n = reader
            .read_line(line)
            .map_err(|e| Error::io(path, e))?;
        if n == 0 {
            return Err(Error::Format(format!(
                "{}: unexpected end of header",
                path.display()
            )));
        }
        while line.ends_with('\n') || line.ends_with('\r') {
            line.pop();
        }
        Ok(())
    };

    read_line(&mut line)?;
    if line != "ply" {
        return Err(Error::Format(format!(
            "{}: not a PLY file (missing 'ply' magic)",
            path.display()
        )));
    }
    read_line(&mut line)?;
    if line != "format binary_little_endian 1.0" {
        return Err(Error::Format(format!(
            "{}: unsupported format '{line}', expected binary_little_endian 1.0",
            path.display()
        )));
    }

    let mut vertex_count: Option<usize> = None;
    let mut in_vertex_element = false;
    let mut properties = Vec::new();
    loop {
        read_line(&mut line)?;
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["end_header"] => break,
            ["comment", ..] | [] => {}
            ["element", "vertex", n] => {
                vertex_count = Some(n.parse().map_err(|_| {
                    Error::Format(format!("{}: bad vertex count '{n}'", path.display()))
                })?);
                in_vertex_element = true;
            }
            ["element", ..] => in_vertex_element = false,
            ["property", "list", ..] => {
                if in_vertex_element {
                    return Err(Error::Format(format!(
                        "{}: list properties on vertices are not supported",
                        path.display()
                    )));
                }
            }
            ["property", ty, name] => {
                if in_vertex_element {
                    let ty = PropType::parse(ty).ok_or_else(|| {
                        Error::Format(format!(
                            "{}: unknown property type '{ty}'",
                            path.display()
                        ))
                    })?;
                    properties.push((name.to_string(), ty));
                }
            }
            _ => {
                return Err(Error::Format(format!(
                    "{}: malformed header line '{line}'",
                    path.display()
                )))
            }
        }
    }
    let vertex_count = vertex_count.ok_or_else(|| {
        Error::Format(format!("{}: no vertex element in header", path.display()))
    })?;
    Ok(Header {
        vertex_count,
        properties,
    })
}

/// Loads a Gaussian-splat scene from a binary little-endian PLY file.
///
/// Properties are matched by name, so extra properties are skipped and any
/// vertex property order is accepted; the canonical order is the one
/// [`save_gaussian_ply`] writes. An `object_id` integer property, when
/// present, populates [`GaussianPrimitive::object_id`].
pub fn load_gaussian_ply(path: impl AsRef<Path>) -> Result<GaussianScene> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let header = read_header(&mut reader, path)?;

    // Byte offset of every property within one vertex record.
    let mut offsets = std::collections::HashMap::new();
    let mut stride = 0usize;
    for (name, ty) in &header.properties {
        offsets.insert(name.as_str(), (stride, *ty));
        stride += ty.size();
    }

    let required = canonical_properties();
    let mut float_offsets = Vec::with_capacity(required.len());
    for name in &required {
        match offsets.get(name.as_str()) {
            Some((off, PropType::F32)) => float_offsets.push(*off),
            Some((_, ty)) => {
                return Err(Error::Format(format!(
                    "{}: property '{name}' has type {ty:?}, expected float",
                    path.display()
                )))
            }
            None => {
                return Err(Error::Format(format!(
                    "{}: missing required property '{name}'",
                    path.display()
                )))
            }
        }
    }
    let id_prop = offsets.get("object_id").copied();
    if let Some((_, ty)) = id_prop {
        if matches!(ty, PropType::F32 | PropType::F64) {
            return Err(Error::Format(format!(
                "{}: property 'object_id' must be an integer type",
                path.display()
            )));
        }
    }

    let mut payload = vec![0u8; stride * header.vertex_count];
    reader
        .read_exact(&mut payload)
        .map_err(|e| Error::io(path, e))?;

    let mut gaussians = Vec::with_capacity(header.vertex_count);
    for v in 0..header.vertex_count {
        let rec = &payload[v * stride..(v + 1) * stride];
        let f = |off: usize| f32::from_le_bytes(rec[off..off + 4].try_into().unwrap());
        let mut g = GaussianPrimitive::at([0.0; 3]);
        g.position = [
            f(float_offsets[0]),
            f(float_offsets[1]),
            f(float_offsets[2]),
        ];
        // offsets 3..6 are the normal, ignored
        for c in 0..3 {
            g.sh[c] = f(float_offsets[6 + c]);
        }
        for c in 0..45 {
            g.sh[3 + c] = f(float_offsets[9 + c]);
        }
        g.opacity_logit = f(float_offsets[54]);
        for c in 0..3 {
            g.log_scale[c] = f(float_offsets[55 + c]);
        }
        for c in 0..4 {
            g.rotation_q[c] = f(float_offsets[58 + c]);
        }
        if let Some((off, ty)) = id_prop {
            let id = match ty {
                PropType::U8 => rec[off] as u32,
                PropType::I8 => rec[off] as i8 as u32,
                PropType::U16 => u16::from_le_bytes(rec[off..off + 2].try_into().unwrap()) as u32,
                PropType::I16 => i16::from_le_bytes(rec[off..off + 2].try_into().unwrap()) as u32,
                PropType::U32 => u32::from_le_bytes(rec[off..off + 4].try_into().unwrap()),
                PropType::I32 => i32::from_le_bytes(rec[off..off + 4].try_into().unwrap()) as u32,
                PropType::F32 | PropType::F64 => unreachable!(),
            };
            g.object_id = Some(id);
        }
        gaussians.push(g);
    }

    let scene = GaussianScene::new(gaussians);
    scene.validate()?;
    Ok(scene)
}

/// Writes a scene in the canonical splat PLY layout. When any primitive
/// carries an object id, an extra `uint object_id` property is emitted
/// (absent ids are written as 0).
pub fn save_gaussian_ply(scene: &GaussianScene, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let with_ids = scene.has_object_ids();

    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", scene.len()));
    for name in canonical_properties() {
        header.push_str(&format!("property float {name}\n"));
    }
    if with_ids {
        header.push_str("property uint object_id\n");
    }
    header.push_str("end_header\n");
    w.write_all(header.as_bytes())
        .map_err(|e| Error::io(path, e))?;

    let io = |e| Error::io(path, e);
    for g in &scene.gaussians {
        for v in g.position {
            w.write_f32::<LittleEndian>(v).map_err(io)?;
        }
        for _ in 0..3 {
            w.write_f32::<LittleEndian>(0.0).map_err(io)?; // normal
        }
        for c in 0..SH_COEFFS {
            w.write_f32::<LittleEndian>(g.sh[c]).map_err(io)?;
        }
        w.write_f32::<LittleEndian>(g.opacity_logit).map_err(io)?;
        for v in g.log_scale {
            w.write_f32::<LittleEndian>(v).map_err(io)?;
        }
        for v in g.rotation_q {
            w.write_f32::<LittleEndian>(v).map_err(io)?;
        }
        if with_ids {
            w.write_u32::<LittleEndian>(g.object_id.unwrap_or(0))
                .map_err(io)?;
        }
    }
    w.flush().map_err(io)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn sample_gaussian(seed: f32) -> GaussianPrimitive {
        let mut g = GaussianPrimitive::at([seed, seed * 2.0, -seed]);
        g.log_scale = [seed * 0.1, -0.2, 0.05];
        g.rotation_q = [1.0, seed * 0.01, 0.0, 0.02];
        g.opacity_logit = seed;
        for (i, v) in g.sh.iter_mut().enumerate() {
            *v = seed + i as f32 * 0.001;
        }
        g
    }

    #[test]
    fn identity_single_vertex() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("one.ply");
        let mut g = GaussianPrimitive::at([0.5, 1.0, 2.0]);
        g.log_scale = [0.0; 3]; // unit scales
        g.rotation_q = [1.0, 0.0, 0.0, 0.0];
        save_gaussian_ply(&GaussianScene::new(vec![g]), &p).unwrap();
        let scene = load_gaussian_ply(&p).unwrap();
        assert_eq!(scene.len(), 1);
        let s = scene.gaussians[0].scale();
        assert!((s - nalgebra::Vector3::new(1.0, 1.0, 1.0)).norm() < 1e-12);
        assert_eq!(scene.gaussians[0].rotation(), nalgebra::Matrix3::identity());
    }

    #[test]
    fn canonical_layout_is_62_properties() {
        assert_eq!(canonical_properties().len(), 3 + 3 + 3 + 45 + 1 + 3 + 4);
    }

    #[test]
    fn round_trip_bit_exact() {
        let dir = tempdir().unwrap();
        let p1 = dir.path().join("a.ply");
        let p2 = dir.path().join("b.ply");
        // Include a denormalized quaternion; it must survive verbatim.
        let mut g0 = sample_gaussian(0.37);
        g0.rotation_q = [0.3, 0.4, 0.5, 0.6];
        let scene = GaussianScene::new(vec![g0, sample_gaussian(-1.25), sample_gaussian(9.0)]);
        save_gaussian_ply(&scene, &p1).unwrap();
        let loaded = load_gaussian_ply(&p1).unwrap();
        save_gaussian_ply(&loaded, &p2).unwrap();
        let b1 = std::fs::read(&p1).unwrap();
        let b2 = std::fs::read(&p2).unwrap();
        assert_eq!(b1, b2);
        assert_eq!(loaded, scene);
    }

    #[test]
    fn empty_scene_round_trip() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("empty.ply");
        save_gaussian_ply(&GaussianScene::default(), &p).unwrap();
        let scene = load_gaussian_ply(&p).unwrap();
        assert!(scene.is_empty());
    }

    #[test]
    fn object_ids_round_trip() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("ids.ply");
        let mut a = sample_gaussian(1.0);
        a.object_id = Some(0);
        let mut b = sample_gaussian(2.0);
        b.object_id = Some(1);
        save_gaussian_ply(&GaussianScene::new(vec![a, b]), &p).unwrap();
        let scene = load_gaussian_ply(&p).unwrap();
        assert_eq!(scene.gaussians[0].object_id, Some(0));
        assert_eq!(scene.gaussians[1].object_id, Some(1));
    }

    #[test]
    fn order_preserved_10k() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("big.ply");
        let gaussians: Vec<_> = (0..10_000)
            .map(|i| {
                let mut g = GaussianPrimitive::at([i as f32, 0.0, 0.0]);
                g.rotation_q = [1.0, 0.0, 0.0, 0.0];
                g
            })
            .collect();
        save_gaussian_ply(&GaussianScene::new(gaussians), &p).unwrap();
        let scene = load_gaussian_ply(&p).unwrap();
        assert_eq!(scene.len(), 10_000);
        for (i, g) in scene.gaussians.iter().enumerate() {
            assert_eq!(g.position[0], i as f32);
        }
    }

    #[test]
    fn missing_property_is_named() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("broken.ply");
        // Hand-written header without 'opacity'.
        let mut header = String::from("ply\nformat binary_little_endian 1.0\nelement vertex 0\n");
        for name in canonical_properties() {
            if name != "opacity" {
                header.push_str(&format!("property float {name}\n"));
            }
        }
        header.push_str("end_header\n");
        std::fs::write(&p, header).unwrap();
        let err = load_gaussian_ply(&p).unwrap_err();
        assert!(err.to_string().contains("opacity"), "got: {err}");
    }

    #[test]
    fn non_finite_reports_vertex_index() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("nan.ply");
        let mut bad = sample_gaussian(1.0);
        bad.position[1] = f32::NAN;
        save_gaussian_ply(
            &GaussianScene::new(vec![sample_gaussian(0.0), bad]),
            &p,
        )
        .unwrap();
        let err = load_gaussian_ply(&p).unwrap_err();
        assert!(err.to_string().contains("index 1"), "got: {err}");
    }
}
