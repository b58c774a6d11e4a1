//! Binary little-endian PLY splat clouds.
//!
//! Required vertex properties: `x y z` (float), `red green blue` (uchar),
//! `radius opacity` (float). Other properties are skipped.

use std::path::Path;

use crate::geometry::Vec3;

use super::{SplatPoint, TwinError};

#[derive(Clone, Copy, Debug)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

const REQUIRED: [&str; 8] = ["x", "y", "z", "red", "green", "blue", "radius", "opacity"];

pub fn read_ply(path: &Path) -> Result<Vec<SplatPoint>, TwinError> {
    let bytes = std::fs::read(path).map_err(|source| TwinError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_ply_bytes(&bytes)
}

pub fn read_ply_bytes(bytes: &[u8]) -> Result<Vec<SplatPoint>, TwinError> {
    let err = |m: &str| TwinError::Ply(m.to_string());
    let marker = b"end_header\n";
    let header_end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| err("missing end_header"))?;
    let header = std::str::from_utf8(&bytes[..header_end]).map_err(|_| err("header is not UTF-8"))?;
    let body = &bytes[header_end + marker.len()..];

    let mut lines = header.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(err("missing ply magic"));
    }
    let mut count = None;
    let mut props: Vec<(String, Scalar)> = vec![];
    let mut in_vertex = false;
    let mut format_ok = false;
    for line in lines {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["format", "binary_little_endian", _] => format_ok = true,
            ["format", other, ..] => return Err(TwinError::Ply(format!("unsupported format {other}"))),
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|_| err("bad vertex count"))?);
                in_vertex = true;
            }
            ["element", ..] => in_vertex = false,
            ["property", "list", ..] if in_vertex => return Err(err("list properties unsupported")),
            ["property", ty, name] if in_vertex => {
                let s = Scalar::parse(ty).ok_or_else(|| TwinError::Ply(format!("unknown type {ty}")))?;
                props.push((name.to_string(), s));
            }
            _ => {}
        }
    }
    if !format_ok {
        return Err(err("missing format line"));
    }
    let count = count.ok_or_else(|| err("missing vertex element"))?;
    let stride: usize = props.iter().map(|(_, s)| s.size()).sum();
    let mut offsets = [None; 8];
    let mut off = 0;
    for (name, s) in &props {
        if let Some(i) = REQUIRED.iter().position(|r| r == name) {
            offsets[i] = Some((off, *s));
        }
        off += s.size();
    }
    let mut fields = [(0usize, Scalar::U8); 8];
    for (i, slot) in offsets.iter().enumerate() {
        fields[i] = slot.ok_or_else(|| TwinError::Ply(format!("missing property {}", REQUIRED[i])))?;
    }
    if body.len() < count * stride {
        return Err(err("truncated vertex data"));
    }
    Ok((0..count)
        .map(|k| {
            let rec = &body[k * stride..(k + 1) * stride];
            let v = |i: usize| fields[i].1.read(&rec[fields[i].0..]);
            SplatPoint {
                position: Vec3::new(v(0), v(1), v(2)),
                color: [v(3) as u8, v(4) as u8, v(5) as u8],
                radius: v(6),
                opacity: v(7),
                anchor: None,
            }
        })
        .collect())
}

/// Writes the canonical layout. Positions, radius, and opacity are stored
/// as float32.
pub fn write_ply_bytes(splats: &[SplatPoint]) -> Vec<u8> {
    let mut out = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\n\
         property float radius\nproperty float opacity\nend_header\n",
        splats.len()
    )
    .into_bytes();
    for s in splats {
        for c in [s.position.x, s.position.y, s.position.z] {
            out.extend_from_slice(&(c as f32).to_le_bytes());
        }
        out.extend_from_slice(&s.color);
        out.extend_from_slice(&(s.radius as f32).to_le_bytes());
        out.extend_from_slice(&(s.opacity as f32).to_le_bytes());
    }
    out
}

pub fn write_ply(path: &Path, splats: &[SplatPoint]) -> Result<(), TwinError> {
    std::fs::write(path, write_ply_bytes(splats)).map_err(|source| TwinError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_through_float32() {
        let splats = vec![
            SplatPoint {
                position: Vec3::new(0.5, -0.25, 0.125),
                color: [1, 2, 3],
                radius: 0.0078125,
                opacity: 0.5,
                anchor: None,
            },
            SplatPoint {
                position: Vec3::new(1.0, 2.0, 3.0),
                color: [255, 128, 0],
                radius: 0.25,
                opacity: 1.0,
                anchor: None,
            },
        ];
        assert_eq!(read_ply_bytes(&write_ply_bytes(&splats)).unwrap(), splats);
    }

    #[test]
    fn extra_properties_are_skipped() {
        let mut bytes = b"ply\nformat binary_little_endian 1.0\ncomment hi\nelement vertex 1\n\
property float x\nproperty float y\nproperty float z\nproperty double nx\n\
property uchar red\nproperty uchar green\nproperty uchar blue\n\
property float radius\nproperty float opacity\nend_header\n"
            .to_vec();
        for f in [1.0f32, 2.0, 3.0] {
            bytes.extend_from_slice(&f.to_le_bytes());
        }
        bytes.extend_from_slice(&9.0f64.to_le_bytes());
        bytes.extend_from_slice(&[7, 8, 9]);
        bytes.extend_from_slice(&0.5f32.to_le_bytes());
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        let s = read_ply_bytes(&bytes).unwrap();
        assert_eq!(s[0].position, Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(s[0].color, [7, 8, 9]);
    }

    #[test]
    fn missing_property_and_ascii_rejected() {
        let no_radius = b"ply\nformat binary_little_endian 1.0\nelement vertex 0\nproperty float x\nend_header\n";
        assert!(matches!(read_ply_bytes(no_radius), Err(TwinError::Ply(m)) if m.contains("y")));
        let ascii = b"ply\nformat ascii 1.0\nelement vertex 0\nend_header\n";
        assert!(read_ply_bytes(ascii).is_err());
    }
}
