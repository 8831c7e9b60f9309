//! Minimal PLY reader/writer: ASCII and binary little-endian, vertex
//! `x y z` (any numeric type on read, `float` on write), optional
//! `red green blue` bytes, optional extra scalar vertex properties and
//! polygon faces.

use std::fmt::Write as _;
use std::path::Path;

use super::{PointCloud, Vec3};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    Ascii,
    #[default]
    BinaryLittleEndian,
}

impl Format {
    fn header_name(self) -> &'static str {
        match self {
            Format::Ascii => "ascii",
            Format::BinaryLittleEndian => "binary_little_endian",
        }
    }
}

/// Everything [`read`] understands about a file.
#[derive(Debug, Clone, Default)]
pub struct PlyData {
    pub cloud: PointCloud,
    /// Triangulated faces (polygons are fanned).
    pub faces: Vec<[usize; 3]>,
    /// Vertex scalar properties other than position and color.
    pub extra: Vec<(String, Vec<f64>)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
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
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
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

    fn decode(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => f64::from(b[0] as i8),
            Scalar::U8 => f64::from(b[0]),
            Scalar::I16 => f64::from(i16::from_le_bytes([b[0], b[1]])),
            Scalar::U16 => f64::from(u16::from_le_bytes([b[0], b[1]])),
            Scalar::I32 => f64::from(i32::from_le_bytes(b[..4].try_into().unwrap())),
            Scalar::U32 => f64::from(u32::from_le_bytes(b[..4].try_into().unwrap())),
            Scalar::F32 => f64::from(f32::from_le_bytes(b[..4].try_into().unwrap())),
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

struct Header {
    format: Format,
    elements: Vec<Element>,
    body_offset: usize,
}

fn parse_header(bytes: &[u8], ctx: &str) -> Result<Header> {
    let err = |m: String| Error::parse(ctx, m);
    if !bytes.starts_with(b"ply") {
        return Err(err("not a PLY file".into()));
    }
    let mut pos = 0;
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| err("unterminated header".into()))?;
        let line = std::str::from_utf8(&bytes[pos..pos + end])
            .map_err(|_| err("header is not UTF-8".into()))?
            .trim_end_matches('\r');
        pos += end + 1;
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["ply"] | [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", f, _] => {
                format = Some(match *f {
                    "ascii" => Format::Ascii,
                    "binary_little_endian" => Format::BinaryLittleEndian,
                    other => return Err(err(format!("unsupported format {other}"))),
                })
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| err(format!("bad element count {count}")))?,
                props: Vec::new(),
            }),
            ["property", "list", ct, it, name] => {
                let (ct, it) = (
                    Scalar::parse(ct).ok_or_else(|| err(format!("bad type {ct}")))?,
                    Scalar::parse(it).ok_or_else(|| err(format!("bad type {it}")))?,
                );
                elements
                    .last_mut()
                    .ok_or_else(|| err("property before element".into()))?
                    .props
                    .push(Property::List(name.to_string(), ct, it));
            }
            ["property", ty, name] => {
                let ty = Scalar::parse(ty).ok_or_else(|| err(format!("bad type {ty}")))?;
                elements
                    .last_mut()
                    .ok_or_else(|| err("property before element".into()))?
                    .props
                    .push(Property::Scalar(name.to_string(), ty));
            }
            ["end_header"] => break,
            _ => return Err(err(format!("unrecognized header line '{line}'"))),
        }
    }
    Ok(Header {
        format: format.ok_or_else(|| err("missing format line".into()))?,
        elements,
        body_offset: pos,
    })
}

/// Sequential value source over either body encoding.
enum Body<'a> {
    Ascii(std::str::SplitAsciiWhitespace<'a>),
    Binary(&'a [u8]),
}

impl Body<'_> {
    fn next(&mut self, ty: Scalar) -> Option<f64> {
        match self {
            Body::Ascii(it) => {
                let tok = it.next()?;
                match ty {
                    Scalar::F32 => tok.parse::<f32>().ok().map(f64::from),
                    _ => tok.parse().ok(),
                }
            }
            Body::Binary(b) => {
                let n = ty.size();
                if b.len() < n {
                    return None;
                }
                let v = ty.decode(&b[..n]);
                *b = &b[n..];
                Some(v)
            }
        }
    }
}

pub fn read(path: impl AsRef<Path>) -> Result<PlyData> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse(&bytes, &path.display().to_string())
}

pub fn parse(bytes: &[u8], ctx: &str) -> Result<PlyData> {
    let header = parse_header(bytes, ctx)?;
    let body_bytes = &bytes[header.body_offset..];
    let mut body = match header.format {
        Format::Ascii => Body::Ascii(
            std::str::from_utf8(body_bytes)
                .map_err(|_| Error::parse(ctx, "ASCII body is not UTF-8"))?
                .split_ascii_whitespace(),
        ),
        Format::BinaryLittleEndian => Body::Binary(body_bytes),
    };
    let truncated = || Error::parse(ctx, "body ended early or holds a malformed value");

    let mut out = PlyData::default();
    for el in &header.elements {
        let is_vertex = el.name == "vertex";
        let is_face = el.name == "face";
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); el.props.len()];
        for _ in 0..el.count {
            for (pi, prop) in el.props.iter().enumerate() {
                match prop {
                    Property::Scalar(_, ty) => columns[pi].push(body.next(*ty).ok_or_else(truncated)?),
                    Property::List(name, ct, it) => {
                        let n = body.next(*ct).ok_or_else(truncated)? as usize;
                        let mut idx = Vec::with_capacity(n);
                        for _ in 0..n {
                            idx.push(body.next(*it).ok_or_else(truncated)?);
                        }
                        if is_face && (name == "vertex_indices" || name == "vertex_index") {
                            for k in 1..n.saturating_sub(1) {
                                out.faces.push([idx[0] as usize, idx[k] as usize, idx[k + 1] as usize]);
                            }
                        }
                    }
                }
            }
        }
        if !is_vertex {
            continue;
        }
        let col = |name: &str| {
            el.props.iter().position(|p| matches!(p, Property::Scalar(n, _) if n == name))
        };
        let (xi, yi, zi) = match (col("x"), col("y"), col("z")) {
            (Some(x), Some(y), Some(z)) => (x, y, z),
            _ => return Err(Error::parse(ctx, "vertex element lacks x/y/z")),
        };
        out.cloud.points = (0..el.count)
            .map(|i| Vec3::new(columns[xi][i], columns[yi][i], columns[zi][i]))
            .collect();
        if let (Some(r), Some(g), Some(b)) = (col("red"), col("green"), col("blue")) {
            out.cloud.colors = Some(
                (0..el.count)
                    .map(|i| [columns[r][i] as u8, columns[g][i] as u8, columns[b][i] as u8])
                    .collect(),
            );
        }
        for (pi, prop) in el.props.iter().enumerate() {
            if let Property::Scalar(name, _) = prop {
                if !["x", "y", "z", "red", "green", "blue"].contains(&name.as_str()) {
                    out.extra.push((name.clone(), std::mem::take(&mut columns[pi])));
                }
            }
        }
    }
    out.cloud.validate()?;
    let nv = out.cloud.len();
    if out.faces.iter().flatten().any(|&i| i >= nv) {
        return Err(Error::parse(ctx, "face index out of range"));
    }
    Ok(out)
}

/// Extra per-vertex `int` property written alongside positions.
pub struct IntProperty<'a> {
    pub name: &'a str,
    pub values: &'a [i32],
}

pub fn write_cloud(
    path: impl AsRef<Path>,
    cloud: &PointCloud,
    format: Format,
    extra: Option<IntProperty<'_>>,
) -> Result<()> {
    encode(path.as_ref(), cloud, &[], format, extra)
}

pub fn write_mesh(
    path: impl AsRef<Path>,
    vertices: &[Vec3],
    faces: &[[usize; 3]],
    format: Format,
) -> Result<()> {
    encode(path.as_ref(), &PointCloud::new(vertices.to_vec()), faces, format, None)
}

fn encode(
    path: &Path,
    cloud: &PointCloud,
    faces: &[[usize; 3]],
    format: Format,
    extra: Option<IntProperty<'_>>,
) -> Result<()> {
    if let Some(e) = &extra {
        if e.values.len() != cloud.len() {
            return Err(Error::Mismatch(format!(
                "{} values for property {} but {} points",
                e.values.len(),
                e.name,
                cloud.len()
            )));
        }
    }
    let mut header = String::new();
    let _ = writeln!(header, "ply\nformat {} 1.0", format.header_name());
    let _ = writeln!(header, "element vertex {}", cloud.len());
    header.push_str("property float x\nproperty float y\nproperty float z\n");
    if cloud.colors.is_some() {
        header.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    if let Some(e) = &extra {
        let _ = writeln!(header, "property int {}", e.name);
    }
    if !faces.is_empty() {
        let _ = writeln!(header, "element face {}", faces.len());
        header.push_str("property list uchar int vertex_indices\n");
    }
    header.push_str("end_header\n");

    let mut buf = header.into_bytes();
    for (i, p) in cloud.points.iter().enumerate() {
        let xyz = [p.x as f32, p.y as f32, p.z as f32];
        let rgb = cloud.colors.as_ref().map(|c| c[i]);
        let id = extra.as_ref().map(|e| e.values[i]);
        match format {
            Format::Ascii => {
                let mut line = format!("{} {} {}", xyz[0], xyz[1], xyz[2]);
                if let Some(c) = rgb {
                    let _ = write!(line, " {} {} {}", c[0], c[1], c[2]);
                }
                if let Some(id) = id {
                    let _ = write!(line, " {id}");
                }
                line.push('\n');
                buf.extend_from_slice(line.as_bytes());
            }
            Format::BinaryLittleEndian => {
                for v in xyz {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
                if let Some(c) = rgb {
                    buf.extend_from_slice(&c);
                }
                if let Some(id) = id {
                    buf.extend_from_slice(&id.to_le_bytes());
                }
            }
        }
    }
    for f in faces {
        let idx = f.map(|i| i as i32);
        match format {
            Format::Ascii => {
                buf.extend_from_slice(format!("3 {} {} {}\n", idx[0], idx[1], idx[2]).as_bytes())
            }
            Format::BinaryLittleEndian => {
                buf.push(3);
                for i in idx {
                    buf.extend_from_slice(&i.to_le_bytes());
                }
            }
        }
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn round_trip(cloud: &PointCloud, format: Format) -> PointCloud {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.ply");
        write_cloud(&p, cloud, format, None).unwrap();
        read(&p).unwrap().cloud
    }

    proptest! {
        #[test]
        fn clouds_round_trip_in_both_encodings(
            pts in prop::collection::vec(prop::array::uniform3(-1e3f32..1e3), 0..40),
            colored in any::<bool>(),
            ascii in any::<bool>(),
        ) {
            let points: Vec<Vec3> = pts.iter().map(|p| Vec3::new(p[0].into(), p[1].into(), p[2].into())).collect();
            let cloud = if colored {
                let colors = (0..points.len()).map(|i| [i as u8, 255 - i as u8, 7]).collect();
                PointCloud::with_colors(points, colors).unwrap()
            } else {
                PointCloud::new(points)
            };
            let fmt = if ascii { Format::Ascii } else { Format::BinaryLittleEndian };
            prop_assert_eq!(round_trip(&cloud, fmt), cloud);
        }
    }

    #[test]
    fn reads_faces_and_extra_properties() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ply");
        let text = "ply\nformat ascii 1.0\ncomment test\nelement vertex 4\nproperty double x\nproperty double y\nproperty double z\nproperty int pillar_id\nelement face 1\nproperty list uchar uint vertex_indices\nend_header\n0 0 0 1\n1 0 0 1\n1 1 0 2\n0 1 0 2\n4 0 1 2 3\n";
        std::fs::write(&p, text).unwrap();
        let d = read(&p).unwrap();
        assert_eq!(d.cloud.len(), 4);
        assert_eq!(d.faces, vec![[0, 1, 2], [0, 2, 3]]);
        assert_eq!(d.extra[0].0, "pillar_id");
        assert_eq!(d.extra[0].1, vec![1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn int_property_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.ply");
        let cloud = PointCloud::new(vec![Vec3::zeros(), Vec3::x()]);
        let ids = [3, -1];
        write_cloud(&p, &cloud, Format::BinaryLittleEndian, Some(IntProperty { name: "pillar_id", values: &ids })).unwrap();
        let d = read(&p).unwrap();
        assert_eq!(d.extra, vec![("pillar_id".to_string(), vec![3.0, -1.0])]);
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse(b"hello", "x").is_err());
        assert!(parse(b"ply\nformat binary_big_endian 1.0\nend_header\n", "x").is_err());
        let short = b"ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n1 2 3\n";
        assert!(parse(short, "x").is_err());
    }
}
