//! PLY reading and writing for colored point clouds (ASCII and binary
//! little-endian).
//!
//! Only the `vertex` element is interpreted. Coordinates come from the
//! `x`, `y`, `z` properties (float or double) and colors from `red`,
//! `green`, `blue` (uchar). Vertices without color become points to
//! reconstruct. A cloud that mixes colored and uncolored points is stored
//! with an extra `uchar colored` property that is 0 for uncolored vertices.

use std::fmt::Write as _;

use crate::cloud::{ColorPoint, ColorPointCloud, Rgb, Role};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlyFormat {
    Ascii,
    #[default]
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => ScalarType::I8,
            "uchar" | "uint8" => ScalarType::U8,
            "short" | "int16" => ScalarType::I16,
            "ushort" | "uint16" => ScalarType::U16,
            "int" | "int32" => ScalarType::I32,
            "uint" | "uint32" => ScalarType::U32,
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            ScalarType::I8 | ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::U32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }

    fn is_float(self) -> bool {
        matches!(self, ScalarType::F32 | ScalarType::F64)
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { ty: ScalarType, name: String },
    List { count: ScalarType, item: ScalarType },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Header {
    format: PlyFormat,
    elements: Vec<Element>,
    comment: Option<String>,
    body_offset: usize,
}

/// Where the interesting vertex properties sit in a row.
struct VertexLayout {
    xyz: [usize; 3],
    rgb: Option<[usize; 3]>,
    colored: Option<usize>,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut offset = 0;
    let next_line = |offset: &mut usize| -> Result<(usize, String)> {
        let start = *offset;
        let rest = &bytes[start..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::parse(start, "header ends before end_header"))?;
        *offset = start + end + 1;
        let line = std::str::from_utf8(&rest[..end])
            .map_err(|_| Error::parse(start, "header is not valid UTF-8"))?;
        Ok((start, line.strip_suffix('\r').unwrap_or(line).to_string()))
    };

    let (at, magic) = next_line(&mut offset)?;
    if magic.trim() != "ply" {
        return Err(Error::parse(at, "missing 'ply' magic"));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut comment = None;
    loop {
        let (at, line) = next_line(&mut offset)?;
        let mut words = line.split_whitespace();
        match words.next() {
            Some("format") => {
                format = Some(match (words.next(), words.next()) {
                    (Some("ascii"), Some("1.0")) => PlyFormat::Ascii,
                    (Some("binary_little_endian"), Some("1.0")) => PlyFormat::BinaryLittleEndian,
                    (Some(other), _) => {
                        return Err(Error::parse(at, format!("unsupported format '{other}'")))
                    }
                    _ => return Err(Error::parse(at, "malformed format line")),
                });
            }
            Some("comment") => {
                if comment.is_none() {
                    let text = line.trim_start().strip_prefix("comment").unwrap_or("");
                    comment = Some(text.strip_prefix(' ').unwrap_or(text).to_string());
                }
            }
            Some("obj_info") | None => {}
            Some("element") => {
                let (Some(name), Some(count)) = (words.next(), words.next()) else {
                    return Err(Error::parse(at, "malformed element line"));
                };
                let count = count
                    .parse()
                    .map_err(|_| Error::parse(at, format!("bad element count '{count}'")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(at, "property before any element"))?;
                let ty = words
                    .next()
                    .ok_or_else(|| Error::parse(at, "malformed property line"))?;
                let scalar = |s: Option<&str>| {
                    s.and_then(ScalarType::parse)
                        .ok_or_else(|| Error::parse(at, format!("unsupported property type in '{line}'")))
                };
                let prop = if ty == "list" {
                    let count = scalar(words.next())?;
                    let item = scalar(words.next())?;
                    if count.is_float() {
                        return Err(Error::parse(at, "list count type must be an integer"));
                    }
                    Property::List { count, item }
                } else {
                    let ty = scalar(Some(ty))?;
                    let name = words
                        .next()
                        .ok_or_else(|| Error::parse(at, "property without a name"))?;
                    Property::Scalar {
                        ty,
                        name: name.to_string(),
                    }
                };
                element.properties.push(prop);
            }
            Some("end_header") => break,
            Some(other) => {
                return Err(Error::parse(at, format!("unknown header keyword '{other}'")))
            }
        }
    }
    Ok(Header {
        format: format.ok_or_else(|| Error::parse(0, "header has no format line"))?,
        elements,
        comment,
        body_offset: offset,
    })
}

fn vertex_layout(element: &Element) -> Result<VertexLayout> {
    let find = |wanted: &str| -> Result<Option<(usize, ScalarType)>> {
        let mut found = None;
        for (i, p) in element.properties.iter().enumerate() {
            if let Property::Scalar { ty, name } = p {
                if name == wanted {
                    found = Some((i, *ty));
                }
            }
        }
        Ok(found)
    };
    let mut xyz = [0; 3];
    for (slot, axis) in ["x", "y", "z"].iter().enumerate() {
        match find(axis)? {
            Some((i, ty)) if ty.is_float() => xyz[slot] = i,
            Some(_) => {
                return Err(Error::parse(0, format!("vertex property '{axis}' must be float or double")))
            }
            None => return Err(Error::parse(0, format!("vertex element lacks property '{axis}'"))),
        }
    }
    let channels = [find("red")?, find("green")?, find("blue")?];
    let rgb = match channels {
        [None, None, None] => None,
        [Some(r), Some(g), Some(b)] => {
            if [r, g, b].iter().any(|c| c.1 != ScalarType::U8) {
                return Err(Error::parse(0, "color properties must be uchar"));
            }
            Some([r.0, g.0, b.0])
        }
        _ => return Err(Error::parse(0, "vertex declares only some of red/green/blue")),
    };
    let colored = match find("colored")? {
        Some((i, ScalarType::U8)) => Some(i),
        Some(_) => return Err(Error::parse(0, "'colored' flag must be uchar")),
        None => None,
    };
    Ok(VertexLayout { xyz, rgb, colored })
}

/// Row source over the body, one element row at a time.
trait RowReader {
    /// Reads one row; scalar properties land in `values`, lists are skipped.
    fn read_row(&mut self, element: &Element, values: &mut Vec<f64>) -> Result<()>;
}

struct AsciiRows<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl AsciiRows<'_> {
    fn token(&mut self) -> Result<(usize, &str)> {
        let b = self.bytes;
        while self.pos < b.len() && b[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        while self.pos < b.len() && !b[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::parse(start, "truncated body: expected more values"));
        }
        let text = std::str::from_utf8(&b[start..self.pos])
            .map_err(|_| Error::parse(start, "body is not valid UTF-8"))?;
        Ok((start, text))
    }

    fn number(&mut self, ty: ScalarType) -> Result<f64> {
        let (at, tok) = self.token()?;
        // Parse at the declared width so float values match a binary file.
        let value = if ty == ScalarType::F32 {
            tok.parse::<f32>().ok().map(f64::from)
        } else if ty == ScalarType::F64 {
            tok.parse::<f64>().ok()
        } else {
            tok.parse::<i64>().ok().map(|v| v as f64)
        };
        value.ok_or_else(|| Error::parse(at, format!("cannot parse '{tok}' as {ty:?}")))
    }
}

impl RowReader for AsciiRows<'_> {
    fn read_row(&mut self, element: &Element, values: &mut Vec<f64>) -> Result<()> {
        values.clear();
        for p in &element.properties {
            match *p {
                Property::Scalar { ty, .. } => values.push(self.number(ty)?),
                Property::List { count, item } => {
                    let n = self.number(count)?;
                    for _ in 0..n.max(0.0) as usize {
                        self.number(item)?;
                    }
                    values.push(f64::NAN);
                }
            }
        }
        Ok(())
    }
}

struct BinaryRows<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl BinaryRows<'_> {
    fn scalar(&mut self, ty: ScalarType) -> Result<f64> {
        let size = ty.size();
        let Some(raw) = self.bytes.get(self.pos..self.pos + size) else {
            return Err(Error::parse(self.pos, "truncated body: unexpected end of data"));
        };
        self.pos += size;
        Ok(match ty {
            ScalarType::I8 => raw[0] as i8 as f64,
            ScalarType::U8 => raw[0] as f64,
            ScalarType::I16 => i16::from_le_bytes([raw[0], raw[1]]) as f64,
            ScalarType::U16 => u16::from_le_bytes([raw[0], raw[1]]) as f64,
            ScalarType::I32 => i32::from_le_bytes(raw.try_into().unwrap()) as f64,
            ScalarType::U32 => u32::from_le_bytes(raw.try_into().unwrap()) as f64,
            ScalarType::F32 => f32::from_le_bytes(raw.try_into().unwrap()) as f64,
            ScalarType::F64 => f64::from_le_bytes(raw.try_into().unwrap()),
        })
    }
}

impl RowReader for BinaryRows<'_> {
    fn read_row(&mut self, element: &Element, values: &mut Vec<f64>) -> Result<()> {
        values.clear();
        for p in &element.properties {
            match *p {
                Property::Scalar { ty, .. } => values.push(self.scalar(ty)?),
                Property::List { count, item } => {
                    let at = self.pos;
                    let n = self.scalar(count)?;
                    if n < 0.0 {
                        return Err(Error::parse(at, "negative list length"));
                    }
                    let skip = n as usize * item.size();
                    if self.pos + skip > self.bytes.len() {
                        return Err(Error::parse(self.pos, "truncated body: list runs past end"));
                    }
                    self.pos += skip;
                    values.push(f64::NAN);
                }
            }
        }
        Ok(())
    }
}

pub fn read_ply(bytes: &[u8]) -> Result<ColorPointCloud> {
    let header = parse_header(bytes)?;
    let Some(vertex_idx) = header.elements.iter().position(|e| e.name == "vertex") else {
        return Err(Error::parse(header.body_offset, "no vertex element"));
    };
    let layout = vertex_layout(&header.elements[vertex_idx])?;
    let mut reader: Box<dyn RowReader + '_> = match header.format {
        PlyFormat::Ascii => Box::new(AsciiRows {
            bytes,
            pos: header.body_offset,
        }),
        PlyFormat::BinaryLittleEndian => Box::new(BinaryRows {
            bytes,
            pos: header.body_offset,
        }),
    };
    let mut values = Vec::new();
    for element in &header.elements[..vertex_idx] {
        for _ in 0..element.count {
            reader.read_row(element, &mut values)?;
        }
    }

    let vertex = &header.elements[vertex_idx];
    // Every vertex row takes at least one byte, which bounds the allocation.
    let mut points = Vec::with_capacity(vertex.count.min(bytes.len()));
    for _ in 0..vertex.count {
        reader.read_row(vertex, &mut values)?;
        let position = layout.xyz.map(|i| values[i]);
        let flagged = layout.colored.is_none_or(|i| values[i] != 0.0);
        let color = match layout.rgb {
            Some(rgb) if flagged => Some(Rgb(rgb.map(|i| values[i].clamp(0.0, 255.0) as u8))),
            _ => None,
        };
        points.push(ColorPoint {
            position,
            role: if color.is_some() {
                Role::Original
            } else {
                Role::Reconstruct
            },
            color,
        });
    }
    Ok(ColorPointCloud {
        points,
        provenance: header.comment.unwrap_or_default(),
    })
}

pub fn write_ply(cloud: &ColorPointCloud, format: PlyFormat, allow_uncolored: bool) -> Result<Vec<u8>> {
    let colored = cloud.points.iter().filter(|p| p.color.is_some()).count();
    let all_colored = colored == cloud.len();
    if !all_colored && !allow_uncolored {
        let index = cloud.points.iter().position(|p| p.color.is_none()).unwrap_or(0);
        return Err(Error::MissingColor { index });
    }
    if let Some(i) = cloud
        .points
        .iter()
        .position(|p| p.position.iter().any(|c| !(*c as f32).is_finite()))
    {
        return Err(Error::InvalidInput(format!(
            "point {i} has a coordinate not representable as a finite float"
        )));
    }
    let with_rgb = colored > 0;
    let with_flag = with_rgb && !all_colored;

    let mut header = String::from("ply\n");
    header.push_str(match format {
        PlyFormat::Ascii => "format ascii 1.0\n",
        PlyFormat::BinaryLittleEndian => "format binary_little_endian 1.0\n",
    });
    if !cloud.provenance.is_empty() {
        let text: String = cloud
            .provenance
            .chars()
            .map(|c| if c == '\n' || c == '\r' { ' ' } else { c })
            .collect();
        let _ = writeln!(header, "comment {text}");
    }
    let _ = writeln!(header, "element vertex {}", cloud.len());
    header.push_str("property float x\nproperty float y\nproperty float z\n");
    if with_rgb {
        header.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    if with_flag {
        header.push_str("property uchar colored\n");
    }
    header.push_str("end_header\n");

    let mut out = header.into_bytes();
    let mut line = String::new();
    for p in &cloud.points {
        let xyz = p.position.map(|c| c as f32);
        let rgb = p.color.unwrap_or_default().0;
        match format {
            PlyFormat::BinaryLittleEndian => {
                for c in xyz {
                    out.extend_from_slice(&c.to_le_bytes());
                }
                if with_rgb {
                    out.extend_from_slice(&rgb);
                }
                if with_flag {
                    out.push(p.color.is_some() as u8);
                }
            }
            PlyFormat::Ascii => {
                line.clear();
                let _ = write!(line, "{} {} {}", xyz[0], xyz[1], xyz[2]);
                if with_rgb {
                    let _ = write!(line, " {} {} {}", rgb[0], rgb[1], rgb[2]);
                }
                if with_flag {
                    let _ = write!(line, " {}", p.color.is_some() as u8);
                }
                line.push('\n');
                out.extend_from_slice(line.as_bytes());
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_point() -> ColorPointCloud {
        ColorPointCloud::new(vec![ColorPoint::original([1.0, 2.0, 3.0], Rgb::new(4, 5, 6))], "")
    }

    #[test]
    fn ascii_single_vertex() {
        let text = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n\
                    property float z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\n\
                    end_header\n0 0 0 255 0 0\n";
        let cloud = read_ply(text.as_bytes()).unwrap();
        assert_eq!(cloud.points, vec![ColorPoint::original([0.0; 3], Rgb::new(255, 0, 0))]);
    }

    #[test]
    fn truncated_ascii_body() {
        let text = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\n\
                    property float z\nend_header\n0 0 0\n";
        match read_ply(text.as_bytes()) {
            Err(Error::Parse { reason, .. }) => assert!(reason.contains("truncated")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn truncated_binary_body() {
        let mut bytes = write_ply(&one_point(), PlyFormat::BinaryLittleEndian, false).unwrap();
        bytes.pop();
        assert!(matches!(read_ply(&bytes), Err(Error::Parse { .. })));
    }

    #[test]
    fn ascii_write_layout() {
        let bytes = write_ply(&one_point(), PlyFormat::Ascii, false).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(
            text,
            "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n\
             property float z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\n\
             end_header\n1 2 3 4 5 6\n"
        );
    }

    #[test]
    fn missing_color_is_rejected_unless_allowed() {
        let mut cloud = one_point();
        cloud.points.push(ColorPoint::to_reconstruct([0.0; 3]));
        assert_eq!(
            write_ply(&cloud, PlyFormat::Ascii, false),
            Err(Error::MissingColor { index: 1 })
        );
        let bytes = write_ply(&cloud, PlyFormat::Ascii, true).unwrap();
        let back = read_ply(&bytes).unwrap();
        assert_eq!(back.points, cloud.points);
    }

    #[test]
    fn positions_only() {
        let cloud = ColorPointCloud::new(vec![ColorPoint::to_reconstruct([0.5, 0.25, -1.0])], "");
        let bytes = write_ply(&cloud, PlyFormat::BinaryLittleEndian, true).unwrap();
        let text = String::from_utf8_lossy(&bytes);
        assert!(!text.contains("red"));
        assert_eq!(read_ply(&bytes).unwrap(), cloud);
    }

    #[test]
    fn crlf_header_extra_properties_and_faces() {
        let text = "ply\r\nformat ascii 1.0\r\ncomment scanned\r\nelement vertex 2\r\n\
                    property double x\r\nproperty double y\r\nproperty double z\r\n\
                    property float nx\r\nproperty uchar red\r\nproperty uchar green\r\n\
                    property uchar blue\r\nproperty uchar alpha\r\nelement face 1\r\n\
                    property list uchar int vertex_indices\r\nend_header\r\n\
                    0.1 0.2 0.3 1.0 10 20 30 255\r\n1 2 3 0.5 40 50 60 255\r\n3 0 1 1\r\n";
        let cloud = read_ply(text.as_bytes()).unwrap();
        assert_eq!(cloud.provenance, "scanned");
        assert_eq!(cloud.points[0].position, [0.1, 0.2, 0.3]);
        assert_eq!(cloud.points[1].color, Some(Rgb::new(40, 50, 60)));
    }

    #[test]
    fn skips_elements_before_vertices_in_binary() {
        let mut bytes = b"ply\nformat binary_little_endian 1.0\nelement meta 2\nproperty list uchar int ids\n\
                          property short tag\nelement vertex 1\nproperty float x\nproperty float y\n\
                          property float z\nend_header\n"
            .to_vec();
        for n in [2u8, 0] {
            bytes.push(n);
            for i in 0..n as i32 {
                bytes.extend_from_slice(&i.to_le_bytes());
            }
            bytes.extend_from_slice(&7i16.to_le_bytes());
        }
        for c in [1.5f32, -2.0, 8.0] {
            bytes.extend_from_slice(&c.to_le_bytes());
        }
        let cloud = read_ply(&bytes).unwrap();
        assert_eq!(cloud.points, vec![ColorPoint::to_reconstruct([1.5, -2.0, 8.0])]);
    }

    #[test]
    fn header_errors() {
        for (bad, needle) in [
            ("plx\n", "magic"),
            ("ply\nformat binary_big_endian 1.0\nend_header\n", "unsupported format"),
            ("ply\nformat ascii 1.0\nelement vertex 1\nproperty int x\nproperty float y\nproperty float z\nend_header\n", "float"),
            ("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nproperty float red\nproperty uchar green\nproperty uchar blue\nend_header\n", "uchar"),
            ("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\n", "end_header"),
            ("ply\nformat ascii 1.0\nelement vertex 1\nproperty float128 x\nend_header\n", "unsupported property"),
        ] {
            match read_ply(bad.as_bytes()) {
                Err(Error::Parse { reason, .. }) => assert!(reason.contains(needle), "{reason}"),
                other => panic!("{bad:?} -> {other:?}"),
            }
        }
    }

    fn arb_cloud() -> impl Strategy<Value = ColorPointCloud> {
        prop::collection::vec(
            (prop::array::uniform3(-1e4f32..1e4), prop::option::weighted(0.8, any::<[u8; 3]>())),
            0..50,
        )
        .prop_map(|pts| {
            ColorPointCloud::new(
                pts.into_iter()
                    .map(|(p, c)| ColorPoint {
                        position: p.map(f64::from),
                        role: if c.is_some() { Role::Original } else { Role::Reconstruct },
                        color: c.map(Rgb),
                    })
                    .collect(),
                "prop",
            )
        })
    }

    proptest! {
        #[test]
        fn roundtrip_is_exact(cloud in arb_cloud(), ascii in any::<bool>()) {
            let format = if ascii { PlyFormat::Ascii } else { PlyFormat::BinaryLittleEndian };
            let bytes = write_ply(&cloud, format, true).unwrap();
            let back = read_ply(&bytes).unwrap();
            prop_assert_eq!(&back, &cloud);
            prop_assert_eq!(write_ply(&back, format, true).unwrap(), bytes);
        }
    }
}
