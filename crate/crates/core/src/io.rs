//! PLY input/output and quantization to a voxel grid.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{SortedVoxelSet, Voxel, MAX_DEPTH};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn from_voxels(v: &SortedVoxelSet) -> Self {
        Self {
            points: v.voxels().map(|p| [p.x as f64, p.y as f64, p.z as f64]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Ascii,
    BinaryLe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
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
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { count: Scalar, item: Scalar },
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
    /// Byte offset of the first body byte.
    body: usize,
    /// Line number of the first body line.
    body_line: usize,
}

fn parse_header(data: &[u8]) -> Result<Header> {
    let mut pos = 0;
    let mut line_no = 0;
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let end = data[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::parse(format!("line {}", line_no + 1), "header is not terminated by end_header"))?;
        let raw = &data[pos..pos + end];
        pos += end + 1;
        line_no += 1;
        let loc = || format!("line {line_no}");
        let line = std::str::from_utf8(raw)
            .map_err(|_| Error::parse(loc(), "header is not valid UTF-8"))?
            .trim_end_matches('\r')
            .trim();
        let mut it = line.split_whitespace();
        let Some(kw) = it.next() else { continue };
        if line_no == 1 {
            if line != "ply" {
                return Err(Error::parse(loc(), "missing `ply` magic"));
            }
            continue;
        }
        match kw {
            "format" => {
                format = Some(match it.next() {
                    Some("ascii") => Format::Ascii,
                    Some("binary_little_endian") => Format::BinaryLe,
                    Some(f) => return Err(Error::parse(loc(), format!("unsupported format `{f}`"))),
                    None => return Err(Error::parse(loc(), "format line without a format")),
                });
            }
            "comment" | "obj_info" => {}
            "element" => {
                let (Some(name), Some(count)) = (it.next(), it.next()) else {
                    return Err(Error::parse(loc(), "element needs a name and a count"));
                };
                let count = count
                    .parse()
                    .map_err(|_| Error::parse(loc(), format!("bad element count `{count}`")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            "property" => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(loc(), "property before any element"))?;
                let toks: Vec<&str> = it.collect();
                let ty = |s: &str| Scalar::parse(s).ok_or_else(|| Error::parse(loc(), format!("unknown property type `{s}`")));
                let p = match toks.as_slice() {
                    ["list", c, i, _name] => Property::List { count: ty(c)?, item: ty(i)? },
                    [t, name] => Property::Scalar {
                        name: name.to_string(),
                        ty: ty(t)?,
                    },
                    _ => return Err(Error::parse(loc(), format!("malformed property `{line}`"))),
                };
                el.props.push(p);
            }
            "end_header" => break,
            other => return Err(Error::parse(loc(), format!("unknown header keyword `{other}`"))),
        }
    }
    let format = format.ok_or_else(|| Error::parse("header", "no format line"))?;
    Ok(Header {
        format,
        elements,
        body: pos,
        body_line: line_no + 1,
    })
}

fn xyz_indices(el: &Element) -> Result<[usize; 3]> {
    let find = |axis: &str| {
        el.props
            .iter()
            .position(|p| matches!(p, Property::Scalar { name, .. } if name == axis))
            .ok_or_else(|| Error::parse("header", format!("vertex element has no `{axis}` property")))
    };
    Ok([find("x")?, find("y")?, find("z")?])
}

/// Parses a PLY file held in memory.
pub fn parse_ply(data: &[u8]) -> Result<PointCloud> {
    let h = parse_header(data)?;
    let vi = h
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Error::parse("header", "no vertex element"))?;
    let xyz = xyz_indices(&h.elements[vi])?;
    let mut points = Vec::with_capacity(h.elements[vi].count.min(1 << 24));
    match h.format {
        Format::Ascii => {
            let body = std::str::from_utf8(&data[h.body..]).map_err(|_| Error::parse("body", "ascii body is not valid UTF-8"))?;
            let mut lines = body.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
            for (ei, el) in h.elements.iter().enumerate() {
                for _ in 0..el.count {
                    let (n, line) = lines
                        .next()
                        .ok_or_else(|| Error::parse("end of file", format!("missing `{}` rows", el.name)))?;
                    let loc = || format!("line {}", h.body_line + n);
                    let mut vals = Vec::new();
                    let mut toks = line.split_whitespace();
                    for p in &el.props {
                        let mut next = || toks.next().ok_or_else(|| Error::parse(loc(), "row has too few values"));
                        match p {
                            Property::Scalar { .. } => {
                                let t = next()?;
                                vals.push(t.parse::<f64>().map_err(|_| Error::parse(loc(), format!("bad number `{t}`")))?);
                            }
                            Property::List { .. } => {
                                let t = next()?;
                                let k: usize = t.parse().map_err(|_| Error::parse(loc(), format!("bad list count `{t}`")))?;
                                for _ in 0..k {
                                    next()?;
                                }
                                vals.push(0.0);
                            }
                        }
                    }
                    if ei == vi {
                        points.push(xyz.map(|i| vals[i]));
                    }
                }
            }
        }
        Format::BinaryLe => {
            let mut pos = h.body;
            let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
                if data.len() - *pos < n {
                    return Err(Error::parse(format!("byte {pos}"), "binary body truncated"));
                }
                let s = &data[*pos..*pos + n];
                *pos += n;
                Ok(s)
            };
            for (ei, el) in h.elements.iter().enumerate() {
                let mut vals = vec![0.0; el.props.len()];
                for _ in 0..el.count {
                    for (k, p) in el.props.iter().enumerate() {
                        match p {
                            Property::Scalar { ty, .. } => vals[k] = ty.read_le(take(&mut pos, ty.size())?),
                            Property::List { count, item } => {
                                let n = count.read_le(take(&mut pos, count.size())?);
                                if !(0.0..=u32::MAX as f64).contains(&n) {
                                    return Err(Error::parse(format!("byte {pos}"), "negative list length"));
                                }
                                take(&mut pos, n as usize * item.size())?;
                            }
                        }
                    }
                    if ei == vi {
                        points.push(xyz.map(|i| vals[i]));
                    }
                }
            }
        }
    }
    if let Some(p) = points.iter().find(|p| p.iter().any(|c| !c.is_finite())) {
        return Err(Error::parse("body", format!("non-finite coordinate {p:?}")));
    }
    Ok(PointCloud { points })
}

pub fn read_ply(path: &Path) -> Result<PointCloud> {
    let data = fs::read(path)?;
    parse_ply(&data).map_err(|e| match e {
        Error::Parse { location, message } => Error::Parse {
            location: format!("{}: {location}", path.display()),
            message,
        },
        e => e,
    })
}

/// Binary little-endian PLY with `double` x/y/z.
pub fn ply_bytes(cloud: &PointCloud) -> Vec<u8> {
    let header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nend_header\n",
        cloud.len()
    );
    let mut out = Vec::with_capacity(header.len() + cloud.len() * 24);
    out.extend_from_slice(header.as_bytes());
    for p in &cloud.points {
        for c in p {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    out
}

pub fn write_ply(path: &Path, cloud: &PointCloud) -> Result<()> {
    fs::write(path, ply_bytes(cloud))?;
    Ok(())
}

/// Affine map from source units to the voxel grid:
/// `q = floor((p - offset) * scale)`, dequantized to `offset + (q + center) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantTransform {
    pub bits: u8,
    pub offset: [f64; 3],
    pub scale: f64,
    /// 0.5 for voxel centers, 0 when the input already was on the grid.
    pub center: f64,
}

impl QuantTransform {
    pub fn identity(bits: u8) -> Self {
        Self {
            bits,
            offset: [0.0; 3],
            scale: 1.0,
            center: 0.0,
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity(self.bits)
    }

    /// Fits one transform to all `clouds`. Integer-valued clouds already
    /// inside `[0, 2^bits)` get the identity.
    pub fn fit<'a>(clouds: impl IntoIterator<Item = &'a PointCloud> + Clone, bits: u8) -> Result<Self> {
        if bits == 0 || bits > MAX_DEPTH {
            return Err(Error::Config(format!("bit depth {bits} outside 1..={MAX_DEPTH}")));
        }
        let n = (1u64 << bits) as f64;
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        let mut on_grid = true;
        for c in clouds.clone() {
            for p in &c.points {
                for k in 0..3 {
                    if !p[k].is_finite() {
                        return Err(Error::Config(format!("non-finite coordinate {p:?}")));
                    }
                    lo[k] = lo[k].min(p[k]);
                    hi[k] = hi[k].max(p[k]);
                    on_grid &= p[k].fract() == 0.0 && p[k] >= 0.0 && p[k] < n;
                }
            }
        }
        if on_grid || lo[0] > hi[0] {
            return Ok(Self::identity(bits));
        }
        let extent = (0..3).map(|k| hi[k] - lo[k]).fold(0.0, f64::max);
        let scale = if extent > 0.0 { n / extent } else { 1.0 };
        Ok(Self {
            bits,
            offset: lo,
            scale,
            center: 0.5,
        })
    }

    pub fn apply(&self, cloud: &PointCloud) -> Result<SortedVoxelSet> {
        let max = (1i64 << self.bits) - 1;
        let v: Vec<Voxel> = cloud
            .points
            .iter()
            .map(|p| {
                let q = [0, 1, 2].map(|k| (((p[k] - self.offset[k]) * self.scale).floor() as i64).clamp(0, max) as i32);
                Voxel::new(q[0], q[1], q[2])
            })
            .collect();
        SortedVoxelSet::build(&v, None, self.bits)
    }

    pub fn dequantize(&self, voxels: &SortedVoxelSet) -> PointCloud {
        PointCloud {
            points: voxels
                .voxels()
                .map(|v| {
                    let q = [v.x, v.y, v.z];
                    [0, 1, 2].map(|k| self.offset[k] + (q[k] as f64 + self.center) / self.scale)
                })
                .collect(),
        }
    }
}

/// Quantizes one cloud with its own bounding box.
pub fn quantize(cloud: &PointCloud, bits: u8) -> Result<(SortedVoxelSet, QuantTransform)> {
    let t = QuantTransform::fit(std::iter::once(cloud), bits)?;
    Ok((t.apply(cloud)?, t))
}
