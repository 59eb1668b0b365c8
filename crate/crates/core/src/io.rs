//! Point cloud and mesh files: XYZ, PLY (ASCII or binary) and OBJ.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::spatial::Point3;

fn format_err(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::Format(format!("{}: {msg}", path.display()))
}

fn extension(path: &Path) -> String {
    path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase()
}

/// Reads `.ply` as PLY and anything else as whitespace-separated XYZ.
pub fn read_point_cloud(path: &Path) -> Result<PointCloud> {
    match extension(path).as_str() {
        "ply" => read_ply_cloud(path),
        _ => read_xyz(path),
    }
}

/// One point per line; lines with six numbers also carry a normal.
/// Blank lines and `#` comments are skipped.
pub fn read_xyz(path: &Path) -> Result<PointCloud> {
    let reader = BufReader::new(File::open(path)?);
    let mut points = Vec::new();
    let mut normals = Vec::new();
    for (no, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| format_err(path, format!("line {}: {e}", no + 1)))?;
        if vals.len() < 3 {
            return Err(format_err(path, format!("line {}: expected at least 3 numbers", no + 1)));
        }
        points.push([vals[0], vals[1], vals[2]]);
        if vals.len() >= 6 {
            normals.push([vals[3], vals[4], vals[5]]);
        }
    }
    if !normals.is_empty() && normals.len() == points.len() {
        PointCloud::with_normals(points, normals)
    } else {
        PointCloud::new(points)
    }
}

pub fn write_xyz(path: &Path, points: &[Point3]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for p in points {
        writeln!(w, "{} {} {}", p[0], p[1], p[2])?;
    }
    w.flush()?;
    Ok(())
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

    fn decode(self, b: &[u8], little: bool) -> f64 {
        macro_rules! num {
            ($t:ty, $n:expr) => {{
                let mut a = [0u8; $n];
                a.copy_from_slice(&b[..$n]);
                (if little { <$t>::from_le_bytes(a) } else { <$t>::from_be_bytes(a) }) as f64
            }};
        }
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => num!(i16, 2),
            Self::U16 => num!(u16, 2),
            Self::I32 => num!(i32, 4),
            Self::U32 => num!(u32, 4),
            Self::F32 => num!(f32, 4),
            Self::F64 => num!(f64, 8),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

impl Property {
    fn name(&self) -> &str {
        match self {
            Property::Scalar { name, .. } | Property::List { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Encoding {
    Ascii,
    Binary { little: bool },
}

/// Every record of one element, each as a list of property values.
type Records = Vec<Vec<Vec<f64>>>;

struct Ply {
    elements: Vec<(Element, Records)>,
}

impl Ply {
    fn element(&self, name: &str) -> Option<&(Element, Records)> {
        self.elements.iter().find(|(e, _)| e.name == name)
    }
}

fn read_ply(path: &Path) -> Result<Ply> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut line = String::new();
    let next_line = |r: &mut BufReader<File>, line: &mut String| -> Result<()> {
        line.clear();
        if r.read_line(line)? == 0 {
            return Err(format_err(path, "unexpected end of header"));
        }
        Ok(())
    };
    next_line(&mut reader, &mut line)?;
    if line.trim() != "ply" {
        return Err(format_err(path, "missing ply magic"));
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        next_line(&mut reader, &mut line)?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["end_header"] => break,
            ["format", fmt, _] => {
                encoding = Some(match *fmt {
                    "ascii" => Encoding::Ascii,
                    "binary_little_endian" => Encoding::Binary { little: true },
                    "binary_big_endian" => Encoding::Binary { little: false },
                    other => return Err(format_err(path, format!("unknown format {other}"))),
                })
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| format_err(path, "bad element count"))?,
                props: Vec::new(),
            }),
            ["property", "list", count, item, name] => {
                let el = elements.last_mut().ok_or_else(|| format_err(path, "property before element"))?;
                let (Some(count), Some(item)) = (Scalar::parse(count), Scalar::parse(item)) else {
                    return Err(format_err(path, format!("bad list property {name}")));
                };
                el.props.push(Property::List { name: name.to_string(), count, item });
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or_else(|| format_err(path, "property before element"))?;
                let ty = Scalar::parse(ty).ok_or_else(|| format_err(path, format!("bad type {ty}")))?;
                el.props.push(Property::Scalar { name: name.to_string(), ty });
            }
            _ => return Err(format_err(path, format!("unrecognised header line {:?}", line.trim()))),
        }
    }
    let encoding = encoding.ok_or_else(|| format_err(path, "missing format line"))?;

    let mut out = Vec::with_capacity(elements.len());
    match encoding {
        Encoding::Ascii => {
            let mut rest = String::new();
            reader.read_to_string(&mut rest)?;
            let mut toks = rest.split_whitespace();
            let mut num = || -> Result<f64> {
                toks.next()
                    .ok_or_else(|| format_err(path, "truncated body"))?
                    .parse::<f64>()
                    .map_err(|e| format_err(path, e))
            };
            for el in elements {
                let mut recs = Vec::with_capacity(el.count);
                for _ in 0..el.count {
                    let mut rec = Vec::with_capacity(el.props.len());
                    for p in &el.props {
                        match p {
                            Property::Scalar { .. } => rec.push(vec![num()?]),
                            Property::List { .. } => {
                                let n = num()? as usize;
                                rec.push((0..n).map(|_| num()).collect::<Result<_>>()?);
                            }
                        }
                    }
                    recs.push(rec);
                }
                out.push((el, recs));
            }
        }
        Encoding::Binary { little } => {
            let mut buf = [0u8; 8];
            let mut read = |r: &mut BufReader<File>, ty: Scalar| -> Result<f64> {
                r.read_exact(&mut buf[..ty.size()]).map_err(|_| format_err(path, "truncated body"))?;
                Ok(ty.decode(&buf, little))
            };
            for el in elements {
                let mut recs = Vec::with_capacity(el.count);
                for _ in 0..el.count {
                    let mut rec = Vec::with_capacity(el.props.len());
                    for p in &el.props {
                        match p {
                            Property::Scalar { ty, .. } => rec.push(vec![read(&mut reader, *ty)?]),
                            Property::List { count, item, .. } => {
                                let n = read(&mut reader, *count)? as usize;
                                rec.push((0..n).map(|_| read(&mut reader, *item)).collect::<Result<_>>()?);
                            }
                        }
                    }
                    recs.push(rec);
                }
                out.push((el, recs));
            }
        }
    }
    Ok(Ply { elements: out })
}

fn columns(path: &Path, el: &Element, names: [&str; 3]) -> Result<Option<[usize; 3]>> {
    let find = |n: &str| el.props.iter().position(|p| p.name() == n);
    match names.map(find) {
        [Some(a), Some(b), Some(c)] => Ok(Some([a, b, c])),
        [None, None, None] => Ok(None),
        _ => Err(format_err(path, format!("incomplete {names:?} properties"))),
    }
}

fn ply_vertices(path: &Path, ply: &Ply) -> Result<(Vec<Point3>, Option<Vec<Point3>>)> {
    let (el, recs) = ply.element("vertex").ok_or_else(|| format_err(path, "no vertex element"))?;
    let pos = columns(path, el, ["x", "y", "z"])?.ok_or_else(|| format_err(path, "vertices lack x/y/z"))?;
    let points = recs.iter().map(|r| pos.map(|c| r[c][0])).collect();
    let normals = columns(path, el, ["nx", "ny", "nz"])?.map(|nc| recs.iter().map(|r| nc.map(|c| r[c][0])).collect());
    Ok((points, normals))
}

pub fn read_ply_cloud(path: &Path) -> Result<PointCloud> {
    let ply = read_ply(path)?;
    match ply_vertices(path, &ply)? {
        (points, Some(normals)) => PointCloud::with_normals(points, normals),
        (points, None) => PointCloud::new(points),
    }
}

pub fn read_ply_mesh(path: &Path) -> Result<TriMesh> {
    let ply = read_ply(path)?;
    let (vertices, _) = ply_vertices(path, &ply)?;
    let mut faces = Vec::new();
    if let Some((el, recs)) = ply.element("face") {
        let col = el
            .props
            .iter()
            .position(|p| matches!(p, Property::List { name, .. } if name == "vertex_indices" || name == "vertex_index"))
            .ok_or_else(|| format_err(path, "faces lack vertex_indices"))?;
        for r in recs {
            let idx: Vec<u32> = r[col].iter().map(|&v| v as u32).collect();
            fan(&idx, &mut faces);
        }
    }
    TriMesh::new(vertices, faces)
}

fn fan(poly: &[u32], out: &mut Vec<[u32; 3]>) {
    for k in 1..poly.len().saturating_sub(1) {
        out.push([poly[0], poly[k], poly[k + 1]]);
    }
}

/// Binary little-endian PLY with `float` positions and optional normals.
pub fn write_ply_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "ply\nformat binary_little_endian 1.0\nelement vertex {}", cloud.len())?;
    writeln!(w, "property float x\nproperty float y\nproperty float z")?;
    if cloud.normals().is_some() {
        writeln!(w, "property float nx\nproperty float ny\nproperty float nz")?;
    }
    writeln!(w, "end_header")?;
    for (i, p) in cloud.points().iter().enumerate() {
        for c in p {
            w.write_all(&(*c as f32).to_le_bytes())?;
        }
        if let Some(n) = cloud.normals() {
            for c in n[i] {
                w.write_all(&(c as f32).to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Binary little-endian PLY with `float` vertices and `uchar`/`int` face lists.
pub fn write_ply_mesh(path: &Path, mesh: &TriMesh) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "ply\nformat binary_little_endian 1.0\nelement vertex {}", mesh.vertices().len())?;
    writeln!(w, "property float x\nproperty float y\nproperty float z")?;
    writeln!(w, "element face {}\nproperty list uchar int vertex_indices\nend_header", mesh.triangles().len())?;
    for v in mesh.vertices() {
        for c in v {
            w.write_all(&(*c as f32).to_le_bytes())?;
        }
    }
    for t in mesh.triangles() {
        w.write_all(&[3u8])?;
        for i in t {
            w.write_all(&(*i as i32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_obj(path: &Path, mesh: &TriMesh) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for v in mesh.vertices() {
        writeln!(w, "v {} {} {}", v[0], v[1], v[2])?;
    }
    for t in mesh.triangles() {
        writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    w.flush()?;
    Ok(())
}

/// `v` and `f` records only; polygons are fan-triangulated and texture or
/// normal references (`f 1/2/3`) ignored.
pub fn read_obj(path: &Path) -> Result<TriMesh> {
    let reader = BufReader::new(File::open(path)?);
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (no, line) in reader.lines().enumerate() {
        let line = line?;
        let mut toks = line.split_whitespace();
        let bad = |msg: &str| format_err(path, format!("line {}: {msg}", no + 1));
        match toks.next() {
            Some("v") => {
                let c: Vec<f64> = toks
                    .take(3)
                    .map(|t| t.parse::<f64>().map_err(|_| bad("bad vertex coordinate")))
                    .collect::<Result<_>>()?;
                if c.len() != 3 {
                    return Err(bad("vertex needs three coordinates"));
                }
                vertices.push([c[0], c[1], c[2]]);
            }
            Some("f") => {
                let mut poly = Vec::new();
                for t in toks {
                    let raw: i64 = t.split('/').next().unwrap_or("").parse().map_err(|_| bad("bad face index"))?;
                    let idx = match raw {
                        r if r > 0 => r - 1,
                        r if r < 0 => vertices.len() as i64 + r,
                        _ => return Err(bad("face index 0")),
                    };
                    if idx < 0 {
                        return Err(bad("face index out of range"));
                    }
                    poly.push(idx as u32);
                }
                fan(&poly, &mut faces);
            }
            _ => {}
        }
    }
    TriMesh::new(vertices, faces)
}

/// Reads `.ply` or `.obj` by extension.
pub fn read_mesh(path: &Path) -> Result<TriMesh> {
    match extension(path).as_str() {
        "ply" => read_ply_mesh(path),
        "obj" => read_obj(path),
        other => Err(format_err(path, format!("unsupported mesh extension {other:?}"))),
    }
}

/// Writes `.ply` (binary) or `.obj` by extension.
pub fn write_mesh(path: &Path, mesh: &TriMesh) -> Result<()> {
    match extension(path).as_str() {
        "ply" => write_ply_mesh(path, mesh),
        "obj" => write_obj(path, mesh),
        other => Err(format_err(path, format!("unsupported mesh extension {other:?}"))),
    }
}
