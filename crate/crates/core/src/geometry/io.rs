//! OFF / OBJ mesh and XYZ / PLY point cloud readers and writers.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::{PointCloud, TriangleMesh, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    Obj,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match extension(path).as_deref() {
            Some("off") => Some(MeshFormat::Off),
            Some("obj") => Some(MeshFormat::Obj),
            _ => None,
        }
    }
}

fn extension(path: &Path) -> Option<String> {
    path.extension().map(|e| e.to_string_lossy().to_ascii_lowercase())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Loads a mesh, choosing the parser from the file extension.
pub fn load_mesh(path: &Path) -> Result<TriangleMesh> {
    let format = MeshFormat::from_path(path).ok_or_else(|| Error::Format {
        path: path.to_path_buf(),
        msg: "unknown mesh extension (expected .off or .obj)".into(),
    })?;
    load_mesh_as(path, format)
}

pub fn load_mesh_as(path: &Path, format: MeshFormat) -> Result<TriangleMesh> {
    let text = read_text(path)?;
    let (mesh, dropped) = match format {
        MeshFormat::Off => parse_off(&text, path)?,
        MeshFormat::Obj => parse_obj(&text, path)?,
    };
    if dropped > 0 {
        log::warn!("{}: dropped {dropped} degenerate triangles", path.display());
    }
    Ok(mesh)
}

fn fan(poly: &[u32], out: &mut Vec<[u32; 3]>) {
    for i in 1..poly.len().saturating_sub(1) {
        out.push([poly[0], poly[i], poly[i + 1]]);
    }
}

fn finish_mesh(path: &Path, vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<(TriangleMesh, usize)> {
    if vertices.is_empty() || triangles.is_empty() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: "empty mesh".into(),
        });
    }
    TriangleMesh::new(vertices, triangles).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

fn parse_floats<const N: usize>(toks: &[&str], path: &Path, line: usize) -> Result<[f64; N]> {
    if toks.len() < N {
        return Err(parse_err(
            path,
            line,
            format!("expected {N} numbers, found {}", toks.len()),
        ));
    }
    let mut out = [0.0; N];
    for (o, t) in out.iter_mut().zip(toks) {
        *o = t
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad number {t:?}")))?;
    }
    Ok(out)
}

/// Parses ASCII OFF. Returns the mesh and the number of degenerate triangles dropped.
pub fn parse_off(text: &str, path: &Path) -> Result<(TriangleMesh, usize)> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let (ln, header) = lines.next().ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let mut rest: Vec<&str> = header.split_whitespace().collect();
    if rest.first() != Some(&"OFF") {
        return Err(parse_err(path, ln, "missing OFF header"));
    }
    rest.remove(0);
    let (ln, counts) = if rest.is_empty() {
        let (ln, l) = lines.next().ok_or_else(|| parse_err(path, ln, "missing counts line"))?;
        (ln, l.split_whitespace().collect::<Vec<_>>())
    } else {
        (ln, rest)
    };
    if counts.len() < 2 {
        return Err(parse_err(path, ln, "counts line needs vertex and face counts"));
    }
    let nv: usize = counts[0].parse().map_err(|_| parse_err(path, ln, "bad vertex count"))?;
    let nf: usize = counts[1].parse().map_err(|_| parse_err(path, ln, "bad face count"))?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(path, ln, "file ends inside vertex list"))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        let [x, y, z] = parse_floats::<3>(&toks, path, ln)?;
        vertices.push(Vec3::new(x, y, z));
    }
    let mut triangles = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(path, ln, "file ends inside face list"))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        let k: usize = toks
            .first()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| parse_err(path, ln, "bad face vertex count"))?;
        if k < 3 || toks.len() < k + 1 {
            return Err(parse_err(
                path,
                ln,
                format!(
                    "face needs at least 3 indices, line has {}",
                    toks.len().saturating_sub(1)
                ),
            ));
        }
        let mut poly = Vec::with_capacity(k);
        for t in &toks[1..=k] {
            let i: u32 = t.parse().map_err(|_| parse_err(path, ln, format!("bad index {t:?}")))?;
            if i as usize >= nv {
                return Err(parse_err(path, ln, format!("index {i} out of range ({nv} vertices)")));
            }
            poly.push(i);
        }
        fan(&poly, &mut triangles);
    }
    finish_mesh(path, vertices, triangles)
}

/// Parses ASCII OBJ `v` and `f` records; texture/normal sub-indices are ignored.
pub fn parse_obj(text: &str, path: &Path) -> Result<(TriangleMesh, usize)> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let l = raw.split('#').next().unwrap_or("").trim();
        let mut toks = l.split_whitespace();
        match toks.next() {
            Some("v") => {
                let rest: Vec<&str> = toks.collect();
                let [x, y, z] = parse_floats::<3>(&rest, path, ln)?;
                vertices.push(Vec3::new(x, y, z));
            }
            Some("f") => {
                let mut poly = Vec::new();
                for t in toks {
                    let head = t.split('/').next().unwrap_or("");
                    let idx: i64 = head
                        .parse()
                        .map_err(|_| parse_err(path, ln, format!("bad face index {t:?}")))?;
                    let n = vertices.len() as i64;
                    let resolved = if idx > 0 { idx - 1 } else { n + idx };
                    if idx == 0 || resolved < 0 || resolved >= n {
                        return Err(parse_err(
                            path,
                            ln,
                            format!("face index {idx} out of range ({n} vertices so far)"),
                        ));
                    }
                    poly.push(resolved as u32);
                }
                if poly.len() < 3 {
                    return Err(parse_err(path, ln, "face needs at least 3 vertices"));
                }
                fan(&poly, &mut triangles);
            }
            _ => {}
        }
    }
    finish_mesh(path, vertices, triangles)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    let f = fs::File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    Ok(BufWriter::new(f))
}

fn wrap_io(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(format!("writing {}", path.display()), e)
}

pub fn write_off(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    let mut w = create(path)?;
    let io = wrap_io(path);
    writeln!(w, "OFF").map_err(&io)?;
    writeln!(w, "{} {} 0", mesh.vertices().len(), mesh.triangles().len()).map_err(&io)?;
    for v in mesh.vertices() {
        writeln!(w, "{} {} {}", v.x, v.y, v.z).map_err(&io)?;
    }
    for t in mesh.triangles() {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2]).map_err(&io)?;
    }
    w.flush().map_err(&io)
}

pub fn write_obj(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    let mut w = create(path)?;
    let io = wrap_io(path);
    for v in mesh.vertices() {
        writeln!(w, "v {} {} {}", v.x, v.y, v.z).map_err(&io)?;
    }
    for t in mesh.triangles() {
        writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).map_err(&io)?;
    }
    w.flush().map_err(&io)
}

pub fn read_xyz(path: &Path) -> Result<PointCloud> {
    let text = read_text(path)?;
    let mut pts = Vec::new();
    for (i, l) in text.lines().enumerate() {
        let l = l.split('#').next().unwrap_or("").trim();
        if l.is_empty() {
            continue;
        }
        let toks: Vec<&str> = l.split_whitespace().collect();
        let [x, y, z] = parse_floats::<3>(&toks, path, i + 1)?;
        pts.push(Vec3::new(x, y, z));
    }
    Ok(PointCloud::new(pts))
}

pub fn write_xyz(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut w = create(path)?;
    let io = wrap_io(path);
    for p in &cloud.points {
        writeln!(w, "{} {} {}", p.x, p.y, p.z).map_err(&io)?;
    }
    w.flush().map_err(&io)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlyEncoding {
    Ascii,
    #[default]
    BinaryLittleEndian,
}

/// Writes a vertex-only PLY with float x, y, z properties.
pub fn write_ply(path: &Path, cloud: &PointCloud, encoding: PlyEncoding) -> Result<()> {
    let mut w = create(path)?;
    let io = wrap_io(path);
    let fmt = match encoding {
        PlyEncoding::Ascii => "ascii",
        PlyEncoding::BinaryLittleEndian => "binary_little_endian",
    };
    write!(
        w,
        "ply\nformat {fmt} 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        cloud.len()
    )
    .map_err(&io)?;
    for p in &cloud.points {
        let c = [p.x as f32, p.y as f32, p.z as f32];
        match encoding {
            PlyEncoding::Ascii => writeln!(w, "{} {} {}", c[0], c[1], c[2]).map_err(&io)?,
            PlyEncoding::BinaryLittleEndian => {
                for v in c {
                    w.write_all(&v.to_le_bytes()).map_err(&io)?;
                }
            }
        }
    }
    w.flush().map_err(&io)
}

#[derive(Debug, Clone, Copy)]
enum PlyScalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl PlyScalar {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => PlyScalar::I8,
            "uchar" | "uint8" => PlyScalar::U8,
            "short" | "int16" => PlyScalar::I16,
            "ushort" | "uint16" => PlyScalar::U16,
            "int" | "int32" => PlyScalar::I32,
            "uint" | "uint32" => PlyScalar::U32,
            "float" | "float32" => PlyScalar::F32,
            "double" | "float64" => PlyScalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            PlyScalar::I8 | PlyScalar::U8 => 1,
            PlyScalar::I16 | PlyScalar::U16 => 2,
            PlyScalar::I32 | PlyScalar::U32 | PlyScalar::F32 => 4,
            PlyScalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            PlyScalar::I8 => b[0] as i8 as f64,
            PlyScalar::U8 => b[0] as f64,
            PlyScalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            PlyScalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            PlyScalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            PlyScalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            PlyScalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            PlyScalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug)]
enum PlyProperty {
    Scalar(String, PlyScalar),
    List(PlyScalar, PlyScalar),
}

#[derive(Debug)]
struct PlyElement {
    name: String,
    count: usize,
    props: Vec<PlyProperty>,
}

/// Reads the `vertex` element of an ASCII or binary-little-endian PLY.
pub fn read_ply(path: &Path) -> Result<PointCloud> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_ply(&bytes, path)
}

fn format_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

pub fn parse_ply(bytes: &[u8], path: &Path) -> Result<PointCloud> {
    let marker = b"end_header";
    let end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| format_err(path, "missing end_header"))?;
    let mut body = end + marker.len();
    if bytes.get(body) == Some(&b'\r') {
        body += 1;
    }
    if bytes.get(body) == Some(&b'\n') {
        body += 1;
    }
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| format_err(path, "header is not UTF-8"))?;
    let mut lines = header.lines().enumerate();
    if lines.next().map(|(_, l)| l.trim()) != Some("ply") {
        return Err(parse_err(path, 1, "missing ply magic"));
    }
    let mut binary = None;
    let mut elements: Vec<PlyElement> = Vec::new();
    for (i, l) in lines {
        let toks: Vec<&str> = l.split_whitespace().collect();
        match toks.as_slice() {
            ["format", "ascii", _] => binary = Some(false),
            ["format", "binary_little_endian", _] => binary = Some(true),
            ["format", other, _] => return Err(parse_err(path, i + 1, format!("unsupported PLY format {other}"))),
            ["element", name, count] => elements.push(PlyElement {
                name: name.to_string(),
                count: count.parse().map_err(|_| parse_err(path, i + 1, "bad element count"))?,
                props: Vec::new(),
            }),
            ["property", "list", ct, it, _] => {
                let (c, t) = PlyScalar::parse(ct)
                    .zip(PlyScalar::parse(it))
                    .ok_or_else(|| parse_err(path, i + 1, "bad list property type"))?;
                elements
                    .last_mut()
                    .ok_or_else(|| parse_err(path, i + 1, "property before element"))?
                    .props
                    .push(PlyProperty::List(c, t));
            }
            ["property", ty, name] => {
                let s =
                    PlyScalar::parse(ty).ok_or_else(|| parse_err(path, i + 1, format!("bad property type {ty}")))?;
                elements
                    .last_mut()
                    .ok_or_else(|| parse_err(path, i + 1, "property before element"))?
                    .props
                    .push(PlyProperty::Scalar(name.to_string(), s));
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            _ => return Err(parse_err(path, i + 1, format!("unrecognized header line {l:?}"))),
        }
    }
    let binary = binary.ok_or_else(|| format_err(path, "missing format line"))?;
    let vertex = elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| format_err(path, "no vertex element"))?;
    let coord_slot = |e: &PlyElement, axis: &str| {
        e.props
            .iter()
            .position(|p| matches!(p, PlyProperty::Scalar(n, _) if n == axis))
    };
    let slots = ["x", "y", "z"].map(|a| coord_slot(&elements[vertex], a));
    let [Some(sx), Some(sy), Some(sz)] = slots else {
        return Err(format_err(path, "vertex element lacks x, y, z properties"));
    };

    let mut points = Vec::with_capacity(elements[vertex].count);
    if binary {
        let mut pos = body;
        let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
            let s = bytes
                .get(*pos..*pos + n)
                .ok_or_else(|| format_err(path, "truncated binary body"))?;
            *pos += n;
            Ok(s)
        };
        for (ei, e) in elements.iter().enumerate() {
            for _ in 0..e.count {
                let mut vals = [0.0f64; 3];
                for (pi, p) in e.props.iter().enumerate() {
                    match p {
                        PlyProperty::Scalar(_, s) => {
                            let v = s.read_le(take(&mut pos, s.size())?);
                            if ei == vertex {
                                if pi == sx {
                                    vals[0] = v;
                                } else if pi == sy {
                                    vals[1] = v;
                                } else if pi == sz {
                                    vals[2] = v;
                                }
                            }
                        }
                        PlyProperty::List(c, t) => {
                            let n = c.read_le(take(&mut pos, c.size())?) as usize;
                            take(&mut pos, n * t.size())?;
                        }
                    }
                }
                if ei == vertex {
                    points.push(Vec3::from(vals));
                }
            }
            if ei == vertex {
                break;
            }
        }
    } else {
        let text = std::str::from_utf8(&bytes[body..]).map_err(|_| format_err(path, "ASCII body is not UTF-8"))?;
        let header_lines = header.lines().count() + 1;
        let mut rows = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        for (ei, e) in elements.iter().enumerate() {
            for _ in 0..e.count {
                let (li, row) = rows.next().ok_or_else(|| format_err(path, "truncated ASCII body"))?;
                if ei == vertex {
                    let toks: Vec<&str> = row.split_whitespace().collect();
                    let get = |slot: usize| -> Result<f64> {
                        toks.get(slot)
                            .and_then(|t| t.parse().ok())
                            .ok_or_else(|| parse_err(path, header_lines + li + 1, "bad vertex row"))
                    };
                    points.push(Vec3::new(get(sx)?, get(sy)?, get(sz)?));
                }
            }
            if ei == vertex {
                break;
            }
        }
    }
    Ok(PointCloud::new(points))
}

/// Loads a point cloud from `.xyz` or `.ply`.
pub fn load_point_cloud(path: &Path) -> Result<PointCloud> {
    match extension(path).as_deref() {
        Some("xyz") | Some("txt") => read_xyz(path),
        Some("ply") => read_ply(path),
        _ => Err(format_err(
            path,
            "unknown point cloud extension (expected .xyz or .ply)",
        )),
    }
}

/// Writes a cloud as `.ply` (binary little-endian) or `.xyz`, by extension.
pub fn save_point_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    match extension(path).as_deref() {
        Some("xyz") | Some("txt") => write_xyz(path, cloud),
        Some("ply") => write_ply(path, cloud, PlyEncoding::BinaryLittleEndian),
        _ => Err(format_err(
            path,
            "unknown point cloud extension (expected .xyz or .ply)",
        )),
    }
}
