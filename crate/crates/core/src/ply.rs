//! Minimal PLY reader/writer for vertex + face meshes (ASCII and binary
//! little-endian). Scalar properties are carried as `f64` in memory.

use std::io::{self, BufRead, Read, Write};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

/// Name, count, scalar properties, list property (count, item) types.
type ElementDecl = (String, usize, Vec<(String, ScalarKind)>, Option<(ScalarKind, ScalarKind)>);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarKind {
    UChar,
    Int,
    UInt,
    Float,
    Double,
}

impl ScalarKind {
    fn name(self) -> &'static str {
        match self {
            ScalarKind::UChar => "uchar",
            ScalarKind::Int => "int",
            ScalarKind::UInt => "uint",
            ScalarKind::Float => "float",
            ScalarKind::Double => "double",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "uchar" | "uint8" | "char" | "int8" => ScalarKind::UChar,
            "int" | "int32" => ScalarKind::Int,
            "uint" | "uint32" => ScalarKind::UInt,
            "float" | "float32" => ScalarKind::Float,
            "double" | "float64" => ScalarKind::Double,
            _ => return None,
        })
    }

    fn write_bin(self, out: &mut impl Write, v: f64) -> io::Result<()> {
        match self {
            ScalarKind::UChar => out.write_all(&[v as u8]),
            ScalarKind::Int => out.write_all(&(v as i32).to_le_bytes()),
            ScalarKind::UInt => out.write_all(&(v as u32).to_le_bytes()),
            ScalarKind::Float => out.write_all(&(v as f32).to_le_bytes()),
            ScalarKind::Double => out.write_all(&v.to_le_bytes()),
        }
    }

    fn read_bin(self, input: &mut impl Read) -> io::Result<f64> {
        Ok(match self {
            ScalarKind::UChar => {
                let mut b = [0u8; 1];
                input.read_exact(&mut b)?;
                b[0] as f64
            }
            ScalarKind::Int => {
                let mut b = [0u8; 4];
                input.read_exact(&mut b)?;
                i32::from_le_bytes(b) as f64
            }
            ScalarKind::UInt => {
                let mut b = [0u8; 4];
                input.read_exact(&mut b)?;
                u32::from_le_bytes(b) as f64
            }
            ScalarKind::Float => {
                let mut b = [0u8; 4];
                input.read_exact(&mut b)?;
                f32::from_le_bytes(b) as f64
            }
            ScalarKind::Double => {
                let mut b = [0u8; 8];
                input.read_exact(&mut b)?;
                f64::from_le_bytes(b)
            }
        })
    }

    fn format_ascii(self, v: f64) -> String {
        match self {
            ScalarKind::UChar | ScalarKind::Int | ScalarKind::UInt => format!("{}", v as i64),
            ScalarKind::Float => format!("{}", v as f32),
            ScalarKind::Double => format!("{v}"),
        }
    }
}

/// A mesh with per-vertex and per-face scalar properties. Faces always carry a
/// `vertex_indices` list first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlyMesh {
    pub comments: Vec<String>,
    pub vertex_props: Vec<(String, ScalarKind)>,
    pub vertices: Vec<Vec<f64>>,
    pub face_props: Vec<(String, ScalarKind)>,
    pub faces: Vec<(Vec<u32>, Vec<f64>)>,
}

fn bad(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

impl PlyMesh {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn vertex_prop(&self, name: &str) -> Option<usize> {
        self.vertex_props.iter().position(|(n, _)| n == name)
    }

    pub fn write(&self, out: &mut impl Write, format: PlyFormat) -> io::Result<()> {
        let mut out = io::BufWriter::new(out);
        writeln!(out, "ply")?;
        match format {
            PlyFormat::Ascii => writeln!(out, "format ascii 1.0")?,
            PlyFormat::BinaryLittleEndian => writeln!(out, "format binary_little_endian 1.0")?,
        }
        for c in &self.comments {
            writeln!(out, "comment {c}")?;
        }
        writeln!(out, "element vertex {}", self.vertices.len())?;
        for (name, kind) in &self.vertex_props {
            writeln!(out, "property {} {name}", kind.name())?;
        }
        if !self.faces.is_empty() || !self.face_props.is_empty() {
            writeln!(out, "element face {}", self.faces.len())?;
            writeln!(out, "property list uchar int vertex_indices")?;
            for (name, kind) in &self.face_props {
                writeln!(out, "property {} {name}", kind.name())?;
            }
        }
        writeln!(out, "end_header")?;
        match format {
            PlyFormat::Ascii => {
                for v in &self.vertices {
                    let row: Vec<String> =
                        v.iter().zip(&self.vertex_props).map(|(x, (_, k))| k.format_ascii(*x)).collect();
                    writeln!(out, "{}", row.join(" "))?;
                }
                for (idx, props) in &self.faces {
                    let mut row = vec![idx.len().to_string()];
                    row.extend(idx.iter().map(|i| i.to_string()));
                    row.extend(props.iter().zip(&self.face_props).map(|(x, (_, k))| k.format_ascii(*x)));
                    writeln!(out, "{}", row.join(" "))?;
                }
            }
            PlyFormat::BinaryLittleEndian => {
                for v in &self.vertices {
                    for (x, (_, k)) in v.iter().zip(&self.vertex_props) {
                        k.write_bin(&mut out, *x)?;
                    }
                }
                for (idx, props) in &self.faces {
                    out.write_all(&[idx.len() as u8])?;
                    for i in idx {
                        out.write_all(&(*i as i32).to_le_bytes())?;
                    }
                    for (x, (_, k)) in props.iter().zip(&self.face_props) {
                        k.write_bin(&mut out, *x)?;
                    }
                }
            }
        }
        out.flush()
    }

    pub fn read(input: impl Read) -> io::Result<Self> {
        let mut input = io::BufReader::new(input);
        let mut line = String::new();
        let mut next_line = |input: &mut io::BufReader<_>| -> io::Result<String> {
            line.clear();
            if input.read_line(&mut line)? == 0 {
                return Err(bad("unexpected end of header"));
            }
            Ok(line.trim_end().to_string())
        };
        if next_line(&mut input)? != "ply" {
            return Err(bad("missing ply magic"));
        }
        let mut mesh = PlyMesh::new();
        let mut format = None;
        // (name, count, scalar props, list (count kind, index kind) if any)
        let mut elements: Vec<ElementDecl> = Vec::new();
        loop {
            let l = next_line(&mut input)?;
            let tok: Vec<&str> = l.split_whitespace().collect();
            match tok.as_slice() {
                ["format", "ascii", _] => format = Some(PlyFormat::Ascii),
                ["format", "binary_little_endian", _] => format = Some(PlyFormat::BinaryLittleEndian),
                ["format", other, _] => return Err(bad(format!("unsupported format {other}"))),
                ["comment", ..] => mesh.comments.push(l.trim_start_matches("comment").trim().to_string()),
                ["obj_info", ..] => {}
                ["element", name, n] => {
                    let n = n.parse().map_err(|_| bad("bad element count"))?;
                    elements.push((name.to_string(), n, Vec::new(), None));
                }
                ["property", "list", ck, ik, _] => {
                    let el = elements.last_mut().ok_or_else(|| bad("property before element"))?;
                    let ck = ScalarKind::parse(ck).ok_or_else(|| bad("bad list type"))?;
                    let ik = ScalarKind::parse(ik).ok_or_else(|| bad("bad list type"))?;
                    el.3 = Some((ck, ik));
                }
                ["property", kind, name] => {
                    let el = elements.last_mut().ok_or_else(|| bad("property before element"))?;
                    let k = ScalarKind::parse(kind).ok_or_else(|| bad(format!("bad property type {kind}")))?;
                    el.2.push((name.to_string(), k));
                }
                ["end_header"] => break,
                _ => return Err(bad(format!("unrecognized header line: {l}"))),
            }
        }
        let format = format.ok_or_else(|| bad("missing format line"))?;
        let mut ascii_tokens: Vec<String> = Vec::new();
        let mut pos = 0usize;
        if format == PlyFormat::Ascii {
            let mut rest = String::new();
            input.read_to_string(&mut rest)?;
            ascii_tokens = rest.split_whitespace().map(str::to_string).collect();
        }
        let mut take = |kind: ScalarKind, input: &mut io::BufReader<_>| -> io::Result<f64> {
            match format {
                PlyFormat::Ascii => {
                    let t = ascii_tokens.get(pos).ok_or_else(|| bad("truncated body"))?;
                    pos += 1;
                    t.parse::<f64>().map_err(|_| bad("bad number"))
                }
                PlyFormat::BinaryLittleEndian => kind.read_bin(input),
            }
        };
        for (name, count, props, list) in elements {
            let is_vertex = name == "vertex";
            let is_face = name == "face";
            if is_vertex {
                mesh.vertex_props = props.clone();
            } else if is_face {
                mesh.face_props = props.clone();
            }
            for _ in 0..count {
                let mut idx = Vec::new();
                let mut vals = Vec::with_capacity(props.len());
                // The list property is assumed to come first, as written above.
                if let Some((ck, ik)) = list {
                    let n = take(ck, &mut input)? as usize;
                    for _ in 0..n {
                        idx.push(take(ik, &mut input)? as u32);
                    }
                }
                for (_, k) in &props {
                    vals.push(take(*k, &mut input)?);
                }
                if is_vertex {
                    mesh.vertices.push(vals);
                } else if is_face {
                    mesh.faces.push((idx, vals));
                }
            }
        }
        Ok(mesh)
    }
}

/// Convenience for the common "xyz + rgb" point/mesh layout.
pub fn xyz_rgb_props() -> Vec<(String, ScalarKind)> {
    vec![
        ("x".into(), ScalarKind::Float),
        ("y".into(), ScalarKind::Float),
        ("z".into(), ScalarKind::Float),
        ("red".into(), ScalarKind::UChar),
        ("green".into(), ScalarKind::UChar),
        ("blue".into(), ScalarKind::UChar),
    ]
}
