//! OFF (canonical, read/write) and OBJ (read-only) mesh files.

use std::fmt::Write as _;
use std::path::Path;

use log::warn;
use nalgebra::Point3;

use super::mesh::{MeshError, TriMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    Obj,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "off" => Some(Self::Off),
            "obj" => Some(Self::Obj),
            _ => None,
        }
    }
}

pub fn load_mesh(path: &Path, format: MeshFormat) -> Result<TriMesh, MeshError> {
    let text = std::fs::read_to_string(path).map_err(|source| MeshError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    match format {
        MeshFormat::Off => parse_off(&text, label),
        MeshFormat::Obj => parse_obj(&text, label),
    }
}

fn perr(line: usize, msg: impl Into<String>) -> MeshError {
    MeshError::Parse {
        line,
        msg: msg.into(),
    }
}

/// Tokens of non-empty, non-comment lines together with their 1-based line number.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("");
        let toks: Vec<&str> = l.split_whitespace().collect();
        (!toks.is_empty()).then_some((i + 1, toks))
    })
}

fn parse_coord(tok: &str, line: usize) -> Result<f64, MeshError> {
    tok.parse::<f64>()
        .map_err(|_| perr(line, format!("invalid coordinate `{tok}`")))
}

fn checked_index(raw: i64, count: usize, line: usize) -> Result<usize, MeshError> {
    if raw < 0 || raw as usize >= count {
        Err(MeshError::IndexOutOfRange {
            line,
            index: raw,
            count,
        })
    } else {
        Ok(raw as usize)
    }
}

pub fn parse_off(text: &str, label: impl Into<String>) -> Result<TriMesh, MeshError> {
    let mut lines = content_lines(text);
    let (hl, header) = lines.next().ok_or_else(|| perr(1, "empty file"))?;
    if header[0] != "OFF" {
        return Err(perr(hl, "missing `OFF` header"));
    }
    // counts may share the header line
    let counts: Vec<&str> = if header.len() > 1 {
        header[1..].to_vec()
    } else {
        lines
            .next()
            .map(|(_, t)| t)
            .ok_or_else(|| perr(hl, "missing counts line"))?
    };
    if counts.len() < 2 {
        return Err(perr(hl, "counts line needs vertex and face counts"));
    }
    let nv: usize = counts[0]
        .parse()
        .map_err(|_| perr(hl, "invalid vertex count"))?;
    let nf: usize = counts[1]
        .parse()
        .map_err(|_| perr(hl, "invalid face count"))?;

    let mut vertices = Vec::with_capacity(nv);
    let mut triangles = Vec::with_capacity(nf);
    let mut last_line = hl;
    for _ in 0..nv {
        let (ln, toks) = lines.next().ok_or_else(|| {
            perr(
                last_line,
                format!("expected {nv} vertices, found {}", vertices.len()),
            )
        })?;
        last_line = ln;
        if toks.len() < 3 {
            return Err(perr(ln, "vertex line needs 3 coordinates"));
        }
        vertices.push(Point3::new(
            parse_coord(toks[0], ln)?,
            parse_coord(toks[1], ln)?,
            parse_coord(toks[2], ln)?,
        ));
    }
    for _ in 0..nf {
        let (ln, toks) = lines.next().ok_or_else(|| {
            perr(
                last_line,
                format!("expected {nf} faces, found {}", triangles.len()),
            )
        })?;
        last_line = ln;
        let count: usize = toks[0]
            .parse()
            .map_err(|_| perr(ln, format!("invalid face size `{}`", toks[0])))?;
        if count != 3 {
            return Err(MeshError::NonTriangular { line: ln, count });
        }
        if toks.len() < 4 {
            return Err(perr(ln, "face line needs 3 indices"));
        }
        let mut tri = [0usize; 3];
        for k in 0..3 {
            let raw: i64 = toks[1 + k]
                .parse()
                .map_err(|_| perr(ln, format!("invalid index `{}`", toks[1 + k])))?;
            tri[k] = checked_index(raw, nv, ln)?;
        }
        triangles.push(tri);
    }
    if let Some((ln, _)) = lines.next() {
        return Err(perr(ln, "unexpected content after the declared faces"));
    }
    TriMesh::new(label, vertices, triangles)
}

pub fn parse_obj(text: &str, label: impl Into<String>) -> Result<TriMesh, MeshError> {
    let mut vertices = Vec::new();
    let mut faces: Vec<(usize, [i64; 3])> = Vec::new();
    let mut ignored = 0usize;
    for (ln, toks) in content_lines(text) {
        match toks[0] {
            "v" => {
                if toks.len() < 4 {
                    return Err(perr(ln, "vertex line needs 3 coordinates"));
                }
                vertices.push(Point3::new(
                    parse_coord(toks[1], ln)?,
                    parse_coord(toks[2], ln)?,
                    parse_coord(toks[3], ln)?,
                ));
            }
            "f" => {
                let count = toks.len() - 1;
                if count != 3 {
                    return Err(MeshError::NonTriangular { line: ln, count });
                }
                let mut tri = [0i64; 3];
                for k in 0..3 {
                    // "i", "i/t", "i/t/n" and "i//n" all carry the vertex index first
                    let head = toks[1 + k].split('/').next().unwrap_or("");
                    tri[k] = head
                        .parse()
                        .map_err(|_| perr(ln, format!("invalid index `{}`", toks[1 + k])))?;
                }
                faces.push((ln, tri));
            }
            _ => ignored += 1,
        }
    }
    if ignored > 0 {
        warn!("OBJ: ignored {ignored} unsupported directive line(s)");
    }
    let nv = vertices.len();
    let mut triangles = Vec::with_capacity(faces.len());
    for (ln, tri) in faces {
        let mut t = [0usize; 3];
        for k in 0..3 {
            // 1-based indices
            t[k] = checked_index(tri[k] - 1, nv, ln).map_err(|_| MeshError::IndexOutOfRange {
                line: ln,
                index: tri[k],
                count: nv,
            })?;
        }
        triangles.push(t);
    }
    TriMesh::new(label, vertices, triangles)
}

/// Serialize as ASCII OFF with exact (round-trip) coordinates.
pub fn write_off(mesh: &TriMesh) -> String {
    let mut out = String::new();
    out.push_str("OFF\n");
    let _ = writeln!(out, "{} {} 0", mesh.vertices().len(), mesh.num_triangles());
    for v in mesh.vertices() {
        let _ = writeln!(out, "{:e} {:e} {:e}", v.x, v.y, v.z);
    }
    for t in mesh.triangles() {
        let _ = writeln!(out, "3 {} {} {}", t[0], t[1], t[2]);
    }
    out
}
