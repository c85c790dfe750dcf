//! Mesh files: Wavefront-style ASCII (`v` / `f` records, 1-based) and the
//! FWB1 binary container (`vertices`, `faces`, `attr.<name>` chunks).

use std::fmt::Write as _;
use std::path::Path;

use super::{Attribute, TriMesh, Vec3};
use crate::error::{Error, Result};
use crate::fwb::Container;

pub fn parse_obj(text: &str, origin: &Path) -> Result<TriMesh> {
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut vertices = Vec::new();
    let mut faces: Vec<([u32; 3], usize)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let coords: Vec<f64> = tokens
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| err(line_no, format!("bad vertex record `{line}`")))?;
                if coords.len() < 3 || coords.len() > 4 || !coords.iter().all(|c| c.is_finite()) {
                    return Err(err(line_no, format!("bad vertex record `{line}`")));
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let idx: Vec<i64> = tokens
                    .map(|t| t.split('/').next().unwrap_or("").parse::<i64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| err(line_no, format!("bad face record `{line}`")))?;
                if idx.len() != 3 {
                    return Err(err(line_no, format!("expected a triangle, got {} indices", idx.len())));
                }
                let mut f = [0u32; 3];
                for (slot, &i) in f.iter_mut().zip(&idx) {
                    if i < 1 {
                        return Err(err(line_no, format!("face index {i} is not 1-based")));
                    }
                    *slot = (i - 1) as u32;
                }
                faces.push((f, line_no));
            }
            Some("vn" | "vt" | "o" | "g" | "s" | "usemtl" | "mtllib" | "l") => {}
            Some(other) => return Err(err(line_no, format!("unknown record `{other}`"))),
            None => {}
        }
    }
    for (f, line_no) in &faces {
        if f.iter().any(|&i| i as usize >= vertices.len()) {
            return Err(err(
                *line_no,
                format!("face {:?} exceeds vertex count {}", f.map(|i| i + 1), vertices.len()),
            ));
        }
        if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
            return Err(err(*line_no, "face repeats a vertex".into()));
        }
    }
    TriMesh::new(vertices, faces.into_iter().map(|(f, _)| f).collect())
}

pub fn load_obj(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text, path)
}

/// Rust's shortest round-trip float formatting makes this lossless.
pub fn save_obj(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for v in mesh.vertices() {
        writeln!(out, "v {:?} {:?} {:?}", v.x, v.y, v.z).unwrap();
    }
    for f in mesh.faces() {
        writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn mesh_to_container(mesh: &TriMesh) -> Result<Container> {
    let mut c = Container::new();
    write_mesh_chunks(mesh, &mut c)?;
    Ok(c)
}

pub(crate) fn write_mesh_chunks(mesh: &TriMesh, c: &mut Container) -> Result<()> {
    let n = mesh.vertex_count();
    c.put_f64(
        "vertices",
        &[n, 3],
        mesh.vertices().iter().flat_map(|v| [v.x, v.y, v.z]).collect(),
    )?;
    c.put_u32(
        "faces",
        &[mesh.face_count(), 3],
        mesh.faces().iter().flatten().copied().collect(),
    )?;
    for (name, attr) in mesh.attributes() {
        c.put_f64(&format!("attr.{name}"), &[n, attr.width()], attr.data().to_vec())?;
    }
    Ok(())
}

pub fn mesh_from_container(c: &Container) -> Result<TriMesh> {
    let (vd, v) = c.f64("vertices")?;
    let (fd, f) = c.u32("faces")?;
    if vd.len() != 2 || vd[1] != 3 || fd.len() != 2 || fd[1] != 3 {
        return Err(Error::Container("vertices/faces must be n x 3".into()));
    }
    let vertices = v.chunks_exact(3).map(|p| Vec3::new(p[0], p[1], p[2])).collect();
    let faces = f.chunks_exact(3).map(|t| [t[0], t[1], t[2]]).collect();
    let mut mesh = TriMesh::new(vertices, faces)?;
    for chunk in c.chunks() {
        if let Some(name) = chunk.name.strip_prefix("attr.") {
            let (dims, data) = c.f64(&chunk.name)?;
            if dims.len() != 2 {
                return Err(Error::Container(format!("attribute `{name}` must be rank 2")));
            }
            mesh.set_attribute(name, Attribute::new(dims[1], data.to_vec())?)?;
        }
    }
    Ok(mesh)
}

fn is_binary(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("fwb"))
}

/// Dispatches on extension: `.fwb` is the binary container, anything else ASCII.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    if is_binary(path) {
        mesh_from_container(&Container::load(path)?)
    } else {
        load_obj(path)
    }
}

pub fn save_mesh(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if is_binary(path) {
        mesh_to_container(mesh)?.save(path)
    } else {
        save_obj(mesh, path)
    }
}
