//! Indexed triangle meshes and the geometric queries built on them.

mod annotation;
mod closest;
mod io;
mod laplacian;
mod normals;
pub mod primitives;

use std::collections::{BTreeMap, HashMap};

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub use annotation::{FaceClass, SemanticAnnotation};
pub use closest::{closest_point, closest_point_on_triangle};
pub use io::{load_mesh, load_obj, mesh_from_container, mesh_to_container, parse_obj, save_mesh, save_obj};
pub use laplacian::{uniform_laplacian, uniform_laplacian_vec3};
pub use normals::{face_normals, vertex_normals, FaceNormals, VertexNormals};

pub type Vec3 = Vector3<f64>;

/// Tolerance on barycentric weight sums.
pub const BARY_SUM_TOL: f64 = 1e-9;

/// Faces with area below this are treated as degenerate.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// A named per-vertex channel of fixed-width real vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Attribute {
    width: usize,
    data: Vec<f64>,
}

impl Attribute {
    pub fn new(width: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || data.len() % width != 0 {
            return Err(Error::dim(format!(
                "attribute payload of {} values is not a multiple of width {width}",
                data.len()
            )));
        }
        Ok(Self { width, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.width
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, v: usize) -> &[f64] {
        &self.data[v * self.width..(v + 1) * self.width]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[u32; 3]>,
    attributes: BTreeMap<String, Attribute>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>) -> Result<Self> {
        validate_faces(vertices.len(), &faces)?;
        Ok(Self {
            vertices,
            faces,
            attributes: BTreeMap::new(),
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn vertex(&self, v: u32) -> Vec3 {
        self.vertices[v as usize]
    }

    pub fn corners(&self, f: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertex(a), self.vertex(b), self.vertex(c)]
    }

    /// Same topology and attributes with new vertex positions.
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::dim(format!(
                "expected {} vertices, got {}",
                self.vertices.len(),
                vertices.len()
            )));
        }
        Ok(Self {
            vertices,
            faces: self.faces.clone(),
            attributes: self.attributes.clone(),
        })
    }

    pub fn set_attribute(&mut self, name: &str, attr: Attribute) -> Result<()> {
        if attr.len() != self.vertices.len() {
            return Err(Error::dim(format!(
                "attribute `{name}` has {} entries for {} vertices",
                attr.len(),
                self.vertices.len()
            )));
        }
        self.attributes.insert(name.to_string(), attr);
        Ok(())
    }

    pub fn attribute(&self, name: &str) -> Option<&Attribute> {
        self.attributes.get(name)
    }

    pub fn attributes(&self) -> impl Iterator<Item = (&str, &Attribute)> {
        self.attributes.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Unique undirected edges as `(lo, hi)`, sorted.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut edges: Vec<(u32, u32)> = self
            .faces
            .iter()
            .flat_map(|f| (0..3).map(move |i| ordered(f[i], f[(i + 1) % 3])))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Faces incident to each undirected edge, in ascending face order.
    pub fn edge_faces(&self) -> HashMap<(u32, u32), Vec<usize>> {
        let mut map: HashMap<(u32, u32), Vec<usize>> = HashMap::new();
        for (fi, f) in self.faces.iter().enumerate() {
            for i in 0..3 {
                map.entry(ordered(f[i], f[(i + 1) % 3])).or_default().push(fi);
            }
        }
        map
    }

    /// Sorted, de-duplicated 1-ring neighbours of every vertex.
    pub fn vertex_neighbors(&self) -> Vec<Vec<u32>> {
        let mut rings = vec![Vec::new(); self.vertices.len()];
        for f in &self.faces {
            for i in 0..3 {
                let (a, b) = (f[i], f[(i + 1) % 3]);
                rings[a as usize].push(b);
                rings[b as usize].push(a);
            }
        }
        for r in &mut rings {
            r.sort_unstable();
            r.dedup();
        }
        rings
    }

    /// V - E + F counting only vertices referenced by a face.
    pub fn euler_characteristic(&self) -> i64 {
        let mut used = vec![false; self.vertices.len()];
        for f in &self.faces {
            for &v in f {
                used[v as usize] = true;
            }
        }
        let v = used.iter().filter(|&&u| u).count() as i64;
        v - self.edges().len() as i64 + self.faces.len() as i64
    }

    /// Fails on the first (lowest) edge shared by more than two faces, or
    /// traversed twice in the same direction.
    pub fn check_manifold(&self) -> Result<()> {
        let mut directed: HashMap<(u32, u32), usize> = HashMap::new();
        for f in &self.faces {
            for i in 0..3 {
                *directed.entry((f[i], f[(i + 1) % 3])).or_default() += 1;
            }
        }
        let mut bad: Vec<((u32, u32), usize)> = self
            .edge_faces()
            .into_iter()
            .filter_map(|(e, fs)| {
                let same_dir = directed.get(&e).copied().unwrap_or(0) > 1
                    || directed.get(&(e.1, e.0)).copied().unwrap_or(0) > 1;
                (fs.len() > 2 || same_dir).then_some((e, fs.len()))
            })
            .collect();
        bad.sort_unstable();
        match bad.first() {
            Some(&((a, b), n)) => Err(Error::NonManifold(a, b, n)),
            None => Ok(()),
        }
    }

    pub fn bounding_diagonal(&self) -> f64 {
        if self.vertices.is_empty() {
            return 0.0;
        }
        let mut lo = self.vertices[0];
        let mut hi = self.vertices[0];
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (hi - lo).norm()
    }

    pub fn mean_edge_length(&self) -> f64 {
        let edges = self.edges();
        if edges.is_empty() {
            return 0.0;
        }
        edges
            .iter()
            .map(|&(a, b)| (self.vertex(a) - self.vertex(b)).norm())
            .sum::<f64>()
            / edges.len() as f64
    }

    pub fn bary_interpolate(&self, channel: &str, at: &BaryCoord) -> Result<Vec<f64>> {
        let attr = self
            .attribute(channel)
            .ok_or_else(|| Error::invalid(format!("unknown attribute channel `{channel}`")))?;
        let face = self
            .faces
            .get(at.face)
            .ok_or_else(|| Error::invalid(format!("face {} out of range", at.face)))?;
        Ok(bary_blend(attr.width(), |i| attr.row(face[i] as usize), &at.weights))
    }

    /// Point on the surface addressed by a barycentric coordinate.
    pub fn point_at(&self, at: &BaryCoord) -> Vec3 {
        let [a, b, c] = self.corners(at.face);
        a * at.weights[0] + b * at.weights[1] + c * at.weights[2]
    }
}

/// Barycentric blend of three corner values. Equal corners are returned
/// unchanged, so constant fields survive interpolation bit for bit.
pub fn blend3(v: [f64; 3], w: &[f64; 3]) -> f64 {
    if v[0] == v[1] && v[1] == v[2] {
        v[0]
    } else {
        w[0] * v[0] + w[1] * v[1] + w[2] * v[2]
    }
}

pub(crate) fn bary_blend<'a>(
    width: usize,
    corner: impl Fn(usize) -> &'a [f64],
    w: &[f64; 3],
) -> Vec<f64> {
    let (r0, r1, r2) = (corner(0), corner(1), corner(2));
    (0..width)
        .map(|k| blend3([r0[k], r1[k], r2[k]], w))
        .collect()
}

pub(crate) fn ordered(a: u32, b: u32) -> (u32, u32) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn validate_faces(n: usize, faces: &[[u32; 3]]) -> Result<()> {
    for (fi, f) in faces.iter().enumerate() {
        if let Some(&bad) = f.iter().find(|&&i| i as usize >= n) {
            return Err(Error::invalid(format!(
                "face {fi} references vertex {bad} but mesh has {n} vertices"
            )));
        }
        if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
            return Err(Error::invalid(format!("face {fi} repeats a vertex: {f:?}")));
        }
    }
    Ok(())
}

/// A point on a mesh: face index plus barycentric weights of its corners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaryCoord {
    pub face: usize,
    pub weights: [f64; 3],
}

impl BaryCoord {
    pub fn new(face: usize, weights: [f64; 3]) -> Result<Self> {
        let b = Self { face, weights };
        if !b.is_valid() {
            return Err(Error::invalid(format!("invalid barycentric weights {weights:?}")));
        }
        Ok(b)
    }

    pub fn corner(face: usize, corner: usize) -> Self {
        let mut weights = [0.0; 3];
        weights[corner] = 1.0;
        Self { face, weights }
    }

    pub fn is_valid(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite() && *w >= 0.0)
            && (self.weights.iter().sum::<f64>() - 1.0).abs() <= BARY_SUM_TOL
    }
}
