//! Isotropic remeshing (split long edges, collapse short ones, flip toward
//! regular valence, tangential smoothing projected onto the input surface)
//! and barycentric transfer of model tables onto the new topology.

use std::collections::BTreeSet;

use crate::appearance::VertexMaterials;
use crate::deform::{DeformModel, ModelParts};
use crate::error::{Error, Result};
use crate::fwb::Container;
use crate::mesh::{blend3, closest_point, BaryCoord, SemanticAnnotation, TriMesh, Vec3, DEGENERATE_AREA};
use crate::raster::majority_class;

pub const DEFAULT_ITERATIONS: usize = 5;

#[derive(Debug, Clone)]
pub struct RemeshResult {
    pub mesh: TriMesh,
    /// Closest point on the input surface of every output vertex.
    pub provenance: Vec<BaryCoord>,
}

struct Work {
    pos: Vec<Vec3>,
    faces: Vec<[u32; 3]>,
    face_alive: Vec<bool>,
    vfaces: Vec<Vec<u32>>,
    v_alive: Vec<bool>,
}

fn cross(p: &[Vec3], f: [u32; 3]) -> Vec3 {
    let [a, b, c] = f.map(|v| p[v as usize]);
    (b - a).cross(&(c - a))
}

impl Work {
    fn new(mesh: &TriMesh) -> Self {
        let mut vfaces = vec![Vec::new(); mesh.vertex_count()];
        for (fi, f) in mesh.faces().iter().enumerate() {
            for &v in f {
                vfaces[v as usize].push(fi as u32);
            }
        }
        Self {
            pos: mesh.vertices().to_vec(),
            faces: mesh.faces().to_vec(),
            face_alive: vec![true; mesh.face_count()],
            vfaces,
            v_alive: vec![true; mesh.vertex_count()],
        }
    }

    fn live_vertex_count(&self) -> usize {
        self.v_alive.iter().filter(|a| **a).count()
    }

    fn edge_faces(&self, a: u32, b: u32) -> Vec<u32> {
        let mut out: Vec<u32> = self.vfaces[a as usize]
            .iter()
            .copied()
            .filter(|&f| self.faces[f as usize].contains(&b))
            .collect();
        out.sort_unstable();
        out
    }

    fn neighbors(&self, v: u32) -> Vec<u32> {
        let set: BTreeSet<u32> = self.vfaces[v as usize]
            .iter()
            .flat_map(|&f| self.faces[f as usize])
            .filter(|&u| u != v)
            .collect();
        set.into_iter().collect()
    }

    fn is_boundary_vertex(&self, v: u32) -> bool {
        self.neighbors(v).iter().any(|&n| self.edge_faces(v, n).len() == 1)
    }

    fn edges(&self) -> Vec<(u32, u32)> {
        let mut set = BTreeSet::new();
        for (f, alive) in self.faces.iter().zip(&self.face_alive) {
            if *alive {
                for k in 0..3 {
                    let (a, b) = (f[k], f[(k + 1) % 3]);
                    set.insert((a.min(b), a.max(b)));
                }
            }
        }
        set.into_iter().collect()
    }

    fn length(&self, a: u32, b: u32) -> f64 {
        (self.pos[a as usize] - self.pos[b as usize]).norm()
    }

    fn set_face(&mut self, fi: u32, new: [u32; 3]) {
        for v in self.faces[fi as usize] {
            self.vfaces[v as usize].retain(|&f| f != fi);
        }
        self.faces[fi as usize] = new;
        for v in new {
            self.vfaces[v as usize].push(fi);
        }
    }

    fn add_face(&mut self, f: [u32; 3]) {
        let fi = self.faces.len() as u32;
        self.faces.push(f);
        self.face_alive.push(true);
        for v in f {
            self.vfaces[v as usize].push(fi);
        }
    }

    fn remove_face(&mut self, fi: u32) {
        for v in self.faces[fi as usize] {
            self.vfaces[v as usize].retain(|&f| f != fi);
        }
        self.face_alive[fi as usize] = false;
    }

    /// Face rotated so that it reads `(x, y, c)` with `{x, y} = {a, b}`.
    fn rotate_to_edge(f: [u32; 3], a: u32, b: u32) -> [u32; 3] {
        for k in 0..3 {
            let (x, y) = (f[k], f[(k + 1) % 3]);
            if (x == a && y == b) || (x == b && y == a) {
                return [x, y, f[(k + 2) % 3]];
            }
        }
        unreachable!("face does not contain the edge")
    }

    fn split(&mut self, a: u32, b: u32) {
        let m = self.pos.len() as u32;
        self.pos.push((self.pos[a as usize] + self.pos[b as usize]) * 0.5);
        self.v_alive.push(true);
        self.vfaces.push(Vec::new());
        for fi in self.edge_faces(a, b) {
            let [x, y, c] = Self::rotate_to_edge(self.faces[fi as usize], a, b);
            self.set_face(fi, [x, m, c]);
            self.add_face([m, y, c]);
        }
    }

    fn try_collapse(&mut self, a: u32, b: u32, max_len: f64) -> bool {
        let ef = self.edge_faces(a, b);
        if ef.is_empty() || self.live_vertex_count() <= 4 {
            return false;
        }
        let (ba, bb) = (self.is_boundary_vertex(a), self.is_boundary_vertex(b));
        let edge_boundary = ef.len() == 1;
        if ba && bb && !edge_boundary {
            return false;
        }
        // `keep` survives; a boundary vertex is never moved off the boundary.
        let (keep, gone) = if ba && !bb { (a, b) } else { (b, a) };
        let target = if ba != bb {
            self.pos[keep as usize]
        } else {
            (self.pos[a as usize] + self.pos[b as usize]) * 0.5
        };
        let na = self.neighbors(a);
        let nb = self.neighbors(b);
        let common = na.iter().filter(|v| nb.contains(v)).count();
        let opposite: Vec<u32> = ef
            .iter()
            .map(|&f| Self::rotate_to_edge(self.faces[f as usize], a, b)[2])
            .collect();
        if common != opposite.len() {
            return false;
        }
        if opposite.iter().any(|&o| self.neighbors(o).len() <= 3) {
            return false;
        }
        if na
            .iter()
            .chain(&nb)
            .filter(|&&v| v != a && v != b)
            .any(|&v| (self.pos[v as usize] - target).norm() >= max_len)
        {
            return false;
        }
        let mut trial = self.pos.clone();
        trial[keep as usize] = target;
        for &fi in self.vfaces[a as usize].iter().chain(&self.vfaces[b as usize]) {
            if ef.contains(&fi) {
                continue;
            }
            let f = self.faces[fi as usize];
            let moved = f.map(|v| if v == gone { keep } else { v });
            let before = cross(&self.pos, f);
            let after = cross(&trial, moved);
            if after.norm() <= 2.0 * DEGENERATE_AREA || after.dot(&before) <= 0.0 {
                return false;
            }
        }
        for &fi in &ef {
            self.remove_face(fi);
        }
        for fi in self.vfaces[gone as usize].clone() {
            let moved = self.faces[fi as usize].map(|v| if v == gone { keep } else { v });
            self.set_face(fi, moved);
        }
        self.pos[keep as usize] = target;
        self.v_alive[gone as usize] = false;
        true
    }

    fn try_flip(&mut self, a: u32, b: u32) -> bool {
        let ef = self.edge_faces(a, b);
        if ef.len() != 2 {
            return false;
        }
        let oriented = |f: [u32; 3]| (0..3).any(|k| f[k] == a && f[(k + 1) % 3] == b);
        let (f1, f2) = if oriented(self.faces[ef[0] as usize]) {
            (ef[0], ef[1])
        } else {
            (ef[1], ef[0])
        };
        if !oriented(self.faces[f1 as usize]) || oriented(self.faces[f2 as usize]) {
            return false;
        }
        let c = Self::rotate_to_edge(self.faces[f1 as usize], a, b)[2];
        let d = Self::rotate_to_edge(self.faces[f2 as usize], a, b)[2];
        if c == d || self.neighbors(c).contains(&d) {
            return false;
        }
        let target = |v: u32| if self.is_boundary_vertex(v) { 4i64 } else { 6 };
        let val = |v: u32| self.neighbors(v).len() as i64;
        let dev = |v: u32, delta: i64| (val(v) + delta - target(v)).pow(2);
        let before = dev(a, 0) + dev(b, 0) + dev(c, 0) + dev(d, 0);
        let after = dev(a, -1) + dev(b, -1) + dev(c, 1) + dev(d, 1);
        if after >= before {
            return false;
        }
        let (n1, n2) = ([c, a, d], [c, d, b]);
        let old = cross(&self.pos, self.faces[f1 as usize]) + cross(&self.pos, self.faces[f2 as usize]);
        let (x1, x2) = (cross(&self.pos, n1), cross(&self.pos, n2));
        if x1.norm() <= 2.0 * DEGENERATE_AREA
            || x2.norm() <= 2.0 * DEGENERATE_AREA
            || x1.dot(&x2) <= 0.0
            || x1.dot(&old) <= 0.0
            || x2.dot(&old) <= 0.0
        {
            return false;
        }
        self.set_face(f1, n1);
        self.set_face(f2, n2);
        true
    }

    fn vertex_normal(&self, v: u32) -> Vec3 {
        let n: Vec3 = self.vfaces[v as usize]
            .iter()
            .map(|&f| cross(&self.pos, self.faces[f as usize]))
            .sum();
        if n.norm() > 0.0 {
            n.normalize()
        } else {
            Vec3::z()
        }
    }

    fn smooth_and_project(&mut self, input: &TriMesh) -> Result<()> {
        let n = self.pos.len();
        let mut next = self.pos.clone();
        for v in 0..n as u32 {
            if !self.v_alive[v as usize] || self.vfaces[v as usize].is_empty() || self.is_boundary_vertex(v) {
                continue;
            }
            let nb = self.neighbors(v);
            let q: Vec3 = nb.iter().map(|&u| self.pos[u as usize]).sum::<Vec3>() / nb.len() as f64;
            let p = self.pos[v as usize];
            let d = q - p;
            let normal = self.vertex_normal(v);
            next[v as usize] = p + d - normal * normal.dot(&d);
        }
        for v in 0..n {
            if self.v_alive[v] {
                next[v] = input.point_at(&closest_point(input, &next[v])?.0);
            }
        }
        self.pos = next;
        Ok(())
    }

    fn into_mesh(self) -> Result<TriMesh> {
        let mut remap = vec![u32::MAX; self.pos.len()];
        let mut vertices = Vec::new();
        for (v, alive) in self.v_alive.iter().enumerate() {
            if *alive {
                remap[v] = vertices.len() as u32;
                vertices.push(self.pos[v]);
            }
        }
        let faces = self
            .faces
            .iter()
            .zip(&self.face_alive)
            .filter(|(_, a)| **a)
            .map(|(f, _)| f.map(|v| remap[v as usize]))
            .collect();
        TriMesh::new(vertices, faces)
    }
}

/// Remeshes toward edge length `target`. Each iteration splits edges longer
/// than `4/3 target`, collapses edges shorter than `4/5 target` where that is
/// topologically and geometrically safe, flips edges that reduce valence
/// deviation, then smooths tangentially and projects onto the input surface.
pub fn remesh(mesh: &TriMesh, target: f64, iterations: usize) -> Result<RemeshResult> {
    if !(target > 0.0 && target.is_finite()) {
        return Err(Error::invalid(format!("target edge length must be positive, got {target}")));
    }
    mesh.check_manifold()?;
    if mesh.face_count() == 0 {
        return Err(Error::invalid("cannot remesh a mesh without faces"));
    }
    let (lo, hi) = (0.8 * target, 4.0 / 3.0 * target);
    let mut w = Work::new(mesh);
    for it in 0..iterations {
        let mut splits = 0;
        for (a, b) in w.edges() {
            if w.length(a, b) > hi {
                w.split(a, b);
                splits += 1;
            }
        }
        let mut collapses = 0;
        for (a, b) in w.edges() {
            if w.v_alive[a as usize]
                && w.v_alive[b as usize]
                && !w.edge_faces(a, b).is_empty()
                && w.length(a, b) < lo
                && w.try_collapse(a, b, hi)
            {
                collapses += 1;
            }
        }
        let mut flips = 0;
        for (a, b) in w.edges() {
            if w.try_flip(a, b) {
                flips += 1;
            }
        }
        w.smooth_and_project(mesh)?;
        log::debug!("remesh iteration {it}: {splits} splits, {collapses} collapses, {flips} flips");
    }
    let out = w.into_mesh()?;
    let provenance = out
        .vertices()
        .iter()
        .map(|p| closest_point(mesh, p).map(|(b, _)| b))
        .collect::<Result<_>>()?;
    Ok(RemeshResult { mesh: out, provenance })
}

/// Fraction of edges whose length lies in `[4/5 target, 4/3 target]`.
pub fn edge_band_fraction(mesh: &TriMesh, target: f64) -> f64 {
    let edges = mesh.edges();
    if edges.is_empty() {
        return 0.0;
    }
    let inside = edges
        .iter()
        .filter(|&&(a, b)| {
            let l = (mesh.vertex(a) - mesh.vertex(b)).norm();
            l >= 0.8 * target && l <= 4.0 / 3.0 * target
        })
        .count();
    inside as f64 / edges.len() as f64
}

pub fn provenance_to_container(c: &mut Container, provenance: &[BaryCoord]) -> Result<()> {
    let n = provenance.len();
    c.put_u32("prov_face", &[n], provenance.iter().map(|b| b.face as u32).collect())?;
    c.put_f64("prov_bary", &[n, 3], provenance.iter().flat_map(|b| b.weights).collect())
}

pub fn provenance_from_container(c: &Container) -> Result<Vec<BaryCoord>> {
    let (_, faces) = c.u32("prov_face")?;
    let (_, w) = c.f64("prov_bary")?;
    if w.len() != faces.len() * 3 {
        return Err(Error::Container("prov_face and prov_bary lengths disagree".into()));
    }
    faces
        .iter()
        .zip(w.chunks_exact(3))
        .map(|(&f, w)| BaryCoord::new(f as usize, [w[0], w[1], w[2]]))
        .collect()
}

fn blend_rows(table: &[f64], width: usize, corners: [u32; 3], w: [f64; 3]) -> impl Iterator<Item = f64> + '_ {
    (0..width).map(move |j| blend3(corners.map(|c| table[c as usize * width + j]), &w))
}

/// Transfers every per-vertex table of `model` onto `new_mesh`, whose
/// vertex `i` sits at `provenance[i]` on the model's surface. Skin weights
/// are renormalized, labels take the barycentric-weight majority, and each
/// old vertex's joint-regressor mass moves to the corners of its closest
/// point on the new surface.
pub fn reproject_tables(model: &DeformModel, new_mesh: &TriMesh, provenance: &[BaryCoord]) -> Result<DeformModel> {
    let n_new = new_mesh.vertex_count();
    if provenance.len() != n_new {
        return Err(Error::invalid(format!(
            "provenance covers {} of {n_new} vertices",
            provenance.len()
        )));
    }
    let old_faces = model.faces();
    if let Some(b) = provenance.iter().find(|b| b.face >= old_faces.len() || !b.is_valid()) {
        return Err(Error::invalid(format!("invalid provenance entry {b:?}")));
    }
    let n_old = model.vertex_count();
    let n_e = model.n_expr();
    let n_j = model.n_joints();
    let n_p = model.n_pose_features();
    let corners = |b: &BaryCoord| old_faces[b.face];

    let mut expr_basis = Vec::with_capacity(n_new * 3 * n_e);
    let mut pose_correctives = Vec::with_capacity(n_new * 3 * n_p);
    let mut skin_weights = Vec::with_capacity(n_new * n_j);
    for b in provenance {
        let c = corners(b);
        expr_basis.extend(blend_rows(model.expr_basis(), 3 * n_e, c, b.weights));
        pose_correctives.extend(blend_rows(model.pose_correctives_table(), 3 * n_p, c, b.weights));
        let row: Vec<f64> = blend_rows(model.skin_weights(), n_j, c, b.weights).map(|v| v.max(0.0)).collect();
        let w = model.skin_weights();
        if c.iter().all(|&v| w[v as usize * n_j..(v as usize + 1) * n_j] == row[..]) {
            skin_weights.extend(row);
        } else {
            let s: f64 = row.iter().sum();
            skin_weights.extend(row.iter().map(|v| v / s));
        }
    }

    let annotation = match model.annotation() {
        Some(a) => Some(SemanticAnnotation::new(
            a.classes().to_vec(),
            provenance
                .iter()
                .map(|b| majority_class(corners(b).map(|v| a.labels()[v as usize]), b.weights))
                .collect(),
        )?),
        None => None,
    };

    let materials = match model.materials() {
        Some(m) => {
            let mut out = VertexMaterials {
                albedo: Vec::with_capacity(n_new),
                roughness: Vec::with_capacity(n_new),
                spec_intensity: Vec::with_capacity(n_new),
            };
            for b in provenance {
                let s = m.interpolate(corners(b), b.weights)?;
                out.albedo.push(s.albedo);
                out.roughness.push(s.roughness);
                out.spec_intensity.push(s.spec_intensity);
            }
            Some(out)
        }
        None => None,
    };

    let old_j = model.joint_regressor();
    let mut joint_regressor = vec![0.0; n_j * n_new];
    let mut nearest_vertex = vec![0u32; n_old];
    for (u, p) in model.canonical().iter().enumerate() {
        let (b, _) = closest_point(new_mesh, p)?;
        let f = new_mesh.faces()[b.face];
        for j in 0..n_j {
            let mass = old_j[j * n_old + u];
            if mass != 0.0 {
                for k in 0..3 {
                    joint_regressor[j * n_new + f[k] as usize] += mass * b.weights[k];
                }
            }
        }
        let mut best = (f64::INFINITY, 0u32);
        for &v in &f {
            let d = (new_mesh.vertex(v) - p).norm();
            if d < best.0 || (d == best.0 && v < best.1) {
                best = (d, v);
            }
        }
        nearest_vertex[u] = best.1;
    }
    for j in 0..n_j {
        let old_sum: f64 = old_j[j * n_old..(j + 1) * n_old].iter().sum();
        let row = &mut joint_regressor[j * n_new..(j + 1) * n_new];
        let new_sum: f64 = row.iter().sum();
        if new_sum != 0.0 {
            row.iter_mut().for_each(|v| *v *= old_sum / new_sum);
        }
    }

    let landmarks = model
        .landmarks()
        .map(|l| l.iter().map(|&v| nearest_vertex[v as usize]).collect());

    DeformModel::new(ModelParts {
        faces: new_mesh.faces().to_vec(),
        canonical: new_mesh.vertices().to_vec(),
        n_expr: n_e,
        expr_basis,
        pose_correctives,
        skin_weights,
        joint_regressor,
        parents: model.parents().to_vec(),
        annotation,
        landmarks,
        materials,
        shape_metadata: model.parts().shape_metadata.clone(),
    })
}
