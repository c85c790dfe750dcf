use ndarray::Array2;

use super::camera::Camera;
use super::rasterize::GBuffer;
use crate::appearance::{light_input, reflect, shade, LightEvaluator, VertexMaterials, LIGHT_INPUT};
use crate::error::{Error, Result};
use crate::image::{ClassMap, RgbImage, BACKGROUND_CLASS};
use crate::mesh::{vertex_normals, SemanticAnnotation, TriMesh, Vec3};

fn check_faces(gbuf: &GBuffer, n_faces: usize) -> Result<()> {
    if gbuf.triangles().iter().any(|&t| t != super::NO_TRIANGLE && t as usize >= n_faces) {
        return Err(Error::dim(format!("G-buffer references faces beyond {n_faces}")));
    }
    Ok(())
}

/// Class of the corner-weight majority at every covered pixel: weights of
/// corners sharing a class are summed and the largest sum wins, ties going to
/// the lower class index. Uncovered pixels get [`BACKGROUND_CLASS`].
pub fn render_semantic(gbuf: &GBuffer, faces: &[[u32; 3]], annotation: &SemanticAnnotation) -> Result<ClassMap> {
    check_faces(gbuf, faces.len())?;
    let labels = annotation.labels();
    if let Some(f) = faces.iter().find(|f| f.iter().any(|&v| v as usize >= labels.len())) {
        return Err(Error::dim(format!(
            "annotation has {} labels but face {f:?} needs more",
            labels.len()
        )));
    }
    let mut out = ClassMap::filled(gbuf.width(), gbuf.height(), BACKGROUND_CLASS);
    for (i, px) in out.data_mut().iter_mut().enumerate() {
        if let Some((t, bary, _)) = gbuf.sample(i) {
            *px = majority_class(faces[t].map(|v| labels[v as usize]), bary) as u8;
        }
    }
    Ok(out)
}

pub fn majority_class(labels: [u32; 3], bary: [f64; 3]) -> u32 {
    let mut best = (labels[0], f64::NEG_INFINITY);
    let mut candidates = labels;
    candidates.sort_unstable();
    for c in candidates {
        let w: f64 = (0..3).filter(|&k| labels[k] == c).map(|k| bary[k]).sum();
        if w > best.1 {
            best = (c, w);
        }
    }
    best.0
}

/// Deferred shading of every covered pixel with the given video's lights.
/// `vertices` are the posed positions the G-buffer was rasterized from.
pub fn render_shaded(
    gbuf: &GBuffer,
    mesh: &TriMesh,
    materials: &VertexMaterials,
    light: &LightEvaluator,
    video: usize,
    cam: &Camera,
) -> Result<RgbImage> {
    check_faces(gbuf, mesh.face_count())?;
    if materials.len() != mesh.vertex_count() {
        return Err(Error::dim(format!(
            "{} material entries for {} vertices",
            materials.len(),
            mesh.vertex_count()
        )));
    }
    let lights = light.video(video)?;
    let normals = vertex_normals(mesh).normals;
    let covered: Vec<usize> = (0..gbuf.triangles().len()).filter(|&i| gbuf.is_covered(i)).collect();
    let mut out = RgbImage::new(gbuf.width(), gbuf.height());
    if covered.is_empty() {
        return Ok(out);
    }
    let mut diffuse_in = Array2::zeros((covered.len(), LIGHT_INPUT));
    let mut specular_in = Array2::zeros((covered.len(), LIGHT_INPUT));
    let mut samples = Vec::with_capacity(covered.len());
    for (row, &i) in covered.iter().enumerate() {
        let (t, w, _) = gbuf.sample(i).unwrap();
        let f = mesh.faces()[t];
        let point: Vec3 = (0..3).map(|k| w[k] * mesh.vertices()[f[k] as usize]).sum();
        let n: Vec3 = (0..3).map(|k| w[k] * normals[f[k] as usize]).sum();
        let n = if n.norm() > 0.0 { n.normalize() } else { Vec3::z() };
        let material = materials.interpolate(f, w)?;
        let omega = reflect(&cam.view_direction(&point), &n)?;
        diffuse_in.row_mut(row).assign(&ndarray::ArrayView1::from(&light_input(&n, 1.0)));
        specular_in
            .row_mut(row)
            .assign(&ndarray::ArrayView1::from(&light_input(&omega, material.roughness)));
        samples.push(material);
    }
    let l_d = lights.diffuse.forward_batch(diffuse_in.view())?;
    let l_s = lights.specular.forward_batch(specular_in.view())?;
    for (row, &i) in covered.iter().enumerate() {
        let d = [l_d[[row, 0]], l_d[[row, 1]], l_d[[row, 2]]];
        let s = [l_s[[row, 0]], l_s[[row, 1]], l_s[[row, 2]]];
        let c = shade(&samples[row], &d, &s);
        out.pixels_mut()[i] = c.map(|v| v as f32);
    }
    Ok(out)
}

/// Interpolated unit normals mapped to `(n + 1) / 2`; background black.
pub fn render_normals(gbuf: &GBuffer, mesh: &TriMesh) -> Result<RgbImage> {
    check_faces(gbuf, mesh.face_count())?;
    let normals = vertex_normals(mesh).normals;
    let mut out = RgbImage::new(gbuf.width(), gbuf.height());
    for (i, px) in out.pixels_mut().iter_mut().enumerate() {
        if let Some((t, w, _)) = gbuf.sample(i) {
            let f = mesh.faces()[t];
            let n: Vec3 = (0..3).map(|k| w[k] * normals[f[k] as usize]).sum();
            let n = if n.norm() > 0.0 { n.normalize() } else { Vec3::z() };
            *px = [0, 1, 2].map(|c| ((n[c] + 1.0) / 2.0) as f32);
        }
    }
    Ok(out)
}

/// Depth as gray, nearest covered pixel white and farthest dark gray;
/// background black.
pub fn render_depth(gbuf: &GBuffer) -> RgbImage {
    let mut out = RgbImage::new(gbuf.width(), gbuf.height());
    let Some((lo, hi)) = gbuf.depth_range() else {
        return out;
    };
    let span = if hi > lo { hi - lo } else { 1.0 };
    for (i, px) in out.pixels_mut().iter_mut().enumerate() {
        if let Some((_, _, d)) = gbuf.sample(i) {
            *px = [(1.0 - 0.8 * (d - lo) / span) as f32; 3];
        }
    }
    out
}
