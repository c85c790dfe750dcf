use super::psnr;
use crate::error::{Error, Result};
use crate::image::{ClassMap, RgbImage, BACKGROUND_CLASS, DEFAULT_HAIR_CLASS};
use crate::mesh::Vec3;
use crate::raster::{Camera, GBuffer};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpConfig {
    /// Visibility tolerance as a fraction of the source frame's depth range.
    pub tau_frac: f64,
    pub hair_class: u8,
}

impl Default for WarpConfig {
    fn default() -> Self {
        Self {
            tau_frac: 0.01,
            hair_class: DEFAULT_HAIR_CLASS,
        }
    }
}

/// One frame of a warp pair: the observed image and segmentation, and the
/// tracked geometry rasterized into `gbuf` through `camera`.
#[derive(Debug, Clone, Copy)]
pub struct FrameView<'a> {
    pub image: &'a RgbImage,
    pub mask: &'a ClassMap,
    pub vertices: &'a [Vec3],
    pub gbuf: &'a GBuffer,
    pub camera: &'a Camera,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WarpResult {
    pub warped: RgbImage,
    /// Occlusion mask: true where the destination surface point was visible
    /// in the source frame and both pixels are face.
    pub valid: Vec<bool>,
}

fn is_face(mask: &ClassMap, i: usize, hair: u8) -> bool {
    let c = mask.data()[i];
    c != BACKGROUND_CLASS && c != hair
}

/// Source image with background and hair pixels set to zero.
fn face_only(image: &RgbImage, mask: &ClassMap, hair: u8) -> RgbImage {
    let mut out = image.clone();
    for (i, p) in out.pixels_mut().iter_mut().enumerate() {
        if !is_face(mask, i, hair) {
            *p = [0.0; 3];
        }
    }
    out
}

fn check_frame(f: &FrameView, w: usize, h: usize, n_faces: usize) -> Result<()> {
    let sizes = [
        (f.image.width(), f.image.height()),
        (f.mask.width(), f.mask.height()),
        (f.gbuf.width(), f.gbuf.height()),
    ];
    if sizes.iter().any(|&s| s != (w, h)) {
        return Err(Error::dim(format!("frame rasters differ in size: {sizes:?}")));
    }
    if f.gbuf.triangles().iter().any(|&t| t != crate::raster::NO_TRIANGLE && t as usize >= n_faces) {
        return Err(Error::dim("G-buffer references faces the mesh does not have"));
    }
    Ok(())
}

/// Warps the source frame onto the destination frame through the tracked
/// geometry. Every destination face pixel's surface point is re-posed with
/// the source vertices, projected through the source camera and bilinearly
/// sampled; each contributing tap must be face in the source segmentation
/// and see the same surface (covered, depth within tolerance), or the pixel
/// is marked occluded.
pub fn warp_image(faces: &[[u32; 3]], src: &FrameView, dst: &FrameView, config: &WarpConfig) -> Result<WarpResult> {
    let (w, h) = (dst.image.width(), dst.image.height());
    check_frame(src, w, h, faces.len())?;
    check_frame(dst, w, h, faces.len())?;
    if src.vertices.len() != dst.vertices.len() {
        return Err(Error::dim("source and destination geometry have different vertex counts"));
    }
    if let Some(f) = faces.iter().find(|f| f.iter().any(|&v| v as usize >= src.vertices.len())) {
        return Err(Error::dim(format!("face {f:?} indexes past the vertex list")));
    }
    let hair = config.hair_class;
    let source = src.image;
    let tau = match src.gbuf.depth_range() {
        Some((lo, hi)) => (config.tau_frac * (hi - lo)).max(1e-6 * lo.abs().max(hi.abs())),
        None => 0.0,
    };
    let proj = src.camera.projector(w, h);
    let mut warped = RgbImage::new(w, h);
    let mut valid = vec![false; w * h];
    for i in 0..w * h {
        let Some((t, bary, _)) = dst.gbuf.sample(i) else {
            continue;
        };
        if !is_face(dst.mask, i, hair) {
            continue;
        }
        let f = faces[t];
        let point: Vec3 = (0..3).map(|k| bary[k] * src.vertices[f[k] as usize]).sum();
        let p = proj.project(&point);
        if !p.in_front {
            continue;
        }
        let u = p.x - 0.5;
        let v = p.y - 0.5;
        let (x0, y0) = (u.floor(), v.floor());
        let (fx, fy) = (u - x0, v - y0);
        let taps = [
            (x0, y0, (1.0 - fx) * (1.0 - fy)),
            (x0 + 1.0, y0, fx * (1.0 - fy)),
            (x0, y0 + 1.0, (1.0 - fx) * fy),
            (x0 + 1.0, y0 + 1.0, fx * fy),
        ];
        let mut color = [0.0f64; 3];
        let mut ok = true;
        for (tx, ty, wt) in taps {
            if wt == 0.0 {
                continue;
            }
            if tx < 0.0 || ty < 0.0 || tx >= w as f64 || ty >= h as f64 {
                ok = false;
                break;
            }
            let j = ty as usize * w + tx as usize;
            if !is_face(src.mask, j, hair) {
                ok = false;
                break;
            }
            match src.gbuf.sample(j) {
                Some((_, _, depth)) if (depth - p.depth).abs() <= tau => {
                    let s = source.pixels()[j];
                    for c in 0..3 {
                        color[c] += wt * s[c] as f64;
                    }
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            warped.pixels_mut()[i] = color.map(|c| c as f32);
            valid[i] = true;
        }
    }
    Ok(WarpResult { warped, valid })
}

/// PSNR between the destination frame and its warp from the source, over
/// the occlusion mask, with background and hair removed from both images.
pub fn warp_psnr(faces: &[[u32; 3]], src: &FrameView, dst: &FrameView, config: &WarpConfig) -> Result<f64> {
    let r = warp_image(faces, src, dst, config)?;
    let target = face_only(dst.image, dst.mask, config.hair_class);
    psnr(&target, &r.warped, &r.valid)
}
