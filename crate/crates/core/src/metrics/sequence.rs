use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::warp::{warp_image, FrameView, WarpConfig};
use super::{interval_frames, landmark_l1, psnr, semantic_iou, DEFAULT_INTERVAL_MS, PSNR_CAP_DB};
use crate::deform::DeformModel;
use crate::error::{Error, Result};
use crate::image::{ClassMap, RgbImage};
use crate::mesh::Vec3;
use crate::raster::{rasterize, render_semantic, GBuffer, RasterOptions};
use crate::track::ParamTrack;

pub const REPORT_SCHEMA: u32 = 1;

pub fn frame_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("frame_{i:06}.png"))
}

pub fn mask_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("mask_{i:06}.png"))
}

pub fn landmark_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("lmk_{i:06}.txt"))
}

/// Reads `x y` pixel coordinates, one landmark per line.
pub fn load_landmarks(path: &Path) -> Result<Vec<[f64; 2]>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse {
                path: path.into(),
                line: n + 1,
                message: format!("expected `x y`, got `{line}`"),
            })?;
        if vals.len() != 2 {
            return Err(Error::Parse {
                path: path.into(),
                line: n + 1,
                message: format!("expected 2 values, got {}", vals.len()),
            });
        }
        out.push([vals[0], vals[1]]);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub interval_ms: f64,
    /// Overrides the track's frame rate when set.
    pub fps: Option<f64>,
    pub warp: WarpConfig,
    pub raster: RasterOptions,
    pub compute_iou: bool,
    pub compute_warp: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            interval_ms: DEFAULT_INTERVAL_MS,
            fps: None,
            warp: WarpConfig::default(),
            raster: RasterOptions::default(),
            compute_iou: true,
            compute_warp: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportConfig {
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    pub interval_ms: f64,
    pub interval_frames: usize,
    pub tau_frac: f64,
    pub hair_class: u8,
    pub backface_culling: bool,
    pub psnr_range: &'static str,
    pub psnr_cap_db: f64,
    pub iou_absent_classes: &'static str,
}

/// Per-item values (null where undefined) and their mean over defined items.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSet {
    pub per_item: Vec<Option<f64>>,
    pub mean: Option<f64>,
    pub count: usize,
}

impl MetricSet {
    fn from_items(per_item: Vec<Option<f64>>) -> Self {
        let defined: Vec<f64> = per_item.iter().flatten().copied().collect();
        let mean = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
        Self {
            count: defined.len(),
            per_item,
            mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WarpSet {
    pub pairs: Vec<[usize; 2]>,
    pub per_pair: Vec<Option<f64>>,
    pub mean: Option<f64>,
    pub count: usize,
    /// Pairs with no visible overlap, left out of the mean.
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub schema: u32,
    pub frames: usize,
    pub config: ReportConfig,
    pub semantic_iou: Option<MetricSet>,
    pub warp_psnr: Option<WarpSet>,
    pub landmark_l1: Option<MetricSet>,
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

fn count_matching(dir: &Path, prefix: &str, suffix: &str) -> Result<usize> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut n = 0;
    for e in entries {
        let e = e.map_err(|e| Error::io(dir, e))?;
        let name = e.file_name();
        let name = name.to_string_lossy();
        if name.starts_with(prefix) && name.ends_with(suffix) {
            n += 1;
        }
    }
    Ok(n)
}

struct PosedFrame {
    vertices: Vec<Vec3>,
    gbuf: GBuffer,
}

/// Poses and rasterizes every frame of the track, then computes per-frame
/// IoU, per-pair warp PSNR and, where landmark files exist, landmark L1.
pub fn evaluate_sequence(
    model: &DeformModel,
    track: &ParamTrack,
    frames_dir: &Path,
    masks_dir: &Path,
    options: &EvalOptions,
) -> Result<MetricReport> {
    let n = track.len();
    if n == 0 {
        return Err(Error::invalid("track has no frames"));
    }
    let mut missing: Vec<String> = Vec::new();
    for i in 0..n {
        for p in [frame_path(frames_dir, i), mask_path(masks_dir, i)] {
            if !p.is_file() {
                missing.push(p.display().to_string());
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::invalid(format!("missing input files: {}", missing.join(", "))));
    }
    let n_frames = count_matching(frames_dir, "frame_", ".png")?;
    let n_masks = count_matching(masks_dir, "mask_", ".png")?;
    if n_frames != n_masks || n_frames != n {
        return Err(Error::dim(format!(
            "{n_frames} frames and {n_masks} masks for a track of {n} frames"
        )));
    }
    let annotation = match (options.compute_iou, model.annotation()) {
        (true, None) => return Err(Error::invalid("model has no semantic labels")),
        (_, a) => a,
    };
    let first_mask = ClassMap::load_png(mask_path(masks_dir, 0))?;
    let (width, height) = (first_mask.width(), first_mask.height());
    let fps = options.fps.unwrap_or(track.fps());
    let k = interval_frames(fps, options.interval_ms)?;
    let pairs = if options.compute_warp {
        super::sample_pairs(n, fps, options.interval_ms)?
    } else {
        Vec::new()
    };
    let hair = options.warp.hair_class;
    let faces = model.faces();

    let per_frame: Vec<(Option<f64>, Option<f64>, Option<PosedFrame>)> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<_> {
            let f = track.frame(i)?;
            let vertices = model.pose_mesh(&f.pose, &f.expr)?;
            let gbuf = rasterize(faces, &vertices, &f.camera, width, height, &options.raster)?;
            let iou = match annotation {
                Some(a) if options.compute_iou => {
                    let gt = ClassMap::load_png(mask_path(masks_dir, i))?;
                    if (gt.width(), gt.height()) != (width, height) {
                        return Err(Error::dim(format!("mask {i} is not {width}x{height}")));
                    }
                    let pred = render_semantic(&gbuf, faces, a)?;
                    let classes: Vec<u8> = (0..a.class_count() as u8).collect();
                    match semantic_iou(&pred, &gt, &classes, Some(hair)) {
                        Ok(v) => Some(v),
                        Err(e) => {
                            log::warn!("frame {i}: {e}");
                            None
                        }
                    }
                }
                _ => None,
            };
            let lmk_file = landmark_path(frames_dir, i);
            let lmk = match model.landmarks() {
                Some(ids) if lmk_file.is_file() => {
                    let gt = load_landmarks(&lmk_file)?;
                    let proj = f.camera.projector(width, height);
                    let pred: Vec<[f64; 2]> = ids
                        .iter()
                        .map(|&v| {
                            let p = proj.project(&vertices[v as usize]);
                            [p.x, p.y]
                        })
                        .collect();
                    Some(landmark_l1(&pred, &gt, width, height)?)
                }
                _ => None,
            };
            let keep = pairs.iter().any(|&(s, t)| s == i || t == i);
            Ok((iou, lmk, keep.then_some(PosedFrame { vertices, gbuf })))
        })
        .collect::<Result<_>>()?;

    let warp = if options.compute_warp {
        let posed = |i: usize| per_frame[i].2.as_ref().expect("pair frames are kept");
        let values: Vec<Option<f64>> = pairs
            .par_iter()
            .map(|&(s, t)| -> Result<Option<f64>> {
                let (img_s, img_t) = (RgbImage::load_png(frame_path(frames_dir, s))?, RgbImage::load_png(frame_path(frames_dir, t))?);
                let (mask_s, mask_t) = (ClassMap::load_png(mask_path(masks_dir, s))?, ClassMap::load_png(mask_path(masks_dir, t))?);
                let (ps, pt) = (posed(s), posed(t));
                let src = FrameView {
                    image: &img_s,
                    mask: &mask_s,
                    vertices: &ps.vertices,
                    gbuf: &ps.gbuf,
                    camera: &track.frame(s)?.camera,
                };
                let dst = FrameView {
                    image: &img_t,
                    mask: &mask_t,
                    vertices: &pt.vertices,
                    gbuf: &pt.gbuf,
                    camera: &track.frame(t)?.camera,
                };
                let r = warp_image(faces, &src, &dst, &options.warp)?;
                if !r.valid.iter().any(|&v| v) {
                    log::warn!("pair ({s}, {t}) has no visible overlap; skipped");
                    return Ok(None);
                }
                let mut target = img_t.clone();
                for (i, p) in target.pixels_mut().iter_mut().enumerate() {
                    let c = mask_t.data()[i];
                    if c == crate::image::BACKGROUND_CLASS || c == hair {
                        *p = [0.0; 3];
                    }
                }
                Ok(Some(psnr(&target, &r.warped, &r.valid)?))
            })
            .collect::<Result<_>>()?;
        let set = MetricSet::from_items(values);
        Some(WarpSet {
            pairs: pairs.iter().map(|&(s, t)| [s, t]).collect(),
            skipped: set.per_item.len() - set.count,
            per_pair: set.per_item,
            mean: set.mean,
            count: set.count,
        })
    } else {
        None
    };

    let lmk: Vec<Option<f64>> = per_frame.iter().map(|f| f.1).collect();
    Ok(MetricReport {
        schema: REPORT_SCHEMA,
        frames: n,
        config: ReportConfig {
            width,
            height,
            fps,
            interval_ms: options.interval_ms,
            interval_frames: k,
            tau_frac: options.warp.tau_frac,
            hair_class: hair,
            backface_culling: options.raster.cull_backfaces,
            psnr_range: "[0,1]",
            psnr_cap_db: PSNR_CAP_DB,
            iou_absent_classes: "skipped",
        },
        semantic_iou: options
            .compute_iou
            .then(|| MetricSet::from_items(per_frame.iter().map(|f| f.0).collect())),
        warp_psnr: warp,
        landmark_l1: lmk.iter().any(Option::is_some).then(|| MetricSet::from_items(lmk)),
    })
}
