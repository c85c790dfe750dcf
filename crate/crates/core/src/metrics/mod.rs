//! Posed-geometry tracking metrics: semantic IoU, geometry-based warp PSNR
//! and landmark L1, plus whole-sequence evaluation.

mod sequence;
mod warp;

pub use sequence::{
    evaluate_sequence, frame_path, landmark_path, load_landmarks, mask_path, EvalOptions, MetricReport, MetricSet,
    ReportConfig, WarpSet, REPORT_SCHEMA,
};
pub use warp::{warp_image, warp_psnr, FrameView, WarpConfig, WarpResult};

use crate::error::{Error, Result};
use crate::image::{ClassMap, RgbImage};

pub const PSNR_CAP_DB: f64 = 99.0;
pub const PSNR_CAP_MSE: f64 = 1e-10;
pub const DEFAULT_INTERVAL_MS: f64 = 170.0;

/// Mean over classes of per-class intersection over union. Pixels whose
/// ground-truth value is `exclude` (hair) are ignored. Classes absent from
/// both maps are skipped; a class present only in `pred` scores 0.
pub fn semantic_iou(pred: &ClassMap, gt: &ClassMap, classes: &[u8], exclude: Option<u8>) -> Result<f64> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(Error::dim(format!(
            "class maps are {}x{} and {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    let mut inter = vec![0u64; 256];
    let mut union = vec![0u64; 256];
    let mut wanted = [false; 256];
    for &c in classes {
        wanted[c as usize] = true;
    }
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        if Some(g) == exclude {
            continue;
        }
        if p == g {
            inter[p as usize] += 1;
            union[p as usize] += 1;
        } else {
            union[p as usize] += 1;
            union[g as usize] += 1;
        }
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for c in 0..256 {
        if wanted[c] && union[c] > 0 {
            sum += inter[c] as f64 / union[c] as f64;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::invalid("no class is present in either map"));
    }
    Ok(sum / count as f64)
}

/// `10 log10(1 / MSE)` over masked pixels of images with values in [0, 1];
/// MSE below [`PSNR_CAP_MSE`] reports [`PSNR_CAP_DB`].
pub fn psnr(a: &RgbImage, b: &RgbImage, mask: &[bool]) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() || mask.len() != a.pixels().len() {
        return Err(Error::dim("images and mask differ in size"));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for ((p, q), &m) in a.pixels().iter().zip(b.pixels()).zip(mask) {
        if m {
            for c in 0..3 {
                let d = p[c] as f64 - q[c] as f64;
                sum += d * d;
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::invalid("PSNR over an empty mask"));
    }
    Ok(psnr_from_mse(sum / (3 * count) as f64))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse < PSNR_CAP_MSE {
        PSNR_CAP_DB
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

/// Frame interval for a duration in milliseconds at a frame rate.
pub fn interval_frames(fps: f64, interval_ms: f64) -> Result<usize> {
    let k = (interval_ms * fps / 1000.0).round();
    if !(k >= 1.0) || !k.is_finite() {
        return Err(Error::invalid(format!(
            "interval of {interval_ms} ms at {fps} fps is shorter than one frame"
        )));
    }
    Ok(k as usize)
}

/// Consecutive pairs `(t - k, t)` at a fixed interval.
pub fn sample_pairs(n: usize, fps: f64, interval_ms: f64) -> Result<Vec<(usize, usize)>> {
    let k = interval_frames(fps, interval_ms)?;
    if n <= k {
        log::warn!("{n} frames are too few for pairs {k} frames apart");
        return Ok(Vec::new());
    }
    Ok((k..n).step_by(k).map(|t| (t - k, t)).collect())
}

/// Mean absolute coordinate difference with x normalized by the width and y
/// by the height.
pub fn landmark_l1(pred: &[[f64; 2]], gt: &[[f64; 2]], width: usize, height: usize) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::dim(format!("{} predicted landmarks but {} references", pred.len(), gt.len())));
    }
    if pred.is_empty() {
        return Err(Error::invalid("no landmarks"));
    }
    let (w, h) = (width as f64, height as f64);
    let sum: f64 = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| (p[0] - g[0]).abs() / w + (p[1] - g[1]).abs() / h)
        .sum();
    Ok(sum / (2 * pred.len()) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(values: &[u8]) -> ClassMap {
        ClassMap::from_data(values.len(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn iou_counting() {
        let bg = 255;
        assert_eq!(semantic_iou(&row(&[0, bg]), &row(&[bg, 0]), &[0], None).unwrap(), 0.0);
        assert_eq!(
            semantic_iou(&row(&[0, 0, 0, bg]), &row(&[bg, 0, 0, 0]), &[0], None).unwrap(),
            0.5
        );
        let m = row(&[0, 1, 2, bg]);
        assert_eq!(semantic_iou(&m, &m, &[0, 1, 2, 3], None).unwrap(), 1.0);
        assert!(semantic_iou(&row(&[bg]), &row(&[bg]), &[0], None).is_err());
        assert!(semantic_iou(&row(&[0]), &row(&[0, 0]), &[0], None).is_err());
    }

    #[test]
    fn iou_ignores_hair() {
        // The disagreeing pixel is hair in the reference.
        assert_eq!(semantic_iou(&row(&[0, 0]), &row(&[0, 254]), &[0], Some(254)).unwrap(), 1.0);
    }

    #[test]
    fn psnr_values() {
        let a = RgbImage::filled(4, 4, [0.5; 3]);
        let b = RgbImage::filled(4, 4, [0.5 + 0.0625; 3]);
        let mask = vec![true; 16];
        assert!((psnr(&a, &b, &mask).unwrap() - 24.0824).abs() < 1e-4);
        assert_eq!(psnr(&a, &a, &mask).unwrap(), PSNR_CAP_DB);
        let half: Vec<bool> = (0..16).map(|i| i < 8).collect();
        assert_eq!(psnr(&a, &b, &half).unwrap(), psnr(&a, &b, &mask).unwrap());
        assert!(psnr(&a, &b, &[false; 16]).is_err());
    }

    #[test]
    fn pair_sampling() {
        assert_eq!(interval_frames(30.0, 170.0).unwrap(), 5);
        assert_eq!(interval_frames(60.0, 170.0).unwrap(), 10);
        assert_eq!(sample_pairs(12, 30.0, 170.0).unwrap(), vec![(0, 5), (5, 10)]);
        assert!(sample_pairs(5, 30.0, 170.0).unwrap().is_empty());
        assert!(sample_pairs(12, 30.0, 0.0).is_err());
    }

    #[test]
    fn landmark_offsets() {
        let gt = [[10.0, 20.0], [30.0, 5.0]];
        assert_eq!(landmark_l1(&gt, &gt, 100, 50).unwrap(), 0.0);
        let shifted = gt.map(|p| [p[0] + 1.0, p[1]]);
        assert!((landmark_l1(&shifted, &gt, 100, 50).unwrap() - 0.005).abs() < 1e-15);
        assert!(landmark_l1(&gt[..1], &gt, 100, 50).is_err());
    }
}
