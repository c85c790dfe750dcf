//! Procedural toy head model, smooth parameter trajectories and rendered
//! ground-truth sequences.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;

use crate::appearance::{LightEvaluator, MaterialSample, Rgb, VertexMaterials};
use crate::deform::{DeformModel, ExprParams, ModelParts, PoseParams};
use crate::error::{Error, Result};
use crate::image::{ClassMap, RgbImage};
use crate::mesh::{primitives::icosphere, FaceClass, SemanticAnnotation, Vec3};
use crate::metrics::{frame_path, interval_frames, landmark_path, mask_path, DEFAULT_INTERVAL_MS};
use crate::raster::{rasterize, render_semantic, render_shaded, Camera, RasterOptions};
use crate::track::{FrameParams, ParamTrack, DEFAULT_FPS};

pub const HEAD_SCALE: [f64; 3] = [0.78, 1.0, 0.88];
pub const N_EXPR: usize = 8;
pub const JAW: usize = 2;
pub const CAMERA_DISTANCE: f64 = 3.5;
pub const FOCAL_FACTOR: f64 = 1.2;
pub const ALBEDO: Rgb = [0.8, 0.62, 0.5];
pub const DIFFUSE_LIGHT: Rgb = [0.9, 0.88, 0.85];
pub const SPECULAR_LIGHT: Rgb = [0.5, 0.5, 0.5];

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

fn unit(x: f64, y: f64, z: f64) -> Vec3 {
    Vec3::new(x, y, z).normalize()
}

const MOUTH: [f64; 3] = [0.0, -0.45, 0.9];

fn classify(u: &Vec3) -> FaceClass {
    let angle = |c: Vec3| u.dot(&c).clamp(-1.0, 1.0).acos();
    let mouth = unit(MOUTH[0], MOUTH[1], MOUTH[2]);
    if angle(unit(0.0, 0.05, 1.0)) < 0.22 {
        FaceClass::Nose
    } else if angle(unit(-0.36, 0.3, 0.88)) < 0.17 || angle(unit(0.36, 0.3, 0.88)) < 0.17 {
        FaceClass::Eyes
    } else if u.x.abs() > 0.9 {
        FaceClass::Ears
    } else if angle(mouth) < 0.32 {
        let dy = u.y - mouth.y;
        if dy > 0.05 {
            FaceClass::UpperLip
        } else if dy < -0.05 {
            FaceClass::LowerLip
        } else {
            FaceClass::MouthInterior
        }
    } else {
        FaceClass::Skin
    }
}

fn bump_centers() -> [Vec3; N_EXPR] {
    [
        unit(0.0, 0.6, 0.8),
        unit(-0.35, 0.45, 0.82),
        unit(0.35, 0.45, 0.82),
        unit(-0.55, -0.15, 0.82),
        unit(0.55, -0.15, 0.82),
        unit(0.0, -0.35, 0.94),
        unit(0.0, -0.55, 0.83),
        unit(0.0, -0.8, 0.6),
    ]
}

/// Directions of the landmark vertices on the unit sphere.
fn landmark_directions() -> Vec<Vec3> {
    vec![
        unit(0.0, 0.05, 1.0),
        unit(-0.45, 0.3, 0.84),
        unit(-0.25, 0.3, 0.93),
        unit(0.25, 0.3, 0.93),
        unit(0.45, 0.3, 0.84),
        unit(-0.3, -0.45, 0.85),
        unit(0.3, -0.45, 0.85),
        unit(0.0, -0.35, 0.94),
        unit(0.0, -0.55, 0.83),
        unit(0.0, -0.85, 0.53),
    ]
}

/// Smooth albedo pattern around [`ALBEDO`], so that misregistered geometry
/// shows up as colour error in warped frames. Specular intensity is zero.
fn toy_materials(dirs: &[Vec3]) -> VertexMaterials {
    let mut m = VertexMaterials::uniform(dirs.len(), MaterialSample::new(ALBEDO, 0.5, 0.0).expect("valid sample"));
    for (a, u) in m.albedo.iter_mut().zip(dirs) {
        let s = (7.0 * u.x + 1.0).sin() * (6.0 * u.y).cos() + 0.5 * (9.0 * u.z - 4.0 * u.y).sin();
        for c in a.iter_mut() {
            *c *= 1.0 + 0.25 * s;
        }
    }
    m
}

/// Ellipsoidal head on a level-3 icosphere (642 vertices) with root, neck
/// and jaw joints, eight smooth bump expressions, small pose correctives,
/// seven semantic classes, landmarks and a patterned albedo.
pub fn toy_head() -> Result<DeformModel> {
    let sphere = icosphere(3);
    let dirs: Vec<Vec3> = sphere.vertices().to_vec();
    let n = dirs.len();
    let canonical: Vec<Vec3> = dirs
        .iter()
        .map(|u| Vec3::new(u.x * HEAD_SCALE[0], u.y * HEAD_SCALE[1], u.z * HEAD_SCALE[2]))
        .collect();

    let centers = bump_centers();
    let mut expr_basis = Vec::with_capacity(n * 3 * N_EXPR);
    for u in &dirs {
        let normal = Vec3::new(u.x / HEAD_SCALE[0], u.y / HEAD_SCALE[1], u.z / HEAD_SCALE[2]).normalize();
        let mut block = [[0.0; N_EXPR]; 3];
        for (e, c) in centers.iter().enumerate() {
            let g = 0.05 * (-(u - c).norm_squared() / (2.0 * 0.25 * 0.25)).exp();
            // Alternate between outward bulges and vertical shifts.
            let d = if e % 2 == 0 { normal } else { Vec3::new(0.0, 1.0, 0.3).normalize() };
            for r in 0..3 {
                block[r][e] = g * d[r];
            }
        }
        expr_basis.extend(block.iter().flatten());
    }

    let mut skin_weights = Vec::with_capacity(n * 3);
    let mut jaw_w = Vec::with_capacity(n);
    for u in &dirs {
        let jaw = smoothstep((-0.38 - u.y) / 0.12) * smoothstep((u.z + 0.2) / 0.4);
        let neck = smoothstep((-u.y - 0.6) / 0.3) * (1.0 - jaw);
        let root = 1.0 - jaw - neck;
        skin_weights.extend([root, neck, jaw]);
        jaw_w.push(jaw);
    }

    let n_p = 9 * 2;
    let mut pose_correctives = Vec::with_capacity(n * 3 * n_p);
    for &jw in &jaw_w {
        for r in 0..3 {
            for f in 0..n_p {
                pose_correctives.push(0.01 * jw * (1.3 * f as f64 + 0.7 * r as f64).sin());
            }
        }
    }

    let select = |pred: &dyn Fn(&Vec3) -> bool| -> Vec<usize> {
        (0..n).filter(|&v| pred(&dirs[v])).collect()
    };
    let sets = [
        (0..n).collect::<Vec<_>>(),
        select(&|u: &Vec3| u.y < -0.85),
        select(&|u: &Vec3| u.x.abs() > 0.8 && (-0.4..0.0).contains(&u.y) && u.z.abs() < 0.45),
    ];
    let mut joint_regressor = vec![0.0; 3 * n];
    for (j, set) in sets.iter().enumerate() {
        if set.is_empty() {
            return Err(Error::invalid(format!("joint {j} selects no vertices")));
        }
        for &v in set {
            joint_regressor[j * n + v] = 1.0 / set.len() as f64;
        }
    }

    let classes: Vec<FaceClass> = FaceClass::ALL[..7].to_vec();
    let labels = dirs
        .iter()
        .map(|u| classes.iter().position(|c| *c == classify(u)).unwrap() as u32)
        .collect();

    let landmarks = landmark_directions()
        .iter()
        .map(|d| {
            let mut best = (f64::NEG_INFINITY, 0u32);
            for (v, u) in dirs.iter().enumerate() {
                let s = u.dot(d);
                if s > best.0 {
                    best = (s, v as u32);
                }
            }
            best.1
        })
        .collect();

    DeformModel::new(ModelParts {
        faces: sphere.faces().to_vec(),
        canonical,
        n_expr: N_EXPR,
        expr_basis,
        pose_correctives,
        skin_weights,
        joint_regressor,
        parents: vec![0, 0, 1],
        annotation: Some(SemanticAnnotation::new(classes, labels)?),
        landmarks: Some(landmarks),
        materials: Some(toy_materials(&dirs)),
        shape_metadata: None,
    })
}

pub fn toy_lights() -> Result<LightEvaluator> {
    LightEvaluator::constant(&[(DIFFUSE_LIGHT, SPECULAR_LIGHT)])
}

pub fn toy_camera(width: usize, height: usize) -> Camera {
    Camera::looking_at_origin(width, height, CAMERA_DISTANCE, FOCAL_FACTOR)
}

/// Two seeded harmonics of a base period:
/// `offset + amp * (sin(w t + p1) + 0.5 sin(2 w t + p2)) / 1.5`, `w = 2 pi / period`.
struct Wave {
    offset: f64,
    amp: f64,
    w: f64,
    phase: [f64; 2],
}

impl Wave {
    fn new<R: Rng>(rng: &mut R, offset: f64, amp: f64, period: usize) -> Self {
        Self {
            offset,
            amp,
            w: std::f64::consts::TAU / period as f64,
            phase: [rng.random_range(0.0..std::f64::consts::TAU), rng.random_range(0.0..std::f64::consts::TAU)],
        }
    }

    fn at(&self, t: f64) -> f64 {
        self.offset + self.amp * ((self.w * t + self.phase[0]).sin() + 0.5 * (2.0 * self.w * t + self.phase[1]).sin()) / 1.5
    }
}

/// Seeded head motion, jaw opening and expression trajectory that repeats
/// every `period` frames.
///
/// With `period` equal to the warp interval, the two frames of every
/// evaluation pair share their geometry exactly. That is the only way a
/// textured 8-bit sequence can warp with zero error under its own ground
/// truth: any sub-pixel motion leaves bilinear and quantization residue.
/// Frames inside a period still differ in pose, jaw and expression.
pub fn toy_trajectory(n_frames: usize, seed: u64, camera: Camera, fps: f64, period: usize) -> Result<ParamTrack> {
    if period == 0 {
        return Err(Error::invalid("trajectory period must be at least one frame"));
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut wave = |offset, amp| Wave::new(&mut rng, offset, amp, period);
    let root: Vec<Wave> = [0.08, 0.2, 0.05].iter().map(|&a| wave(0.0, a)).collect();
    let neck: Vec<Wave> = [0.05, 0.05, 0.03].iter().map(|&a| wave(0.0, a)).collect();
    let jaw = wave(0.12, 0.1);
    let trans: Vec<Wave> = [0.04, 0.03, 0.05].iter().map(|&a| wave(0.0, a)).collect();
    let expr: Vec<Wave> = (0..N_EXPR).map(|_| wave(0.0, 0.8)).collect();
    let frames = (0..n_frames)
        .map(|i| {
            // Reduce first so repeated frames are bitwise identical.
            let t = (i % period) as f64;
            FrameParams {
                pose: PoseParams {
                    joint_rotations: vec![
                        Vec3::from_fn(|k, _| root[k].at(t)),
                        Vec3::from_fn(|k, _| neck[k].at(t)),
                        Vec3::new(jaw.at(t).max(0.0), 0.0, 0.0),
                    ],
                    translation: Vec3::from_fn(|k, _| trans[k].at(t)),
                },
                expr: ExprParams(expr.iter().map(|w| w.at(t)).collect()),
                camera,
            }
        })
        .collect();
    ParamTrack::new(frames, fps)
}

/// Adds `sigma_deg` degrees of Gaussian noise to the jaw opening angle of
/// every frame, from a stream seeded independently of the trajectory.
pub fn perturb_jaw(track: &ParamTrack, sigma_deg: f64, seed: u64) -> Result<ParamTrack> {
    if !(sigma_deg >= 0.0) {
        return Err(Error::invalid(format!("noise level must be nonnegative, got {sigma_deg}")));
    }
    let mut out = track.clone();
    if sigma_deg == 0.0 {
        return Ok(out);
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed ^ 0x6a61_775f_6e6f_6973);
    let sigma = sigma_deg.to_radians();
    for f in out.frames_mut() {
        let z: f64 = rng.sample(StandardNormal);
        f.pose.joint_rotations[JAW].x += sigma * z;
    }
    Ok(out)
}

pub struct RenderedFrame {
    pub image: RgbImage,
    pub mask: ClassMap,
    pub landmarks: Vec<[f64; 2]>,
}

pub fn render_frame(
    model: &DeformModel,
    light: &LightEvaluator,
    frame: &FrameParams,
    width: usize,
    height: usize,
) -> Result<RenderedFrame> {
    let vertices = model.pose_mesh(&frame.pose, &frame.expr)?;
    let gbuf = rasterize(model.faces(), &vertices, &frame.camera, width, height, &RasterOptions::default())?;
    let materials = model.materials().ok_or_else(|| Error::invalid("model has no materials"))?;
    let annotation = model.annotation().ok_or_else(|| Error::invalid("model has no labels"))?;
    let mesh = model.mesh_with(vertices)?;
    let image = render_shaded(&gbuf, &mesh, materials, light, 0, &frame.camera)?;
    let mask = render_semantic(&gbuf, model.faces(), annotation)?;
    let proj = frame.camera.projector(width, height);
    let landmarks = model
        .landmarks()
        .unwrap_or(&[])
        .iter()
        .map(|&v| {
            let p = proj.project(&mesh.vertex(v));
            [p.x, p.y]
        })
        .collect();
    Ok(RenderedFrame { image, mask, landmarks })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub noise_deg: f64,
    pub fps: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            frames: 64,
            width: 256,
            height: 256,
            seed: 7,
            noise_deg: 0.0,
            fps: DEFAULT_FPS,
        }
    }
}

/// Paths written by [`generate`].
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub model: PathBuf,
    pub lights: PathBuf,
    pub gt_track: PathBuf,
    pub noisy_track: PathBuf,
    pub frames: PathBuf,
    pub masks: PathBuf,
}

impl SynthOutput {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            model: dir.join("model.fwb"),
            lights: dir.join("lights.fwb"),
            gt_track: dir.join("track_gt.fwb"),
            noisy_track: dir.join("track_noisy.fwb"),
            frames: dir.join("frames"),
            masks: dir.join("masks"),
        }
    }
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

/// Writes the toy model, lights, ground-truth and perturbed tracks, and the
/// rendered frames, class masks and landmark files.
pub fn generate(dir: &Path, config: &SynthConfig) -> Result<SynthOutput> {
    if config.width == 0 || config.height == 0 {
        return Err(Error::invalid("image size must be positive"));
    }
    let out = SynthOutput::in_dir(dir);
    create_dir(&out.frames)?;
    create_dir(&out.masks)?;
    let model = toy_head()?;
    let lights = toy_lights()?;
    let period = interval_frames(config.fps, DEFAULT_INTERVAL_MS)?;
    let track = toy_trajectory(config.frames, config.seed, toy_camera(config.width, config.height), config.fps, period)?;
    let noisy = perturb_jaw(&track, config.noise_deg, config.seed)?;
    model.save(&out.model)?;
    lights.save(&out.lights)?;
    track.save(&out.gt_track)?;
    noisy.save(&out.noisy_track)?;
    (0..config.frames).into_par_iter().try_for_each(|i| -> Result<()> {
        let r = render_frame(&model, &lights, &track.frames()[i], config.width, config.height)?;
        r.image.save_png(frame_path(&out.frames, i))?;
        r.mask.save_png(mask_path(&out.masks, i))?;
        let text: String = r.landmarks.iter().map(|p| format!("{} {}\n", p[0], p[1])).collect();
        let lp = landmark_path(&out.frames, i);
        std::fs::write(&lp, text).map_err(|e| Error::io(&lp, e))
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_head_shape() {
        let m = toy_head().unwrap();
        assert_eq!(m.vertex_count(), 642);
        assert_eq!(m.n_expr(), N_EXPR);
        assert_eq!(m.n_joints(), 3);
        let a = m.annotation().unwrap();
        let mut counts = [0usize; 7];
        for &l in a.labels() {
            counts[l as usize] += 1;
        }
        assert!(counts.iter().all(|&c| c > 0), "class counts {counts:?}");
        assert_eq!(m.canonical_mesh().euler_characteristic(), 2);
    }

    #[test]
    fn zero_noise_is_identity() {
        let t = toy_trajectory(4, 3, toy_camera(32, 32), 30.0, 5).unwrap();
        assert_eq!(perturb_jaw(&t, 0.0, 3).unwrap(), t);
        assert_ne!(perturb_jaw(&t, 1.0, 3).unwrap(), t);
    }
}
