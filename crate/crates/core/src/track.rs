//! Per-frame pose, expression and camera parameters of a tracked sequence.

use std::path::Path;

use crate::deform::{ExprParams, PoseParams};
use crate::error::{Error, Result};
use crate::fwb::Container;
use crate::mesh::Vec3;
use crate::raster::{Camera, CameraMode};

pub const DEFAULT_FPS: f64 = 30.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FrameParams {
    pub pose: PoseParams,
    pub expr: ExprParams,
    pub camera: Camera,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamTrack {
    frames: Vec<FrameParams>,
    fps: f64,
}

impl ParamTrack {
    /// All frames must share joint count, expression width and camera mode.
    pub fn new(frames: Vec<FrameParams>, fps: f64) -> Result<Self> {
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::invalid(format!("frame rate must be positive, got {fps}")));
        }
        if let Some(first) = frames.first() {
            let (n_j, n_e, mode) = (
                first.pose.joint_rotations.len(),
                first.expr.0.len(),
                first.camera.mode(),
            );
            for (i, f) in frames.iter().enumerate() {
                if f.pose.joint_rotations.len() != n_j || f.expr.0.len() != n_e || f.camera.mode() != mode {
                    return Err(Error::dim(format!("frame {i} differs in shape from frame 0")));
                }
                f.camera.validate()?;
            }
        }
        Ok(Self { frames, fps })
    }

    pub fn frames(&self) -> &[FrameParams] {
        &self.frames
    }

    pub fn frames_mut(&mut self) -> &mut [FrameParams] {
        &mut self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn frame(&self, i: usize) -> Result<&FrameParams> {
        self.frames.get(i).ok_or_else(|| {
            Error::invalid(format!("frame {i} out of range: track has {} frames", self.frames.len()))
        })
    }

    pub fn to_container(&self) -> Result<Container> {
        let n = self.frames.len();
        let n_j = self.frames.first().map_or(0, |f| f.pose.joint_rotations.len());
        let n_e = self.frames.first().map_or(0, |f| f.expr.0.len());
        let mode = self.frames.first().map_or(CameraMode::Perspective, |f| f.camera.mode());
        let mut c = Container::new();
        c.put_f64(
            "theta",
            &[n, n_j, 3],
            self.frames
                .iter()
                .flat_map(|f| f.pose.joint_rotations.iter().flat_map(|r| [r.x, r.y, r.z]))
                .collect(),
        )?;
        c.put_f64(
            "trans",
            &[n, 3],
            self.frames
                .iter()
                .flat_map(|f| [f.pose.translation.x, f.pose.translation.y, f.pose.translation.z])
                .collect(),
        )?;
        c.put_f64("psi", &[n, n_e], self.frames.iter().flat_map(|f| f.expr.0.iter().copied()).collect())?;
        c.put_f64(
            "camera",
            &[n, mode.width()],
            self.frames.iter().flat_map(|f| f.camera.to_params()).collect(),
        )?;
        c.put_u8("camera_mode", &[1], vec![mode.code()])?;
        c.put_f64("fps", &[1], vec![self.fps])?;
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let (td, theta) = c.f64("theta")?;
        if td.len() != 3 || td[2] != 3 {
            return Err(Error::Container("`theta` must be n_frames x n_j x 3".into()));
        }
        let (n, n_j) = (td[0], td[1]);
        let (_, trans) = c.f64("trans")?;
        let (pd, psi) = c.f64("psi")?;
        let (cd, cams) = c.f64("camera")?;
        let mode = CameraMode::from_code(c.u8("camera_mode")?.1.first().copied().unwrap_or(0))?;
        if trans.len() != n * 3 || pd.first() != Some(&n) || cd != [n, mode.width()] {
            return Err(Error::Container("track chunks disagree on frame count".into()));
        }
        let n_e = if n == 0 { 0 } else { psi.len() / n };
        let fps = match c.get("fps") {
            Some(_) => c.f64("fps")?.1.first().copied().unwrap_or(DEFAULT_FPS),
            None => DEFAULT_FPS,
        };
        let frames = (0..n)
            .map(|i| {
                Ok(FrameParams {
                    pose: PoseParams {
                        joint_rotations: theta[i * n_j * 3..(i + 1) * n_j * 3]
                            .chunks_exact(3)
                            .map(|r| Vec3::new(r[0], r[1], r[2]))
                            .collect(),
                        translation: Vec3::new(trans[3 * i], trans[3 * i + 1], trans[3 * i + 2]),
                    },
                    expr: ExprParams(psi[i * n_e..(i + 1) * n_e].to_vec()),
                    camera: Camera::from_params(mode, &cams[i * mode.width()..(i + 1) * mode.width()])?,
                })
            })
            .collect::<Result<_>>()?;
        Self::new(frames, fps)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container()?.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }
}
