use nalgebra::Matrix3;

use crate::deform::rodrigues;
use crate::error::{Error, Result};
use crate::mesh::Vec3;

/// Smallest camera-space depth a perspective vertex may have.
pub const NEAR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CameraMode {
    Perspective,
    Orthographic,
}

impl CameraMode {
    pub fn code(self) -> u8 {
        match self {
            CameraMode::Perspective => 0,
            CameraMode::Orthographic => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(CameraMode::Perspective),
            1 => Ok(CameraMode::Orthographic),
            _ => Err(Error::invalid(format!("unknown camera mode {code}"))),
        }
    }

    /// Number of parameters in the flat serialized form.
    pub fn width(self) -> usize {
        match self {
            CameraMode::Perspective => 9,
            CameraMode::Orthographic => 3,
        }
    }
}

/// Perspective cameras map world points through a rigid world-to-camera
/// transform and a pinhole; camera y points down the image and the camera
/// looks along +z.
///
/// Scaled-orthographic cameras look along world -z:
/// `px = (s x + tx + 1) W / 2`, `py = (1 - (s y + ty)) H / 2`, depth `-z`,
/// so that world +y is up in the image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Camera {
    Perspective {
        focal: f64,
        cx: f64,
        cy: f64,
        /// World-to-camera rotation, axis-angle.
        rotation: Vec3,
        translation: Vec3,
    },
    Orthographic {
        scale: f64,
        tx: f64,
        ty: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub x: f64,
    pub y: f64,
    pub depth: f64,
    /// False for perspective points at or behind the near limit.
    pub in_front: bool,
}

impl Camera {
    /// Perspective camera at distance `distance` on the +z axis looking at
    /// the origin with world +y up in the image.
    pub fn looking_at_origin(width: usize, height: usize, distance: f64, focal_factor: f64) -> Self {
        Camera::Perspective {
            focal: focal_factor * width as f64,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            rotation: Vec3::new(std::f64::consts::PI, 0.0, 0.0),
            translation: Vec3::new(0.0, 0.0, distance),
        }
    }

    pub fn mode(&self) -> CameraMode {
        match self {
            Camera::Perspective { .. } => CameraMode::Perspective,
            Camera::Orthographic { .. } => CameraMode::Orthographic,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Camera::Perspective {
                focal,
                cx,
                cy,
                rotation,
                translation,
            } => {
                *focal > 0.0
                    && [*focal, *cx, *cy].iter().chain(rotation.iter()).chain(translation.iter()).all(|v| v.is_finite())
            }
            Camera::Orthographic { scale, tx, ty } => *scale > 0.0 && [*scale, *tx, *ty].iter().all(|v| v.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid camera {self:?}")))
        }
    }

    pub fn to_params(&self) -> Vec<f64> {
        match *self {
            Camera::Perspective {
                focal,
                cx,
                cy,
                rotation,
                translation,
            } => vec![
                focal,
                cx,
                cy,
                rotation.x,
                rotation.y,
                rotation.z,
                translation.x,
                translation.y,
                translation.z,
            ],
            Camera::Orthographic { scale, tx, ty } => vec![scale, tx, ty],
        }
    }

    pub fn from_params(mode: CameraMode, p: &[f64]) -> Result<Self> {
        if p.len() != mode.width() {
            return Err(Error::dim(format!(
                "{mode:?} camera takes {} parameters, got {}",
                mode.width(),
                p.len()
            )));
        }
        let cam = match mode {
            CameraMode::Perspective => Camera::Perspective {
                focal: p[0],
                cx: p[1],
                cy: p[2],
                rotation: Vec3::new(p[3], p[4], p[5]),
                translation: Vec3::new(p[6], p[7], p[8]),
            },
            CameraMode::Orthographic => Camera::Orthographic {
                scale: p[0],
                tx: p[1],
                ty: p[2],
            },
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Prepared form for projecting many points.
    pub fn projector(&self, width: usize, height: usize) -> Projector {
        match *self {
            Camera::Perspective {
                focal,
                cx,
                cy,
                rotation,
                translation,
            } => Projector::Perspective {
                r: rodrigues(&rotation),
                t: translation,
                focal,
                cx,
                cy,
            },
            Camera::Orthographic { scale, tx, ty } => Projector::Orthographic {
                scale,
                tx,
                ty,
                half_w: width as f64 / 2.0,
                half_h: height as f64 / 2.0,
            },
        }
    }

    pub fn project(&self, p: &Vec3, width: usize, height: usize) -> Result<Projection> {
        if !p.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid(format!("cannot project non-finite point {p:?}")));
        }
        Ok(self.projector(width, height).project(p))
    }

    /// The same view for an image resized from `from` to `to` pixels.
    /// Orthographic cameras work in normalized coordinates and are unchanged.
    pub fn resized(&self, from: (usize, usize), to: (usize, usize)) -> Result<Self> {
        if from.0 == 0 || from.1 == 0 || to.0 == 0 || to.1 == 0 {
            return Err(Error::invalid(format!("cannot resize a camera from {from:?} to {to:?}")));
        }
        Ok(match *self {
            Camera::Perspective {
                focal,
                cx,
                cy,
                rotation,
                translation,
            } => {
                let sx = to.0 as f64 / from.0 as f64;
                let sy = to.1 as f64 / from.1 as f64;
                Camera::Perspective {
                    focal: focal * sx,
                    cx: cx * sx,
                    cy: cy * sy,
                    rotation,
                    translation,
                }
            }
            ortho => ortho,
        })
    }

    /// Unit direction from a surface point toward the viewer.
    pub fn view_direction(&self, p: &Vec3) -> Vec3 {
        match *self {
            Camera::Perspective {
                rotation, translation, ..
            } => {
                let r = rodrigues(&rotation);
                let center = -(r.transpose() * translation);
                let d = center - p;
                let n = d.norm();
                if n > 0.0 {
                    d / n
                } else {
                    Vec3::z()
                }
            }
            Camera::Orthographic { .. } => Vec3::z(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Projector {
    Perspective {
        r: Matrix3<f64>,
        t: Vec3,
        focal: f64,
        cx: f64,
        cy: f64,
    },
    Orthographic {
        scale: f64,
        tx: f64,
        ty: f64,
        half_w: f64,
        half_h: f64,
    },
}

impl Projector {
    pub fn project(&self, p: &Vec3) -> Projection {
        match *self {
            Projector::Perspective { r, t, focal, cx, cy } => {
                let q = r * p + t;
                Projection {
                    x: focal * q.x / q.z + cx,
                    y: focal * q.y / q.z + cy,
                    depth: q.z,
                    in_front: q.z > NEAR,
                }
            }
            Projector::Orthographic {
                scale,
                tx,
                ty,
                half_w,
                half_h,
            } => Projection {
                x: (scale * p.x + tx + 1.0) * half_w,
                y: (1.0 - (scale * p.y + ty)) * half_h,
                depth: -p.z,
                in_front: true,
            },
        }
    }

    pub fn is_perspective(&self) -> bool {
        matches!(self, Projector::Perspective { .. })
    }
}
