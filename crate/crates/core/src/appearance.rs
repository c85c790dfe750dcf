//! Materials, per-video light evaluators, split diffuse/specular shading and
//! the loss terms of the training objective.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::fwb::Container;
use crate::image::RgbImage;
use crate::mesh::{blend3, face_normals, uniform_laplacian_vec3, TriMesh, Vec3};
use crate::neural::{Activation, Mlp};

pub const ROUGHNESS_MIN: f64 = 0.04;
pub const UNIT_TOL: f64 = 1e-6;
pub const SH_DEGREE: usize = 4;
pub const SH_COEFFS: usize = (SH_DEGREE + 1) * (SH_DEGREE + 1);
pub const LIGHT_INPUT: usize = SH_COEFFS + 1;
pub const LIGHT_HIDDEN: [usize; 3] = [64; 3];

pub type Rgb = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialSample {
    pub albedo: Rgb,
    pub roughness: f64,
    pub spec_intensity: f64,
}

impl MaterialSample {
    /// Clamps roughness into `[ROUGHNESS_MIN, 1]`; negative components are
    /// rejected.
    pub fn new(albedo: Rgb, roughness: f64, spec_intensity: f64) -> Result<Self> {
        if albedo.iter().chain([&roughness, &spec_intensity]).any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid(format!(
                "material components must be finite and nonnegative: {albedo:?}, r = {roughness}, k = {spec_intensity}"
            )));
        }
        Ok(Self {
            albedo,
            roughness: roughness.clamp(ROUGHNESS_MIN, 1.0),
            spec_intensity,
        })
    }
}

/// Per-vertex material table.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexMaterials {
    pub albedo: Vec<Rgb>,
    pub roughness: Vec<f64>,
    pub spec_intensity: Vec<f64>,
}

impl VertexMaterials {
    pub fn uniform(n: usize, m: MaterialSample) -> Self {
        Self {
            albedo: vec![m.albedo; n],
            roughness: vec![m.roughness; n],
            spec_intensity: vec![m.spec_intensity; n],
        }
    }

    pub fn len(&self) -> usize {
        self.albedo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.albedo.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.albedo.len();
        if self.roughness.len() != n || self.spec_intensity.len() != n {
            return Err(Error::dim("material channels have different lengths"));
        }
        for v in 0..n {
            MaterialSample::new(self.albedo[v], self.roughness[v], self.spec_intensity[v])?;
        }
        Ok(())
    }

    /// Barycentric blend of three vertices' materials.
    pub fn interpolate(&self, corners: [u32; 3], w: [f64; 3]) -> Result<MaterialSample> {
        let v = corners.map(|c| c as usize);
        let albedo = [0, 1, 2].map(|ch| blend3(v.map(|i| self.albedo[i][ch]), &w).max(0.0));
        let r = blend3(v.map(|i| self.roughness[i]), &w);
        let k = blend3(v.map(|i| self.spec_intensity[i]), &w);
        MaterialSample::new(albedo, r.max(0.0), k.max(0.0))
    }

    pub fn write_chunks(&self, c: &mut Container) -> Result<()> {
        let n = self.len();
        c.put_f64("albedo", &[n, 3], self.albedo.iter().flatten().copied().collect())?;
        c.put_f64("roughness", &[n], self.roughness.clone())?;
        c.put_f64("spec_intensity", &[n], self.spec_intensity.clone())
    }

    pub fn read_chunks(c: &Container) -> Result<Option<Self>> {
        if !c.contains("albedo") {
            return Ok(None);
        }
        let (_, a) = c.f64("albedo")?;
        let m = Self {
            albedo: a.chunks_exact(3).map(|p| [p[0], p[1], p[2]]).collect(),
            roughness: c.f64("roughness")?.1.to_vec(),
            spec_intensity: c.f64("spec_intensity")?.1.to_vec(),
        };
        m.validate()?;
        Ok(Some(m))
    }
}

fn check_unit(v: &Vec3, what: &str) -> Result<()> {
    if (v.norm() - 1.0).abs() > UNIT_TOL {
        return Err(Error::invalid(format!("{what} {v:?} is not unit length")));
    }
    Ok(())
}

/// Mirror of `view` about `normal`: `2 (n . v) n - v`.
pub fn reflect(view: &Vec3, normal: &Vec3) -> Result<Vec3> {
    check_unit(view, "view direction")?;
    check_unit(normal, "normal")?;
    Ok(2.0 * normal.dot(view) * normal - view)
}

/// Real spherical harmonics up to degree 4 of a unit direction.
pub fn sh_basis(d: &Vec3) -> [f64; SH_COEFFS] {
    let (x, y, z) = (d.x, d.y, d.z);
    let (xx, yy, zz) = (x * x, y * y, z * z);
    [
        0.282_094_791_773_878_14,
        -0.488_602_511_902_919_9 * y,
        0.488_602_511_902_919_9 * z,
        -0.488_602_511_902_919_9 * x,
        1.092_548_430_592_079_2 * x * y,
        -1.092_548_430_592_079_2 * y * z,
        0.315_391_565_252_520_05 * (2.0 * zz - xx - yy),
        -1.092_548_430_592_079_2 * x * z,
        0.546_274_215_296_039_6 * (xx - yy),
        -0.590_043_589_926_643_5 * y * (3.0 * xx - yy),
        2.890_611_442_640_554 * x * y * z,
        -0.457_045_799_464_465_8 * y * (4.0 * zz - xx - yy),
        0.373_176_332_590_115_4 * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
        -0.457_045_799_464_465_8 * x * (4.0 * zz - xx - yy),
        1.445_305_721_320_277 * z * (xx - yy),
        -0.590_043_589_926_643_5 * x * (xx - 3.0 * yy),
        2.503_342_941_796_704_6 * x * y * (xx - yy),
        -1.770_130_769_779_930_4 * y * z * (3.0 * xx - yy),
        0.946_174_695_757_560_1 * x * y * (7.0 * zz - 1.0),
        -0.669_046_543_557_289_2 * y * z * (7.0 * zz - 3.0),
        0.105_785_546_915_204_31 * (zz * (35.0 * zz - 30.0) + 3.0),
        -0.669_046_543_557_289_2 * x * z * (7.0 * zz - 3.0),
        0.473_087_347_878_780_04 * (xx - yy) * (7.0 * zz - 1.0),
        -1.770_130_769_779_930_4 * x * z * (xx - 3.0 * yy),
        0.625_835_735_449_176_1 * (xx * (xx - 3.0 * yy) - yy * (3.0 * xx - yy)),
    ]
}

/// Directional feature fed to the light networks.
pub fn light_input(direction: &Vec3, roughness: f64) -> [f64; LIGHT_INPUT] {
    let mut out = [0.0; LIGHT_INPUT];
    out[..SH_COEFFS].copy_from_slice(&sh_basis(direction));
    out[SH_COEFFS] = roughness;
    out
}

/// Diffuse and specular light networks of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoLight {
    pub diffuse: Mlp,
    pub specular: Mlp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LightEvaluator {
    videos: Vec<VideoLight>,
}

fn light_widths() -> Vec<usize> {
    let mut w = vec![LIGHT_INPUT];
    w.extend(LIGHT_HIDDEN);
    w.push(3);
    w
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

impl LightEvaluator {
    pub fn new(videos: Vec<VideoLight>) -> Result<Self> {
        for (i, v) in videos.iter().enumerate() {
            for net in [&v.diffuse, &v.specular] {
                if net.input_width() != LIGHT_INPUT || net.output_width() != 3 || net.output() != Activation::Sigmoid {
                    return Err(Error::dim(format!(
                        "light network of video {i} must map {LIGHT_INPUT} inputs to 3 sigmoid outputs"
                    )));
                }
            }
        }
        Ok(Self { videos })
    }

    /// Kaiming-initialized networks, one diffuse and one specular per video.
    pub fn random(n_videos: usize, seed: u64) -> Result<Self> {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let widths = light_widths();
        let videos = (0..n_videos)
            .map(|_| {
                Ok(VideoLight {
                    diffuse: Mlp::kaiming(&widths, Activation::Relu, Activation::Sigmoid, &mut rng)?,
                    specular: Mlp::kaiming(&widths, Activation::Relu, Activation::Sigmoid, &mut rng)?,
                })
            })
            .collect::<Result<_>>()?;
        Self::new(videos)
    }

    /// Direction-independent lights: zero weights with output biases chosen
    /// so the sigmoid yields the given colours. Components must lie in (0, 1).
    pub fn constant(lights: &[(Rgb, Rgb)]) -> Result<Self> {
        let widths = light_widths();
        let videos = lights
            .iter()
            .map(|(d, s)| {
                let make = |c: &Rgb| -> Result<Mlp> {
                    if c.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
                        return Err(Error::invalid(format!("constant light {c:?} must lie in (0, 1)")));
                    }
                    let mut net = Mlp::zeros(&widths, Activation::Relu, Activation::Sigmoid)?;
                    let last = net.layers_mut().last_mut().unwrap();
                    for (b, v) in last.bias.iter_mut().zip(c) {
                        *b = logit(*v);
                    }
                    Ok(net)
                };
                Ok(VideoLight {
                    diffuse: make(d)?,
                    specular: make(s)?,
                })
            })
            .collect::<Result<_>>()?;
        Self::new(videos)
    }

    pub fn video_count(&self) -> usize {
        self.videos.len()
    }

    pub fn video(&self, i: usize) -> Result<&VideoLight> {
        self.videos.get(i).ok_or_else(|| {
            Error::invalid(format!("video index {i} out of range ({} videos)", self.videos.len()))
        })
    }

    pub fn video_mut(&mut self, i: usize) -> Result<&mut VideoLight> {
        let n = self.videos.len();
        self.videos
            .get_mut(i)
            .ok_or_else(|| Error::invalid(format!("video index {i} out of range ({n} videos)")))
    }

    fn eval(net: &Mlp, direction: &Vec3, roughness: f64) -> Result<Rgb> {
        let out = net.forward(&light_input(direction, roughness))?;
        Ok([out[0], out[1], out[2]])
    }

    /// `l_d`: diffuse light along the shading normal, roughness fixed to 1.
    pub fn diffuse(&self, video: usize, normal: &Vec3) -> Result<Rgb> {
        Self::eval(&self.video(video)?.diffuse, normal, 1.0)
    }

    /// `l_s`: specular light along the reflection direction.
    pub fn specular(&self, video: usize, reflection: &Vec3, roughness: f64) -> Result<Rgb> {
        Self::eval(&self.video(video)?.specular, reflection, roughness)
    }

    pub fn to_container(&self) -> Result<Container> {
        let mut c = Container::new();
        c.put_u32("light_videos", &[1], vec![self.videos.len() as u32])?;
        for (i, v) in self.videos.iter().enumerate() {
            v.diffuse.write_chunks(&mut c, &format!("light{i}.diffuse."), "encoding = sh4+roughness\n")?;
            v.specular.write_chunks(&mut c, &format!("light{i}.specular."), "encoding = sh4+roughness\n")?;
        }
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let (_, n) = c.u32("light_videos")?;
        let videos = (0..n[0] as usize)
            .map(|i| {
                Ok(VideoLight {
                    diffuse: Mlp::read_chunks(c, &format!("light{i}.diffuse."))?.0,
                    specular: Mlp::read_chunks(c, &format!("light{i}.specular."))?.0,
                })
            })
            .collect::<Result<_>>()?;
        Self::new(videos)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        self.to_container()?.save(path)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }
}

/// `C = rho * l_d + k * l_s`, per channel.
pub fn shade(material: &MaterialSample, l_d: &Rgb, l_s: &Rgb) -> Rgb {
    let k = material.spec_intensity;
    [0, 1, 2].map(|c| material.albedo[c] * l_d[c] + k * l_s[c])
}

pub const RGB_LOG_EPS: f64 = 1e-3;

fn check_same_size(a: &RgbImage, b: &RgbImage) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::dim(format!(
            "images are {}x{} and {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

/// Mean over masked pixels of the squared norm of the log-space difference.
pub fn loss_rgb(rendered: &RgbImage, target: &RgbImage, mask: &[bool], eps: f64) -> Result<f64> {
    check_same_size(rendered, target)?;
    if mask.len() != rendered.pixels().len() {
        return Err(Error::dim("mask size differs from the images"));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for ((a, b), m) in rendered.pixels().iter().zip(target.pixels()).zip(mask) {
        if !m {
            continue;
        }
        count += 1;
        for c in 0..3 {
            let d = (a[c] as f64 + eps).ln() - (b[c] as f64 + eps).ln();
            sum += d * d;
        }
    }
    if count == 0 {
        return Err(Error::invalid("photometric loss over an empty mask"));
    }
    Ok(sum / count as f64)
}

/// Mean squared difference of two binary masks.
pub fn loss_mask(rasterized: &[bool], target: &[bool]) -> Result<f64> {
    if rasterized.len() != target.len() {
        return Err(Error::dim("mask sizes differ"));
    }
    if rasterized.is_empty() {
        return Err(Error::invalid("empty masks"));
    }
    let diff = rasterized.iter().zip(target).filter(|(a, b)| a != b).count();
    Ok(diff as f64 / rasterized.len() as f64)
}

fn mean_squared_difference(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim(format!("{} values against {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::invalid("empty sample set"));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64)
}

/// Mean squared elementwise difference between a predicted basis and the
/// (reprojected) reference basis.
pub fn loss_flame_reg(predicted: &[f64], reference: &[f64]) -> Result<f64> {
    mean_squared_difference(predicted, reference)
}

/// Mean squared norm of the uniform Laplacian of `vertices` over the mesh
/// connectivity.
pub fn loss_laplacian(mesh: &TriMesh, vertices: &[Vec3]) -> Result<f64> {
    if vertices.len() != mesh.vertex_count() || vertices.is_empty() {
        return Err(Error::dim(format!(
            "{} vertices for a mesh with {}",
            vertices.len(),
            mesh.vertex_count()
        )));
    }
    let lap = uniform_laplacian_vec3(&mesh.with_vertices(vertices.to_vec())?, vertices);
    Ok(lap.iter().map(|l| l.norm_squared()).sum::<f64>() / lap.len() as f64)
}

/// Mean over pairs of edge-adjacent, non-degenerate faces of
/// `1 - cos(angle between normals)`.
pub fn loss_normal(mesh: &TriMesh) -> Result<f64> {
    let normals = face_normals(mesh);
    let mut edges: Vec<_> = mesh.edge_faces().into_iter().collect();
    edges.sort();
    let mut sum = 0.0;
    let mut count = 0usize;
    for (_, faces) in edges {
        if let [a, b] = faces[..] {
            if normals.degenerate[a] || normals.degenerate[b] {
                continue;
            }
            sum += 1.0 - normals.normals[a].dot(&normals.normals[b]);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::invalid("mesh has no adjacent face pairs"));
    }
    Ok(sum / count as f64)
}

/// Mean squared difference of field values over all point pairs closer than
/// `radius`. `values` holds `width` entries per point.
pub fn loss_smooth(points: &[Vec3], values: &[f64], width: usize, radius: f64) -> Result<f64> {
    if width == 0 || values.len() != points.len() * width {
        return Err(Error::dim(format!(
            "{} field values for {} points of width {width}",
            values.len(),
            points.len()
        )));
    }
    let r2 = radius * radius;
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            if (points[i] - points[j]).norm_squared() <= r2 {
                let (a, b) = (&values[i * width..(i + 1) * width], &values[j * width..(j + 1) * width]);
                sum += a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::invalid(format!("no point pairs within radius {radius}")));
    }
    Ok(sum / count as f64)
}

fn loss_prior(samples: &[f64], center: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("empty sample set"));
    }
    Ok(samples.iter().map(|s| (s - center) * (s - center)).sum::<f64>() / samples.len() as f64)
}

pub fn loss_roughness(samples: &[f64], r0: f64) -> Result<f64> {
    loss_prior(samples, r0)
}

pub fn loss_spec(samples: &[f64], k0: f64) -> Result<f64> {
    loss_prior(samples, k0)
}

/// Mean squared deviation of each diffuse light sample from its own channel
/// mean; zero exactly for achromatic light.
pub fn loss_light(l_d: &[Rgb]) -> Result<f64> {
    if l_d.is_empty() {
        return Err(Error::invalid("empty sample set"));
    }
    let sum: f64 = l_d
        .iter()
        // Sum of squared deviations from the channel mean, as pairwise
        // differences.
        .map(|l| ((l[0] - l[1]).powi(2) + (l[1] - l[2]).powi(2) + (l[0] - l[2]).powi(2)) / 3.0)
        .sum();
    Ok(sum / (3 * l_d.len()) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub rgb: f64,
    pub vgg: f64,
    pub mask: f64,
    pub flame: f64,
    pub laplacian: f64,
    pub normal: f64,
    pub smooth: f64,
    pub roughness: f64,
    pub spec: f64,
    pub light: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            rgb: 1.0,
            vgg: 0.1,
            mask: 2.0,
            flame: 20.0,
            laplacian: 100.0,
            normal: 0.1,
            smooth: 0.01,
            roughness: 0.01,
            spec: 0.01,
            light: 0.01,
        }
    }
}

/// Priors and constants used by the loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConstants {
    pub rgb_eps: f64,
    pub roughness_prior: f64,
    pub spec_prior: f64,
    pub smooth_radius: f64,
}

impl Default for LossConstants {
    fn default() -> Self {
        Self {
            rgb_eps: RGB_LOG_EPS,
            roughness_prior: 0.5,
            spec_prior: 0.5,
            smooth_radius: 0.01,
        }
    }
}

impl LossWeights {
    pub fn scaled(&self, s: f64) -> Self {
        let mut w = *self;
        for (_, v) in w.fields_mut() {
            *v *= s;
        }
        w
    }

    fn fields_mut(&mut self) -> [(&'static str, &mut f64); 10] {
        [
            ("rgb", &mut self.rgb),
            ("vgg", &mut self.vgg),
            ("mask", &mut self.mask),
            ("flame", &mut self.flame),
            ("laplacian", &mut self.laplacian),
            ("normal", &mut self.normal),
            ("smooth", &mut self.smooth),
            ("r", &mut self.roughness),
            ("spec", &mut self.spec),
            ("light", &mut self.light),
        ]
    }

    /// Reads `lambda_<term>` keys; absent keys keep their defaults.
    pub fn from_config(kv: &KeyValues) -> Result<Self> {
        let mut w = Self::default();
        for (name, slot) in w.fields_mut() {
            kv.apply(&format!("lambda_{name}"), slot)?;
            if !(*slot >= 0.0) {
                return Err(Error::invalid(format!("lambda_{name} must be nonnegative")));
            }
        }
        Ok(w)
    }
}

impl LossConstants {
    pub fn from_config(kv: &KeyValues) -> Result<Self> {
        let mut c = Self::default();
        kv.apply("rgb_eps", &mut c.rgb_eps)?;
        kv.apply("roughness_prior", &mut c.roughness_prior)?;
        kv.apply("spec_prior", &mut c.spec_prior)?;
        kv.apply("smooth_radius", &mut c.smooth_radius)?;
        Ok(c)
    }
}

/// Values of every loss term. The perceptual term is carried only so the
/// objective signature is complete; it must be zero.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossTerms {
    pub rgb: f64,
    pub vgg: f64,
    pub mask: f64,
    pub flame: f64,
    pub laplacian: f64,
    pub normal: f64,
    pub smooth: f64,
    pub roughness: f64,
    pub spec: f64,
    pub light: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub total: f64,
    /// Weighted contribution of each term, in a fixed order.
    pub breakdown: Vec<(&'static str, f64)>,
}

pub fn total_objective(terms: &LossTerms, weights: &LossWeights) -> Result<Objective> {
    if terms.vgg != 0.0 {
        return Err(Error::invalid("the perceptual loss is not supported and must be zero"));
    }
    let values = [
        ("rgb", terms.rgb, weights.rgb),
        ("vgg", terms.vgg, weights.vgg),
        ("mask", terms.mask, weights.mask),
        ("flame", terms.flame, weights.flame),
        ("laplacian", terms.laplacian, weights.laplacian),
        ("normal", terms.normal, weights.normal),
        ("smooth", terms.smooth, weights.smooth),
        ("r", terms.roughness, weights.roughness),
        ("spec", terms.spec, weights.spec),
        ("light", terms.light, weights.light),
    ];
    let mut total = 0.0;
    let mut breakdown = Vec::with_capacity(values.len());
    for (name, value, lambda) in values {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(Error::invalid(format!("loss term `{name}` is {value}")));
        }
        total += lambda * value;
        breakdown.push((name, lambda * value));
    }
    Ok(Objective { total, breakdown })
}
