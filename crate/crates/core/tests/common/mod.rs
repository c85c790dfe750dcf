//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use facecap::deform::{DeformModel, ExprParams, PoseParams};
use facecap::neural::hashgrid::{FEATURES, LEVELS};
use facecap::neural::{Activation, HashGrid, Mlp};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use facecap::raster::Camera;
use facecap::Vec3;
use nalgebra::{Matrix4, Rotation3, Vector4};
use ndarray::Array2;

fn rotation(aa: &Vec3) -> nalgebra::Matrix3<f64> {
    Rotation3::from_scaled_axis(*aa).into_inner()
}

/// Posed vertices built step by step from the flat model tables, with
/// homogeneous 4x4 joint transforms composed along the parent chain.
pub fn pose_oracle(model: &DeformModel, theta: &PoseParams, psi: &ExprParams) -> Vec<Vec3> {
    let n_v = model.vertex_count();
    let n_e = model.n_expr();
    let n_j = model.n_joints();
    let canonical = model.canonical();

    let mut feature = Vec::new();
    for r in &theta.joint_rotations[1..] {
        let d = rotation(r) - nalgebra::Matrix3::identity();
        for i in 0..3 {
            for j in 0..3 {
                feature.push(d[(i, j)]);
            }
        }
    }
    let n_p = feature.len();

    let jr = model.joint_regressor();
    let joints: Vec<Vec3> = (0..n_j)
        .map(|j| (0..n_v).fold(Vec3::zeros(), |acc, v| acc + canonical[v] * jr[j * n_v + v]))
        .collect();

    let mut world: Vec<Option<Matrix4<f64>>> = vec![None; n_j];
    fn resolve(
        j: usize,
        parents: &[u32],
        joints: &[Vec3],
        theta: &PoseParams,
        world: &mut Vec<Option<Matrix4<f64>>>,
    ) -> Matrix4<f64> {
        if let Some(m) = world[j] {
            return m;
        }
        let r = rotation(&theta.joint_rotations[j]);
        let to = Matrix4::new_translation(&joints[j]);
        let back = Matrix4::new_translation(&-joints[j]);
        let local = to * r.to_homogeneous() * back;
        let m = if j == 0 {
            local
        } else {
            resolve(parents[j] as usize, parents, joints, theta, world) * local
        };
        world[j] = Some(m);
        m
    }
    let mats: Vec<Matrix4<f64>> = (0..n_j)
        .map(|j| resolve(j, model.parents(), &joints, theta, &mut world))
        .collect();

    let basis = model.expr_basis();
    let corr = model.pose_correctives_table();
    let weights = model.skin_weights();
    (0..n_v)
        .map(|v| {
            let mut x = canonical[v];
            for c in 0..3 {
                for e in 0..n_e {
                    x[c] += basis[(v * 3 + c) * n_e + e] * psi.0[e];
                }
                for f in 0..n_p {
                    x[c] += corr[(v * 3 + c) * n_p + f] * feature[f];
                }
            }
            let h = Vector4::new(x.x, x.y, x.z, 1.0);
            let mut out = Vector4::zeros();
            for j in 0..n_j {
                out += mats[j] * h * weights[v * n_j + j];
            }
            Vec3::new(out.x, out.y, out.z) + theta.translation
        })
        .collect()
}

/// Per-pixel record of the brute-force rasterizer: nearest triangle id,
/// face-order barycentrics and depth.
pub struct OraclePixel {
    pub id: u32,
    pub bary: [f64; 3],
    pub depth: f64,
}

/// Tests every triangle against every pixel center in id order. Counter-
/// clockwise world faces are front-facing; pixels on an edge belong to the
/// triangle whose edge is a top or left edge; depth ties within 1e-12 keep
/// the lower id.
pub fn raster_oracle(
    faces: &[[u32; 3]],
    vertices: &[Vec3],
    cam: &Camera,
    width: usize,
    height: usize,
    cull: bool,
) -> Vec<Option<OraclePixel>> {
    let proj: Vec<_> = vertices.iter().map(|v| cam.project(v, width, height).unwrap()).collect();
    let perspective = matches!(cam, Camera::Perspective { .. });
    let mut out: Vec<Option<OraclePixel>> = (0..width * height).map(|_| None).collect();
    for y in 0..height {
        for x in 0..width {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            for (id, f) in faces.iter().enumerate() {
                let p = f.map(|v| proj[v as usize]);
                if p.iter().any(|q| !q.in_front) {
                    continue;
                }
                // Twice the signed screen area, y down.
                let area = (p[1].x - p[0].x) * (p[2].y - p[0].y) - (p[1].y - p[0].y) * (p[2].x - p[0].x);
                if area == 0.0 || (cull && area > 0.0) {
                    continue;
                }
                let idx = if area > 0.0 { [0, 1, 2] } else { [0, 2, 1] };
                let q = idx.map(|k| p[k]);
                let mut w = [0.0; 3];
                let mut inside = true;
                for k in 0..3 {
                    let (a, b) = (q[(k + 1) % 3], q[(k + 2) % 3]);
                    w[k] = (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x);
                    let top = b.y == a.y && b.x > a.x;
                    let left = b.y < a.y;
                    if w[k] < 0.0 || (w[k] == 0.0 && !(top || left)) {
                        inside = false;
                    }
                }
                if !inside {
                    continue;
                }
                let s = area.abs();
                let l = w.map(|v| v / s);
                let (b, depth) = if perspective {
                    let inv = [l[0] / q[0].depth, l[1] / q[1].depth, l[2] / q[2].depth];
                    let sum = inv[0] + inv[1] + inv[2];
                    (inv.map(|v| v / sum), 1.0 / sum)
                } else {
                    (l, l[0] * q[0].depth + l[1] * q[1].depth + l[2] * q[2].depth)
                };
                let mut bary = [0.0; 3];
                for k in 0..3 {
                    bary[idx[k]] = b[k];
                }
                let slot = &mut out[y * width + x];
                let nearer = match slot {
                    None => true,
                    Some(cur) => depth < cur.depth - 1e-12,
                };
                if nearer {
                    *slot = Some(OraclePixel { id: id as u32, bary, depth });
                }
            }
        }
    }
    out
}

fn loss_at(net: &Mlp, x: &Array2<f64>, y: &Array2<f64>) -> f64 {
    let out = net.forward_batch(x.view()).unwrap();
    (&out - y).iter().map(|d| d * d).sum::<f64>() / out.len() as f64
}

/// Largest relative disagreement between analytic gradients and central
/// differences of the loss over every parameter.
pub fn max_fd_error(mut net: Mlp, x: &Array2<f64>, y: &Array2<f64>, h: f64) -> f64 {
    let (grads, _) = net.mse_gradients(x.view(), y.view()).unwrap();
    let analytic: Vec<Vec<f64>> = grads.slices().iter().map(|s| s.to_vec()).collect();
    let mut worst: f64 = 0.0;
    for (g, group) in analytic.iter().enumerate() {
        for i in 0..group.len() {
            let orig = net.param_slices_mut()[g][i];
            net.param_slices_mut()[g][i] = orig + h;
            let up = loss_at(&net, x, y);
            net.param_slices_mut()[g][i] = orig - h;
            let down = loss_at(&net, x, y);
            net.param_slices_mut()[g][i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = group[i];
            let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            worst = worst.max(err);
        }
    }
    worst
}

/// The three seeded networks, batches and targets of the gradient check.
pub fn gradient_cases() -> Vec<(Mlp, Array2<f64>, Array2<f64>)> {
    let cases: [(&[usize], Activation, Activation); 3] = [
        (&[4, 6, 3], Activation::Softplus { beta: 100.0 }, Activation::Linear),
        (&[5, 8, 8, 2], Activation::Sigmoid, Activation::Sigmoid),
        (&[3, 7, 5, 4, 1], Activation::Softplus { beta: 1.0 }, Activation::Linear),
    ];
    cases
        .into_iter()
        .enumerate()
        .map(|(seed, (widths, hidden, output))| {
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed as u64 + 10);
            let mut net = Mlp::kaiming(widths, hidden, output, &mut rng).unwrap();
            for l in net.layers_mut() {
                l.bias.mapv_inplace(|_| rng.random_range(-0.3..0.3));
            }
            let mut batch = |cols| Array2::from_shape_fn((6, cols), |_| rng.random_range(-1.0..1.0));
            let x = batch(widths[0]);
            let y = batch(*widths.last().unwrap());
            (net, x, y)
        })
        .collect()
}

/// Adam written out per scalar with `powf` bias corrections.
pub fn adam_reference(w0: f64, lr: f64, steps: usize) -> Vec<f64> {
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let (mut w, mut m, mut v) = (w0, 0.0, 0.0);
    let mut out = Vec::new();
    for t in 1..=steps {
        let g = 2.0 * (w - 3.0);
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let mh = m / (1.0 - b1.powf(t as f64));
        let vh = v / (1.0 - b2.powf(t as f64));
        w -= lr * mh / (vh.sqrt() + eps);
        out.push(w);
    }
    out
}

fn naive_hash(i: u32, j: u32, k: u32, t: usize) -> usize {
    let p = |a: u32, m: u64| (a as u64 * m) & 0xffff_ffff;
    ((p(i, 1) ^ p(j, 2_654_435_761) ^ p(k, 805_459_861)) % t as u64) as usize
}

pub fn naive_encode(grid: &HashGrid, x: &Vec3) -> Vec<f64> {
    let growth = ((4096.0f64).ln() - (16.0f64).ln()) / 15.0;
    let mut out = vec![0.0; LEVELS * FEATURES];
    for l in 0..grid.active_levels() {
        let n = (16.0 * (growth * l as f64).exp()).round();
        for corner in 0..8 {
            let mut w = 1.0;
            let mut idx = [0u32; 3];
            for d in 0..3 {
                let p = x[d] * n;
                let lo = p.floor();
                let up = (corner >> d) & 1 == 1;
                idx[d] = lo as u32 + u32::from(up);
                w *= if up { p - lo } else { 1.0 - (p - lo) };
            }
            let slot = naive_hash(idx[0], idx[1], idx[2], grid.table_size());
            for f in 0..FEATURES {
                out[l * FEATURES + f] += w * grid.table(l)[slot * FEATURES + f] as f64;
            }
        }
    }
    out
}

