//! Skinned parametric head model.
//!
//! A posed vertex is
//!
//! ```text
//! lbs(x_c + correctives(theta) + expression(psi), joints(x_c), theta, weights)
//! ```
//!
//! Identity shape lives entirely in the canonical vertices, so joints are
//! regressed from `x_c` and there is no runtime shape vector.
//!
//! Table layouts (row-major, vertex outermost):
//! - `expr_basis`: `n_v x 3 x n_e`
//! - `pose_correctives`: `n_v x 3 x 9(n_j - 1)`
//! - `skin_weights`: `n_v x n_j`
//! - `joint_regressor`: `n_j x n_v`

use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix3};

use crate::appearance::VertexMaterials;
use crate::error::{Error, Result};
use crate::fwb::Container;
use crate::mesh::{FaceClass, SemanticAnnotation, TriMesh, Vec3};

pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Relative singular-value threshold below which the basis counts as rank
/// deficient.
pub const RANK_TOL: f64 = 1e-10;

/// Axis-angle to rotation matrix.
pub fn rodrigues(axis_angle: &Vec3) -> Matrix3<f64> {
    let theta2 = axis_angle.norm_squared();
    let k = Matrix3::new(
        0.0, -axis_angle.z, axis_angle.y,
        axis_angle.z, 0.0, -axis_angle.x,
        -axis_angle.y, axis_angle.x, 0.0,
    );
    // sin(t)/t and (1 - cos t)/t^2 via Taylor series near zero.
    let (a, b) = if theta2 < 1e-12 {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        let theta = theta2.sqrt();
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Matrix3::identity() + k * a + k * k * b
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseParams {
    /// One axis-angle vector per joint, radians.
    pub joint_rotations: Vec<Vec3>,
    pub translation: Vec3,
}

impl PoseParams {
    pub fn rest(n_joints: usize) -> Self {
        Self {
            joint_rotations: vec![Vec3::zeros(); n_joints],
            translation: Vec3::zeros(),
        }
    }

    pub fn is_rest(&self) -> bool {
        self.joint_rotations.iter().all(|r| *r == Vec3::zeros())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExprParams(pub Vec<f64>);

impl ExprParams {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn unit(n: usize, k: usize) -> Self {
        let mut v = vec![0.0; n];
        v[k] = 1.0;
        Self(v)
    }
}

/// Everything needed to assemble a [`DeformModel`]; validated by
/// [`DeformModel::new`].
#[derive(Debug, Clone)]
pub struct ModelParts {
    pub faces: Vec<[u32; 3]>,
    pub canonical: Vec<Vec3>,
    pub n_expr: usize,
    pub expr_basis: Vec<f64>,
    pub pose_correctives: Vec<f64>,
    pub skin_weights: Vec<f64>,
    pub joint_regressor: Vec<f64>,
    pub parents: Vec<u32>,
    pub annotation: Option<SemanticAnnotation>,
    pub landmarks: Option<Vec<u32>>,
    pub materials: Option<VertexMaterials>,
    /// Opaque record of the shape coefficients that produced `canonical`.
    pub shape_metadata: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct DeformModel {
    parts: ModelParts,
    n_joints: usize,
    /// Parent-before-child evaluation order.
    order: Vec<usize>,
}

impl DeformModel {
    pub fn new(parts: ModelParts) -> Result<Self> {
        let n_v = parts.canonical.len();
        let n_j = parts.parents.len();
        let n_e = parts.n_expr;
        if n_j == 0 {
            return Err(Error::invalid("model needs at least one joint"));
        }
        // Faces validated through the mesh constructor.
        TriMesh::new(parts.canonical.clone(), parts.faces.clone())?;
        let expect = |name: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(Error::dim(format!("{name}: expected {want} values, got {got}")))
            }
        };
        expect("expr_basis", parts.expr_basis.len(), n_v * 3 * n_e)?;
        expect("pose_correctives", parts.pose_correctives.len(), n_v * 3 * 9 * (n_j - 1))?;
        expect("skin_weights", parts.skin_weights.len(), n_v * n_j)?;
        expect("joint_regressor", parts.joint_regressor.len(), n_j * n_v)?;
        for (v, row) in parts.skin_weights.chunks_exact(n_j).enumerate() {
            if row.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                return Err(Error::invalid(format!("vertex {v} has a negative skin weight")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > WEIGHT_SUM_TOL {
                return Err(Error::invalid(format!("vertex {v} skin weights sum to {s}")));
            }
        }
        let order = joint_order(&parts.parents)?;
        if let Some(a) = &parts.annotation {
            expect("labels", a.labels().len(), n_v)?;
        }
        if let Some(l) = &parts.landmarks {
            if let Some(bad) = l.iter().find(|&&i| i as usize >= n_v) {
                return Err(Error::invalid(format!("landmark vertex {bad} out of range")));
            }
        }
        if let Some(m) = &parts.materials {
            expect("materials", m.len(), n_v)?;
        }
        Ok(Self {
            parts,
            n_joints: n_j,
            order,
        })
    }

    pub fn parts(&self) -> &ModelParts {
        &self.parts
    }

    pub fn into_parts(self) -> ModelParts {
        self.parts
    }

    pub fn vertex_count(&self) -> usize {
        self.parts.canonical.len()
    }

    pub fn n_expr(&self) -> usize {
        self.parts.n_expr
    }

    pub fn n_joints(&self) -> usize {
        self.n_joints
    }

    pub fn n_pose_features(&self) -> usize {
        9 * (self.n_joints - 1)
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.parts.faces
    }

    pub fn canonical(&self) -> &[Vec3] {
        &self.parts.canonical
    }

    pub fn parents(&self) -> &[u32] {
        &self.parts.parents
    }

    pub fn skin_weights(&self) -> &[f64] {
        &self.parts.skin_weights
    }

    pub fn annotation(&self) -> Option<&SemanticAnnotation> {
        self.parts.annotation.as_ref()
    }

    pub fn landmarks(&self) -> Option<&[u32]> {
        self.parts.landmarks.as_deref()
    }

    pub fn materials(&self) -> Option<&VertexMaterials> {
        self.parts.materials.as_ref()
    }

    pub fn canonical_mesh(&self) -> TriMesh {
        TriMesh::new(self.parts.canonical.clone(), self.parts.faces.clone())
            .expect("validated at construction")
    }

    pub fn mesh_with(&self, vertices: Vec<Vec3>) -> Result<TriMesh> {
        TriMesh::new(vertices, self.parts.faces.clone())
    }

    /// The `3 x n_e` basis block of vertex `v`, row-major.
    pub fn expr_block(&self, v: usize) -> &[f64] {
        let w = 3 * self.parts.n_expr;
        &self.parts.expr_basis[v * w..(v + 1) * w]
    }

    pub fn expr_basis(&self) -> &[f64] {
        &self.parts.expr_basis
    }

    pub fn pose_correctives_table(&self) -> &[f64] {
        &self.parts.pose_correctives
    }

    pub fn joint_regressor(&self) -> &[f64] {
        &self.parts.joint_regressor
    }

    fn check_psi(&self, psi: &ExprParams) -> Result<()> {
        if psi.0.len() != self.parts.n_expr {
            return Err(Error::dim(format!(
                "expression has {} coefficients, model expects {}",
                psi.0.len(),
                self.parts.n_expr
            )));
        }
        Ok(())
    }

    fn check_theta(&self, theta: &PoseParams) -> Result<()> {
        if theta.joint_rotations.len() != self.n_joints {
            return Err(Error::dim(format!(
                "pose has {} joint rotations, model expects {}",
                theta.joint_rotations.len(),
                self.n_joints
            )));
        }
        if theta
            .joint_rotations
            .iter()
            .chain(std::iter::once(&theta.translation))
            .any(|r| !r.iter().all(|x| x.is_finite()))
        {
            return Err(Error::invalid("pose contains non-finite values"));
        }
        Ok(())
    }

    pub fn expression_offset(&self, psi: &ExprParams) -> Result<Vec<Vec3>> {
        self.check_psi(psi)?;
        let n_e = self.parts.n_expr;
        Ok((0..self.vertex_count())
            .map(|v| {
                let b = self.expr_block(v);
                Vec3::from_fn(|c, _| {
                    b[c * n_e..(c + 1) * n_e]
                        .iter()
                        .zip(&psi.0)
                        .map(|(e, p)| e * p)
                        .sum()
                })
            })
            .collect())
    }

    /// `vec(R(theta_j) - I)` row-major, concatenated over non-root joints.
    pub fn pose_feature(&self, theta: &PoseParams) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        let mut f = Vec::with_capacity(self.n_pose_features());
        for r in &theta.joint_rotations[1..] {
            let d = rodrigues(r) - Matrix3::identity();
            for i in 0..3 {
                for j in 0..3 {
                    f.push(d[(i, j)]);
                }
            }
        }
        Ok(f)
    }

    pub fn pose_corrective_offsets(&self, theta: &PoseParams) -> Result<Vec<Vec3>> {
        let f = self.pose_feature(theta)?;
        let p = f.len();
        let table = &self.parts.pose_correctives;
        Ok((0..self.vertex_count())
            .map(|v| {
                Vec3::from_fn(|c, _| {
                    let row = &table[(v * 3 + c) * p..(v * 3 + c + 1) * p];
                    row.iter().zip(&f).map(|(a, b)| a * b).sum()
                })
            })
            .collect())
    }

    pub fn regress_joints(&self, vertices: &[Vec3]) -> Result<Vec<Vec3>> {
        let n_v = self.vertex_count();
        if vertices.len() != n_v {
            return Err(Error::dim(format!(
                "regressor expects {n_v} vertices, got {}",
                vertices.len()
            )));
        }
        Ok(self
            .parts
            .joint_regressor
            .chunks_exact(n_v)
            .map(|row| row.iter().zip(vertices).map(|(w, v)| v * *w).sum())
            .collect())
    }

    pub fn pose_mesh(&self, theta: &PoseParams, psi: &ExprParams) -> Result<Vec<Vec3>> {
        self.check_theta(theta)?;
        let expr = self.expression_offset(psi)?;
        let corr = self.pose_corrective_offsets(theta)?;
        let shaped: Vec<Vec3> = self
            .parts
            .canonical
            .iter()
            .zip(corr.iter().zip(&expr))
            .map(|(x, (p, e))| x + p + e)
            .collect();
        let joints = self.regress_joints(&self.parts.canonical)?;
        let transforms = self.joint_transforms(&joints, theta);
        Ok(skin(&shaped, &transforms, &self.parts.skin_weights, theta.translation))
    }

    fn joint_transforms(&self, joints: &[Vec3], theta: &PoseParams) -> Vec<Rigid> {
        world_transforms(&self.order, &self.parts.parents, joints, theta)
    }

    /// Least-squares expression at a rest pose (rotations zero; translation
    /// is removed first).
    pub fn fit_expression(&self, target: &[Vec3], theta: &PoseParams) -> Result<ExprFit> {
        self.check_theta(theta)?;
        if !theta.is_rest() {
            return Err(Error::invalid("fit_expression requires zero joint rotations"));
        }
        let n_v = self.vertex_count();
        if target.len() != n_v {
            return Err(Error::dim(format!("target has {} vertices, model {n_v}", target.len())));
        }
        let n_e = self.parts.n_expr;
        let a = DMatrix::from_row_slice(3 * n_v, n_e, &self.parts.expr_basis);
        let b = DVector::from_iterator(
            3 * n_v,
            target
                .iter()
                .zip(&self.parts.canonical)
                .flat_map(|(t, x)| (t - theta.translation - x).iter().copied().collect::<Vec<_>>()),
        );
        if n_e == 0 {
            return Ok(ExprFit {
                psi: ExprParams(vec![]),
                residual: b.norm(),
            });
        }
        let svd = a.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let rank = svd
            .singular_values
            .iter()
            .filter(|&&s| s > RANK_TOL * smax && s > 0.0)
            .count();
        if rank < n_e {
            return Err(Error::RankDeficient { rank, expected: n_e });
        }
        let x = svd
            .solve(&b, 0.0)
            .map_err(|e| Error::invalid(format!("least squares failed: {e}")))?;
        let residual = (&a * &x - &b).norm();
        Ok(ExprFit {
            psi: ExprParams(x.iter().copied().collect()),
            residual,
        })
    }

    pub fn to_container(&self) -> Result<Container> {
        let p = &self.parts;
        let n_v = self.vertex_count();
        let n_j = self.n_joints;
        let mut c = Container::new();
        c.put_f64("canonical", &[n_v, 3], p.canonical.iter().flat_map(|v| [v.x, v.y, v.z]).collect())?;
        c.put_u32("faces", &[p.faces.len(), 3], p.faces.iter().flatten().copied().collect())?;
        c.put_f64("expr_basis", &[n_v, 3, p.n_expr], p.expr_basis.clone())?;
        c.put_f64("pose_correctives", &[n_v, 3, 9 * (n_j - 1)], p.pose_correctives.clone())?;
        c.put_f64("skin_weights", &[n_v, n_j], p.skin_weights.clone())?;
        c.put_f64("joint_regressor", &[n_j, n_v], p.joint_regressor.clone())?;
        c.put_u32("parents", &[n_j], p.parents.clone())?;
        if let Some(a) = &p.annotation {
            c.put_u32("labels", &[n_v], a.labels().to_vec())?;
            c.put_text("class_names", &a.class_names_text())?;
        }
        if let Some(l) = &p.landmarks {
            c.put_u32("landmark_vertices", &[l.len()], l.clone())?;
        }
        if let Some(m) = &p.materials {
            m.write_chunks(&mut c)?;
        }
        if let Some(beta) = &p.shape_metadata {
            c.put_f64("beta", &[beta.len()], beta.clone())?;
        }
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let (cd, canon) = c.f64("canonical")?;
        if cd.len() != 2 || cd[1] != 3 {
            return Err(Error::Container("`canonical` must be n_v x 3".into()));
        }
        let n_v = cd[0];
        let (ed, expr) = c.f64("expr_basis")?;
        if ed.len() != 3 || ed[0] != n_v || ed[1] != 3 {
            return Err(Error::Container("`expr_basis` must be n_v x 3 x n_e".into()));
        }
        let (_, faces) = c.u32("faces")?;
        let (_, parents) = c.u32("parents")?;
        let annotation = match c.get("labels") {
            Some(_) => {
                let (_, labels) = c.u32("labels")?;
                let classes = if c.contains("class_names") {
                    SemanticAnnotation::parse_class_names(&c.text("class_names")?)?
                } else {
                    let max = labels.iter().copied().max().map_or(0, |m| m as usize + 1);
                    FaceClass::ALL.iter().copied().take(max).collect()
                };
                Some(SemanticAnnotation::new(classes, labels.to_vec())?)
            }
            None => None,
        };
        let landmarks = match c.get("landmark_vertices") {
            Some(_) => Some(c.u32("landmark_vertices")?.1.to_vec()),
            None => None,
        };
        let shape_metadata = match c.get("beta") {
            Some(_) => Some(c.f64("beta")?.1.to_vec()),
            None => None,
        };
        Self::new(ModelParts {
            faces: faces.chunks_exact(3).map(|f| [f[0], f[1], f[2]]).collect(),
            canonical: canon.chunks_exact(3).map(|p| Vec3::new(p[0], p[1], p[2])).collect(),
            n_expr: ed[2],
            expr_basis: expr.to_vec(),
            pose_correctives: c.f64("pose_correctives")?.1.to_vec(),
            skin_weights: c.f64("skin_weights")?.1.to_vec(),
            joint_regressor: c.f64("joint_regressor")?.1.to_vec(),
            parents: parents.to_vec(),
            annotation,
            landmarks,
            materials: VertexMaterials::read_chunks(c)?,
            shape_metadata,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container()?.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }
}

#[derive(Debug, Clone)]
pub struct ExprFit {
    pub psi: ExprParams,
    /// Euclidean norm of the stacked per-vertex residual.
    pub residual: f64,
}

/// Rigid transform `x -> r x + t`.
#[derive(Debug, Clone, Copy)]
pub struct Rigid {
    pub r: Matrix3<f64>,
    pub t: Vec3,
}

impl Rigid {
    fn then(&self, local: &Rigid) -> Rigid {
        Rigid {
            r: self.r * local.r,
            t: self.r * local.t + self.t,
        }
    }
}

fn joint_order(parents: &[u32]) -> Result<Vec<usize>> {
    let n = parents.len();
    if parents[0] != 0 {
        return Err(Error::invalid("joint 0 must be the root (its own parent)"));
    }
    if let Some(j) = (1..n).find(|&j| parents[j] as usize == j) {
        return Err(Error::invalid(format!("joint {j} is a second root")));
    }
    if let Some(j) = (0..n).find(|&j| parents[j] as usize >= n) {
        return Err(Error::invalid(format!("joint {j} has out-of-range parent")));
    }
    let mut depth: Vec<Option<usize>> = vec![None; n];
    depth[0] = Some(0);
    for start in 1..n {
        let mut chain = Vec::new();
        let mut j = start;
        while depth[j].is_none() {
            if chain.contains(&j) {
                return Err(Error::invalid(format!("joint hierarchy has a cycle through {j}")));
            }
            chain.push(j);
            j = parents[j] as usize;
        }
        let mut d = depth[j].unwrap();
        for &k in chain.iter().rev() {
            d += 1;
            depth[k] = Some(d);
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&j| (depth[j].unwrap(), j));
    Ok(order)
}

/// World transform of each joint: parent transform composed with a rotation
/// about the joint's rest position. Global translation is applied separately.
fn world_transforms(order: &[usize], parents: &[u32], joints: &[Vec3], theta: &PoseParams) -> Vec<Rigid> {
    let mut world = vec![
        Rigid {
            r: Matrix3::identity(),
            t: Vec3::zeros(),
        };
        parents.len()
    ];
    for &j in order {
        let r = rodrigues(&theta.joint_rotations[j]);
        let local = Rigid {
            r,
            t: joints[j] - r * joints[j],
        };
        world[j] = if j == 0 {
            local
        } else {
            world[parents[j] as usize].then(&local)
        };
    }
    world
}

fn skin(vertices: &[Vec3], transforms: &[Rigid], weights: &[f64], translation: Vec3) -> Vec<Vec3> {
    let n_j = transforms.len();
    vertices
        .iter()
        .zip(weights.chunks_exact(n_j))
        .map(|(v, w)| {
            let mut r = Matrix3::zeros();
            let mut t = Vec3::zeros();
            for (tf, &wj) in transforms.iter().zip(w) {
                if wj != 0.0 {
                    r += tf.r * wj;
                    t += tf.t * wj;
                }
            }
            r * v + t + translation
        })
        .collect()
}

/// Linear blend skinning of `vertices` about rest `joints`.
pub fn lbs(
    vertices: &[Vec3],
    joints: &[Vec3],
    theta: &PoseParams,
    weights: &[f64],
    parents: &[u32],
) -> Result<Vec<Vec3>> {
    let n_j = parents.len();
    if joints.len() != n_j || theta.joint_rotations.len() != n_j || weights.len() != vertices.len() * n_j {
        return Err(Error::dim("lbs inputs disagree on joint or vertex count"));
    }
    let order = joint_order(parents)?;
    let transforms = world_transforms(&order, parents, joints, theta);
    Ok(skin(vertices, &transforms, weights, theta.translation))
}
