mod common;

use facecap::deform::{lbs, rodrigues, DeformModel, ExprParams, ModelParts, PoseParams};
use facecap::synth::toy_head;
use facecap::{Error, Vec3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

fn random_vec(rng: &mut Xoshiro256PlusPlus, s: f64) -> Vec3 {
    Vec3::new(rng.random_range(-s..s), rng.random_range(-s..s), rng.random_range(-s..s))
}

fn random_params(rng: &mut Xoshiro256PlusPlus, model: &DeformModel) -> (PoseParams, ExprParams) {
    let theta = PoseParams {
        joint_rotations: (0..model.n_joints()).map(|_| random_vec(rng, 0.6)).collect(),
        translation: random_vec(rng, 0.5),
    };
    let psi = ExprParams((0..model.n_expr()).map(|_| rng.random_range(-2.0..2.0)).collect());
    (theta, psi)
}

fn max_distance(a: &[Vec3], b: &[Vec3]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(p, q)| (p - q).amax()).fold(0.0, f64::max)
}

#[test]
fn rest_pose_is_canonical() {
    let model = toy_head().unwrap();
    let v = model
        .pose_mesh(&PoseParams::rest(model.n_joints()), &ExprParams::zeros(model.n_expr()))
        .unwrap();
    assert!(max_distance(&v, model.canonical()) <= 1e-12);
}

#[test]
fn pose_mesh_matches_compositional_oracle() {
    let model = toy_head().unwrap();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(21);
    for _ in 0..100 {
        let (theta, psi) = random_params(&mut rng, &model);
        let fast = model.pose_mesh(&theta, &psi).unwrap();
        let slow = common::pose_oracle(&model, &theta, &psi);
        let d = max_distance(&fast, &slow);
        assert!(d <= 1e-12, "deviation {d:e}");
    }
}

#[test]
fn fit_recovers_planted_expression() {
    let model = toy_head().unwrap();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(5);
    for _ in 0..5 {
        let mut theta = PoseParams::rest(model.n_joints());
        theta.translation = random_vec(&mut rng, 0.3);
        let psi = ExprParams((0..model.n_expr()).map(|_| rng.random_range(-3.0..3.0)).collect());
        let target = model.pose_mesh(&theta, &psi).unwrap();
        let fit = model.fit_expression(&target, &theta).unwrap();
        for (a, b) in fit.psi.0.iter().zip(&psi.0) {
            assert!((a - b).abs() <= 1e-8);
        }
        assert!(fit.residual < 1e-10);
    }
}

#[test]
fn duplicated_basis_column_is_rank_deficient() {
    let mut parts = toy_head().unwrap().into_parts();
    let n_e = parts.n_expr;
    for row in parts.expr_basis.chunks_exact_mut(n_e) {
        row[1] = row[0];
    }
    let model = DeformModel::new(parts).unwrap();
    let target = model.canonical().to_vec();
    let err = model.fit_expression(&target, &PoseParams::rest(model.n_joints())).unwrap_err();
    assert!(matches!(err, Error::RankDeficient { rank: 7, expected: 8 }));
    assert!(err.is_numerical());
}

#[test]
fn fit_rejects_rotated_pose() {
    let model = toy_head().unwrap();
    let mut theta = PoseParams::rest(model.n_joints());
    theta.joint_rotations[2] = Vec3::new(0.1, 0.0, 0.0);
    assert!(model.fit_expression(model.canonical(), &theta).is_err());
}

#[test]
fn invalid_tables_are_rejected() {
    let parts = toy_head().unwrap().into_parts();
    let mut p = parts.clone();
    p.skin_weights[0] += 0.1;
    assert!(DeformModel::new(p).is_err());
    let mut p = parts.clone();
    p.parents = vec![0, 2, 1];
    assert!(DeformModel::new(p).is_err());
    let mut p = parts.clone();
    p.expr_basis.pop();
    assert!(matches!(DeformModel::new(p), Err(Error::Dimension(_))));
    let mut p: ModelParts = parts;
    p.landmarks = Some(vec![1_000_000]);
    assert!(DeformModel::new(p).is_err());
}

#[test]
fn container_round_trip_preserves_posing() {
    let model = toy_head().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("head.fwb");
    model.save(&path).unwrap();
    let back = DeformModel::load(&path).unwrap();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(2);
    let (theta, psi) = random_params(&mut rng, &model);
    assert_eq!(model.pose_mesh(&theta, &psi).unwrap(), back.pose_mesh(&theta, &psi).unwrap());
    assert_eq!(model.annotation(), back.annotation());
    assert_eq!(model.landmarks(), back.landmarks());
}

proptest! {
    #[test]
    fn rodrigues_is_orthonormal(x in -3.0f64..3.0, y in -3.0f64..3.0, z in -3.0f64..3.0) {
        let r = rodrigues(&Vec3::new(x, y, z));
        let e = (r.transpose() * r - nalgebra::Matrix3::identity()).amax();
        prop_assert!(e < 1e-13);
        prop_assert!((r.determinant() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn single_joint_lbs_is_rigid(seed in 0u64..500) {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let pts: Vec<Vec3> = (0..6).map(|_| random_vec(&mut rng, 1.0)).collect();
        let theta = PoseParams { joint_rotations: vec![random_vec(&mut rng, 2.0)], translation: random_vec(&mut rng, 1.0) };
        let joint = random_vec(&mut rng, 0.5);
        let posed = lbs(&pts, &[joint], &theta, &[1.0; 6], &[0]).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let before = (pts[i] - pts[j]).norm();
                let after = (posed[i] - posed[j]).norm();
                prop_assert!((before - after).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn expression_is_linear(a in -2.0f64..2.0, b in -2.0f64..2.0, k in 0usize..8) {
        let model = toy_head().unwrap();
        let n = model.n_expr();
        let mut psi = ExprParams::unit(n, k);
        psi.0[k] = a + b;
        let sum = model.expression_offset(&psi).unwrap();
        psi.0[k] = a;
        let pa = model.expression_offset(&psi).unwrap();
        psi.0[k] = b;
        let pb = model.expression_offset(&psi).unwrap();
        for i in 0..sum.len() {
            prop_assert!((sum[i] - pa[i] - pb[i]).amax() < 1e-15);
        }
    }
}
