use facecap::deform::DeformModel;
use facecap::metrics::{evaluate_sequence, EvalOptions};
use facecap::synth::{generate, perturb_jaw, toy_camera, toy_trajectory, SynthConfig};
use facecap::track::ParamTrack;

fn small() -> SynthConfig {
    SynthConfig { frames: 11, width: 64, height: 64, ..Default::default() }
}

#[test]
fn ground_truth_scores_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let out = generate(dir.path(), &small()).unwrap();
    let model = DeformModel::load(&out.model).unwrap();
    let track = ParamTrack::load(&out.gt_track).unwrap();
    let report = evaluate_sequence(&model, &track, &out.frames, &out.masks, &EvalOptions::default()).unwrap();
    let iou = report.semantic_iou.unwrap();
    assert_eq!(iou.count, 11);
    assert!(iou.per_item.iter().all(|v| *v == Some(1.0)));
    let warp = report.warp_psnr.unwrap();
    assert_eq!(warp.pairs, vec![[0, 5], [5, 10]]);
    assert!(warp.per_pair.iter().all(|v| *v == Some(99.0)));
}

#[test]
fn generation_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = SynthConfig { frames: 3, width: 32, height: 32, noise_deg: 1.0, ..Default::default() };
    generate(a.path(), &cfg).unwrap();
    generate(b.path(), &cfg).unwrap();
    for name in ["model.fwb", "lights.fwb", "track_gt.fwb", "track_noisy.fwb", "frames/frame_000002.png", "masks/mask_000001.png"] {
        assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn trajectory_repeats_with_its_period() {
    let t = toy_trajectory(12, 4, toy_camera(32, 32), 30.0, 5).unwrap();
    assert_eq!(t.frames()[1], t.frames()[6]);
    assert_ne!(t.frames()[1], t.frames()[2]);
    assert!(toy_trajectory(3, 4, toy_camera(32, 32), 30.0, 0).is_err());
    assert!(perturb_jaw(&t, -1.0, 0).is_err());
}
