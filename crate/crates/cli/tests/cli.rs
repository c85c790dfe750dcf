mod common;

use std::path::Path;

use common::{assert_deterministic, code, facecap, ok, s, snapshot};
use facecap::deform::{DeformModel, ExprParams, PoseParams};
use facecap::mesh::save_obj;
use facecap::synth::toy_head;

fn synth_fixture(dir: &Path) {
    ok(&["synth", "--out", s(dir), "--frames", "11", "--size", "48x48", "--noise-deg", "1"]);
}

#[test]
fn every_command_is_deterministic() {
    let fx = tempfile::tempdir().unwrap();
    let d = fx.path();
    synth_fixture(d);
    let model = d.join("model.fwb");
    let track = d.join("track_noisy.fwb");
    let (m, t) = (s(&model), s(&track));
    let frames = d.join("frames");
    let masks = d.join("masks");
    let lights = d.join("lights.fwb");
    let config = d.join("small.cfg");
    std::fs::write(&config, "deformer_hidden = 16, 16\n").unwrap();
    let target = d.join("target.obj");
    ok(&["pose", "--model", m, "--track", t, "--frame", "3", "--out", s(&target)]);

    assert_deterministic(&["synth", "--out", "{out}", "--frames", "4", "--size", "40x32", "--seed", "3", "--noise-deg", "2"]);
    assert_deterministic(&["pose", "--model", m, "--track", t, "--frame", "2", "--out", "{out}/p.obj"]);
    assert_deterministic(&["pose", "--model", m, "--track", t, "--frame", "2", "--out", "{out}/p.fwb"]);
    for mode in ["shaded", "semantic", "normals", "depth"] {
        assert_deterministic(&[
            "render", "--model", m, "--track", t, "--mode", mode, "--lights", s(&lights), "--out", "{out}",
        ]);
    }
    assert_deterministic(&["render", "--model", m, "--track", t, "--mode", "depth", "--size", "20x30", "--out", "{out}"]);
    for cmd in ["eval-iou", "eval-warp"] {
        assert_deterministic(&[
            cmd, "--model", m, "--track", t, "--frames", s(&frames), "--masks", s(&masks), "--report", "{out}/r.json",
        ]);
    }
    assert_deterministic(&[
        "pretrain-deformer", "--config", s(&config), "--model", m, "--L", "3", "--iters", "15", "--seed", "4", "--out",
        "{out}/d.fwb",
    ]);
    assert_deterministic(&["remesh", "--model", m, "--target-edge", "0.2", "--iterations", "2", "--out", "{out}/r.fwb"]);
    assert_deterministic(&["fit", "--model", m, "--target", s(&target), "--out", "{out}/psi.txt"]);
}

#[test]
fn thread_count_does_not_change_renders() {
    let fx = tempfile::tempdir().unwrap();
    synth_fixture(fx.path());
    let model = fx.path().join("model.fwb");
    let track = fx.path().join("track_gt.fwb");
    let render = |threads: &str| {
        let dir = tempfile::tempdir().unwrap();
        ok(&["--threads", threads, "render", "--model", s(&model), "--track", s(&track), "--mode", "semantic", "--out", s(dir.path())]);
        snapshot(dir.path())
    };
    assert_eq!(render("1"), render("4"));
}

#[test]
fn ground_truth_evaluation_reports_perfect_scores() {
    let fx = tempfile::tempdir().unwrap();
    let d = fx.path();
    synth_fixture(d);
    let args = |cmd: &'static str| {
        vec![
            cmd.to_string(),
            "--model".into(),
            d.join("model.fwb").to_str().unwrap().into(),
            "--track".into(),
            d.join("track_gt.fwb").to_str().unwrap().into(),
            "--frames".into(),
            d.join("frames").to_str().unwrap().into(),
            "--masks".into(),
            d.join("masks").to_str().unwrap().into(),
        ]
    };
    let run = |cmd| {
        let a = args(cmd);
        let a: Vec<&str> = a.iter().map(String::as_str).collect();
        String::from_utf8(ok(&a).stdout).unwrap()
    };
    assert!(run("eval-iou").contains("mean 1.000000 over 11 frames"));
    assert!(run("eval-warp").contains("mean 99.000000 dB over 2 pairs"));
}

#[test]
fn exit_codes() {
    let fx = tempfile::tempdir().unwrap();
    let d = fx.path();
    let head = toy_head().unwrap();
    let model = d.join("head.fwb");
    head.save(&model).unwrap();

    assert_eq!(code(&["--version"]), 0);
    assert_eq!(code(&["no-such-command"]), 1);
    assert_eq!(code(&["pose", "--model", s(&model)]), 1);
    assert_eq!(code(&["synth", "--out", s(&d.join("x")), "--size", "0x4"]), 1);
    assert_eq!(code(&["fit", "--model", s(&d.join("missing.fwb")), "--target", "a.obj", "--out", "b.txt"]), 1);
    assert_eq!(code(&["remesh", "--model", s(&model), "--out", s(&d.join("r.fwb"))]), 1);
    assert_eq!(code(&["remesh", "--model", s(&model), "--target-edge", "-1", "--out", s(&d.join("r.fwb"))]), 1);

    let config = d.join("bad.cfg");
    std::fs::write(&config, "frames = many\n").unwrap();
    assert_eq!(code(&["--config", s(&config), "synth", "--out", s(&d.join("y"))]), 1);

    // Two identical basis columns make the expression fit rank deficient.
    let mut parts = head.into_parts();
    let n_e = parts.n_expr;
    for row in parts.expr_basis.chunks_exact_mut(n_e) {
        row[3] = row[2];
    }
    let degenerate = DeformModel::new(parts).unwrap();
    let bad_model = d.join("degenerate.fwb");
    degenerate.save(&bad_model).unwrap();
    let target = d.join("target.obj");
    let v = degenerate
        .pose_mesh(&PoseParams::rest(degenerate.n_joints()), &ExprParams::zeros(degenerate.n_expr()))
        .unwrap();
    save_obj(&degenerate.mesh_with(v).unwrap(), &target).unwrap();
    let out = facecap(&["fit", "--model", s(&bad_model), "--target", s(&target), "--out", s(&d.join("psi.txt"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rank"));
    assert_eq!(code(&["fit", "--model", s(&model), "--target", s(&target), "--out", s(&d.join("psi.txt"))]), 0);
}

#[test]
fn pretraining_writes_loss_history() {
    let fx = tempfile::tempdir().unwrap();
    let d = fx.path();
    toy_head().unwrap().save(d.join("head.fwb")).unwrap();
    let config = d.join("c.cfg");
    std::fs::write(&config, "deformer_hidden = 8\niterations = 7\n").unwrap();
    let out = d.join("net.fwb");
    ok(&["--config", s(&config), "pretrain-deformer", "--model", s(&d.join("head.fwb")), "--out", s(&out)]);
    let csv = std::fs::read_to_string(d.join("net.loss.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "iteration,loss");
    assert_eq!(lines.len(), 1 + 7 + 1);
    let net = facecap::neural::Deformer::from_container(&facecap::fwb::Container::load(&out).unwrap()).unwrap();
    assert_eq!(net.n_expr(), 8);
}
