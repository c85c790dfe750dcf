use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use facecap::deform::{DeformModel, PoseParams};
use facecap::image::{DEFAULT_HAIR_CLASS, RgbImage};
use facecap::metrics::{evaluate_sequence, EvalOptions, WarpConfig, DEFAULT_INTERVAL_MS};
use facecap::mesh::{load_mesh, save_mesh};
use facecap::neural::{
    basis_rms, pretrain_deformer, Deformer, PretrainConfig, SinusoidalEncoding, DEFAULT_HIDDEN, DEFAULT_ITERATIONS,
    DEFAULT_LR, DEFAULT_SOFTPLUS_BETA,
};
use facecap::raster::{rasterize, render_depth, render_normals, render_semantic, render_shaded, Camera, RasterOptions};
use facecap::remesh::{edge_band_fraction, provenance_to_container, remesh as remesh_mesh, reproject_tables};
use facecap::synth::{generate, SynthConfig};
use facecap::track::ParamTrack;
use facecap::appearance::LightEvaluator;
use rayon::prelude::*;

use crate::settings::Settings;
use crate::RenderMode;

const DEFAULT_FREQUENCIES: usize = 10;
const DEFAULT_REMESH_ITERATIONS: usize = 5;
const DEFAULT_ORTHO_SIZE: (usize, usize) = (256, 256);

fn load_model(path: &Path) -> anyhow::Result<DeformModel> {
    DeformModel::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn load_track(path: &Path) -> anyhow::Result<ParamTrack> {
    ParamTrack::load(path).with_context(|| format!("loading track {}", path.display()))
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn pose(model: &Path, track: &Path, frame: usize, out: &Path) -> anyhow::Result<()> {
    let model = load_model(model)?;
    let track = load_track(track)?;
    let f = track.frame(frame)?;
    let vertices = model.pose_mesh(&f.pose, &f.expr)?;
    save_mesh(&model.mesh_with(vertices)?, out)?;
    Ok(())
}

/// Image size a perspective camera was built for, from its principal point.
fn native_size(camera: &Camera) -> (usize, usize) {
    match *camera {
        Camera::Perspective { cx, cy, .. } => {
            let w = (2.0 * cx).round();
            let h = (2.0 * cy).round();
            if w >= 1.0 && h >= 1.0 {
                (w as usize, h as usize)
            } else {
                DEFAULT_ORTHO_SIZE
            }
        }
        Camera::Orthographic { .. } => DEFAULT_ORTHO_SIZE,
    }
}

pub fn render(
    model: &Path,
    track: &Path,
    mode: RenderMode,
    lights: Option<&Path>,
    video: usize,
    size: Option<(usize, usize)>,
    out: &Path,
) -> anyhow::Result<()> {
    let model = load_model(model)?;
    let track = load_track(track)?;
    let lights = match (mode, lights) {
        (RenderMode::Shaded, None) => bail!("shaded rendering needs --lights"),
        (RenderMode::Shaded, Some(p)) => {
            let l = LightEvaluator::load(p).with_context(|| format!("loading lights {}", p.display()))?;
            l.video(video)?;
            Some(l)
        }
        _ => None,
    };
    let materials = match mode {
        RenderMode::Shaded => Some(model.materials().context("model has no materials for shaded rendering")?),
        _ => None,
    };
    let annotation = match mode {
        RenderMode::Semantic => Some(model.annotation().context("model has no semantic labels")?),
        _ => None,
    };
    create_dir(out)?;
    (0..track.len()).into_par_iter().try_for_each(|i| -> anyhow::Result<()> {
        let f = &track.frames()[i];
        let native = native_size(&f.camera);
        let (w, h) = size.unwrap_or(native);
        let camera = f.camera.resized(native, (w, h))?;
        let vertices = model.pose_mesh(&f.pose, &f.expr)?;
        let gbuf = rasterize(model.faces(), &vertices, &camera, w, h, &RasterOptions::default())?;
        let save = |img: RgbImage, prefix: &str| img.save_png(out.join(format!("{prefix}_{i:06}.png")));
        match mode {
            RenderMode::Shaded => {
                let mesh = model.mesh_with(vertices)?;
                let img = render_shaded(&gbuf, &mesh, materials.unwrap(), lights.as_ref().unwrap(), video, &camera)?;
                save(img, "frame")?;
            }
            RenderMode::Semantic => {
                render_semantic(&gbuf, model.faces(), annotation.unwrap())?
                    .save_png(out.join(format!("mask_{i:06}.png")))?;
            }
            RenderMode::Normals => save(render_normals(&gbuf, &model.mesh_with(vertices)?)?, "normals")?,
            RenderMode::Depth => save(render_depth(&gbuf), "depth")?,
        }
        Ok(())
    })
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub track: PathBuf,
    #[arg(long)]
    pub frames: PathBuf,
    #[arg(long)]
    pub masks: PathBuf,
    /// Warp pair interval.
    #[arg(long)]
    pub interval_ms: Option<f64>,
    /// Overrides the frame rate stored in the track.
    #[arg(long)]
    pub fps: Option<f64>,
    /// JSON report path.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

pub fn eval(s: &Settings, args: &EvalArgs, iou: bool) -> anyhow::Result<()> {
    let model = load_model(&args.model)?;
    let track = load_track(&args.track)?;
    let fps = match args.fps {
        Some(v) => Some(v),
        None => s.config().get("fps")?,
    };
    let options = EvalOptions {
        interval_ms: s.pick(args.interval_ms, "interval_ms", DEFAULT_INTERVAL_MS)?,
        fps,
        warp: WarpConfig {
            tau_frac: s.pick(None, "tau_frac", WarpConfig::default().tau_frac)?,
            hair_class: s.pick(None, "hair_class", DEFAULT_HAIR_CLASS)?,
        },
        raster: RasterOptions {
            cull_backfaces: s.pick(None, "cull_backfaces", RasterOptions::default().cull_backfaces)?,
        },
        compute_iou: iou,
        compute_warp: !iou,
    };
    let report = evaluate_sequence(&model, &track, &args.frames, &args.masks, &options)?;
    if let Some(p) = &args.report {
        report.save(p)?;
    }
    if let Some(m) = &report.semantic_iou {
        println!("semantic IoU: mean {} over {} frames", fmt_opt(m.mean), m.count);
    }
    if let Some(w) = &report.warp_psnr {
        println!(
            "warp PSNR: mean {} dB over {} pairs ({} skipped)",
            fmt_opt(w.mean),
            w.count,
            w.skipped
        );
    }
    if let Some(l) = &report.landmark_l1 {
        println!("landmark L1: mean {} over {} frames", fmt_opt(l.mean), l.count);
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.6}"))
}

fn parse_widths(text: &str) -> anyhow::Result<Vec<usize>> {
    text.split(',')
        .map(|w| w.trim().parse::<usize>().with_context(|| format!("bad layer width `{w}`")))
        .collect()
}

pub fn pretrain(
    s: &Settings,
    model: &Path,
    frequencies: Option<usize>,
    iters: Option<usize>,
    lr: Option<f64>,
    out: &Path,
) -> anyhow::Result<()> {
    let model = load_model(model)?;
    let frequencies = s.pick(frequencies, "frequencies", DEFAULT_FREQUENCIES)?;
    let config = PretrainConfig {
        iterations: s.pick(iters, "iterations", DEFAULT_ITERATIONS)?,
        lr: s.pick(lr, "lr", DEFAULT_LR)?,
    };
    let hidden = match s.config().get_str("deformer_hidden") {
        Some(t) => parse_widths(t)?,
        None => DEFAULT_HIDDEN.to_vec(),
    };
    let beta = s.pick(None, "softplus_beta", DEFAULT_SOFTPLUS_BETA)?;
    let seed = s.seed(0)?;
    let encoding = SinusoidalEncoding::new(frequencies, true);
    let deformer = Deformer::new(encoding, model.n_expr(), &hidden, beta, seed)?;
    let outcome = pretrain_deformer(&model, deformer, &config)?;
    let mut c = outcome.deformer.to_container()?;
    c.put_text(
        "pretrain",
        &format!(
            "seed = {seed}\niterations = {}\nlr = {:?}\nfinal_loss = {:?}\n",
            config.iterations, config.lr, outcome.final_loss
        ),
    )?;
    c.save(out)?;
    let mut csv = String::from("iteration,loss\n");
    for (i, l) in outcome.loss_history.iter().enumerate() {
        writeln!(csv, "{i},{l:?}").unwrap();
    }
    writeln!(csv, "{},{:?}", outcome.loss_history.len(), outcome.final_loss).unwrap();
    write_text(&out.with_extension("loss.csv"), &csv)?;
    let rms = basis_rms(model.expr_basis());
    let rel = if rms > 0.0 { outcome.final_loss.sqrt() / rms } else { 0.0 };
    println!("final loss {:e}, RMS error {:.4}% of basis RMS", outcome.final_loss, 100.0 * rel);
    Ok(())
}

pub fn remesh(
    s: &Settings,
    model: &Path,
    target_edge: Option<f64>,
    iterations: Option<usize>,
    out: &Path,
) -> anyhow::Result<()> {
    let model = load_model(model)?;
    let target = match target_edge {
        Some(t) => t,
        None => s
            .config()
            .get("target_edge")?
            .context("--target-edge is required")?,
    };
    let iterations = s.pick(iterations, "remesh_iterations", DEFAULT_REMESH_ITERATIONS)?;
    let result = remesh_mesh(&model.canonical_mesh(), target, iterations)?;
    let remeshed = reproject_tables(&model, &result.mesh, &result.provenance)?;
    let mut c = remeshed.to_container()?;
    provenance_to_container(&mut c, &result.provenance)?;
    c.save(out)?;
    println!(
        "{} -> {} vertices, {:.2}% of edges within [4/5, 4/3] of the target",
        model.vertex_count(),
        remeshed.vertex_count(),
        100.0 * edge_band_fraction(&result.mesh, target)
    );
    Ok(())
}

pub fn synth(
    s: &Settings,
    out: &Path,
    frames: Option<usize>,
    noise_deg: Option<f64>,
    size: Option<(usize, usize)>,
    fps: Option<f64>,
) -> anyhow::Result<()> {
    let d = SynthConfig::default();
    let (width, height) = match size {
        Some(wh) => wh,
        None => (s.pick(None, "width", d.width)?, s.pick(None, "height", d.height)?),
    };
    let config = SynthConfig {
        frames: s.pick(frames, "frames", d.frames)?,
        width,
        height,
        seed: s.seed(d.seed)?,
        noise_deg: s.pick(noise_deg, "noise_deg", d.noise_deg)?,
        fps: s.pick(fps, "fps", d.fps)?,
    };
    let written = generate(out, &config)?;
    println!(
        "wrote {} frames to {} and {}",
        config.frames,
        written.frames.display(),
        written.masks.display()
    );
    Ok(())
}

pub fn fit(model: &Path, target: &Path, out: &Path) -> anyhow::Result<()> {
    let model = load_model(model)?;
    let target = load_mesh(target).with_context(|| format!("loading target {}", target.display()))?;
    let fit = model.fit_expression(target.vertices(), &PoseParams::rest(model.n_joints()))?;
    let text: String = fit.psi.0.iter().map(|v| format!("{v:?}\n")).collect();
    write_text(out, &text)?;
    println!("fitted {} coefficients, residual {:e}", fit.psi.0.len(), fit.residual);
    Ok(())
}
