//! Stage orchestration behind a single config: segment, simulate,
//! render, eval. Each stage loads its inputs from the previous stage's
//! outputs, appends its record to the run manifest, and logs structured
//! `key=value` lines.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::kinematics::{clamp_params_for_object, update_gaussians, ClampParams};
use crate::render::{
    render_rgb, render_surface_depth, save_depth_raster, RenderOptions,
};
use crate::scene::{
    load_cameras, load_gaussian_ply, load_id_masks, save_gaussian_ply, Camera, GaussianScene,
};
use crate::segment::{
    apply_final_ids, assign_view_votes, default_boundary_radius, mask_metrics,
    render_object_id_mask, VoteTable,
};
use crate::sim::{
    init_sim, load_checkpoint, load_trajectory_frame, save_trajectory_frame, SimConfig, SimState,
};

/// Per-stage record in the run manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    pub seconds: f64,
    pub outputs: Vec<PathBuf>,
}

/// Per-object metric row (averaged over views).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricRow {
    pub object_id: u16,
    pub miou: f64,
    pub mbiou: f64,
}

/// Run-level metadata written to `manifest.json` in the output directory.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunManifest {
    #[serde(default)]
    pub config_sha256: String,
    #[serde(default)]
    pub stages: BTreeMap<String, StageRecord>,
    #[serde(default)]
    pub frame_count: u64,
    #[serde(default)]
    pub metrics: Vec<MetricRow>,
}

impl RunManifest {
    pub fn path(cfg: &PipelineConfig) -> PathBuf {
        cfg.output_dir.join("manifest.json")
    }

    pub fn load_or_default(path: &Path) -> RunManifest {
        std::fs::read(path)
            .ok()
            .and_then(|bytes| serde_json::from_slice(&bytes).ok())
            .unwrap_or_default()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

/// SHA-256 of the config file bytes, for the manifest.
pub fn config_hash(path: &Path) -> Result<String> {
    use sha2::{Digest, Sha256};
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(format!("{:x}", Sha256::digest(bytes)))
}

fn log_line(stage: &str, event: &str, detail: std::fmt::Arguments<'_>) {
    println!("stage={stage} event={event} {detail}");
}

fn record_stage(
    cfg: &PipelineConfig,
    hash: &str,
    name: &str,
    seconds: f64,
    outputs: Vec<PathBuf>,
    update: impl FnOnce(&mut RunManifest),
) -> Result<()> {
    let path = RunManifest::path(cfg);
    let mut manifest = RunManifest::load_or_default(&path);
    manifest.config_sha256 = hash.to_string();
    manifest.stages.insert(name.to_string(), StageRecord { seconds, outputs });
    update(&mut manifest);
    manifest.save(&path)
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn stage_tag<T>(stage: &str, result: Result<T>) -> Result<T> {
    result.map_err(|e| match e {
        Error::Numerical(m) => Error::Numerical(format!("[{stage}] {m}")),
        Error::Io { path, source } => Error::Config(format!(
            "[{stage}] i/o error on {}: {source}",
            path.display()
        )),
        other => Error::Config(format!("[{stage}] {other}")),
    })
}

pub fn segmented_scene_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.output_dir.join("segmented.ply")
}

fn frames_dir(cfg: &PipelineConfig) -> PathBuf {
    cfg.output_dir.join("frames")
}

fn frame_path(cfg: &PipelineConfig, frame: u64) -> PathBuf {
    frames_dir(cfg).join(format!("frame_{frame:05}.traj"))
}

/// Sorted list of existing trajectory frame files.
pub fn list_frames(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let dir = frames_dir(cfg);
    let mut frames: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| Error::io(&dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "traj"))
        .collect();
    frames.sort();
    Ok(frames)
}

/// Segmentation stage: renders the per-view surface depth maps, votes ids
/// onto Gaussians by inverse projection, and writes the segmented PLY,
/// the index→id sidecar CSV, and the depth rasters.
pub fn cmd_segment(cfg: &PipelineConfig, hash: &str) -> Result<()> {
    let t0 = Instant::now();
    let stage = "segment";
    let scene = stage_tag(stage, load_gaussian_ply(&cfg.scene))?;
    let cameras = stage_tag(stage, load_cameras(&cfg.cameras))?;
    let masks = stage_tag(stage, load_id_masks(&cfg.mask_dir, &cameras))?;
    log_line(
        stage,
        "loaded",
        format_args!("gaussians={} views={}", scene.len(), cameras.len()),
    );

    let depth_dir = cfg.output_dir.join("depth");
    ensure_dir(&depth_dir)?;
    let mut outputs = Vec::new();
    let mut votes = VoteTable::new(scene.len());
    for (cam, mask) in cameras.iter().zip(masks.iter()) {
        let tv = Instant::now();
        let depth = render_surface_depth(&scene, cam, cfg.segmentation.tau_t, None);
        assign_view_votes(&scene, cam, &depth, mask, cfg.segmentation.tau_d, &mut votes)?;
        let out = depth_dir.join(format!("{}.dpth", cam.name));
        save_depth_raster(&depth, &out)?;
        outputs.push(out);
        log_line(
            stage,
            "view",
            format_args!(
                "view={} valid_depth={} wall_ms={:.1}",
                cam.name,
                depth.valid_count(),
                tv.elapsed().as_secs_f64() * 1e3
            ),
        );
    }

    let ids = votes.final_ids();
    let mut segmented = scene;
    apply_final_ids(&mut segmented, &ids);

    ensure_dir(&cfg.output_dir)?;
    let ply_out = segmented_scene_path(cfg);
    save_gaussian_ply(&segmented, &ply_out)?;
    outputs.push(ply_out);

    let sidecar = cfg.output_dir.join("object_ids.csv");
    let mut csv = String::from("gaussian_index,object_id\n");
    for (i, id) in ids.iter().enumerate() {
        csv.push_str(&format!("{i},{id}\n"));
    }
    std::fs::write(&sidecar, csv).map_err(|e| Error::io(&sidecar, e))?;
    outputs.push(sidecar);

    let seconds = t0.elapsed().as_secs_f64();
    log_line(
        stage,
        "done",
        format_args!(
            "objects={} wall_s={seconds:.2}",
            segmented.object_ids().iter().filter(|&&v| v != 0).count()
        ),
    );
    record_stage(cfg, hash, stage, seconds, outputs, |_| {})
}

/// Builds the solver configuration from the pipeline config.
pub fn sim_config(cfg: &PipelineConfig) -> SimConfig {
    SimConfig {
        resolution: cfg.sim.grid_resolution,
        dx: cfg.sim.grid_dx,
        origin: cfg.sim.grid_origin,
        fit_margin: cfg.sim.fit_margin,
        gravity: cfg.sim.gravity,
        ground_z: cfg.sim.ground_z,
    }
}

/// Simulation stage. Initializes MLS-MPM over the segmented scene (or
/// restores `checkpoint.bin` when `resume` is set), steps `cfg.sim.steps`
/// times, and writes one trajectory frame every `frame_stride` substeps
/// plus a final checkpoint. On numerical failure the last checkpoint is
/// kept and the error propagates.
pub fn cmd_simulate(cfg: &PipelineConfig, hash: &str, resume: bool) -> Result<()> {
    let t0 = Instant::now();
    let stage = "simulate";
    let scene = stage_tag(stage, load_gaussian_ply(segmented_scene_path(cfg)))?;
    let mut state = stage_tag(stage, init_sim(&scene, &cfg.materials, &sim_config(cfg)))?;
    let ckpt_path = cfg.output_dir.join("checkpoint.bin");
    if resume {
        let ckpt = stage_tag(stage, load_checkpoint(&ckpt_path))?;
        stage_tag(stage, state.restore(ckpt))?;
        log_line(stage, "resumed", format_args!("step={}", state.step_index()));
    }
    log_line(
        stage,
        "init",
        format_args!(
            "particles={} grid={}x{}x{} dx={:.5}",
            state.particles().len(),
            state.grid.res[0],
            state.grid.res[1],
            state.grid.res[2],
            state.grid.dx
        ),
    );

    ensure_dir(&frames_dir(cfg))?;
    let mut outputs = Vec::new();
    let mut frame_count = 0u64;
    let dump = |state: &SimState, frame: u64| -> Result<PathBuf> {
        let path = frame_path(cfg, frame);
        save_trajectory_frame(&state.frame_snapshot(), &path)?;
        Ok(path)
    };
    if !resume {
        outputs.push(dump(&state, 0)?);
        frame_count = 1;
    }

    let start_step = state.step_index();
    let dt = cfg.sim.dt;
    for k in 0..cfg.sim.steps {
        if let Err(e) = state.step(dt) {
            // Keep the last good checkpoint for post-mortems.
            state.save_checkpoint(&ckpt_path).ok();
            return Err(Error::Numerical(format!("[{stage}] {e}")));
        }
        if (k + 1) % (cfg.sim.frame_stride as u64) == 0 {
            let frame = (state.step_index() - start_step).div_ceil(cfg.sim.frame_stride as u64);
            outputs.push(dump(&state, frame)?);
            frame_count = frame + 1;
            log_line(
                stage,
                "frame",
                format_args!(
                    "step={} frame={frame} inverted={} wall_s={:.2}",
                    state.step_index(),
                    state.inverted_last_step(),
                    t0.elapsed().as_secs_f64()
                ),
            );
        }
    }
    state.save_checkpoint(&ckpt_path)?;
    outputs.push(ckpt_path);

    let seconds = t0.elapsed().as_secs_f64();
    log_line(
        stage,
        "done",
        format_args!("steps={} frames={frame_count} wall_s={seconds:.2}", cfg.sim.steps),
    );
    record_stage(cfg, hash, stage, seconds, outputs, |m| {
        m.frame_count = frame_count;
    })
}

/// Clamp parameters per simulated object id, resolved from the config
/// (explicit bounds or per-object scale-relative defaults).
pub fn resolve_clamp_params(
    cfg: &PipelineConfig,
    scene: &GaussianScene,
) -> Result<BTreeMap<u32, ClampParams>> {
    let mut params = BTreeMap::new();
    for id in scene.object_ids() {
        if id == 0 {
            continue;
        }
        params.insert(id, clamp_params_for_object(scene, id, &cfg.clamp)?);
    }
    Ok(params)
}

fn render_cameras<'c>(cfg: &PipelineConfig, cameras: &'c [Camera]) -> Result<Vec<&'c Camera>> {
    if cfg.render.cameras.is_empty() {
        return Ok(vec![&cameras[0]]);
    }
    cfg.render
        .cameras
        .iter()
        .map(|&i| {
            cameras.get(i).ok_or_else(|| {
                Error::Config(format!(
                    "render camera index {i} out of range ({} cameras)",
                    cameras.len()
                ))
            })
        })
        .collect()
}

/// Render stage: applies every trajectory frame to the segmented scene
/// through the covariance correction and rasterizes the configured
/// cameras into zero-padded PNGs.
pub fn cmd_render(cfg: &PipelineConfig, hash: &str) -> Result<()> {
    let t0 = Instant::now();
    let stage = "render";
    let scene = stage_tag(stage, load_gaussian_ply(segmented_scene_path(cfg)))?;
    let cameras = stage_tag(stage, load_cameras(&cfg.cameras))?;
    if cameras.is_empty() {
        return Err(Error::Config(format!("[{stage}] camera set is empty")));
    }
    let cams = render_cameras(cfg, &cameras)?;
    let frames = stage_tag(stage, list_frames(cfg))?;
    if frames.is_empty() {
        return Err(Error::Config(format!(
            "[{stage}] no trajectory frames in {}; run simulate first",
            frames_dir(cfg).display()
        )));
    }
    let params = resolve_clamp_params(cfg, &scene)?;

    let render_dir = cfg.output_dir.join("renders");
    ensure_dir(&render_dir)?;
    let poses_dir = cfg.output_dir.join("poses");
    if cfg.render.dump_poses {
        ensure_dir(&poses_dir)?;
    }
    let opts = RenderOptions {
        background: cfg.render.background,
    };

    let mut outputs = Vec::new();
    for (fi, frame_file) in frames.iter().enumerate() {
        let tf = Instant::now();
        let snapshot = load_trajectory_frame(frame_file)?;
        let posed = update_gaussians(&scene, &snapshot.poses, &params)?;
        if cfg.render.dump_poses {
            let out = poses_dir.join(format!("frame_{fi:05}.pose"));
            posed.save(&out)?;
            outputs.push(out);
        }
        for (ci, cam) in cams.iter().enumerate() {
            let img = render_rgb(&posed.scene, cam, Some(&posed.transforms), &opts);
            if !img.is_finite() {
                return Err(Error::Numerical(format!(
                    "[{stage}] non-finite pixels in frame {fi}, camera {}",
                    cam.name
                )));
            }
            let out = render_dir.join(format!("frame_{fi:05}_cam{ci:03}.png"));
            img.save_png(&out)?;
            outputs.push(out);
        }
        log_line(
            stage,
            "frame",
            format_args!(
                "frame={fi} step={} wall_ms={:.1}",
                snapshot.step,
                tf.elapsed().as_secs_f64() * 1e3
            ),
        );
    }

    let seconds = t0.elapsed().as_secs_f64();
    log_line(
        stage,
        "done",
        format_args!(
            "frames={} cameras={} wall_s={seconds:.2}",
            frames.len(),
            cams.len()
        ),
    );
    record_stage(cfg, hash, stage, seconds, outputs, |_| {})
}

/// Evaluation stage: 3D-level protocol. Per view, each object is rendered
/// alone, pixels composite by nearest surface depth, and the resulting
/// instance mask is scored against the ground-truth masks.
pub fn cmd_eval(cfg: &PipelineConfig, hash: &str) -> Result<Vec<MetricRow>> {
    let t0 = Instant::now();
    let stage = "eval";
    let scene = stage_tag(stage, load_gaussian_ply(segmented_scene_path(cfg)))?;
    let cameras = stage_tag(stage, load_cameras(&cfg.cameras))?;
    let gt_dir = cfg.eval.gt_mask_dir.as_ref().unwrap_or(&cfg.mask_dir);
    let gt_masks = stage_tag(stage, load_id_masks(gt_dir, &cameras))?;

    let object_ids: Vec<u32> = scene.object_ids().into_iter().filter(|&v| v != 0).collect();
    if object_ids.is_empty() {
        return Err(Error::Config(format!(
            "[{stage}] segmented scene has no objects"
        )));
    }

    // Accumulate per-object scores over views.
    let mut acc: BTreeMap<u16, (f64, f64, u32)> = BTreeMap::new();
    for (cam, gt) in cameras.iter().zip(gt_masks.iter()) {
        let radius = cfg
            .eval
            .boundary_radius
            .unwrap_or_else(|| default_boundary_radius(cam.width, cam.height));
        let pred = render_object_id_mask(&scene, cam, cfg.segmentation.tau_t, &object_ids);
        for score in mask_metrics(&pred, gt, radius)? {
            let e = acc.entry(score.id).or_insert((0.0, 0.0, 0));
            e.0 += score.iou;
            e.1 += score.biou;
            e.2 += 1;
        }
        log_line(stage, "view", format_args!("view={}", cam.name));
    }

    let mut rows: Vec<MetricRow> = acc
        .into_iter()
        .map(|(id, (iou, biou, n))| MetricRow {
            object_id: id,
            miou: iou / n as f64,
            mbiou: biou / n as f64,
        })
        .collect();
    let mean = MetricRow {
        object_id: 0, // 0 marks the mean row
        miou: rows.iter().map(|r| r.miou).sum::<f64>() / rows.len() as f64,
        mbiou: rows.iter().map(|r| r.mbiou).sum::<f64>() / rows.len() as f64,
    };

    println!("object     mIoU     mBIoU");
    for r in &rows {
        println!("{:<10} {:.4}   {:.4}", r.object_id, r.miou, r.mbiou);
    }
    println!("{:<10} {:.4}   {:.4}", "mean", mean.miou, mean.mbiou);

    let csv_path = cfg.output_dir.join("metrics.csv");
    let mut csv = String::from("object_id,miou,mbiou\n");
    for r in &rows {
        csv.push_str(&format!("{},{:.6},{:.6}\n", r.object_id, r.miou, r.mbiou));
    }
    csv.push_str(&format!("mean,{:.6},{:.6}\n", mean.miou, mean.mbiou));
    std::fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;

    rows.push(mean);
    let seconds = t0.elapsed().as_secs_f64();
    log_line(stage, "done", format_args!("wall_s={seconds:.2}"));
    let rows_for_manifest = rows.clone();
    record_stage(cfg, hash, stage, seconds, vec![csv_path], |m| {
        m.metrics = rows_for_manifest;
    })?;
    Ok(rows)
}

/// Runs segment → simulate → render → eval.
pub fn cmd_all(cfg: &PipelineConfig, hash: &str) -> Result<()> {
    cmd_segment(cfg, hash)?;
    cmd_simulate(cfg, hash, false)?;
    cmd_render(cfg, hash)?;
    cmd_eval(cfg, hash)?;
    Ok(())
}
