//! Synthetic benchmark scenes: two opaque Gaussian-shell balls over a
//! static floor slab, a ring of surrounding cameras, and analytic
//! ground-truth instance masks computed by ray-sphere intersection
//! (independent of the rasterizer).

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Matrix4, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{PipelineConfig, SimParams};
use crate::error::Result;
use crate::render::dc_from_color;
use crate::scene::{
    save_cameras, save_gaussian_ply, save_id_mask, Camera, GaussianPrimitive, GaussianScene,
    IdMask,
};
use crate::sim::Material;

#[derive(Debug, Clone)]
pub struct SynthParams {
    pub gaussians_per_ball: usize,
    pub ball_radius: f64,
    pub ball_centers: [[f64; 3]; 2],
    /// Number of views, split over two elevation rings.
    pub views: usize,
    pub image_size: u32,
    pub camera_distance: f64,
    pub include_floor: bool,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            gaussians_per_ball: 2500,
            ball_radius: 0.25,
            ball_centers: [[-0.4, 0.0, 0.0], [0.4, 0.0, 0.0]],
            views: 8,
            image_size: 200,
            camera_distance: 3.0,
            include_floor: true,
            seed: 7,
        }
    }
}

/// Generated scene plus its ground truth.
#[derive(Debug, Clone)]
pub struct SynthScene {
    /// Scene without object ids (segmentation input).
    pub scene: GaussianScene,
    /// True object id per Gaussian (1, 2, or 0 for the floor).
    pub gt_ids: Vec<u16>,
    pub cameras: Vec<Camera>,
    /// Analytic instance masks, one per camera.
    pub masks: Vec<IdMask>,
}

/// Shell centers sit this many splat radii inside the nominal sphere so
/// the rendered silhouette (center + splat bulge) lands on the analytic
/// radius. Calibrated against the rasterizer's 50%-opacity contour.
const SHELL_INSET_SIGMA: f64 = 2.0;

fn ball_shell(
    rng: &mut ChaCha8Rng,
    center: Vector3<f64>,
    radius: f64,
    count: usize,
    color: [f64; 3],
) -> Vec<GaussianPrimitive> {
    // Mean surface spacing decides the splat size.
    let spacing = (4.0 * PI * radius * radius / count as f64).sqrt();
    let base_scale = 0.9 * spacing;
    let sample_radius = (radius - SHELL_INSET_SIGMA * base_scale).max(0.5 * radius);

    (0..count)
        .map(|_| {
            let dir = loop {
                let v = Vector3::new(
                    rng.gen_range(-1.0..1.0f64),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                );
                let n = v.norm();
                if n > 1e-3 && n <= 1.0 {
                    break v / n;
                }
            };
            let r = sample_radius * rng.gen_range(0.98..1.02);
            let pos = center + dir * r;
            let mut g = GaussianPrimitive::at([pos.x as f32, pos.y as f32, pos.z as f32]);
            let s = base_scale * rng.gen_range(0.9..1.1);
            g.log_scale = [
                (s as f32).ln(),
                ((s * 0.8) as f32).ln(),
                ((s * 0.6) as f32).ln(),
            ];
            g.rotation_q = [
                rng.gen_range(-1.0..1.0f32),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            g.opacity_logit = 3.0; // alpha ~ 0.95
            g.sh[0] = dc_from_color(color[0] + rng.gen_range(-0.05..0.05));
            g.sh[1] = dc_from_color(color[1] + rng.gen_range(-0.05..0.05));
            g.sh[2] = dc_from_color(color[2] + rng.gen_range(-0.05..0.05));
            g
        })
        .collect()
}

fn floor_slab(rng: &mut ChaCha8Rng, z: f64, extent: f64, spacing: f64) -> Vec<GaussianPrimitive> {
    let n = (2.0 * extent / spacing).round() as i64;
    let mut out = Vec::new();
    for i in 0..=n {
        for j in 0..=n {
            let x = -extent + i as f64 * spacing;
            let y = -extent + j as f64 * spacing;
            let mut g = GaussianPrimitive::at([x as f32, y as f32, z as f32]);
            let s = spacing * 0.8;
            g.log_scale = [(s as f32).ln(), (s as f32).ln(), ((s * 0.3) as f32).ln()];
            g.opacity_logit = 3.0;
            g.sh[0] = dc_from_color(0.35 + rng.gen_range(-0.03..0.03));
            g.sh[1] = dc_from_color(0.4 + rng.gen_range(-0.03..0.03));
            g.sh[2] = dc_from_color(0.35 + rng.gen_range(-0.03..0.03));
            out.push(g);
        }
    }
    out
}

/// Camera at `eye` looking at `target`, world +z up, x-right/y-down/
/// z-forward convention.
pub fn look_at_camera(
    name: impl Into<String>,
    eye: Vector3<f64>,
    target: Vector3<f64>,
    fx: f64,
    width: u32,
    height: u32,
    mask_file: Option<String>,
) -> Camera {
    let forward = (target - eye).normalize();
    let world_up = Vector3::new(0.0, 0.0, 1.0);
    let right = forward.cross(&world_up).normalize();
    let down = forward.cross(&right).normalize();
    let mut e = Matrix4::identity();
    for c in 0..3 {
        e[(0, c)] = right[c];
        e[(1, c)] = down[c];
        e[(2, c)] = forward[c];
    }
    let r = e.fixed_view::<3, 3>(0, 0).into_owned();
    let t = -r * eye;
    for rr in 0..3 {
        e[(rr, 3)] = t[rr];
    }
    Camera::new(
        name,
        fx,
        fx,
        (width - 1) as f64 / 2.0,
        (height - 1) as f64 / 2.0,
        width,
        height,
        e,
        mask_file,
    )
    .expect("look-at frame is orthonormal")
}

fn orbit_cameras(params: &SynthParams) -> Vec<Camera> {
    let elevations = [15f64.to_radians(), -15f64.to_radians()];
    (0..params.views)
        .map(|i| {
            let ring = i % 2;
            let azimuth = 2.0 * PI * (i as f64) / (params.views as f64) + 22.5f64.to_radians();
            let el = elevations[ring];
            let d = params.camera_distance;
            let eye = Vector3::new(
                d * el.cos() * azimuth.cos(),
                d * el.cos() * azimuth.sin(),
                d * el.sin(),
            );
            look_at_camera(
                format!("view_{i:03}"),
                eye,
                Vector3::zeros(),
                2.2 * params.image_size as f64,
                params.image_size,
                params.image_size,
                Some(format!("view_{i:03}.png")),
            )
        })
        .collect()
}

fn ray_sphere(origin: &Vector3<f64>, dir: &Vector3<f64>, center: &Vector3<f64>, radius: f64) -> Option<f64> {
    let oc = origin - center;
    let b = dir.dot(&oc);
    let disc = b * b - (oc.norm_squared() - radius * radius);
    if disc < 0.0 {
        return None;
    }
    let t = -b - disc.sqrt();
    (t > 0.0).then_some(t)
}

/// Analytic instance mask for one view: nearest ray-sphere hit wins.
pub fn analytic_mask(camera: &Camera, centers: &[Vector3<f64>], radius: f64) -> IdMask {
    let mut mask = IdMask::new(camera.width, camera.height);
    let origin = camera.center();
    let rot_t = camera.rotation().transpose();
    for row in 0..camera.height {
        for col in 0..camera.width {
            let dir_cam = Vector3::new(
                (col as f64 - camera.cx) / camera.fx,
                (row as f64 - camera.cy) / camera.fy,
                1.0,
            );
            let dir = (rot_t * dir_cam).normalize();
            let mut best: Option<(f64, u16)> = None;
            for (k, c) in centers.iter().enumerate() {
                if let Some(t) = ray_sphere(&origin, &dir, c, radius) {
                    if best.map_or(true, |(bt, _)| t < bt) {
                        best = Some((t, k as u16 + 1));
                    }
                }
            }
            if let Some((_, id)) = best {
                mask.set(col, row, id);
            }
        }
    }
    mask
}

/// Builds the full synthetic benchmark.
pub fn generate(params: &SynthParams) -> SynthScene {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let centers = [
        Vector3::from(params.ball_centers[0]),
        Vector3::from(params.ball_centers[1]),
    ];

    let mut gaussians = Vec::new();
    let mut gt_ids = Vec::new();
    let ball_colors = [[0.8, 0.25, 0.2], [0.2, 0.3, 0.8]];
    for (k, (&center, color)) in centers.iter().zip(ball_colors).enumerate() {
        let shell = ball_shell(
            &mut rng,
            center,
            params.ball_radius,
            params.gaussians_per_ball,
            color,
        );
        gt_ids.extend(std::iter::repeat(k as u16 + 1).take(shell.len()));
        gaussians.extend(shell);
    }
    if params.include_floor {
        let floor = floor_slab(&mut rng, -0.55, 0.7, 0.045);
        gt_ids.extend(std::iter::repeat(0).take(floor.len()));
        gaussians.extend(floor);
    }

    let cameras = orbit_cameras(params);
    let masks = cameras
        .iter()
        .map(|cam| analytic_mask(cam, &centers, params.ball_radius))
        .collect();

    SynthScene {
        scene: GaussianScene::new(gaussians),
        gt_ids,
        cameras,
        masks,
    }
}

impl SynthScene {
    /// Scene with the ground-truth ids embedded (for direct comparisons).
    pub fn scene_with_gt_ids(&self) -> GaussianScene {
        let mut scene = self.scene.clone();
        for (g, &id) in scene.gaussians.iter_mut().zip(self.gt_ids.iter()) {
            g.object_id = Some(id as u32);
        }
        scene
    }

    /// Writes scene.ply, cameras.json, masks/, and config.json under
    /// `dir`, ready for the pipeline CLI. Returns the config.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> Result<PipelineConfig> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir.join("masks")).map_err(|e| crate::Error::io(dir, e))?;
        save_gaussian_ply(&self.scene, dir.join("scene.ply"))?;
        save_cameras(&self.cameras, dir.join("cameras.json"))?;
        for (cam, mask) in self.cameras.iter().zip(self.masks.iter()) {
            let file = cam.mask_file.as_ref().expect("synth cameras carry masks");
            save_id_mask(mask, dir.join("masks").join(file))?;
        }
        let cfg = self.pipeline_config(dir);
        cfg.save(dir.join("config.json"))?;
        Ok(cfg)
    }

    /// Default pipeline configuration for the generated scene: paper
    /// material constants, CFL-safe step size, five rendered frames.
    pub fn pipeline_config(&self, dir: impl AsRef<Path>) -> PipelineConfig {
        let dir = dir.as_ref();
        let mut cfg = PipelineConfig {
            scene: dir.join("scene.ply"),
            cameras: dir.join("cameras.json"),
            mask_dir: dir.join("masks"),
            output_dir: dir.join("out"),
            materials: Default::default(),
            sim: SimParams {
                // CFL: dx ≈ 0.04 for the fitted 64³ grid and wave speed
                // sqrt(E/rho) = 100 -> dt well under 0.1·dx/c.
                dt: 2.5e-5,
                steps: 2000,
                frame_stride: 400,
                gravity: [0.0, 0.0, -9.8],
                ..Default::default()
            },
            segmentation: Default::default(),
            clamp: Default::default(),
            render: Default::default(),
            eval: Default::default(),
        };
        cfg.materials
            .insert(1, Material::elastic(1000.0, 1e7, 0.2, [2.0, 0.0, 0.0]));
        cfg.materials
            .insert(2, Material::elastic(1000.0, 1e7, 0.2, [1.0, -1.0, 0.0]));
        cfg
    }
}
