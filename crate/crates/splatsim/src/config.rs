//! Pipeline configuration: one JSON document drives every stage.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::Material;

/// Segmentation thresholds: `tau_t` is the transmittance cutoff for the
/// surface depth map, `tau_d` the relative depth tolerance of the inverse
/// projection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentationParams {
    pub tau_t: f64,
    pub tau_d: f64,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        SegmentationParams {
            tau_t: 0.5,
            tau_d: 0.03,
        }
    }
}

/// Eigen-clamp and correction-blend parameters. `tau_min`/`tau_max`
/// default to per-object scale-relative bounds when left unset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClampConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_max: Option<f64>,
    pub lambda_r: f64,
    pub lambda_s: f64,
}

impl Default for ClampConfig {
    fn default() -> Self {
        ClampConfig {
            tau_min: None,
            tau_max: None,
            lambda_r: 1.2,
            lambda_s: 0.8,
        }
    }
}

fn default_resolution() -> [u32; 3] {
    [64, 64, 64]
}

fn default_fit_margin() -> f64 {
    0.3
}

fn default_frame_stride() -> u32 {
    400
}

/// Simulation parameters. The grid box is either explicit
/// (`grid_origin` + `grid_dx`) or fitted around the simulated objects
/// with `fit_margin` slack per side.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimParams {
    pub dt: f64,
    #[serde(default = "default_resolution")]
    pub grid_resolution: [u32; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_dx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_origin: Option<[f64; 3]>,
    #[serde(default = "default_fit_margin")]
    pub fit_margin: f64,
    pub gravity: [f64; 3],
    pub steps: u64,
    #[serde(default = "default_frame_stride")]
    pub frame_stride: u32,
    /// Optional ground plane height (world z); nodes below it reject
    /// downward velocities.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_z: Option<f64>,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            dt: 1e-4,
            grid_resolution: default_resolution(),
            grid_dx: None,
            grid_origin: None,
            fit_margin: default_fit_margin(),
            gravity: [0.0, 0.0, -9.8],
            steps: 2000,
            frame_stride: default_frame_stride(),
            ground_z: None,
        }
    }
}

/// Render-stage options.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RenderConfig {
    /// Background color, linear RGB in [0,1].
    #[serde(default)]
    pub background: [f64; 3],
    /// Indices into the camera set to render; empty means the first camera.
    #[serde(default)]
    pub cameras: Vec<usize>,
    /// Also dump per-frame posed-splat binaries next to the PNGs.
    #[serde(default)]
    pub dump_poses: bool,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            background: [0.0; 3],
            cameras: Vec::new(),
            dump_poses: false,
        }
    }
}

/// Evaluation options; ground-truth masks default to the segmentation
/// mask directory.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EvalConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_mask_dir: Option<PathBuf>,
    /// Boundary band radius in pixels; defaults to 2% of the image diagonal.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_radius: Option<u32>,
}

/// Full pipeline configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub scene: PathBuf,
    pub cameras: PathBuf,
    pub mask_dir: PathBuf,
    pub output_dir: PathBuf,
    /// Per-object materials keyed by object id (keys are strings in JSON).
    #[serde(default)]
    pub materials: BTreeMap<u32, Material>,
    #[serde(default)]
    pub sim: SimParams,
    #[serde(default)]
    pub segmentation: SegmentationParams,
    #[serde(default)]
    pub clamp: ClampConfig,
    #[serde(default)]
    pub render: RenderConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let cfg: PipelineConfig = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(file), self)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.segmentation;
        if !(s.tau_t > 0.0 && s.tau_t < 1.0) {
            return Err(Error::Config(format!(
                "tau_t must be in (0,1), got {}",
                s.tau_t
            )));
        }
        if s.tau_d <= 0.0 {
            return Err(Error::Config(format!(
                "tau_d must be positive, got {}",
                s.tau_d
            )));
        }
        if let (Some(lo), Some(hi)) = (self.clamp.tau_min, self.clamp.tau_max) {
            if !(0.0 < lo && lo < hi) {
                return Err(Error::Config(format!(
                    "clamp bounds must satisfy 0 < tau_min < tau_max, got {lo} .. {hi}"
                )));
            }
        }
        if self.clamp.tau_min.is_some() != self.clamp.tau_max.is_some() {
            return Err(Error::Config(
                "tau_min and tau_max must be set together".into(),
            ));
        }
        if self.clamp.lambda_r < 0.0 || self.clamp.lambda_s < 0.0 {
            return Err(Error::Config("lambda_r/lambda_s must be >= 0".into()));
        }
        if self.sim.dt <= 0.0 {
            return Err(Error::Config(format!(
                "dt must be positive, got {}",
                self.sim.dt
            )));
        }
        if let Some(dx) = self.sim.grid_dx {
            if dx <= 0.0 {
                return Err(Error::Config(format!(
                    "grid_dx must be positive, got {dx}"
                )));
            }
        }
        if self.sim.grid_resolution.iter().any(|&r| r < 8) {
            return Err(Error::Config(
                "grid_resolution must be at least 8 nodes per axis".into(),
            ));
        }
        if self.sim.frame_stride == 0 {
            return Err(Error::Config("frame_stride must be positive".into()));
        }
        for (id, mat) in &self.materials {
            mat.validate()
                .map_err(|e| Error::Config(format!("material for object {id}: {e}")))?;
        }
        Ok(())
    }
}
