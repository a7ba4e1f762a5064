//! Scene model and external formats: Gaussian primitives, cameras,
//! instance-ID masks, and the splat PLY reader/writer.

use nalgebra::{Matrix3, Matrix4, Vector3};

use crate::error::{Error, Result};
use crate::math::quat_to_rotation;

mod cameras;
mod masks;
mod ply;

pub use cameras::{load_cameras, save_cameras, CameraRecord};
pub use masks::{load_id_mask, load_id_masks, save_id_mask};
pub use ply::{load_gaussian_ply, save_gaussian_ply};

/// Number of spherical-harmonics coefficients per Gaussian (degree 3, RGB).
pub const SH_COEFFS: usize = 48;

/// One splat: position, log-scales, rotation quaternion, logit opacity and
/// SH color, plus an optional object id attached by segmentation.
///
/// Scale and opacity are stored pre-activation exactly as they appear in
/// splat PLY files; use [`GaussianPrimitive::scale`] and
/// [`GaussianPrimitive::opacity`] for the activated values. The quaternion
/// is likewise kept verbatim (PLY round-trips are bit-exact) and normalized
/// by [`GaussianPrimitive::rotation`].
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrimitive {
    pub position: [f32; 3],
    pub log_scale: [f32; 3],
    /// Quaternion as (w, x, y, z).
    pub rotation_q: [f32; 4],
    pub opacity_logit: f32,
    /// Degree-3 SH, channel-major: `[dc_r, dc_g, dc_b, rest_r(15), rest_g(15), rest_b(15)]`.
    pub sh: [f32; SH_COEFFS],
    pub object_id: Option<u32>,
}

impl GaussianPrimitive {
    /// Isotropic unit-scale splat used as a construction baseline.
    pub fn at(position: [f32; 3]) -> Self {
        GaussianPrimitive {
            position,
            log_scale: [0.0; 3],
            rotation_q: [1.0, 0.0, 0.0, 0.0],
            opacity_logit: 0.0,
            sh: [0.0; SH_COEFFS],
            object_id: None,
        }
    }

    pub fn position_v(&self) -> Vector3<f64> {
        Vector3::new(
            self.position[0] as f64,
            self.position[1] as f64,
            self.position[2] as f64,
        )
    }

    /// Activated per-axis scales, `exp(log_scale)`.
    pub fn scale(&self) -> Vector3<f64> {
        Vector3::new(
            (self.log_scale[0] as f64).exp(),
            (self.log_scale[1] as f64).exp(),
            (self.log_scale[2] as f64).exp(),
        )
    }

    /// Activated opacity in [0, 1] (logistic of the stored logit).
    pub fn opacity(&self) -> f64 {
        1.0 / (1.0 + (-(self.opacity_logit as f64)).exp())
    }

    /// Normalized rotation matrix of the stored quaternion.
    pub fn rotation(&self) -> Matrix3<f64> {
        quat_to_rotation(self.rotation_q)
    }

    /// Default render transform `A = R diag(s)`; the world covariance is
    /// `Σ = A Aᵀ`.
    pub fn linear_transform(&self) -> Matrix3<f64> {
        self.rotation() * Matrix3::from_diagonal(&self.scale())
    }

    fn check_finite(&self, index: usize) -> Result<()> {
        let all = self
            .position
            .iter()
            .chain(self.log_scale.iter())
            .chain(self.rotation_q.iter())
            .chain(std::iter::once(&self.opacity_logit))
            .chain(self.sh.iter());
        for v in all {
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "non-finite value in gaussian at vertex index {index}"
                )));
            }
        }
        if self.rotation_q.iter().map(|v| v * v).sum::<f32>() == 0.0 {
            return Err(Error::Data(format!(
                "zero quaternion at vertex index {index}"
            )));
        }
        Ok(())
    }
}

/// Ordered collection of Gaussian primitives.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GaussianScene {
    pub gaussians: Vec<GaussianPrimitive>,
}

impl GaussianScene {
    pub fn new(gaussians: Vec<GaussianPrimitive>) -> Self {
        GaussianScene { gaussians }
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    /// True when any primitive carries an object id.
    pub fn has_object_ids(&self) -> bool {
        self.gaussians.iter().any(|g| g.object_id.is_some())
    }

    /// Distinct object ids present, ascending (absent ids count as 0).
    pub fn object_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self
            .gaussians
            .iter()
            .map(|g| g.object_id.unwrap_or(0))
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    fn validate(&self) -> Result<()> {
        for (i, g) in self.gaussians.iter().enumerate() {
            g.check_finite(i)?;
        }
        Ok(())
    }
}

/// Pinhole camera: intrinsics in pixels plus a rigid world-to-camera
/// transform. Convention: x right, y down, z forward; a pixel coordinate
/// (i, j) = (column, row) samples the continuous image plane at exactly
/// (i, j).
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub name: String,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// World-to-camera rigid transform.
    pub world_to_camera: Matrix4<f64>,
    /// Mask filename associated with this view, if any.
    pub mask_file: Option<String>,
}

impl Camera {
    /// Builds and validates a camera. The rotation block must be orthonormal
    /// within `ortho_tol` and right-handed.
    pub fn new(
        name: impl Into<String>,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        world_to_camera: Matrix4<f64>,
        mask_file: Option<String>,
    ) -> Result<Self> {
        let cam = Camera {
            name: name.into(),
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            world_to_camera,
            mask_file,
        };
        cam.validate(1e-4)?;
        Ok(cam)
    }

    fn validate(&self, ortho_tol: f64) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Data(format!(
                "camera '{}': zero image dimensions",
                self.name
            )));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::Data(format!(
                "camera '{}': non-positive focal length",
                self.name
            )));
        }
        let r = self.rotation();
        let err = (r.transpose() * r - Matrix3::identity()).abs().max();
        if err > ortho_tol {
            return Err(Error::Data(format!(
                "camera '{}': rotation not orthonormal (max deviation {err:.3e})",
                self.name
            )));
        }
        if r.determinant() <= 0.0 {
            return Err(Error::Data(format!(
                "camera '{}': left-handed rotation block",
                self.name
            )));
        }
        let bottom = self.world_to_camera.row(3);
        let expected = [0.0, 0.0, 0.0, 1.0];
        for (a, b) in bottom.iter().zip(expected.iter()) {
            if (a - b).abs() > 1e-9 {
                return Err(Error::Data(format!(
                    "camera '{}': world_to_camera bottom row is not [0,0,0,1]",
                    self.name
                )));
            }
        }
        Ok(())
    }

    /// Rotation block of the world-to-camera transform.
    pub fn rotation(&self) -> Matrix3<f64> {
        self.world_to_camera.fixed_view::<3, 3>(0, 0).into_owned()
    }

    /// Translation column of the world-to-camera transform.
    pub fn translation(&self) -> Vector3<f64> {
        self.world_to_camera.fixed_view::<3, 1>(0, 3).into_owned()
    }

    /// Camera center in world coordinates, `C = -Rᵀ t`.
    pub fn center(&self) -> Vector3<f64> {
        -self.rotation().transpose() * self.translation()
    }

    /// World point into camera coordinates.
    pub fn to_camera(&self, p_world: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * p_world + self.translation()
    }

    /// Perspective projection of a camera-space point onto the pixel grid.
    /// Caller must ensure `p_cam.z > 0`.
    pub fn project(&self, p_cam: &Vector3<f64>) -> (f64, f64) {
        (
            self.fx * p_cam.x / p_cam.z + self.cx,
            self.fy * p_cam.y / p_cam.z + self.cy,
        )
    }
}

/// Per-view raster of instance ids; 0 is background.
#[derive(Debug, Clone, PartialEq)]
pub struct IdMask {
    pub width: u32,
    pub height: u32,
    /// Row-major, `ids[row * width + col]`.
    pub ids: Vec<u16>,
}

impl IdMask {
    pub fn new(width: u32, height: u32) -> Self {
        IdMask {
            width,
            height,
            ids: vec![0; (width as usize) * (height as usize)],
        }
    }

    pub fn from_ids(width: u32, height: u32, ids: Vec<u16>) -> Result<Self> {
        if ids.len() != (width as usize) * (height as usize) {
            return Err(Error::Dimension(format!(
                "id buffer has {} entries for a {}x{} mask",
                ids.len(),
                width,
                height
            )));
        }
        Ok(IdMask { width, height, ids })
    }

    #[inline]
    pub fn get(&self, col: u32, row: u32) -> u16 {
        self.ids[(row as usize) * (self.width as usize) + col as usize]
    }

    #[inline]
    pub fn set(&mut self, col: u32, row: u32, id: u16) {
        self.ids[(row as usize) * (self.width as usize) + col as usize] = id;
    }

    /// Distinct non-background ids, ascending.
    pub fn object_ids(&self) -> Vec<u16> {
        let mut ids: Vec<u16> = self.ids.iter().copied().filter(|&v| v != 0).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}
