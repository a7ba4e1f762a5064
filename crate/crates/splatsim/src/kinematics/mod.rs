//! Mapping simulation output back onto splats. Per Gaussian, the rest
//! covariance is pushed through the deformation gradient,
//! `Σ' = F Σ Fᵀ`, decomposed into scale/rotation, the scales clamped to
//! `[τ_min, τ_max]`, and the result blended back toward the rest pose
//! with the constraint scales `λ_R`, `λ_S`. The blended factors compose
//! into a general linear transform `A = Rᵗ diag(Sᵗ)` whose Gram matrix
//! `A Aᵀ` is the rendered covariance, so `Rᵗ` never needs
//! re-orthonormalization.
//!
//! Raw eigendecompositions are permutation- and sign-ambiguous, which
//! would make the correction `Q - R` meaningless; eigenvectors are
//! therefore permuted and sign-fixed against the rest rotation before
//! blending (isotropic covariances reuse the rest rotation outright).

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::config::ClampConfig;
use crate::error::{Error, Result};
use crate::math::symmetric_eigen_sorted;
use crate::scene::GaussianScene;
use crate::sim::ParticlePose;

/// Scale floor applied after blending.
pub const SCALE_FLOOR: f64 = 1e-6;

/// Relative eigenvalue spread below which a covariance counts as
/// isotropic and the rest rotation is reused.
const ISOTROPY_EPS: f64 = 1e-9;

/// Eigen-clamp bounds and correction blend weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClampParams {
    pub tau_min: f64,
    pub tau_max: f64,
    pub lambda_r: f64,
    pub lambda_s: f64,
}

impl ClampParams {
    pub fn new(tau_min: f64, tau_max: f64, lambda_r: f64, lambda_s: f64) -> Result<Self> {
        if !(tau_min > 0.0 && tau_min < tau_max) {
            return Err(Error::Config(format!(
                "clamp bounds must satisfy 0 < tau_min < tau_max, got {tau_min} .. {tau_max}"
            )));
        }
        if lambda_r < 0.0 || lambda_s < 0.0 {
            return Err(Error::Config(
                "constraint scales must be non-negative".into(),
            ));
        }
        Ok(ClampParams {
            tau_min,
            tau_max,
            lambda_r,
            lambda_s,
        })
    }
}

/// Deformed world covariance `Σ' = F Σ Fᵀ` for a rest pose
/// `Σ = R diag(S)² Rᵀ`, symmetrized against floating-point drift.
pub fn deformed_covariance(
    rotation: &Matrix3<f64>,
    scale: &Vector3<f64>,
    f: &Matrix3<f64>,
) -> Result<Matrix3<f64>> {
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "non-finite deformation gradient".into(),
        ));
    }
    let sigma = rotation
        * Matrix3::from_diagonal(&scale.component_mul(scale))
        * rotation.transpose();
    let s = f * sigma * f.transpose();
    Ok((s + s.transpose()) * 0.5)
}

/// Eigendecomposition of a symmetric covariance with the eigenbasis
/// aligned to the rest rotation: eigenpairs are greedily assigned to the
/// rest column with the largest |dot|, signs made positive, and the
/// determinant fixed to +1 by negating the last column if needed.
/// Returns `(Q_matched, S')` with `S' = sqrt(eigenvalues)` (negatives
/// from round-off clamp to zero). Isotropic input returns the rest
/// rotation exactly.
pub fn eigen_decompose_matched(
    sigma_prime: &Matrix3<f64>,
    r_rest: &Matrix3<f64>,
) -> (Matrix3<f64>, Vector3<f64>) {
    let (vals, vecs) = symmetric_eigen_sorted(sigma_prime);
    let s = Vector3::new(
        vals.x.max(0.0).sqrt(),
        vals.y.max(0.0).sqrt(),
        vals.z.max(0.0).sqrt(),
    );

    if vals.z - vals.x <= ISOTROPY_EPS * vals.z.abs().max(f64::MIN_POSITIVE) {
        return (*r_rest, Vector3::repeat(s.x.max(s.z)));
    }

    let mut dots = [[0.0f64; 3]; 3];
    for (e, row) in dots.iter_mut().enumerate() {
        for (r, d) in row.iter_mut().enumerate() {
            *d = vecs.column(e).dot(&r_rest.column(r));
        }
    }
    let mut q = Matrix3::zeros();
    let mut s_out = Vector3::zeros();
    let mut eig_used = [false; 3];
    let mut rest_used = [false; 3];
    for _ in 0..3 {
        let (mut best_e, mut best_r, mut best) = (usize::MAX, usize::MAX, -1.0);
        for e in 0..3 {
            if eig_used[e] {
                continue;
            }
            for r in 0..3 {
                if rest_used[r] {
                    continue;
                }
                if dots[e][r].abs() > best {
                    best = dots[e][r].abs();
                    best_e = e;
                    best_r = r;
                }
            }
        }
        eig_used[best_e] = true;
        rest_used[best_r] = true;
        let sign = if dots[best_e][best_r] < 0.0 { -1.0 } else { 1.0 };
        q.set_column(best_r, &(vecs.column(best_e) * sign));
        s_out[best_r] = s[best_e];
    }
    if q.determinant() < 0.0 {
        q.column_mut(2).neg_mut();
    }
    (q, s_out)
}

/// Componentwise clamp of the deformed scales into `[tau_min, tau_max]`.
pub fn adaptive_eigen_clamp(s_prime: &Vector3<f64>, tau_min: f64, tau_max: f64) -> Vector3<f64> {
    s_prime.map(|v| v.clamp(tau_min, tau_max))
}

/// Correction blend: `Rᵗ = R + λ_R (Q - R)`, `Sᵗ = S + λ_S (Sᵗᵃᵘ - S)`,
/// scales floored at [`SCALE_FLOOR`]. Evaluated as
/// `(1-λ)·rest + λ·target` so that λ = 1 reproduces the target exactly.
pub fn blend_correction(
    r_rest: &Matrix3<f64>,
    s_rest: &Vector3<f64>,
    q_matched: &Matrix3<f64>,
    s_tau: &Vector3<f64>,
    lambda_r: f64,
    lambda_s: f64,
) -> (Matrix3<f64>, Vector3<f64>) {
    let r_t = (1.0 - lambda_r) * r_rest + lambda_r * q_matched;
    let s_t = ((1.0 - lambda_s) * s_rest + lambda_s * s_tau).map(|v| v.max(SCALE_FLOOR));
    (r_t, s_t)
}

/// Linear render factor `A = Rᵗ diag(Sᵗ)`; consumers form `Σ = A Aᵀ`,
/// positive-semidefinite even when `Rᵗ` is not orthonormal.
pub fn compose_render_transform(r_t: &Matrix3<f64>, s_t: &Vector3<f64>) -> Matrix3<f64> {
    r_t * Matrix3::from_diagonal(s_t)
}

/// Full correction chain for one splat.
pub fn corrected_transform(
    rotation: &Matrix3<f64>,
    scale: &Vector3<f64>,
    f: &Matrix3<f64>,
    params: &ClampParams,
) -> Result<Matrix3<f64>> {
    let sigma = deformed_covariance(rotation, scale, f)?;
    let (q, s_prime) = eigen_decompose_matched(&sigma, rotation);
    let s_tau = adaptive_eigen_clamp(&s_prime, params.tau_min, params.tau_max);
    let (r_t, s_t) = blend_correction(rotation, scale, &q, &s_tau, params.lambda_r, params.lambda_s);
    Ok(compose_render_transform(&r_t, &s_t))
}

/// Uncorrected gradient-guided transform: a factor of the raw `Σ'`
/// without clamping or blending. The needle-artifact path the correction
/// exists to fix; kept for ablations.
pub fn deformed_transform_unclamped(
    rotation: &Matrix3<f64>,
    scale: &Vector3<f64>,
    f: &Matrix3<f64>,
) -> Result<Matrix3<f64>> {
    let sigma = deformed_covariance(rotation, scale, f)?;
    let (q, s_prime) = eigen_decompose_matched(&sigma, rotation);
    Ok(compose_render_transform(&q, &s_prime))
}

/// Per-object clamp bounds when the config leaves them unset:
/// scale-relative defaults `0.3·median` and `3·median` of the object's
/// rest scale components.
pub fn default_clamp_bounds(scene: &GaussianScene, object_id: u32) -> Option<(f64, f64)> {
    let mut scales: Vec<f64> = scene
        .gaussians
        .iter()
        .filter(|g| g.object_id.unwrap_or(0) == object_id)
        .flat_map(|g| {
            let s = g.scale();
            [s.x, s.y, s.z]
        })
        .collect();
    if scales.is_empty() {
        return None;
    }
    scales.sort_by(f64::total_cmp);
    let median = if scales.len() % 2 == 1 {
        scales[scales.len() / 2]
    } else {
        0.5 * (scales[scales.len() / 2 - 1] + scales[scales.len() / 2])
    };
    Some((0.3 * median, 3.0 * median))
}

/// Resolves the clamp parameters for one object from the config,
/// falling back to [`default_clamp_bounds`].
pub fn clamp_params_for_object(
    scene: &GaussianScene,
    object_id: u32,
    cfg: &ClampConfig,
) -> Result<ClampParams> {
    let (tau_min, tau_max) = match (cfg.tau_min, cfg.tau_max) {
        (Some(lo), Some(hi)) => (lo, hi),
        _ => default_clamp_bounds(scene, object_id).ok_or_else(|| {
            Error::Config(format!(
                "object {object_id} has no gaussians to derive clamp bounds from"
            ))
        })?,
    };
    ClampParams::new(tau_min, tau_max, cfg.lambda_r, cfg.lambda_s)
}

/// A scene posed for rendering: updated positions plus one linear
/// covariance factor per Gaussian.
#[derive(Debug, Clone)]
pub struct PosedScene {
    pub scene: GaussianScene,
    pub transforms: Vec<Matrix3<f64>>,
}

impl PosedScene {
    /// Rest pose: unchanged positions, `A = R diag(s)` everywhere.
    pub fn from_rest(scene: &GaussianScene) -> Self {
        let transforms = scene
            .gaussians
            .par_iter()
            .map(|g| g.linear_transform())
            .collect();
        PosedScene {
            scene: scene.clone(),
            transforms,
        }
    }

    /// Dumps per-Gaussian (μ, A) for offline re-rendering: 8-byte magic,
    /// count, then `index u32, μ 3×f32, A 9×f32` records.
    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        use byteorder::{LittleEndian, WriteBytesExt};
        use std::io::Write;
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        w.write_all(b"SPLPOSE\0").map_err(io)?;
        w.write_u64::<LittleEndian>(self.scene.len() as u64)
            .map_err(io)?;
        for (i, (g, a)) in self
            .scene
            .gaussians
            .iter()
            .zip(self.transforms.iter())
            .enumerate()
        {
            w.write_u32::<LittleEndian>(i as u32).map_err(io)?;
            for v in g.position {
                w.write_f32::<LittleEndian>(v).map_err(io)?;
            }
            for r in 0..3 {
                for c in 0..3 {
                    w.write_f32::<LittleEndian>(a[(r, c)] as f32).map_err(io)?;
                }
            }
        }
        w.flush().map_err(io)?;
        Ok(())
    }
}

/// Reads a posed-frame dump back as (index, μ, A) records.
pub fn load_posed_frame(
    path: impl AsRef<std::path::Path>,
) -> Result<Vec<(u32, [f32; 3], Matrix3<f64>)>> {
    use byteorder::{LittleEndian, ReadBytesExt};
    use std::io::Read;
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = std::io::BufReader::new(file);
    let io = |e| Error::io(path, e);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != b"SPLPOSE\0" {
        return Err(Error::Format(format!(
            "{}: not a posed-frame dump",
            path.display()
        )));
    }
    let count = r.read_u64::<LittleEndian>().map_err(io)? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let idx = r.read_u32::<LittleEndian>().map_err(io)?;
        let mut mu = [0f32; 3];
        for v in mu.iter_mut() {
            *v = r.read_f32::<LittleEndian>().map_err(io)?;
        }
        let mut a = Matrix3::zeros();
        for row in 0..3 {
            for col in 0..3 {
                a[(row, col)] = r.read_f32::<LittleEndian>().map_err(io)? as f64;
            }
        }
        out.push((idx, mu, a));
    }
    Ok(out)
}

/// Applies one simulation frame to the scene: simulated Gaussians move to
/// their particle positions and take corrected transforms; everything
/// else keeps its rest pose. Opacity and SH are untouched.
pub fn update_gaussians(
    scene: &GaussianScene,
    poses: &[ParticlePose],
    params: &BTreeMap<u32, ClampParams>,
) -> Result<PosedScene> {
    let mut posed = PosedScene::from_rest(scene);
    let updates: Vec<(usize, [f32; 3], Matrix3<f64>)> = poses
        .par_iter()
        .map(|pose| {
            let idx = pose.gaussian_index as usize;
            let g = scene.gaussians.get(idx).ok_or_else(|| {
                Error::Data(format!(
                    "trajectory references gaussian {idx} outside the scene ({} gaussians)",
                    scene.len()
                ))
            })?;
            let object_id = g.object_id.unwrap_or(0);
            let p = params.get(&object_id).ok_or_else(|| {
                Error::Config(format!(
                    "no clamp parameters for object {object_id} (gaussian {idx})"
                ))
            })?;
            let a = corrected_transform(&g.rotation(), &g.scale(), &pose.gradient_m(), p)?;
            Ok((idx, pose.position, a))
        })
        .collect::<Result<_>>()?;
    for (idx, position, a) in updates {
        posed.scene.gaussians[idx].position = position;
        posed.transforms[idx] = a;
    }
    Ok(posed)
}
