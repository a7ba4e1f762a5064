//! The per-pixel blending core shared by RGB, depth-map, and mask
//! rendering. Splats are depth-sorted globally (ties by input index),
//! binned into 16×16 pixel tiles by conservative bounding boxes, then
//! every pixel walks its tile's list front to back.

use nalgebra::Matrix3;
use rayon::prelude::*;

use crate::scene::{Camera, GaussianScene, IdMask};

use super::{project_gaussian, DepthMap, ImageRgb, ALPHA_MAX, TRANSMITTANCE_FLOOR};

const TILE: usize = 16;

/// Rendering options; the background is composited under the remaining
/// transmittance.
#[derive(Debug, Clone)]
pub struct RenderOptions {
    pub background: [f64; 3],
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            background: [0.0; 3],
        }
    }
}

struct Prepared {
    mean: [f64; 2],
    // Inverse 2D covariance, symmetric: [a b; b c].
    inv_a: f64,
    inv_b: f64,
    inv_c: f64,
    bbox: [i64; 4],
    z: f32,
    color: [f64; 3],
    opacity: f64,
}

impl Prepared {
    #[inline]
    fn alpha_at(&self, px: f64, py: f64) -> f64 {
        let dx = px - self.mean[0];
        let dy = py - self.mean[1];
        let power = 0.5 * (self.inv_a * dx * dx + self.inv_c * dy * dy) + self.inv_b * dx * dy;
        if power < 0.0 {
            return 0.0; // numerically impossible for a PD covariance
        }
        (self.opacity * (-power).exp()).min(ALPHA_MAX)
    }
}

/// Projects, depth-sorts, and bins the scene for one view. `transforms`,
/// when given, supplies one linear covariance factor per Gaussian.
fn prepare(
    scene: &GaussianScene,
    camera: &Camera,
    transforms: Option<&[Matrix3<f64>]>,
) -> (Vec<Prepared>, Vec<Vec<u32>>) {
    if let Some(t) = transforms {
        assert_eq!(t.len(), scene.len(), "one transform per gaussian");
    }
    let mut projected: Vec<(usize, Prepared)> = scene
        .gaussians
        .par_iter()
        .enumerate()
        .filter_map(|(i, g)| {
            let splat = project_gaussian(g, camera, transforms.map(|t| &t[i]))?;
            let c = splat.cov2d;
            let det = c[(0, 0)] * c[(1, 1)] - c[(0, 1)] * c[(1, 0)];
            if !(det.is_finite() && det > 0.0) {
                return None;
            }
            let inv_det = 1.0 / det;
            Some((
                i,
                Prepared {
                    mean: splat.mean2d,
                    inv_a: c[(1, 1)] * inv_det,
                    inv_b: -c[(0, 1)] * inv_det,
                    inv_c: c[(0, 0)] * inv_det,
                    bbox: splat.bbox,
                    z: splat.z as f32,
                    color: splat.color,
                    opacity: splat.opacity,
                },
            ))
        })
        .collect();
    projected.sort_unstable_by(|(ia, a), (ib, b)| a.z.total_cmp(&b.z).then(ia.cmp(ib)));
    let splats: Vec<Prepared> = projected.into_iter().map(|(_, s)| s).collect();

    let tiles_x = (camera.width as usize).div_ceil(TILE);
    let tiles_y = (camera.height as usize).div_ceil(TILE);
    let mut tiles: Vec<Vec<u32>> = vec![Vec::new(); tiles_x * tiles_y];
    for (idx, s) in splats.iter().enumerate() {
        let tx0 = (s.bbox[0].max(0) as usize) / TILE;
        let tx1 = (s.bbox[1].max(0) as usize) / TILE;
        let ty0 = (s.bbox[2].max(0) as usize) / TILE;
        let ty1 = (s.bbox[3].max(0) as usize) / TILE;
        for ty in ty0..=ty1.min(tiles_y - 1) {
            for tx in tx0..=tx1.min(tiles_x - 1) {
                tiles[ty * tiles_x + tx].push(idx as u32);
            }
        }
    }
    (splats, tiles)
}

/// Alpha-blended RGB render. Per pixel: splats ascending by depth,
/// `C = Σ Tᵢ αᵢ cᵢ` with `Tᵢ = Π(1-αⱼ)`, early stop once transmittance
/// falls under [`TRANSMITTANCE_FLOOR`], background under the remainder.
pub fn render_rgb(
    scene: &GaussianScene,
    camera: &Camera,
    transforms: Option<&[Matrix3<f64>]>,
    opts: &RenderOptions,
) -> ImageRgb {
    let (splats, tiles) = prepare(scene, camera, transforms);
    let w = camera.width as usize;
    let tiles_x = w.div_ceil(TILE);
    let mut img = ImageRgb::new(camera.width, camera.height, [0.0; 3]);
    let bg = opts.background;

    img.data
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(row, out)| {
            let ty = row / TILE;
            let py = row as f64;
            for (col, px_out) in out.iter_mut().enumerate() {
                let list = &tiles[ty * tiles_x + col / TILE];
                let px = col as f64;
                let mut color = [0.0f64; 3];
                let mut t = 1.0f64;
                for &si in list {
                    let s = &splats[si as usize];
                    if (col as i64) < s.bbox[0]
                        || (col as i64) > s.bbox[1]
                        || (row as i64) < s.bbox[2]
                        || (row as i64) > s.bbox[3]
                    {
                        continue;
                    }
                    let alpha = s.alpha_at(px, py);
                    let weight = t * alpha;
                    color[0] += weight * s.color[0];
                    color[1] += weight * s.color[1];
                    color[2] += weight * s.color[2];
                    t *= 1.0 - alpha;
                    if t < TRANSMITTANCE_FLOOR {
                        break;
                    }
                }
                *px_out = [
                    color[0] + t * bg[0],
                    color[1] + t * bg[1],
                    color[2] + t * bg[2],
                ];
            }
        });
    img
}

/// Surface depth map: per pixel, march splats front to back accumulating
/// transmittance; the first splat that drops it below `tau_t` donates its
/// center depth. Pixels that never cross keep [`DepthMap::SENTINEL`].
pub fn render_surface_depth(
    scene: &GaussianScene,
    camera: &Camera,
    tau_t: f64,
    transforms: Option<&[Matrix3<f64>]>,
) -> DepthMap {
    debug_assert!(tau_t > 0.0 && tau_t < 1.0);
    let (splats, tiles) = prepare(scene, camera, transforms);
    let w = camera.width as usize;
    let tiles_x = w.div_ceil(TILE);
    let mut map = DepthMap::new(camera.width, camera.height);

    map.depth
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(row, out)| {
            let ty = row / TILE;
            let py = row as f64;
            for (col, d_out) in out.iter_mut().enumerate() {
                let list = &tiles[ty * tiles_x + col / TILE];
                let px = col as f64;
                let mut t = 1.0f64;
                for &si in list {
                    let s = &splats[si as usize];
                    if (col as i64) < s.bbox[0]
                        || (col as i64) > s.bbox[1]
                        || (row as i64) < s.bbox[2]
                        || (row as i64) > s.bbox[3]
                    {
                        continue;
                    }
                    t *= 1.0 - s.alpha_at(px, py);
                    if t < tau_t {
                        *d_out = s.z;
                        break;
                    }
                }
            }
        });
    map
}

/// Binary visibility mask of a scene subset: a pixel is 1 when the
/// subset's accumulated opacity exceeds `1 - tau_t`, i.e. when its
/// transmittance crosses `tau_t`.
pub fn render_binary_mask(
    scene_subset: &GaussianScene,
    camera: &Camera,
    tau_t: f64,
    transforms: Option<&[Matrix3<f64>]>,
) -> IdMask {
    let depth = render_surface_depth(scene_subset, camera, tau_t, transforms);
    let mut mask = IdMask::new(camera.width, camera.height);
    for (out, d) in mask.ids.iter_mut().zip(depth.depth.iter()) {
        *out = u16::from(*d != DepthMap::SENTINEL);
    }
    mask
}
