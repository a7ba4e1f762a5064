//! Object-level segmentation of Gaussians: inverse projection of 2D
//! instance ids against surface depth maps, per-Gaussian majority voting
//! across views, object extraction, and mask metrics.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::render::{DepthMap, NEAR_PLANE};
use crate::scene::{Camera, GaussianScene, IdMask};

mod metrics;

pub use metrics::{mask_metrics, mbiou, miou, default_boundary_radius, ObjectScore};

/// Per-Gaussian vote counts, `object_id -> count`. One view contributes at
/// most one vote per Gaussian, so totals are bounded by the view count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteTable {
    votes: Vec<BTreeMap<u16, u32>>,
}

impl VoteTable {
    pub fn new(gaussian_count: usize) -> Self {
        VoteTable {
            votes: vec![BTreeMap::new(); gaussian_count],
        }
    }

    pub fn len(&self) -> usize {
        self.votes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.votes.is_empty()
    }

    pub fn counts(&self, gaussian: usize) -> &BTreeMap<u16, u32> {
        &self.votes[gaussian]
    }

    pub fn total_votes(&self, gaussian: usize) -> u32 {
        self.votes[gaussian].values().sum()
    }

    /// Plurality id per Gaussian: ties break to the smallest id, zero
    /// votes fall back to background (0).
    pub fn final_ids(&self) -> Vec<u16> {
        self.votes
            .iter()
            .map(|counts| {
                let mut best_id = 0u16;
                let mut best_count = 0u32;
                for (&id, &count) in counts {
                    // Ascending iteration: strictly-greater keeps the
                    // smallest id on ties.
                    if count > best_count {
                        best_count = count;
                        best_id = id;
                    }
                }
                best_id
            })
            .collect()
    }
}

/// Casts one view's votes. For each Gaussian whose center projects to a
/// valid pixel with a non-sentinel surface depth `d`, a vote for the
/// pixel's mask id is cast when `|z_c - d| <= d·tau_d` (background id 0
/// never votes). Off-image, behind-camera, and occluded Gaussians are
/// skipped.
pub fn assign_view_votes(
    scene: &GaussianScene,
    camera: &Camera,
    depth_map: &DepthMap,
    id_mask: &IdMask,
    tau_d: f64,
    votes: &mut VoteTable,
) -> Result<()> {
    if depth_map.width != camera.width || depth_map.height != camera.height {
        return Err(Error::Dimension(format!(
            "depth map is {}x{} but camera '{}' is {}x{}",
            depth_map.width, depth_map.height, camera.name, camera.width, camera.height
        )));
    }
    if id_mask.width != camera.width || id_mask.height != camera.height {
        return Err(Error::Dimension(format!(
            "id mask is {}x{} but camera '{}' is {}x{}",
            id_mask.width, id_mask.height, camera.name, camera.width, camera.height
        )));
    }
    if votes.len() != scene.len() {
        return Err(Error::Dimension(format!(
            "vote table holds {} gaussians, scene has {}",
            votes.len(),
            scene.len()
        )));
    }

    votes
        .votes
        .par_iter_mut()
        .zip(scene.gaussians.par_iter())
        .for_each(|(counts, g)| {
            let p_cam = camera.to_camera(&g.position_v());
            if p_cam.z <= NEAR_PLANE {
                return;
            }
            let (u, v) = camera.project(&p_cam);
            let col = u.round();
            let row = v.round();
            if col < 0.0 || row < 0.0 || col >= camera.width as f64 || row >= camera.height as f64
            {
                return;
            }
            let (col, row) = (col as u32, row as u32);
            let d = depth_map.get(col, row);
            if d == DepthMap::SENTINEL {
                return;
            }
            let d = d as f64;
            if (p_cam.z - d).abs() <= d * tau_d {
                let id = id_mask.get(col, row);
                if id != 0 {
                    *counts.entry(id).or_insert(0) += 1;
                }
            }
        });
    Ok(())
}

/// Writes the voted ids into the scene (background 0 for unvoted).
pub fn apply_final_ids(scene: &mut GaussianScene, ids: &[u16]) {
    assert_eq!(scene.len(), ids.len());
    for (g, &id) in scene.gaussians.iter_mut().zip(ids.iter()) {
        g.object_id = Some(id as u32);
    }
}

/// Subset of the scene carrying `object_id`, input order preserved. An
/// absent id yields an empty scene.
pub fn extract_object(scene: &GaussianScene, object_id: u32) -> GaussianScene {
    GaussianScene::new(
        scene
            .gaussians
            .iter()
            .filter(|g| g.object_id.unwrap_or(0) == object_id)
            .cloned()
            .collect(),
    )
}

/// Complement of [`extract_object`]: everything not carrying the id.
pub fn extract_complement(scene: &GaussianScene, object_id: u32) -> GaussianScene {
    GaussianScene::new(
        scene
            .gaussians
            .iter()
            .filter(|g| g.object_id.unwrap_or(0) != object_id)
            .cloned()
            .collect(),
    )
}

/// 2D instance mask from a segmented scene: each object's splats are
/// rendered alone into a surface depth map, and every pixel takes the id
/// of the nearest crossing object. This is the mask the 3D-level
/// evaluation scores against ground truth.
pub fn render_object_id_mask(
    scene: &GaussianScene,
    camera: &Camera,
    tau_t: f64,
    object_ids: &[u32],
) -> IdMask {
    let mut mask = IdMask::new(camera.width, camera.height);
    let mut best = vec![f32::INFINITY; mask.ids.len()];
    for &id in object_ids {
        if id == 0 {
            continue;
        }
        let subset = extract_object(scene, id);
        let depth = crate::render::render_surface_depth(&subset, camera, tau_t, None);
        for ((out, nearest), &d) in mask.ids.iter_mut().zip(best.iter_mut()).zip(&depth.depth) {
            if d != DepthMap::SENTINEL && d < *nearest {
                *nearest = d;
                *out = id as u16;
            }
        }
    }
    mask
}
