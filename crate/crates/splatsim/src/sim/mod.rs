//! MLS-MPM solver: one particle per simulated Gaussian, a background
//! Eulerian grid, quadratic B-spline transfers, and fixed-corotated
//! elasticity.
//!
//! A step runs particle-to-grid scatter (mass, APIC momentum, MLS force),
//! the explicit grid momentum update with boundary handling, then
//! grid-to-particle gather updating velocity, affine matrix, deformation
//! gradient, and position. Per-particle work is parallel; the scatter is a
//! single ordered pass, so trajectories are bit-reproducible at any thread
//! count.
//!
//! Stability: explicit integration wants `dt <= 0.1 * dx / sqrt(E / rho)`.

use std::collections::{BTreeMap, HashMap, HashSet};

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scene::GaussianScene;

mod checkpoint;
mod elastic;
mod material;

pub use checkpoint::{
    load_checkpoint, load_trajectory_frame, save_trajectory_frame, Checkpoint, FrameSnapshot,
    ParticlePose,
};
pub use elastic::{fixed_corotated_stress, StressEval, SINGULAR_VALUE_FLOOR};
pub use material::{ConstitutiveModel, Material};

/// Grid nodes this close to a face form the wall band; particles must
/// keep their stencil inside the band.
pub const BOUNDARY_BAND: usize = 3;

/// One material point carrying the Lagrangian state of a Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub x: Vector3<f64>,
    pub v: Vector3<f64>,
    /// Deformation gradient.
    pub f: Matrix3<f64>,
    /// APIC affine velocity matrix.
    pub c: Matrix3<f64>,
    pub mass: f64,
    pub volume0: f64,
    /// Index into [`SimState::materials`].
    pub material: u32,
    /// Index of the source Gaussian in the full scene.
    pub gaussian_index: u32,
}

/// Background Eulerian grid. `vel` holds momentum after the scatter and
/// velocity after [`SimState::grid_update`].
#[derive(Debug, Clone)]
pub struct Grid {
    /// Nodes per axis.
    pub res: [usize; 3],
    /// Node spacing (world units).
    pub dx: f64,
    /// World position of node (0, 0, 0).
    pub origin: Vector3<f64>,
    pub mass: Vec<f64>,
    pub vel: Vec<Vector3<f64>>,
}

impl Grid {
    pub fn new(res: [usize; 3], dx: f64, origin: Vector3<f64>) -> Self {
        let n = res[0] * res[1] * res[2];
        Grid {
            res,
            dx,
            origin,
            mass: vec![0.0; n],
            vel: vec![Vector3::zeros(); n],
        }
    }

    #[inline]
    pub fn node_index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.res[1] + j) * self.res[2] + k
    }

    /// World position of node (i, j, k).
    pub fn node_position(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        self.origin + Vector3::new(i as f64, j as f64, k as f64) * self.dx
    }

    pub fn clear(&mut self) {
        self.mass.fill(0.0);
        self.vel.fill(Vector3::zeros());
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Sum of `vel` over massive nodes; momentum right after a scatter.
    pub fn total_momentum(&self) -> Vector3<f64> {
        self.vel
            .iter()
            .zip(self.mass.iter())
            .filter(|(_, &m)| m > 0.0)
            .map(|(v, _)| *v)
            .sum()
    }

    /// Momentum-to-velocity conversion, gravity, and boundary conditions.
    /// Wall nodes reject velocities pointing out of the domain (separate
    /// condition); an optional ground plane rejects downward velocities on
    /// nodes at or below it. Zero-mass nodes are zeroed.
    pub fn update(&mut self, dt: f64, gravity: Vector3<f64>, ground_z: Option<f64>) {
        let res = self.res;
        let dx = self.dx;
        let origin_z = self.origin.z;
        let nyz = res[1] * res[2];
        let mass = &self.mass;
        let vel = &mut self.vel;
        vel.par_iter_mut()
            .enumerate()
            .for_each(|(idx, v)| {
                if mass[idx] <= 0.0 {
                    *v = Vector3::zeros();
                    return;
                }
                let i = idx / nyz;
                let j = (idx / res[2]) % res[1];
                let k = idx % res[2];
                let mut vel = *v / mass[idx] + dt * gravity;
                for (axis, n) in [(0usize, i), (1, j), (2, k)] {
                    if n < BOUNDARY_BAND && vel[axis] < 0.0 {
                        vel[axis] = 0.0;
                    }
                    if n + BOUNDARY_BAND >= res[axis] && vel[axis] > 0.0 {
                        vel[axis] = 0.0;
                    }
                }
                if let Some(gz) = ground_z {
                    let node_z = origin_z + k as f64 * dx;
                    if node_z <= gz && vel.z < 0.0 {
                        vel.z = 0.0;
                    }
                }
                *v = vel;
            });
    }
}

/// Grid sizing and global forces for a run.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub resolution: [u32; 3],
    /// Explicit node spacing; fitted around the particles when `None`.
    pub dx: Option<f64>,
    /// Explicit origin; fitted when `None`.
    pub origin: Option<[f64; 3]>,
    /// Extra room per side when fitting, as a fraction of the largest
    /// object extent (covers motion during the run).
    pub fit_margin: f64,
    pub gravity: [f64; 3],
    pub ground_z: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            resolution: [64, 64, 64],
            dx: None,
            origin: None,
            fit_margin: 0.3,
            gravity: [0.0, 0.0, -9.8],
            ground_z: None,
        }
    }
}

/// Particles, grid, and resolved materials for one simulation.
#[derive(Debug, Clone)]
pub struct SimState {
    particles: Vec<Particle>,
    pub grid: Grid,
    /// Materials by slot; `object_for_slot[slot]` is the owning object id.
    pub materials: Vec<Material>,
    pub object_for_slot: Vec<u32>,
    gravity: Vector3<f64>,
    ground_z: Option<f64>,
    step_index: u64,
    inverted_last_step: usize,
    /// Scratch for the per-particle transfer matrices.
    scratch: Vec<(Matrix3<f64>, [Vector3<f64>; 3], Vector3<i64>)>,
}

/// Builds the initial state: one particle per Gaussian with a
/// non-background object id. Every such id must have a material; initial
/// velocity comes from the material, `F = I`, `C = 0`, and the initial
/// volume is `dx³ / (mean particles per occupied cell)`.
pub fn init_sim(
    scene: &GaussianScene,
    materials: &BTreeMap<u32, Material>,
    cfg: &SimConfig,
) -> Result<SimState> {
    let simulated: Vec<(u32, u32)> = scene
        .gaussians
        .iter()
        .enumerate()
        .filter_map(|(i, g)| match g.object_id {
            Some(id) if id != 0 => Some((i as u32, id)),
            _ => None,
        })
        .collect();
    if simulated.is_empty() {
        return Err(Error::Config(
            "no non-background object ids in scene; run segmentation first".into(),
        ));
    }

    let present: HashSet<u32> = simulated.iter().map(|&(_, id)| id).collect();
    let missing: Vec<u32> = {
        let mut m: Vec<u32> = present
            .iter()
            .copied()
            .filter(|id| !materials.contains_key(id))
            .collect();
        m.sort_unstable();
        m
    };
    if !missing.is_empty() {
        return Err(Error::Config(format!(
            "no material configured for object ids {missing:?}"
        )));
    }

    let mut slot_for_object = BTreeMap::new();
    let mut mats = Vec::new();
    let mut object_for_slot = Vec::new();
    for (&id, mat) in materials {
        if present.contains(&id) {
            mat.validate()?;
            slot_for_object.insert(id, mats.len() as u32);
            object_for_slot.push(id);
            mats.push(mat.clone());
        }
    }

    let positions: Vec<Vector3<f64>> = simulated
        .iter()
        .map(|&(gi, _)| scene.gaussians[gi as usize].position_v())
        .collect();

    let res = [
        cfg.resolution[0] as usize,
        cfg.resolution[1] as usize,
        cfg.resolution[2] as usize,
    ];
    let (dx, origin) = match (cfg.dx, cfg.origin) {
        (Some(dx), Some(o)) => (dx, Vector3::new(o[0], o[1], o[2])),
        (Some(dx), None) => (dx, fit_origin(&positions, res, dx)),
        _ => fit_grid(&positions, res, cfg.fit_margin),
    };
    let grid = Grid::new(res, dx, origin);

    // Average particles per occupied cell sets the initial volume.
    let mut cells: HashMap<(i64, i64, i64), u32> = HashMap::new();
    for p in &positions {
        let c = (p - origin) / dx;
        *cells
            .entry((
                c.x.floor() as i64,
                c.y.floor() as i64,
                c.z.floor() as i64,
            ))
            .or_insert(0) += 1;
    }
    let per_cell = positions.len() as f64 / cells.len() as f64;
    let volume0 = dx.powi(3) / per_cell;

    let particles: Vec<Particle> = simulated
        .iter()
        .zip(positions.iter())
        .map(|(&(gi, id), &x)| {
            let slot = slot_for_object[&id];
            let mat = &mats[slot as usize];
            Particle {
                x,
                v: Vector3::from(mat.initial_velocity),
                f: Matrix3::identity(),
                c: Matrix3::zeros(),
                mass: mat.density * volume0,
                volume0,
                material: slot,
                gaussian_index: gi,
            }
        })
        .collect();

    let state = SimState {
        particles,
        grid,
        materials: mats,
        object_for_slot,
        gravity: Vector3::from(cfg.gravity),
        ground_z: cfg.ground_z,
        step_index: 0,
        inverted_last_step: 0,
        scratch: Vec::new(),
    };
    state.check_interior()?;
    Ok(state)
}

fn fit_origin(positions: &[Vector3<f64>], res: [usize; 3], dx: f64) -> Vector3<f64> {
    let (lo, hi) = bbox(positions);
    let center = (lo + hi) * 0.5;
    Vector3::new(
        center.x - (res[0] - 1) as f64 * 0.5 * dx,
        center.y - (res[1] - 1) as f64 * 0.5 * dx,
        center.z - (res[2] - 1) as f64 * 0.5 * dx,
    )
}

fn fit_grid(positions: &[Vector3<f64>], res: [usize; 3], margin: f64) -> (f64, Vector3<f64>) {
    let (lo, hi) = bbox(positions);
    let extent = hi - lo;
    let max_extent = extent.max().max(1e-6);
    // Particles must sit well inside the wall band even after moving by
    // the margin.
    let pad_cells = (BOUNDARY_BAND + 1) as f64;
    let mut dx = 0.0f64;
    for axis in 0..3 {
        let span = extent[axis] + 2.0 * margin * max_extent;
        let usable = (res[axis] - 1) as f64 - 2.0 * pad_cells;
        dx = dx.max(span / usable);
    }
    let center = (lo + hi) * 0.5;
    let origin = Vector3::new(
        center.x - (res[0] - 1) as f64 * 0.5 * dx,
        center.y - (res[1] - 1) as f64 * 0.5 * dx,
        center.z - (res[2] - 1) as f64 * 0.5 * dx,
    );
    (dx, origin)
}

fn bbox(positions: &[Vector3<f64>]) -> (Vector3<f64>, Vector3<f64>) {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in positions {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}

/// Quadratic B-spline weights for a fractional offset `fx` in cell units
/// (distance from the base node, componentwise in [0.5, 1.5]).
#[inline]
pub fn bspline_weights(fx: Vector3<f64>) -> [Vector3<f64>; 3] {
    [
        (Vector3::repeat(1.5) - fx).map(|v| 0.5 * v * v),
        (fx - Vector3::repeat(1.0)).map(|v| 0.75 - v * v),
        (fx - Vector3::repeat(0.5)).map(|v| 0.5 * v * v),
    ]
}

impl SimState {
    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn particles_mut(&mut self) -> &mut [Particle] {
        &mut self.particles
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    /// Particles whose stress evaluation hit `det(F) <= 0` in the last step.
    pub fn inverted_last_step(&self) -> usize {
        self.inverted_last_step
    }

    pub fn total_momentum(&self) -> Vector3<f64> {
        self.particles.iter().map(|p| p.mass * p.v).sum()
    }

    pub fn center_of_mass(&self) -> Vector3<f64> {
        let m: f64 = self.particles.iter().map(|p| p.mass).sum();
        self.particles.iter().map(|p| p.mass * p.x).sum::<Vector3<f64>>() / m
    }

    fn base_and_frac(&self, x: &Vector3<f64>) -> (Vector3<i64>, Vector3<f64>) {
        let cell = (x - self.grid.origin) / self.grid.dx;
        let base = cell.map(|v| (v - 0.5).floor());
        (
            Vector3::new(base.x as i64, base.y as i64, base.z as i64),
            cell - base,
        )
    }

    fn check_interior(&self) -> Result<()> {
        for (i, p) in self.particles.iter().enumerate() {
            let (base, _) = self.base_and_frac(&p.x);
            for axis in 0..3 {
                if base[axis] < 1 || base[axis] as usize > self.grid.res[axis] - 4 {
                    return Err(Error::Numerical(format!(
                        "particle {i} left the grid interior at step {} (position {:?})",
                        self.step_index, p.x
                    )));
                }
            }
        }
        Ok(())
    }

    /// Particle-to-grid scatter: mass, APIC momentum, and the MLS-MPM
    /// force contribution for one explicit step of size `dt`.
    pub fn p2g(&mut self, dt: f64) -> Result<()> {
        self.check_interior()?;
        let dx = self.grid.dx;
        let inv_w = 4.0 / (dx * dx); // inverse moment matrix, quadratic kernel
        let materials = &self.materials;
        let grid_origin = self.grid.origin;

        // Per-particle transfer data in parallel; ordered scatter after.
        let inverted = std::sync::atomic::AtomicUsize::new(0);
        let mut scratch = std::mem::take(&mut self.scratch);
        self.particles
            .par_iter()
            .map(|p| {
                let (mu, lambda) = materials[p.material as usize].lame();
                let eval = fixed_corotated_stress(&p.f, mu, lambda);
                if eval.inverted {
                    inverted.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                }
                // Momentum-space affine matrix: APIC term plus stress term.
                let affine = p.mass * p.c
                    - (dt * p.volume0 * inv_w) * (eval.stress * eval.gradient.transpose());
                let cell = (p.x - grid_origin) / dx;
                let base = cell.map(|v| (v - 0.5).floor());
                let fx = cell - base;
                (
                    affine,
                    bspline_weights(fx),
                    Vector3::new(base.x as i64, base.y as i64, base.z as i64),
                )
            })
            .collect_into_vec(&mut scratch);
        self.inverted_last_step = inverted.into_inner();

        self.grid.clear();
        for (p, (affine, w, base)) in self.particles.iter().zip(scratch.iter()) {
            for di in 0..3usize {
                for dj in 0..3usize {
                    for dk in 0..3usize {
                        let weight = w[di].x * w[dj].y * w[dk].z;
                        let node = self.grid.node_index(
                            (base.x + di as i64) as usize,
                            (base.y + dj as i64) as usize,
                            (base.z + dk as i64) as usize,
                        );
                        let node_pos = self.grid.node_position(
                            (base.x + di as i64) as usize,
                            (base.y + dj as i64) as usize,
                            (base.z + dk as i64) as usize,
                        );
                        let dpos = node_pos - p.x;
                        self.grid.mass[node] += weight * p.mass;
                        self.grid.vel[node] += weight * (p.mass * p.v + affine * dpos);
                    }
                }
            }
        }
        self.scratch = scratch;
        Ok(())
    }

    /// Explicit grid momentum update with gravity and boundaries.
    pub fn grid_update(&mut self, dt: f64) {
        self.grid.update(dt, self.gravity, self.ground_z);
    }

    /// Grid-to-particle gather: velocity, affine matrix, deformation
    /// gradient update `F ← (I + dt·C) F`, and advection.
    pub fn g2p(&mut self, dt: f64) -> Result<()> {
        let dx = self.grid.dx;
        let inv_w = 4.0 / (dx * dx);
        let grid = &self.grid;
        let step = self.step_index;

        let bad = self
            .particles
            .par_iter_mut()
            .enumerate()
            .map(|(i, p)| {
                let cell = (p.x - grid.origin) / dx;
                let base = cell.map(|v| (v - 0.5).floor());
                let fx = cell - base;
                let w = bspline_weights(fx);
                let base = Vector3::new(base.x as i64, base.y as i64, base.z as i64);

                let mut v_new = Vector3::zeros();
                let mut b = Matrix3::zeros();
                for di in 0..3usize {
                    for dj in 0..3usize {
                        for dk in 0..3usize {
                            let weight = w[di].x * w[dj].y * w[dk].z;
                            let ni = (base.x + di as i64) as usize;
                            let nj = (base.y + dj as i64) as usize;
                            let nk = (base.z + dk as i64) as usize;
                            let vel = grid.vel[grid.node_index(ni, nj, nk)];
                            let dpos = grid.node_position(ni, nj, nk) - p.x;
                            v_new += weight * vel;
                            b += weight * vel * dpos.transpose();
                        }
                    }
                }
                p.v = v_new;
                p.c = inv_w * b;
                p.f = (Matrix3::identity() + dt * p.c) * p.f;
                p.x += dt * p.v;

                let finite = p.x.iter().all(|v| v.is_finite())
                    && p.v.iter().all(|v| v.is_finite())
                    && p.f.iter().all(|v| v.is_finite());
                if finite {
                    usize::MAX
                } else {
                    i
                }
            })
            .min()
            .unwrap_or(usize::MAX);
        if bad != usize::MAX {
            return Err(Error::Numerical(format!(
                "non-finite particle state at step {step}, particle {bad}"
            )));
        }
        Ok(())
    }

    /// One full MLS-MPM step.
    pub fn step(&mut self, dt: f64) -> Result<()> {
        self.p2g(dt)?;
        self.grid_update(dt);
        self.g2p(dt)?;
        self.step_index += 1;
        Ok(())
    }

    /// Current per-particle (x, F) keyed by Gaussian index, for the
    /// covariance correction and for trajectory files.
    pub fn frame_snapshot(&self) -> FrameSnapshot {
        FrameSnapshot {
            step: self.step_index,
            poses: self
                .particles
                .iter()
                .map(|p| ParticlePose {
                    gaussian_index: p.gaussian_index,
                    position: [p.x.x as f32, p.x.y as f32, p.x.z as f32],
                    gradient: {
                        let mut f = [[0.0f32; 3]; 3];
                        for r in 0..3 {
                            for c in 0..3 {
                                f[r][c] = p.f[(r, c)] as f32;
                            }
                        }
                        f
                    },
                })
                .collect(),
        }
    }

    /// Replaces particle state and step index from a checkpoint. The
    /// particle count must match the initialized state.
    pub fn restore(&mut self, ckpt: Checkpoint) -> Result<()> {
        if ckpt.particles.len() != self.particles.len() {
            return Err(Error::Config(format!(
                "checkpoint has {} particles, state has {}",
                ckpt.particles.len(),
                self.particles.len()
            )));
        }
        self.particles = ckpt.particles;
        self.step_index = ckpt.step;
        Ok(())
    }
}

#[cfg(test)]
mod tests;
