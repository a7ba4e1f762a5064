use std::collections::BTreeMap;

use approx::assert_relative_eq;
use nalgebra::{Matrix3, Vector3};

use super::*;
use crate::scene::{GaussianPrimitive, GaussianScene};

fn lattice_scene(n: usize, spacing: f64, center: [f64; 3], id: u32) -> GaussianScene {
    let mut gaussians = Vec::new();
    let half = (n as f64 - 1.0) * spacing * 0.5;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let mut g = GaussianPrimitive::at([
                    (center[0] - half + i as f64 * spacing) as f32,
                    (center[1] - half + j as f64 * spacing) as f32,
                    (center[2] - half + k as f64 * spacing) as f32,
                ]);
                g.object_id = Some(id);
                gaussians.push(g);
            }
        }
    }
    GaussianScene::new(gaussians)
}

fn soft_material(v0: [f64; 3]) -> Material {
    Material::elastic(1000.0, 1e5, 0.2, v0)
}

fn one_material(v0: [f64; 3]) -> BTreeMap<u32, Material> {
    BTreeMap::from([(1, soft_material(v0))])
}

fn small_grid() -> SimConfig {
    SimConfig {
        resolution: [32, 32, 32],
        dx: Some(0.05),
        origin: Some([0.0, 0.0, 0.0]),
        fit_margin: 0.3,
        gravity: [0.0, 0.0, 0.0],
        ground_z: None,
    }
}

#[test]
fn weights_partition_of_unity() {
    // Any in-cell offset: the 27 stencil weights sum to 1.
    let mut s = 12345u64;
    let mut next = move || {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
        (s >> 11) as f64 / (1u64 << 53) as f64
    };
    for _ in 0..1000 {
        let fx = Vector3::new(0.5 + next(), 0.5 + next(), 0.5 + next());
        let w = bspline_weights(fx);
        let mut sum = 0.0;
        for wi in &w {
            for wj in &w {
                for wk in &w {
                    sum += wi.x * wj.y * wk.z;
                }
            }
        }
        assert!((sum - 1.0).abs() < 1e-12, "sum = {sum} at fx = {fx:?}");
    }
}

#[test]
fn init_assigns_initial_velocity_and_identity_gradient() {
    let scene = lattice_scene(3, 0.02, [0.775, 0.775, 0.775], 1);
    let state = init_sim(&scene, &one_material([2.0, 0.0, 0.0]), &small_grid()).unwrap();
    for p in state.particles() {
        assert_eq!(p.v, Vector3::new(2.0, 0.0, 0.0));
        assert_eq!(p.f, Matrix3::identity());
        assert_eq!(p.c, Matrix3::zeros());
        assert!(p.mass > 0.0 && p.volume0 > 0.0);
    }
}

#[test]
fn init_partitions_two_objects() {
    let mut scene = lattice_scene(4, 0.02, [0.5, 0.5, 0.5], 1);
    scene
        .gaussians
        .extend(lattice_scene(4, 0.02, [1.0, 1.0, 1.0], 2).gaussians);
    let mats = BTreeMap::from([
        (1, soft_material([1.0, 0.0, 0.0])),
        (2, soft_material([0.0, 0.0, 0.0])),
    ]);
    let state = init_sim(&scene, &mats, &small_grid()).unwrap();
    assert_eq!(state.particles().len(), 128);
    let first: Vec<_> = state
        .particles()
        .iter()
        .filter(|p| state.object_for_slot[p.material as usize] == 1)
        .collect();
    assert_eq!(first.len(), 64);
}

#[test]
fn init_background_excluded() {
    let mut scene = lattice_scene(3, 0.02, [0.775, 0.775, 0.775], 1);
    let mut bg = GaussianPrimitive::at([0.3, 0.3, 0.3]);
    bg.object_id = Some(0);
    scene.gaussians.push(bg);
    scene.gaussians.push(GaussianPrimitive::at([0.2, 0.2, 0.2])); // no id
    let state = init_sim(&scene, &one_material([0.0; 3]), &small_grid()).unwrap();
    assert_eq!(state.particles().len(), 27);
}

#[test]
fn init_missing_material_lists_ids() {
    let mut scene = lattice_scene(2, 0.02, [0.5, 0.5, 0.5], 1);
    for g in scene.gaussians.iter_mut().take(4) {
        g.object_id = Some(7);
    }
    let err = init_sim(&scene, &one_material([0.0; 3]), &small_grid()).unwrap_err();
    assert!(err.to_string().contains('7'), "got: {err}");
}

#[test]
fn p2g_mass_and_peak_weight_at_node_center() {
    // One particle exactly on a node: center weight 0.75^3, mass preserved.
    let mut scene = GaussianScene::default();
    let mut g = GaussianPrimitive::at([0.75, 0.75, 0.75]); // node (15,15,15)
    g.object_id = Some(1);
    scene.gaussians.push(g);
    let mut state = init_sim(&scene, &one_material([0.0; 3]), &small_grid()).unwrap();
    state.p2g(1e-4).unwrap();
    let center = state.grid.node_index(15, 15, 15);
    let total: f64 = state.grid.total_mass();
    let particle_mass = state.particles()[0].mass;
    assert_relative_eq!(total, particle_mass, max_relative = 1e-12);
    let peak = 0.75f64.powi(3) * particle_mass;
    assert_relative_eq!(state.grid.mass[center], peak, max_relative = 1e-12);
    let max_node = state.grid.mass.iter().cloned().fold(0.0, f64::max);
    assert_relative_eq!(max_node, peak, max_relative = 1e-12);
}

#[test]
fn p2g_rigid_translation_gives_constant_grid_velocity() {
    let scene = lattice_scene(4, 0.03, [0.775, 0.775, 0.775], 1);
    let mut state = init_sim(&scene, &one_material([0.7, -0.3, 0.2]), &small_grid()).unwrap();
    state.p2g(1e-4).unwrap();
    state.grid_update(1e-4);
    for (idx, &m) in state.grid.mass.iter().enumerate() {
        if m > 0.0 {
            let v = state.grid.vel[idx];
            assert!((v - Vector3::new(0.7, -0.3, 0.2)).norm() < 1e-12, "v = {v:?}");
        }
    }
}

#[test]
fn p2g_total_momentum_matches_particle_momentum() {
    // Summation oracle: grid momentum after scatter equals sum of m*v;
    // the APIC C-term nets to zero by kernel symmetry.
    let scene = lattice_scene(4, 0.025, [0.8, 0.8, 0.8], 1);
    let mut state = init_sim(&scene, &one_material([0.4, 0.1, -0.6]), &small_grid()).unwrap();
    for p in state.particles_mut() {
        // Nonzero C to exercise the affine term.
        p.c = Matrix3::new(0.1, 0.3, 0.0, -0.2, 0.0, 0.1, 0.0, 0.2, -0.1);
    }
    let expected: Vector3<f64> = state.particles().iter().map(|p| p.mass * p.v).sum();
    state.p2g(0.0).unwrap(); // dt=0 removes stress momentum for the pure-transfer oracle
    let got = state.grid.total_momentum();
    assert!((got - expected).norm() <= 1e-12 * expected.norm().max(1.0));

    // With dt > 0 and F = I the stress term is exactly zero too.
    state.p2g(1e-4).unwrap();
    let got = state.grid.total_momentum();
    assert!((got - expected).norm() <= 1e-12 * expected.norm().max(1.0));
}

#[test]
fn grid_update_applies_gravity_increment() {
    let scene = lattice_scene(3, 0.03, [0.775, 0.775, 0.775], 1);
    let mut cfg = small_grid();
    cfg.gravity = [0.0, 0.0, -9.8];
    let mut state = init_sim(&scene, &one_material([0.0; 3]), &cfg).unwrap();
    state.p2g(1e-4).unwrap();
    state.grid_update(1e-4);
    for (idx, &m) in state.grid.mass.iter().enumerate() {
        if m > 0.0 {
            let v = state.grid.vel[idx];
            assert_relative_eq!(v.z, -9.8e-4, epsilon = 1e-15);
            assert_relative_eq!(v.x, 0.0, epsilon = 1e-15);
        }
    }
}

#[test]
fn grid_update_zero_gravity_keeps_velocities() {
    let scene = lattice_scene(3, 0.03, [0.775, 0.775, 0.775], 1);
    let mut state = init_sim(&scene, &one_material([0.5, 0.0, 0.0]), &small_grid()).unwrap();
    state.p2g(1e-4).unwrap();
    let momentum_before = state.grid.total_momentum();
    state.grid_update(1e-4);
    let momentum_after: Vector3<f64> = state
        .grid
        .vel
        .iter()
        .zip(state.grid.mass.iter())
        .map(|(v, &m)| v * m)
        .sum();
    assert!((momentum_after - momentum_before).norm() < 1e-12);
}

#[test]
fn grid_ground_plane_zeroes_downward_velocity() {
    let mut grid = Grid::new([8, 8, 8], 0.1, Vector3::zeros());
    let below = grid.node_index(4, 4, 1); // z = 0.1, at/below plane z = 0.15
    let above = grid.node_index(4, 4, 6);
    grid.mass[below] = 1.0;
    grid.mass[above] = 1.0;
    grid.vel[below] = Vector3::new(0.2, 0.0, -0.5);
    grid.vel[above] = Vector3::new(0.0, 0.0, -0.5);
    grid.update(0.0, Vector3::zeros(), Some(0.15));
    assert_eq!(grid.vel[below], Vector3::new(0.2, 0.0, 0.0)); // tangential kept
    assert_eq!(grid.vel[above], Vector3::new(0.0, 0.0, -0.5));
}

#[test]
fn g2p_reproduces_uniform_field() {
    let scene = lattice_scene(3, 0.03, [0.775, 0.775, 0.775], 1);
    let mut state = init_sim(&scene, &one_material([0.0; 3]), &small_grid()).unwrap();
    let u = Vector3::new(0.3, -0.2, 0.5);
    for v in state.grid.vel.iter_mut() {
        *v = u;
    }
    let f_before = state.particles()[0].f;
    state.g2p(0.0).unwrap();
    for p in state.particles() {
        assert!((p.v - u).norm() < 1e-13);
        assert!(p.c.abs().max() < 1e-10, "C = {:?}", p.c);
    }
    assert_eq!(state.particles()[0].f, f_before); // dt = 0
}

#[test]
fn g2p_recovers_linear_velocity_field() {
    // Impose v(x) = A (x - x_ref) on the grid; APIC recovers C = A exactly
    // for quadratic B-splines (up to floating point).
    let scene = lattice_scene(3, 0.04, [0.775, 0.775, 0.775], 1);
    let mut state = init_sim(&scene, &one_material([0.0; 3]), &small_grid()).unwrap();
    let a = Matrix3::new(0.2, -0.1, 0.05, 0.3, 0.1, 0.0, -0.2, 0.0, 0.15);
    let x_ref = Vector3::new(0.775, 0.775, 0.775);
    let (res, dx, origin) = (state.grid.res, state.grid.dx, state.grid.origin);
    for i in 0..res[0] {
        for j in 0..res[1] {
            for k in 0..res[2] {
                let idx = state.grid.node_index(i, j, k);
                let pos = origin + Vector3::new(i as f64, j as f64, k as f64) * dx;
                state.grid.vel[idx] = a * (pos - x_ref);
            }
        }
    }
    state.g2p(0.0).unwrap();
    for p in state.particles() {
        let err = (p.c - a).abs().max();
        assert!(err < 1e-10, "C error {err} at x = {:?}", p.x);
        let v_expect = a * (p.x - x_ref);
        assert!((p.v - v_expect).norm() < 1e-12);
    }
}

#[test]
fn free_particle_advances_linearly() {
    let mut scene = GaussianScene::default();
    let mut g = GaussianPrimitive::at([0.6, 0.775, 0.775]);
    g.object_id = Some(1);
    scene.gaussians.push(g);
    let mut state = init_sim(&scene, &one_material([1.0, 0.0, 0.0]), &small_grid()).unwrap();
    let x0 = state.particles()[0].x;
    let dt = 1e-3;
    let steps = 100;
    for _ in 0..steps {
        state.step(dt).unwrap();
    }
    let expected = x0 + Vector3::new(1.0, 0.0, 0.0) * dt * steps as f64;
    let err = (state.particles()[0].x - expected).norm();
    assert!(err < 1e-9, "drift {err}");
}

#[test]
fn elastic_cube_at_rest_stays_at_rest() {
    let scene = lattice_scene(4, 0.025, [0.775, 0.775, 0.775], 1);
    let mut state = init_sim(&scene, &one_material([0.0; 3]), &small_grid()).unwrap();
    let x0: Vec<Vector3<f64>> = state.particles().iter().map(|p| p.x).collect();
    for _ in 0..100 {
        state.step(1e-4).unwrap();
    }
    let max_drift = state
        .particles()
        .iter()
        .zip(x0.iter())
        .map(|(p, x)| (p.x - x).norm())
        .fold(0.0, f64::max);
    assert!(max_drift < 1e-9, "max drift {max_drift}");
}

#[test]
fn free_fall_matches_ballistic_oracle() {
    // Analytic oracle: COM falls by g t^2 / 2 (+ O(dt)) with no contact.
    let scene = lattice_scene(5, 0.01, [0.15, 0.15, 2.2], 1);
    let cfg = SimConfig {
        resolution: [16, 16, 128],
        dx: Some(0.02),
        origin: Some([0.0, 0.0, 0.0]),
        fit_margin: 0.3,
        gravity: [0.0, 0.0, -9.8],
        ground_z: None,
    };
    let mut state = init_sim(&scene, &one_material([0.0; 3]), &cfg).unwrap();
    let z0 = state.center_of_mass().z;
    let dt = 1e-4;
    let steps = 5000; // 0.5 s
    for _ in 0..steps {
        state.step(dt).unwrap();
    }
    let t = dt * steps as f64;
    let expected_drop = 0.5 * 9.8 * t * t;
    let drop = z0 - state.center_of_mass().z;
    let rel = (drop - expected_drop).abs() / expected_drop;
    assert!(rel < 0.01, "relative error {rel} (drop {drop} vs {expected_drop})");
}

#[test]
fn momentum_conserved_without_gravity() {
    let scene = lattice_scene(5, 0.02, [0.775, 0.775, 0.775], 1);
    let mut state = init_sim(&scene, &one_material([0.3, 0.2, -0.1]), &small_grid()).unwrap();
    // Perturb velocities so elastic stresses develop.
    for (i, p) in state.particles_mut().iter_mut().enumerate() {
        p.v.x += 0.05 * ((i % 7) as f64 - 3.0);
    }
    let p0 = state.total_momentum();
    for _ in 0..100 {
        state.step(1e-4).unwrap();
    }
    let p1 = state.total_momentum();
    let rel = (p1 - p0).norm() / p0.norm();
    assert!(rel < 1e-6, "momentum drift {rel}");
}

#[test]
fn trajectories_are_deterministic() {
    let run = || {
        let scene = lattice_scene(4, 0.02, [0.775, 0.775, 0.775], 1);
        let mut cfg = small_grid();
        cfg.gravity = [0.0, 0.0, -9.8];
        let mut state = init_sim(&scene, &one_material([0.5, 0.0, 0.0]), &cfg).unwrap();
        for _ in 0..50 {
            state.step(1e-4).unwrap();
        }
        state
            .particles()
            .iter()
            .flat_map(|p| [p.x.x, p.x.y, p.x.z, p.v.x, p.v.y, p.v.z])
            .map(f64::to_bits)
            .collect::<Vec<u64>>()
    };
    let a = run();
    // Same run inside thread pools of different sizes must be bit-identical.
    let b = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(run);
    let c = rayon::ThreadPoolBuilder::new()
        .num_threads(2)
        .build()
        .unwrap()
        .install(run);
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn particle_outside_interior_is_reported() {
    let mut scene = GaussianScene::default();
    let mut g = GaussianPrimitive::at([0.02, 0.775, 0.775]); // inside wall band
    g.object_id = Some(1);
    scene.gaussians.push(g);
    let err = init_sim(&scene, &one_material([0.0; 3]), &small_grid()).unwrap_err();
    assert!(matches!(err, crate::error::Error::Numerical(_)));
    assert!(err.to_string().contains("particle 0"), "got: {err}");
}

#[test]
fn nan_state_aborts_with_particle_index() {
    let scene = lattice_scene(3, 0.03, [0.775, 0.775, 0.775], 1);
    let mut state = init_sim(&scene, &one_material([0.0; 3]), &small_grid()).unwrap();
    state.particles_mut()[5].v.x = f64::NAN;
    let err = state.step(1e-4).unwrap_err();
    assert!(matches!(err, crate::error::Error::Numerical(_)));
    assert!(err.to_string().contains("particle"), "got: {err}");
}

#[test]
fn checkpoint_restart_reproduces_continuation() {
    let scene = lattice_scene(3, 0.03, [0.775, 0.775, 0.775], 1);
    let mut cfg = small_grid();
    cfg.gravity = [0.0, 0.0, -9.8];
    let mats = one_material([0.4, 0.0, 0.0]);

    let mut state = init_sim(&scene, &mats, &cfg).unwrap();
    for _ in 0..20 {
        state.step(1e-4).unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let ckpt_path = dir.path().join("state.ckpt");
    state.save_checkpoint(&ckpt_path).unwrap();
    for _ in 0..20 {
        state.step(1e-4).unwrap();
    }
    let reference: Vec<u64> = state
        .particles()
        .iter()
        .flat_map(|p| [p.x.x, p.x.y, p.x.z])
        .map(f64::to_bits)
        .collect();

    let mut resumed = init_sim(&scene, &mats, &cfg).unwrap();
    resumed.restore(load_checkpoint(&ckpt_path).unwrap()).unwrap();
    assert_eq!(resumed.step_index(), 20);
    for _ in 0..20 {
        resumed.step(1e-4).unwrap();
    }
    let restarted: Vec<u64> = resumed
        .particles()
        .iter()
        .flat_map(|p| [p.x.x, p.x.y, p.x.z])
        .map(f64::to_bits)
        .collect();
    assert_eq!(reference, restarted);
}

#[test]
fn trajectory_frame_round_trip() {
    let scene = lattice_scene(2, 0.03, [0.775, 0.775, 0.775], 1);
    let state = init_sim(&scene, &one_material([0.0; 3]), &small_grid()).unwrap();
    let snap = state.frame_snapshot();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("frame0.traj");
    save_trajectory_frame(&snap, &p).unwrap();
    let loaded = load_trajectory_frame(&p).unwrap();
    assert_eq!(loaded, snap);
}
