//! Binary simulation artifacts: full-precision checkpoints and the
//! per-frame (position, deformation gradient) trajectory files the
//! covariance correction consumes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::sim::{Particle, SimState};

const CHECKPOINT_MAGIC: &[u8; 8] = b"MPMCKPT\0";
const TRAJECTORY_MAGIC: &[u8; 8] = b"SPLTRAJ\0";
const VERSION: u32 = 1;

/// Full particle state at a step, restorable into a matching `SimState`.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub step: u64,
    pub particles: Vec<Particle>,
}

/// Pose of one particle: advected position and deformation gradient
/// (row-major), keyed by the source Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticlePose {
    pub gaussian_index: u32,
    pub position: [f32; 3],
    pub gradient: [[f32; 3]; 3],
}

impl ParticlePose {
    pub fn position_v(&self) -> Vector3<f64> {
        Vector3::new(
            self.position[0] as f64,
            self.position[1] as f64,
            self.position[2] as f64,
        )
    }

    pub fn gradient_m(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|r, c| self.gradient[r][c] as f64)
    }
}

/// Per-frame simulation output.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSnapshot {
    pub step: u64,
    pub poses: Vec<ParticlePose>,
}

impl SimState {
    /// Dumps all particle fields plus the step index.
    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        w.write_all(CHECKPOINT_MAGIC).map_err(io)?;
        w.write_u32::<LittleEndian>(VERSION).map_err(io)?;
        w.write_u64::<LittleEndian>(self.step_index()).map_err(io)?;
        w.write_u64::<LittleEndian>(self.particles().len() as u64)
            .map_err(io)?;
        for p in self.particles() {
            w.write_u32::<LittleEndian>(p.gaussian_index).map_err(io)?;
            w.write_u32::<LittleEndian>(p.material).map_err(io)?;
            w.write_f64::<LittleEndian>(p.mass).map_err(io)?;
            w.write_f64::<LittleEndian>(p.volume0).map_err(io)?;
            for v in &[p.x, p.v] {
                for i in 0..3 {
                    w.write_f64::<LittleEndian>(v[i]).map_err(io)?;
                }
            }
            for m in &[p.f, p.c] {
                for r in 0..3 {
                    for c in 0..3 {
                        w.write_f64::<LittleEndian>(m[(r, c)]).map_err(io)?;
                    }
                }
            }
        }
        w.flush().map_err(io)?;
        Ok(())
    }
}

/// Reads a checkpoint written by [`SimState::save_checkpoint`].
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let io = |e| Error::io(path, e);

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format(format!(
            "{}: not a checkpoint file",
            path.display()
        )));
    }
    let version = r.read_u32::<LittleEndian>().map_err(io)?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported checkpoint version {version}",
            path.display()
        )));
    }
    let step = r.read_u64::<LittleEndian>().map_err(io)?;
    let count = r.read_u64::<LittleEndian>().map_err(io)? as usize;
    let mut particles = Vec::with_capacity(count);
    for _ in 0..count {
        let gaussian_index = r.read_u32::<LittleEndian>().map_err(io)?;
        let material = r.read_u32::<LittleEndian>().map_err(io)?;
        let mass = r.read_f64::<LittleEndian>().map_err(io)?;
        let volume0 = r.read_f64::<LittleEndian>().map_err(io)?;
        let mut vecs = [Vector3::zeros(); 2];
        for v in vecs.iter_mut() {
            for i in 0..3 {
                v[i] = r.read_f64::<LittleEndian>().map_err(io)?;
            }
        }
        let mut mats = [Matrix3::zeros(); 2];
        for m in mats.iter_mut() {
            for row in 0..3 {
                for col in 0..3 {
                    m[(row, col)] = r.read_f64::<LittleEndian>().map_err(io)?;
                }
            }
        }
        particles.push(Particle {
            x: vecs[0],
            v: vecs[1],
            f: mats[0],
            c: mats[1],
            mass,
            volume0,
            material,
            gaussian_index,
        });
    }
    Ok(Checkpoint { step, particles })
}

/// Writes one trajectory frame: step index plus (index, x, F) records.
pub fn save_trajectory_frame(snapshot: &FrameSnapshot, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(TRAJECTORY_MAGIC).map_err(io)?;
    w.write_u64::<LittleEndian>(snapshot.step).map_err(io)?;
    w.write_u64::<LittleEndian>(snapshot.poses.len() as u64)
        .map_err(io)?;
    for pose in &snapshot.poses {
        w.write_u32::<LittleEndian>(pose.gaussian_index).map_err(io)?;
        for v in pose.position {
            w.write_f32::<LittleEndian>(v).map_err(io)?;
        }
        for row in pose.gradient {
            for v in row {
                w.write_f32::<LittleEndian>(v).map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)?;
    Ok(())
}

/// Reads a trajectory frame written by [`save_trajectory_frame`].
pub fn load_trajectory_frame(path: impl AsRef<Path>) -> Result<FrameSnapshot> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let io = |e| Error::io(path, e);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != TRAJECTORY_MAGIC {
        return Err(Error::Format(format!(
            "{}: not a trajectory frame",
            path.display()
        )));
    }
    let step = r.read_u64::<LittleEndian>().map_err(io)?;
    let count = r.read_u64::<LittleEndian>().map_err(io)? as usize;
    let mut poses = Vec::with_capacity(count);
    for _ in 0..count {
        let gaussian_index = r.read_u32::<LittleEndian>().map_err(io)?;
        let mut position = [0f32; 3];
        for v in position.iter_mut() {
            *v = r.read_f32::<LittleEndian>().map_err(io)?;
        }
        let mut gradient = [[0f32; 3]; 3];
        for row in gradient.iter_mut() {
            for v in row.iter_mut() {
                *v = r.read_f32::<LittleEndian>().map_err(io)?;
            }
        }
        poses.push(ParticlePose {
            gaussian_index,
            position,
            gradient,
        });
    }
    Ok(FrameSnapshot { step, poses })
}
