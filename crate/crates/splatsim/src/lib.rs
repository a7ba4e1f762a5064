//! Object-level physics for Gaussian-splat scenes.
//!
//! The crate covers the full loop from a pretrained splat scene to an
//! image sequence of interacting deformable objects:
//!
//! 1. [`scene`] loads splat PLY files, camera sets, and instance-ID masks.
//! 2. [`render`] rasterizes splats: RGB, binary object masks, and the
//!    surface depth maps that drive segmentation.
//! 3. [`segment`] lifts 2D instance ids onto Gaussians by inverse
//!    projection against the depth maps with per-view majority voting,
//!    and scores masks (mIoU / boundary IoU).
//! 4. [`sim`] runs MLS-MPM over the segmented objects, one particle per
//!    Gaussian, with per-object materials.
//! 5. [`kinematics`] maps simulation output back to splats:
//!    gradient-guided covariance, adaptive eigen clamping, and the
//!    blended rotation/scale correction.
//! 6. [`pipeline`] orchestrates the stages behind a single config file.

pub mod config;
pub mod error;
pub mod kinematics;
pub mod math;
pub mod pipeline;
pub mod render;
pub mod scene;
pub mod segment;
pub mod sim;
pub mod synth;

pub use error::{Error, Result};
