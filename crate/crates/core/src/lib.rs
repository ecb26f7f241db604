//! Camera placement over voxelized indoor environments.
//!
//! The pipeline voxelizes a triangle mesh, samples candidate camera
//! configurations (random, explore-and-exploit, or targeting uncovered
//! space), computes the voxels each configuration sees, and selects a
//! budget-constrained network maximizing coverage with an exact
//! branch-and-bound solver or a greedy heuristic. Each iteration is warm
//! started from the previous network, so coverage never decreases.

pub mod analysis;
pub mod cli;
pub mod engine;
pub mod error;
pub mod geometry;
pub mod sampling;
pub mod scene;
pub mod solver;
pub mod visibility;

pub use error::{Error, Result};
