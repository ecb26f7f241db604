use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("zero-length vector has no direction")]
    ZeroVector,
    #[error("antiparallel reference vectors: rotation axis undefined")]
    AntiparallelRotation,
    #[error("view direction is parallel to world-up")]
    DegenerateOrientation,
    #[error("field of view {0} rad outside (0, pi)")]
    InvalidFov(f64),
}

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("scene not found: {0}")]
    NotFound(PathBuf),
    #[error("io error reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("obj parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("mesh has no usable triangles")]
    EmptyMesh,
    #[error("invalid room parameters: {0}")]
    InvalidRoom(String),
    #[error("invalid voxel size {0}")]
    InvalidVoxelSize(f64),
    #[error("voxelization produced no free voxels")]
    EmptyFreeSpace,
    #[error("supervoxel size must be at least 1")]
    InvalidSupervoxelSize,
    #[error("grid dump error: {0}")]
    GridFormat(String),
}

#[derive(Debug, Error)]
pub enum VisibilityError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("camera position {0} is not a free voxel")]
    InvalidPosition(u32),
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
}

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("grid has no free voxels to sample from")]
    NoFreeVoxels,
    #[error("invalid sampling parameters: {0}")]
    InvalidParams(String),
    #[error("target coincides with the start position")]
    ZeroDirection,
    #[error("no unobstructed free voxel along the ray")]
    NoPosition,
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("warm start is infeasible: {0}")]
    InfeasibleWarmStart(String),
}

/// Crate-level error used by the engine and CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Visibility(#[from] VisibilityError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("internal consistency check failed: {0}")]
    Internal(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
