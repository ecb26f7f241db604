use super::voxel::{FreeId, VoxelGrid};
use crate::error::SceneError;
use crate::geometry::Vec3;

/// Coarse blocks of `super_size^3` voxels holding uncovered-voxel counts.
/// Blocks on the far boundary are truncated.
#[derive(Clone, Debug, PartialEq)]
pub struct SupervoxelGrid {
    pub super_size: usize,
    pub dims: [usize; 3],
    pub centers: Vec<Vec3>,
    pub counts: Vec<u64>,
}

impl SupervoxelGrid {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

pub fn supervoxel_counts(
    grid: &VoxelGrid,
    uncovered: impl IntoIterator<Item = FreeId>,
    super_size: usize,
) -> Result<SupervoxelGrid, SceneError> {
    if super_size < 1 {
        return Err(SceneError::InvalidSupervoxelSize);
    }
    let gd = grid.dims();
    let dims = gd.map(|d| d.div_ceil(super_size));
    let n = dims[0] * dims[1] * dims[2];
    let mut centers = Vec::with_capacity(n);
    for bz in 0..dims[2] {
        for by in 0..dims[1] {
            for bx in 0..dims[0] {
                let b = [bx, by, bz];
                let mid = [0, 1, 2].map(|a| {
                    let start = b[a] * super_size;
                    let end = (start + super_size).min(gd[a]);
                    (start + end) as f64 / 2.0
                });
                centers.push(grid.origin() + Vec3::new(mid[0], mid[1], mid[2]) * grid.voxel_size());
            }
        }
    }
    let mut counts = vec![0u64; n];
    for id in uncovered {
        let c = grid.free_coords(id);
        let b = c.map(|x| x / super_size);
        counts[b[0] + dims[0] * (b[1] + dims[1] * b[2])] += 1;
    }
    Ok(SupervoxelGrid { super_size, dims, centers, counts })
}
