//! Parametric cuboid rooms with interior partition walls.
//!
//! The room spans `[0, length] x [0, height] x [0, breadth]` in voxel units
//! with `y` as the vertical axis. Partitions are slabs across `x`, standing
//! on the floor, anchored to one of the two `z` sides.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mesh::{box_triangles, TriangleMesh};
use crate::error::SceneError;
use crate::geometry::Vec3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WallOrient {
    /// Consecutive partitions hang off opposite `z` sides.
    #[default]
    Alternate,
    /// Every partition hangs off the `z = 0` side, leaving a corridor.
    SameSide,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomParams {
    pub length: u32,
    pub height: u32,
    pub breadth: u32,
    #[serde(default)]
    pub num_walls: u32,
    #[serde(default = "one")]
    pub y_wall_edge_ratio: f64,
    #[serde(default = "default_z_ratio")]
    pub z_wall_edge_ratio: f64,
    #[serde(default = "one_u32")]
    pub wall_width: u32,
    #[serde(default)]
    pub random_range: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub wall_orient: WallOrient,
}

fn one() -> f64 {
    1.0
}
fn one_u32() -> u32 {
    1
}
fn default_z_ratio() -> f64 {
    0.6
}

impl RoomParams {
    /// Shell-only room.
    pub fn empty(length: u32, height: u32, breadth: u32) -> Self {
        RoomParams {
            length,
            height,
            breadth,
            num_walls: 0,
            y_wall_edge_ratio: 1.0,
            z_wall_edge_ratio: 0.6,
            wall_width: 1,
            random_range: 0.0,
            seed: 0,
            wall_orient: WallOrient::Alternate,
        }
    }

    /// The medium room (40 x 10 x 10, three partitions).
    pub fn medium(orient: WallOrient, seed: u64) -> Self {
        RoomParams { num_walls: 3, random_range: 0.2, seed, wall_orient: orient, ..Self::empty(40, 10, 10) }
    }

    /// The large room (80 x 10 x 10, seven partitions).
    pub fn large(orient: WallOrient, seed: u64) -> Self {
        RoomParams { num_walls: 7, random_range: 0.2, seed, wall_orient: orient, ..Self::empty(80, 10, 10) }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |m: String| Err(SceneError::InvalidRoom(m));
        if self.length == 0 || self.height == 0 || self.breadth == 0 {
            return bad("room dimensions must be at least 1".into());
        }
        for (name, r) in [
            ("y_wall_edge_ratio", self.y_wall_edge_ratio),
            ("z_wall_edge_ratio", self.z_wall_edge_ratio),
            ("random_range", self.random_range),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return bad(format!("{name} = {r} outside [0, 1]"));
            }
        }
        if self.num_walls > 0 && self.wall_width == 0 {
            return bad("wall_width must be at least 1 when walls are present".into());
        }
        Ok(())
    }

    /// Integer x-extent `[x0, x0 + wall_width)` of each partition.
    pub fn partition_spans(&self) -> Result<Vec<(u32, u32)>, SceneError> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let interval = self.length as f64 / (self.num_walls as f64 + 1.0);
        let mut spans: Vec<(u32, u32)> = Vec::with_capacity(self.num_walls as usize);
        for i in 1..=self.num_walls {
            let jitter = if self.random_range > 0.0 {
                rng.random_range(-1.0..1.0) * self.random_range * interval
            } else {
                0.0
            };
            let center = i as f64 * interval + jitter;
            let x0 = (center - self.wall_width as f64 / 2.0).round();
            let x1 = x0 + self.wall_width as f64;
            if x0 < 1.0 || x1 > self.length as f64 - 1.0 {
                return Err(SceneError::InvalidRoom(format!(
                    "partition {i} at x = [{x0}, {x1}] does not fit inside the room"
                )));
            }
            let span = (x0 as u32, x1 as u32);
            if let Some(prev) = spans.last() {
                if span.0 <= prev.1 {
                    return Err(SceneError::InvalidRoom(format!(
                        "partition {i} touches or overlaps partition {}",
                        i - 1
                    )));
                }
            }
            spans.push(span);
        }
        Ok(spans)
    }

    /// Partition slabs as `(min, max)` boxes.
    pub fn partition_boxes(&self) -> Result<Vec<(Vec3, Vec3)>, SceneError> {
        let wall_h = (self.y_wall_edge_ratio * self.height as f64).round();
        let wall_b = (self.z_wall_edge_ratio * self.breadth as f64).round();
        if wall_h == 0.0 || wall_b == 0.0 {
            return Ok(Vec::new());
        }
        let b = self.breadth as f64;
        Ok(self
            .partition_spans()?
            .into_iter()
            .enumerate()
            .map(|(i, (x0, x1))| {
                let (z0, z1) = match (self.wall_orient, i % 2) {
                    (WallOrient::Alternate, 1) => (b - wall_b, b),
                    _ => (0.0, wall_b),
                };
                (Vec3::new(x0 as f64, 0.0, z0), Vec3::new(x1 as f64, wall_h, z1))
            })
            .collect())
    }

    /// Closed-form free-voxel count at voxel size 1: interior volume minus
    /// the partition slab volumes.
    pub fn analytic_free_voxels(&self) -> Result<u64, SceneError> {
        let total = self.length as u64 * self.height as u64 * self.breadth as u64;
        let blocked: f64 = self
            .partition_boxes()?
            .iter()
            .map(|(lo, hi)| {
                let d = *hi - *lo;
                d.x * d.y * d.z
            })
            .sum();
        Ok(total - blocked as u64)
    }
}

/// Builds the room shell plus partition slabs. Deterministic given the seed.
pub fn generate_room(params: &RoomParams) -> Result<TriangleMesh, SceneError> {
    let shell_max = Vec3::new(params.length as f64, params.height as f64, params.breadth as f64);
    let mut triangles = box_triangles(Vec3::ZERO, shell_max);
    for (lo, hi) in params.partition_boxes()? {
        triangles.extend(box_triangles(lo, hi));
    }
    TriangleMesh::new(triangles)
}
