//! Which free voxels a camera configuration sees.
//!
//! [`calculate_camera_view`] flood-fills free voxels inside the viewing
//! frustum outward from the camera voxel and then keeps those whose
//! center is reachable by an unobstructed ray within the depth of field.
//! [`brute_force_view`] tests every free voxel independently and serves as
//! the oracle for it.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::VisibilityError;
use crate::geometry::{camera_basis, frustum_corners, Vec3};
use crate::scene::{FreeId, TriangleMesh, VoxelGrid, AXIS_NEIGHBOURS};

/// Relative slack on the angular tests so voxels lying exactly on a
/// frustum boundary plane count as inside.
const ANGLE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    /// Horizontal field of view, radians.
    pub hfov: f64,
    /// Vertical field of view, radians.
    pub vfov: f64,
    pub dof_min: f64,
    /// `None` means unbounded.
    pub dof_max: Option<f64>,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        CameraIntrinsics {
            hfov: 90f64.to_radians(),
            vfov: 73f64.to_radians(),
            dof_min: 0.0,
            dof_max: None,
        }
    }
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<(), VisibilityError> {
        let pi = std::f64::consts::PI;
        if !(self.hfov > 0.0 && self.hfov < pi && self.vfov > 0.0 && self.vfov < pi) {
            return Err(VisibilityError::InvalidIntrinsics(format!(
                "fields of view ({}, {}) must lie in (0, pi)",
                self.hfov, self.vfov
            )));
        }
        if !(self.dof_min >= 0.0) || self.dof_max.is_some_and(|m| !(m > self.dof_min)) {
            return Err(VisibilityError::InvalidIntrinsics(format!(
                "depth of field [{}, {:?}] is not a valid range",
                self.dof_min, self.dof_max
            )));
        }
        Ok(())
    }

    fn within_depth(&self, dist: f64, first_hit: Option<f64>) -> bool {
        let far = first_hit.unwrap_or(f64::INFINITY).min(self.dof_max.unwrap_or(f64::INFINITY));
        dist >= self.dof_min && far >= dist
    }
}

/// A camera position (free voxel) with a unit view direction; roll is zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraConfig {
    pub position: FreeId,
    pub direction: Vec3,
}

impl CameraConfig {
    pub fn new(position: FreeId, direction: Vec3) -> Self {
        CameraConfig { position, direction }
    }
}

/// Which voxels around the camera seed the flood fill.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedNeighbourhood {
    /// The six face neighbours only.
    Face,
    /// All 26 neighbours of the camera voxel.
    #[default]
    Full,
}

/// Frustum membership test built from the four field-of-view extremities:
/// an offset is inside when its projections onto the horizontal and the
/// vertical field-of-view planes both fall within the corresponding
/// non-reflex angle.
#[derive(Clone, Copy, Debug)]
struct Frustum {
    axis: Vec3,
    w_normal: Vec3,
    h_normal: Vec3,
    cos_half_w: f64,
    cos_half_h: f64,
}

impl Frustum {
    fn new(position: Vec3, dir: Vec3, intr: &CameraIntrinsics) -> Result<Self, VisibilityError> {
        let c = frustum_corners(position, dir, intr.hfov, intr.vfov)?;
        let (w1, w2) = (c.r_w1 - position, c.r_w2 - position);
        let (h1, h2) = (c.r_h1 - position, c.r_h2 - position);
        let w_normal = w1.cross(w2).try_normalize().ok_or(crate::error::GeometryError::ZeroVector)?;
        let h_normal = h1.cross(h2).try_normalize().ok_or(crate::error::GeometryError::ZeroVector)?;
        let axis = (w1 + w2).try_normalize().ok_or(crate::error::GeometryError::ZeroVector)?;
        Ok(Frustum {
            axis,
            w_normal,
            h_normal,
            cos_half_w: w1.dot(axis),
            cos_half_h: h1.dot(axis),
        })
    }

    fn within_angle(offset: Vec3, normal: Vec3, axis: Vec3, cos_half: f64) -> bool {
        let planar = offset - normal * offset.dot(normal);
        let len = planar.norm();
        len > ANGLE_TOLERANCE * offset.norm() && planar.dot(axis) >= len * (cos_half - ANGLE_TOLERANCE)
    }

    fn contains(&self, offset: Vec3) -> bool {
        Self::within_angle(offset, self.w_normal, self.axis, self.cos_half_w)
            && Self::within_angle(offset, self.h_normal, self.axis, self.cos_half_h)
    }
}

fn check_position(grid: &VoxelGrid, config: &CameraConfig) -> Result<(), VisibilityError> {
    if (config.position as usize) < grid.n_free() {
        Ok(())
    } else {
        Err(VisibilityError::InvalidPosition(config.position))
    }
}

/// Flood-fill visibility with the default seed neighbourhood.
pub fn calculate_camera_view(
    mesh: &TriangleMesh,
    grid: &VoxelGrid,
    config: &CameraConfig,
    intrinsics: &CameraIntrinsics,
) -> Result<Vec<FreeId>, VisibilityError> {
    calculate_camera_view_with(mesh, grid, config, intrinsics, SeedNeighbourhood::default())
}

/// Flood-fill visibility. Returns sorted free-voxel ids; the camera's own
/// voxel is never included.
pub fn calculate_camera_view_with(
    mesh: &TriangleMesh,
    grid: &VoxelGrid,
    config: &CameraConfig,
    intrinsics: &CameraIntrinsics,
    seeds: SeedNeighbourhood,
) -> Result<Vec<FreeId>, VisibilityError> {
    check_position(grid, config)?;
    let eye = grid.free_center(config.position);
    let frustum = Frustum::new(eye, config.direction, intrinsics)?;
    let cam = grid.free_coords_i64(config.position);

    let mut visited = vec![false; grid.n_free()];
    visited[config.position as usize] = true;
    let mut stack: Vec<[i64; 3]> = Vec::with_capacity(64);
    match seeds {
        SeedNeighbourhood::Face => {
            stack.extend(AXIS_NEIGHBOURS.iter().map(|o| [cam[0] + o[0], cam[1] + o[1], cam[2] + o[2]]))
        }
        SeedNeighbourhood::Full => {
            for dz in -1..=1 {
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        if (dx, dy, dz) != (0, 0, 0) {
                            stack.push([cam[0] + dx, cam[1] + dy, cam[2] + dz]);
                        }
                    }
                }
            }
        }
    }

    let mut in_frustum = Vec::new();
    while let Some(c) = stack.pop() {
        let Some(id) = grid.free_id_at(c) else { continue };
        if visited[id as usize] {
            continue;
        }
        visited[id as usize] = true;
        let offset = grid.free_center(id) - eye;
        if frustum.contains(offset) {
            in_frustum.push(id);
            stack.extend(AXIS_NEIGHBOURS.iter().map(|o| [c[0] + o[0], c[1] + o[1], c[2] + o[2]]));
        }
    }

    let mut visible: Vec<FreeId> = in_frustum
        .into_iter()
        .filter(|&id| {
            let offset = grid.free_center(id) - eye;
            let dist = offset.norm();
            let dir = offset / dist;
            intrinsics.within_depth(dist, mesh.first_hit(eye, dir))
        })
        .collect();
    visible.sort_unstable();
    Ok(visible)
}

/// Tests every free voxel independently for field of view, depth of field
/// and occlusion. No connectivity is assumed.
pub fn brute_force_view(
    mesh: &TriangleMesh,
    grid: &VoxelGrid,
    config: &CameraConfig,
    intrinsics: &CameraIntrinsics,
) -> Result<Vec<FreeId>, VisibilityError> {
    check_position(grid, config)?;
    let eye = grid.free_center(config.position);
    // validates the orientation the same way the flood fill does
    frustum_corners(eye, config.direction, intrinsics.hfov, intrinsics.vfov)?;
    Ok(grid
        .free_ids()
        .filter(|&id| id != config.position)
        .filter(|&id| oracle_accepts(mesh, eye, grid.free_center(id), config.direction, intrinsics))
        .collect())
}

/// Per-voxel visibility test used by the oracle: both field-of-view angles
/// measured in the camera's own frame, then depth of field and a ray cast.
pub fn oracle_accepts(
    mesh: &TriangleMesh,
    eye: Vec3,
    target: Vec3,
    direction: Vec3,
    intrinsics: &CameraIntrinsics,
) -> bool {
    let Ok((forward, right, up)) = camera_basis(direction) else { return false };
    let offset = target - eye;
    let dist = offset.norm();
    if dist == 0.0 {
        return false;
    }
    let (f, r, u) = (offset.dot(forward), offset.dot(right), offset.dot(up));
    let horizontal = r.abs().atan2(f);
    let vertical = u.abs().atan2(f);
    let slack = ANGLE_TOLERANCE * 10.0;
    if f <= 0.0 || horizontal > intrinsics.hfov / 2.0 + slack || vertical > intrinsics.vfov / 2.0 + slack
    {
        return false;
    }
    intrinsics.within_depth(dist, mesh.first_hit(eye, offset / dist))
}

/// Visible sets for a batch of configurations, computed in parallel on the
/// current rayon pool. Output order follows `configs`.
pub fn compute_views(
    mesh: &TriangleMesh,
    grid: &VoxelGrid,
    configs: &[CameraConfig],
    intrinsics: &CameraIntrinsics,
) -> Result<Vec<Vec<FreeId>>, VisibilityError> {
    configs
        .par_iter()
        .map(|c| calculate_camera_view(mesh, grid, c, intrinsics))
        .collect()
}

/// Voxel -> list of configuration indices that see it, in index order.
pub fn invert_visibility<'a, I>(views: I) -> BTreeMap<FreeId, Vec<usize>>
where
    I: IntoIterator<Item = (usize, &'a [FreeId])>,
{
    let mut entries: Vec<(usize, &[FreeId])> = views.into_iter().collect();
    entries.sort_by_key(|(i, _)| *i);
    let mut map: BTreeMap<FreeId, Vec<usize>> = BTreeMap::new();
    for (config, voxels) in entries {
        for &v in voxels {
            let list = map.entry(v).or_default();
            if list.last() != Some(&config) {
                list.push(config);
            }
        }
    }
    map
}

/// Per-configuration visible sets together with their inversion.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VisibilityMap {
    pub views: Vec<Vec<FreeId>>,
    pub by_voxel: BTreeMap<FreeId, Vec<usize>>,
}

impl VisibilityMap {
    pub fn new(views: Vec<Vec<FreeId>>) -> Self {
        let by_voxel = invert_visibility(views.iter().enumerate().map(|(i, v)| (i, v.as_slice())));
        VisibilityMap { views, by_voxel }
    }
}

/// Jaccard similarity of two sorted id lists (1.0 when both are empty).
pub fn jaccard(a: &[FreeId], b: &[FreeId]) -> f64 {
    let (inter, union) = sorted_overlap(a, b);
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

fn sorted_overlap(a: &[FreeId], b: &[FreeId]) -> (usize, usize) {
    let (mut i, mut j, mut inter) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    (inter, a.len() + b.len() - inter)
}

/// Elements of `a` not in `b`, both sorted.
pub fn sorted_difference(a: &[FreeId], b: &[FreeId]) -> Vec<FreeId> {
    a.iter().copied().filter(|x| b.binary_search(x).is_err()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{box_triangles, generate_room, voxelize, RoomParams, WallOrient};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scene(p: &RoomParams) -> (TriangleMesh, VoxelGrid) {
        let mesh = generate_room(p).unwrap();
        let grid = voxelize(&mesh, 1.0, None).unwrap();
        (mesh, grid)
    }

    fn config_at(grid: &VoxelGrid, c: [i64; 3], dir: Vec3) -> CameraConfig {
        CameraConfig::new(grid.free_id_at(c).unwrap(), dir.try_normalize().unwrap())
    }

    #[test]
    fn empty_room_center_camera_matches_oracle() {
        let (mesh, grid) = scene(&RoomParams::empty(10, 5, 5));
        let cfg = config_at(&grid, [5, 2, 2], Vec3::X);
        let intr = CameraIntrinsics::default();
        let fast = calculate_camera_view(&mesh, &grid, &cfg, &intr).unwrap();
        let oracle = brute_force_view(&mesh, &grid, &cfg, &intr).unwrap();
        assert!(!fast.is_empty());
        assert_eq!(fast, oracle);
        assert!(!fast.contains(&cfg.position));
    }

    #[test]
    fn camera_facing_adjacent_wall() {
        // 5x3x3 room with a full-height slab at x = 3..4; camera at x = 2 looks into it
        let mut tris = box_triangles(Vec3::ZERO, Vec3::new(5.0, 3.0, 3.0));
        tris.extend(box_triangles(Vec3::new(3.0, 0.0, 0.0), Vec3::new(4.0, 3.0, 3.0)));
        let mesh = TriangleMesh::new(tris).unwrap();
        let grid = voxelize(&mesh, 1.0, Some(Vec3::new(1.5, 1.5, 1.5))).unwrap();
        assert_eq!(grid.n_free(), 27);
        let cfg = config_at(&grid, [2, 1, 1], Vec3::X);
        let intr = CameraIntrinsics::default();
        let fast = calculate_camera_view(&mesh, &grid, &cfg, &intr).unwrap();
        let oracle = brute_force_view(&mesh, &grid, &cfg, &intr).unwrap();
        assert_eq!(fast, oracle);
        assert!(fast.is_empty());
    }

    #[test]
    fn short_depth_of_field_sees_nothing() {
        let (mesh, grid) = scene(&RoomParams::empty(10, 5, 5));
        let cfg = config_at(&grid, [5, 2, 2], Vec3::X);
        let intr = CameraIntrinsics { dof_max: Some(0.5), ..Default::default() };
        assert!(calculate_camera_view(&mesh, &grid, &cfg, &intr).unwrap().is_empty());
        assert!(brute_force_view(&mesh, &grid, &cfg, &intr).unwrap().is_empty());
    }

    #[test]
    fn minimum_depth_excludes_near_voxels() {
        let (mesh, grid) = scene(&RoomParams::empty(10, 5, 5));
        let cfg = config_at(&grid, [1, 2, 2], Vec3::X);
        let intr = CameraIntrinsics { dof_min: 3.0, ..Default::default() };
        let view = calculate_camera_view(&mesh, &grid, &cfg, &intr).unwrap();
        let eye = grid.free_center(cfg.position);
        assert!(!view.is_empty());
        assert!(view.iter().all(|&v| (grid.free_center(v) - eye).norm() >= 3.0));
        assert_eq!(view, brute_force_view(&mesh, &grid, &cfg, &intr).unwrap());
    }

    #[test]
    fn vertical_direction_is_rejected() {
        let (mesh, grid) = scene(&RoomParams::empty(4, 4, 4));
        let cfg = CameraConfig::new(0, Vec3::Y);
        let intr = CameraIntrinsics::default();
        assert!(matches!(
            calculate_camera_view(&mesh, &grid, &cfg, &intr),
            Err(VisibilityError::Geometry(_))
        ));
        assert!(brute_force_view(&mesh, &grid, &cfg, &intr).is_err());
        let bad = CameraConfig::new(10_000, Vec3::X);
        assert!(matches!(
            calculate_camera_view(&mesh, &grid, &bad, &intr),
            Err(VisibilityError::InvalidPosition(10_000))
        ));
    }

    #[test]
    fn square_fov_oracle_is_transversely_symmetric() {
        // camera on the room axis looking along +x with hfov = vfov: swapping
        // the y and z offsets maps the visible set onto itself
        let (mesh, grid) = scene(&RoomParams::empty(10, 5, 5));
        let cfg = config_at(&grid, [1, 2, 2], Vec3::X);
        let fov = 80f64.to_radians();
        let intr = CameraIntrinsics { hfov: fov, vfov: fov, ..Default::default() };
        let view = brute_force_view(&mesh, &grid, &cfg, &intr).unwrap();
        for &v in &view {
            let c = grid.free_coords_i64(v);
            let swapped = grid.free_id_at([c[0], c[2], c[1]]).unwrap();
            assert!(view.binary_search(&swapped).is_ok());
        }
    }

    #[test]
    fn face_seeds_miss_diagonal_views() {
        // looking along a cube diagonal no face neighbour is inside the frustum
        let (mesh, grid) = scene(&RoomParams::empty(10, 10, 10));
        let cfg = config_at(&grid, [2, 7, 2], Vec3::new(1.0, -1.0, 1.0));
        let intr = CameraIntrinsics::default();
        let face = calculate_camera_view_with(&mesh, &grid, &cfg, &intr, SeedNeighbourhood::Face).unwrap();
        let oracle = brute_force_view(&mesh, &grid, &cfg, &intr).unwrap();
        assert!(face.is_empty());
        assert!(!oracle.is_empty());
        let full = calculate_camera_view(&mesh, &grid, &cfg, &intr).unwrap();
        assert_eq!(full, oracle);
    }

    #[test]
    fn flood_fill_is_sound_and_near_complete_on_partitioned_rooms() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let intr = CameraIntrinsics::default();
        let (mut found, mut expected) = (0, 0);
        for seed in 0..4 {
            let p = RoomParams {
                num_walls: 2,
                random_range: 0.2,
                seed,
                wall_orient: if seed % 2 == 0 { WallOrient::Alternate } else { WallOrient::SameSide },
                ..RoomParams::empty(20, 8, 8)
            };
            let (mesh, grid) = scene(&p);
            for _ in 0..5 {
                let cfg = random_config(&grid, &mut rng);
                let fast = calculate_camera_view(&mesh, &grid, &cfg, &intr).unwrap();
                let oracle = brute_force_view(&mesh, &grid, &cfg, &intr).unwrap();
                assert!(sorted_difference(&fast, &oracle).is_empty());
                found += fast.len();
                expected += oracle.len();
            }
        }
        // fast is a subset of oracle, so the pooled Jaccard is a ratio of sizes
        assert!(found as f64 >= 0.99 * expected as f64, "{found} / {expected}");
    }

    #[test]
    fn enlarging_depth_never_shrinks_view() {
        let (mesh, grid) = scene(&RoomParams { num_walls: 2, ..RoomParams::empty(20, 8, 8) });
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let cfg = random_config(&grid, &mut rng);
            let mut prev: Vec<FreeId> = Vec::new();
            for dof in [1.0, 2.5, 5.0, 10.0, 40.0] {
                let intr = CameraIntrinsics { dof_max: Some(dof), ..Default::default() };
                let view = calculate_camera_view(&mesh, &grid, &cfg, &intr).unwrap();
                assert!(sorted_difference(&prev, &view).is_empty());
                prev = view;
            }
        }
    }

    #[test]
    fn batch_is_schedule_independent() {
        let (mesh, grid) = scene(&RoomParams::medium(WallOrient::SameSide, 1));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let configs: Vec<_> = (0..24).map(|_| random_config(&grid, &mut rng)).collect();
        let intr = CameraIntrinsics::default();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| compute_views(&mesh, &grid, &configs, &intr).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn inversion_examples() {
        let a = [1u32, 2];
        let b = [2u32];
        let map = invert_visibility([(0usize, &a[..]), (1, &b[..])]);
        assert_eq!(map, BTreeMap::from([(1, vec![0]), (2, vec![0, 1])]));
        assert!(invert_visibility(std::iter::empty()).is_empty());
    }

    pub(crate) fn random_config(grid: &VoxelGrid, rng: &mut ChaCha8Rng) -> CameraConfig {
        loop {
            let pos = rng.random_range(0..grid.n_free() as u32);
            let d = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            if let Some(dir) = d.try_normalize() {
                if dir.y.abs() < 0.99 {
                    return CameraConfig::new(pos, dir);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn inversion_round_trips(
            views in proptest::collection::vec(
                proptest::collection::btree_set(0u32..200, 0..20), 0..50)
        ) {
            let views: Vec<Vec<FreeId>> = views.into_iter().map(|s| s.into_iter().collect()).collect();
            let map = VisibilityMap::new(views.clone());
            // re-invert voxel -> configs back into config -> voxels
            let mut back = vec![Vec::new(); views.len()];
            for (&v, configs) in &map.by_voxel {
                for &c in configs {
                    back[c].push(v);
                }
            }
            prop_assert_eq!(back, views);
        }
    }
}
