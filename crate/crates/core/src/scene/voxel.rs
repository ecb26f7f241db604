use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::mesh::TriangleMesh;
use crate::error::SceneError;
use crate::geometry::{Triangle, Vec3};

/// Dense index of a free voxel (`0..grid.n_free()`).
pub type FreeId = u32;

const NOT_FREE: u32 = u32::MAX;

/// The six axis-aligned neighbour offsets, in `+x, -x, +y, -y, +z, -z` order.
pub const AXIS_NEIGHBOURS: [[i64; 3]; 6] =
    [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]];

/// Axis-aligned cubic grid classifying each voxel as free or closed.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    origin: Vec3,
    voxel_size: f64,
    dims: [usize; 3],
    /// linear voxel index -> free id, or `NOT_FREE`
    free_index: Vec<u32>,
    /// free id -> linear voxel index
    free_cells: Vec<usize>,
}

impl VoxelGrid {
    /// Builds a grid from a per-voxel free flag (x fastest, then y, then z).
    pub fn from_occupancy(
        origin: Vec3,
        voxel_size: f64,
        dims: [usize; 3],
        free: &[bool],
    ) -> Result<Self, SceneError> {
        if !(voxel_size > 0.0 && voxel_size.is_finite()) {
            return Err(SceneError::InvalidVoxelSize(voxel_size));
        }
        if free.len() != dims[0] * dims[1] * dims[2] {
            return Err(SceneError::GridFormat("occupancy length does not match dims".into()));
        }
        let mut free_index = vec![NOT_FREE; free.len()];
        let mut free_cells = Vec::new();
        for (i, &f) in free.iter().enumerate() {
            if f {
                free_index[i] = free_cells.len() as u32;
                free_cells.push(i);
            }
        }
        Ok(VoxelGrid { origin, voxel_size, dims, free_index, free_cells })
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn n_voxels(&self) -> usize {
        self.free_index.len()
    }

    pub fn n_free(&self) -> usize {
        self.free_cells.len()
    }

    #[inline]
    pub fn linear(&self, c: [usize; 3]) -> usize {
        c[0] + self.dims[0] * (c[1] + self.dims[1] * c[2])
    }

    #[inline]
    pub fn coords(&self, linear: usize) -> [usize; 3] {
        let x = linear % self.dims[0];
        let rest = linear / self.dims[0];
        [x, rest % self.dims[1], rest / self.dims[1]]
    }

    /// Integer coordinates if inside the grid.
    #[inline]
    pub fn checked_coords(&self, c: [i64; 3]) -> Option<[usize; 3]> {
        (0..3)
            .all(|a| c[a] >= 0 && (c[a] as usize) < self.dims[a])
            .then(|| [c[0] as usize, c[1] as usize, c[2] as usize])
    }

    pub fn is_free_linear(&self, linear: usize) -> bool {
        self.free_index[linear] != NOT_FREE
    }

    pub fn free_id_at(&self, c: [i64; 3]) -> Option<FreeId> {
        let c = self.checked_coords(c)?;
        let id = self.free_index[self.linear(c)];
        (id != NOT_FREE).then_some(id)
    }

    pub fn free_coords(&self, id: FreeId) -> [usize; 3] {
        self.coords(self.free_cells[id as usize])
    }

    pub fn free_coords_i64(&self, id: FreeId) -> [i64; 3] {
        self.free_coords(id).map(|c| c as i64)
    }

    pub fn center_of(&self, c: [usize; 3]) -> Vec3 {
        self.origin
            + Vec3::new(c[0] as f64 + 0.5, c[1] as f64 + 0.5, c[2] as f64 + 0.5) * self.voxel_size
    }

    pub fn free_center(&self, id: FreeId) -> Vec3 {
        self.center_of(self.free_coords(id))
    }

    /// Voxel containing a world point, if inside the grid.
    pub fn voxel_of_point(&self, p: Vec3) -> Option<[usize; 3]> {
        let rel = (p - self.origin) / self.voxel_size;
        self.checked_coords([rel.x.floor() as i64, rel.y.floor() as i64, rel.z.floor() as i64])
    }

    pub fn free_ids(&self) -> impl Iterator<Item = FreeId> + '_ {
        0..self.free_cells.len() as FreeId
    }

    pub fn occupancy(&self) -> Vec<bool> {
        self.free_index.iter().map(|&i| i != NOT_FREE).collect()
    }

    /// Free voxels whose center height (y) lies in `[lo, hi]`.
    pub fn free_ids_in_height_band(&self, lo: f64, hi: f64) -> Vec<FreeId> {
        self.free_ids()
            .filter(|&id| {
                let y = self.free_center(id).y;
                y >= lo && y <= hi
            })
            .collect()
    }

    /// JSON header plus run-length encoded occupancy (`<count>F` / `<count>C`).
    pub fn to_dump(&self) -> GridDump {
        let mut rle = String::new();
        let occ = self.occupancy();
        let mut i = 0;
        while i < occ.len() {
            let mut j = i;
            while j < occ.len() && occ[j] == occ[i] {
                j += 1;
            }
            rle.push_str(&format!("{}{}", j - i, if occ[i] { 'F' } else { 'C' }));
            i = j;
        }
        GridDump { origin: self.origin, dims: self.dims, voxel_size: self.voxel_size, occupancy: rle }
    }

    pub fn from_dump(dump: &GridDump) -> Result<Self, SceneError> {
        let mut free = Vec::with_capacity(dump.dims.iter().product());
        let mut count = String::new();
        for ch in dump.occupancy.chars() {
            match ch {
                '0'..='9' => count.push(ch),
                'F' | 'C' => {
                    let n: usize = count
                        .parse()
                        .map_err(|_| SceneError::GridFormat(format!("missing run length before {ch}")))?;
                    free.extend(std::iter::repeat_n(ch == 'F', n));
                    count.clear();
                }
                other => return Err(SceneError::GridFormat(format!("unexpected character {other:?}"))),
            }
        }
        if !count.is_empty() {
            return Err(SceneError::GridFormat("dangling run length".into()));
        }
        VoxelGrid::from_occupancy(dump.origin, dump.voxel_size, dump.dims, &free)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDump {
    pub origin: Vec3,
    pub dims: [usize; 3],
    pub voxel_size: f64,
    pub occupancy: String,
}

/// Voxelizes a mesh into free space.
///
/// A voxel is closed when any triangle overlaps its (slightly shrunk) cube or
/// when its center is not strictly inside the mesh bounds. The rest are free
/// only if 6-connected to the interior seed (default: the largest open
/// region) through steps whose
/// center-to-center segment does not cross the surface, so thin walls lying
/// on voxel faces still partition space.
pub fn voxelize(
    mesh: &TriangleMesh,
    voxel_size: f64,
    interior_seed: Option<Vec3>,
) -> Result<VoxelGrid, SceneError> {
    if !(voxel_size > 0.0 && voxel_size.is_finite()) {
        return Err(SceneError::InvalidVoxelSize(voxel_size));
    }
    let (lo, hi) = mesh.bounds();
    let extent = hi - lo;
    let dims = [0, 1, 2].map(|a| ((extent[a] / voxel_size - 1e-9).ceil().max(1.0)) as usize);
    let n = dims[0] * dims[1] * dims[2];
    let probe = VoxelGrid::from_occupancy(lo, voxel_size, dims, &vec![false; n])?;

    let mut open = vec![true; n];
    for (i, slot) in open.iter_mut().enumerate() {
        let c = probe.center_of(probe.coords(i));
        *slot = (0..3).all(|a| c[a] > lo[a] && c[a] < hi[a]);
    }
    let shrink = 1e-9 * voxel_size;
    let half = Vec3::splat(voxel_size / 2.0 - shrink);
    for tri in mesh.triangles() {
        let tlo = tri.min_corner() - lo;
        let thi = tri.max_corner() - lo;
        let range = |a: usize| {
            let l = ((tlo[a] / voxel_size).floor() - 1.0).max(0.0) as usize;
            let h = (((thi[a] / voxel_size).floor() + 1.0).max(0.0) as usize).min(dims[a] - 1);
            l..=h
        };
        for z in range(2) {
            for y in range(1) {
                for x in range(0) {
                    let i = probe.linear([x, y, z]);
                    if open[i] && triangle_box_overlap(tri, probe.center_of([x, y, z]), half) {
                        open[i] = false;
                    }
                }
            }
        }
    }

    let flood = |seed: usize, label: &mut [bool]| -> usize {
        let mut queue = VecDeque::from([seed]);
        label[seed] = true;
        let mut size = 1;
        while let Some(cur) = queue.pop_front() {
            let c = probe.coords(cur);
            let from = probe.center_of(c);
            for off in AXIS_NEIGHBOURS {
                let Some(nc) = probe.checked_coords([
                    c[0] as i64 + off[0],
                    c[1] as i64 + off[1],
                    c[2] as i64 + off[2],
                ]) else {
                    continue;
                };
                let ni = probe.linear(nc);
                if label[ni] || !open[ni] || mesh.segment_blocked(from, probe.center_of(nc)) {
                    continue;
                }
                label[ni] = true;
                size += 1;
                queue.push_back(ni);
            }
        }
        size
    };

    let seed = match interior_seed.and_then(|p| probe.voxel_of_point(p)).map(|c| probe.linear(c)) {
        Some(i) if open[i] => i,
        hint => {
            if hint.is_some() {
                log::warn!("interior seed is not in an open voxel; using the largest open region");
            }
            // largest open region, ties broken by lowest linear index
            let mut seen = vec![false; n];
            let mut best: Option<(usize, usize)> = None;
            for i in 0..n {
                if open[i] && !seen[i] {
                    let size = flood(i, &mut seen);
                    if best.is_none_or(|(s, _)| size > s) {
                        best = Some((size, i));
                    }
                }
            }
            best.ok_or(SceneError::EmptyFreeSpace)?.1
        }
    };
    let mut free = vec![false; n];
    flood(seed, &mut free);
    VoxelGrid::from_occupancy(lo, voxel_size, dims, &free)
}

/// Separating-axis triangle/box overlap test (box given by center and
/// half-extents). Touching counts as overlap.
pub fn triangle_box_overlap(tri: &Triangle, center: Vec3, half: Vec3) -> bool {
    let v = [tri.a - center, tri.b - center, tri.c - center];
    let e = [v[1] - v[0], v[2] - v[1], v[0] - v[2]];
    // box face normals
    for a in 0..3 {
        let lo = v[0][a].min(v[1][a]).min(v[2][a]);
        let hi = v[0][a].max(v[1][a]).max(v[2][a]);
        if lo > half[a] || hi < -half[a] {
            return false;
        }
    }
    // triangle normal
    let normal = e[0].cross(e[1]);
    let d = normal.dot(v[0]);
    let r = half.x * normal.x.abs() + half.y * normal.y.abs() + half.z * normal.z.abs();
    if d.abs() > r {
        return false;
    }
    // edge cross products
    let axes = [Vec3::X, Vec3::Y, Vec3::Z];
    for edge in e {
        for unit in axes {
            let axis = unit.cross(edge);
            if axis.norm_squared() < 1e-24 {
                continue;
            }
            let p = v.map(|x| x.dot(axis));
            let lo = p[0].min(p[1]).min(p[2]);
            let hi = p[0].max(p[1]).max(p[2]);
            let r = half.x * axis.x.abs() + half.y * axis.y.abs() + half.z * axis.z.abs();
            if lo > r || hi < -r {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::mesh::box_triangles;
    use crate::scene::room::{generate_room, RoomParams, WallOrient};

    fn shell(l: f64, h: f64, b: f64) -> Vec<Triangle> {
        box_triangles(Vec3::ZERO, Vec3::new(l, h, b))
    }

    #[test]
    fn empty_shell_is_fully_free() {
        let mesh = TriangleMesh::new(shell(10.0, 5.0, 5.0)).unwrap();
        let grid = voxelize(&mesh, 1.0, None).unwrap();
        assert_eq!(grid.dims(), [10, 5, 5]);
        assert_eq!(grid.n_free(), 250);
    }

    #[test]
    fn single_partition_matches_slab_volume() {
        let p = RoomParams { num_walls: 1, ..RoomParams::empty(10, 5, 5) };
        let grid = voxelize(&generate_room(&p).unwrap(), 1.0, None).unwrap();
        assert_eq!(grid.n_free(), 235);
    }

    #[test]
    fn solid_slab_has_no_free_space() {
        let mesh = TriangleMesh::new(box_triangles(Vec3::ZERO, Vec3::new(3.0, 3.0, 0.5))).unwrap();
        assert!(matches!(voxelize(&mesh, 1.0, None), Err(SceneError::EmptyFreeSpace)));
    }

    #[test]
    fn sealed_sub_box_is_closed() {
        // flood-fill oracle by hand: the 2x2x2 box interior is not reachable
        let mut tris = shell(10.0, 5.0, 5.0);
        tris.extend(box_triangles(Vec3::new(4.0, 1.0, 1.0), Vec3::new(6.0, 3.0, 3.0)));
        let grid = voxelize(&TriangleMesh::new(tris).unwrap(), 1.0, None).unwrap();
        assert_eq!(grid.n_free(), 242);
        for x in 4..6 {
            for y in 1..3 {
                for z in 1..3 {
                    assert_eq!(grid.free_id_at([x, y, z]), None);
                }
            }
        }
        assert!(grid.free_id_at([3, 1, 1]).is_some());
    }

    #[test]
    fn non_integer_obstacles_close_overlapped_voxels() {
        let mut tris = shell(6.0, 4.0, 4.0);
        tris.extend(box_triangles(Vec3::new(2.5, 0.0, 0.0), Vec3::new(2.75, 4.0, 1.0)));
        let grid = voxelize(&TriangleMesh::new(tris).unwrap(), 1.0, None).unwrap();
        // the column of voxels x = 2, z = 0 is cut by the slab
        assert_eq!(grid.n_free(), 96 - 4);
    }

    #[test]
    fn explicit_seed_picks_compartment() {
        // a full-height, full-breadth partition splits the room in two
        let p = RoomParams {
            num_walls: 1,
            z_wall_edge_ratio: 1.0,
            ..RoomParams::empty(10, 5, 5)
        };
        let mesh = generate_room(&p).unwrap();
        let left = voxelize(&mesh, 1.0, Some(Vec3::new(1.5, 2.5, 2.5))).unwrap();
        let right = voxelize(&mesh, 1.0, Some(Vec3::new(8.5, 2.5, 2.5))).unwrap();
        assert_eq!(left.n_free(), 125);
        assert_eq!(right.n_free(), 100);
    }

    #[test]
    fn generated_rooms_match_analytic_counts_and_are_connected() {
        for orient in [WallOrient::Alternate, WallOrient::SameSide] {
            for p in [
                RoomParams { random_range: 0.0, ..RoomParams::medium(orient, 3) },
                RoomParams { random_range: 0.0, ..RoomParams::large(orient, 3) },
                RoomParams { num_walls: 2, ..RoomParams::empty(20, 8, 8) },
            ] {
                let grid = voxelize(&generate_room(&p).unwrap(), 1.0, None).unwrap();
                assert_eq!(grid.n_free() as u64, p.analytic_free_voxels().unwrap());
                assert_eq!(connected_component_size(&grid, 0), grid.n_free());
            }
        }
    }

    #[test]
    fn voxelize_is_deterministic() {
        let mesh = generate_room(&RoomParams::medium(WallOrient::Alternate, 11)).unwrap();
        assert_eq!(voxelize(&mesh, 1.0, None).unwrap(), voxelize(&mesh, 1.0, None).unwrap());
    }

    #[test]
    fn grid_dump_round_trip() {
        let mesh = generate_room(&RoomParams::medium(WallOrient::SameSide, 2)).unwrap();
        let grid = voxelize(&mesh, 1.0, None).unwrap();
        let dump = grid.to_dump();
        let json = serde_json::to_string(&dump).unwrap();
        let back = VoxelGrid::from_dump(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, grid);
        assert!(VoxelGrid::from_dump(&GridDump { occupancy: "3F2".into(), ..dump.clone() }).is_err());
        assert!(VoxelGrid::from_dump(&GridDump { occupancy: "F".into(), ..dump }).is_err());
    }

    #[test]
    fn box_overlap_touching_and_separated() {
        let tri = Triangle::new(Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0));
        assert!(triangle_box_overlap(&tri, Vec3::new(0.2, 0.2, 0.0), Vec3::splat(0.1)));
        assert!(!triangle_box_overlap(&tri, Vec3::new(0.2, 0.2, 0.5), Vec3::splat(0.1)));
        // beyond the hypotenuse
        assert!(!triangle_box_overlap(&tri, Vec3::new(0.9, 0.9, 0.0), Vec3::splat(0.1)));
    }

    fn connected_component_size(grid: &VoxelGrid, start: FreeId) -> usize {
        let mut seen = vec![false; grid.n_free()];
        let mut stack = vec![start];
        seen[start as usize] = true;
        let mut count = 0;
        while let Some(id) = stack.pop() {
            count += 1;
            let c = grid.free_coords_i64(id);
            for off in AXIS_NEIGHBOURS {
                if let Some(n) = grid.free_id_at([c[0] + off[0], c[1] + off[1], c[2] + off[2]]) {
                    if !seen[n as usize] {
                        seen[n as usize] = true;
                        stack.push(n);
                    }
                }
            }
        }
        count
    }
}
