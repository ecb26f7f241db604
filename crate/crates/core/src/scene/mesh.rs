use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::SceneError;
use crate::geometry::{brute_force_first_hit, ray_triangle_intersect, Triangle, Vec3};

/// Meshes with at most this many triangles are ray cast without an index.
const INDEX_THRESHOLD: usize = 64;

/// Triangle soup describing the environment surface.
#[derive(Clone, Debug)]
pub struct TriangleMesh {
    triangles: Vec<Triangle>,
    min: Vec3,
    max: Vec3,
    dropped_degenerate: usize,
    index: Option<TriangleIndex>,
}

impl TriangleMesh {
    /// Builds a validated mesh. Degenerate triangles are dropped and counted;
    /// non-finite vertices are rejected.
    pub fn new(triangles: Vec<Triangle>) -> Result<Self, SceneError> {
        let total = triangles.len();
        let mut kept = Vec::with_capacity(total);
        for tri in triangles {
            if !(tri.a.is_finite() && tri.b.is_finite() && tri.c.is_finite()) {
                return Err(SceneError::Parse { line: 0, msg: "non-finite vertex".into() });
            }
            if !tri.is_degenerate() {
                kept.push(tri);
            }
        }
        if kept.is_empty() {
            return Err(SceneError::EmptyMesh);
        }
        let dropped = total - kept.len();
        if dropped > 0 {
            log::warn!("dropped {dropped} degenerate triangles");
        }
        let (min, max) = kept.iter().fold(
            (Vec3::splat(f64::INFINITY), Vec3::splat(f64::NEG_INFINITY)),
            |(lo, hi), t| (lo.min(t.min_corner()), hi.max(t.max_corner())),
        );
        let index = (kept.len() > INDEX_THRESHOLD).then(|| TriangleIndex::build(&kept, min, max));
        Ok(TriangleMesh { triangles: kept, min, max, dropped_degenerate: dropped, index })
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        (self.min, self.max)
    }

    pub fn dropped_degenerate(&self) -> usize {
        self.dropped_degenerate
    }

    /// Distance to the nearest surface hit along a unit direction.
    pub fn first_hit(&self, origin: Vec3, dir: Vec3) -> Option<f64> {
        match &self.index {
            Some(index) => index.first_hit(&self.triangles, origin, dir),
            None => brute_force_first_hit(origin, dir, &self.triangles),
        }
    }

    /// True when the open segment `from -> to` crosses the surface.
    pub fn segment_blocked(&self, from: Vec3, to: Vec3) -> bool {
        let delta = to - from;
        let len = delta.norm();
        match delta.try_normalize() {
            Some(dir) => self.first_hit(from, dir).is_some_and(|t| t < len),
            None => false,
        }
    }

    /// Serializes to ASCII OBJ with shared vertices in first-use order.
    pub fn to_obj(&self) -> String {
        let mut ids: HashMap<[u64; 3], usize> = HashMap::new();
        let mut verts = String::new();
        let mut faces = String::new();
        for tri in &self.triangles {
            let mut f = [0usize; 3];
            for (slot, v) in f.iter_mut().zip([tri.a, tri.b, tri.c]) {
                let key = [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()];
                let next = ids.len() + 1;
                *slot = *ids.entry(key).or_insert_with(|| {
                    let _ = writeln!(verts, "v {} {} {}", v.x, v.y, v.z);
                    next
                });
            }
            let _ = writeln!(faces, "f {} {} {}", f[0], f[1], f[2]);
        }
        format!("# camplace mesh: {} triangles\n{verts}{faces}", self.triangles.len())
    }

    pub fn write_obj(&self, path: &Path) -> Result<(), SceneError> {
        std::fs::write(path, self.to_obj())
            .map_err(|source| SceneError::Io { path: path.to_path_buf(), source })
    }
}

/// Loads an OBJ file (`v` and `f` records; polygons are fan-triangulated).
pub fn load_mesh(path: &Path) -> Result<TriangleMesh, SceneError> {
    if !path.exists() {
        return Err(SceneError::NotFound(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|source| SceneError::Io { path: path.to_path_buf(), source })?;
    parse_obj(&text)
}

pub fn parse_obj(text: &str) -> Result<TriangleMesh, SceneError> {
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut triangles = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let err = |msg: String| SceneError::Parse { line: line_no, msg };
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let coords: Vec<f64> = tokens
                    .map(|t| t.parse::<f64>().map_err(|_| err(format!("bad vertex coordinate {t:?}"))))
                    .collect::<Result<_, _>>()?;
                if coords.len() < 3 || coords.len() > 4 {
                    return Err(err(format!("vertex needs 3 coordinates, got {}", coords.len())));
                }
                let v = Vec3::new(coords[0], coords[1], coords[2]);
                if !v.is_finite() {
                    return Err(err("non-finite vertex".into()));
                }
                vertices.push(v);
            }
            Some("f") => {
                let idx: Vec<usize> = tokens
                    .map(|t| resolve_index(t, vertices.len()).map_err(&err))
                    .collect::<Result<_, _>>()?;
                if idx.len() < 3 {
                    return Err(err(format!("face needs at least 3 vertices, got {}", idx.len())));
                }
                for k in 1..idx.len() - 1 {
                    triangles.push(Triangle::new(
                        vertices[idx[0]],
                        vertices[idx[k]],
                        vertices[idx[k + 1]],
                    ));
                }
            }
            _ => {}
        }
    }
    TriangleMesh::new(triangles)
}

fn resolve_index(token: &str, n_vertices: usize) -> Result<usize, String> {
    let head = token.split('/').next().unwrap_or("");
    let raw: i64 = head.parse().map_err(|_| format!("bad face index {token:?}"))?;
    let resolved = match raw {
        0 => return Err("face index 0 is invalid (indices are 1-based)".into()),
        r if r > 0 => r - 1,
        r => n_vertices as i64 + r,
    };
    if resolved < 0 || resolved as usize >= n_vertices {
        return Err(format!("face index {raw} out of range (have {n_vertices} vertices)"));
    }
    Ok(resolved as usize)
}

/// Uniform grid of triangle ids traversed with a 3D DDA.
#[derive(Clone, Debug)]
struct TriangleIndex {
    origin: Vec3,
    cell: Vec3,
    dims: [usize; 3],
    cells: Vec<Vec<u32>>,
}

impl TriangleIndex {
    fn build(triangles: &[Triangle], min: Vec3, max: Vec3) -> Self {
        let pad = Vec3::splat(1e-6);
        let origin = min - pad;
        let extent = (max + pad) - origin;
        let target = (2.0 * (triangles.len() as f64).cbrt()).ceil().max(1.0);
        let longest = extent.x.max(extent.y).max(extent.z);
        let dims = [0, 1, 2].map(|a| ((extent[a] / longest * target).ceil() as usize).clamp(1, 128));
        let cell = Vec3::new(
            extent.x / dims[0] as f64,
            extent.y / dims[1] as f64,
            extent.z / dims[2] as f64,
        );
        let mut cells = vec![Vec::new(); dims[0] * dims[1] * dims[2]];
        for (id, tri) in triangles.iter().enumerate() {
            let lo = tri.min_corner() - origin;
            let hi = tri.max_corner() - origin;
            let range = |a: usize| {
                let l = ((lo[a] / cell[a]).floor().max(0.0) as usize).min(dims[a] - 1);
                let h = ((hi[a] / cell[a]).floor().max(0.0) as usize).min(dims[a] - 1);
                l..=h
            };
            for k in range(2) {
                for j in range(1) {
                    for i in range(0) {
                        cells[i + dims[0] * (j + dims[1] * k)].push(id as u32);
                    }
                }
            }
        }
        TriangleIndex { origin, cell, dims, cells }
    }

    fn first_hit(&self, triangles: &[Triangle], origin: Vec3, dir: Vec3) -> Option<f64> {
        let upper = self.origin
            + Vec3::new(
                self.cell.x * self.dims[0] as f64,
                self.cell.y * self.dims[1] as f64,
                self.cell.z * self.dims[2] as f64,
            );
        // slab clip against the index bounds
        let (mut t_enter, mut t_exit) = (0.0f64, f64::INFINITY);
        for a in 0..3 {
            if dir[a].abs() < 1e-300 {
                if origin[a] < self.origin[a] || origin[a] > upper[a] {
                    return None;
                }
            } else {
                let t0 = (self.origin[a] - origin[a]) / dir[a];
                let t1 = (upper[a] - origin[a]) / dir[a];
                t_enter = t_enter.max(t0.min(t1));
                t_exit = t_exit.min(t0.max(t1));
            }
        }
        if t_enter > t_exit {
            return None;
        }
        let start = origin + dir * t_enter;
        let mut cell = [0usize; 3];
        let mut step = [0isize; 3];
        let mut t_max = [f64::INFINITY; 3];
        let mut t_delta = [f64::INFINITY; 3];
        for a in 0..3 {
            let rel = (start[a] - self.origin[a]) / self.cell[a];
            cell[a] = (rel.floor().max(0.0) as usize).min(self.dims[a] - 1);
            if dir[a] > 0.0 {
                step[a] = 1;
                let boundary = self.origin[a] + (cell[a] + 1) as f64 * self.cell[a];
                t_max[a] = t_enter + (boundary - start[a]) / dir[a];
                t_delta[a] = self.cell[a] / dir[a];
            } else if dir[a] < 0.0 {
                step[a] = -1;
                let boundary = self.origin[a] + cell[a] as f64 * self.cell[a];
                t_max[a] = t_enter + (boundary - start[a]) / dir[a];
                t_delta[a] = -self.cell[a] / dir[a];
            }
        }
        let mut best: Option<f64> = None;
        loop {
            let ids = &self.cells[cell[0] + self.dims[0] * (cell[1] + self.dims[1] * cell[2])];
            for &id in ids {
                if let Some(t) = ray_triangle_intersect(origin, dir, &triangles[id as usize]) {
                    if best.is_none_or(|b| t < b) {
                        best = Some(t);
                    }
                }
            }
            let axis = if t_max[0] <= t_max[1] && t_max[0] <= t_max[2] {
                0
            } else if t_max[1] <= t_max[2] {
                1
            } else {
                2
            };
            let cell_exit = t_max[axis];
            // hits are only final once they lie before the current cell's exit;
            // the slack absorbs triangles stored in neighbouring cells
            if best.is_some_and(|b| b <= cell_exit + 1e-9) || cell_exit > t_exit + 1e-9 {
                return best;
            }
            let next = cell[axis] as isize + step[axis];
            if next < 0 || next as usize >= self.dims[axis] {
                return best;
            }
            cell[axis] = next as usize;
            t_max[axis] += t_delta[axis];
        }
    }
}

/// Axis-aligned box as 12 triangles.
pub fn box_triangles(min: Vec3, max: Vec3) -> Vec<Triangle> {
    let c = |x: bool, y: bool, z: bool| {
        Vec3::new(
            if x { max.x } else { min.x },
            if y { max.y } else { min.y },
            if z { max.z } else { min.z },
        )
    };
    let quads = [
        [c(false, false, false), c(false, true, false), c(false, true, true), c(false, false, true)],
        [c(true, false, false), c(true, false, true), c(true, true, true), c(true, true, false)],
        [c(false, false, false), c(false, false, true), c(true, false, true), c(true, false, false)],
        [c(false, true, false), c(true, true, false), c(true, true, true), c(false, true, true)],
        [c(false, false, false), c(true, false, false), c(true, true, false), c(false, true, false)],
        [c(false, false, true), c(false, true, true), c(true, true, true), c(true, false, true)],
    ];
    quads
        .iter()
        .flat_map(|q| [Triangle::new(q[0], q[1], q[2]), Triangle::new(q[0], q[2], q[3])])
        .collect()
}
