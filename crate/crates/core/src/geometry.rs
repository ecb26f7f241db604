//! Small 3D math kernel: vectors, ray/triangle intersection, rotation
//! transport between unit vectors, spherical-cap sampling and viewing
//! frustum construction.
//!
//! World-up is `+y`. Camera roll is always zero.

use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

/// Determinant cutoff below which a ray is treated as parallel to a triangle.
pub const DET_EPSILON: f64 = 1e-12;
/// Hits closer than this are ignored (self-intersection guard).
pub const MIN_HIT_DISTANCE: f64 = 1e-9;
/// Tolerance used to decide whether two unit vectors are (anti)parallel.
pub const PARALLEL_EPSILON: f64 = 1e-9;
/// Slack on barycentric coordinates so shared edges are hit inclusively.
const EDGE_EPSILON: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);
    /// World-up direction.
    pub const UP: Vec3 = Vec3::Y;

    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    #[inline]
    pub fn splat(v: f64) -> Self {
        Vec3::new(v, v, v)
    }

    #[inline]
    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Unit vector in the same direction, or `None` for a (near-)zero vector.
    #[inline]
    pub fn try_normalize(self) -> Option<Vec3> {
        let n = self.norm();
        if n > 1e-300 && n.is_finite() {
            Some(self / n)
        } else {
            None
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn is_unit(self) -> bool {
        (self.norm() - 1.0).abs() <= 1e-9
    }

    #[inline]
    pub fn min(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    #[inline]
    pub fn max(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    /// Angle between two non-zero vectors, in radians.
    pub fn angle_to(self, o: Vec3) -> f64 {
        let c = self.dot(o) / (self.norm() * o.norm());
        c.clamp(-1.0, 1.0).acos()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        v.to_array()
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    #[inline]
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Triangle {
    pub a: Vec3,
    pub b: Vec3,
    pub c: Vec3,
}

impl Triangle {
    pub const fn new(a: Vec3, b: Vec3, c: Vec3) -> Self {
        Triangle { a, b, c }
    }

    pub fn area(&self) -> f64 {
        0.5 * (self.b - self.a).cross(self.c - self.a).norm()
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.area() > 1e-12)
    }

    pub fn min_corner(&self) -> Vec3 {
        self.a.min(self.b).min(self.c)
    }

    pub fn max_corner(&self) -> Vec3 {
        self.a.max(self.b).max(self.c)
    }
}

/// Möller–Trumbore ray/triangle intersection.
///
/// Returns the distance along `dir` (which should be unit length) to the hit
/// point. Edges are inclusive. Parallel rays and hits closer than
/// [`MIN_HIT_DISTANCE`] report no hit.
pub fn ray_triangle_intersect(origin: Vec3, dir: Vec3, tri: &Triangle) -> Option<f64> {
    let e1 = tri.b - tri.a;
    let e2 = tri.c - tri.a;
    let p = dir.cross(e2);
    let det = e1.dot(p);
    if det.abs() < DET_EPSILON {
        return None;
    }
    let inv_det = 1.0 / det;
    let s = origin - tri.a;
    let u = s.dot(p) * inv_det;
    if !(-EDGE_EPSILON..=1.0 + EDGE_EPSILON).contains(&u) {
        return None;
    }
    let q = s.cross(e1);
    let v = dir.dot(q) * inv_det;
    if v < -EDGE_EPSILON || u + v > 1.0 + EDGE_EPSILON {
        return None;
    }
    let t = e2.dot(q) * inv_det;
    (t >= MIN_HIT_DISTANCE).then_some(t)
}

/// Nearest hit of a ray against a triangle mesh: `(t, hit point)`.
pub fn ray_first_hit(
    origin: Vec3,
    dir: Vec3,
    mesh: &crate::scene::TriangleMesh,
) -> Option<(f64, Vec3)> {
    mesh.first_hit(origin, dir).map(|t| (t, origin + dir * t))
}

/// Minimum-t hit over a plain triangle slice, without any acceleration.
pub fn brute_force_first_hit(origin: Vec3, dir: Vec3, triangles: &[Triangle]) -> Option<f64> {
    triangles
        .iter()
        .filter_map(|t| ray_triangle_intersect(origin, dir, t))
        .min_by(f64::total_cmp)
}

/// Applies to `v` the minimal rotation carrying `v_from` onto `v_to`.
///
/// Both reference vectors are normalized first. Nearly coincident references
/// leave `v` unchanged; antiparallel references have no unique minimal
/// rotation and are rejected.
pub fn rotate_along(v_from: Vec3, v_to: Vec3, v: Vec3) -> Result<Vec3, GeometryError> {
    let from = v_from.try_normalize().ok_or(GeometryError::ZeroVector)?;
    let to = v_to.try_normalize().ok_or(GeometryError::ZeroVector)?;
    let cos = from.dot(to).clamp(-1.0, 1.0);
    if cos > 1.0 - PARALLEL_EPSILON {
        return Ok(v);
    }
    if cos < -1.0 + PARALLEL_EPSILON {
        return Err(GeometryError::AntiparallelRotation);
    }
    let axis = from.cross(to).try_normalize().ok_or(GeometryError::AntiparallelRotation)?;
    Ok(rotate_about_axis(v, axis, cos.acos()))
}

/// Rotation of `v` about the unit `axis` by `angle` radians (right-handed).
pub fn rotate_about_axis(v: Vec3, axis: Vec3, angle: f64) -> Vec3 {
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    let Vec3 { x: nx, y: ny, z: nz } = axis;
    Vec3::new(
        (t * nx * nx + c) * v.x + (t * nx * ny - s * nz) * v.y + (t * nx * nz + s * ny) * v.z,
        (t * nx * ny + s * nz) * v.x + (t * ny * ny + c) * v.y + (t * ny * nz - s * nx) * v.z,
        (t * nx * nz - s * ny) * v.x + (t * ny * nz + s * nx) * v.y + (t * nz * nz + c) * v.z,
    )
}

/// Draws `n` unit vectors uniformly from the spherical cap of half-angle
/// `alpha` around `+z`.
pub fn sample_spherical_cap<R: Rng + ?Sized>(alpha: f64, n: usize, rng: &mut R) -> Vec<Vec3> {
    let z_min = alpha.cos();
    (0..n)
        .map(|_| {
            let z = z_min + rng.random::<f64>() * (1.0 - z_min);
            let r = (1.0 - z * z).max(0.0).sqrt();
            let theta = rng.random::<f64>() * std::f64::consts::TAU;
            Vec3::new(r * theta.cos(), r * theta.sin(), z)
        })
        .collect()
}

/// Extremity points of the horizontal and vertical field of view, each at
/// unit distance from the apex.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrustumCorners {
    pub r_w1: Vec3,
    pub r_w2: Vec3,
    pub r_h1: Vec3,
    pub r_h2: Vec3,
}

/// Camera-local orthonormal basis for a zero-roll camera looking along `dir`.
pub fn camera_basis(dir: Vec3) -> Result<(Vec3, Vec3, Vec3), GeometryError> {
    let forward = dir.try_normalize().ok_or(GeometryError::ZeroVector)?;
    if forward.dot(Vec3::UP).abs() > 1.0 - PARALLEL_EPSILON {
        return Err(GeometryError::DegenerateOrientation);
    }
    let right = forward
        .cross(Vec3::UP)
        .try_normalize()
        .ok_or(GeometryError::DegenerateOrientation)?;
    let cam_up = right.cross(forward);
    Ok((forward, right, cam_up))
}

pub fn frustum_corners(
    position: Vec3,
    dir: Vec3,
    hfov: f64,
    vfov: f64,
) -> Result<FrustumCorners, GeometryError> {
    for fov in [hfov, vfov] {
        if !(fov > 0.0 && fov < std::f64::consts::PI) {
            return Err(GeometryError::InvalidFov(fov));
        }
    }
    let (forward, right, cam_up) = camera_basis(dir)?;
    Ok(FrustumCorners {
        r_w1: position + rotate_about_axis(forward, cam_up, hfov / 2.0),
        r_w2: position + rotate_about_axis(forward, cam_up, -hfov / 2.0),
        r_h1: position + rotate_about_axis(forward, right, vfov / 2.0),
        r_h2: position + rotate_about_axis(forward, right, -vfov / 2.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_3, PI};

    fn unit_tri() -> Triangle {
        Triangle::new(Vec3::ZERO, Vec3::X, Vec3::Y)
    }

    fn close(a: Vec3, b: Vec3, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn ray_hits_interior_from_above() {
        let t = ray_triangle_intersect(Vec3::new(0.25, 0.25, 1.0), -Vec3::Z, &unit_tri());
        assert!((t.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ray_misses_outside_projection() {
        assert!(ray_triangle_intersect(Vec3::new(2.0, 2.0, 1.0), -Vec3::Z, &unit_tri()).is_none());
    }

    #[test]
    fn parallel_ray_misses() {
        assert!(ray_triangle_intersect(Vec3::new(0.0, 0.0, 1.0), Vec3::X, &unit_tri()).is_none());
    }

    #[test]
    fn edge_hits_are_inclusive() {
        let t = ray_triangle_intersect(Vec3::new(0.5, 0.0, 1.0), -Vec3::Z, &unit_tri());
        assert!(t.is_some());
        let t = ray_triangle_intersect(Vec3::new(0.5, 0.5, 1.0), -Vec3::Z, &unit_tri());
        assert!(t.is_some());
    }

    #[test]
    fn hits_behind_origin_are_ignored() {
        assert!(ray_triangle_intersect(Vec3::new(0.25, 0.25, 1.0), Vec3::Z, &unit_tri()).is_none());
        // origin on the surface itself: t = 0 is below the guard
        assert!(ray_triangle_intersect(Vec3::new(0.25, 0.25, 0.0), -Vec3::Z, &unit_tri()).is_none());
    }

    #[test]
    fn brute_force_first_hit_picks_nearest_wall() {
        let wall = |x: f64| {
            [
                Triangle::new(Vec3::new(x, -1.0, -1.0), Vec3::new(x, 1.0, -1.0), Vec3::new(x, 1.0, 1.0)),
                Triangle::new(Vec3::new(x, -1.0, -1.0), Vec3::new(x, 1.0, 1.0), Vec3::new(x, -1.0, 1.0)),
            ]
        };
        let mut tris = wall(4.0).to_vec();
        tris.extend(wall(2.0));
        // oracle: every individual hit, minimum taken by hand
        let hits: Vec<f64> =
            tris.iter().filter_map(|t| ray_triangle_intersect(Vec3::ZERO, Vec3::X, t)).collect();
        assert!(hits.contains(&2.0) && hits.contains(&4.0));
        assert_eq!(brute_force_first_hit(Vec3::ZERO, Vec3::X, &tris), Some(2.0));
        assert_eq!(brute_force_first_hit(Vec3::ZERO, Vec3::X, &[]), None);
    }

    #[test]
    fn rotate_along_examples() {
        assert!(close(rotate_along(Vec3::X, Vec3::Y, Vec3::X).unwrap(), Vec3::Y, 1e-12));
        assert!(close(rotate_along(Vec3::X, Vec3::Y, Vec3::Z).unwrap(), Vec3::Z, 1e-12));
        // explicit 90 degree rotation about z: (x, y) -> (-y, x)
        let v = Vec3::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0);
        let expected = Vec3::new(-v.y, v.x, 0.0);
        assert!(close(rotate_along(Vec3::X, Vec3::Y, v).unwrap(), expected, 1e-12));
    }

    #[test]
    fn rotate_along_degenerate_inputs() {
        let v = Vec3::new(0.3, -0.2, 0.9);
        assert_eq!(rotate_along(Vec3::Z, Vec3::Z, v).unwrap(), v);
        assert_eq!(
            rotate_along(Vec3::Z, -Vec3::Z, v),
            Err(GeometryError::AntiparallelRotation)
        );
        assert_eq!(rotate_along(Vec3::ZERO, Vec3::Z, v), Err(GeometryError::ZeroVector));
    }

    #[test]
    fn spherical_cap_pole_and_hemisphere() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for s in sample_spherical_cap(0.0, 5, &mut rng) {
            assert!(close(s, Vec3::Z, 1e-12));
        }
        let hemi = sample_spherical_cap(FRAC_PI_2, 10_000, &mut rng);
        assert_eq!(hemi.len(), 10_000);
        assert!(hemi.iter().all(|s| s.z >= -1e-9 && s.is_unit()));
    }

    #[test]
    fn spherical_cap_mean_height() {
        // z ~ U[cos a, 1]: mean (1 + cos a)/2, sd (1 - cos a)/sqrt(12)
        let n = 100_000;
        let alpha = FRAC_PI_3;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mean = sample_spherical_cap(alpha, n, &mut rng).iter().map(|s| s.z).sum::<f64>()
            / n as f64;
        let expected = (1.0 + alpha.cos()) / 2.0;
        let se = (1.0 - alpha.cos()) / 12f64.sqrt() / (n as f64).sqrt();
        assert!((mean - expected).abs() <= 3.0 * se, "mean {mean} vs {expected}");
    }

    #[test]
    fn frustum_corners_for_x_axis_camera() {
        let c = frustum_corners(Vec3::ZERO, Vec3::X, FRAC_PI_2, 1.0).unwrap();
        let h = FRAC_1_SQRT_2;
        // rotating x about +y by +-45 degrees gives (h, 0, -+h)
        let mut got = [c.r_w1, c.r_w2];
        got.sort_by(|a, b| a.z.total_cmp(&b.z));
        assert!(close(got[0], Vec3::new(h, 0.0, -h), 1e-12));
        assert!(close(got[1], Vec3::new(h, 0.0, h), 1e-12));
        assert!((c.r_h1.y.abs() - 0.5f64.sin()).abs() < 1e-12);
    }

    #[test]
    fn frustum_rejects_vertical_direction() {
        assert_eq!(
            frustum_corners(Vec3::ZERO, Vec3::Y, 1.0, 1.0),
            Err(GeometryError::DegenerateOrientation)
        );
        assert_eq!(
            frustum_corners(Vec3::ZERO, -Vec3::Y, 1.0, 1.0),
            Err(GeometryError::DegenerateOrientation)
        );
        assert!(matches!(
            frustum_corners(Vec3::ZERO, Vec3::X, PI, 1.0),
            Err(GeometryError::InvalidFov(_))
        ));
    }

    fn arb_unit() -> impl Strategy<Value = Vec3> {
        (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
            .prop_filter_map("non-zero", |(x, y, z)| Vec3::new(x, y, z).try_normalize())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn rotation_preserves_norm_and_maps_reference(
            from in arb_unit(),
            to in arb_unit(),
            v in (-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0),
        ) {
            prop_assume!(from.dot(to) > -1.0 + 1e-6);
            let v = Vec3::new(v.0, v.1, v.2);
            let out = rotate_along(from, to, v).unwrap();
            prop_assert!((out.norm() - v.norm()).abs() <= 1e-9);
            prop_assert!(close(rotate_along(from, to, from).unwrap(), to, 1e-9));
        }

        #[test]
        fn cap_samples_stay_inside(alpha in 0.0f64..PI, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for s in sample_spherical_cap(alpha, 32, &mut rng) {
                prop_assert!(s.is_unit());
                prop_assert!(s.dot(Vec3::Z) >= alpha.cos() - 1e-9);
            }
        }

        #[test]
        fn frustum_corners_are_symmetric_unit_offsets(
            dir in arb_unit(),
            hfov in 0.05f64..3.0,
            vfov in 0.05f64..3.0,
            p in (-10.0f64..10.0, -10.0f64..10.0, -10.0f64..10.0),
        ) {
            prop_assume!(dir.y.abs() < 0.999);
            let pos = Vec3::new(p.0, p.1, p.2);
            let c = frustum_corners(pos, dir, hfov, vfov).unwrap();
            for corner in [c.r_w1, c.r_w2, c.r_h1, c.r_h2] {
                prop_assert!(((corner - pos).norm() - 1.0).abs() <= 1e-9);
            }
            let (w1, w2) = (c.r_w1 - pos, c.r_w2 - pos);
            prop_assert!((w1.angle_to(w2) - hfov).abs() <= 1e-9);
            prop_assert!((dir.dot(w1) - dir.dot(w2)).abs() <= 1e-9);
            let (h1, h2) = (c.r_h1 - pos, c.r_h2 - pos);
            prop_assert!((h1.angle_to(h2) - vfov).abs() <= 1e-9);
        }
    }
}
