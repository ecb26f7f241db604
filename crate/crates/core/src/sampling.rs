//! Candidate camera configuration generators.
//!
//! * [`sample_random_configurations`]: uniform positions, isotropic directions.
//! * [`explore_and_exploit`]: a random share plus jittered children of the
//!   previous network.
//! * [`target_uncovered_spaces`]: a random share plus cameras aimed at
//!   supervoxels weighted by how much of them is still uncovered.

use std::collections::HashSet;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::SamplingError;
use crate::geometry::{rotate_along, sample_spherical_cap, Vec3, PARALLEL_EPSILON};
use crate::scene::{FreeId, SupervoxelGrid, TriangleMesh, VoxelGrid};
use crate::visibility::CameraConfig;

/// Attempts per targeted sample before it is replaced by a random one.
const TARGET_ATTEMPTS: usize = 64;

/// Direction quantum used to identify duplicate configurations.
pub const DIRECTION_QUANTUM: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Random,
    Exploit,
    Targeted,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledConfig {
    pub config: CameraConfig,
    pub provenance: Provenance,
}

/// Identity of a configuration for duplicate detection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConfigKey {
    position: FreeId,
    direction: [i64; 3],
}

impl ConfigKey {
    pub fn of(config: &CameraConfig) -> Self {
        let q = |x: f64| (x / DIRECTION_QUANTUM).round() as i64;
        let d = config.direction;
        ConfigKey { position: config.position, direction: [q(d.x), q(d.y), q(d.z)] }
    }
}

/// Ordered batch of sampled configurations, free of internal duplicates.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigBatch {
    pub entries: Vec<SampledConfig>,
    /// Set when the informed share could not be generated and was replaced
    /// by random samples.
    pub fell_back_to_random: bool,
}

impl ConfigBatch {
    fn from_entries(entries: Vec<SampledConfig>, fell_back_to_random: bool) -> Self {
        let mut seen = HashSet::with_capacity(entries.len());
        let entries = entries.into_iter().filter(|e| seen.insert(ConfigKey::of(&e.config))).collect();
        ConfigBatch { entries, fell_back_to_random }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, provenance: Provenance) -> usize {
        self.entries.iter().filter(|e| e.provenance == provenance).count()
    }

    pub fn configs(&self) -> impl Iterator<Item = &CameraConfig> {
        self.entries.iter().map(|e| &e.config)
    }
}

/// The legal camera positions: a subset of the free voxels.
#[derive(Clone, Debug, PartialEq)]
pub struct PositionSet {
    ids: Vec<FreeId>,
    member: Vec<bool>,
}

impl PositionSet {
    pub fn all(grid: &VoxelGrid) -> Self {
        Self::from_ids(grid, grid.free_ids().collect())
    }

    pub fn from_ids(grid: &VoxelGrid, mut ids: Vec<FreeId>) -> Self {
        ids.sort_unstable();
        ids.dedup();
        let mut member = vec![false; grid.n_free()];
        for &id in &ids {
            member[id as usize] = true;
        }
        PositionSet { ids, member }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: FreeId) -> bool {
        self.member.get(id as usize).copied().unwrap_or(false)
    }

    pub fn ids(&self) -> &[FreeId] {
        &self.ids
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> FreeId {
        self.ids[rng.random_range(0..self.ids.len())]
    }
}

/// Integer rounding, halves rounded up.
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

/// True for directions the zero-roll camera model cannot orient.
pub fn is_degenerate_direction(d: Vec3) -> bool {
    d.dot(Vec3::UP).abs() > 1.0 - PARALLEL_EPSILON
}

/// Normalized trivariate standard normal draw, resampled when vertical.
pub fn sample_direction<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    loop {
        let d = Vec3::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        if let Some(u) = d.try_normalize() {
            if !is_degenerate_direction(u) {
                return u;
            }
        }
    }
}

fn random_entries<R: Rng + ?Sized>(
    n_pos: usize,
    positions: &PositionSet,
    n_dir_pos: usize,
    rng: &mut R,
) -> Vec<SampledConfig> {
    let mut out = Vec::with_capacity(n_pos * n_dir_pos);
    for _ in 0..n_pos {
        let p = positions.draw(rng);
        for _ in 0..n_dir_pos {
            out.push(SampledConfig {
                config: CameraConfig::new(p, sample_direction(rng)),
                provenance: Provenance::Random,
            });
        }
    }
    out
}

/// `n_pos` uniform positions, each paired with `n_dir_pos` isotropic directions.
pub fn sample_random_configurations<R: Rng + ?Sized>(
    n_pos: usize,
    positions: &PositionSet,
    n_dir_pos: usize,
    rng: &mut R,
) -> Result<ConfigBatch, SamplingError> {
    if positions.is_empty() {
        return Err(SamplingError::NoFreeVoxels);
    }
    Ok(ConfigBatch::from_entries(random_entries(n_pos, positions, n_dir_pos, rng), false))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EeParams {
    pub n_pos: usize,
    #[serde(default = "default_n_dir_pos")]
    pub n_dir_pos: usize,
    #[serde(default = "default_f_exploit")]
    pub f_exploit: f64,
    /// Radians.
    #[serde(default = "default_theta_jitter")]
    pub theta_jitter: f64,
    #[serde(default = "default_v_jitter")]
    pub v_jitter: u32,
}

fn default_n_dir_pos() -> usize {
    8
}
fn default_f_exploit() -> f64 {
    0.6
}
fn default_theta_jitter() -> f64 {
    30f64.to_radians()
}
fn default_v_jitter() -> u32 {
    1
}
fn default_f_unc() -> f64 {
    0.4
}
fn default_super_size() -> usize {
    5
}

impl EeParams {
    pub fn new(n_pos: usize) -> Self {
        EeParams {
            n_pos,
            n_dir_pos: default_n_dir_pos(),
            f_exploit: default_f_exploit(),
            theta_jitter: default_theta_jitter(),
            v_jitter: default_v_jitter(),
        }
    }

    pub fn validate(&self) -> Result<(), SamplingError> {
        if self.n_pos == 0 || self.n_dir_pos == 0 {
            return Err(SamplingError::InvalidParams("n_pos and n_dir_pos must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.f_exploit) {
            return Err(SamplingError::InvalidParams(format!("f_exploit {} outside [0, 1]", self.f_exploit)));
        }
        if !(0.0..=std::f64::consts::PI).contains(&self.theta_jitter) {
            return Err(SamplingError::InvalidParams("theta_jitter outside [0, pi]".into()));
        }
        Ok(())
    }
}

/// Sample sizes for one explore-and-exploit round.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EePlan {
    pub n_tot: usize,
    pub n_explore: usize,
    pub n_pos_explore: usize,
    pub n_exploit: usize,
    pub n_config_sol: usize,
}

impl EePlan {
    pub fn new(params: &EeParams, n_sol: usize) -> Self {
        let n_tot = params.n_pos * params.n_dir_pos;
        let n_explore = round_half_up(n_tot as f64 * (1.0 - params.f_exploit));
        let n_exploit = round_half_up(n_tot as f64 * params.f_exploit);
        EePlan {
            n_tot,
            n_explore,
            n_pos_explore: n_explore.div_ceil(params.n_dir_pos),
            n_exploit,
            n_config_sol: if n_sol == 0 { 0 } else { round_half_up(n_exploit as f64 / n_sol as f64) },
        }
    }
}

/// Explore-and-exploit round around the previous network `prev_solution`.
///
/// Exploit children take the parent position plus a uniform integer offset
/// in `[-v_jitter, v_jitter]^3` (redrawn until it lands on a legal position)
/// and the parent direction turned by the rotation carrying `+z` onto a
/// spherical-cap sample of half-angle `theta_jitter`. Without a previous
/// network the whole round is random.
pub fn explore_and_exploit<R: Rng + ?Sized>(
    params: &EeParams,
    grid: &VoxelGrid,
    positions: &PositionSet,
    prev_solution: &[CameraConfig],
    rng: &mut R,
) -> Result<ConfigBatch, SamplingError> {
    params.validate()?;
    if positions.is_empty() {
        return Err(SamplingError::NoFreeVoxels);
    }
    if prev_solution.is_empty() && params.f_exploit > 0.0 {
        let entries = random_entries(params.n_pos, positions, params.n_dir_pos, rng);
        return Ok(ConfigBatch::from_entries(entries, true));
    }
    let plan = EePlan::new(params, prev_solution.len());
    let mut entries = random_entries(plan.n_pos_explore, positions, params.n_dir_pos, rng);
    if plan.n_config_sol == 0 {
        return Ok(ConfigBatch::from_entries(entries, false));
    }

    let caps = sample_spherical_cap(params.theta_jitter, prev_solution.len() * plan.n_config_sol, rng);
    let vj = params.v_jitter as i64;
    for (i, parent) in prev_solution.iter().enumerate() {
        let base = grid.free_coords_i64(parent.position);
        for k in 0..plan.n_config_sol {
            let position = loop {
                let off: [i64; 3] = std::array::from_fn(|_| rng.random_range(-vj..=vj));
                let c = [base[0] + off[0], base[1] + off[1], base[2] + off[2]];
                if let Some(id) = grid.free_id_at(c).filter(|&id| positions.contains(id)) {
                    break id;
                }
            };
            let mut cap = caps[i * plan.n_config_sol + k];
            let direction = loop {
                match rotate_along(Vec3::Z, cap, parent.direction) {
                    Ok(d) if !is_degenerate_direction(d) => break d.try_normalize().unwrap_or(d),
                    _ => cap = sample_spherical_cap(params.theta_jitter, 1, rng)[0],
                }
            };
            entries.push(SampledConfig {
                config: CameraConfig::new(position, direction),
                provenance: Provenance::Exploit,
            });
        }
    }
    Ok(ConfigBatch::from_entries(entries, false))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TusParams {
    pub n_pos: usize,
    #[serde(default = "default_n_dir_pos")]
    pub n_dir_pos: usize,
    #[serde(default = "default_f_unc")]
    pub f_unc: f64,
    #[serde(default = "default_super_size")]
    pub super_size: usize,
    #[serde(default)]
    pub strict_vis_req: bool,
}

impl TusParams {
    pub fn new(n_pos: usize) -> Self {
        TusParams {
            n_pos,
            n_dir_pos: default_n_dir_pos(),
            f_unc: default_f_unc(),
            super_size: default_super_size(),
            strict_vis_req: false,
        }
    }

    pub fn validate(&self) -> Result<(), SamplingError> {
        if self.n_pos == 0 || self.n_dir_pos == 0 || self.super_size == 0 {
            return Err(SamplingError::InvalidParams(
                "n_pos, n_dir_pos and super_size must be >= 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.f_unc) {
            return Err(SamplingError::InvalidParams(format!("f_unc {} outside [0, 1]", self.f_unc)));
        }
        Ok(())
    }
}

/// Categorical probabilities of targeting each supervoxel.
pub fn target_probabilities(supergrid: &SupervoxelGrid) -> Option<Vec<f64>> {
    let total = supergrid.total();
    (total > 0).then(|| supergrid.counts.iter().map(|&c| c as f64 / total as f64).collect())
}

/// Target-uncovered-spaces round. `supergrid` holds the uncovered counts of
/// the previous network; `None` or an all-zero grid turns the targeted
/// share into random samples.
pub fn target_uncovered_spaces<R: Rng + ?Sized>(
    params: &TusParams,
    grid: &VoxelGrid,
    mesh: &TriangleMesh,
    positions: &PositionSet,
    supergrid: Option<&SupervoxelGrid>,
    rng: &mut R,
) -> Result<ConfigBatch, SamplingError> {
    params.validate()?;
    if positions.is_empty() {
        return Err(SamplingError::NoFreeVoxels);
    }
    let n_tot = params.n_pos * params.n_dir_pos;
    let n_random = round_half_up(n_tot as f64 * (1.0 - params.f_unc));
    let n_targeted = round_half_up(n_tot as f64 * params.f_unc);
    let mut entries = random_entries(n_random.div_ceil(params.n_dir_pos), positions, params.n_dir_pos, rng);

    let weights = supergrid.filter(|s| s.total() > 0);
    let Some(supergrid) = weights else {
        entries.extend(random_entries(n_targeted, positions, 1, rng));
        return Ok(ConfigBatch::from_entries(entries, n_targeted > 0));
    };
    let categorical =
        WeightedIndex::new(&supergrid.counts).map_err(|e| SamplingError::InvalidParams(e.to_string()))?;
    let mut fell_back = false;
    for _ in 0..n_targeted {
        match targeted_config(params, grid, mesh, positions, supergrid, &categorical, rng) {
            Some(config) => entries.push(SampledConfig { config, provenance: Provenance::Targeted }),
            None => {
                fell_back = true;
                entries.extend(random_entries(1, positions, 1, rng));
            }
        }
    }
    Ok(ConfigBatch::from_entries(entries, fell_back))
}

fn targeted_config<R: Rng + ?Sized>(
    params: &TusParams,
    grid: &VoxelGrid,
    mesh: &TriangleMesh,
    positions: &PositionSet,
    supergrid: &SupervoxelGrid,
    categorical: &WeightedIndex<u64>,
    rng: &mut R,
) -> Option<CameraConfig> {
    for _ in 0..TARGET_ATTEMPTS {
        let center = supergrid.centers[categorical.sample(rng)];
        let start = positions.draw(rng);
        let position = if params.strict_vis_req {
            match linear_visibility(start, center, grid, mesh) {
                Ok(p) if positions.contains(p) => p,
                _ => continue,
            }
        } else {
            start
        };
        let Some(direction) = (center - grid.free_center(position)).try_normalize() else { continue };
        if is_degenerate_direction(direction) {
            continue;
        }
        return Some(CameraConfig::new(position, direction));
    }
    None
}

/// Furthest free voxel from `target` along the ray from `target` through
/// the center of `start`, such that every voxel up to it is free and its
/// center has an unobstructed line to `target`.
///
/// Closed voxels at the very start of the march (a target inside an
/// obstacle) are skipped; if the first free voxel reached is already
/// occluded there is no valid position.
pub fn linear_visibility(
    start: FreeId,
    target: Vec3,
    grid: &VoxelGrid,
    mesh: &TriangleMesh,
) -> Result<FreeId, SamplingError> {
    let from = grid.free_center(start);
    let dir = (from - target).try_normalize().ok_or(SamplingError::ZeroDirection)?;
    let pitch = grid.voxel_size();
    let mut found: Option<FreeId> = None;
    let mut k = 1usize;
    while let Some(c) = grid.voxel_of_point(target + dir * (k as f64 * pitch)) {
        k += 1;
        let cell = c.map(|x| x as i64);
        match grid.free_id_at(cell) {
            None if found.is_none() => continue,
            None => break,
            Some(id) if Some(id) == found => continue,
            Some(id) => {
                if mesh.segment_blocked(grid.free_center(id), target) {
                    break;
                }
                found = Some(id);
            }
        }
    }
    found.ok_or(SamplingError::NoPosition)
}
