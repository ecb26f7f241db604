//! The iterative placement loop: sample, compute visibility for the new
//! configurations, grow the coverage instance, re-solve warm-started from the
//! previous network, repeat until the sampling budget is spent.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, SceneError};
use crate::geometry::Vec3;
use crate::sampling::{
    explore_and_exploit, sample_random_configurations, target_uncovered_spaces, ConfigBatch, ConfigKey,
    EeParams, PositionSet, Provenance, SampledConfig, TusParams,
};
use crate::scene::{generate_room, load_mesh, supervoxel_counts, voxelize, RoomParams, TriangleMesh, VoxelGrid};
use crate::solver::{coverage_metrics, solve, Candidate, CoverageInstance, CoverageMetrics, Optimality, Solution, SolverKind};
use crate::visibility::{compute_views, CameraConfig, CameraIntrinsics};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SceneSource {
    Obj {
        path: PathBuf,
        #[serde(default)]
        interior_seed: Option<Vec3>,
    },
    Room(RoomParams),
}

/// Camera intrinsics with angles in degrees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntrinsicsConfig {
    #[serde(default = "default_hfov")]
    pub hfov_deg: f64,
    #[serde(default = "default_vfov")]
    pub vfov_deg: f64,
    #[serde(default)]
    pub dof_min: f64,
    #[serde(default)]
    pub dof_max: Option<f64>,
}

fn default_hfov() -> f64 {
    90.0
}
fn default_vfov() -> f64 {
    73.0
}

impl Default for IntrinsicsConfig {
    fn default() -> Self {
        IntrinsicsConfig { hfov_deg: default_hfov(), vfov_deg: default_vfov(), dof_min: 0.0, dof_max: None }
    }
}

impl IntrinsicsConfig {
    pub fn to_intrinsics(&self) -> CameraIntrinsics {
        CameraIntrinsics {
            hfov: self.hfov_deg.to_radians(),
            vfov: self.vfov_deg.to_radians(),
            dof_min: self.dof_min,
            dof_max: self.dof_max,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EeConfig {
    #[serde(default = "default_f_exploit")]
    pub f_exploit: f64,
    #[serde(default = "default_theta_jitter")]
    pub theta_jitter_deg: f64,
    #[serde(default = "one_u32")]
    pub v_jitter: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TusConfig {
    #[serde(default = "default_f_unc")]
    pub f_unc: f64,
    #[serde(default = "default_super_size")]
    pub super_size: usize,
    #[serde(default)]
    pub strict_vis_req: bool,
}

fn default_f_exploit() -> f64 {
    0.6
}
fn default_theta_jitter() -> f64 {
    30.0
}
fn one_u32() -> u32 {
    1
}
fn default_f_unc() -> f64 {
    0.4
}
fn default_super_size() -> usize {
    5
}

impl Default for EeConfig {
    fn default() -> Self {
        EeConfig { f_exploit: default_f_exploit(), theta_jitter_deg: default_theta_jitter(), v_jitter: 1 }
    }
}

impl Default for TusConfig {
    fn default() -> Self {
        TusConfig { f_unc: default_f_unc(), super_size: default_super_size(), strict_vis_req: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum Strategy {
    Rs,
    Ee(EeConfig),
    Tus(TusConfig),
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Rs => "RS",
            Strategy::Ee(_) => "EE",
            Strategy::Tus(_) => "TUS",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Scenario name used to group benchmark rows.
    #[serde(default)]
    pub label: Option<String>,
    pub scene: SceneSource,
    #[serde(default = "one_f64")]
    pub voxel_size: f64,
    #[serde(default)]
    pub intrinsics: IntrinsicsConfig,
    pub strategy: Strategy,
    /// Total configurations sampled over the whole run.
    #[serde(default = "default_sampling_budget")]
    pub sampling_budget: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_n_dir_pos")]
    pub n_dir_pos: usize,
    /// Maximum total camera cost.
    pub beta: f64,
    /// Cost of every camera.
    #[serde(default = "one_f64")]
    pub camera_cost: f64,
    /// Chebyshev locale radius in voxels.
    #[serde(default)]
    pub r_loc: u32,
    #[serde(default)]
    pub solver: SolverKind,
    #[serde(default)]
    pub time_limit_s: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one_usize")]
    pub trials: usize,
}

fn one_f64() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn default_sampling_budget() -> usize {
    800
}
fn default_iterations() -> usize {
    10
}
fn default_n_dir_pos() -> usize {
    8
}

impl RunConfig {
    pub fn new(scene: SceneSource, strategy: Strategy, beta: f64) -> Self {
        RunConfig {
            label: None,
            scene,
            voxel_size: 1.0,
            intrinsics: IntrinsicsConfig::default(),
            strategy,
            sampling_budget: default_sampling_budget(),
            iterations: default_iterations(),
            n_dir_pos: default_n_dir_pos(),
            beta,
            camera_cost: 1.0,
            r_loc: 0,
            solver: SolverKind::Exact,
            time_limit_s: None,
            seed: 0,
            trials: 1,
        }
    }

    /// Iteration count actually used: random sampling spends the whole
    /// budget at once.
    pub fn effective_iterations(&self) -> usize {
        match self.strategy {
            Strategy::Rs => 1,
            _ => self.iterations,
        }
    }

    /// Camera positions sampled per iteration.
    pub fn positions_per_iteration(&self) -> usize {
        let per_iter = self.sampling_budget as f64 / (self.effective_iterations() * self.n_dir_pos) as f64;
        crate::sampling::round_half_up(per_iter).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.iterations == 0 {
            return bad("iterations must be >= 1".into());
        }
        if self.n_dir_pos == 0 || self.sampling_budget == 0 {
            return bad("sampling_budget and n_dir_pos must be >= 1".into());
        }
        if !(self.voxel_size > 0.0 && self.voxel_size.is_finite()) {
            return bad(format!("voxel_size {} must be positive", self.voxel_size));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta {} must be >= 0", self.beta));
        }
        if !(self.camera_cost > 0.0 && self.camera_cost.is_finite()) {
            return bad(format!("camera_cost {} must be > 0", self.camera_cost));
        }
        if self.time_limit_s.is_some_and(|t| !(t >= 0.0 && t.is_finite())) {
            return bad("time_limit_s must be >= 0".into());
        }
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        self.intrinsics.to_intrinsics().validate()?;
        if let SceneSource::Room(p) = &self.scene {
            p.validate()?;
        }
        self.ee_params()?.map(|p| p.validate()).transpose()?;
        self.tus_params()?.map(|p| p.validate()).transpose()?;
        Ok(())
    }

    fn ee_params(&self) -> Result<Option<EeParams>> {
        Ok(match self.strategy {
            Strategy::Ee(c) => Some(EeParams {
                n_pos: self.positions_per_iteration(),
                n_dir_pos: self.n_dir_pos,
                f_exploit: c.f_exploit,
                theta_jitter: c.theta_jitter_deg.to_radians(),
                v_jitter: c.v_jitter,
            }),
            _ => None,
        })
    }

    fn tus_params(&self) -> Result<Option<TusParams>> {
        Ok(match self.strategy {
            Strategy::Tus(c) => Some(TusParams {
                n_pos: self.positions_per_iteration(),
                n_dir_pos: self.n_dir_pos,
                f_unc: c.f_unc,
                super_size: c.super_size,
                strict_vis_req: c.strict_vis_req,
            }),
            _ => None,
        })
    }
}

/// Mesh plus its voxelization.
#[derive(Clone, Debug)]
pub struct Scene {
    pub mesh: TriangleMesh,
    pub grid: VoxelGrid,
}

impl Scene {
    pub fn build(source: &SceneSource, voxel_size: f64) -> Result<Scene> {
        let (mesh, seed) = match source {
            SceneSource::Obj { path, interior_seed } => (load_mesh(path)?, *interior_seed),
            SceneSource::Room(p) => (generate_room(p)?, None),
        };
        let grid = voxelize(&mesh, voxel_size, seed)?;
        Ok(Scene { mesh, grid })
    }
}

/// Every configuration accepted so far with its visible set.
#[derive(Clone, Debug, Default)]
pub struct ConfigPool {
    pub entries: Vec<SampledConfig>,
    keys: HashSet<ConfigKey>,
}

impl ConfigPool {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, config: &CameraConfig) -> bool {
        self.keys.contains(&ConfigKey::of(config))
    }
}

/// Appends the batch entries not already in the pool (same voxel and
/// direction equal after quantization) and returns them in batch order.
pub fn dedupe_into_pool(pool: &mut ConfigPool, batch: &ConfigBatch) -> Vec<SampledConfig> {
    let mut accepted = Vec::new();
    for e in &batch.entries {
        if pool.keys.insert(ConfigKey::of(&e.config)) {
            pool.entries.push(*e);
            accepted.push(*e);
        }
    }
    accepted
}

/// Splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const PURPOSE_SAMPLING: u64 = 1;

/// Seed of an independent random stream for one (iteration, purpose) pair.
pub fn sub_seed(master: u64, iteration: u64, purpose: u64) -> u64 {
    mix(mix(mix(master) ^ iteration) ^ purpose)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceCounts {
    pub random: usize,
    pub exploit: usize,
    pub targeted: usize,
}

impl ProvenanceCounts {
    fn add(&mut self, p: Provenance) {
        match p {
            Provenance::Random => self.random += 1,
            Provenance::Exploit => self.exploit += 1,
            Provenance::Targeted => self.targeted += 1,
        }
    }

    fn of<'a>(entries: impl IntoIterator<Item = &'a SampledConfig>) -> Self {
        let mut c = ProvenanceCounts::default();
        for e in entries {
            c.add(e.provenance);
        }
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub sampled: usize,
    pub accepted: usize,
    pub cumulative_sampled: usize,
    pub pool_size: usize,
    pub coverage: usize,
    pub coverage_fraction: f64,
    pub status: Optimality,
    pub fell_back_to_random: bool,
    pub accepted_provenance: ProvenanceCounts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectedCamera {
    pub candidate: usize,
    pub position: u32,
    pub voxel: [usize; 3],
    pub center: Vec3,
    pub direction: Vec3,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub label: Option<String>,
    pub strategy: String,
    pub seed: u64,
    pub free_voxels: usize,
    pub iterations: Vec<IterationRecord>,
    pub final_coverage: usize,
    pub final_coverage_fraction: f64,
    pub status: Optimality,
    pub cameras: Vec<SelectedCamera>,
    pub metrics: CoverageMetrics,
    pub pool_provenance: ProvenanceCounts,
    pub config: RunConfig,
}

impl RunReport {
    pub fn coverage_trajectory(&self) -> Vec<usize> {
        self.iterations.iter().map(|r| r.coverage).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationTimings {
    pub sampling_s: f64,
    pub visibility_s: f64,
    pub solve_s: f64,
}

/// Wall-clock measurements, kept apart from the reproducible report.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTimings {
    pub scene_s: f64,
    pub iterations: Vec<IterationTimings>,
}

impl RunTimings {
    /// Scene construction plus sampling and visibility.
    pub fn preprocessing_s(&self) -> f64 {
        self.scene_s + self.iterations.iter().map(|t| t.sampling_s + t.visibility_s).sum::<f64>()
    }

    pub fn solve_s(&self) -> f64 {
        self.iterations.iter().map(|t| t.solve_s).sum()
    }
}

/// Everything a run produces.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub report: RunReport,
    pub timings: RunTimings,
    pub scene: Scene,
    pub solution: Solution,
}

/// Runs the sampling loop on a scene built from the config.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let t0 = Instant::now();
    let scene = Scene::build(&config.scene, config.voxel_size)?;
    let scene_s = t0.elapsed().as_secs_f64();
    let mut outcome = run_on_scene(config, scene)?;
    outcome.timings.scene_s = scene_s;
    Ok(outcome)
}

/// Runs the sampling loop on an already built scene.
pub fn run_on_scene(config: &RunConfig, scene: Scene) -> Result<RunOutcome> {
    config.validate()?;
    let Scene { mesh, grid } = &scene;
    let intrinsics = config.intrinsics.to_intrinsics();
    let positions = PositionSet::all(grid);
    let n_iter = config.effective_iterations();
    let n_pos = config.positions_per_iteration();
    let time_limit = config.time_limit_s.map(Duration::from_secs_f64);

    let mut pool = ConfigPool::default();
    let mut instance = CoverageInstance::new(grid.n_free(), config.beta, config.r_loc)?;
    let mut prev: Option<Solution> = None;
    let mut records = Vec::with_capacity(n_iter);
    let mut timings = RunTimings::default();
    let mut cumulative = 0;

    for it in 0..n_iter {
        let t_sample = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(config.seed, it as u64, PURPOSE_SAMPLING));
        let prev_configs: Vec<CameraConfig> = prev
            .as_ref()
            .map(|s| s.selected.iter().map(|&i| pool.entries[i].config).collect())
            .unwrap_or_default();
        let batch = match config.strategy {
            Strategy::Rs => sample_random_configurations(n_pos, &positions, config.n_dir_pos, &mut rng)?,
            Strategy::Ee(_) => {
                let params = config.ee_params()?.expect("EE strategy");
                explore_and_exploit(&params, grid, &positions, &prev_configs, &mut rng)?
            }
            Strategy::Tus(c) => {
                let params = config.tus_params()?.expect("TUS strategy");
                let supergrid = match &prev {
                    Some(s) => {
                        let mut covered = vec![false; grid.n_free()];
                        for &v in &s.covered {
                            covered[v as usize] = true;
                        }
                        let uncovered = grid.free_ids().filter(|&v| !covered[v as usize]);
                        Some(supervoxel_counts(grid, uncovered, c.super_size)?)
                    }
                    None => None,
                };
                target_uncovered_spaces(&params, grid, mesh, &positions, supergrid.as_ref(), &mut rng)?
            }
        };
        cumulative += batch.len();
        let accepted = dedupe_into_pool(&mut pool, &batch);
        if accepted.is_empty() {
            log::warn!("iteration {it}: no new unique configurations");
        }
        let sampling_s = t_sample.elapsed().as_secs_f64();

        let t_vis = Instant::now();
        let configs: Vec<CameraConfig> = accepted.iter().map(|e| e.config).collect();
        let views = compute_views(mesh, grid, &configs, &intrinsics)?;
        for (c, voxels) in configs.iter().zip(views) {
            let position = grid.free_coords_i64(c.position);
            instance.push(Candidate { voxels, cost: config.camera_cost, position: Some(position) })?;
        }
        let visibility_s = t_vis.elapsed().as_secs_f64();

        let t_solve = Instant::now();
        let sol = solve(config.solver, &instance, prev.as_ref(), time_limit)?;
        let solve_s = t_solve.elapsed().as_secs_f64();
        check_coverage(&instance, &sol)?;
        if let Some(p) = &prev {
            if sol.objective < p.objective {
                return Err(Error::Internal(format!(
                    "iteration {it}: coverage fell from {} to {}",
                    p.objective, sol.objective
                )));
            }
        }

        records.push(IterationRecord {
            iteration: it,
            sampled: batch.len(),
            accepted: accepted.len(),
            cumulative_sampled: cumulative,
            pool_size: pool.len(),
            coverage: sol.objective,
            coverage_fraction: sol.objective as f64 / grid.n_free() as f64,
            status: sol.status,
            fell_back_to_random: batch.fell_back_to_random,
            accepted_provenance: ProvenanceCounts::of(&accepted),
        });
        timings.iterations.push(IterationTimings { sampling_s, visibility_s, solve_s });
        log::info!(
            "{} iteration {}/{}: pool {}, coverage {} ({:.1}%)",
            config.strategy.name(),
            it + 1,
            n_iter,
            pool.len(),
            sol.objective,
            100.0 * sol.objective as f64 / grid.n_free() as f64
        );
        prev = Some(sol);
    }

    let solution = prev.expect("at least one iteration");
    let cameras = solution
        .selected
        .iter()
        .map(|&i| {
            let e = pool.entries[i];
            SelectedCamera {
                candidate: i,
                position: e.config.position,
                voxel: grid.free_coords(e.config.position),
                center: grid.free_center(e.config.position),
                direction: e.config.direction,
                provenance: e.provenance,
            }
        })
        .collect();
    let report = RunReport {
        label: config.label.clone(),
        strategy: config.strategy.name().to_string(),
        seed: config.seed,
        free_voxels: grid.n_free(),
        final_coverage: solution.objective,
        final_coverage_fraction: solution.objective as f64 / grid.n_free() as f64,
        status: solution.status,
        cameras,
        metrics: coverage_metrics(&solution, &instance),
        pool_provenance: ProvenanceCounts::of(&pool.entries),
        iterations: records,
        config: config.clone(),
    };
    Ok(RunOutcome { report, timings, scene, solution })
}

/// Recomputes the union of the selected visible sets from the raw lists.
fn check_coverage(instance: &CoverageInstance, sol: &Solution) -> Result<()> {
    let union: HashSet<u32> =
        sol.selected.iter().flat_map(|&i| instance.candidate(i).voxels.iter().copied()).collect();
    if union.len() != sol.objective {
        return Err(Error::Internal(format!(
            "solver reported coverage {} but the selection covers {}",
            sol.objective,
            union.len()
        )));
    }
    Ok(())
}

/// One run of one trial inside a benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub scenario: String,
    pub strategy: String,
    pub trial: usize,
    pub seed: u64,
    pub coverage: usize,
    pub coverage_fraction: f64,
}

/// Per (scenario, strategy) summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub scenario: String,
    pub strategy: String,
    pub runs: usize,
    pub min_coverage: usize,
    pub max_coverage: usize,
    pub mean_coverage: f64,
    pub mean_coverage_fraction: f64,
    /// Percent over the RS mean of the same scenario; `None` for RS itself
    /// or when the scenario has no RS runs.
    pub improvement_pct: Option<f64>,
    /// Share of the sampling budget at which the mean trajectory first
    /// exceeds the RS final mean.
    pub first_exceeds_rs_at: Option<f64>,
}

/// Mean trajectory with its min/max envelope at one iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub scenario: String,
    pub strategy: String,
    pub iteration: usize,
    pub budget_fraction: f64,
    pub mean: f64,
    pub min: usize,
    pub max: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub scenario: String,
    pub strategy: String,
    pub trial: usize,
    pub preprocessing_s: f64,
    pub solve_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchmarkResult {
    pub trials: Vec<TrialRow>,
    pub aggregates: Vec<AggregateRow>,
    pub trajectories: Vec<TrajectoryPoint>,
    pub timings: Vec<TimingRow>,
    pub reports: Vec<RunReport>,
}

fn scenario_name(i: usize, c: &RunConfig) -> String {
    c.label.clone().unwrap_or_else(|| format!("scenario-{i}"))
}

/// Runs every config for `trials` seeds (`seed`, `seed + 1`, ...) and
/// aggregates coverage per (scenario, strategy). Scenes are built once per
/// distinct scene source.
pub fn benchmark(configs: &[RunConfig], trials: usize) -> Result<BenchmarkResult> {
    if trials == 0 {
        return Err(Error::Config("trials must be >= 1".into()));
    }
    let mut out = BenchmarkResult::default();
    let mut scenes: Vec<(SceneSource, u64, Scene, f64)> = Vec::new();
    // (scenario, strategy) -> trajectories and free-voxel totals, in first-seen order
    type Group = ((String, String), Vec<Vec<usize>>, Vec<usize>);
    let mut groups: Vec<Group> = Vec::new();
    for (ci, config) in configs.iter().enumerate() {
        config.validate()?;
        let scenario = scenario_name(ci, config);
        let key = (config.scene.clone(), config.voxel_size.to_bits());
        let (scene, scene_s) = match scenes.iter().find(|(s, v, _, _)| (s, *v) == (&key.0, key.1)) {
            Some((_, _, scene, secs)) => (scene.clone(), *secs),
            None => {
                let t0 = Instant::now();
                let scene = Scene::build(&config.scene, config.voxel_size)?;
                let secs = t0.elapsed().as_secs_f64();
                scenes.push((key.0, key.1, scene.clone(), secs));
                (scene, secs)
            }
        };
        for trial in 0..trials {
            let seed = config.seed.wrapping_add(trial as u64);
            let cfg = RunConfig { seed, ..config.clone() };
            let mut o = run_on_scene(&cfg, scene.clone())?;
            o.timings.scene_s = scene_s;
            let strategy = cfg.strategy.name().to_string();
            out.trials.push(TrialRow {
                scenario: scenario.clone(),
                strategy: strategy.clone(),
                trial,
                seed,
                coverage: o.report.final_coverage,
                coverage_fraction: o.report.final_coverage_fraction,
            });
            out.timings.push(TimingRow {
                scenario: scenario.clone(),
                strategy: strategy.clone(),
                trial,
                preprocessing_s: o.timings.preprocessing_s(),
                solve_s: o.timings.solve_s(),
            });
            let gk = (scenario.clone(), strategy);
            let traj = o.report.coverage_trajectory();
            match groups.iter_mut().find(|(k, _, _)| *k == gk) {
                Some((_, t, f)) => {
                    t.push(traj);
                    f.push(o.report.free_voxels);
                }
                None => groups.push((gk, vec![traj], vec![o.report.free_voxels])),
            }
            out.reports.push(o.report);
        }
    }

    let rs_mean: BTreeMap<String, f64> = groups
        .iter()
        .filter(|((_, s), _, _)| s == "RS")
        .map(|((sc, _), t, _)| (sc.clone(), mean(t.iter().map(|x| *x.last().unwrap() as f64))))
        .collect();
    for ((scenario, strategy), trajs, free) in &groups {
        let finals: Vec<usize> = trajs.iter().map(|t| *t.last().unwrap()).collect();
        let mean_cov = mean(finals.iter().map(|&c| c as f64));
        let points = mean_trajectory(scenario, strategy, trajs);
        let baseline = rs_mean.get(scenario).copied().filter(|_| strategy != "RS");
        out.aggregates.push(AggregateRow {
            scenario: scenario.clone(),
            strategy: strategy.clone(),
            runs: trajs.len(),
            min_coverage: *finals.iter().min().unwrap(),
            max_coverage: *finals.iter().max().unwrap(),
            mean_coverage: mean_cov,
            mean_coverage_fraction: mean(finals.iter().zip(free).map(|(&c, &f)| c as f64 / f as f64)),
            improvement_pct: baseline.filter(|&b| b > 0.0).map(|b| (mean_cov - b) / b * 100.0),
            first_exceeds_rs_at: baseline.and_then(|b| first_exceeding(&points, b)),
        });
        out.trajectories.extend(points);
    }
    Ok(out)
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Per-iteration mean/min/max across trials of equal length.
pub fn mean_trajectory(scenario: &str, strategy: &str, trajs: &[Vec<usize>]) -> Vec<TrajectoryPoint> {
    let len = trajs.iter().map(|t| t.len()).min().unwrap_or(0);
    (0..len)
        .map(|k| {
            let col = trajs.iter().map(|t| t[k]);
            TrajectoryPoint {
                scenario: scenario.to_string(),
                strategy: strategy.to_string(),
                iteration: k,
                budget_fraction: (k + 1) as f64 / len as f64,
                mean: mean(col.clone().map(|c| c as f64)),
                min: col.clone().min().unwrap(),
                max: col.max().unwrap(),
            }
        })
        .collect()
}

/// Budget fraction of the first point whose mean is strictly above `level`.
pub fn first_exceeding(points: &[TrajectoryPoint], level: f64) -> Option<f64> {
    points.iter().find(|p| p.mean > level).map(|p| p.budget_fraction)
}

#[derive(Serialize)]
struct BenchmarkCsvRow<'a> {
    kind: &'a str,
    scenario: &'a str,
    strategy: &'a str,
    trial: String,
    seed: String,
    runs: usize,
    min_coverage: usize,
    max_coverage: usize,
    mean_coverage: f64,
    mean_coverage_fraction: f64,
    improvement_pct: String,
    first_exceeds_rs_at: String,
}

fn dash(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

impl BenchmarkResult {
    /// One `run` row per trial followed by one `aggregate` row per
    /// (scenario, strategy).
    pub fn write_benchmark_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv_writer(path)?;
        for t in &self.trials {
            w.serialize(BenchmarkCsvRow {
                kind: "run",
                scenario: &t.scenario,
                strategy: &t.strategy,
                trial: t.trial.to_string(),
                seed: t.seed.to_string(),
                runs: 1,
                min_coverage: t.coverage,
                max_coverage: t.coverage,
                mean_coverage: t.coverage as f64,
                mean_coverage_fraction: t.coverage_fraction,
                improvement_pct: String::new(),
                first_exceeds_rs_at: String::new(),
            })
            .map_err(csv_err)?;
        }
        for a in &self.aggregates {
            w.serialize(BenchmarkCsvRow {
                kind: "aggregate",
                scenario: &a.scenario,
                strategy: &a.strategy,
                trial: String::new(),
                seed: String::new(),
                runs: a.runs,
                min_coverage: a.min_coverage,
                max_coverage: a.max_coverage,
                mean_coverage: a.mean_coverage,
                mean_coverage_fraction: a.mean_coverage_fraction,
                improvement_pct: dash(a.improvement_pct),
                first_exceeds_rs_at: dash(a.first_exceeds_rs_at),
            })
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_trajectory_csv(&self, path: &Path) -> Result<()> {
        write_rows(path, &self.trajectories)
    }

    pub fn write_timings_csv(&self, path: &Path) -> Result<()> {
        write_rows(path, &self.timings)
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(csv_err)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TrajectoryCsvRow {
    iteration: usize,
    cumulative_sampled: usize,
    pool_size: usize,
    coverage: usize,
    coverage_fraction: f64,
    status: Optimality,
}

/// Per-iteration trajectory of a single run.
pub fn write_run_trajectory_csv(report: &RunReport, path: &Path) -> Result<()> {
    let rows: Vec<TrajectoryCsvRow> = report
        .iterations
        .iter()
        .map(|r| TrajectoryCsvRow {
            iteration: r.iteration,
            cumulative_sampled: r.cumulative_sampled,
            pool_size: r.pool_size,
            coverage: r.coverage,
            coverage_fraction: r.coverage_fraction,
            status: r.status,
        })
        .collect();
    write_rows(path, &rows)
}

/// ASCII PLY point cloud: one point per free voxel (`state` 1 covered,
/// 0 uncovered) and two per selected camera (center and center plus
/// direction, `state` 2).
pub fn write_coverage_ply(path: &Path, grid: &VoxelGrid, report: &RunReport, covered: &[u32]) -> Result<()> {
    let mut is_cov = vec![false; grid.n_free()];
    for &v in covered {
        is_cov[v as usize] = true;
    }
    let n = grid.n_free() + 2 * report.cameras.len();
    let file = std::fs::File::create(path).map_err(|source| SceneError::Io { path: path.to_path_buf(), source })?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "ply\nformat ascii 1.0\nelement vertex {n}")?;
    writeln!(w, "property float x\nproperty float y\nproperty float z\nproperty int state\nend_header")?;
    for id in grid.free_ids() {
        let c = grid.free_center(id);
        writeln!(w, "{} {} {} {}", c.x, c.y, c.z, is_cov[id as usize] as u8)?;
    }
    for cam in &report.cameras {
        let tip = cam.center + cam.direction * grid.voxel_size();
        writeln!(w, "{} {} {} 2", cam.center.x, cam.center.y, cam.center.z)?;
        writeln!(w, "{} {} {} 2", tip.x, tip.y, tip.z)?;
    }
    w.flush()?;
    Ok(())
}
