//! Command-line entry point.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 1 runtime failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::theory_report;
use crate::engine::{benchmark, run, write_coverage_ply, write_run_trajectory_csv, RunConfig, Scene};
use crate::error::{Error, Result, SamplingError, SceneError, VisibilityError};
use crate::sampling::{sample_random_configurations, PositionSet};
use crate::scene::{generate_room, RoomParams, WallOrient};
use crate::solver::SolverKind;
use crate::visibility::{brute_force_view, compute_views, jaccard, oracle_accepts};

#[derive(Parser, Debug)]
#[command(name = "camplace", version, about = "Camera placement over voxelized indoor scenes")]
pub struct Cli {
    /// Caps the visibility thread pool (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a generated room as OBJ and print its free-voxel count.
    GenerateRoom(GenerateRoomArgs),
    /// Run the placement loop for one config.
    Solve(SolveArgs),
    /// Run several configs over several seeds and tabulate coverage.
    Benchmark(BenchmarkArgs),
    /// Compare the flood-fill visibility against the brute-force oracle.
    VisibilityCheck(VisibilityCheckArgs),
    /// Print the sampling theory quantities.
    Theory(TheoryArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Preset {
    Medium,
    Large,
}

#[derive(Args, Debug)]
pub struct GenerateRoomArgs {
    /// Preset room; explicit dimension flags override it.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub length: Option<u32>,
    #[arg(long)]
    pub height: Option<u32>,
    #[arg(long)]
    pub breadth: Option<u32>,
    #[arg(long)]
    pub num_walls: Option<u32>,
    #[arg(long)]
    pub y_ratio: Option<f64>,
    #[arg(long)]
    pub z_ratio: Option<f64>,
    #[arg(long)]
    pub wall_width: Option<u32>,
    #[arg(long)]
    pub random_range: Option<f64>,
    #[arg(long, value_parser = parse_orient)]
    pub wall_orient: Option<WallOrient>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub voxel_size: f64,
    /// OBJ output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional voxel grid dump (JSON).
    #[arg(long)]
    pub grid: Option<PathBuf>,
}

fn parse_orient(s: &str) -> std::result::Result<WallOrient, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("expected `alternate` or `same-side`, got `{s}`"))
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    /// JSON config (see README).
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub solver: Option<SolverArg>,
    /// Overrides the config's output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SolverArg {
    Exact,
    Greedy,
}

impl From<SolverArg> for SolverKind {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Exact => SolverKind::Exact,
            SolverArg::Greedy => SolverKind::Greedy,
        }
    }
}

#[derive(Args, Debug)]
pub struct BenchmarkArgs {
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VisibilityCheckArgs {
    /// Solve-style config; its scene and intrinsics are used.
    pub config: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub samples: usize,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct TheoryArgs {
    /// Sample size.
    #[arg(long)]
    pub n: u64,
    /// Configuration space size.
    #[arg(long)]
    pub total: u64,
    #[arg(long)]
    pub beta: u64,
    /// Number of camera positions.
    #[arg(long, default_value_t = 1)]
    pub p_count: u64,
    /// Direction precision.
    #[arg(long, default_value_t = 2f64.powi(-23))]
    pub epsilon: f64,
}

/// Optional files written next to `report.json`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportToggles {
    #[serde(default = "yes")]
    pub trajectory_csv: bool,
    #[serde(default)]
    pub coverage_ply: bool,
    #[serde(default)]
    pub room_obj: bool,
    #[serde(default = "yes")]
    pub timings: bool,
}

fn yes() -> bool {
    true
}

impl Default for ExportToggles {
    fn default() -> Self {
        ExportToggles { trajectory_csv: true, coverage_ply: false, room_obj: false, timings: true }
    }
}

/// `solve` config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    pub run: RunConfig,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub export: ExportToggles,
}

/// `benchmark` config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub runs: Vec<RunConfig>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_trials() -> usize {
    5
}

/// Exit code for an error: 2 for anything the user can fix in the input.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Json(_) => 2,
        Error::Scene(
            SceneError::NotFound(_)
            | SceneError::Parse { .. }
            | SceneError::InvalidRoom(_)
            | SceneError::InvalidVoxelSize(_)
            | SceneError::InvalidSupervoxelSize
            | SceneError::GridFormat(_),
        ) => 2,
        Error::Visibility(VisibilityError::InvalidIntrinsics(_)) => 2,
        Error::Sampling(SamplingError::InvalidParams(_)) => 2,
        _ => 1,
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be >= 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| match cli.command {
        Command::GenerateRoom(a) => cmd_generate_room(&a),
        Command::Solve(a) => cmd_solve(&a),
        Command::Benchmark(a) => cmd_benchmark(&a),
        Command::VisibilityCheck(a) => cmd_visibility_check(&a),
        Command::Theory(a) => cmd_theory(&a),
    })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::Config(format!("config not found: {}", path.display())),
        _ => Error::Io(e),
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

pub fn cmd_generate_room(a: &GenerateRoomArgs) -> Result<()> {
    let base = match a.preset {
        Some(Preset::Medium) => RoomParams::medium(a.wall_orient.unwrap_or_default(), a.seed),
        Some(Preset::Large) => RoomParams::large(a.wall_orient.unwrap_or_default(), a.seed),
        None => match (a.length, a.height, a.breadth) {
            (Some(l), Some(h), Some(b)) => RoomParams { seed: a.seed, ..RoomParams::empty(l, h, b) },
            _ => return Err(Error::Config("give --preset or all of --length, --height, --breadth".into())),
        },
    };
    let params = RoomParams {
        length: a.length.unwrap_or(base.length),
        height: a.height.unwrap_or(base.height),
        breadth: a.breadth.unwrap_or(base.breadth),
        num_walls: a.num_walls.unwrap_or(base.num_walls),
        y_wall_edge_ratio: a.y_ratio.unwrap_or(base.y_wall_edge_ratio),
        z_wall_edge_ratio: a.z_ratio.unwrap_or(base.z_wall_edge_ratio),
        wall_width: a.wall_width.unwrap_or(base.wall_width),
        random_range: a.random_range.unwrap_or(base.random_range),
        wall_orient: a.wall_orient.unwrap_or(base.wall_orient),
        seed: a.seed,
    };
    params.validate()?;
    let mesh = generate_room(&params)?;
    mesh.write_obj(&a.out)?;
    let scene = Scene::build(&crate::engine::SceneSource::Room(params.clone()), a.voxel_size)?;
    if let Some(path) = &a.grid {
        write_json(path, &scene.grid.to_dump())?;
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        obj: &'a Path,
        triangles: usize,
        dims: [usize; 3],
        free_voxels: usize,
        params: &'a RoomParams,
    }
    print_json(&Summary {
        obj: &a.out,
        triangles: mesh.len(),
        dims: scene.grid.dims(),
        free_voxels: scene.grid.n_free(),
        params: &params,
    })
}

pub fn cmd_solve(a: &SolveArgs) -> Result<()> {
    let mut cfg: CliConfig = read_json(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.run.seed = seed;
    }
    if let Some(s) = a.solver {
        cfg.run.solver = s.into();
    }
    let out = a.out.clone().unwrap_or(cfg.output_dir.clone());
    cfg.run.validate()?;
    let outcome = run(&cfg.run)?;
    fs::create_dir_all(&out)?;
    write_json(&out.join("report.json"), &outcome.report)?;
    if cfg.export.trajectory_csv {
        write_run_trajectory_csv(&outcome.report, &out.join("trajectory.csv"))?;
    }
    if cfg.export.timings {
        write_json(&out.join("timings.json"), &outcome.timings)?;
    }
    if cfg.export.coverage_ply {
        write_coverage_ply(&out.join("coverage.ply"), &outcome.scene.grid, &outcome.report, &outcome.solution.covered)?;
    }
    if cfg.export.room_obj {
        outcome.scene.mesh.write_obj(&out.join("room.obj"))?;
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        output_dir: &'a Path,
        strategy: &'a str,
        free_voxels: usize,
        coverage: Vec<usize>,
        final_coverage_fraction: f64,
    }
    print_json(&Summary {
        output_dir: &out,
        strategy: &outcome.report.strategy,
        free_voxels: outcome.report.free_voxels,
        coverage: outcome.report.coverage_trajectory(),
        final_coverage_fraction: outcome.report.final_coverage_fraction,
    })
}

pub fn cmd_benchmark(a: &BenchmarkArgs) -> Result<()> {
    let mut cfg: BenchmarkConfig = read_json(&a.config)?;
    if cfg.runs.is_empty() {
        return Err(Error::Config("benchmark config has no runs".into()));
    }
    if let Some(seed) = a.seed {
        for r in &mut cfg.runs {
            r.seed = seed;
        }
    }
    let out = a.out.clone().unwrap_or(cfg.output_dir.clone());
    let result = benchmark(&cfg.runs, cfg.trials)?;
    fs::create_dir_all(&out)?;
    result.write_benchmark_csv(&out.join("benchmark.csv"))?;
    result.write_trajectory_csv(&out.join("trajectory.csv"))?;
    result.write_timings_csv(&out.join("timings.csv"))?;
    print_json(&result.aggregates)
}

pub fn cmd_visibility_check(a: &VisibilityCheckArgs) -> Result<()> {
    let cfg: CliConfig = read_json(&a.config)?;
    let intrinsics = cfg.run.intrinsics.to_intrinsics();
    intrinsics.validate()?;
    let scene = Scene::build(&cfg.run.scene, cfg.run.voxel_size)?;
    let positions = PositionSet::all(&scene.grid);
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed.unwrap_or(cfg.run.seed));
    let batch = sample_random_configurations(a.samples, &positions, 1, &mut rng)?;
    let configs: Vec<_> = batch.configs().copied().collect();
    let fast = compute_views(&scene.mesh, &scene.grid, &configs, &intrinsics)?;

    #[derive(Serialize, Default)]
    struct Report {
        pairs: usize,
        fast_total: usize,
        oracle_total: usize,
        unsound_voxels: usize,
        missed_voxels: usize,
        pooled_jaccard: f64,
        min_jaccard: f64,
    }
    let mut r = Report { min_jaccard: 1.0, ..Default::default() };
    for (c, f) in configs.iter().zip(&fast) {
        let oracle = brute_force_view(&scene.mesh, &scene.grid, c, &intrinsics)?;
        let eye = scene.grid.free_center(c.position);
        r.pairs += 1;
        r.fast_total += f.len();
        r.oracle_total += oracle.len();
        r.unsound_voxels += f
            .iter()
            .filter(|&&v| !oracle_accepts(&scene.mesh, eye, scene.grid.free_center(v), c.direction, &intrinsics))
            .count();
        r.missed_voxels += crate::visibility::sorted_difference(&oracle, f).len();
        r.min_jaccard = r.min_jaccard.min(jaccard(f, &oracle));
    }
    let union = r.fast_total + r.missed_voxels;
    r.pooled_jaccard = if union == 0 { 1.0 } else { (r.fast_total - r.unsound_voxels) as f64 / union as f64 };
    print_json(&r)
}

pub fn cmd_theory(a: &TheoryArgs) -> Result<()> {
    if a.beta > a.n || a.n > a.total {
        return Err(Error::Config("need beta <= n <= total".into()));
    }
    if !(a.epsilon > 0.0) {
        return Err(Error::Config("epsilon must be > 0".into()));
    }
    print_json(&theory_report(a.n, a.total, a.beta, a.p_count, a.epsilon))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_classify_errors() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&SceneError::NotFound("a.obj".into()).into()), 2);
        assert_eq!(exit_code(&SceneError::EmptyFreeSpace.into()), 1);
        assert_eq!(exit_code(&Error::Internal("x".into())), 1);
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(main_with(["camplace", "no-such-command"]), 2);
        assert_eq!(main_with(["camplace", "theory", "--n", "3", "--total", "2", "--beta", "1"]), 2);
    }
}
