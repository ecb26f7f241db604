use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn camplace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_camplace")).args(args).output().expect("binary runs")
}

fn stdout_json(o: &Output) -> serde_json::Value {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("json on stdout")
}

fn write_solve_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let out = dir.join("out");
    let cfg = format!(
        r#"{{
  "run": {{
    "scene": {{"room": {{"length": 20, "height": 8, "breadth": 8, "num_walls": 2, "wall_orient": "same-side"}}}},
    "strategy": {{"ee": {{}}}},
    "sampling_budget": 160,
    "iterations": 4,
    "beta": 2
    {extra}
  }},
  "output_dir": "{}",
  "export": {{"coverage_ply": true, "room_obj": true}}
}}"#,
        out.display()
    );
    let path = dir.join("solve.json");
    fs::write(&path, cfg).unwrap();
    path
}

#[test]
fn generate_room_reports_free_voxels_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.obj");
    let b = dir.path().join("b.obj");
    let grid = dir.path().join("grid.json");
    let args = ["generate-room", "--length", "10", "--height", "5", "--breadth", "5", "--out"];
    let mut first = args.to_vec();
    first.extend([a.to_str().unwrap(), "--grid", grid.to_str().unwrap()]);
    let v = stdout_json(&camplace(&first));
    assert_eq!(v["free_voxels"], 250);
    assert!(grid.exists());

    let medium = |p: &Path| {
        camplace(&["generate-room", "--preset", "medium", "--wall-orient", "same-side", "--seed", "4", "--out", p.to_str().unwrap()])
    };
    stdout_json(&medium(&a));
    stdout_json(&medium(&b));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn generate_room_rejects_bad_ratio_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.obj");
    let o = camplace(&[
        "generate-room", "--length", "10", "--height", "5", "--breadth", "5", "--num-walls", "1",
        "--y-ratio", "1.5", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn solve_writes_outputs_and_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_solve_config(dir.path(), "");
    let v = stdout_json(&camplace(&["solve", cfg.to_str().unwrap()]));
    let coverage: Vec<u64> = v["coverage"].as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).collect();
    assert_eq!(coverage.len(), 4);
    assert!(coverage.windows(2).all(|w| w[0] <= w[1]));
    let out = dir.path().join("out");
    for f in ["report.json", "trajectory.csv", "timings.json", "coverage.ply", "room.obj"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let first = fs::read(out.join("report.json")).unwrap();
    stdout_json(&camplace(&["--threads", "1", "solve", cfg.to_str().unwrap()]));
    assert_eq!(fs::read(out.join("report.json")).unwrap(), first);

    let ply = fs::read_to_string(out.join("coverage.ply")).unwrap();
    let report: serde_json::Value = serde_json::from_slice(&first).unwrap();
    let n_free = report["free_voxels"].as_u64().unwrap() as usize;
    let n_cams = report["cameras"].as_array().unwrap().len();
    let body: Vec<&str> = ply.split("end_header\n").nth(1).unwrap().lines().collect();
    assert_eq!(body.len(), n_free + 2 * n_cams);
    let covered = body.iter().filter(|l| l.ends_with(" 1")).count();
    assert_eq!(covered as u64, report["final_coverage"].as_u64().unwrap());
}

#[test]
fn solve_with_greedy_flag_uses_greedy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_solve_config(dir.path(), "");
    stdout_json(&camplace(&["solve", cfg.to_str().unwrap(), "--solver", "greedy"]));
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["solver"], "greedy");
    assert!(report["iterations"].as_array().unwrap().iter().all(|r| r["status"] == "heuristic"));
}

#[test]
fn missing_mesh_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("solve.json");
    fs::write(
        &path,
        r#"{"run": {"scene": {"obj": {"path": "/nonexistent/room.obj"}}, "strategy": "rs", "beta": 2}}"#,
    )
    .unwrap();
    let o = camplace(&["solve", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("scene not found"));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_solve_config(dir.path(), r#", "betta": 3"#);
    assert_eq!(camplace(&["solve", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn benchmark_table_has_run_and_aggregate_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench");
    let cfg = format!(
        r#"{{
  "runs": [
    {{"label": "room", "scene": {{"room": {{"length": 12, "height": 5, "breadth": 5}}}}, "strategy": "rs", "sampling_budget": 96, "iterations": 3, "beta": 2}},
    {{"label": "room", "scene": {{"room": {{"length": 12, "height": 5, "breadth": 5}}}}, "strategy": {{"ee": {{}}}}, "sampling_budget": 96, "iterations": 3, "beta": 2}}
  ],
  "trials": 5,
  "output_dir": "{}"
}}"#,
        out.display()
    );
    let path = dir.path().join("bench.json");
    fs::write(&path, cfg).unwrap();
    stdout_json(&camplace(&["benchmark", path.to_str().unwrap()]));
    let csv = fs::read_to_string(out.join("benchmark.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + 10 + 2);
    assert_eq!(lines.iter().filter(|l| l.starts_with("run,")).count(), 10);
    let rs_agg = lines.iter().find(|l| l.starts_with("aggregate,room,RS,")).unwrap();
    assert!(rs_agg.ends_with(",-,-"), "{rs_agg}");
    assert!(out.join("trajectory.csv").exists());

    stdout_json(&camplace(&["benchmark", path.to_str().unwrap()]));
    assert_eq!(fs::read_to_string(out.join("benchmark.csv")).unwrap(), csv);
}

#[test]
fn visibility_check_reports_agreement() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_solve_config(dir.path(), "");
    let v = stdout_json(&camplace(&["visibility-check", cfg.to_str().unwrap(), "--samples", "10"]));
    assert_eq!(v["pairs"], 10);
    assert_eq!(v["unsound_voxels"], 0);
    assert!(v["pooled_jaccard"].as_f64().unwrap() >= 0.99);
}

#[test]
fn theory_prints_closed_forms() {
    let v = stdout_json(&camplace(&["theory", "--n", "5", "--total", "10", "--beta", "2", "--epsilon", "1"]));
    assert!((v["prob_optimal_exact"].as_f64().unwrap() - 2.0 / 9.0).abs() < 1e-12);
    assert!((v["prob_optimal_lower_bound"].as_f64().unwrap() - 0.16).abs() < 1e-12);
    assert!((v["expected_samples"].as_f64().unwrap() - 22.0 / 3.0).abs() < 1e-12);
    assert!((v["config_space_bound"].as_f64().unwrap() - 4.0 * std::f64::consts::PI).abs() < 1e-12);
}
