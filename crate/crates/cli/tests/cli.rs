use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use flowlearn_core::flowmap::simulate_surrogate;
use flowlearn_core::sde::{build_observation_set, simulate};
use flowlearn_core::ExactFlowMap;
use sde_flowlearn::{evaluate_map, ExperimentConfig, Pipeline, Scale, STAGES};

const BIN: &str = env!("CARGO_BIN_EXE_sde-flowlearn");

fn small_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::from_preset("ou1d", Scale::Desk).unwrap();
    c.simulation.trajectories = 200;
    c.labels.count = 200;
    c.labels.steps = 100;
    c.train.epochs = 50;
    c.train.widths = vec![4, 8];
    c.predict.paths = 200;
    c.evaluate.n_z = 1000;
    c
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> std::path::PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, cfg.to_json()).unwrap();
    path
}

fn cli(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env_remove("SDE_FLOWLEARN_OUT");
    if let Some(dir) = env_out {
        cmd.env("SDE_FLOWLEARN_OUT", dir);
    }
    cmd.output().unwrap()
}

fn artifacts(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| {
            p.extension().is_some_and(|x| x == "bin" || x == "csv" || x == "json") && !p.ends_with("config.json")
        })
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn preset_commands() {
    let out = cli(&["preset", "list"], None);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in flowlearn_core::sde::BENCHMARKS {
        assert!(text.contains(name), "{name} missing from preset list");
    }
    let out = cli(&["preset", "show", "double_well", "--scale", "full"], None);
    assert!(out.status.success());
    let cfg = ExperimentConfig::from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(cfg, ExperimentConfig::from_preset("double_well", Scale::Full).unwrap());
    assert_eq!(cli(&["preset", "show", "nope"], None).status.code(), Some(2));
}

#[test]
fn pipeline_is_a_pure_function_of_the_config() {
    let cfg = small_config();
    let runs: Vec<_> = [1usize, 3]
        .iter()
        .map(|&workers| {
            let dir = tempfile::tempdir().unwrap();
            Pipeline::new(cfg.clone(), dir.path(), Some(workers)).unwrap().run_all().unwrap();
            (artifacts(dir.path()), dir)
        })
        .collect();
    assert_eq!(runs[0].0, runs[1].0);
    assert_eq!(runs[0].0.len(), 13);
}

#[test]
fn regenerated_stage_gives_identical_downstream_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(small_config(), dir.path(), Some(1)).unwrap();
    p.run_all().unwrap();
    let before = artifacts(dir.path());
    fs::remove_file(dir.path().join("labels.bin")).unwrap();
    fs::remove_file(dir.path().join("model.bin")).unwrap();
    for stage in &STAGES[1..] {
        p.run_stage(stage).unwrap();
    }
    assert_eq!(artifacts(dir.path()), before);
}

#[test]
fn stale_and_missing_inputs_exit_with_config_status() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    let config = write_config(dir.path(), &cfg);
    let out = dir.path().join("out");
    let args = |stage: &'static str| vec![stage, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];

    let missing = cli(&args("labels"), None);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("simulate has not been run"));

    for stage in ["simulate", "labels", "train"] {
        let run = cli(&args(stage), None);
        assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    }
    cfg.train.epochs += 1;
    write_config(dir.path(), &cfg);
    let stale = cli(&args("predict"), None);
    assert_eq!(stale.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&stale.stderr).contains("stale"));

    assert!(cli(&args("train"), None).status.success());
    let mut bytes = fs::read(out.join("model.bin")).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    fs::write(out.join("model.bin"), bytes).unwrap();
    let tampered = cli(&args("predict"), None);
    assert_eq!(tampered.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&tampered.stderr).contains("changed"));
}

#[test]
fn config_and_numerical_failures_have_distinct_statuses() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"benchmark\": {\"name\": \"ou1d\"}}").unwrap();
    let out = cli(&["simulate", "--config", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));

    let mut cfg = ExperimentConfig::from_preset("gbm", Scale::Desk).unwrap();
    cfg.simulation.trajectories = 10;
    cfg.benchmark.overrides.insert("mu".into(), flowlearn_core::sde::Param::Scalar(1e306));
    let config = write_config(dir.path(), &cfg);
    let out = cli(&["simulate", "--config", config.to_str().unwrap(), "--out", dir.path().to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn output_directory_falls_back_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    let env_out = dir.path().join("from-env");
    let out = cli(&["simulate", "--config", config.to_str().unwrap()], Some(&env_out));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(env_out.join("observations.bin").exists());
    assert!(env_out.join("simulate.manifest.json").exists());
}

#[test]
fn report_records_every_stage_digest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let config = write_config(dir.path(), &cfg);
    let out = dir.path().join("out");
    let run = cli(&["run", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let metrics: serde_json::Value = serde_json::from_slice(&fs::read(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["schema"], "sde-flowlearn/metrics");
    assert_eq!(metrics["config_digest"], cfg.digest());
    let digests = cfg.stage_digests();
    for stage in STAGES {
        assert_eq!(metrics["stage_digests"][stage], digests.get(stage).unwrap());
        let manifest: serde_json::Value =
            serde_json::from_slice(&fs::read(out.join(format!("{stage}.manifest.json"))).unwrap()).unwrap();
        assert_eq!(manifest["config_digest"], cfg.digest());
    }
    let report = cli(&["report", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    let text = String::from_utf8(report.stdout).unwrap();
    assert!(text.contains("E_a") && text.contains(&digests.train));
}

#[test]
fn oracle_map_scores_zero_within_monte_carlo_error() {
    let mut cfg = ExperimentConfig::from_preset("ou1d", Scale::Desk).unwrap();
    cfg.predict.paths = 4_000;
    cfg.evaluate.n_z = 20_000;
    let spec = cfg.spec().unwrap();
    let oracle = ExactFlowMap::new(spec.clone(), cfg.simulation.dt);
    let p = &cfg.predict;
    let surrogate = simulate_surrogate(&oracle, &p.x0, p.steps, p.paths, p.seed, 0).unwrap();
    let s = &cfg.simulation;
    let obs = build_observation_set(&simulate(&spec, &s.init, 100, s.steps, s.dt, s.seed, 0).unwrap()).unwrap();
    let (report, _) = evaluate_map(&cfg, &oracle, &surrogate, &obs.x, 0).unwrap();
    let c = report.coefficients.unwrap();
    assert!(c.drift_error <= 3.0 * c.drift_error_se, "E_a {} se {}", c.drift_error, c.drift_error_se);
    assert!(c.diffusion_error <= 3.0 * c.diffusion_error_se, "E_b {} se {}", c.diffusion_error, c.diffusion_error_se);
    let e = report.endpoint;
    assert!(e.mean_error <= 4.0 * e.mean_se && e.std_error <= 4.0 * e.std_se, "{e:?}");
}
