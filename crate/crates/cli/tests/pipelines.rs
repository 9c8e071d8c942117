use std::path::Path;
use std::process::Command;

use salp_cli::certify::{generate_instance, replay_instance, run_bounds_pipeline, InstanceOutcome};
use salp_cli::config::{BoundsConfig, CurveConfig, EnvSpec, ExperimentConfig};
use salp_cli::curve::run_sample_complexity_curve;
use salp_cli::experiment::run_experiment;
use salp_cli::output::{write_json, BOUNDS_SCHEMA, CURVE_SCHEMA, REPLAY_SCHEMA, SUMMARY_SCHEMA};

fn small_tetris(dir: &Path) -> ExperimentConfig {
    ExperimentConfig {
        sample_size: 200,
        seeds: vec![3, 4],
        theta_schedule: vec![0.0, 0.02, 0.2],
        eval_games: 12,
        max_eval_steps: 5000,
        output_dir: dir.to_path_buf(),
        ..ExperimentConfig::desk_tetris()
    }
}

fn validate(schema: &str, value: &serde_json::Value) {
    let schema: serde_json::Value = serde_json::from_str(schema).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(value).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:?}");
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn tetris_pipeline_outputs_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        run_experiment(&small_tetris(dir)).unwrap().write(dir).unwrap();
    }
    for file in ["fig2.csv", "table.csv", "summary.json", "games/seed3_theta01.csv"] {
        let x = std::fs::read(a.path().join(file)).unwrap();
        let y = std::fs::read(b.path().join(file)).unwrap();
        assert_eq!(x, y, "{file}");
    }
    validate(SUMMARY_SCHEMA, &read_json(&a.path().join("summary.json")));
}

#[test]
fn tetris_cells_share_piece_sequences() {
    let dir = tempfile::tempdir().unwrap();
    let results = run_experiment(&small_tetris(dir.path())).unwrap();
    assert_eq!(results.games.len(), 6);
    let first = &results.games[0].1;
    for (_, records) in &results.games[1..] {
        assert_eq!(records.len(), 12);
        assert!(records.iter().zip(first).all(|(x, y)| x.piece_digest == y.piece_digest));
    }
    assert_eq!(results.summary.failed_cells, 0);
}

#[test]
fn explicit_pipeline_scores_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    let (mdp, _, _) = generate_instance(&BoundsConfig { n_states: 12, ..BoundsConfig::default() }, 0).unwrap();
    std::fs::write(&model, mdp.to_json_string()).unwrap();
    let cfg = ExperimentConfig {
        env: EnvSpec::ExplicitMdp { model, basis: "random:4:1".parse().unwrap() },
        sample_size: 300,
        seeds: vec![1, 2],
        output_dir: dir.path().to_path_buf(),
        ..ExperimentConfig::desk_tetris()
    };
    let results = run_experiment(&cfg).unwrap();
    assert_eq!(results.rows.len(), 20);
    assert!(results.rows.iter().all(|r| r.mean_score.is_some() && r.stderr == Some(0.0)));
    results.write(dir.path()).unwrap();
    validate(SUMMARY_SCHEMA, &read_json(&dir.path().join("summary.json")));

}

#[test]
fn tetris_seed_failures_are_marked() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_tetris(dir.path());
    // All-zero weights stack every piece at the left wall; games end
    // before the burn-in, so no seed yields a sample.
    cfg.baseline.weights = Some(vec![0.0; 22]);
    cfg.baseline.burn_in = 400;
    let results = run_experiment(&cfg).unwrap();
    assert_eq!(results.summary.failed_cells, 6);
    assert!(results.summary.per_seed.iter().all(|s| s.error.is_some()));
    assert!(results.table.iter().all(|r| r.mean_score.is_none() && r.seeds_ok == 0));
}

#[test]
fn bounds_outputs_validate_and_replay() {
    let cfg = BoundsConfig { instances: 4, n_states: 10, n_actions: 3, k: 4, ..BoundsConfig::default() };
    let dir = tempfile::tempdir().unwrap();
    let out = run_bounds_pipeline(&cfg, Some(dir.path())).unwrap();
    assert_eq!(out.failures(), 0);
    assert!(out.replays.is_empty());
    let flat = serde_json::to_value(out.flat()).unwrap();
    validate(BOUNDS_SCHEMA, &flat);

    let o: &InstanceOutcome = &out.instances[1];
    let path = dir.path().join("replay.json");
    write_json(&path, &o.replay(&cfg.theta_grid).unwrap()).unwrap();
    validate(REPLAY_SCHEMA, &read_json(&path));
    assert_eq!(replay_instance(&path).unwrap(), o.reports);
}

#[test]
fn curve_summary_validates() {
    let cfg = CurveConfig { n_states: 30, k: 4, sizes: vec![50, 500], seeds: vec![1, 2, 3], ..CurveConfig::default() };
    let out = run_sample_complexity_curve(&cfg).unwrap();
    validate(CURVE_SCHEMA, &serde_json::to_value(&out.summary).unwrap());
    assert_eq!(out.rows.len(), 6);
}

fn salp() -> Command {
    Command::new(env!("CARGO_BIN_EXE_salp"))
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "sample_size = 0\nseeds = [1]\n[env]\nkind = \"tetris\"\n").unwrap();
    let status = salp().args(["tetris-experiment", "--config"]).arg(&bad).output().unwrap().status;
    assert_eq!(status.code(), Some(1));
    assert_eq!(salp().arg("no-such-command").output().unwrap().status.code(), Some(1));

    let cfg = dir.path().join("bounds.toml");
    std::fs::write(&cfg, "instances = 2\nn_states = 8\nn_actions = 2\nk = 3\n").unwrap();
    let out = salp().args(["bounds-report", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("theorem1"));
    validate(BOUNDS_SCHEMA, &read_json(&dir.path().join("bounds.json")));
}

#[test]
fn cli_replay_reproduces_reports() {
    let cfg = BoundsConfig { instances: 1, n_states: 8, n_actions: 2, k: 3, identity_instance: false, ..BoundsConfig::default() };
    let dir = tempfile::tempdir().unwrap();
    let out = run_bounds_pipeline(&cfg, None).unwrap();
    let path = dir.path().join("replay.json");
    write_json(&path, &out.instances[0].replay(&cfg.theta_grid).unwrap()).unwrap();
    let run = salp().args(["bounds-report", "--replay"]).arg(&path).output().unwrap();
    assert_eq!(run.status.code(), Some(0));
    let printed: serde_json::Value = serde_json::from_slice(&run.stdout).unwrap();
    assert_eq!(printed, serde_json::to_value(&out.instances[0].reports).unwrap());
}
