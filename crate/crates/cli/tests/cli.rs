//! In-process CLI tests: argument handling, exit codes, file outputs, and
//! rerun determinism.

use aircomp_cli::run;

fn tmp_dir(tag: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("aircomp_cli_{tag}_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn plan_q_succeeds() {
    let code = run(["aircomp", "plan-q", "--l", "25", "--snr", "20"]);
    assert_eq!(code, 0);
}

#[test]
fn unknown_flag_is_usage_error() {
    assert_eq!(run(["aircomp", "plan-q", "--l", "25", "--snr", "20", "--bogus", "1"]), 2);
    assert_eq!(run(["aircomp", "definitely-not-a-subcommand"]), 2);
    assert_eq!(run(["aircomp", "--help"]), 0);
}

#[test]
fn missing_config_file_is_config_error() {
    assert_eq!(run(["aircomp", "sparsity", "--config", "/no/such/file.json"]), 2);
}

#[test]
fn invalid_config_contents_are_config_errors() {
    let dir = tmp_dir("badcfg");
    let path = dir.join("bad.json");
    std::fs::write(&path, r#"{ "k": 0 }"#).unwrap();
    assert_eq!(run(["aircomp", "sparsity", "--config", path.to_str().unwrap()]), 2);
    std::fs::write(&path, r#"{ "unknown_key": 1 }"#).unwrap();
    assert_eq!(run(["aircomp", "sparsity", "--config", path.to_str().unwrap()]), 2);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn sparsity_outputs_are_byte_identical_across_reruns() {
    let dir_a = tmp_dir("rerun_a");
    let dir_b = tmp_dir("rerun_b");
    for dir in [&dir_a, &dir_b] {
        let code = run([
            "aircomp",
            "sparsity",
            "--trials",
            "50",
            "--seed",
            "31337",
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
    }
    let a = std::fs::read(dir_a.join("sparsity.csv")).unwrap();
    let b = std::fs::read(dir_b.join("sparsity.csv")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
    std::fs::remove_dir_all(&dir_a).ok();
    std::fs::remove_dir_all(&dir_b).ok();
}

#[test]
fn config_file_drives_the_run() {
    use aircomp_core::harness::ScenarioConfig;
    let dir = tmp_dir("cfgrun");
    let cfg = ScenarioConfig {
        trials: 25,
        q_grid: Some(vec![2, 8]),
        k_grid: Some(vec![4]),
        master_seed: 5,
        ..ScenarioConfig::default()
    };
    let cfg_path = dir.join("scenario.json");
    std::fs::write(&cfg_path, cfg.to_json()).unwrap();
    let code = run([
        "aircomp",
        "sparsity",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(dir.join("sparsity.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    // header + 1 k x 2 dists x 2 q
    assert_eq!(lines.len(), 5, "{text}");
    assert!(lines[0].starts_with("k,dist,q,"));
    // Summary JSON exists and carries the config hash.
    let summary = std::fs::read_to_string(dir.join("sparsity_summary.json")).unwrap();
    assert!(summary.contains("config_hash"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn json_format_writes_json_tables() {
    let dir = tmp_dir("jsonfmt");
    let code = run([
        "aircomp",
        "sparsity",
        "--trials",
        "10",
        "--format",
        "json",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(dir.join("sparsity.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(parsed.as_array().map(|a| !a.is_empty()).unwrap_or(false));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn divergent_training_is_numerical_failure_exit() {
    use aircomp_core::harness::{ListaTrainKnobs, ScenarioConfig};
    let dir = tmp_dir("divergence");
    let cfg = ScenarioConfig {
        detector: aircomp_core::harness::DetectorKind::Lista,
        l: 8,
        q: 8,
        m: 16,
        k: 4,
        lista_layers: 4,
        trials: 2,
        master_seed: 5,
        lista_train: ListaTrainKnobs {
            batch_size: 8,
            epochs: 1,
            batches_per_epoch: 200,
            learning_rate: 1e2,
            seed: Some(5),
            ..Default::default()
        },
        ..ScenarioConfig::default()
    };
    let cfg_path = dir.join("divergent.json");
    std::fs::write(&cfg_path, cfg.to_json()).unwrap();
    let code = run([
        "aircomp",
        "train-lista",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code, 3);
    std::fs::remove_dir_all(&dir).ok();
}
