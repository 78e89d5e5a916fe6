use liouville::cli::{exit_code, run};
use liouville::Error;

fn argv(out: &std::path::Path, rest: &[&str]) -> Vec<String> {
    let mut v = vec!["liouville".to_string()];
    v.extend(rest.iter().map(|s| s.to_string()));
    v.push("--out".into());
    v.push(out.display().to_string());
    v
}

#[test]
fn thresholds_command() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(argv(dir.path(), &["thresholds", "--json"])), 0);
    assert_eq!(run(argv(dir.path(), &["thresholds"])), 0);
}

#[test]
fn strict_mode_refuses_gamma_half() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(argv(dir.path(), &["simulate", "--gamma", "0.5", "--mode", "strict", "--grid", "16"])), 2);
    assert_eq!(std::fs::read_dir(dir.path()).map(|d| d.count()).unwrap_or(0), 0);
}

#[test]
fn simulate_writes_checkpoint_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let code = run(argv(dir.path(), &["simulate", "--gamma", "0.3", "--grid", "16", "--horizon", "0.02", "--seed", "4"]));
    assert_eq!(code, 0);
    for f in ["simulate.bin", "simulate.index.ndjson", "simulate.ndjson"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let rec = liouville::io::read_ndjson(&dir.path().join("simulate.ndjson")).unwrap();
    assert_eq!(rec[0]["provenance"]["master_seed"], 4);
    assert_eq!(rec[0]["regime"], "dpd-convergent");
}

#[test]
fn extended_mode_is_labelled() {
    let dir = tempfile::tempdir().unwrap();
    let code = run(argv(dir.path(), &["simulate", "--gamma", "0.5", "--mode", "extended", "--solver", "direct", "--grid", "16", "--horizon", "0.02"]));
    assert_eq!(code, 0);
    let rec = liouville::io::read_ndjson(&dir.path().join("simulate.ndjson")).unwrap();
    assert!(rec[0]["label"].as_str().unwrap().contains("no epsilon-convergence claim"));
}

#[test]
fn spectrum_is_byte_identical_across_runs_and_threads() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["spectrum", "--gamma", "0.5", "--q", "2", "--replicas", "6", "--seed", "7", "--grid", "32"];
    assert_eq!(run(argv(a.path(), &args)), 0);
    let mut threaded = vec!["--threads", "1"];
    threaded.extend_from_slice(&args);
    assert_eq!(run(argv(b.path(), &threaded)), 0);
    let x = std::fs::read(a.path().join("spectrum.ndjson")).unwrap();
    let y = std::fs::read(b.path().join("spectrum.ndjson")).unwrap();
    assert_eq!(x, y);
}

#[test]
fn config_file_drives_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(
        &cfg,
        "[grid]\nn_space = 16\nn_time = 8\n[model]\ngamma = 0.2\n[noise]\nseed = 9\nepsilon = 0.125\n[run]\nhorizon = 0.02\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    assert_eq!(run(argv(&out, &["simulate", "--config", cfg.to_str().unwrap()])), 0);
    let rec = liouville::io::read_ndjson(&out.join("simulate.ndjson")).unwrap();
    assert_eq!(rec[0]["gamma"], 0.2);
    assert_eq!(rec[0]["provenance"]["master_seed"], 9);
    std::fs::write(&cfg, "[grid]\nn_space = 16\nn_time = 8\nbogus = 1\n[model]\ngamma = 0.2\n[noise]\nseed = 9\nepsilon = 0.125\n").unwrap();
    assert_eq!(run(argv(&out, &["simulate", "--config", cfg.to_str().unwrap()])), 2);
}

#[test]
fn other_commands_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(argv(dir.path(), &["sphere-check", "--n-t", "3", "--n-r", "4"])), 0);
    let csv = std::fs::read_to_string(dir.path().join("sphere.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap() == "t,r,series,nagase,rel_err");
    assert_eq!(run(argv(dir.path(), &["covariance", "--grid", "64", "--eps", "0.25,0.125"])), 0);
    assert_eq!(run(argv(dir.path(), &["oracle", "--samples", "2000"])), 0);
    assert_eq!(run(argv(dir.path(), &["oracle", "--gamma", "2.0"])), 2);
    assert_eq!(run(argv(dir.path(), &["no-such-command"])), 2);
    assert_eq!(exit_code(&Error::Numerical("blow-up".into())), 3);
    assert_eq!(exit_code(&Error::WindowTooLarge { ratio: 1.2, suggested: 0.01 }), 3);
    assert_eq!(exit_code(&Error::OutOfRegime("x".into())), 2);
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    // only this test touches the variable
    std::env::set_var(liouville::cli::OUT_DIR_ENV, dir.path());
    assert_eq!(run(["liouville", "covariance", "--grid", "64", "--eps", "0.25,0.125"]), 0);
    std::env::remove_var(liouville::cli::OUT_DIR_ENV);
    assert!(dir.path().join("covariance.csv").exists());
}
