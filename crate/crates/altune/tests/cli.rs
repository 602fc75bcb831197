//! End-to-end runs of the `altune` binary on a tiny configuration.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use altune::formats::{read_dataset, read_weights};

const TINY: &str = r#"
n_samples = 30
pca_train_samples = 30
pca_components = 3

[dataset.grid]
input_size = 8
output_size = 8

[network]
input_size = 8
conv_filters = [4, 4]
encoder_dense = [16]
decoder_dense = [16]
reshape_size = 2
reshape_channels = 2
tconv_filters = [4]
output_scale = 0.015625
input_scale = 64.0

[tuning]
steps = 60
snapshot_every = 10
"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_altune"));
    c.env_remove(altune::OUT_ENV);
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Dataset and trained weights shared by the tests that only read them.
struct Fixture {
    dir: PathBuf,
    config: PathBuf,
    data: PathBuf,
    weights: PathBuf,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap().keep();
        let config = dir.join("tiny.toml");
        fs::write(&config, TINY).unwrap();
        let data = dir.join("data.altd");
        let o = run(&["--config", s(&config), "gen-data", "--out", s(&data)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let o = run(&["--config", s(&config), "train", "--data", s(&data), "--out", s(&dir.join("train"))]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        Fixture { weights: dir.join("train").join("weights.altw"), dir, config, data }
    })
}

fn tune(f: &Fixture, scenario: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "--config",
        s(&f.config),
        "tune",
        "--weights",
        s(&f.weights),
        "--data",
        s(&f.data),
        "--scenario",
        scenario,
        "--out",
        s(out),
    ];
    args.extend_from_slice(extra);
    run(&args)
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn gen_data_is_byte_identical_and_round_trips() {
    let f = fixture();
    let again = f.dir.join("again.altd");
    let o = run(&["--config", s(&f.config), "gen-data", "--out", s(&again)]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("mass conservation"));
    assert_eq!(fs::read(&f.data).unwrap(), fs::read(&again).unwrap());
    let (cfg, recs) = read_dataset(&f.data).unwrap();
    assert_eq!(recs.len(), 30);
    assert_eq!(cfg.grid.output_size, 8);
}

#[test]
fn flag_beats_file_beats_default() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, TINY.replace("n_samples = 30", "n_samples = 12")).unwrap();
    let from_file = dir.path().join("file.altd");
    assert_eq!(code(&run(&["--config", s(&cfg), "gen-data", "--out", s(&from_file)])), 0);
    assert_eq!(read_dataset(&from_file).unwrap().1.len(), 12);
    let from_flag = dir.path().join("flag.altd");
    assert_eq!(code(&run(&["--config", s(&cfg), "gen-data", "--n", "7", "--out", s(&from_flag)])), 0);
    assert_eq!(read_dataset(&from_flag).unwrap().1.len(), 7);
    let cfg2 = altune::ExperimentConfig::load(&dir.path().join("c.toml")).unwrap();
    assert_eq!(cfg2.tuning.es.k, altune::ExperimentConfig::default().tuning.es.k, "unset fields keep defaults");
}

#[test]
fn output_root_comes_from_env_unless_set() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, TINY.replace("n_samples = 30", "n_samples = 3")).unwrap();
    let env_root = dir.path().join("env-root");
    let o = bin().env(altune::OUT_ENV, &env_root).args(["--config", s(&cfg), "gen-data"]).output().unwrap();
    assert_eq!(code(&o), 0);
    assert!(env_root.join("dataset.altd").exists());

    let file_root = dir.path().join("file-root");
    let with_dir = format!("output_dir = {:?}\n{}", s(&file_root), TINY.replace("n_samples = 30", "n_samples = 3"));
    fs::write(&cfg, with_dir).unwrap();
    let o = bin().env(altune::OUT_ENV, &env_root).args(["--config", s(&cfg), "gen-data"]).output().unwrap();
    assert_eq!(code(&o), 0);
    assert!(file_root.join("dataset.altd").exists());

    let flag_root = dir.path().join("flag-root");
    let o = bin().env(altune::OUT_ENV, &env_root).args(["--config", s(&cfg), "--out-root", s(&flag_root), "gen-data"]).output().unwrap();
    assert_eq!(code(&o), 0);
    assert!(flag_root.join("dataset.altd").exists());
}

#[test]
fn train_writes_seven_epoch_rows_and_loadable_weights() {
    let f = fixture();
    let csv = fs::read_to_string(f.dir.join("train").join("loss.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "epoch,lr,loss");
    assert_eq!(lines.len(), 1 + 7);
    let w = read_weights(&f.weights).unwrap();
    assert_eq!(w.spec().input_size, 8);
}

#[test]
fn divergence_exits_with_runtime_code_and_keeps_last_good_weights() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, format!("{TINY}\n[training]\nphases = [[1, 1e-3], [1, 1e9]]\n")).unwrap();
    let out = dir.path().join("train");
    let o = run(&["--config", s(&cfg), "train", "--data", s(&f.data), "--out", s(&out)]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(read_weights(&out.join("weights.last-good.altw")).is_ok());
    assert!(!out.join("weights.altw").exists());
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["tune", "--scenario", "sideways"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "n_sample = 3\n").unwrap();
    let o = run(&["--config", s(&cfg), "gen-data"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("n_sample"));
    let missing = dir.path().join("nope.altd");
    assert_eq!(code(&run(&["train", "--data", s(&missing), "--out", s(dir.path())])), 1);
}

#[test]
fn tune_writes_a_complete_reproducible_run() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("near");
    let o = tune(f, "near", &run_dir, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let sm = summary(&run_dir);
    assert_eq!(sm["format_version"], "1.0");
    assert_eq!(sm["scenario"], "near");
    assert_eq!(sm["metrics"]["steps"], 60);
    assert_eq!(sm["metrics"]["weights_unchanged"], true);
    assert_eq!(sm["metrics"]["tuned_hidden"].as_array().unwrap().len(), 2);
    assert_eq!(sm["metrics"]["baseline_hidden"].as_array().unwrap().len(), 2);
    let steps = fs::read_to_string(run_dir.join("steps.csv")).unwrap();
    assert_eq!(steps.lines().count(), 61);
    assert!(steps.lines().next().unwrap().contains("mse_x_xp"));
    for stem in ["before_z_E", "after_z_E", "truth_z_E", "after_x_xp", "truth_y_yp"] {
        assert!(run_dir.join("images").join(format!("{stem}.pgm")).exists(), "{stem}.pgm");
        assert!(run_dir.join("images").join(format!("{stem}.json")).exists(), "{stem}.json");
    }
    let pgm = fs::read(run_dir.join("images").join("after_z_E.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n8 8\n255\n"));
    assert_eq!(pgm.len(), b"P5\n8 8\n255\n".len() + 64);

    // the echoed config alone reproduces the run
    let rerun = dir.path().join("rerun");
    let echo = run_dir.join("config.toml");
    let o = run(&["--config", s(&echo), "tune", "--weights", s(&f.weights), "--data", s(&f.data), "--out", s(&rerun)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(run_dir.join("steps.csv")).unwrap(), fs::read(rerun.join("steps.csv")).unwrap());
    assert_eq!(summary(&run_dir)["metrics"], summary(&rerun)["metrics"]);
}

#[test]
fn unshifted_run_is_flagged_within_dither_neighbourhood() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("none");
    let o = tune(f, "none", &run_dir, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let sm = summary(&run_dir);
    let flags: Vec<&str> = sm["flags"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(flags.contains(&"baseline within dither neighborhood"), "{sm:#}");
}

#[test]
fn report_tables_runs_and_orders_degradation() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let near = dir.path().join("near");
    let far = dir.path().join("far");
    assert_eq!(code(&tune(f, "near", &near, &[])), 0);
    assert_eq!(code(&tune(f, "far", &far, &[])), 0);

    let one = run(&["report", s(&near)]);
    assert_eq!(code(&one), 0);
    let text = stdout(&one);
    assert_eq!(text.lines().count(), 2, "{text}");
    assert!(text.lines().next().unwrap().contains("degradation"));

    let both = run(&["report", s(&near), s(&far)]);
    assert_eq!(code(&both), 0);
    let text = stdout(&both);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert!(r.ends_with("far>=near") || r.ends_with("far<near"), "{r}");
    }

    let missing = dir.path().join("missing");
    let o = run(&["report", s(&near), s(&missing)]);
    assert_ne!(code(&o), 0);
    assert!(o.stdout.is_empty(), "no partial table");
}

#[test]
fn report_rejects_unknown_major_version() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("near");
    assert_eq!(code(&tune(f, "near", &run_dir, &["--steps", "20"])), 0);
    let text = fs::read_to_string(run_dir.join("summary.json")).unwrap();
    fs::write(run_dir.join("summary.json"), text.replace("\"format_version\": \"1.0\"", "\"format_version\": \"2.0\"")).unwrap();
    let o = run(&["report", s(&run_dir)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("unsupported format version"));
}
