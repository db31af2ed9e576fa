use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"{
  "base": {
    "model": {"depth": 1, "d_model": 8, "n_heads": 2, "d_ff": 16, "seq_len": 4, "input_dim": 4},
    "steps": 8, "batch_size": 8, "warmup_steps": 2,
    "dataset": {"generate": {"n_train": 32, "n_val": 16, "seq_len": 4, "input_dim": 4}}
  },
  "repeats": 1
}"#;

fn derfkit(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_derfkit"))
        .args(args)
        .current_dir(dir)
        .env_remove("DERFKIT_THREADS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn tiny_dir() -> tempfile::TempDir {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("tiny.json"), TINY).unwrap();
    d
}

fn read_json(p: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn funcs_eval_erf_at_one() {
    let d = tempfile::tempdir().unwrap();
    let o = derfkit(&["funcs", "eval", "erf", "1"], d.path());
    assert!(o.status.success());
    let out = stdout(&o);
    let nums: Vec<f64> = out
        .lines()
        .map(|l| l.rsplit(' ').next().unwrap().parse().unwrap())
        .collect();
    assert!((nums[0] - 0.842_700_792_9).abs() < 1e-10, "{out}");
    let slope = 2.0 / std::f64::consts::PI.sqrt() * (-1.0f64).exp();
    assert!((nums[1] - slope).abs() < 1e-12);
    assert!((nums[1] - 0.4151).abs() < 1e-4);
}

#[test]
fn funcs_eval_negative_argument() {
    let d = tempfile::tempdir().unwrap();
    let o = derfkit(&["funcs", "eval", "tanh", "-0.5"], d.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains(&(-0.5f64).tanh().to_string()));
}

#[test]
fn unknown_function_exits_2_with_suggestion() {
    let d = tempfile::tempdir().unwrap();
    let o = derfkit(&["funcs", "eval", "nosuch", "0"], d.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("did you mean:"), "{}", stderr(&o));
    let o = derfkit(&["funcs", "props", "erff"], d.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("did you mean: erf?"));
}

#[test]
fn funcs_list_covers_catalog() {
    let d = tempfile::tempdir().unwrap();
    let o = derfkit(&["funcs", "list"], d.path());
    assert!(o.status.success());
    let out = stdout(&o);
    assert_eq!(out.lines().count(), derfkit::funcs::catalog().len());
    assert!(out.lines().any(|l| l.starts_with("erf ") && l.contains("natural")));
}

#[test]
fn funcs_props_dampx_is_non_monotonic() {
    let d = tempfile::tempdir().unwrap();
    let o = derfkit(&["funcs", "props", "dampx"], d.path());
    assert!(o.status.success());
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["monotonic"], "non_monotonic");
}

#[test]
fn fit_eps_default_and_variants() {
    let d = tempfile::tempdir().unwrap();
    let parse = |o: Output| -> Value {
        assert!(o.status.success());
        serde_json::from_str(&stdout(&o)).unwrap()
    };
    let a = parse(derfkit(&["fit-eps"], d.path()))["eps_star"].as_f64().unwrap();
    assert!((1.195..=1.215).contains(&a));
    let b = parse(derfkit(&["fit-eps", "--radius", "16"], d.path()))["eps_star"]
        .as_f64()
        .unwrap();
    assert!((a - b).abs() < 1e-4);
    let c = parse(derfkit(&["fit-eps", "--tol", "1e-2"], d.path()))["eps_star"]
        .as_f64()
        .unwrap();
    assert!((0.8..=1.6).contains(&c));
    let bad = derfkit(&["fit-eps", "--radius", "2"], d.path());
    assert_eq!(bad.status.code(), Some(3));
}

#[test]
fn search_all_writes_reports() {
    let d = tiny_dir();
    let o = derfkit(
        &["search", "--config", "tiny.json", "--functions", "all", "--repeats", "3", "--steps", "2", "--out-dir", "out"],
        d.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let r = read_json(d.path().join("out/report.json"));
    assert_eq!(r["trials"].as_array().unwrap().len(), 48);
    assert_eq!(r["ranking"].as_array().unwrap().len(), 16);
    assert_eq!(r["config"]["repeats"], 3);
    assert_eq!(r["config"]["base"]["steps"], 2);
    assert_eq!(r["catalog_hash"].as_str().unwrap().len(), 64);
    let csv = std::fs::read_to_string(d.path().join("out/report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 49);
    assert!(d.path().join("out/metadata.json").exists());
    assert_eq!(std::fs::read_dir(d.path().join("out/checkpoints")).unwrap().count(), 48);
    assert!(stdout(&o).starts_with("rank"));
}

#[test]
fn shift_sweep_grid_shape() {
    let d = tiny_dir();
    let o = derfkit(
        &[
            "sweep",
            "--config",
            "tiny.json",
            "--kind",
            "shift",
            "--shift-type",
            "horizontal",
            "--lambdas",
            "-2,-1,-0.5,-0.1,0,0.1,0.5,1,2",
            "--functions",
            "erf,tanh",
            "--steps",
            "2",
            "-q",
        ],
        d.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).is_empty());
    let r = read_json(d.path().join("derfkit-out/report.json"));
    // Two functions, each with a baseline and nine shifted variants.
    assert_eq!(r["grid"].as_array().unwrap().len(), 20);
    let values: Vec<f64> = r["grid"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|g| g["sweep"]["base"] == "erf")
        .map(|g| g["sweep"]["value"].as_f64().unwrap())
        .collect();
    assert_eq!(values, [-2.0, -1.0, -0.5, -0.1, 0.0, 0.1, 0.5, 1.0, 2.0]);
}

#[test]
fn fitloss_three_rows_from_checkpoints() {
    let d = tiny_dir();
    let o = derfkit(
        &[
            "fitloss",
            "--config",
            "tiny.json",
            "--slots",
            "layer_norm,dyt,derf",
            "--checkpoint-dir",
            "ck",
            "--out-dir",
            "fl",
        ],
        d.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_json(d.path().join("fl/fitloss.json"));
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 3);
    let slots: Vec<&str> = rows.iter().map(|r| r["slot"].as_str().unwrap()).collect();
    assert_eq!(slots, ["layer_norm", "dyt", "derf"]);
    let report = read_json(d.path().join("fl/report.json"));
    for (i, row) in rows.iter().enumerate() {
        assert!(d.path().join(row["checkpoints"][0].as_str().unwrap()).exists());
        assert_eq!(row["eval_mode_train_loss"][0], report["trials"][i]["eval_mode_train_loss"]);
    }
}

#[test]
fn reruns_are_byte_identical() {
    let d = tiny_dir();
    let run = |out: &str, threads: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_derfkit"));
        c.args(["sweep", "--config", "tiny.json", "--kind", "monotonic", "--repeats", "2", "-q", "--out-dir", out])
            .current_dir(d.path());
        match threads {
            Some(t) => c.env("DERFKIT_THREADS", t),
            None => c.env_remove("DERFKIT_THREADS"),
        };
        assert!(c.output().unwrap().status.success());
        std::fs::read(d.path().join(out).join("report.json")).unwrap()
    };
    let a = run("a", None);
    assert_eq!(a, run("b", None));
    assert_eq!(a, run("c", Some("1")));
    assert_eq!(a, run("d", Some("3")));
}

#[test]
fn train_with_generated_data() {
    let d = tiny_dir();
    let missing = derfkit(&["train", "--config", "tiny.json", "--data-dir", "data"], d.path());
    assert_eq!(missing.status.code(), Some(4));
    let o = derfkit(
        &["train", "--config", "tiny.json", "--data-dir", "data", "--gen", "--slot", "isru", "--out-dir", "t"],
        d.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(d.path().join("data/train.dfk").exists());
    let r = read_json(d.path().join("t/report.json"));
    assert_eq!(r["result"]["label"], "isru");
    assert_eq!(r["result"]["steps_completed"], 8);
    assert!(d.path().join("t/model.dfkc").exists());
    let m = derfkit::checkpoint::load(&d.path().join("t/model.dfkc")).unwrap();
    assert_eq!(m.config().d_model, 8);
}

#[test]
fn gen_data_writes_loadable_files() {
    let d = tempfile::tempdir().unwrap();
    let o = derfkit(
        &["gen-data", "--out-dir", "g", "--n-train", "20", "--n-val", "10", "--seq-len", "3", "--input-dim", "5"],
        d.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let t = derfkit::data::Dataset::load(&d.path().join("g/train.dfk")).unwrap();
    assert_eq!((t.len(), t.seq_len(), t.input_dim()), (20, 3, 5));
    let v = derfkit::data::Dataset::load(&d.path().join("g/val.dfk")).unwrap();
    assert_eq!(v.len(), 10);
}

#[test]
fn config_errors_exit_3() {
    let d = tiny_dir();
    std::fs::write(d.path().join("bad.json"), r#"{"base": {"stepz": 3}}"#).unwrap();
    let o = derfkit(&["train", "--config", "bad.json"], d.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("stepz"));

    let o = derfkit(&["search", "--config", "tiny.json", "--functions", "erf", "--batch-size", "0"], d.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("batch_size"));

    let o = derfkit(&["sweep", "--config", "tiny.json", "--kind", "bound", "--lambdas", "-1"], d.path());
    assert_eq!(o.status.code(), Some(3));

    let mut c = Command::new(env!("CARGO_BIN_EXE_derfkit"));
    let o = c
        .args(["search", "--config", "tiny.json", "--functions", "erf"])
        .env("DERFKIT_THREADS", "zero")
        .current_dir(d.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3));

    let o = derfkit(&["train", "--config", "nope.json"], d.path());
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn diverged_trials_still_exit_zero() {
    let d = tiny_dir();
    let o = derfkit(
        &[
            "train",
            "--config",
            "tiny.json",
            "--slot",
            "linear",
            "--lr",
            "50",
            "--warmup-steps",
            "0",
            "--steps",
            "120",
            "-q",
        ],
        d.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
}
