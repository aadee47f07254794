//! End-to-end runs of the `qnd` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn qnd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qnd")).args(args).output().expect("binary runs")
}

fn config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name).display().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn out_dir(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let o = qnd(&["validate", path.to_str().unwrap()]);
        assert!(o.status.success(), "{}: {}", path.display(), stderr(&o));
        n += 1;
    }
    assert!(n >= 7);
}

#[test]
fn unknown_key_reports_line_and_column() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write(tmp.path(), "bad.json", "{\"scenario\": {\"builtin\": {\"name\": \"toy-model\"}},\n  \"run\": {\"sede\": 1}}\n");
    let o = qnd(&["validate", &path]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("line 2") && e.contains("unknown field `sede`"), "{e}");
}

#[test]
fn invalid_probabilities_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write(
        tmp.path(),
        "bad.json",
        r#"{"scenario": {"discrete": {"name": "x", "pointers": {"q0": [0.5, 0.5]},
            "methods": [{"id": "m", "outcomes": ["a", "b"], "probabilities": [[0.9, 0.5], [0.2, 0.5]]}]}}}"#,
    );
    let o = qnd(&["validate", &path]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("scenario.discrete.methods[0]"), "{}", stderr(&o));
}

#[test]
fn missing_file_is_an_io_error() {
    let o = qnd(&["validate", "/definitely/not/here.json"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn wrong_scenario_kind_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(tmp.path(), "o");
    let o = qnd(&["--out", out.to_str().unwrap(), "simulate-continuous", &config("toy-model.json")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("discrete"));
}

#[test]
fn discrete_output_is_independent_of_workers() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |workers: &str| {
        let out = out_dir(tmp.path(), workers);
        let o = qnd(&[
            "--quiet",
            "--seed",
            "11",
            "--workers",
            workers,
            "--out",
            out.to_str().unwrap(),
            "simulate-discrete",
            &config("weighted-coin.json"),
            "--trajectories",
            "40",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(o.stdout.is_empty());
        (fs::read_to_string(out.join("trajectories.jsonl")).unwrap(), fs::read_to_string(out.join("collapse.csv")).unwrap())
    };
    assert_eq!(run("1"), run("4"));
}

#[test]
fn seed_changes_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |seed: &str| {
        let out = out_dir(tmp.path(), seed);
        let args = [
            "--quiet",
            "--seed",
            seed,
            "--out",
            out.to_str().unwrap(),
            "simulate-discrete",
            &config("weighted-coin.json"),
            "--trajectories",
            "20",
        ];
        assert!(qnd(&args).status.success());
        fs::read_to_string(out.join("trajectories.jsonl")).unwrap()
    };
    assert_ne!(run("1"), run("2"));
}

#[test]
fn continuous_output_is_independent_of_workers() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |workers: &str| {
        let out = out_dir(tmp.path(), workers);
        let o = qnd(&[
            "--quiet",
            "--workers",
            workers,
            "--out",
            out.to_str().unwrap(),
            "simulate-continuous",
            &config("two-sector-continuous.json"),
            "--paths",
            "6",
            "--t-max",
            "0.5",
            "--record-every",
            "100",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read_to_string(out.join("mean_q.csv")).unwrap()
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn csv_floats_carry_seventeen_significant_digits() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(tmp.path(), "r");
    let o = qnd(&["--out", out.to_str().unwrap(), "rates", &config("toy-model.json")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("rates.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("table,beta,alpha,rate"));
    let mut checked = 0;
    for line in lines {
        let rate = line.rsplit(',').next().unwrap();
        let mantissa = rate.split('e').next().unwrap().trim_start_matches('-');
        assert_eq!(mantissa.len(), 18, "{rate}");
        rate.parse::<f64>().unwrap();
        checked += 1;
    }
    // One 8×8 table per method plus the weighted mean.
    assert_eq!(checked, 128);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("0.11550"), "{stdout}");
    assert!(out.join("confidence.csv").exists());
}

#[test]
fn scaling_check_rejects_unusable_deltas() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(tmp.path(), "s");
    let o = qnd(&["--out", out.to_str().unwrap(), "scaling-check", &config("continuous-demo.json"), "--deltas", "5", "--samples", "100"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("δ = 5"), "{}", stderr(&o));

    let text = r#"{"scenario": {"continuous": {"name": "lin", "pointers": {"q0": [0.5, 0.5]},
        "methods": [{"id": "m", "outcomes": ["a", "b"], "p0": [0.5, 0.5], "gamma": [[3.0, -3.0], [-3.0, 3.0]]}]}}}"#;
    let path = write(tmp.path(), "lin.json", text);
    let o = qnd(&["--out", out.to_str().unwrap(), "scaling-check", &path, "--deltas", "0.2", "--samples", "100"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("largest admissible"), "{}", stderr(&o));
}

#[test]
fn scaling_check_writes_moments() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(tmp.path(), "s");
    let o =
        qnd(&["--out", out.to_str().unwrap(), "scaling-check", &config("continuous-demo.json"), "--deltas", "0.01", "--samples", "200"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("scaling.csv")).unwrap();
    assert!(text.starts_with("delta,law,t,moment,channel,other,s,simulated,predicted,sigma,deviation\n"));
    assert!(text.lines().count() > 1);
}

#[test]
fn export_round_trips_through_validate() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(tmp.path(), "e");
    for name in ["toy-model", "two-state-quantum", "continuous-demo"] {
        let o = qnd(&["--out", out.to_str().unwrap(), "export-scenario", name]);
        assert!(o.status.success(), "{}", stderr(&o));
        let exported = out.join(format!("{name}.json"));
        let v = qnd(&["validate", exported.to_str().unwrap()]);
        assert!(v.status.success(), "{name}: {}", stderr(&v));
        let text = fs::read_to_string(&exported).unwrap();
        assert!(!text.contains("\"builtin\""), "{name} should export inline");
    }
    let o = qnd(&["--out", out.to_str().unwrap(), "export-scenario", "no-such-scenario"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn exported_and_builtin_toy_give_identical_rates() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(tmp.path(), "e");
    assert!(qnd(&["--out", out.to_str().unwrap(), "export-scenario", &config("toy-model.json")]).status.success());
    let a = out_dir(tmp.path(), "a");
    let b = out_dir(tmp.path(), "b");
    assert!(qnd(&["--quiet", "--out", a.to_str().unwrap(), "rates", &config("toy-model.json")]).status.success());
    let exported = out.join("toy-model.json");
    assert!(qnd(&["--quiet", "--out", b.to_str().unwrap(), "rates", exported.to_str().unwrap()]).status.success());
    assert_eq!(fs::read_to_string(a.join("rates.csv")).unwrap(), fs::read_to_string(b.join("rates.csv")).unwrap());
}
