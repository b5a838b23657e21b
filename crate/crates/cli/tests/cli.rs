use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

const BIN: &str = env!("CARGO_BIN_EXE_mems-testbed");

fn cli(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write_json(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_vec(v).unwrap()).unwrap();
    p
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&fs::read(p).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn short_cruise() -> Value {
    json!({ "duration": 3.0 })
}

fn resonant_attack() -> Value {
    json!({ "carrier_freq": 5000.0, "spl_at_source": 110.0, "start_t": 1.0 })
}

#[test]
fn benign_run_writes_log_and_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_json(tmp.path(), "s.json", &short_cruise());
    let out = tmp.path().join("out");
    let o = cli(&[
        "run",
        "--scenario",
        s(&scenario),
        "--out",
        s(&out),
        "--format",
        "csv,json",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = read_json(&out.join("metrics.json"));
    assert_eq!(m["attack_success"], "no_attack");
    let csv = fs::read_to_string(out.join("log.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3001);
    assert!(out.join("log.json").exists());
    assert!(!out.join("reference.json").exists());
}

#[test]
fn same_seed_gives_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_json(tmp.path(), "s.json", &short_cruise());
    let attack = write_json(tmp.path(), "a.json", &resonant_attack());
    let mut logs = Vec::new();
    for name in ["one", "two"] {
        let out = tmp.path().join(name);
        let o = cli(&[
            "run",
            "--scenario",
            s(&scenario),
            "--attack",
            s(&attack),
            "--out",
            s(&out),
            "--format",
            "json,csv",
        ]);
        assert_eq!(code(&o), 0);
        logs.push(
            ["log.json", "log.csv", "reference.json", "metrics.json"]
                .map(|f| fs::read(out.join(f)).unwrap()),
        );
    }
    assert_eq!(logs[0], logs[1]);
}

#[test]
fn invalid_inputs_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let bad = write_json(tmp.path(), "bad.json", &json!({ "dt": 0.0 }));
    let o = cli(&["run", "--scenario", s(&bad), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("dt"));
    assert!(!out.exists());

    let garbled = tmp.path().join("garbled.json");
    fs::write(&garbled, "{ not json").unwrap();
    assert_eq!(
        code(&cli(&["run", "--scenario", s(&garbled), "--out", s(&out)])),
        2
    );

    let good = write_json(tmp.path(), "s.json", &short_cruise());
    let loud = write_json(tmp.path(), "loud.json", &json!({ "spl_at_source": 200.0 }));
    let o = cli(&[
        "run",
        "--scenario",
        s(&good),
        "--attack",
        s(&loud),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("spl_at_source"));

    let o = cli(&[
        "run",
        "--scenario",
        s(&good),
        "--out",
        s(&out),
        "--format",
        "xml",
    ]);
    assert_eq!(code(&o), 2);
    let o = cli(&[
        "run",
        "--scenario",
        s(&tmp.path().join("missing.json")),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn faulted_session_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_json(
        tmp.path(),
        "s.json",
        &json!({
            "duration": 1.0,
            "sensors": { "mems": { "coupling_accel": 1e308 } },
            "attack": { "start_t": 0.5 }
        }),
    );
    let out = tmp.path().join("out");
    let o = cli(&["run", "--scenario", s(&scenario), "--out", s(&out)]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("faulted"));
    let log = read_json(&out.join("log.json"));
    assert_eq!(log["records"].as_array().unwrap().len(), 500);
}

#[test]
fn repeat_uses_derived_seeds() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_json(tmp.path(), "s.json", &json!({ "duration": 0.5 }));
    let out = tmp.path().join("out");
    let o = cli(&[
        "run",
        "--scenario",
        s(&scenario),
        "--out",
        s(&out),
        "--repeat",
        "3",
        "--seed",
        "100",
    ]);
    assert_eq!(code(&o), 0);
    for i in 0..3u64 {
        let log = read_json(&out.join(format!("run_{i:03}")).join("log.json"));
        assert_eq!(log["seed"], 100 + i);
    }
    let o = cli(&[
        "run",
        "--scenario",
        s(&scenario),
        "--out",
        s(&out),
        "--repeat",
        "0",
    ]);
    assert_eq!(code(&o), 2);
}

fn run_pair(tmp: &Path) -> (PathBuf, PathBuf) {
    let scenario = write_json(
        tmp,
        "s.json",
        &json!({ "duration": 6.0, "controller": { "fusion": { "fusion_enabled": false } } }),
    );
    let attack = write_json(tmp, "a.json", &resonant_attack());
    let out = tmp.join("out");
    let o = cli(&[
        "run",
        "--scenario",
        s(&scenario),
        "--attack",
        s(&attack),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0);
    (out.join("reference.json"), out.join("log.json"))
}

#[test]
fn compare_reports_deltas_and_verdict() {
    let tmp = tempfile::tempdir().unwrap();
    let (benign, attacked) = run_pair(tmp.path());

    let o = cli(&["compare", s(&benign), s(&benign)]);
    assert_eq!(code(&o), 0);
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["attack_success"], "no_attack");
    for (k, v) in r["deltas"].as_object().unwrap() {
        assert!(v.is_null() || v.as_f64() == Some(0.0), "{k} = {v}");
    }

    let report = tmp.path().join("cmp.json");
    let o = cli(&["compare", s(&benign), s(&attacked), "--out", s(&report)]);
    assert_eq!(code(&o), 0);
    let r = read_json(&report);
    assert_eq!(r["attack_success"], "effective");
    assert!(r["deltas"]["max_velocity_est_error"].as_f64().unwrap() > 1.0);
    assert_eq!(r["report"]["attack_success"], "effective");
}

#[test]
fn compare_rejects_mismatched_and_truncated_logs() {
    let tmp = tempfile::tempdir().unwrap();
    let (benign, attacked) = run_pair(tmp.path());
    let mut other = read_json(&benign);
    other["seed"] = json!(43);
    other["config"]["seed"] = json!(43);
    let other = write_json(tmp.path(), "other.json", &other);
    let o = cli(&["compare", s(&other), s(&attacked)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));

    let bytes = fs::read(&attacked).unwrap();
    let cut = tmp.path().join("cut.json");
    fs::write(&cut, &bytes[..bytes.len() / 2]).unwrap();
    assert_eq!(code(&cli(&["compare", s(&benign), s(&cut)])), 2);
}

#[test]
fn sweep_table_is_ordered_with_seeds() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_json(
        tmp.path(),
        "s.json",
        &json!({ "duration": 3.0, "seed": 10, "controller": { "fusion": { "fusion_enabled": false } } }),
    );
    let attack = write_json(tmp.path(), "a.json", &resonant_attack());
    let table = tmp.path().join("sweep.csv");
    let o = cli(&[
        "sweep",
        "--scenario",
        s(&scenario),
        "--attack",
        s(&attack),
        "--axis",
        "spl",
        "--range",
        "90:110",
        "--steps",
        "5",
        "--out",
        s(&table),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&table).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&header[..4], ["index", "seed", "spl_at_source", "state"]);
    let err_col = header
        .iter()
        .position(|h| *h == "max_velocity_est_error")
        .unwrap();
    let rows: Vec<Vec<String>> = lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    assert_eq!(rows.len(), 5);
    let mut last = 0.0;
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r.len(), header.len());
        assert_eq!(r[0], i.to_string());
        assert_eq!(r[1], (10 + i).to_string());
        assert_eq!(r[2].parse::<f64>().unwrap(), 90.0 + 5.0 * i as f64);
        assert_eq!(r[3], "completed");
        let e: f64 = r[err_col].parse().unwrap();
        assert!(e >= last, "row {i}: {e} < {last}");
        last = e;
    }

    let o = cli(&[
        "sweep",
        "--scenario",
        s(&scenario),
        "--axis",
        "trigger_rate",
        "--range",
        "0:4",
        "--steps",
        "2",
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 3);
}

#[test]
fn sweep_rejects_bad_grids() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_json(tmp.path(), "s.json", &json!({ "duration": 1.0 }));
    for (range, steps) in [("1:2", "1"), ("5000", "3"), ("a:b", "3")] {
        let o = cli(&[
            "sweep",
            "--scenario",
            s(&scenario),
            "--axis",
            "freq",
            "--range",
            range,
            "--steps",
            steps,
        ]);
        assert_eq!(code(&o), 2, "{range} {steps}");
    }
    // a point outside the SPL bounds fails validation before anything runs
    let o = cli(&[
        "sweep",
        "--scenario",
        s(&scenario),
        "--axis",
        "spl",
        "--range",
        "100:200",
        "--steps",
        "3",
    ]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("point 2"));
    assert_eq!(
        code(&cli(&[
            "sweep",
            "--scenario",
            s(&scenario),
            "--axis",
            "pitch",
            "--range",
            "1:2",
            "--steps",
            "2"
        ])),
        2
    );
}
