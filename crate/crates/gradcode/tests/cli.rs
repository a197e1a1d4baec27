//! End-to-end runs of the `gradcode` binary.

use std::fs;
use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output, Stdio};

const BIN: &str = env!("CARGO_BIN_EXE_gradcode");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("exp.cfg");
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn missing_key_exits_2_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "method = agc\nn = 4\nc = 2\nT = 1\n");
    let o = run(&["simulate", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("delta"), "{}", stderr(&o));

    let cfg = write_config(dir.path(), "method = egc\nn = 4\nc = 3\nT = 1\n");
    let o = run(&["simulate", "--config", &cfg]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("c"), "{}", stderr(&o));
}

#[test]
fn single_iteration_writes_one_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "method = agc\nn = 4\nc = 2\ndelta = 0.5\nT = 1\nseed = 3\n");
    let out = dir.path().join("out");
    let o = run(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("run_3.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("# config_hash: "));
    assert!(lines[1].starts_with("t,"));
    assert_eq!(lines.len(), 3, "{csv}");
    assert!(lines[2].starts_with("1,"));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("run_3.json")).unwrap()).unwrap();
    assert_eq!(json["records"].as_array().unwrap().len(), 1);
    assert_eq!(json["seed"], 3);
}

#[test]
fn seed_range_writes_one_file_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "method = uncoded\nn = 6\nT = 5\ndim = 4\n");
    let out = dir.path().join("out");
    let o = run(&[
        "simulate",
        "--config",
        &cfg,
        "--seeds",
        "0..199",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let count = |ext: &str| {
        fs::read_dir(&out)
            .unwrap()
            .filter(|e| {
                let name = e.as_ref().unwrap().file_name().into_string().unwrap();
                name.starts_with("run_") && name.ends_with(ext)
            })
            .count()
    };
    assert_eq!(count(".json"), 200);
    assert_eq!(count(".csv"), 200);
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.starts_with("# config_hash: "));
    assert!(summary.contains("# runs: 200\n"));
    // hash, runs, header, then t = 0..=5
    assert_eq!(summary.lines().count(), 3 + 6, "{summary}");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "method = agc\nn = 6\nc = 2\ndelta = 0.5\nT = 8\nseed = 11\ninit_scale = 1\n",
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        assert_eq!(
            code(&run(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()])),
            0
        );
    }
    for f in ["run_11.csv", "run_11.json", "summary.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn analyze_prints_moments() {
    let o = run(&["analyze", "--n", "4", "--c", "2", "--r", "2", "--methods", "agc"]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8(o.stdout).unwrap();
    let row: Vec<&str> = out.lines().nth(2).unwrap().split(',').collect();
    assert_eq!(row[0], "agc");
    assert!((row[6].parse::<f64>().unwrap() - 1.0 / 6.0).abs() < 1e-15);
    assert!((row[7].parse::<f64>().unwrap() - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn analyze_rejects_invalid_grid() {
    assert_eq!(code(&run(&["analyze", "--n", "4", "--c", "3"])), 2);
}

#[test]
fn verify_moments_passes_and_corrupted_bound_fails() {
    let o = run(&["verify", "--suite", "moments", "--budget", "2000"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let o = run(&["verify", "--suite", "convergence", "--budget", "10", "--corrupt-bound"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn verify_rejects_small_budget() {
    assert_eq!(code(&run(&["verify", "--suite", "moments", "--budget", "5"])), 2);
}

#[test]
fn shard_row_deficit_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    fs::write(&data, "label,a\n1,2\n3,4\n5,6\n").unwrap();
    let o = run(&[
        "shard",
        "--dataset",
        data.to_str().unwrap(),
        "--n",
        "4",
        "--out",
        dir.path().join("s").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));

    fs::write(&data, "label,a\n1,2\n3,4\n5,6\n7,8\n").unwrap();
    let out = dir.path().join("s");
    let o = run(&[
        "shard",
        "--dataset",
        data.to_str().unwrap(),
        "--n",
        "4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for i in 0..4 {
        let body = fs::read_to_string(out.join(format!("task_{i:05}.csv"))).unwrap();
        assert_eq!(body.lines().count(), 1);
    }
}

#[test]
fn master_and_worker_processes_train_a_sharded_model() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let mut csv = String::from("label,a,b\n");
    for i in 0..24 {
        let (a, b) = (i as f64 / 10.0, ((i * 7) % 5) as f64);
        csv += &format!("{},{a},{b}\n", 2.0 * a - b + 0.5);
    }
    fs::write(&data, csv).unwrap();
    let shards = dir.path().join("shards");
    let o = run(&[
        "shard",
        "--dataset",
        data.to_str().unwrap(),
        "--n",
        "4",
        "--c",
        "2",
        "--out",
        shards.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let addr = format!("127.0.0.1:{port}");
    let cfg = write_config(
        dir.path(),
        &format!(
            "method = agc\nn = 4\nc = 2\ndelta = 0.5\nT = 5\nobjective = least_squares\ndataset = {}\ntimeout = 20\n",
            data.display()
        ),
    );
    let out = dir.path().join("out");
    let master = Command::new(BIN)
        .args([
            "master",
            "--config",
            &cfg,
            "--listen",
            &addr,
            "--out",
            out.to_str().unwrap(),
        ])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let workers: Vec<_> = (0..4)
        .map(|j| {
            Command::new(BIN)
                .args([
                    "worker",
                    "--master",
                    &addr,
                    "--worker-id",
                    &j.to_string(),
                    "--data",
                    shards.to_str().unwrap(),
                ])
                .args(["--delay-seed", "1", "--delay-scale", "0.01"])
                .stderr(Stdio::piped())
                .spawn()
                .unwrap()
        })
        .collect();
    let m = master.wait_with_output().unwrap();
    assert_eq!(code(&m), 0, "{}", stderr(&m));
    for w in workers {
        let o = w.wait_with_output().unwrap();
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("run_0.json")).unwrap()).unwrap();
    let records = json["records"].as_array().unwrap();
    assert_eq!(records.len(), 5);
    assert!(json["final_loss"].as_f64().unwrap() < json["initial_loss"].as_f64().unwrap());
}
