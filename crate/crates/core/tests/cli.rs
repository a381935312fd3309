mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::*;

fn railmarkov(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_railmarkov"))
        .args(args)
        .env("RAILMARKOV_LOG", "error")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn simulate_writes_dataset_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let o = railmarkov(&[
            "simulate",
            "--seed",
            "7",
            "--order",
            "1",
            "--trains",
            "20",
            "--out",
            p(dir),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let files = read_dir_bytes(&a);
    let names: Vec<&str> = files.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["journeys.csv", "scenario.json", "stations.csv", "trains.csv"]);
    assert_eq!(files, read_dir_bytes(&b));
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(
        railmarkov(&["simulate", "--order", "9", "--out", p(tmp.path())])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(railmarkov(&["frobnicate"]).status.code(), Some(2));
    let o = railmarkov(&["simulate", "--trains", "0", "--out", p(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));

    let data = tmp.path().join("data");
    write_dataset(&data, &fixture());
    fs::remove_file(data.join("stations.csv")).unwrap();
    let o = railmarkov(&["train", "--data", p(&data), "--out", p(&tmp.path().join("arch"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("stations"));
}

#[test]
fn train_on_fixture_reports_lists_and_stable_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    write_dataset(&data, &fixture());
    let mut hashes = Vec::new();
    for name in ["a1", "a2"] {
        let o = railmarkov(&[
            "train",
            "--data",
            p(&data),
            "--known-trains",
            "KT1,KT2,KT3,KT4,KT5",
            "--cv-cutoff",
            "2030-01-01",
            "--holdout-ratio",
            "0",
            "--n-trees",
            "10",
            "--out",
            p(&tmp.path().join(name)),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let out = stdout(&o);
        assert!(out.contains("order 1 ips_list size 14"), "{out}");
        assert!(out.contains("order 4 ips_list size 8"), "{out}");
        hashes.push(
            out.lines()
                .find(|l| l.starts_with("manifest sha256"))
                .unwrap()
                .to_string(),
        );
    }
    assert_eq!(hashes[0], hashes[1]);
    assert_eq!(
        fs::read(tmp.path().join("a1/manifest.json")).unwrap(),
        fs::read(tmp.path().join("a2/manifest.json")).unwrap()
    );
}

#[test]
fn empty_training_data_is_a_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    write_dataset(&data, &fixture());
    let o = railmarkov(&[
        "train",
        "--data",
        p(&data),
        "--known-trains",
        "NOPE",
        "--cv-cutoff",
        "2030-01-01",
        "--out",
        p(&tmp.path().join("arch")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());
}

fn trained_fixture(tmp: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let data = tmp.join("data");
    let arch = tmp.join("arch");
    write_dataset(&data, &fixture());
    let o = railmarkov(&[
        "train",
        "--data",
        p(&data),
        "--known-trains",
        "KT1,KT2,KT3,KT4,KT5",
        "--cv-cutoff",
        "2030-01-01",
        "--holdout-ratio",
        "0",
        "--n-trees",
        "10",
        "--n-max",
        "4",
        "--out",
        p(&arch),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    (data, arch)
}

#[test]
fn predict_routes_against_fixture_archive() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, arch) = trained_fixture(tmp.path());

    let short = tmp.path().join("short.csv");
    fs::write(&short, "station_code,distance_km\nKS_a,0\nKS_b,40\n").unwrap();
    let out = tmp.path().join("short_out");
    let o = railmarkov(&[
        "predict",
        "--archive",
        p(&arch),
        "--route",
        p(&short),
        "--date",
        "2016-02-01",
        "--train",
        "KT1",
        "--data",
        p(&data),
        "--order",
        "2",
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    let rows: Vec<&str> = report.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].contains(",0.0000,"), "{report}");

    let ut2 = tmp.path().join("ut2.csv");
    fs::write(
        &ut2,
        "station_code,distance_km,latemin\nUS_u,0,0\nUS_v,40,4\nKS_b,80,8\nKS_m,120,9\nUS_w,160,12\nKS_j,200,15\n",
    )
    .unwrap();
    let out = tmp.path().join("ut2_out");
    let o = railmarkov(&[
        "predict",
        "--archive",
        p(&arch),
        "--route",
        p(&ut2),
        "--date",
        "2016-03-01",
        "--train",
        "UT2",
        "--data",
        p(&data),
        "--order",
        "3",
        "--model",
        "ridge",
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    for station in ["US_v", "KS_m", "US_w"] {
        assert!(text.contains(&format!(" {station} -> ")), "{text}");
    }
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["fallbacks"].as_array().unwrap().len(), 3);
    assert!(summary["rmse"].as_f64().is_some());

    let o = railmarkov(&[
        "predict",
        "--archive",
        p(&arch),
        "--route",
        p(&ut2),
        "--date",
        "2016-03-01",
        "--train",
        "UT2",
        "--data",
        p(&data),
        "--order",
        "5",
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unpredictable_station_fails_with_position() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, arch) = trained_fixture(tmp.path());
    let route = tmp.path().join("r.csv");
    fs::write(&route, "station_code,distance_km\nKS_a,0\nNOWHERE,40\n").unwrap();
    let o = railmarkov(&[
        "predict",
        "--archive",
        p(&arch),
        "--route",
        p(&route),
        "--date",
        "2016-02-01",
        "--train",
        "X",
        "--data",
        p(&data),
        "--out",
        p(&tmp.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("position 1"));
}

#[test]
fn evaluate_writes_tables_reproducibly() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let o = railmarkov(&[
        "simulate",
        "--seed",
        "3",
        "--trains",
        "8",
        "--unknown-trains",
        "2",
        "--stations",
        "20",
        "--out",
        p(&data),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let config = tmp.path().join("run.toml");
    fs::write(&config, format!("data = {:?}\nn_trees = 8\nseed = 11\n", p(&data))).unwrap();
    let mut outputs = Vec::new();
    for name in ["e1", "e2"] {
        let out = tmp.path().join(name);
        let o = railmarkov(&[
            "--config",
            p(&config),
            "evaluate",
            "--experiment",
            "1,2,3,4",
            "--out",
            p(&out),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(read_dir_bytes(&out));
    }
    assert_eq!(outputs[0], outputs[1]);

    let out = tmp.path().join("e1");
    let ci = fs::read_to_string(out.join("ci_coverage.csv")).unwrap();
    let labels: Vec<&str> = ci.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(labels, ["1-OMLMPF", "2-OMLMPF", "3-OMLMPF", "4-OMLMPF", "5-OMLMPF"]);
    let order = fs::read_to_string(out.join("order_selection_forest.csv")).unwrap();
    assert_eq!(
        order.lines().next().unwrap(),
        "framework,BIC_Exp1,BIC_Exp2,BIC_Exp3,BIC_Exp4,AIC_Exp1,AIC_Exp2,AIC_Exp3,AIC_Exp4"
    );
    assert!(out.join("rmse_per_train.csv").is_file());
    assert!(out.join("intervals.csv").is_file());
}

#[test]
fn bad_config_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("bad.toml");
    fs::write(&config, "no_such_key = 1\n").unwrap();
    let o = railmarkov(&["--config", p(&config), "simulate", "--out", p(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
}
