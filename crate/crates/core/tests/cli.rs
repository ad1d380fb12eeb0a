use std::fs;

use ffl::cli::{run, EXIT_CONFIG, EXIT_DEGENERATE, EXIT_OK, EXIT_STOPPED};
use serde_json::Value;

fn ffl(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(
        std::iter::once("ffl").chain(args.iter().copied()),
        &mut out,
        &mut err,
    );
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == name).unwrap();
    lines
        .map(|l| l.split(',').nth(i).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn inspect_sphere() {
    let (code, out, _) = ffl(&[
        "inspect",
        "--metric",
        "sphere:r=2",
        "--x",
        "1.0,0.5",
        "--y",
        "0.3,-1",
    ]);
    assert_eq!(code, EXIT_OK);
    let v: Value = serde_json::from_str(&out).unwrap();
    let flags = v["flag_curvature"].as_array().unwrap();
    assert_eq!(flags.len(), 1);
    assert!((flags[0].as_f64().unwrap() - 0.25).abs() < 1e-10);
    assert!((v["Ric"].as_f64().unwrap() - 0.25).abs() < 1e-10);
    assert_eq!(v["metric"]["family"], "round_sphere");
}

#[test]
fn inspect_reads_metric_file_and_writes_out() {
    let dir = tempfile::tempdir().unwrap();
    let metric = dir.path().join("randers.json");
    fs::write(
        &metric,
        r#"{"family": "randers", "dim": 2, "params": {"b1": 0.3}, "chart": "periodic_box"}"#,
    )
    .unwrap();
    let report = dir.path().join("nested/report.json");
    let (code, out, err) = ffl(&[
        "inspect",
        "--metric",
        metric.to_str().unwrap(),
        "--x",
        "0,0",
        "--y",
        "0,1",
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.is_empty());
    let v: Value = serde_json::from_str(&fs::read_to_string(report).unwrap()).unwrap();
    assert!(v["C^i_jk"]
        .as_array()
        .unwrap()
        .iter()
        .any(|c| c.as_f64().unwrap().abs() > 0.1));
}

#[test]
fn inspect_errors() {
    let (code, _, err) = ffl(&["inspect", "--metric", "sphere", "--x", "0,0", "--y", "1,0"]);
    assert_eq!(code, EXIT_DEGENERATE, "{err}");
    let (code, _, _) = ffl(&[
        "inspect", "--metric", "sphere", "--x", "1,0,0", "--y", "1,0",
    ]);
    assert_eq!(code, EXIT_CONFIG);
    let (code, _, _) = ffl(&[
        "inspect",
        "--metric",
        "hyperbolic",
        "--x",
        "0,0",
        "--y",
        "1,0",
    ]);
    assert_eq!(code, EXIT_CONFIG);
    let (code, _, _) = ffl(&[
        "inspect",
        "--metric",
        "randers:b1=1.2",
        "--x",
        "0,0",
        "--y",
        "1,0",
    ]);
    assert_ne!(code, EXIT_OK);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"family\": ").unwrap();
    let (code, _, _) = ffl(&[
        "inspect",
        "--metric",
        bad.to_str().unwrap(),
        "--x",
        "0,0",
        "--y",
        "1,0",
    ]);
    assert_eq!(code, EXIT_CONFIG);
    let (code, _, _) = ffl(&["frobnicate"]);
    assert_eq!(code, EXIT_CONFIG);
}

#[test]
fn flow_parametric_to_stdout() {
    let (code, out, _) = ffl(&[
        "flow",
        "--metric",
        "sphere",
        "--mode",
        "parametric",
        "--dt",
        "0.1",
        "--t-end",
        "0.4",
        "--cadence",
        "0.2",
    ]);
    assert_eq!(code, EXIT_OK);
    let ric = column(&out, "min_ric");
    let want = [1.0, 1.0 / 0.6, 5.0];
    assert_eq!(ric.len(), 3);
    for (a, b) in ric.iter().zip(want) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn flow_extinction_exit_code() {
    let (code, out, err) = ffl(&[
        "flow",
        "--metric",
        "sphere",
        "--mode",
        "parametric",
        "--dt",
        "0.01",
        "--t-end",
        "0.6",
        "--cadence",
        "0.1",
    ]);
    assert_eq!(code, EXIT_STOPPED);
    assert!(err.contains("flow stopped"), "{err}");
    assert!(column(&out, "t").iter().all(|&t| t < 0.5));
}

#[test]
fn flow_grid_writes_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let args = [
        "flow",
        "--metric",
        "torus:amp=0.1",
        "--nx",
        "16",
        "--ntheta",
        "16",
        "--dt",
        "0.005",
        "--t-end",
        "0.02",
        "--cadence",
        "0.01",
        "--out",
        out_dir.to_str().unwrap(),
    ];
    let (code, _, err) = ffl(&args);
    assert_eq!(code, EXIT_OK, "{err}");
    let csv = fs::read_to_string(out_dir.join("monitors.csv")).unwrap();
    assert_eq!(column(&csv, "t"), vec![0.0, 0.01, 0.02]);
    let mut snaps: Vec<_> = fs::read_dir(out_dir.join("snapshots"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    snaps.sort();
    assert_eq!(
        snaps,
        [
            "snapshot_00000.json",
            "snapshot_00001.json",
            "snapshot_00002.json"
        ]
    );
    let last = fs::read_to_string(out_dir.join("snapshots/snapshot_00002.json")).unwrap();
    let state = ffl::flow::GridState::from_snapshot_json(&last).unwrap();
    assert!((state.t - 0.02).abs() < 1e-12);
    let cfg: Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("config.json")).unwrap()).unwrap();
    assert_eq!(cfg["nx"], 16);

    // reruns are byte-identical
    let again = dir.path().join("again");
    let mut args2 = args;
    args2[14] = again.to_str().unwrap();
    assert_eq!(ffl(&args2).0, EXIT_OK);
    assert_eq!(csv, fs::read_to_string(again.join("monitors.csv")).unwrap());
}

#[test]
fn flow_rejects_bad_schedule() {
    let (code, _, err) = ffl(&[
        "flow", "--metric", "flat", "--dt", "0.003", "--t-end", "0.01",
    ]);
    assert_eq!(code, EXIT_CONFIG, "{err}");
    let (code, _, _) = ffl(&["flow", "--metric", "flat", "--mode", "sideways"]);
    assert_eq!(code, EXIT_CONFIG);
}

#[test]
fn verify_single_section() {
    let (code, out, _) = ffl(&["verify", "--only", "bernoulli"]);
    assert_eq!(code, EXIT_OK);
    let v: Value = serde_json::from_str(&out).unwrap();
    let ids: Vec<&str> = v["identities"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["id"].as_str().unwrap())
        .collect();
    assert!(!ids.is_empty());
    assert!(v["identities"]
        .as_array()
        .unwrap()
        .iter()
        .all(|r| r["status"] == "pass"));
}

#[test]
fn verify_custom_metric_and_unknown_section() {
    let (code, out, err) = ffl(&[
        "verify",
        "--metric",
        "randers:b1=0.2,wave=0.1",
        "--only",
        "symmetry,cross_path",
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    let v: Value = serde_json::from_str(&out).unwrap();
    assert!(v["identities"].as_array().unwrap().len() >= 6);
    let (code, _, _) = ffl(&["verify", "--only", "everything"]);
    assert_eq!(code, EXIT_CONFIG);
}
