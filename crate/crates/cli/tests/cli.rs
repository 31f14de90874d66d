use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_baseplace"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "baseplace {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

const SPLIT: [&str; 6] = ["--chain", "planar3", "--scene", "wall_split", "--task", "split_goals"];

fn with<'a>(head: &[&'a str], tail: &[&'a str]) -> Vec<&'a str> {
    head.iter().chain(&SPLIT).chain(tail).copied().collect()
}

#[test]
fn optimize_then_evaluate_and_heatmap() {
    let dir = scratch("optimize");
    let opt = dir.join("opt");
    run(&with(&["optimize"], &["--seed", "3", "--out", opt.to_str().unwrap()]));
    let set: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(opt.join("configuration.json")).unwrap()).unwrap();
    assert_eq!(set["configs"].as_array().unwrap().len(), 2);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(opt.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["reachability"].as_f64().unwrap(), 1.0);
    let trace = std::fs::read_to_string(opt.join("trace.jsonl")).unwrap();
    assert!(trace.lines().count() > 10);

    let config = opt.join("configuration.json");
    let eval = dir.join("eval");
    run(&with(
        &["evaluate"],
        &[
            "--config",
            config.to_str().unwrap(),
            "--trials",
            "20",
            "--error",
            "zero",
            "--out",
            eval.to_str().unwrap(),
        ],
    ));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(eval.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["success_rate"].as_f64().unwrap(), 1.0);

    let heat = dir.join("heat");
    run(&with(
        &["heatmap"],
        &[
            "--config",
            config.to_str().unwrap(),
            "--x-range=-0.02,0.02",
            "--y-range=-0.02,0.02",
            "--step",
            "0.02",
            "--out",
            heat.to_str().unwrap(),
        ],
    ));
    let csv = std::fs::read_to_string(heat.join("heatmap.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 9);
    for layer in ["combined", "config_0", "config_1"] {
        assert!(heat.join(format!("heatmap_{layer}.pgm")).exists());
    }
}

#[test]
fn ik_method_uses_one_configuration() {
    let dir = scratch("ik");
    run(&with(
        &["optimize"],
        &["--method", "ik", "--cardinality", "3", "--out", dir.to_str().unwrap()],
    ));
    let set: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("configuration.json")).unwrap()).unwrap();
    assert_eq!(set["configs"].as_array().unwrap().len(), 1);
}

#[test]
fn capmap_methods_need_a_map() {
    let dir = scratch("nomap");
    let out = bin()
        .args(with(&["optimize"], &["--method", "capmap", "--out", dir.to_str().unwrap()]))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--map"));
}

#[test]
fn capmap_build_and_compare() {
    let dir = scratch("compare");
    let map = dir.join("planar3.capmap");
    run(&[
        "capmap",
        "--chain",
        "planar3",
        "--resolution",
        "0.1",
        "--orientations",
        "6",
        "--out",
        map.to_str().unwrap(),
    ]);
    assert!(map.exists());
    run(&with(
        &["compare"],
        &[
            "--map",
            map.to_str().unwrap(),
            "--trials",
            "20",
            "--error",
            "zero",
            "--out",
            dir.to_str().unwrap(),
        ],
    ));
    let csv = std::fs::read_to_string(dir.join("compare.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let names: Vec<&str> = rows.iter().map(|r| r[0]).collect();
    assert_eq!(names, ["toc", "ik", "capmap", "capmap-collision"]);
    assert_eq!(rows[0][3], "1.000000");
    for r in &rows[1..] {
        assert_eq!(r[3], "0.000000", "{r:?}");
    }
}

#[test]
fn train_and_select() {
    let dir = scratch("train");
    let model = dir.join("selector.json");
    run(&[
        "train",
        "--chain",
        "planar3",
        "--scene",
        "wall_split",
        "--task",
        "split_goals",
        "--cardinality",
        "1",
        "--out",
        model.to_str().unwrap(),
    ]);
    let out = bin().args(["select", "--model", model.to_str().unwrap(), "--h", ""]).output().unwrap();
    // wall_split has no uncontrollable parameters, so an empty observation is the only valid one.
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(text.contains("configs"));
}

#[test]
fn missing_files_are_reported() {
    let out = bin()
        .args(["optimize", "--scene", "/nonexistent/room.scene", "--task", "split_goals", "--out", "/tmp/x"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/room.scene"));

    let out = bin().args(["select", "--model", "/nonexistent/sel.json", "--h", "0"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/sel.json"));
}

#[test]
fn bad_h_is_rejected() {
    let dir = scratch("badh");
    let out = bin()
        .args([
            "optimize",
            "--scene",
            "bed_room",
            "--task",
            "feeding",
            "--h",
            "0.0",
            "--out",
            dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--h"));
}
