use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use hopper_core::config::DEFAULT_CONFIG;

fn hopsim(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_hopsim")).args(args).output().expect("hopsim runs")
}

fn csv_files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "csv") {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn write_config(dir: &Path, edits: &[(&str, &str)]) -> PathBuf {
    let mut text = DEFAULT_CONFIG.to_string();
    for (from, to) in edits {
        assert!(text.contains(from), "{from} not in default config");
        text = text.replacen(from, to, 1);
    }
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn mono_suite_layout_and_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let out = hopsim(&[
            "mono",
            "--materials",
            "MD,PVC",
            "--behaviors",
            "static,forward",
            "--duration",
            "26",
            "--dt",
            "2e-4",
            "--seedless",
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for run in ["MD_static", "MD_forward", "PVC_static", "PVC_forward"] {
        for file in ["trace.csv", "metrics.csv", "summary.json"] {
            assert!(a.join("runs").join(run).join(file).is_file(), "{run}/{file}");
        }
    }
    let plan: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("plan.json")).unwrap()).unwrap();
    assert_eq!(plan["kind"], "mono_material");
    assert_eq!(plan["seedless"], true);
    assert_eq!(plan["config_fingerprint"].as_str().unwrap().len(), 64);

    let comparisons = fs::read_to_string(a.join("comparisons.csv")).unwrap();
    assert_eq!(comparisons.lines().count(), 1 + 2);
    assert!(comparisons.lines().nth(1).unwrap().starts_with("static,PVC,MD,ok,"));

    let (fa, fb) = (csv_files(&a), csv_files(&b));
    assert_eq!(fa.len(), 10);
    assert!(fa == fb, "CSV outputs differ between identical runs");

    // Rebuilding the tables from disk reproduces them.
    let before = fs::read(a.join("comparisons.csv")).unwrap();
    fs::remove_file(a.join("comparisons.csv")).unwrap();
    let out = hopsim(&["report", "--out", a.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read(a.join("comparisons.csv")).unwrap(), before);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = hopsim(&["simulate", "--material", "unobtainium", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    let bad = write_config(tmp.path(), &[("dt_safety_factor = 0.5", "dt_safety_factor = 2.0")]);
    let out = hopsim(&["simulate", "--material", "MD", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    // Every run falls over immediately.
    let falls = write_config(tmp.path(), &[("max_tilt = 1.0", "max_tilt = 1.0e-6")]);
    let out = hopsim(&[
        "mono",
        "--materials",
        "MD",
        "--behaviors",
        "forward",
        "--dt",
        "2e-4",
        "--duration",
        "21",
        "--config",
        falls.to_str().unwrap(),
        "--out",
        tmp.path().join("falls").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let summary = fs::read_to_string(tmp.path().join("falls/runs/MD_forward/summary.json")).unwrap();
    assert!(summary.contains("\"failed\""));
}

#[test]
fn heatmap_resumes_from_partial_output() {
    let tmp = tempfile::tempdir().unwrap();
    // A short trial keeps the test fast; the cells stay deterministic.
    let cfg = write_config(tmp.path(), &[("trial_duration = 10.0", "trial_duration = 2.0")]);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let run = |dir: &Path| {
        let out = hopsim(&["heatmap", "--quick", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    };
    run(&a);
    let table = fs::read_to_string(a.join("heatmap.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[0], "density_index,modulus_index,rho_kg_m3,modulus_pa,dt_max_s,status,anomalies");
    assert_eq!(rows.len(), 17);
    assert!(rows[1].starts_with("0,0,") && rows[16].starts_with("19,19,"));
    assert!(!a.join("heatmap.partial.csv").exists());

    // An interrupted run left a fingerprint line and five finished cells.
    let sidecar: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("heatmap.json")).unwrap()).unwrap();
    let fingerprint = sidecar["config_fingerprint"].as_str().unwrap();
    fs::create_dir_all(&b).unwrap();
    let partial = format!("{fingerprint}\n{}\n", rows[3..8].join("\n"));
    fs::write(b.join("heatmap.partial.csv"), partial).unwrap();
    run(&b);
    assert_eq!(fs::read_to_string(b.join("heatmap.csv")).unwrap(), table);
}
