use std::path::Path;
use std::process::{Command, Output};

fn disptorus(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_disptorus"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn check_wzy_reports_all_sets() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = disptorus(&["check", "--builtin", "wzy", "--n", "2", "--gamma", "1"], &out);
    assert_eq!(o.status.code(), Some(0));
    let m = manifest(&out);
    for key in ["a_set", "b_set", "c_set", "g_set"] {
        assert_eq!(m["summary"][key], true, "{key}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("conditions.json")).unwrap()).unwrap();
    assert_eq!(report["holds"]["B1"], true);
}

#[test]
fn check_succeeds_on_an_inadmissible_tensor() {
    let tmp = tempfile::tempdir().unwrap();
    let tensor = tmp.path().join("real_omega_n1.json");
    std::fs::write(&tensor, r#"{"n":1,"omega":[{"k":1,"j":1,"p":1,"q":1,"r":1,"re":1.0,"im":0.0}]}"#).unwrap();
    let out = tmp.path().join("run");
    let o = disptorus(&["check", "--tensor", tensor.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(manifest(&out)["summary"]["b_set"], false);

    let o = disptorus(&["audit", "--tensor", tensor.to_str().unwrap()], &tmp.path().join("audit"));
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn audit_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let o = disptorus(&["audit", "--builtin", "wzy", "--n", "2", "--seed", "7"], dir);
        assert_eq!(o.status.code(), Some(0));
    }
    for file in ["audit.json", "audit.csv", "manifest.json"] {
        assert_eq!(
            std::fs::read(a.join(file)).unwrap(),
            std::fs::read(b.join(file)).unwrap(),
            "{file}"
        );
    }
    let m = manifest(&a);
    assert!(m["summary"]["max_residual"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn manifest_lists_every_written_file() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sim");
    let o = disptorus(
        &["simulate", "--builtin", "wzy", "--n", "1", "--N", "32", "--T", "0.01"],
        &out,
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    let listed: Vec<String> = m["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    assert!(listed.contains(&"trajectory/trajectory.csv".to_string()));
    for f in &listed {
        assert!(out.join(f).is_file(), "{f}");
    }
    let on_disk = std::fs::read_dir(out.join("trajectory")).unwrap().count();
    assert_eq!(listed.iter().filter(|f| f.starts_with("trajectory/")).count(), on_disk);
}

#[test]
fn config_file_fields_yield_to_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.json");
    std::fs::write(&cfg, r#"{"builtin": "wzy", "n": 1, "N": 512, "m": 3}"#).unwrap();
    let out = tmp.path().join("run");
    let o = disptorus(&["loss-probe", "--config", cfg.to_str().unwrap(), "--n", "2", "--svg"], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let written: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(written["n"], 2);
    assert_eq!(written["m"], 3);
    assert!(out.join("loss_probe.svg").is_file());
}

#[test]
fn structural_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let o = disptorus(&["check"], &tmp.path().join("a"));
    assert_eq!(o.status.code(), Some(1));
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"{"n":1,"omega":[{"k":5,"j":1,"p":1,"q":1,"r":1,"re":1.0,"im":0.0}]}"#).unwrap();
    let o = disptorus(&["check", "--tensor", bad.to_str().unwrap()], &tmp.path().join("b"));
    assert_eq!(o.status.code(), Some(1));
    let o = disptorus(&["bs-rates", "--eps-ladder", "0.1,0.2"], &tmp.path().join("c"));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn family_sample_then_fit_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let sample = tmp.path().join("sample");
    let o = disptorus(&["family-n2", "--seed", "3"], &sample);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(manifest(&sample)["summary"]["admissible"], true);
    let tensor = sample.join("tensor.json");
    let o = disptorus(&["family-n2", "--tensor", tensor.to_str().unwrap()], &tmp.path().join("fit"));
    assert_eq!(o.status.code(), Some(0));
}
