use std::path::Path;
use std::process::{Command, Output};

fn pqiga(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pqiga"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

const SMALL: &[&str] = &["--population-size", "8", "--max-generations", "3", "--duration-s", "0.3"];

#[test]
fn mix_then_separate_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = pqiga(&["mix", "--count", "2", "--duration-s", "0.3", "--out", "data"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = std::fs::read_to_string(dir.path().join("data/manifest.tsv")).unwrap();
    assert_eq!(manifest.lines().filter(|l| l.starts_with("mix")).count(), 2);

    let mut args = vec!["separate", "--manifest", "data/manifest.tsv", "--out", "sep"];
    args.extend(&SMALL[..4]);
    let out = pqiga(&args, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for entry in ["mix000", "mix001"] {
        let report = std::fs::read_to_string(dir.path().join("sep").join(entry).join("report.json")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&report).unwrap();
        assert_eq!(v["entry"], entry);
    }
}

#[test]
fn experiment_writes_report_into_new_directory() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["experiment", "--count", "1", "--out", "runs/a.json"];
    args.extend(SMALL);
    let out = pqiga(&args, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("runs/a.json").exists());
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = pqiga(&["experiment", "--mode", "bogus"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(dir.path().join("bad.toml"), "[qiga]\npopulation_size = 0\n").unwrap();
    let out = pqiga(&["--config", "bad.toml", "experiment"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("population_size"));
}

#[test]
fn missing_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = pqiga(&["eval", "--reference", "a.wav", "--estimate", "b.wav"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn encode_prints_sixteen_unit_norm_amplitudes() {
    let dir = tempfile::tempdir().unwrap();
    let out = pqiga(&["encode", "--angles", "0.1,0.2,0.3,0.4"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<(f64, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<f64> = l.split(',').skip(1).map(|x| x.parse().unwrap()).collect();
            (f[0], f[1])
        })
        .collect();
    assert_eq!(rows.len(), 16);
    let norm: f64 = rows.iter().map(|(re, im)| re * re + im * im).sum();
    assert!((norm - 1.0).abs() < 1e-12);
}
