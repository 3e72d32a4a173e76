use std::path::Path;
use std::process::{Command, Output};

use handforge::{generate_default_model, hpsl_forward, ParamVector, ProceduralConfig};

fn handforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_handforge"))
        .args(args)
        .env_remove("HANDFORGE_MODEL")
        .output()
        .expect("run handforge")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn neutral_forward_prints_rest_joints() {
    let o = handforge(&["forward", "--format", "csv"]);
    assert!(o.status.success());
    let model = generate_default_model(&ProceduralConfig::default()).unwrap();
    let rest = hpsl_forward(&model, &ParamVector::neutral(&model)).unwrap().joints;
    let mut reader = csv::Reader::from_reader(o.stdout.as_slice());
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), rest.len());
    for (row, p) in rows.iter().zip(&rest) {
        let got: Vec<f64> = (2..5).map(|c| row[c].parse().unwrap()).collect();
        assert_eq!(got, [p.x, p.y, p.z]);
    }
}

#[test]
fn short_gradcheck_passes() {
    let o = handforge(&["gradcheck", "--seed", "7", "--trials", "20"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(!stdout(&o).contains("FAIL"));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(handforge(&["forward", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(handforge(&["fit"]).status.code(), Some(1));
    assert_eq!(handforge(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "count = 3\nunknown_range = [0, 1]\n").unwrap();
    let out = tmp.path().join("out");
    let o = handforge(&["dataset", "gen", "--config", bad.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));

    let missing = tmp.path().join("missing.json");
    assert_eq!(handforge(&["forward", "--params", missing.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn dataset_generation_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let o = handforge(&["dataset", "gen", "--count", "4", "--seed", "11", "-o", dir.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let files = dir_bytes(&a);
    assert_eq!(files.len(), 4 * 4 + 1);
    assert_eq!(files, dir_bytes(&b));
}

#[test]
fn fit_recovers_rendered_pose() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert!(handforge(&["dataset", "gen", "--count", "1", "--seed", "3", "-o", data.to_str().unwrap()])
        .status
        .success());
    let annotations = std::fs::read_dir(&data)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|e| e == "csv"))
        .unwrap();
    let fitted = tmp.path().join("fit.json");
    let o = handforge(&[
        "fit",
        "--targets",
        annotations.to_str().unwrap(),
        "-o",
        fitted.to_str().unwrap(),
        "--format",
        "csv",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("converged,true"), "{}", stdout(&o));
    let params: ParamVector = serde_json::from_str(&std::fs::read_to_string(&fitted).unwrap()).unwrap();
    assert_eq!(params.delta_theta.len(), 26);
}
