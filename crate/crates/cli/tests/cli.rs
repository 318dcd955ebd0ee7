use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn curreg(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_curreg"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn small() -> Vec<&'static str> {
    vec![
        "--set",
        "corpus.subjects=8",
        "--set",
        "corpus.resolution=1",
        "--set",
        "model.kind=\"fixed\"",
        "--set",
        "basis.r_covariance=4",
        "--set",
        "basis.r_mixed=4",
    ]
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_config_file_exits_1_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = curreg(&["cv", "--config", "/no/such/study.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/no/such/study.toml"), "{}", stderr(&o));
}

#[test]
fn bad_config_key_exits_1_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[kernel]\nlambda = -2.0\n").unwrap();
    let o = curreg(&["project", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("kernel.lambda"), "{}", stderr(&o));

    fs::write(&cfg, "[grid]\ngapp = 0.3\n").unwrap();
    let o = curreg(&["project", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("grid.gapp"), "{}", stderr(&o));
}

#[test]
fn mixed_basis_with_one_subject_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = curreg(
        &[
            "basis",
            "--kind",
            "mixed",
            "--set",
            "corpus.subjects=1",
            "--set",
            "corpus.resolution=1",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(
        stderr(&o).contains("sample size n ≥ 2 required"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn singular_projection_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec![
        "project",
        "--set",
        "kernel.lambda=1e4",
        "--set",
        "grid.ridge=0.0",
    ];
    args.extend(small());
    let o = curreg(&args, dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("singular"), "{}", stderr(&o));
}

#[test]
fn cv_is_reproducible_and_restartable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut args = vec!["cv"];
    args.extend(small());
    let o = curreg(&args, a.path());
    assert!(o.status.success(), "{}", stderr(&o));
    for kind in ["kernel", "covariance", "mixed"] {
        assert!(a.path().join(format!("reports/cv_{kind}.json")).exists());
        assert!(a.path().join(format!("reports/cv_{kind}.txt")).exists());
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.path().join("manifests/cv.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["master_seed"], 20240601);
    assert!(manifest["config_hash"].is_string());
    assert!(manifest["timings_ms"]["total"].is_number());

    // different job count, fresh directory
    let mut args_b = args.clone();
    args_b.extend(["--jobs", "1"]);
    assert!(curreg(&args_b, b.path()).status.success());
    // rerun in place: currents are consumed from disk
    assert!(curreg(&args, a.path()).status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.path().join("manifests/cv.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["reused"].as_array().unwrap().len(), 8);

    for kind in ["kernel", "covariance", "mixed"] {
        let rel = format!("reports/cv_{kind}.json");
        assert_eq!(
            fs::read(a.path().join(&rel)).unwrap(),
            fs::read(b.path().join(&rel)).unwrap(),
            "{rel}"
        );
    }

    let o = curreg(&["report"], a.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(
        text.contains("agreement") && text.contains("oracle"),
        "{text}"
    );
}

#[test]
fn report_without_cv_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = curreg(&["report"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn pipeline_stages_write_their_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    for cmd in ["gen-corpus", "project", "basis", "features", "fit"] {
        let mut args = vec![cmd];
        args.extend(small());
        let o = curreg(&args, out);
        assert!(o.status.success(), "{cmd}: {}", stderr(&o));
        assert!(out.join(format!("manifests/{cmd}.json")).exists());
    }
    let off = fs::read_to_string(out.join("meshes/c000.off")).unwrap();
    assert!(off.starts_with("OFF"));
    let corpus: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("corpus.json")).unwrap()).unwrap();
    assert_eq!(corpus["subjects"].as_array().unwrap().len(), 8);
    let table = fs::read_to_string(out.join("table.csv")).unwrap();
    assert!(table.starts_with("subject,response,shirt.size,sex,age"));
    for kind in ["kernel", "covariance", "mixed"] {
        assert!(out.join(format!("bases/{kind}.basis")).exists());
        assert!(out.join(format!("features/{kind}.csv")).exists());
        let model: serde_json::Value = serde_json::from_str(
            &fs::read_to_string(out.join(format!("models/{kind}.json"))).unwrap(),
        )
        .unwrap();
        assert_eq!(model["thresholds"].as_array().unwrap().len(), 2);
    }
    // bases from the basis step were consumed by the later steps
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifests/fit.json")).unwrap()).unwrap();
    let reused: Vec<&str> = m["reused"]
        .as_array()
        .unwrap()
        .iter()
        .filter_map(|v| v.as_str())
        .collect();
    assert!(reused.contains(&"bases/mixed.basis"), "{reused:?}");
}
