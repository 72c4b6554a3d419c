use std::process::{Command, Output};

use serde_json::Value;

fn ilab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ilab"))
        .args(args)
        .env("ILAB_THREADS", "1")
        .output()
        .expect("binary runs")
}

const SMALL_TABLE: &[&str] = &[
    "aparam-table",
    "--set",
    "space=Lp(2)",
    "--set",
    "dim=64",
    "--set",
    "n_max=4",
];

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn list_names_every_experiment() {
    let out = ilab(&["list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in [
        "weighted-trivial",
        "lorentz-decomposition",
        "fragmented-kp",
        "weak-hilbert",
        "amalgam-equality",
        "reiteration",
        "aparam-table",
    ] {
        assert!(text.contains(name), "{name} missing from\n{text}");
    }
    let filtered = String::from_utf8(ilab(&["list", "lorentz"]).stdout).unwrap();
    assert!(filtered.contains("lorentz-decomposition"));
    assert!(!filtered.contains("weak-hilbert"));
}

#[test]
fn validate_echoes_config_and_rejects_bad_ranges() {
    let ok = ilab(&[
        "validate",
        "--set",
        "experiment=reiteration",
        "--set",
        "theta=0.3",
    ]);
    assert_eq!(ok.status.code(), Some(0));
    let cfg = json(&ok);
    assert_eq!(cfg["experiment"], "reiteration");
    assert_eq!(cfg["theta"], 0.3);

    let bad = ilab(&[
        "validate",
        "--set",
        "experiment=reiteration",
        "--set",
        "theta=1.2",
    ]);
    assert_eq!(bad.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("theta"));
}

#[test]
fn unknown_inputs_are_config_errors() {
    assert_eq!(ilab(&["no-such-experiment"]).status.code(), Some(4));
    assert_eq!(
        ilab(&["aparam-table", "--set", "colour=red"]).status.code(),
        Some(4)
    );
    assert_eq!(
        ilab(&["aparam-table", "--bogus-flag"]).status.code(),
        Some(4)
    );
}

#[test]
fn json_report_has_the_documented_fields() {
    let out = ilab(SMALL_TABLE);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let doc = json(&out);
    assert_eq!(doc["schema_version"], 1);
    assert_eq!(doc["experiment"], "aparam-table");
    assert_eq!(doc["config"]["dim"], 64);
    assert_eq!(doc["pass"], true);
    assert!(doc["runtime_ms"].is_u64());
    assert_eq!(doc["results"]["status"], "PASS");
    assert!(!doc["results"]["checks"].as_array().unwrap().is_empty());
}

#[test]
fn runs_are_deterministic_up_to_runtime() {
    let strip = |out: Output| {
        let mut doc = json(&out);
        doc.as_object_mut().unwrap().remove("runtime_ms");
        doc
    };
    let a = strip(ilab(SMALL_TABLE));
    let b = strip(ilab(SMALL_TABLE));
    assert_eq!(a, b);
}

#[test]
fn csv_output_is_long_format() {
    let mut args = SMALL_TABLE.to_vec();
    args.extend(["--format", "csv"]);
    let out = ilab(&args);
    assert_eq!(out.status.code(), Some(0));
    let mut rdr = csv::Reader::from_reader(out.stdout.as_slice());
    assert_eq!(
        rdr.headers().unwrap(),
        vec!["section", "name", "row", "column", "value"]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert!(rows.iter().any(|r| &r[0] == "table" && &r[1] == "aparam"));
    let last = rows.last().unwrap();
    assert_eq!((&last[0], &last[4]), ("status", "true"));
}

#[test]
fn out_writes_the_report_file_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let mut args = SMALL_TABLE.to_vec();
    let p = path.to_str().unwrap();
    args.extend(["--out", p]);
    let out = ilab(&args);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let doc: Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    assert_eq!(doc["experiment"], "aparam-table");
    let names: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(names, vec![std::ffi::OsString::from("report.json")]);
}

#[test]
fn config_file_and_overrides_combine() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    std::fs::write(
        &path,
        "# small run\nexperiment = aparam-table\nspace = Lp(2)\ndim = 64\nn_max = 6\n",
    )
    .unwrap();
    let out = ilab(&[
        "validate",
        "--config",
        path.to_str().unwrap(),
        "--set",
        "n_max=4",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let cfg = json(&out);
    assert_eq!(cfg["dim"], 64);
    assert_eq!(cfg["n_max"], 4);

    std::fs::write(&path, "dim = lots\n").unwrap();
    let bad = ilab(&["validate", "--config", path.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("run.cfg"));
}
