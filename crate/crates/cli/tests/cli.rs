use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn np_corner(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_np-corner"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_schema(name: &str, doc: &Value) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(format!("{name}.schema.json"));
    let schema = read_json(&path);
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(doc).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{name}: {errors:?}");
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path).unwrap().lines().map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn dispersion_sweep_writes_fifty_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = np_corner(dir.path(), &["dispersion", "--alpha", "1.5708", "--sweep", "k=-10:-0.05:50"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.path().join("dispersion.csv"));
    assert_eq!(rows[0], ["alpha", "k", "lambda", "beta", "branch", "root", "residual"]);
    assert_eq!(rows.len(), 51);
    assert!(rows[1..].iter().all(|r| ["real", "imaginary", "none"].contains(&r[4].as_str())));
    assert!(rows[1..].iter().any(|r| r[4] == "imaginary"));
    let manifest = read_json(&dir.path().join("manifest.json"));
    assert_schema("manifest", &manifest);
    assert_eq!(manifest["exit_code"], 0);
}

#[test]
fn dispersion_json_and_paper_sign() {
    let dir = tempfile::tempdir().unwrap();
    let out = np_corner(dir.path(), &["dispersion", "--alpha", "pi/2", "--sweep", "k=0:2:5", "--paper-sign", "--json"]);
    assert!(out.status.success());
    let doc = read_json(&dir.path().join("dispersion.json"));
    assert_schema("dispersion", &doc);
    let rows = doc.as_array().unwrap();
    assert_eq!(rows[2]["branch"], "none");
    let f = rows[1]["f_paper"].as_f64().unwrap();
    assert!((f + 0.8).abs() < 1e-12, "{f}");
}

#[test]
fn ess_study_emits_counts_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = np_corner(dir.path(), &["ess-study", "--alpha", "1.5708", "--n-list", "64,128,256"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = read_json(&dir.path().join("ess-study.json"));
    assert_schema("ess-study", &doc);
    let inside: Vec<u64> = doc.as_array().unwrap().iter().map(|r| r["inside"].as_u64().unwrap()).collect();
    assert_eq!(inside.len(), 3);
    assert!(inside.windows(2).all(|w| w[1] >= w[0]), "{inside:?}");
}

#[test]
fn certificate_matches_frozen_example() {
    let dir = tempfile::tempdir().unwrap();
    let out = np_corner(dir.path(), &["certificate", "--k", "-5", "--alpha", "1.5708"]);
    assert!(out.status.success());
    let doc = read_json(&dir.path().join("certificate.json"));
    assert_schema("certificate", &doc);
    for key in ["p", "q", "d"] {
        assert!(doc[key].is_number(), "{key}");
    }
    assert!(doc["disc1"].as_f64().unwrap() < 0.0);
    assert!(doc["disc2"].as_f64().unwrap() < 0.0);
    assert_eq!(doc["form_check"]["passed"], true);
}

#[test]
fn mesh_json_matches_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = np_corner(dir.path(), &["mesh", "--shape", "drop:alpha=pi/2,R0=0.8", "--n", "64"]);
    assert!(out.status.success());
    let doc = read_json(&dir.path().join("mesh.json"));
    assert_schema("mesh", &doc);
    assert_eq!(doc["nodes"].as_array().unwrap().len(), 64);
}

#[test]
fn weyl_writes_documented_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = np_corner(dir.path(), &["weyl", "--k", "-2", "--alpha", "pi/2", "--eps", "2^-4:2^-5", "--plot"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.path().join("weyl.csv"));
    assert_eq!(rows[0], ["eps", "m_eps", "s_eps", "residual", "l2_norm"]);
    assert_eq!(rows.len(), 3);
    assert!(dir.path().join("weyl.gp").exists());
    let out = np_corner(dir.path(), &["weyl", "--k", "-2", "--alpha", "pi/2", "--eps", "2^-4:2^-5", "--json"]);
    assert!(out.status.success());
    assert_schema("weyl", &read_json(&dir.path().join("weyl.json")));
}

#[test]
fn remaining_commands_run() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 5] = [
        &["spectrum-bem", "--shape", "ellipse:a=1,b=0.5", "--n", "64"],
        &["spectrum-bem", "--shape", "disk:r=0.5", "--n", "64", "--mode", "disk:R=1", "--out", "poisson.csv"],
        &["spectrum-fem", "--geometry", "disk-in-disk:r=0.5,R=1", "--h", "0.1", "--count", "4"],
        &["cross-validate", "--geometry", "disk-in-disk:r=0.5,R=1", "--h", "0.1", "--n", "128"],
        &["sector", "--k", "-5", "--alpha", "pi/2", "--h", "0.1", "--levels", "2"],
    ];
    for args in cases {
        let out = np_corner(dir.path(), args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let bem = csv_rows(&dir.path().join("spectrum-bem.csv"));
    assert_eq!(bem[0], ["N", "index", "eigenvalue", "imag_residual"]);
    assert_eq!(bem.len(), 64);
    assert_eq!(csv_rows(&dir.path().join("spectrum-fem.csv")).len(), 5);
    let sector = csv_rows(&dir.path().join("sector.csv"));
    let ratio: f64 = sector[2][3].parse().unwrap();
    assert!(ratio > 1.5, "{ratio}");
}

#[test]
fn fem_spectrum_from_saved_mesh_file() {
    let dir = tempfile::tempdir().unwrap();
    let geom = ["spectrum-fem", "--geometry", "ellipse-in-disk:a=0.6,b=0.3,R=1", "--h", "0.1", "--save-mesh", "e.mesh"];
    assert!(np_corner(dir.path(), &geom).status.success());
    let generated = csv_rows(&dir.path().join("spectrum-fem.csv"));
    let mesh = dir.path().join("e.mesh");
    let out = np_corner(dir.path(), &["spectrum-fem", "--mesh-file", mesh.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let read = csv_rows(&dir.path().join("spectrum-fem.csv"));
    assert_eq!(generated.len(), read.len());
    for (g, r) in generated[1..].iter().zip(&read[1..]) {
        let (g, r): (f64, f64) = (g[1].parse().unwrap(), r[1].parse().unwrap());
        assert!((g - r).abs() < 1e-10, "{g} {r}");
    }
    fs::write(&mesh, "3 1\n0 0 0 1\n1 0 0 1\n").unwrap();
    let out = np_corner(dir.path(), &["spectrum-fem", "--mesh-file", mesh.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_alpha_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = np_corner(dir.path(), &["dispersion", "--k", "-2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha"));
    let manifest = read_json(&dir.path().join("manifest.json"));
    assert_schema("manifest", &manifest);
    assert_eq!(manifest["exit_code"], 1);
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| np_corner(dir.path(), args).status.code();
    assert_eq!(code(&["dispersion", "--alpha", "4", "--k", "-2"]), Some(2));
    assert_eq!(code(&["certificate", "--alpha", "pi/2", "--k", "-1"]), Some(2));
    assert_eq!(code(&["certificate", "--alpha", "pi/2", "--k", "-1", "--beta", "0.2"]), Some(1));
    assert_eq!(code(&["mesh", "--shape", "square:s=1", "--n", "64"]), Some(1));
    assert_eq!(code(&["mesh", "--shape", "disk:r=1", "--n", "15"]), Some(2));
    assert_eq!(code(&["weyl", "--alpha", "pi/2", "--k", "-2", "--eps", "2^-4", "--r0", "0.1"]), Some(2));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "command = \"mesh\"\nshape = \"disk:r=1\"\nn = 64\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_np-corner"))
        .args(["--config", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap(), "mesh", "--n", "512"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = read_json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["config"]["n"], 512);
    assert_eq!(manifest["config"]["shape"], "disk:r=1");
    assert_eq!(read_json(&dir.path().join("mesh.json"))["weights"].as_array().unwrap().len(), 512);

    fs::write(&cfg, "command = \"mesh\"\nn = \"many\"\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_np-corner")).args(["--config", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`n`"));
}

#[test]
fn config_file_alone_drives_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    let out_dir = dir.path().join("out");
    fs::write(
        &cfg,
        format!(
            "command = \"certificate\"\nalpha = \"pi/2\"\nk = -5\nseed = 3\nout-dir = {:?}\n",
            out_dir.to_str().unwrap()
        ),
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_np-corner")).args(["--config", cfg.to_str().unwrap()]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("certificate.json").exists());
}

#[test]
fn deterministic_outputs_are_bit_identical() {
    let runs: [&[&str]; 3] = [
        &["dispersion", "--alpha", "pi/3", "--sweep", "k=-20:20:41", "--seed", "7"],
        &["certificate", "--alpha", "pi/3", "--k", "-0.1", "--seed", "7"],
        &["mesh", "--shape", "drop:alpha=pi/3,R0=0.8", "--n", "128", "--seed", "7"],
    ];
    let files = ["dispersion.csv", "certificate.json", "mesh.json"];
    for (args, file) in runs.iter().zip(files) {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        assert!(np_corner(a.path(), args).status.success());
        let mut threaded = args.to_vec();
        threaded.extend(["--threads", "1"]);
        assert!(np_corner(b.path(), &threaded).status.success());
        assert_eq!(fs::read(a.path().join(file)).unwrap(), fs::read(b.path().join(file)).unwrap(), "{file}");
    }
}

#[test]
fn manifest_config_reruns_identically() {
    let a = tempfile::tempdir().unwrap();
    assert!(np_corner(a.path(), &["certificate", "--alpha", "2pi/3", "--k", "-8", "--seed", "11"]).status.success());
    let echo = read_json(&a.path().join("manifest.json"))["config"].clone();
    let b = tempfile::tempdir().unwrap();
    let mut table: toml::Table = serde_json::from_value(echo).unwrap();
    table.insert("out-dir".into(), toml::Value::String(b.path().to_str().unwrap().into()));
    let cfg = b.path().join("echo.toml");
    fs::write(&cfg, toml::to_string(&table).unwrap()).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_np-corner")).args(["--config", cfg.to_str().unwrap()]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        fs::read(a.path().join("certificate.json")).unwrap(),
        fs::read(b.path().join("certificate.json")).unwrap()
    );
}
