use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use ewsindy::grid::save_field;
use ewsindy::FieldGrid;
use serde_json::Value;

fn ewsindy(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ewsindy")).args(args).current_dir(dir).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

/// Short synthetic record on a 60-element beam, generated once through the CLI.
fn small_field() -> &'static PathBuf {
    static PATH: OnceLock<PathBuf> = OnceLock::new();
    PATH.get_or_init(|| {
        let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
        let out = ewsindy(&["synth", "--out", "cli-small-field.txt", "--n-elem", "60", "--t-end", "3e-4"], &dir);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        dir.join("cli-small-field.txt")
    })
}

fn write_config(dir: &Path, json: &str) -> PathBuf {
    let path = dir.join("cfg.json");
    std::fs::write(&path, json).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn config(input: &Path, extra: &str) -> String {
    format!(
        r#"{{"input": {:?}, "preprocess": {{"window": [1e-4, 2.9e-4]}}{extra},
            "output": {{"report": "r.json"}}}}"#,
        input.to_str().unwrap()
    )
}

const MATERIAL: &str = r#", "material": {"section": {"kind": "circle", "diameter": 6.35e-3}, "density": 2721.9, "nominal_modulus": 6.9e10}"#;

#[test]
fn missing_input_exits_at_ingest() {
    let dir = tempfile::tempdir().unwrap();
    let out = ewsindy(&["discover", "--in", "absent.txt"], dir.path());
    assert_eq!(code(&out), 3);
    let cfg = write_config(dir.path(), &config(&dir.path().join("absent.txt"), ""));
    let out = ewsindy(&["--config", cfg.to_str().unwrap(), "pipeline"], dir.path());
    assert_eq!(code(&out), 3);
    let report = read_json(&dir.path().join("r.json"));
    assert_eq!(report["failure"]["stage"], "ingest");
}

#[test]
fn bad_config_exits_at_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"inptu": "x"}"#);
    let out = ewsindy(&["--config", cfg.to_str().unwrap(), "pipeline"], dir.path());
    assert_eq!(code(&out), 2);
    let out = ewsindy(&["--config", "nowhere.json", "pipeline"], dir.path());
    assert_eq!(code(&out), 2);
}

#[test]
fn window_outside_record_exits_at_preprocess() {
    let dir = tempfile::tempdir().unwrap();
    let out = ewsindy(&["discover", "--in", small_field().to_str().unwrap(), "--window", "1", "2"], dir.path());
    assert_eq!(code(&out), 4);
}

#[test]
fn negative_alpha_exits_at_material() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["modulus", "--alpha", "-3", "--section", "circle:d=6.35e-3", "--density", "2721.9"];
    assert_eq!(code(&ewsindy(&args, dir.path())), 7);
}

#[test]
fn discovery_only_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &config(small_field(), ""));
    let out = ewsindy(&["--config", cfg.to_str().unwrap(), "pipeline"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = read_json(&dir.path().join("r.json"));
    assert!(r["failure"].is_null());
    assert_eq!(r["discovery"]["support"], serde_json::json!(["w_xxxx"]));
    for key in ["simulation", "ensemble", "modulus"] {
        assert!(r[key].is_null(), "{key}: {}", r[key]);
    }
}

#[test]
fn reports_are_reproducible_apart_from_timing() {
    let dir = tempfile::tempdir().unwrap();
    let extra = format!(r#"{MATERIAL}, "ensemble": {{"max_ds": 2}}, "simulation": {{}}"#);
    let cfg = write_config(dir.path(), &config(small_field(), &extra));
    let run = |name: &str| {
        let out = ewsindy(&["--config", cfg.to_str().unwrap(), "pipeline", "--report", name], dir.path());
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        let cut = text.find("\"timing\"").expect("timing block");
        (text[..cut].to_string(), read_json(&dir.path().join(name)))
    };
    let (a, full) = run("a.json");
    let (b, _) = run("b.json");
    assert_eq!(a, b);

    let alpha = full["discovery"]["c"].as_array().unwrap().iter().filter_map(Value::as_f64).find(|c| *c != 0.0);
    let e = full["modulus"]["modulus"].as_f64().unwrap();
    assert!((e / 6.9e10 - 1.0).abs() < 0.01, "E = {e:e}, c = {alpha:?}");
    assert_eq!(full["ensemble"]["runs"].as_array().unwrap().len(), 3);
    assert!(full["simulation"]["frobenius_rel"].as_f64().unwrap() < 0.05);
}

#[test]
fn zero_field_gives_degenerate_report() {
    let dir = tempfile::tempdir().unwrap();
    let g = FieldGrid::from_fn((0.0, 5e-4, 80), (0.0, 1.6e-7, 400), |_, _| 0.0).unwrap();
    let path = dir.path().join("zero.txt");
    save_field(&g, &path).unwrap();
    let cfg = write_config(dir.path(), &format!(r#"{{"input": {:?}, "output": {{"report": "r.json"}}}}"#, path));
    let out = ewsindy(&["--config", cfg.to_str().unwrap(), "pipeline"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = read_json(&dir.path().join("r.json"));
    assert_eq!(r["discovery"]["degenerate"], true);
    assert_eq!(r["discovery"]["support"], serde_json::json!([]));
}

#[test]
fn ensemble_writes_per_run_csv() {
    let dir = tempfile::tempdir().unwrap();
    let field = small_field().to_str().unwrap();
    let args = [
        "ensemble", "--in", field, "--window", "1e-4", "2.9e-4", "--max-ds", "3", "--section", "circle:d=6.35e-3",
        "--density", "2721.9", "--out", "e.json",
    ];
    let out = ewsindy(&args, dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(dir.path().join("e.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["d", "i", "alpha", "E", "residual"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 6);
    let pairs: Vec<(usize, usize)> = rows.iter().map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap())).collect();
    assert_eq!(pairs, vec![(1, 1), (2, 1), (2, 2), (3, 1), (3, 2), (3, 3)]);
    for r in &rows {
        let e: f64 = r[3].parse().unwrap();
        assert!((e / 6.9e10 - 1.0).abs() < 0.02, "{e:e}");
    }
    assert_eq!(read_json(&dir.path().join("e.json"))["runs"].as_array().unwrap().len(), 6);
}

#[test]
fn modes_prints_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "modes", "--section", "circle:d=6.35e-3", "--density", "2721.9", "--length", "0.097", "--modulus", "6.9e10",
        "--bc", "pinned-pinned", "--n", "2",
    ];
    let out = ewsindy(&args, dir.path());
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let f: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(f.len(), 2);
    assert!((f[1] / f[0] - 4.0).abs() < 1e-9);
}
