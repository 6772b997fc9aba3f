//! End-to-end CLI pipelines over real files: simulate -> handshake ->
//! localize, scene editing, extraction, and usage-error exit codes.

use std::path::Path;
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_roomtwin")
}

fn run_in(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(bin())
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn roomtwin")
}

fn run_ok(dir: &Path, args: &[&str]) -> String {
    let out = run_in(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn chirp_writes_expected_wav() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(dir.path(), &["chirp", "--f0", "11000", "--f1", "19000", "--dur", "0.2", "-o", "c1.wav"]);
    let w = roomtwin::io::read_waveform(dir.path().join("c1.wav")).unwrap();
    assert_eq!(w.len(), 9600);
    assert_eq!(w.sample_rate, 48_000.0);
}

#[test]
fn simulate_handshake_extract_localize_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::write(
        root.join("scene.json"),
        r#"{"shoebox": [4.0, 5.0, 3.0], "default_material": [0.8,0.8,0.8,0.8,0.8,0.8,0.8]}"#,
    )
    .unwrap();
    std::fs::write(
        root.join("session.json"),
        r#"{
  "duration": 2.0,
  "chirp_interval": 0.6,
  "snr_db": 20.0,
  "seed": 5,
  "tx_waypoints": [{"t": 0.0, "pose": {"position": [1.0, 1.0, 1.5], "orientation": [1, 0, 0, 0]}}],
  "rx_waypoints": [{"t": 0.0, "pose": {"position": [3.0, 4.0, 1.5], "orientation": [1, 0, 0, 0]}}],
  "clock_rx": {"offset": 3.5, "drift_ppm": 0.0},
  "max_bounces": 2,
  "channel_rir_duration": 0.1
}"#,
    )
    .unwrap();

    let echo = run_ok(root, &["simulate", "--scene", "scene.json", "--session", "session.json", "-o", "sim"]);
    assert!(echo.contains("\"command\": \"simulate\""), "must echo resolved config");
    assert!(root.join("sim/rx.wav").exists());
    assert!(root.join("sim/truth.jsonl").exists());

    let out = run_ok(root, &["handshake", "sim", "-o", "hs"]);
    assert!(out.contains("paired 3 exchanges"), "got: {out}");
    let records = std::fs::read_to_string(root.join("hs/records.jsonl")).unwrap();
    assert_eq!(records.lines().count(), 3);
    // true ToF for the 3.606 m separation is 10.51 ms
    let first: serde_json::Value = serde_json::from_str(records.lines().next().unwrap()).unwrap();
    let tof = first["tof"].as_f64().unwrap();
    assert!((tof - 0.010513).abs() < 1e-4, "tof {tof}");

    // single-shot extraction from the rx recording around the first response
    run_ok(root, &[
        "extract", "--recording", "sim/rx.wav", "--f0", "50", "--f1", "9000",
        "--arrival", "0.5", "--duration", "0.1", "-o", "one_rir.wav",
    ]);
    assert!(root.join("one_rir.wav").exists());

    // render a reference RIR and ask for the tap list and path list
    run_ok(root, &[
        "render", "--scene", "scene.json", "--tx", "1,1,1.5", "--rx", "3,4,1.5",
        "--bounces", "2", "--duration", "0.1",
        "-o", "ref.wav", "--paths-json", "paths.json",
    ]);
    let paths: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root.join("paths.json")).unwrap()).unwrap();
    assert_eq!(paths.as_array().unwrap().len(), 25); // orders 0..=2 in a shoebox

    // build a small localization dataset and query it
    std::fs::create_dir_all(root.join("ds")).unwrap();
    let mut index = String::new();
    for (i, (x, y)) in [(1.0, 1.0), (3.0, 4.0), (2.0, 2.5), (3.5, 1.5)].iter().enumerate() {
        run_ok(root, &[
            "render", "--scene", "scene.json", "--tx", "1,1,1.5",
            "--rx", &format!("{x},{y},1.5"), "--bounces", "2", "--duration", "0.12",
            "-o", &format!("ds/rir_{i:05}.wav"),
        ]);
        index.push_str(&format!(
            r#"{{"pose_tx": {{"position": [1.0, 1.0, 1.5], "orientation": [1, 0, 0, 0]}}, "pose_rx": {{"position": [{x}, {y}, 1.5], "orientation": [1, 0, 0, 0]}}, "rir": "rir_{i:05}.wav", "onset": 0.0}}"#,
        ));
        index.push('\n');
    }
    std::fs::write(root.join("ds/samples.jsonl"), index).unwrap();
    run_ok(root, &["localize", "build", "--dataset", "ds", "--duration", "0.12", "-o", "db.bin"]);
    run_ok(root, &[
        "localize", "augment", "--db", "db.bin", "--scene", "scene.json",
        "--lo", "0.5,0.5,1.5", "--hi", "3.5,4.5,1.5", "--counts", "5,5,1",
        "-o", "db_aug.bin",
    ]);
    let q = run_ok(root, &["localize", "query", "--db", "db_aug.bin", "--query", "ds/rir_00002.wav", "-k", "3"]);
    let pos_line = q.lines().last().unwrap();
    let v: serde_json::Value = serde_json::from_str(pos_line).unwrap();
    let p = v["position"].as_array().unwrap();
    let err = ((p[0].as_f64().unwrap() - 2.0).powi(2)
        + (p[1].as_f64().unwrap() - 2.5).powi(2)
        + (p[2].as_f64().unwrap() - 1.5).powi(2))
    .sqrt();
    assert!(err < 0.5, "query landed {err} m away");
}

#[test]
fn edit_pipeline_rewrites_scene() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::write(
        root.join("scene.json"),
        r#"{"shoebox": [4.0, 5.0, 3.0], "default_material": [0.7,0.7,0.7,0.7,0.7,0.7,0.7]}"#,
    )
    .unwrap();
    std::fs::write(
        root.join("edits.json"),
        r#"[
  {"set_material": {"segment": 0, "bands": [0.95, 0.95, 0.95, 0.95, 0.95, 0.95, 0.95]}},
  {"insert_mesh": {
    "vertices": [[1.5, 2.0, 0.5], [2.5, 2.0, 0.5], [2.5, 3.0, 0.5], [1.5, 3.0, 0.5]],
    "faces": [[0, 1, 2], [0, 2, 3]],
    "bands": [0.3, 0.3, 0.3, 0.3, 0.3, 0.3, 0.3]
  }}
]"#,
    )
    .unwrap();
    run_ok(root, &["edit", "--scene", "scene.json", "--script", "edits.json", "-o", "out", "--name", "edited"]);
    let edited = roomtwin::geometry::Scene::load(root.join("out/edited.json")).unwrap();
    assert_eq!(edited.segments.len(), 7);
    assert!((edited.materials[0].bands[0] - 0.95).abs() < 1e-9);
    assert!((edited.materials[6].bands[0] - 0.3).abs() < 1e-9);
}

#[test]
fn usage_errors_exit_two_runtime_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    // unknown subcommand -> clap usage error, code 2
    let out = run_in(dir.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    // missing scene file -> runtime error, code 1
    let out = run_in(
        dir.path(),
        &["render", "--scene", "missing.json", "--tx", "1,1,1", "--rx", "2,2,2", "-o", "x.wav"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
    // malformed scene JSON -> runtime error, code 1
    std::fs::write(dir.path().join("bad.json"), "{ not json").unwrap();
    let out = run_in(
        dir.path(),
        &["render", "--scene", "bad.json", "--tx", "1,1,1", "--rx", "2,2,2", "-o", "x.wav"],
    );
    assert_eq!(out.status.code(), Some(1));
    // unknown keys in config files are rejected
    std::fs::write(
        dir.path().join("scene.json"),
        r#"{"shoebox": [4,5,3], "default_material": [0.8,0.8,0.8,0.8,0.8,0.8,0.8], "bogus": 1}"#,
    )
    .unwrap();
    let out = run_in(
        dir.path(),
        &["render", "--scene", "scene.json", "--tx", "1,1,1", "--rx", "2,2,2", "-o", "x.wav"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}
