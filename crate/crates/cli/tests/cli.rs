use std::path::Path;
use std::process::Command;

fn sepdd() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sepdd"))
}

fn scene_json(dir: &Path, n: usize, extra: &str) -> std::path::PathBuf {
    let taps: Vec<String> =
        (1..=8).map(|l| format!("{{\"lag\": {l}, \"re\": {}, \"im\": 0.1}}", 0.5 / l as f64)).collect();
    let text = format!(
        "{{\"n_samples\": {n}, \"dt\": 4e-8, \"dpi_amp\": {{\"re\": 10.0, \"im\": 0.0}}, \
         \"clutter_taps\": [{}], \"target_amp\": {{\"re\": 30.0, \"im\": 10.0}}, \
         \"target_delay\": 2e-7, \"target_doppler\": 300.0, \"noise_power\": 1.0, \"seed\": 3{extra}}}",
        taps.join(",")
    );
    let path = dir.join("scene.json");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn simulate_then_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let scene = scene_json(dir.path(), 8192, "");
    let sim = dir.path().join("sim");
    let st = sepdd().args(["simulate", "--config"]).arg(&scene).arg("--out").arg(&sim).status().unwrap();
    assert!(st.success());
    assert_eq!(std::fs::metadata(sim.join("surveillance.bin")).unwrap().len(), 8192 * 16);
    assert_eq!(std::fs::metadata(sim.join("reference.bin")).unwrap().len(), 8200 * 16);

    let settings = dir.path().join("est.json");
    std::fs::write(&settings, r#"{"batches": 4}"#).unwrap();
    let est = dir.path().join("est");
    let out = sepdd()
        .args(["--threads", "1", "estimate", "--method", "both", "--signals"])
        .arg(&sim)
        .arg("--config")
        .arg(&settings)
        .arg("--out")
        .arg(&est)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let tau = report["separable"]["tau_hat"].as_f64().unwrap();
    assert!((tau - 2e-7).abs() < 4e-8, "{tau}");
    assert!(report["baseline2d"]["tau_hat"].is_number());
    assert!(est.join("profile.csv").exists() && est.join("surface.csv").exists());
    let profile_bytes = report["separable"]["profile_bytes"].as_u64().unwrap();
    assert_eq!(profile_bytes, std::fs::metadata(est.join("profile.csv")).unwrap().len());
}

#[test]
fn sep_only_writes_no_surface() {
    let dir = tempfile::tempdir().unwrap();
    let scene = scene_json(dir.path(), 2048, "");
    let sim = dir.path().join("sim");
    assert!(sepdd().args(["simulate", "--seed", "8", "--config"]).arg(&scene).arg("--out").arg(&sim).status().unwrap().success());
    let est = dir.path().join("est");
    let st = sepdd().args(["estimate", "--method", "sep", "--signals"]).arg(&sim).arg("--out").arg(&est).status().unwrap();
    assert!(st.success());
    assert!(est.join("profile.csv").exists() && !est.join("surface.csv").exists());
    let saved: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(sim.join("scene.json")).unwrap()).unwrap();
    assert_eq!(saved["seed"], 8);
}

#[test]
fn invalid_config_fails() {
    let dir = tempfile::tempdir().unwrap();
    let bad = scene_json(dir.path(), 0, "");
    let out = sepdd().args(["simulate", "--config"]).arg(&bad).arg("--out").arg(dir.path()).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_samples"));

    let garbage = dir.path().join("g.json");
    std::fs::write(&garbage, "{not json").unwrap();
    for sub in ["sweep-batches", "sweep-doppler", "localize"] {
        let st = sepdd().args([sub, "--config"]).arg(&garbage).arg("--out").arg(dir.path()).status().unwrap();
        assert!(!st.success(), "{sub}");
    }
    let st = sepdd().args(["sweep-batches", "--trials", "0", "--out"]).arg(dir.path()).status().unwrap();
    assert!(!st.success());
}

#[test]
fn small_sweep_writes_table_and_script() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("sweep.json");
    std::fs::write(
        &spec,
        r#"{"axis": {"kind": "doppler", "n_samples": 2048, "dopplers": [250.0], "batch_counts": [2, 4]},
            "trials": 2, "master_seed": 5,
            "scene": {"order": 8, "tnr_db": 30.0, "target_delay": 2e-7},
            "estimator": {"order": 8}}"#,
    )
    .unwrap();
    let st = sepdd().args(["sweep-doppler", "--trials", "3", "--config"]).arg(&spec).arg("--out").arg(dir.path()).status().unwrap();
    assert!(st.success());
    let csv = std::fs::read_to_string(dir.path().join("sweep_doppler.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("2,1024,2048,250,3,"));
    let gp = std::fs::read_to_string(dir.path().join("sweep_doppler.gp")).unwrap();
    assert!(gp.contains("set logscale y") && gp.contains("sweep_doppler.csv"));
}

#[test]
fn localize_demo_reports_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let demo = dir.path().join("demo.json");
    std::fs::write(
        &demo,
        r#"{"geometry": {"io_pos": [0, 0], "node_pos": [[1000, 0], [-1000, 0], [0, 1000], [0, -1000]], "carrier": 3.77e9, "c": 3e8},
            "target": {"pos": [100, 80], "vel": [10, -5]},
            "scene": {"n_samples": 32768, "tnr_db": 50.0},
            "estimator": {"batches": 8},
            "grid": {"x": [0, 200], "y": [0, 200], "nx": 41, "ny": 41}}"#,
    )
    .unwrap();
    let out = sepdd().args(["localize", "--config"]).arg(&demo).arg("--out").arg(dir.path()).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let pos = r["estimate"]["pos"].as_array().unwrap();
    assert!((pos[0].as_f64().unwrap() - 100.0).abs() <= 10.0 && (pos[1].as_f64().unwrap() - 80.0).abs() <= 10.0);
    assert!(r["surface_bytes_total"].as_u64().unwrap() > r["profile_bytes_total"].as_u64().unwrap());
    assert!(dir.path().join("localize.json").exists());
}
