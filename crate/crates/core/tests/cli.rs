mod common;

use std::process::Command;

use common::config_path;

fn bench() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gci-bench"))
}

fn write(dir: &std::path::Path, name: &str, json: &serde_json::Value) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(json).unwrap()).unwrap();
    p
}

fn small_scalar() -> serde_json::Value {
    serde_json::json!({
        "name": "cli-smoke",
        "system": {"type": "scalar"},
        "horizon": 20,
        "trials": 3,
        "seed": 4,
        "process_noise": [{"weight": 1, "family": "gaussian", "mean": 0, "variance": 1}],
        "measurement_noise": "a",
        "filters": [
            {"name": "ukf", "kind": "ukf"},
            {"name": "gci", "kind": "sr-gci-iukf", "kernel": {"type": "gci", "delta": 1.8, "theta": 15}}
        ]
    })
}

#[test]
fn list_filters_names_every_kind() {
    let out = bench().arg("list-filters").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for kind in gci_ukf::filter::FilterKind::ALL {
        assert!(text.contains(kind.name()), "{kind} missing");
    }
}

#[test]
fn validate_config_accepts_bundled_configs() {
    for name in ["scalar_table4.json", "vehicle_noise_e.json", "vehicle_delta_sweep.json", "power_case_a.json"] {
        let out = bench().arg("validate-config").arg(config_path(name)).output().unwrap();
        assert_eq!(out.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut bad_kernel = small_scalar();
    bad_kernel["filters"][1]["kernel"]["delta"] = serde_json::json!(-1.0);
    let mut bad_noise = small_scalar();
    bad_noise["measurement_noise"] = serde_json::json!("zz");
    let mut no_trials = small_scalar();
    no_trials["trials"] = serde_json::json!(0);
    for (name, json) in [("kernel.json", bad_kernel), ("noise.json", bad_noise), ("trials.json", no_trials)] {
        let p = write(dir.path(), name, &json);
        let out = bench().arg("validate-config").arg(&p).output().unwrap();
        assert_eq!(out.status.code(), Some(2), "{name}");
        let out = bench().arg("run").arg(&p).output().unwrap();
        assert_eq!(out.status.code(), Some(2), "{name}");
    }
    std::fs::write(dir.path().join("broken.json"), "{ not json").unwrap();
    let out = bench().arg("validate-config").arg(dir.path().join("broken.json")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bench().args(["run", "--filters", "nope"]).arg(write(dir.path(), "ok.json", &small_scalar())).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_writes_reports_and_honours_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", &small_scalar());
    let out_dir = dir.path().join("out");
    let out = bench()
        .arg("run")
        .arg(&cfg)
        .args(["--trials", "2", "--seed", "9", "--filters", "gci", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    let echo: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("config_echo.json")).unwrap()).unwrap();
    assert_eq!(echo["trials"], 2);
    assert_eq!(echo["seed"], 9);
    assert_eq!(echo["filters"].as_array().unwrap().len(), 1);
    assert!(summary.to_string().contains("gci"));
    assert!(out_dir.join("timing.json").exists());
}

#[test]
fn divergence_breach_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let mut json = small_scalar();
    json["divergence_threshold"] = serde_json::json!(0.0);
    json["filters"] = serde_json::json!([
        {"name": "tight", "kind": "sr-gci-iukf", "kernel": {"type": "gci", "delta": 1.8, "theta": 15}, "gain_ceiling": 1e-9}
    ]);
    let cfg = write(dir.path(), "div.json", &json);
    let out = bench().arg("run").arg(&cfg).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
