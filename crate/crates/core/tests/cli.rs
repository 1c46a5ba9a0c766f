use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn tilecast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tilecast")).args(args).output().unwrap()
}

fn scenario(extra: Value) -> Value {
    let mut s = json!({
        "video": {"v_h": 6, "v_v": 3, "m_h": 4, "m_v": 2, "fov_h_deg": 100.0, "fov_v_deg": 100.0, "margin_deg": 15.0},
        "ofdma": {"n_subcarriers": 8, "bandwidth_hz": 39000.0, "noise_w": 1e-9},
        "users": 2,
        "zipf_gamma": 1.0,
        "pathloss_d": 1000.0,
        "n_channel_states": 3,
        "n_view_draws": 3,
        "seed": 4
    });
    s.as_object_mut().unwrap().extend(extra.as_object().unwrap().clone());
    s
}

fn write_scenario(dir: &Path, value: &Value) -> String {
    let path = dir.join("scenario.json");
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path.to_str().unwrap().to_owned()
}

fn power() -> Value {
    scenario(json!({"encoding_rate_bps": 30000.0}))
}

fn quality() -> Value {
    scenario(json!({"budget_w": 10.0}))
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn missing_field_is_an_input_error() {
    let tmp = TempDir::new().unwrap();
    let mut s = power();
    s.as_object_mut().unwrap().remove("users");
    let path = write_scenario(tmp.path(), &s);
    let out = tmp.path().join("out");
    let res = tilecast(&["power-min", "--scenario", &path, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("users"));
    assert!(!out.join("power_min.json").exists());
}

#[test]
fn power_min_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let path = write_scenario(tmp.path(), &power());
    let runs: Vec<(String, String)> = (0..2)
        .map(|r| {
            let out = tmp.path().join(format!("run{r}"));
            let res = tilecast(&["power-min", "--scenario", &path, "--seed", "7", "--out", out.to_str().unwrap()]);
            assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
            (read(&out, "power_min.json"), read(&out, "power_min.csv"))
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    let doc: Value = serde_json::from_str(&runs[0].0).unwrap();
    assert!(doc.to_string().contains("total_power_w"));
}

#[test]
fn zero_budget_is_infeasible() {
    let tmp = TempDir::new().unwrap();
    let path = write_scenario(tmp.path(), &scenario(json!({"budget_w": 0.0})));
    let out = tmp.path().join("out");
    let res = tilecast(&["quality-max", "--scenario", &path, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2), "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn summary_only_skips_state_table() {
    let tmp = TempDir::new().unwrap();
    let path = write_scenario(tmp.path(), &quality());
    let full = tmp.path().join("full");
    let brief = tmp.path().join("brief");
    assert!(tilecast(&["quality-max", "--scenario", &path, "--out", full.to_str().unwrap()])
        .status
        .success());
    assert!(tilecast(&["quality-max", "--scenario", &path, "--summary-only", "--out", brief.to_str().unwrap()])
        .status
        .success());
    assert!(full.join("quality_states.csv").exists());
    assert!(!brief.join("quality_states.csv").exists());
    assert_eq!(read(&full, "quality_max.csv"), read(&brief, "quality_max.csv"));
}

#[test]
fn state_cap_without_sampling_is_refused() {
    let tmp = TempDir::new().unwrap();
    // 60 directions and 12 users give about 2.5e12 unordered states
    let mut s = quality();
    s["video"] = json!({"v_h": 30, "v_v": 15, "m_h": 30, "m_v": 2, "fov_h_deg": 100.0, "fov_v_deg": 100.0, "margin_deg": 15.0});
    s["users"] = json!(12);
    let path = write_scenario(tmp.path(), &s);
    let out = tmp.path().join("out");
    let res = tilecast(&["quality-max", "--scenario", &path, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("--sample"));
}

#[test]
fn verify_zero_trials_and_fault_injection() {
    assert_eq!(tilecast(&["verify", "--trials", "0"]).status.code(), Some(0));
    assert_eq!(tilecast(&["verify", "--trials", "10", "--seed", "2"]).status.code(), Some(0));
    assert_eq!(tilecast(&["verify", "--trials", "5", "--inject-fault"]).status.code(), Some(3));
}

#[test]
fn power_experiment_has_one_row_per_gamma_and_scheme() {
    let tmp = TempDir::new().unwrap();
    let path = write_scenario(tmp.path(), &power());
    let out = tmp.path().join("out");
    let res = tilecast(&[
        "experiment",
        "--scenario",
        &path,
        "--gammas",
        "0,1",
        "--scheme",
        "proposed",
        "--scheme",
        "equal",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = read(&out, "experiment.csv");
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("gamma,scheme,metric,value,stderr,n_samples,seed"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.contains("mean_power_w")));
    let spec: Value = serde_json::from_str(&read(&out, "experiment_spec.json")).unwrap();
    assert_eq!(spec["gammas"], json!([0.0, 1.0]));
}

#[test]
fn quality_experiment_rows_repeat_across_gamma() {
    let tmp = TempDir::new().unwrap();
    let path = write_scenario(tmp.path(), &quality());
    let out = tmp.path().join("out");
    let res = tilecast(&[
        "experiment",
        "--scenario",
        &path,
        "--mode",
        "quality",
        "--gammas",
        "0,0.5,2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = read(&out, "experiment.csv");
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 9);
    for scheme in ["proposed", "unicast", "equal"] {
        let values: Vec<&str> = rows.iter().filter(|r| r[1] == scheme).map(|r| r[3]).collect();
        assert_eq!(values.len(), 3);
        assert!(values.iter().all(|v| *v == values[0]), "{scheme}: {values:?}");
    }
}

#[test]
fn mode_mismatch_is_an_input_error() {
    let tmp = TempDir::new().unwrap();
    let path = write_scenario(tmp.path(), &power());
    let out = tmp.path().join("out");
    let res = tilecast(&["quality-max", "--scenario", &path, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
}
