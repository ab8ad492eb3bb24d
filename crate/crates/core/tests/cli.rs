//! End-to-end tests of the `phonon-tls` binary: exit codes, artifact
//! determinism, and the validate subcommand.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_phonon-tls"))
}

fn write(dir: &Path, name: &str, contents: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, contents).unwrap();
    path
}

fn assert_code(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

const RINGDOWN_CONFIG: &str = r#"
experiment = "ringdown"
seed = 7

[system]
n_tls = 1
g_tls_hz = 50e3
delta_tls_hz = 0.0
gamma1_hz = 4e3
gamma2_hz = 2e6
n_th = 0.1
n_max = 10

[sweep]
alpha = 1.0
taus_us = [0.1, 2.0, 4.0, 6.0, 8.0, 10.0, 14.0, 18.0]

[tolerances]
rtol = 1e-7
atol = 1e-11
"#;

#[test]
fn ringdown_run_writes_deterministic_artifacts() {
    let tmp = TempDir::new().unwrap();
    let config = write(tmp.path(), "run.toml", RINGDOWN_CONFIG);
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    for out in [&out_a, &out_b] {
        let out = bin()
            .args(["run", "--config"])
            .arg(&config)
            .arg("--out-dir")
            .arg(out)
            .output()
            .unwrap();
        assert_code(&out, 0);
    }
    for name in ["ringdown.csv", "double_exp_fit.json", "manifest.json"] {
        assert!(out_a.join(name).exists(), "{name} missing");
    }
    // identical config + seed -> byte-identical artifacts (manifest differs
    // only in wall time)
    for name in ["ringdown.csv", "double_exp_fit.json"] {
        let a = fs::read(out_a.join(name)).unwrap();
        let b = fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} not deterministic");
    }
    let csv = fs::read_to_string(out_a.join("ringdown.csv")).unwrap();
    assert!(csv.starts_with("# config_hash="));
    assert!(csv.lines().nth(1).unwrap().starts_with("tau_s,nbar,p0"));

    let fit: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_a.join("double_exp_fit.json")).unwrap())
            .unwrap();
    assert!(fit["config_hash"].is_string());
    assert!(fit["fit"]["values"].is_array());

    // validate --check-artifacts accepts fresh artifacts
    let out = bin()
        .args(["validate", "--config"])
        .arg(&config)
        .arg("--check-artifacts")
        .arg(&out_a)
        .output()
        .unwrap();
    assert_code(&out, 0);

    // and rejects artifacts from a different config
    let other = write(tmp.path(), "other.toml", &RINGDOWN_CONFIG.replace("seed = 7", "seed = 8"));
    let out = bin()
        .args(["validate", "--config"])
        .arg(&other)
        .arg("--check-artifacts")
        .arg(&out_a)
        .output()
        .unwrap();
    assert_code(&out, 2);
}

#[test]
fn malformed_config_exits_2_without_artifacts() {
    let tmp = TempDir::new().unwrap();
    let config = write(tmp.path(), "bad.toml", "experiment = \"ringdown\"\nnot_a_key = 1\n");
    let out_dir = tmp.path().join("out");
    let out = bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out-dir")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_code(&out, 2);
    assert!(!out_dir.exists(), "no partial artifacts on config error");
}

#[test]
fn missing_config_exits_4() {
    let out = bin()
        .args(["run", "--config", "/nonexistent/nope.toml"])
        .output()
        .unwrap();
    assert_code(&out, 4);
}

#[test]
fn validate_reports_truncation_violation() {
    let tmp = TempDir::new().unwrap();
    let config = write(
        tmp.path(),
        "big_alpha.toml",
        &RINGDOWN_CONFIG.replace("alpha = 1.0", "alpha = 3.0"),
    );
    let out = bin()
        .args(["validate", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_code(&out, 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("n_max"), "stderr: {stderr}");
}

#[test]
fn validate_ok_echoes_config() {
    let tmp = TempDir::new().unwrap();
    let config = write(tmp.path(), "run.toml", RINGDOWN_CONFIG);
    let out = bin()
        .args(["validate", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_code(&out, 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.starts_with("OK"));
    assert!(stdout.contains("config_hash = "));
    assert!(stdout.contains("experiment = \"ringdown\""));
}

#[test]
fn validate_reports_dimension_guard() {
    let tmp = TempDir::new().unwrap();
    let config = write(
        tmp.path(),
        "huge.toml",
        &RINGDOWN_CONFIG.replace("n_tls = 1", "n_tls = 12"),
    );
    let out = bin()
        .args(["validate", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_code(&out, 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("guard"), "stderr: {stderr}");
}

#[test]
fn bvd_sweep_reports_resonance() {
    let tmp = TempDir::new().unwrap();
    let config = write(
        tmp.path(),
        "bvd.toml",
        r#"
experiment = "bvd-sweep"

[bvd]
f_start_hz = 2.0e9
f_stop_hz = 2.6e9
n_points = 31
"#,
    );
    let out_dir = tmp.path().join("out");
    let out = bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out-dir")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_code(&out, 0);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("bvd_summary.json")).unwrap())
            .unwrap();
    let fs_hz = summary["series_resonance_hz"].as_f64().unwrap();
    assert!((fs_hz - 2.329e9).abs() < 0.01 * 2.329e9, "f_s {fs_hz}");
    let csv = fs::read_to_string(out_dir.join("bvd_sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + 31);
}

#[test]
fn mc_report_respects_env_out_dir() {
    let tmp = TempDir::new().unwrap();
    let config = write(
        tmp.path(),
        "mc.toml",
        r#"
experiment = "mc-report"
seed = 11

[mc]
probs = [0.5, 0.3, 0.2]
sigmas = [0.02, 0.02, 0.02]
n_iterations = 200
"#,
    );
    let out_dir = tmp.path().join("from_env");
    let out = bin()
        .args(["run", "--config"])
        .arg(&config)
        .env("PHONON_TLS_OUT_DIR", &out_dir)
        .output()
        .unwrap();
    assert_code(&out, 0);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("mc_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["name"], "nbar");
    assert!(report["std_dev"].as_f64().unwrap() > 0.0);

    // --seed overrides the config seed and changes the histogram
    let out_dir2 = tmp.path().join("seeded");
    let out = bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out-dir")
        .arg(&out_dir2)
        .args(["--seed", "99"])
        .output()
        .unwrap();
    assert_code(&out, 0);
    let report2: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir2.join("mc_report.json")).unwrap())
            .unwrap();
    assert_ne!(report["histogram_counts"], report2["histogram_counts"]);
}

#[test]
fn tls_params_pipeline_runs_chain() {
    let tmp = TempDir::new().unwrap();
    let config = write(
        tmp.path(),
        "tls.toml",
        r#"
experiment = "tls-params"
seed = 3

[material]
rho = 4700.0
v = 4000.0
p0 = 1e45
delta0 = 5.623413251903491e-5
volume_m3 = 2e-19
gamma2_hz = 660e3
xi_zpf = 1.6e-9
n_samples = 500
"#,
    );
    let out_dir = tmp.path().join("out");
    let out = bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out-dir")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_code(&out, 0);
    let params: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("tls_params.json")).unwrap())
            .unwrap();
    let g_hz = params["g_tls_hz"].as_f64().unwrap();
    assert!((g_hz - 90e3).abs() < 0.05 * 90e3, "g {g_hz}");
    let n = params["n_tls_estimate"].as_f64().unwrap();
    assert!((0.5..1.5).contains(&n), "N {n}");
    let samples = fs::read_to_string(out_dir.join("tls_samples.csv")).unwrap();
    assert_eq!(samples.lines().count(), 2 + 500);
}

#[test]
fn ramsey_fit_pipeline_recovers_distribution() {
    let tmp = TempDir::new().unwrap();
    // synthesize a known signal and feed it back through the CLI
    let pn = [0.1, 0.25, 0.3, 0.2, 0.1, 0.05];
    let omega0 = std::f64::consts::TAU * 25e6;
    let chi = -std::f64::consts::TAU * 0.74e6;
    let kappa = 2.0e5;
    let times: Vec<f64> = (0..1200).map(|i| i as f64 * 8e-9).collect();
    let signal =
        phonon_tls::readout::synthesize_ramsey(&pn, omega0, chi, kappa, &[0.0], &times).unwrap();
    let mut csv = String::from("time_s,signal\n");
    for (t, v) in signal.times().iter().zip(signal.values()) {
        csv.push_str(&format!("{t},{v}\n"));
    }
    let data = write(tmp.path(), "signal.csv", &csv);

    let config = write(
        tmp.path(),
        "ramsey.toml",
        &format!(
            r#"
experiment = "ramsey-fit"

[ramsey]
n_max = 5
omega0_hz = 25e6
chi_hz = -0.74e6

[io]
input = "{}"
"#,
            data.display()
        ),
    );
    let out_dir = tmp.path().join("out");
    let out = bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out-dir")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_code(&out, 0);
    let result: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("ramsey_fit.json")).unwrap())
            .unwrap();
    let probs = result["pn"].as_array().unwrap();
    for (got, want) in probs.iter().zip(pn.iter()) {
        assert!((got.as_f64().unwrap() - want).abs() < 1e-3);
    }
}

#[test]
fn interferometry_pipeline_emits_fringe_fits() {
    let tmp = TempDir::new().unwrap();
    let config = write(
        tmp.path(),
        "ifm.toml",
        r#"
experiment = "interferometry"

[system]
n_tls = 1
g_tls_hz = 100e3
delta_tls_hz = 0.0
gamma1_hz = 4e3
gamma2_hz = 2e6
n_th = 0.0
n_max = 15

[sweep]
alpha = 0.8
taus_us = [0.001, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0]
n_phis = 12

[tolerances]
rtol = 1e-7
"#,
    );
    let out_dir = tmp.path().join("out");
    let out = bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out-dir")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_code(&out, 0);
    let csv = fs::read_to_string(out_dir.join("interferometry.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + 7 * 12);
    let fits: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("interference_fits.json")).unwrap())
            .unwrap();
    assert_eq!(fits["fits"].as_array().unwrap().len(), 7);
    let t2m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("t2m_fit.json")).unwrap()).unwrap();
    assert!(t2m["fit"]["values"].is_array());
}
