//! End-to-end runs of the binary: files, exit codes, config strictness.

use std::path::Path;
use std::process::{Command, Output};

use lyapunov_oqs::observables::{resonant_level_suite, ResonantLevelParams};
use lyapunov_oqs::quadrature::QuadConfig;

const CHAIN: &str = r#"{
  "system": {
    "hamiltonian": {"tridiagonal": {"onsite": [0.1, -0.2, 0.3], "hopping": [1.0, 0.8]}},
    "statistics": "fermion",
    "epsilon": 0.3,
    "baths": [
      {"site": 0, "beta": 1.5, "mu": 0.4, "spectral": {"kind": "lorentzian", "gamma": 1.0, "center": 0.2, "width": 2.0}},
      {"site": 2, "beta": 0.8, "mu": -0.3, "spectral": {"kind": "wide_band", "gamma": 0.7}}
    ]
  },
  "time_grid": {"t_max": 5, "n_points": 6},
  "two_time": {"t": 2.0, "tau_max": 3, "n_points": 4, "entries": [[0, 0], [0, 2]]},
  "energy_unit": "meV"
}"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lyapunov-oqs")).current_dir(dir).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

/// Data rows of a CSV written by the tool (comment line dropped).
fn rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    assert!(text.starts_with("# lyapunov-oqs "), "missing parameter line in {}", path.display());
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let data = r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect();
    (header, data)
}

#[test]
fn ness_of_the_resonant_level_matches_the_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let p = ResonantLevelParams {
        eps0: 0.3,
        gamma_l: 0.6,
        gamma_r: 0.4,
        beta_l: 1.0,
        beta_r: 2.0,
        mu_l: 0.5,
        mu_r: -0.5,
    };
    write(dir.path(), "rl.json", &format!(r#"{{"resonant_level": {}}}"#, serde_json::to_string(&p).unwrap()));
    let out = run(dir.path(), &["ness", "--config", "rl.json", "--out", "o"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, data) = rows(&dir.path().join("o/ness.csv"));
    assert_eq!(header, ["t", "ReC_0_0", "ImC_0_0", "min_eig", "positivity_defect"]);
    assert_eq!(data.len(), 1);
    let n: f64 = data[0][1].parse().unwrap();
    let suite = resonant_level_suite(p, &QuadConfig::default()).unwrap();
    assert!((n - suite.occupation).abs() < 1e-9);

    let out = run(dir.path(), &["resonant-level", "--config", "rl.json", "--out", "o", "--with-naive"]);
    assert!(out.status.success());
    let (header, data) = rows(&dir.path().join("o/resonant_level_two_time.csv"));
    assert_eq!(header.len(), 7);
    assert_eq!(data.len(), 101);
}

#[test]
fn every_subcommand_writes_csv_manifest_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "chain.json", CHAIN);
    for (cmd, file) in [
        ("ness", "ness.csv"),
        ("dynamics", "dynamics.csv"),
        ("two-time", "two_time.csv"),
        ("chain-current", "chain_current.csv"),
        ("conductance", "conductance.csv"),
    ] {
        let out_dir = format!("out-{cmd}");
        let out = run(dir.path(), &[cmd, "--config", "chain.json", "--out", &out_dir, "--with-naive"]);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        let base = dir.path().join(&out_dir);
        let (header, data) = rows(&base.join(file));
        assert!(!data.is_empty() && data.iter().all(|r| r.len() == header.len()));
        let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(base.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["command"], cmd);
        // defaults are echoed
        assert_eq!(manifest["config"]["quad"]["max_intervals"], 200000);
        assert_eq!(manifest["config"]["energy_unit"], "meV");
        let diag: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(base.join("diagnostics.json")).unwrap()).unwrap();
        assert_eq!(diag["status"], "ok");
        assert!(diag["tau_b2"].is_array());
        assert!(base.join("spectrum.csv").exists());
    }
    let (header, data) = rows(&dir.path().join("out-dynamics/dynamics.csv"));
    assert_eq!(header.len(), 1 + 12 + 2);
    assert_eq!(data.len(), 6);
    let (header, _) = rows(&dir.path().join("out-two-time/two_time.csv"));
    assert_eq!(header, ["tau", "ReC_0_0", "ImC_0_0", "ReC_0_2", "ImC_0_2", "naive_ReC_0_0", "naive_ImC_0_0", "naive_ReC_0_2", "naive_ImC_0_2"]);
}

#[test]
fn level_flag_overrides_the_file() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "chain.json", CHAIN);
    let out = run(dir.path(), &["ness", "--config", "chain.json", "--level", "l2", "--quad-tol", "1e-9", "--out", "o"]);
    assert!(out.status.success());
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("o/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["level"], "l2");
    assert_eq!(manifest["config"]["quad"]["abs_tol"], 1e-9);
}

#[test]
fn config_errors_exit_2_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (r#"{"time_grid": {"t_max": 5, "npoints": 3}}"#, "npoints"),
        (r#"{"levle": "l1"}"#, "levle"),
        (r#"{"time_grid": {"t_max": "long"}}"#, "time_grid.t_max"),
        (r#"{"system": {"hamiltonian": {"dense": [[[0, 0]]]}, "statistics": "fermion", "epsilon": 1, "bath": []}}"#, "bath"),
        (r#"{"system": "#, "not valid JSON"),
    ];
    for (text, key) in cases {
        write(dir.path(), "bad.json", text);
        let out = run(dir.path(), &["ness", "--config", "bad.json", "--out", "o"]);
        assert_eq!(out.status.code(), Some(2), "{text}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(key), "{text}: {err}");
    }
    // a physical mistake found while building the system is also a config error
    let bad_site = CHAIN.replace(r#""site": 2"#, r#""site": 7"#);
    write(dir.path(), "bad.json", &bad_site);
    assert_eq!(run(dir.path(), &["ness", "--config", "bad.json", "--out", "o"]).status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_lyapunov-oqs"))
        .current_dir(dir.path())
        .env("LYAPOQS_THREADS", "lots")
        .args(["conductance", "--config", "bad.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("LYAPOQS_THREADS"));
}

#[test]
fn numerical_failures_exit_3_with_a_payload() {
    let dir = tempfile::tempdir().unwrap();
    // at ε = 1 the level spacing is comparable to the broadening
    write(dir.path(), "strong.json", &CHAIN.replace(r#""epsilon": 0.3"#, r#""epsilon": 1.0"#));
    let out = run(dir.path(), &["pert-ness", "--config", "strong.json", "--out", "o"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let diag: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("o/diagnostics.json")).unwrap()).unwrap();
    assert_eq!(diag["status"], "error");
    assert_eq!(diag["exit_code"], 3);
    assert_eq!(diag["detail"]["regime"]["accepted"], false);
}

#[test]
fn validate_prints_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["validate", "--level", "all", "--n", "3", "--seed", "7", "--out", "v"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert!(stdout.contains("PASS") && !stdout.contains("FAIL"));
    let (_, data) = rows(&dir.path().join("v/validate.csv"));
    assert_eq!(data.len(), 9);
}

#[test]
fn threads_env_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "chain.json", CHAIN);
    let mut files = Vec::new();
    for (k, threads) in ["1", "3"].iter().enumerate() {
        let out = Command::new(env!("CARGO_BIN_EXE_lyapunov-oqs"))
            .current_dir(dir.path())
            .env("LYAPOQS_THREADS", threads)
            .args(["dynamics", "--config", "chain.json", "--level", "first", "--out", &format!("t{k}")])
            .output()
            .unwrap();
        assert!(out.status.success());
        files.push(std::fs::read(dir.path().join(format!("t{k}/dynamics.csv"))).unwrap());
    }
    assert_eq!(files[0], files[1]);
}
