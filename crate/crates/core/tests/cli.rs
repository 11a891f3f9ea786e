use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use twinbeam::config::RunConfig;
use twinbeam::io::SpectrumTable;

fn twinbeam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twinbeam"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_config(dir: &Path, name: &str, cfg: &RunConfig) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, cfg.to_json()).unwrap();
    path
}

fn small_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.synth.num_samples = 1 << 18;
    cfg
}

#[test]
fn spectra_to_stdout_has_twenty_megahertz_row() {
    let o = twinbeam(&["spectra", "--f-min", "0", "--f-max", "100e6", "--points", "1001"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let t = SpectrumTable::from_csv(&String::from_utf8(o.stdout).unwrap()).unwrap();
    let row = t.f_hz.iter().position(|&f| f == 20e6).unwrap();
    assert!((t.s_i.unwrap()[row] - 0.5535).abs() < 5e-4);
    assert!((t.s_p.unwrap()[row] - 0.7113).abs() < 5e-4);
}

#[test]
fn spectra_single_row_and_vacuum() {
    let o = twinbeam(&["spectra", "--f-min", "5e6", "--f-max", "5e6"]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 2);

    let o = twinbeam(&["spectra", "--eta-xi", "0", "--points", "11"]);
    let t = SpectrumTable::from_csv(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert!(t.s_i.unwrap().iter().chain(t.s_p.unwrap().iter()).all(|&s| s == 1.0));
}

#[test]
fn spectra_invalid_range_is_usage_error() {
    let o = twinbeam(&["spectra", "--f-min", "10e6", "--f-max", "1e6"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("range"));
}

#[test]
fn unknown_subcommand_and_flag_exit_one() {
    assert_eq!(code(&twinbeam(&["teleport"])), 1);
    assert_eq!(code(&twinbeam(&["synth", "--sed", "3"])), 1);
    assert_eq!(code(&twinbeam(&["--help"])), 0);
}

#[test]
fn config_schema_violations_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"version": "twinbeam-config/1", "nopo": {"xi": 0.8, "colour": 3}}"#).unwrap();
    let o = twinbeam(&["--config", p(&path), "synth", "--out", p(&dir.path().join("t"))]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));

    std::fs::write(&path, r#"{"version": "twinbeam-config/0"}"#).unwrap();
    let o = twinbeam(&["--config", p(&path), "spectra"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("version"));
}

#[test]
fn non_power_of_two_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.synth.num_samples = 100_000;
    let c = write_config(dir.path(), "c.json", &cfg);
    let o = twinbeam(&["--config", p(&c), "synth", "--out", p(&dir.path().join("t"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("power of two"), "{}", stderr(&o));
}

#[test]
fn double_eta_application_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.amplitude_chain.detection_efficiency = Some(0.88);
    let c = write_config(dir.path(), "c.json", &cfg);
    let o = twinbeam(&["--config", p(&c), "synth", "--out", p(&dir.path().join("t"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("twice"));
}

#[test]
fn synth_reports_seed_and_checksum() {
    let dir = tempfile::tempdir().unwrap();
    let c = write_config(dir.path(), "c.json", &small_config());
    let out = dir.path().join("t.twbm");
    let run = |seed: &str| {
        let o = twinbeam(&["--config", p(&c), "--json", "synth", "--seed", seed, "--out", p(&out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        json(&o)
    };
    let a = run("9");
    let b = run("9");
    let other = run("10");
    assert_eq!(a["sha256"], b["sha256"]);
    assert_ne!(a["sha256"], other["sha256"]);
    assert_eq!(a["seed"], 9);
    assert_eq!(a["channels"].as_array().unwrap().len(), 8);
    assert_eq!(a["num_samples"], 1 << 18);

    let o = twinbeam(&["--config", p(&c), "synth", "--seed", "9", "--out", p(&out)]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("seed 9"));
    assert!(text.contains(a["sha256"].as_str().unwrap()));
}

#[test]
fn analyze_rejects_corrupt_and_out_of_band() {
    let dir = tempfile::tempdir().unwrap();
    let c = write_config(dir.path(), "c.json", &small_config());
    let trace = dir.path().join("t.twbm");
    assert_eq!(code(&twinbeam(&["--config", p(&c), "synth", "--out", p(&trace)])), 0);

    let o = twinbeam(&["--config", p(&c), "analyze", p(&trace), "--f0", "75e6"]);
    assert_eq!(code(&o), 1);

    let bytes = std::fs::read(&trace).unwrap();
    let cut = dir.path().join("cut.twbm");
    std::fs::write(&cut, &bytes[..bytes.len() - 1001]).unwrap();
    let o = twinbeam(&["--config", p(&c), "analyze", p(&cut)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains(&format!("byte offset {}", bytes.len() - 1001)), "{}", stderr(&o));

    let o = twinbeam(&["analyze", p(&dir.path().join("missing.twbm"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn analysis_carries_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let c = write_config(dir.path(), "c.json", &cfg);
    let trace = dir.path().join("t.twbm");
    let s = json(&twinbeam(&["--config", p(&c), "--json", "synth", "--out", p(&trace)]));
    let a = json(&twinbeam(&["--config", p(&c), "--json", "analyze", p(&trace)]));
    assert_eq!(a["trace_sha256"], s["sha256"]);
    assert_eq!(a["config_hash"].as_str().unwrap(), cfg.hash());
    assert_eq!(a["f0_hz"], 20e6);
    assert!(a["amplitude"]["enl_db"].as_f64().unwrap() < -3.0);
}

#[test]
fn certify_examples() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.json");
    let write = |amp: f64, phase: f64| {
        let doc = serde_json::json!({
            "f0_hz": 20e6,
            "amplitude": {"signal_rel_snl": amp, "signal_db": 10.0 * amp.log10()},
            "phase": {"signal_rel_snl": phase, "signal_db": 10.0 * phase.log10()},
        });
        std::fs::write(&path, doc.to_string()).unwrap();
    };
    let db = |x: f64| 10f64.powf(x / 10.0);

    write(db(-1.25), db(-0.60));
    let o = twinbeam(&["--json", "certify", p(&path), "--enl-db", "-3.9"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = json(&o);
    assert!((r["phase_sum_db"].as_f64().unwrap() + 1.07).abs() < 0.01);
    assert!((r["amplitude_diff_db"].as_f64().unwrap() + 2.38).abs() < 0.01);
    assert!((r["sum"].as_f64().unwrap() - 1.36).abs() < 0.005);
    assert_eq!(r["entangled"], true);
    assert_eq!(r["corrections"].as_array().unwrap().len(), 2);

    write(0.552, 0.785);
    let r = json(&twinbeam(&["--json", "certify", p(&path), "--skip-enl-correction"]));
    assert!((r["sum"].as_f64().unwrap() - 1.337).abs() < 1e-9);

    write(1.0, 1.0);
    let o = twinbeam(&["--json", "certify", p(&path), "--enl-db", "-3.9"]);
    assert_eq!(code(&o), 0, "verdict is data, not an error");
    let r = json(&o);
    assert_eq!(r["sum"], 2.0);
    assert_eq!(r["entangled"], false);

    write(db(-5.0), db(-0.6));
    let o = twinbeam(&["certify", p(&path), "--enl-db", "-3.9"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("infeasible"));
}

#[test]
fn fit_recovers_spectra_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("s.csv");
    let o = twinbeam(&["spectra", "--f-min", "1e6", "--f-max", "80e6", "--points", "64", "--out", p(&csv)]);
    assert_eq!(code(&o), 0);
    let report = dir.path().join("fit.json");
    let o = twinbeam(&["--json", "fit", p(&csv), "--out", p(&report)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = json(&o);
    assert_eq!(r, serde_json::from_str::<Value>(&std::fs::read_to_string(&report).unwrap()).unwrap());
    assert!((r["eta_xi"].as_f64().unwrap() / 0.7392 - 1.0).abs() < 1e-6);
    assert!((r["bandwidth_hz"].as_f64().unwrap() / 24.7e6 - 1.0).abs() < 1e-6);
    assert!((r["sigma"].as_f64().unwrap() / 1.38 - 1.0).abs() < 1e-6);
    assert_eq!(r["converged"], true);
    assert_eq!(r["num_points"], 64);
}

#[test]
fn fit_rejects_malformed_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("s.csv");
    std::fs::write(&csv, "f_hz,s_i\n1e6,0.5\n2e6,oops\n").unwrap();
    let o = twinbeam(&["fit", p(&csv)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line"), "{}", stderr(&o));
}

#[test]
fn default_config_round_trips() {
    let o = twinbeam(&["default-config"]);
    assert_eq!(code(&o), 0);
    let cfg = RunConfig::from_json(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(cfg, RunConfig::default());
}

/// synth → analyze → certify with a transparent chain lands on the analytic
/// sum S_I + S_P at 20 MHz.
#[test]
fn pipeline_closure_with_ideal_chain() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    for chain in [&mut cfg.amplitude_chain, &mut cfg.phase_chain] {
        chain.mode_match = 1.0;
        chain.enl = 1e-6;
        chain.excess_phase_noise = 0.0;
    }
    let c = write_config(dir.path(), "c.json", &cfg);
    let trace = dir.path().join("t.twbm");
    let analysis = dir.path().join("a.json");
    assert_eq!(code(&twinbeam(&["--config", p(&c), "synth", "--out", p(&trace)])), 0);
    let o = twinbeam(&["--config", p(&c), "analyze", p(&trace), "--f0", "20e6", "--out", p(&analysis)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = twinbeam(&["--json", "certify", p(&analysis)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = json(&o);
    let sum = r["sum"].as_f64().unwrap();
    assert!((sum - 1.2648).abs() <= 0.03, "sum {sum}");
    assert_eq!(r["entangled"], true);
    assert_eq!(r["config_hash"].as_str().unwrap(), cfg.hash());
}
