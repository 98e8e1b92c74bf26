use std::path::Path;
use std::process::{Command, Output};

fn splitnlc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_splitnlc")).args(args).output().expect("binary runs")
}

fn tiny_config(dir: &Path) -> String {
    let path = dir.join("tiny.json");
    let text = r#"{
        "superchannel": { "modulation": { "payload_symbols": 2048 }, "laser": { "linewidth": 0.0 } },
        "link": { "span_counts": [1], "noise_figure_db": null },
        "plans": ["edc", "half"],
        "power": { "min_dbm": 0, "max_dbm": 2, "step_db": 1 },
        "trx": { "lo": { "linewidth": 0.0 } },
        "ssfm": { "steps_per_span": 10 },
        "seeds": { "realizations": 1 }
    }"#;
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn run_prints_one_row_per_channel() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = splitnlc(&["--config", &cfg, "run", "--spans", "1", "--tx-spans", "1", "--power", "0"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("scheme,spans,tx_spans"));
    let snr: f64 = lines[1].split(',').nth(6).unwrap().parse().unwrap();
    assert!(snr > 40.0, "noiseless single span gave {snr} dB");
}

#[test]
fn sweep_then_plot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let csv = dir.path().join("power.csv");
    let csv_arg = csv.to_string_lossy().into_owned();
    let out = splitnlc(&["--config", &cfg, "--out", &csv_arg, "sweep", "power"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = std::fs::read_to_string(&csv).unwrap().lines().count();
    assert_eq!(rows, 1 + 2 * 3);
    assert!(dir.path().join("power.summary.json").exists());

    let plots = dir.path().join("plots");
    let out = splitnlc(&["plot", "--input", &csv_arg, "--out", &plots.to_string_lossy()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for line in String::from_utf8(out.stdout).unwrap().lines() {
        assert!(Path::new(line).exists(), "{line} missing");
    }
}

#[test]
fn bad_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{ "link": { "span_counts": [] } }"#).unwrap();
    let out = splitnlc(&["--config", &path.to_string_lossy(), "run", "--spans", "1", "--power", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("span_counts"));
}

#[test]
fn split_beyond_link_is_rejected() {
    let out = splitnlc(&["run", "--spans", "2", "--tx-spans", "3", "--power", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn predict_needs_a_calibrated_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let csv = dir.path().join("power.csv");
    let csv_arg = csv.to_string_lossy().into_owned();
    assert!(splitnlc(&["--config", &cfg, "--out", &csv_arg, "sweep", "power"]).status.success());
    let summary = dir.path().join("power.summary.json");
    let out = splitnlc(&["predict", "--summary", &summary.to_string_lossy(), "--spans", "10"]);
    assert_eq!(out.status.code(), Some(4));
}
