use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn iotguard(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iotguard"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

fn write_events(dir: &Path) -> PathBuf {
    let path = dir.join("events.csv");
    fs::write(
        &path,
        "timestamp,src_mac,src_ip,dst_ip,src_port,dst_port,size,direction\n\
         1.000000,02:00:00:00:00:10,192.168.1.10,10.0.0.1,49152,443,300,outbound\n\
         1.010000,02:00:00:00:01:00,10.0.0.1,192.168.1.10,443,49152,1200,inbound\n\
         1.250000,02:00:00:00:00:10,192.168.1.10,10.0.0.1,49152,443,80,outbound\n",
    )
    .unwrap();
    path
}

fn write_synth_config(dir: &Path, name: &str, attacks: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(
        &path,
        format!(r#"{{"duration": 60.0, "seed": 4, "benign": {{"rate": 50.0}}, "attacks": [{attacks}]}}"#),
    )
    .unwrap();
    path
}

#[test]
fn missing_required_flag_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let events = write_events(dir.path());
    let out = dir.path().join("f.csv");
    let o = iotguard(&["extract", p(&events), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--device-ip"));
}

#[test]
fn extract_writes_one_row_per_packet_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let events = write_events(dir.path());
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = iotguard(&["extract", p(&events), "--device-ip", "192.168.1.10", "--out", p(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = fs::read_to_string(&a).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("srcip_100ms_weight,"));
    // 115 features, label family and vector, timestamp.
    assert!(lines.iter().all(|l| l.split(',').count() == 118));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn unreadable_input_exits_with_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("f.csv");
    let o = iotguard(&[
        "extract",
        "/nonexistent/events.csv",
        "--device-ip",
        "192.168.1.10",
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_synth_config(
        dir.path(),
        "synth.json",
        r#"{"onset": 20.0, "duration": 5.0, "label": "mirai:udp", "rate_multiplier": 10.0, "spoof": true}"#,
    );
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        assert!(iotguard(&["synth", "--config", p(&cfg), "--out", p(out)])
            .status
            .success());
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let labels = fs::read_to_string(dir.path().join("a.csv.labels.csv")).unwrap();
    assert!(labels.contains("mirai"));
    let c = dir.path().join("c.csv");
    assert!(iotguard(&["synth", "--config", p(&cfg), "--out", p(&c), "--seed", "5"])
        .status
        .success());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn train_refuses_attack_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_synth_config(
        dir.path(),
        "synth.json",
        r#"{"onset": 20.0, "duration": 5.0, "label": "mirai:syn", "spoof": true}"#,
    );
    let events = dir.path().join("events.csv");
    assert!(iotguard(&["synth", "--config", p(&cfg), "--out", p(&events)])
        .status
        .success());
    let features = dir.path().join("features.csv");
    let labels = dir.path().join("events.csv.labels.csv");
    let o = iotguard(&[
        "extract",
        p(&events),
        "--device-ip",
        "192.168.1.10",
        "--labels",
        p(&labels),
        "--out",
        p(&features),
    ]);
    assert!(o.status.success());
    let profile = dir.path().join("profile.json");
    let o = iotguard(&["train", p(&features), "--out", p(&profile)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!profile.exists());
}

#[test]
fn eval_needs_labels() {
    let dir = tempfile::tempdir().unwrap();
    let events = write_events(dir.path());
    let features = dir.path().join("capture.csv");
    assert!(iotguard(&[
        "extract",
        p(&events),
        "--device-ip",
        "192.168.1.10",
        "--out",
        p(&features)
    ])
    .status
    .success());
    let report = dir.path().join("report.json");
    let o = iotguard(&[
        "eval",
        p(&features),
        "--profile",
        "/nonexistent/profile.json",
        "--out",
        p(&report),
        "--mapping",
        "nbaiot",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let benign_cfg = write_synth_config(d, "benign.json", "");
    let attack_cfg = write_synth_config(
        d,
        "attack.json",
        r#"{"onset": 30.0, "duration": 5.0, "label": "mirai:udp", "rate_multiplier": 10.0, "spoof": true}"#,
    );
    let search = d.join("search.json");
    fs::write(&search, r#"{"eta_grid": [0.05], "max_epochs": 2, "ws_max": 5000}"#).unwrap();

    let benign = d.join("benign.csv");
    let attack = d.join("attack.csv");
    assert!(iotguard(&["synth", "--config", p(&benign_cfg), "--out", p(&benign)])
        .status
        .success());
    assert!(iotguard(&["synth", "--config", p(&attack_cfg), "--out", p(&attack)])
        .status
        .success());

    let train_features = d.join("train.csv");
    assert!(iotguard(&[
        "extract",
        p(&benign),
        "--device-ip",
        "192.168.1.10",
        "--out",
        p(&train_features)
    ])
    .status
    .success());
    let profile = d.join("profile.json");
    let o = iotguard(&[
        "train",
        p(&train_features),
        "--config",
        p(&search),
        "--out",
        p(&profile),
        "--device-id",
        "sim",
    ]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout.contains("split: trn 1000, opt 1000, tst 1000"), "{stdout}");
    assert!(stdout.contains("tr* = "));

    let eval_features = d.join("eval.csv");
    let labels = d.join("attack.csv.labels.csv");
    assert!(iotguard(&[
        "extract",
        p(&attack),
        "--device-ip",
        "192.168.1.10",
        "--labels",
        p(&labels),
        "--out",
        p(&eval_features),
    ])
    .status
    .success());
    let report = d.join("report.json");
    let o = iotguard(&[
        "eval",
        p(&eval_features),
        "--profile",
        p(&profile),
        "--out",
        p(&report),
        "--mapping",
        "canonical.map",
    ]);
    // A missing mapping file is a runtime error; the canonical layout is the default.
    assert_eq!(o.status.code(), Some(1));
    let o = iotguard(&["eval", p(&eval_features), "--profile", p(&profile), "--out", p(&report)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    assert_eq!(json["profile"]["device_id"], "sim");
    assert_eq!(json["counts"]["malicious"], 2500);
    let plot = fs::read_to_string(d.join("report.csv")).unwrap();
    assert!(plot.starts_with("device_id,label,segments,"));

    let alerts = d.join("alerts.ndjson");
    let o = iotguard(&[
        "detect",
        p(&attack),
        "--profile",
        p(&profile),
        "--device-ip",
        "192.168.1.10",
        "--labels",
        p(&labels),
        "--out",
        p(&alerts),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let lines = fs::read_to_string(&alerts).unwrap();
    assert_eq!(lines.lines().count() as u64, summary["alerts"].as_u64().unwrap());
    for line in lines.lines() {
        let alert: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(alert["device_id"], "sim");
    }
}
