use std::ffi::{CStr, CString};
use std::net::IpAddr;
use std::path::Path;
use std::process::Command;
use std::ptr;

use iotguard::autoencoder::{AutoencoderModel, Normalizer};
use iotguard::calibration::{save_profile, DetectorProfile};
use iotguard::dataset::{Direction, FeatureRecord, MacAddr, PacketEvent};
use iotguard::detector::Monitor;
use iotguard::stats::{FeatureExtractor, FEATURE_COUNT};
use iotguard_ffi::*;

fn last_error() -> String {
    let p = iotg_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn trace() -> Vec<PacketEvent> {
    let device: IpAddr = "192.168.1.10".parse().unwrap();
    let peer: IpAddr = "10.0.0.1".parse().unwrap();
    (0..40)
        .map(|i| {
            let outbound = i % 3 != 0;
            PacketEvent {
                timestamp: 1.0 + 0.013 * i as f64,
                src_mac: MacAddr([2, 0, 0, 0, 0, if outbound { 0x10 } else { 0x20 }]),
                src_ip: if outbound { device } else { peer },
                dst_ip: if outbound { peer } else { device },
                src_port: if i % 7 == 0 {
                    None
                } else {
                    Some(if outbound { 49152 } else { 443 })
                },
                dst_port: if i % 7 == 0 {
                    None
                } else {
                    Some(if outbound { 443 } else { 49152 })
                },
                size: 60 + (i * 37 % 1400) as u32,
                direction: if outbound {
                    Direction::Outbound
                } else {
                    Direction::Inbound
                },
            }
        })
        .collect()
}

fn push(ex: *mut IotgExtractor, e: &PacketEvent, out: &mut [f64]) -> IotgStatus {
    let src = CString::new(e.src_ip.to_string()).unwrap();
    let dst = CString::new(e.dst_ip.to_string()).unwrap();
    let packet = IotgPacket {
        timestamp: e.timestamp,
        src_mac: e.src_mac.0,
        src_ip: src.as_ptr(),
        dst_ip: dst.as_ptr(),
        src_port: e.src_port.map_or(-1, i32::from),
        dst_port: e.dst_port.map_or(-1, i32::from),
        size: e.size,
        direction: match e.direction {
            Direction::Outbound => IotgDirection::Outbound,
            Direction::Inbound => IotgDirection::Inbound,
        },
    };
    unsafe { iotg_extractor_push(ex, &packet, out.as_mut_ptr(), out.len()) }
}

fn write_profile(dir: &Path) -> (DetectorProfile, CString) {
    let model = AutoencoderModel::new(FEATURE_COUNT, 9).unwrap();
    let normalizer = Normalizer::from_bounds(vec![0.0; FEATURE_COUNT], vec![1500.0; FEATURE_COUNT]).unwrap();
    let profile = DetectorProfile::new(model, normalizer, 0.02, 3, "ffi").unwrap();
    let path = dir.join("profile.json");
    save_profile(&profile, &path).unwrap();
    (profile, CString::new(path.to_str().unwrap()).unwrap())
}

#[test]
fn extractor_matches_library() {
    let ex = iotg_extractor_new();
    let mut reference = FeatureExtractor::new();
    let mut out = vec![0.0; iotg_feature_count()];
    for e in trace() {
        assert_eq!(push(ex, &e, &mut out), IotgStatus::Ok);
        let want = reference.extract(&e).unwrap();
        assert!(want
            .features()
            .iter()
            .zip(&out)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }
    unsafe { iotg_extractor_free(ex) };
}

#[test]
fn extractor_reports_errors() {
    let ex = iotg_extractor_new();
    let events = trace();
    let mut out = vec![0.0; FEATURE_COUNT];
    assert_eq!(push(ex, &events[5], &mut out[..10]), IotgStatus::BufferTooSmall);
    assert!(last_error().contains("115"));
    assert_eq!(push(ex, &events[5], &mut out), IotgStatus::Ok);
    assert_eq!(push(ex, &events[4], &mut out), IotgStatus::Contract);

    let bad = CString::new("not-an-ip").unwrap();
    let packet = IotgPacket {
        timestamp: 9.0,
        src_mac: [0; 6],
        src_ip: bad.as_ptr(),
        dst_ip: bad.as_ptr(),
        src_port: -1,
        dst_port: 70_000,
        size: 60,
        direction: IotgDirection::Inbound,
    };
    assert_eq!(
        unsafe { iotg_extractor_push(ex, &packet, out.as_mut_ptr(), out.len()) },
        IotgStatus::InvalidArgument
    );
    assert!(last_error().contains("not-an-ip"));
    assert_eq!(
        unsafe { iotg_extractor_push(ex, ptr::null(), out.as_mut_ptr(), out.len()) },
        IotgStatus::NullPointer
    );
    unsafe { iotg_extractor_free(ex) };
    unsafe { iotg_extractor_free(ptr::null_mut()) };
}

#[test]
fn missing_profile_is_io_error() {
    let path = CString::new("/nonexistent/profile.json").unwrap();
    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { iotg_profile_load(path.as_ptr(), &mut handle) }, IotgStatus::Io);
    assert!(handle.is_null());
    assert!(last_error().contains("/nonexistent/profile.json"));
    assert_eq!(
        unsafe { iotg_profile_load(ptr::null(), &mut handle) },
        IotgStatus::NullPointer
    );
    assert!(unsafe { iotg_profile_threshold(ptr::null()) }.is_nan());
    assert_eq!(unsafe { iotg_profile_window(ptr::null()) }, 0);
}

#[test]
fn corrupt_profile_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, b"{\"format\": \"something else\"}").unwrap();
    let path = CString::new(path.to_str().unwrap()).unwrap();
    let mut handle = ptr::null_mut();
    let status = unsafe { iotg_profile_load(path.as_ptr(), &mut handle) };
    assert_ne!(status, IotgStatus::Ok);
    assert!(handle.is_null());
}

#[test]
fn monitor_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let (profile, path) = write_profile(dir.path());
    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { iotg_profile_load(path.as_ptr(), &mut handle) }, IotgStatus::Ok);
    assert_eq!(unsafe { iotg_profile_threshold(handle) }, 0.02);
    assert_eq!(unsafe { iotg_profile_window(handle) }, 3);

    let mut monitor = ptr::null_mut();
    assert_eq!(unsafe { iotg_monitor_new(handle, &mut monitor) }, IotgStatus::Ok);
    let mut reference = Monitor::new(&profile);
    let mut extractor = FeatureExtractor::new();
    for e in trace() {
        let record: FeatureRecord = extractor.extract(&e).unwrap();
        let x = record.features();
        let (mut mse, mut flagged) = (0.0, false);
        assert_eq!(
            unsafe { iotg_profile_score(handle, x.as_ptr(), x.len(), &mut mse, &mut flagged) },
            IotgStatus::Ok
        );
        let mut step = IotgStep::default();
        assert_eq!(
            unsafe { iotg_monitor_push(monitor, x.as_ptr(), x.len(), &mut step) },
            IotgStatus::Ok
        );
        let want = reference.step(&record).unwrap();
        assert_eq!(mse.to_bits(), want.flag.mse.value().to_bits());
        assert_eq!(step.mse.to_bits(), want.flag.mse.value().to_bits());
        assert_eq!(flagged, want.flag.anomalous);
        assert_eq!(step.flagged, want.flag.anomalous);
        assert_eq!(step.anomalous, want.verdict.anomalous);
        assert_eq!(step.alert, want.alert.is_some());
        assert_eq!(
            (step.vote_count, step.window_fill),
            (want.verdict.vote_count, want.verdict.window_fill)
        );
    }
    let short = [0.0; 3];
    let mut step = IotgStep::default();
    assert_eq!(
        unsafe { iotg_monitor_push(monitor, short.as_ptr(), short.len(), &mut step) },
        IotgStatus::Contract
    );
    unsafe {
        iotg_profile_free(handle);
        iotg_monitor_free(monitor);
    }
}

#[test]
fn c_program_links_and_runs() {
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let source = dir.path().join("smoke.c");
    std::fs::write(
        &source,
        r#"#include "iotguard.h"
int main(void) {
    IotgExtractor *ex = iotg_extractor_new();
    double out[115];
    IotgPacket p = {1.0, {2, 0, 0, 0, 0, 16}, "192.168.1.10", "10.0.0.1", 49152, 443, 300, IOTG_DIRECTION_OUTBOUND};
    IotgStatus s = iotg_extractor_push(ex, &p, out, iotg_feature_count());
    iotg_extractor_free(ex);
    return s == IOTG_STATUS_OK ? 0 : 1;
}
"#,
    )
    .unwrap();
    // The test binary lives in <target>/<profile>/deps; the C libraries one level up.
    let lib_dir = std::env::current_exe()
        .unwrap()
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .to_path_buf();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(&include)
        .arg(&source)
        .arg("-L")
        .arg(&lib_dir)
        .args(["-liotguard_ffi", "-o"])
        .arg(&exe)
        .status()
        .expect("a C compiler is installed");
    assert!(status.success());
    let run = Command::new(&exe).env("LD_LIBRARY_PATH", &lib_dir).status().unwrap();
    assert!(run.success());
}
