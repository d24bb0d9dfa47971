//! C ABI for the iotguard detector.
//!
//! Every fallible call returns an [`IotgStatus`]; on failure the message is
//! available from [`iotg_last_error`] on the same thread. Handles are opaque
//! and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::net::IpAddr;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use iotguard::calibration::{load_profile, DetectorProfile};
use iotguard::dataset::{Direction, MacAddr, PacketEvent};
use iotguard::detector::MajorityVoter;
use iotguard::stats::{FeatureExtractor, FEATURE_COUNT};
use iotguard::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IotgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Schema = 5,
    Contract = 6,
    VersionMismatch = 7,
    Corrupt = 8,
    BufferTooSmall = 9,
    Internal = 10,
}

impl From<&Error> for IotgStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Io { .. } => IotgStatus::Io,
            Error::Parse { .. } => IotgStatus::Parse,
            Error::Schema { .. } => IotgStatus::Schema,
            Error::Contract(_) => IotgStatus::Contract,
            Error::VersionMismatch { .. } => IotgStatus::VersionMismatch,
            Error::Corrupt(_) => IotgStatus::Corrupt,
            Error::Config(_) | Error::InsufficientData(_) => IotgStatus::InvalidArgument,
            Error::Divergence { .. } | Error::WindowSearch { .. } | Error::Sink(_) => IotgStatus::Internal,
        }
    }
}

/// Packet direction relative to the monitored device.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IotgDirection {
    Outbound = 0,
    Inbound = 1,
}

/// One captured packet. Addresses are NUL-terminated IPv4 or IPv6 text;
/// a negative port means the protocol has none.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct IotgPacket {
    pub timestamp: f64,
    pub src_mac: [u8; 6],
    pub src_ip: *const c_char,
    pub dst_ip: *const c_char,
    pub src_port: i32,
    pub dst_port: i32,
    pub size: u32,
    pub direction: IotgDirection,
}

/// Outcome of one monitored instance.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IotgStep {
    pub mse: f64,
    /// Instance reconstruction error above the profile threshold.
    pub flagged: bool,
    /// Majority verdict over the voting window.
    pub anomalous: bool,
    /// Verdict turned anomalous on this instance.
    pub alert: bool,
    pub vote_count: usize,
    pub window_fill: usize,
}

/// Calibrated detector loaded from a profile file.
pub struct IotgProfile {
    inner: DetectorProfile,
}

/// Per-packet feature extractor holding its damped-statistic state.
pub struct IotgExtractor {
    inner: FeatureExtractor,
}

/// Scorer plus majority voter over one stream.
pub struct IotgMonitor {
    profile: DetectorProfile,
    voter: MajorityVoter,
    previous: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = CString::new(text).ok());
}

fn fail(status: IotgStatus, message: impl Into<String>) -> IotgStatus {
    set_last_error(message);
    status
}

fn fail_with(e: &Error) -> IotgStatus {
    fail(IotgStatus::from(e), e.to_string())
}

/// Runs `f`, turning a panic into [`IotgStatus::Internal`].
fn guard(f: impl FnOnce() -> IotgStatus) -> IotgStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(IotgStatus::Internal, "internal panic"))
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn iotg_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Number of features per instance.
#[no_mangle]
pub extern "C" fn iotg_feature_count() -> usize {
    FEATURE_COUNT
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn iotg_profile_load(path: *const c_char, out: *mut *mut IotgProfile) -> IotgStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return fail(IotgStatus::NullPointer, "path and out must not be NULL");
        }
        // SAFETY: checked non-null; the caller guarantees NUL termination.
        let Ok(path) = unsafe { CStr::from_ptr(path) }.to_str() else {
            return fail(IotgStatus::InvalidArgument, "path is not UTF-8");
        };
        match load_profile(path) {
            Ok(inner) => {
                // SAFETY: checked non-null above.
                unsafe { *out = Box::into_raw(Box::new(IotgProfile { inner })) };
                IotgStatus::Ok
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// # Safety
/// `profile` must come from [`iotg_profile_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn iotg_profile_free(profile: *mut IotgProfile) {
    if !profile.is_null() {
        // SAFETY: the caller passes a pointer obtained from Box::into_raw.
        drop(unsafe { Box::from_raw(profile) });
    }
}

/// Anomaly threshold, or NaN for a NULL handle.
///
/// # Safety
/// `profile` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn iotg_profile_threshold(profile: *const IotgProfile) -> f64 {
    // SAFETY: NULL or live per the contract.
    unsafe { profile.as_ref() }.map_or(f64::NAN, |p| p.inner.tr_star())
}

/// Voting window length, or 0 for a NULL handle.
///
/// # Safety
/// `profile` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn iotg_profile_window(profile: *const IotgProfile) -> usize {
    // SAFETY: NULL or live per the contract.
    unsafe { profile.as_ref() }.map_or(0, |p| p.inner.ws_star())
}

/// Reconstruction error of one raw feature vector and whether it exceeds
/// the threshold.
///
/// # Safety
/// `features` must point to `len` readable doubles; `mse` and `flagged` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn iotg_profile_score(
    profile: *const IotgProfile,
    features: *const f64,
    len: usize,
    mse: *mut f64,
    flagged: *mut bool,
) -> IotgStatus {
    guard(|| {
        if profile.is_null() || features.is_null() || mse.is_null() || flagged.is_null() {
            return fail(IotgStatus::NullPointer, "arguments must not be NULL");
        }
        // SAFETY: checked non-null; the caller guarantees `len` elements.
        let (p, x) = unsafe { (&(*profile).inner, std::slice::from_raw_parts(features, len)) };
        match p.reconstruction_error(x) {
            Ok(e) => {
                // SAFETY: checked non-null above.
                unsafe {
                    *mse = e.value();
                    *flagged = e.value() > p.tr_star();
                }
                IotgStatus::Ok
            }
            Err(e) => fail_with(&e),
        }
    })
}

#[no_mangle]
pub extern "C" fn iotg_extractor_new() -> *mut IotgExtractor {
    Box::into_raw(Box::new(IotgExtractor {
        inner: FeatureExtractor::new(),
    }))
}

/// # Safety
/// `extractor` must come from [`iotg_extractor_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn iotg_extractor_free(extractor: *mut IotgExtractor) {
    if !extractor.is_null() {
        // SAFETY: the caller passes a pointer obtained from Box::into_raw.
        drop(unsafe { Box::from_raw(extractor) });
    }
}

unsafe fn parse_ip(text: *const c_char, field: &str) -> Result<IpAddr, IotgStatus> {
    if text.is_null() {
        return Err(fail(IotgStatus::NullPointer, format!("{field} must not be NULL")));
    }
    // SAFETY: checked non-null; the caller guarantees NUL termination.
    let s = unsafe { CStr::from_ptr(text) }.to_string_lossy();
    s.trim().parse().map_err(|_| {
        fail(
            IotgStatus::InvalidArgument,
            format!("{field} {s:?} is not an IP address"),
        )
    })
}

fn port(p: i32, field: &str) -> Result<Option<u16>, IotgStatus> {
    if p < 0 {
        return Ok(None);
    }
    u16::try_from(p)
        .map(Some)
        .map_err(|_| fail(IotgStatus::InvalidArgument, format!("{field} {p} exceeds 65535")))
}

unsafe fn to_event(packet: &IotgPacket) -> Result<PacketEvent, IotgStatus> {
    Ok(PacketEvent {
        timestamp: packet.timestamp,
        src_mac: MacAddr(packet.src_mac),
        // SAFETY: forwarded from the caller's contract.
        src_ip: unsafe { parse_ip(packet.src_ip, "src_ip") }?,
        dst_ip: unsafe { parse_ip(packet.dst_ip, "dst_ip") }?,
        src_port: port(packet.src_port, "src_port")?,
        dst_port: port(packet.dst_port, "dst_port")?,
        size: packet.size,
        direction: match packet.direction {
            IotgDirection::Outbound => Direction::Outbound,
            IotgDirection::Inbound => Direction::Inbound,
        },
    })
}

/// Updates the statistics with one packet and writes its features to `out`,
/// which must hold [`iotg_feature_count`] doubles. Packets must arrive in
/// timestamp order.
///
/// # Safety
/// `extractor` and `packet` must be live; `out` must point to `out_len`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn iotg_extractor_push(
    extractor: *mut IotgExtractor,
    packet: *const IotgPacket,
    out: *mut f64,
    out_len: usize,
) -> IotgStatus {
    guard(|| {
        if extractor.is_null() || packet.is_null() || out.is_null() {
            return fail(IotgStatus::NullPointer, "arguments must not be NULL");
        }
        if out_len < FEATURE_COUNT {
            return fail(
                IotgStatus::BufferTooSmall,
                format!("output holds {out_len} values, {FEATURE_COUNT} needed"),
            );
        }
        // SAFETY: checked non-null; the caller guarantees the handle is live.
        let (ex, packet) = unsafe { (&mut (*extractor).inner, &*packet) };
        // SAFETY: address pointers are covered by the caller's contract.
        let event = match unsafe { to_event(packet) } {
            Ok(e) => e,
            Err(status) => return status,
        };
        match ex.extract(&event) {
            Ok(record) => {
                // SAFETY: `out` holds at least FEATURE_COUNT doubles.
                let dst = unsafe { std::slice::from_raw_parts_mut(out, FEATURE_COUNT) };
                dst.copy_from_slice(record.features());
                IotgStatus::Ok
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// Creates a monitor that owns a copy of the profile; the profile handle may
/// be freed afterwards.
///
/// # Safety
/// `profile` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn iotg_monitor_new(profile: *const IotgProfile, out: *mut *mut IotgMonitor) -> IotgStatus {
    guard(|| {
        if profile.is_null() || out.is_null() {
            return fail(IotgStatus::NullPointer, "profile and out must not be NULL");
        }
        // SAFETY: checked non-null; live per the contract.
        let profile = unsafe { &(*profile).inner }.clone();
        match MajorityVoter::new(profile.ws_star()) {
            Ok(voter) => {
                // SAFETY: checked non-null above.
                unsafe {
                    *out = Box::into_raw(Box::new(IotgMonitor {
                        profile,
                        voter,
                        previous: false,
                    }))
                };
                IotgStatus::Ok
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// # Safety
/// `monitor` must come from [`iotg_monitor_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn iotg_monitor_free(monitor: *mut IotgMonitor) {
    if !monitor.is_null() {
        // SAFETY: the caller passes a pointer obtained from Box::into_raw.
        drop(unsafe { Box::from_raw(monitor) });
    }
}

/// Scores one feature vector and advances the voting window.
///
/// # Safety
/// `monitor` must be live, `features` must point to `len` readable doubles
/// and `step` must be writable.
#[no_mangle]
pub unsafe extern "C" fn iotg_monitor_push(
    monitor: *mut IotgMonitor,
    features: *const f64,
    len: usize,
    step: *mut IotgStep,
) -> IotgStatus {
    guard(|| {
        if monitor.is_null() || features.is_null() || step.is_null() {
            return fail(IotgStatus::NullPointer, "arguments must not be NULL");
        }
        // SAFETY: checked non-null; the caller guarantees `len` elements.
        let (m, x) = unsafe { (&mut *monitor, std::slice::from_raw_parts(features, len)) };
        let mse = match m.profile.reconstruction_error(x) {
            Ok(e) => e.value(),
            Err(e) => return fail_with(&e),
        };
        let flagged = mse > m.profile.tr_star();
        let verdict = m.voter.push(flagged);
        let alert = verdict.anomalous && !m.previous;
        m.previous = verdict.anomalous;
        // SAFETY: checked non-null above.
        unsafe {
            *step = IotgStep {
                mse,
                flagged,
                anomalous: verdict.anomalous,
                alert,
                vote_count: verdict.vote_count,
                window_fill: verdict.window_fill,
            }
        };
        IotgStatus::Ok
    })
}
