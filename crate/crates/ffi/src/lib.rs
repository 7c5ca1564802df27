//! C ABI over `isac-core`.
//!
//! Scenarios and result bundles are opaque heap handles owned by the caller
//! and released with the matching `*_free` function. Every fallible call
//! returns an [`IsacStatus`]; the message of the last failure on the calling
//! thread is available through [`isac_last_error`]. Panics never cross the
//! boundary.

use isac_core::harness::{emit, parse_scenario, run_experiment, HarnessError, ResultBundle, RunMetadata, Scenario};
use isac_core::numerics::bessel_j;
use isac_core::waveform::count_mode_combinations;
use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IsacStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Validation = 3,
    Runtime = 4,
    Io = 5,
    OutOfRange = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Opaque validated scenario.
pub struct IsacScenario {
    inner: Scenario,
    unknown_fields: Vec<String>,
}

/// Opaque result bundle of one experiment.
pub struct IsacBundle {
    inner: ResultBundle,
    seed: u64,
    wall_time_s: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn fail(status: IsacStatus, message: impl Into<String>) -> IsacStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = message.into());
    status
}

fn harness_status(e: &HarnessError) -> IsacStatus {
    match e {
        HarnessError::Parse { .. } | HarnessError::Validation { .. } => IsacStatus::Validation,
        HarnessError::Runtime { .. } => IsacStatus::Runtime,
        HarnessError::Io(_) => IsacStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> IsacStatus) -> IsacStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(IsacStatus::Panic, "internal panic"),
    }
}

unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, IsacStatus> {
    if p.is_null() {
        return Err(fail(IsacStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| fail(IsacStatus::InvalidUtf8, e.to_string()))
}

/// Copies `s` NUL-terminated into `buf`. With a null `buf` or a short
/// buffer, only `*needed` (bytes including the terminator) is written.
unsafe fn write_str(s: &str, buf: *mut c_char, len: usize, needed: *mut usize) -> IsacStatus {
    let n = s.len() + 1;
    if !needed.is_null() {
        *needed = n;
    }
    if buf.is_null() || len < n {
        return IsacStatus::BufferTooSmall;
    }
    std::ptr::copy_nonoverlapping(s.as_ptr(), buf as *mut u8, s.len());
    *buf.add(s.len()) = 0;
    IsacStatus::Ok
}

/// Copies the last error message of this thread into `buf`.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes; `needed` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn isac_last_error(buf: *mut c_char, len: usize, needed: *mut usize) -> IsacStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    write_str(&msg, buf, len, needed)
}

/// Parses and validates a JSON scenario.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn isac_scenario_from_json(json: *const c_char, out: *mut *mut IsacScenario) -> IsacStatus {
    guard(|| {
        if out.is_null() {
            return fail(IsacStatus::NullPointer, "null output handle");
        }
        let text = match read_str(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match parse_scenario(text, "<ffi>") {
            Ok(l) => {
                *out = Box::into_raw(Box::new(IsacScenario {
                    inner: l.scenario,
                    unknown_fields: l.unknown_fields,
                }));
                IsacStatus::Ok
            }
            Err(e) => fail(harness_status(&e), e.to_string()),
        }
    })
}

/// Number of unknown fields that were ignored while parsing.
///
/// # Safety
/// `scenario` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn isac_scenario_unknown_field_count(scenario: *const IsacScenario) -> usize {
    scenario.as_ref().map_or(0, |s| s.unknown_fields.len())
}

/// Overrides the scenario seed.
///
/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn isac_scenario_set_seed(scenario: *mut IsacScenario, seed: u64) -> IsacStatus {
    match scenario.as_mut() {
        Some(s) => {
            s.inner.seed = seed;
            IsacStatus::Ok
        }
        None => fail(IsacStatus::NullPointer, "null scenario"),
    }
}

/// Releases a scenario handle. Null is ignored.
///
/// # Safety
/// `scenario` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn isac_scenario_free(scenario: *mut IsacScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Runs one experiment and returns its result bundle.
///
/// # Safety
/// `scenario` must be a live handle, `experiment` NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn isac_run_experiment(
    scenario: *const IsacScenario,
    experiment: *const c_char,
    out: *mut *mut IsacBundle,
) -> IsacStatus {
    guard(|| {
        let (Some(s), false) = (scenario.as_ref(), out.is_null()) else {
            return fail(IsacStatus::NullPointer, "null scenario or output handle");
        };
        let id = match read_str(experiment) {
            Ok(t) => t,
            Err(st) => return st,
        };
        let start = std::time::Instant::now();
        match run_experiment(&s.inner, id) {
            Ok(b) => {
                let wall_time_s = start.elapsed().as_secs_f64();
                *out = Box::into_raw(Box::new(IsacBundle {
                    inner: b,
                    seed: s.inner.seed,
                    wall_time_s,
                }));
                IsacStatus::Ok
            }
            Err(e) => fail(harness_status(&e), e.to_string()),
        }
    })
}

/// Number of artifacts in a bundle.
///
/// # Safety
/// `bundle` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn isac_bundle_artifact_count(bundle: *const IsacBundle) -> usize {
    bundle.as_ref().map_or(0, |b| b.inner.artifacts.len())
}

/// File name of artifact `index`, copied as in [`isac_last_error`].
///
/// # Safety
/// `bundle` must be a live handle; `buf`/`needed` as in [`isac_last_error`].
#[no_mangle]
pub unsafe extern "C" fn isac_bundle_artifact_name(
    bundle: *const IsacBundle,
    index: usize,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> IsacStatus {
    let Some(b) = bundle.as_ref() else {
        return fail(IsacStatus::NullPointer, "null bundle");
    };
    match b.inner.artifacts.get(index) {
        Some(a) => write_str(&a.name, buf, len, needed),
        None => fail(IsacStatus::OutOfRange, format!("artifact index {index} out of range")),
    }
}

/// Borrows the bytes of artifact `index`; valid until the bundle is freed.
///
/// # Safety
/// `bundle` must be a live handle; `data` and `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn isac_bundle_artifact_data(
    bundle: *const IsacBundle,
    index: usize,
    data: *mut *const u8,
    len: *mut usize,
) -> IsacStatus {
    let (Some(b), false, false) = (bundle.as_ref(), data.is_null(), len.is_null()) else {
        return fail(IsacStatus::NullPointer, "null bundle or output pointer");
    };
    match b.inner.artifacts.get(index) {
        Some(a) => {
            *data = a.bytes.as_ptr();
            *len = a.bytes.len();
            IsacStatus::Ok
        }
        None => fail(IsacStatus::OutOfRange, format!("artifact index {index} out of range")),
    }
}

/// Writes the bundle, `run.json` and `manifest.json` under `out_dir/<experiment>/`.
///
/// # Safety
/// `bundle` must be a live handle and `out_dir` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn isac_bundle_write(bundle: *const IsacBundle, out_dir: *const c_char) -> IsacStatus {
    guard(|| {
        let Some(b) = bundle.as_ref() else {
            return fail(IsacStatus::NullPointer, "null bundle");
        };
        let dir = match read_str(out_dir) {
            Ok(d) => d,
            Err(s) => return s,
        };
        let meta = RunMetadata {
            experiment: b.inner.experiment.clone(),
            seed: b.seed,
            version: env!("CARGO_PKG_VERSION").into(),
            threads: available_threads(),
            wall_time_s: b.wall_time_s,
            unknown_fields: Vec::new(),
        };
        match emit(&b.inner, &meta, Path::new(dir)) {
            Ok(_) => IsacStatus::Ok,
            Err(e) => fail(harness_status(&e), e.to_string()),
        }
    })
}

fn available_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Releases a bundle handle. Null is ignored.
///
/// # Safety
/// `bundle` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn isac_bundle_free(bundle: *mut IsacBundle) {
    if !bundle.is_null() {
        drop(Box::from_raw(bundle));
    }
}

/// Bessel function of the first kind `J_order(x)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn isac_bessel_j(order: i32, x: f64, out: *mut f64) -> IsacStatus {
    if out.is_null() {
        return fail(IsacStatus::NullPointer, "null output");
    }
    match bessel_j(order, x) {
        Ok(v) => {
            *out = v;
            IsacStatus::Ok
        }
        Err(e) => fail(IsacStatus::OutOfRange, e.to_string()),
    }
}

/// Number of mode combinations `C_slot` for `k` users with `sizes[k]` modes each.
///
/// # Safety
/// `sizes` must be valid for `k` reads and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn isac_mode_combinations(
    n_t: usize,
    sizes: *const usize,
    k: usize,
    slot: usize,
    out: *mut u64,
) -> IsacStatus {
    if sizes.is_null() || out.is_null() {
        return fail(IsacStatus::NullPointer, "null sizes or output");
    }
    let sizes = std::slice::from_raw_parts(sizes, k);
    match count_mode_combinations(n_t, sizes, slot) {
        Ok(c) if c <= u64::MAX as u128 => {
            *out = c as u64;
            IsacStatus::Ok
        }
        Ok(c) => fail(IsacStatus::OutOfRange, format!("C_{slot} = {c} exceeds 64 bits")),
        Err(e) => fail(IsacStatus::Validation, e.to_string()),
    }
}
