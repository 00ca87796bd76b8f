//! C ABI for the depthscope engine.
//!
//! Objects are opaque handles created and destroyed through this API. Every
//! fallible call returns a [`DsStatus`]; on failure the message is kept per
//! thread and read with [`ds_last_error_message`]. Panics never cross the
//! boundary.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use depthscope::dataset::{parse_dataset, Dataset, DatasetFormat};
use depthscope::pipeline::{AnalysisConfig, AnalysisSnapshot, Engine, PipelineError, TauSpec};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Malformed dataset or τ string.
    ParseError = 3,
    InvalidArgument = 4,
    AnalysisError = 5,
    /// Output buffer shorter than the data; nothing was written.
    BufferTooSmall = 6,
    Panic = 7,
}

/// Shared analysis cache. Safe to use from several threads at once.
pub struct DsEngine(Engine);

/// Parsed, validated dataset.
pub struct DsDataset(Arc<Dataset>);

/// Immutable analysis result at one τ.
pub struct DsSnapshot(Arc<AnalysisSnapshot>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: DsStatus, message: impl Into<String>) -> DsStatus {
    set_error(message);
    status
}

fn guard(f: impl FnOnce() -> DsStatus) -> DsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => {
            if status == DsStatus::Ok {
                LAST_ERROR.with(|e| *e.borrow_mut() = None);
            }
            status
        }
        Err(_) => fail(DsStatus::Panic, "internal panic"),
    }
}

fn pipeline_status(e: &PipelineError) -> DsStatus {
    match e {
        PipelineError::Config(_) => DsStatus::InvalidArgument,
        _ => DsStatus::AnalysisError,
    }
}

unsafe fn parse_tau(tau: *const c_char) -> Result<TauSpec, DsStatus> {
    if tau.is_null() {
        return Ok(TauSpec::Infinite);
    }
    let s = CStr::from_ptr(tau)
        .to_str()
        .map_err(|_| fail(DsStatus::InvalidUtf8, "tau is not UTF-8"))?;
    s.parse().map_err(|e: depthscope::pipeline::TauParseError| fail(DsStatus::ParseError, e.to_string()))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ds_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ds_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn ds_engine_new() -> *mut DsEngine {
    Box::into_raw(Box::new(DsEngine(Engine::new())))
}

/// Engine that also caches inclusion matrices under `dir`.
#[no_mangle]
pub unsafe extern "C" fn ds_engine_with_cache_dir(dir: *const c_char, out: *mut *mut DsEngine) -> DsStatus {
    guard(|| {
        if dir.is_null() || out.is_null() {
            return fail(DsStatus::NullPointer, "null argument");
        }
        let Ok(dir) = CStr::from_ptr(dir).to_str() else {
            return fail(DsStatus::InvalidUtf8, "cache dir is not UTF-8");
        };
        *out = Box::into_raw(Box::new(DsEngine(Engine::with_cache_dir(dir))));
        DsStatus::Ok
    })
}

/// Null is accepted.
#[no_mangle]
pub unsafe extern "C" fn ds_engine_free(engine: *mut DsEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Parses a JSON v1 dataset document of `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn ds_dataset_from_json(json: *const u8, len: usize, out: *mut *mut DsDataset) -> DsStatus {
    guard(|| {
        if json.is_null() || out.is_null() {
            return fail(DsStatus::NullPointer, "null argument");
        }
        let bytes = std::slice::from_raw_parts(json, len);
        match parse_dataset(bytes, DatasetFormat::JsonV1) {
            Ok(d) => {
                *out = Box::into_raw(Box::new(DsDataset(Arc::new(d))));
                DsStatus::Ok
            }
            Err(e) => fail(DsStatus::ParseError, e.to_string()),
        }
    })
}

/// Null is accepted.
#[no_mangle]
pub unsafe extern "C" fn ds_dataset_free(dataset: *mut DsDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Number of datapoints, 0 for null.
#[no_mangle]
pub unsafe extern "C" fn ds_dataset_len(dataset: *const DsDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.len())
}

/// Full analysis. `tau` is `"inf"`, `"q:<quantile>"` or a number; null
/// means `"inf"`. `k <= 0` uses the suggested cluster count.
#[no_mangle]
pub unsafe extern "C" fn ds_analyze(
    engine: *const DsEngine,
    dataset: *const DsDataset,
    tau: *const c_char,
    k: i64,
    seed: u64,
    out: *mut *mut DsSnapshot,
) -> DsStatus {
    guard(|| {
        let (Some(engine), Some(dataset)) = (engine.as_ref(), dataset.as_ref()) else {
            return fail(DsStatus::NullPointer, "null argument");
        };
        if out.is_null() {
            return fail(DsStatus::NullPointer, "null argument");
        }
        let tau = match parse_tau(tau) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let config = AnalysisConfig {
            tau,
            seed,
            k: usize::try_from(k).ok().filter(|&k| k > 0),
            ..AnalysisConfig::default()
        };
        match engine.0.analyze(dataset.0.clone(), &config) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(DsSnapshot(s)));
                DsStatus::Ok
            }
            Err(e) => fail(pipeline_status(&e), e.to_string()),
        }
    })
}

/// Same analysis as `snapshot` at a new τ, reusing the cached inclusion
/// matrix of `engine`.
#[no_mangle]
pub unsafe extern "C" fn ds_retune(
    engine: *const DsEngine,
    snapshot: *const DsSnapshot,
    tau: *const c_char,
    out: *mut *mut DsSnapshot,
) -> DsStatus {
    guard(|| {
        let (Some(engine), Some(snapshot)) = (engine.as_ref(), snapshot.as_ref()) else {
            return fail(DsStatus::NullPointer, "null argument");
        };
        if out.is_null() {
            return fail(DsStatus::NullPointer, "null argument");
        }
        let tau = match parse_tau(tau) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match engine.0.retune(&snapshot.0.cache_key, tau) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(DsSnapshot(s)));
                DsStatus::Ok
            }
            Err(e) => fail(pipeline_status(&e), e.to_string()),
        }
    })
}

/// Null is accepted.
#[no_mangle]
pub unsafe extern "C" fn ds_snapshot_free(snapshot: *mut DsSnapshot) {
    if !snapshot.is_null() {
        drop(Box::from_raw(snapshot));
    }
}

/// Number of datapoints, 0 for null.
#[no_mangle]
pub unsafe extern "C" fn ds_snapshot_len(snapshot: *const DsSnapshot) -> usize {
    snapshot.as_ref().map_or(0, |s| s.0.n)
}

/// Resolved τ; infinity when unrestricted, NaN for null.
#[no_mangle]
pub unsafe extern "C" fn ds_snapshot_tau(snapshot: *const DsSnapshot) -> f64 {
    snapshot.as_ref().map_or(f64::NAN, |s| s.0.tau)
}

/// Eigengap cluster-count suggestion, 0 for null.
#[no_mangle]
pub unsafe extern "C" fn ds_snapshot_suggested_k(snapshot: *const DsSnapshot) -> usize {
    snapshot.as_ref().map_or(0, |s| s.0.spectral.suggested_k)
}

unsafe fn copy_out<T: Copy>(values: &[T], out: *mut T, capacity: usize) -> DsStatus {
    if out.is_null() {
        return fail(DsStatus::NullPointer, "null output buffer");
    }
    if capacity < values.len() {
        return fail(
            DsStatus::BufferTooSmall,
            format!("buffer holds {capacity} values, {} needed", values.len()),
        );
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    DsStatus::Ok
}

fn with_snapshot(snapshot: *const DsSnapshot, f: impl FnOnce(&AnalysisSnapshot) -> DsStatus) -> DsStatus {
    guard(|| match unsafe { snapshot.as_ref() } {
        Some(s) => f(&s.0),
        None => fail(DsStatus::NullPointer, "null snapshot"),
    })
}

/// Copies the `n` depth values into `out`.
#[no_mangle]
pub unsafe extern "C" fn ds_snapshot_depths(snapshot: *const DsSnapshot, out: *mut f64, capacity: usize) -> DsStatus {
    with_snapshot(snapshot, |s| copy_out(&s.depths, out, capacity))
}

/// Copies the `n` cluster labels into `out`.
#[no_mangle]
pub unsafe extern "C" fn ds_snapshot_labels(snapshot: *const DsSnapshot, out: *mut u32, capacity: usize) -> DsStatus {
    with_snapshot(snapshot, |s| {
        let labels: Vec<u32> = s.spectral.labels.iter().map(|&l| l as u32).collect();
        copy_out(&labels, out, capacity)
    })
}

/// Copies the heatmap order (a permutation of `0..n`) into `out`.
#[no_mangle]
pub unsafe extern "C" fn ds_snapshot_order(snapshot: *const DsSnapshot, out: *mut u32, capacity: usize) -> DsStatus {
    with_snapshot(snapshot, |s| {
        let order: Vec<u32> = s.spectral.order.iter().map(|&l| l as u32).collect();
        copy_out(&order, out, capacity)
    })
}

/// Copies the `n` color bins (0 = most central) into `out`.
#[no_mangle]
pub unsafe extern "C" fn ds_snapshot_color_bins(snapshot: *const DsSnapshot, out: *mut u8, capacity: usize) -> DsStatus {
    with_snapshot(snapshot, |s| copy_out(&s.coloring.bin, out, capacity))
}

/// Copies `n` outlier flags (1 = outlier) into `out`.
#[no_mangle]
pub unsafe extern "C" fn ds_snapshot_outliers(snapshot: *const DsSnapshot, out: *mut u8, capacity: usize) -> DsStatus {
    with_snapshot(snapshot, |s| {
        let flags: Vec<u8> = s.outliers.is_outlier.iter().map(|&b| u8::from(b)).collect();
        copy_out(&flags, out, capacity)
    })
}

/// Copies layout positions as `x0, y0, x1, y1, …` (`2n` values) into `out`.
#[no_mangle]
pub unsafe extern "C" fn ds_snapshot_positions(snapshot: *const DsSnapshot, out: *mut f64, capacity: usize) -> DsStatus {
    with_snapshot(snapshot, |s| {
        let flat: Vec<f64> = s.layout.positions.iter().flatten().copied().collect();
        copy_out(&flat, out, capacity)
    })
}

/// Copies the `n × n` similarity matrix, row-major in datapoint order.
#[no_mangle]
pub unsafe extern "C" fn ds_snapshot_similarity(snapshot: *const DsSnapshot, out: *mut f64, capacity: usize) -> DsStatus {
    with_snapshot(snapshot, |s| copy_out(s.similarity.values(), out, capacity))
}

/// Snapshot JSON as a new NUL-terminated string; release it with
/// [`ds_string_free`].
#[no_mangle]
pub unsafe extern "C" fn ds_snapshot_to_json(snapshot: *const DsSnapshot, out: *mut *mut c_char) -> DsStatus {
    with_snapshot(snapshot, |s| {
        if out.is_null() {
            return fail(DsStatus::NullPointer, "null argument");
        }
        match CString::new(s.to_json_bytes()) {
            Ok(c) => {
                *out = c.into_raw();
                DsStatus::Ok
            }
            Err(_) => fail(DsStatus::AnalysisError, "snapshot JSON contains NUL"),
        }
    })
}

/// Null is accepted.
#[no_mangle]
pub unsafe extern "C" fn ds_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
