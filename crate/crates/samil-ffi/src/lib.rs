//! C ABI over the samil engine. Handles are opaque, every call returns a
//! status code, and the last failure's text is kept per thread.
//!
//! Contract: pointers passed in must be valid for the call; strings are
//! NUL-terminated UTF-8; any pointer returned by a handle accessor lives
//! exactly as long as its handle. Nothing here is panic-transparent — a
//! panic is caught and reported as `SAMIL_ERR_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use samil::autodiff::load_checkpoint;
use samil::error::Error;
use samil::harness::config::ExperimentConfig;
use samil::harness::metrics::balanced_accuracy;
use samil::model::MilModel;
use samil::synth::{load_dataset, DatasetBundle, SyntheticStudy};

// ── Status codes ──

pub const SAMIL_OK: i32 = 0;
/// A required pointer argument was null.
pub const SAMIL_ERR_NULL: i32 = 1;
/// A string argument was not valid UTF-8.
pub const SAMIL_ERR_UTF8: i32 = 2;
pub const SAMIL_ERR_IO: i32 = 3;
pub const SAMIL_ERR_FORMAT: i32 = 4;
pub const SAMIL_ERR_CONFIG: i32 = 5;
pub const SAMIL_ERR_DOMAIN: i32 = 6;
pub const SAMIL_ERR_SHAPE: i32 = 7;
pub const SAMIL_ERR_NONFINITE: i32 = 8;
pub const SAMIL_ERR_DEGENERATE: i32 = 9;
/// An internal panic was caught at the boundary.
pub const SAMIL_ERR_PANIC: i32 = 10;

fn code_for(e: &Error) -> i32 {
    match e {
        Error::Shape { .. } => SAMIL_ERR_SHAPE,
        Error::NonFinite(_) => SAMIL_ERR_NONFINITE,
        Error::Domain(_) => SAMIL_ERR_DOMAIN,
        Error::Config(_) => SAMIL_ERR_CONFIG,
        Error::DegenerateAttention => SAMIL_ERR_DEGENERATE,
        Error::Format { .. } => SAMIL_ERR_FORMAT,
        Error::Io { .. } => SAMIL_ERR_IO,
    }
}

// ── Last-error text ──

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).expect("NULs stripped");
    });
}

fn fail(e: &Error) -> i32 {
    use std::error::Error as _;
    let mut text = e.to_string();
    let mut src = e.source();
    while let Some(s) = src {
        text.push_str(": ");
        text.push_str(&s.to_string());
        src = s.source();
    }
    set_error(&text);
    code_for(e)
}

/// Text of the last failure on this thread; empty string if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn samil_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Crate version as a static string.
#[no_mangle]
pub extern "C" fn samil_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

// ── Handles ──

/// A loaded dataset (opaque).
pub struct SamilDataset {
    bundle: DatasetBundle,
    fingerprint: CString,
}

/// A trained model ready for prediction (opaque).
pub struct SamilModel {
    model: MilModel,
}

fn guarded(op: impl FnOnce() -> i32) -> i32 {
    match catch_unwind(AssertUnwindSafe(op)) {
        Ok(code) => code,
        Err(_) => {
            set_error("internal panic caught at the FFI boundary");
            SAMIL_ERR_PANIC
        }
    }
}

/// # Safety
/// `ptr` must be non-null and NUL-terminated.
unsafe fn cstr<'a>(ptr: *const c_char) -> Result<&'a str, i32> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(SAMIL_ERR_NULL);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        SAMIL_ERR_UTF8
    })
}

unsafe fn deref<'a, T>(ptr: *const T) -> Result<&'a T, i32> {
    match ptr.as_ref() {
        Some(r) => Ok(r),
        None => {
            set_error("null handle argument");
            Err(SAMIL_ERR_NULL)
        }
    }
}

fn split_of(ds: &SamilDataset, split: i32) -> Result<&[SyntheticStudy], i32> {
    let s = match split {
        0 => &ds.bundle.train,
        1 => &ds.bundle.val,
        2 => &ds.bundle.test,
        3 => &ds.bundle.unlabeled,
        other => {
            set_error(&format!("unknown split code {other} (0 train, 1 val, 2 test, 3 unlabeled)"));
            return Err(SAMIL_ERR_DOMAIN);
        }
    };
    Ok(s)
}

fn study_of<'a>(ds: &'a SamilDataset, split: i32, index: usize) -> Result<&'a SyntheticStudy, i32> {
    let studies = split_of(ds, split)?;
    studies.get(index).ok_or_else(|| {
        set_error(&format!("study index {index} out of range ({} studies)", studies.len()));
        SAMIL_ERR_DOMAIN
    })
}

// ── Dataset calls ──

/// Opens a dataset file. On success stores a fresh handle in `out`.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn samil_dataset_open(
    path: *const c_char,
    out: *mut *mut SamilDataset,
) -> i32 {
    guarded(|| {
        if out.is_null() {
            set_error("null out-pointer");
            return SAMIL_ERR_NULL;
        }
        let path = match cstr(path) {
            Ok(p) => p,
            Err(code) => return code,
        };
        match load_dataset(Path::new(path)) {
            Ok(bundle) => {
                let fingerprint =
                    CString::new(bundle.fingerprint.clone()).expect("hex digest has no NUL");
                *out = Box::into_raw(Box::new(SamilDataset { bundle, fingerprint }));
                SAMIL_OK
            }
            Err(e) => fail(&e),
        }
    })
}

/// Frees a dataset handle; a null pointer is a no-op.
///
/// # Safety
/// `ds` must be a pointer from `samil_dataset_open`, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn samil_dataset_free(ds: *mut SamilDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Dataset fingerprint as hex; the pointer lives as long as the handle.
///
/// # Safety
/// `ds` must be a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn samil_dataset_fingerprint(ds: *const SamilDataset) -> *const c_char {
    match ds.as_ref() {
        Some(d) => d.fingerprint.as_ptr(),
        None => std::ptr::null(),
    }
}

/// Number of studies in a split (0 train, 1 val, 2 test, 3 unlabeled).
///
/// # Safety
/// `ds` must be a live dataset handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn samil_dataset_split_len(
    ds: *const SamilDataset,
    split: i32,
    out: *mut usize,
) -> i32 {
    guarded(|| {
        let (ds, out) = match (deref(ds), out.is_null()) {
            (Ok(d), false) => (d, out),
            (Err(code), _) => return code,
            (_, true) => {
                set_error("null out-pointer");
                return SAMIL_ERR_NULL;
            }
        };
        match split_of(ds, split) {
            Ok(s) => {
                *out = s.len();
                SAMIL_OK
            }
            Err(code) => code,
        }
    })
}

/// Instance count of one study.
///
/// # Safety
/// `ds` must be a live dataset handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn samil_dataset_study_k(
    ds: *const SamilDataset,
    split: i32,
    index: usize,
    out: *mut usize,
) -> i32 {
    guarded(|| {
        let ds = match deref(ds) {
            Ok(d) => d,
            Err(code) => return code,
        };
        if out.is_null() {
            set_error("null out-pointer");
            return SAMIL_ERR_NULL;
        }
        match study_of(ds, split, index) {
            Ok(study) => {
                *out = study.k();
                SAMIL_OK
            }
            Err(code) => code,
        }
    })
}

// ── Model calls ──

/// Loads a trained checkpoint. `experiment_toml` may be null for default
/// settings; otherwise it must name the experiment file the checkpoint was
/// trained under (the model shape comes from it).
///
/// # Safety
/// Strings must be valid or null as documented; `ds` must be a live handle;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn samil_model_open(
    checkpoint: *const c_char,
    experiment_toml: *const c_char,
    ds: *const SamilDataset,
    out: *mut *mut SamilModel,
) -> i32 {
    guarded(|| {
        if out.is_null() {
            set_error("null out-pointer");
            return SAMIL_ERR_NULL;
        }
        let ckpt = match cstr(checkpoint) {
            Ok(p) => p,
            Err(code) => return code,
        };
        let ds = match deref(ds) {
            Ok(d) => d,
            Err(code) => return code,
        };
        let cfg = if experiment_toml.is_null() {
            ExperimentConfig::default()
        } else {
            let path = match cstr(experiment_toml) {
                Ok(p) => p,
                Err(code) => return code,
            };
            match ExperimentConfig::from_toml_path(Path::new(path)) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            }
        };
        let input_dim = ds.bundle.config.input_dim();
        let model_cfg = match cfg.model_config(input_dim) {
            Ok(c) => c,
            Err(e) => return fail(&e),
        };
        let ck = match load_checkpoint(Path::new(ckpt)) {
            Ok(c) => c,
            Err(e) => return fail(&e),
        };
        match MilModel::from_params(model_cfg, ck.params) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(SamilModel { model }));
                SAMIL_OK
            }
            Err(e) => fail(&e),
        }
    })
}

/// Frees a model handle; a null pointer is a no-op.
///
/// # Safety
/// `m` must be a pointer from `samil_model_open`, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn samil_model_free(m: *mut SamilModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Classifies one study: writes three class probabilities and the argmax
/// label.
///
/// # Safety
/// Handles must be live; `probs_out` must hold 3 doubles; `label_out` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn samil_model_predict(
    m: *const SamilModel,
    ds: *const SamilDataset,
    split: i32,
    index: usize,
    probs_out: *mut f64,
    label_out: *mut i32,
) -> i32 {
    guarded(|| {
        let (m, ds) = match (deref(m), deref(ds)) {
            (Ok(m), Ok(d)) => (m, d),
            (Err(code), _) | (_, Err(code)) => return code,
        };
        if probs_out.is_null() || label_out.is_null() {
            set_error("null out-pointer");
            return SAMIL_ERR_NULL;
        }
        let study = match study_of(ds, split, index) {
            Ok(s) => s,
            Err(code) => return code,
        };
        match m.model.predict(&study.bag_tensor()) {
            Ok(pred) => {
                for (i, &p) in pred.probs.iter().enumerate() {
                    *probs_out.add(i) = p;
                }
                *label_out = pred.predicted_label() as i32;
                SAMIL_OK
            }
            Err(e) => fail(&e),
        }
    })
}

/// Writes the final pooling attention of one study into `buf`. `k_out`
/// always receives the instance count; a too-small buffer is a shape error.
///
/// # Safety
/// Handles must be live; `buf` must hold `buf_len` doubles; `k_out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn samil_model_attention(
    m: *const SamilModel,
    ds: *const SamilDataset,
    split: i32,
    index: usize,
    buf: *mut f64,
    buf_len: usize,
    k_out: *mut usize,
) -> i32 {
    guarded(|| {
        let (m, ds) = match (deref(m), deref(ds)) {
            (Ok(m), Ok(d)) => (m, d),
            (Err(code), _) | (_, Err(code)) => return code,
        };
        if buf.is_null() || k_out.is_null() {
            set_error("null out-pointer");
            return SAMIL_ERR_NULL;
        }
        let study = match study_of(ds, split, index) {
            Ok(s) => s,
            Err(code) => return code,
        };
        *k_out = study.k();
        if buf_len < study.k() {
            set_error(&format!("attention buffer holds {buf_len} values, study has {}", study.k()));
            return SAMIL_ERR_SHAPE;
        }
        match m.model.predict(&study.bag_tensor()) {
            Ok(pred) => {
                for (i, &a) in pred.final_attention().iter().enumerate() {
                    *buf.add(i) = a;
                }
                SAMIL_OK
            }
            Err(e) => fail(&e),
        }
    })
}

/// Balanced accuracy of the model over a labeled split.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn samil_model_balanced_accuracy(
    m: *const SamilModel,
    ds: *const SamilDataset,
    split: i32,
    out: *mut f64,
) -> i32 {
    guarded(|| {
        let (m, ds) = match (deref(m), deref(ds)) {
            (Ok(m), Ok(d)) => (m, d),
            (Err(code), _) | (_, Err(code)) => return code,
        };
        if out.is_null() {
            set_error("null out-pointer");
            return SAMIL_ERR_NULL;
        }
        let studies = match split_of(ds, split) {
            Ok(s) => s,
            Err(code) => return code,
        };
        let mut y_true = Vec::with_capacity(studies.len());
        let mut y_pred = Vec::with_capacity(studies.len());
        for study in studies {
            let Some(label) = study.label else {
                set_error("split has unlabeled studies; balanced accuracy needs labels");
                return SAMIL_ERR_DOMAIN;
            };
            y_true.push(label);
            match m.model.predict(&study.bag_tensor()) {
                Ok(pred) => y_pred.push(pred.predicted_label() as u8),
                Err(e) => return fail(&e),
            }
        }
        match balanced_accuracy(&y_true, &y_pred) {
            Ok(acc) => {
                *out = acc;
                SAMIL_OK
            }
            Err(e) => fail(&e),
        }
    })
}
