//! C ABI over the leaning library.
//!
//! Every fallible function returns a [`LeaningStatus`]. On failure the
//! message is kept per thread and can be read with [`leaning_last_error`].
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use leaning::classifier::Classifier;
use leaning::pipeline::{Run, RunConfig};
use leaning::Error;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeaningStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Validation = 4,
    Io = 5,
    Runtime = 6,
    BufferTooSmall = 7,
    OutOfRange = 8,
    Panic = 9,
}

/// A trained tweet classifier.
pub struct LeaningClassifier {
    inner: Classifier,
    labels: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> LeaningStatus {
    match e {
        Error::Config(_) => LeaningStatus::Config,
        Error::Validation(_) | Error::Parse { .. } => LeaningStatus::Validation,
        Error::Io { .. } => LeaningStatus::Io,
        _ => LeaningStatus::Runtime,
    }
}

fn fail(status: LeaningStatus, msg: impl Into<String>) -> LeaningStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> LeaningStatus) -> LeaningStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(LeaningStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, LeaningStatus> {
    if p.is_null() {
        return Err(fail(LeaningStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(LeaningStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

/// Message of the last failed call on this thread, or NULL.
///
/// The pointer stays valid until the next call into the library on the
/// same thread.
#[no_mangle]
pub extern "C" fn leaning_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn leaning_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a classifier saved by the `train` or `enrich` stage.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn leaning_classifier_load(
    dir: *const c_char,
    out: *mut *mut LeaningClassifier,
) -> LeaningStatus {
    guard(|| {
        if out.is_null() {
            return fail(LeaningStatus::NullArgument, "out is null");
        }
        *out = ptr::null_mut();
        let dir = match str_arg(dir, "dir") {
            Ok(d) => d,
            Err(s) => return s,
        };
        match Classifier::load(&PathBuf::from(dir)) {
            Ok(inner) => {
                let labels = inner
                    .labels()
                    .iter()
                    .map(|l| CString::new(l.replace('\0', " ")).unwrap())
                    .collect();
                *out = Box::into_raw(Box::new(LeaningClassifier { inner, labels }));
                LeaningStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// Releases a classifier. NULL is ignored.
///
/// # Safety
/// `handle` must come from [`leaning_classifier_load`] and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn leaning_classifier_free(handle: *mut LeaningClassifier) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Number of party labels of the classifier, or 0 for NULL.
///
/// # Safety
/// `handle` must be NULL or a live classifier.
#[no_mangle]
pub unsafe extern "C" fn leaning_classifier_num_labels(handle: *const LeaningClassifier) -> usize {
    handle.as_ref().map_or(0, |h| h.labels.len())
}

/// Party label at `index`. The string lives as long as the handle.
///
/// # Safety
/// `handle` must be a live classifier and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn leaning_classifier_label(
    handle: *const LeaningClassifier,
    index: usize,
    out: *mut *const c_char,
) -> LeaningStatus {
    guard(|| {
        let (Some(h), false) = (handle.as_ref(), out.is_null()) else {
            return fail(LeaningStatus::NullArgument, "handle or out is null");
        };
        match h.labels.get(index) {
            Some(l) => {
                *out = l.as_ptr();
                LeaningStatus::Ok
            }
            None => fail(
                LeaningStatus::OutOfRange,
                format!("label index {index} out of range ({} labels)", h.labels.len()),
            ),
        }
    })
}

/// Writes one probability per party label of `text` into `scores`.
///
/// `capacity` is the length of `scores`; it must be at least the number of
/// labels.
///
/// # Safety
/// `handle` must be a live classifier, `text` a NUL-terminated string and
/// `scores` valid for `capacity` writes.
#[no_mangle]
pub unsafe extern "C" fn leaning_classifier_classify(
    handle: *const LeaningClassifier,
    text: *const c_char,
    scores: *mut f64,
    capacity: usize,
) -> LeaningStatus {
    guard(|| {
        let Some(h) = handle.as_ref() else {
            return fail(LeaningStatus::NullArgument, "handle is null");
        };
        if scores.is_null() {
            return fail(LeaningStatus::NullArgument, "scores is null");
        }
        let text = match str_arg(text, "text") {
            Ok(t) => t,
            Err(s) => return s,
        };
        let n = h.labels.len();
        if capacity < n {
            return fail(
                LeaningStatus::BufferTooSmall,
                format!("scores holds {capacity} values, {n} needed"),
            );
        }
        let sv = h.inner.classify_text(text);
        std::slice::from_raw_parts_mut(scores, n).copy_from_slice(&sv.scores);
        LeaningStatus::Ok
    })
}

/// Runs every stage with the JSON configuration at `config_path`.
///
/// A non-NULL `output_dir` replaces `paths.output_dir`.
///
/// # Safety
/// `config_path` must be a NUL-terminated string; `output_dir` must be NULL
/// or one.
#[no_mangle]
pub unsafe extern "C" fn leaning_run_pipeline(
    config_path: *const c_char,
    output_dir: *const c_char,
) -> LeaningStatus {
    guard(|| {
        let path = match str_arg(config_path, "config_path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        let out = if output_dir.is_null() {
            None
        } else {
            match str_arg(output_dir, "output_dir") {
                Ok(o) => Some(o),
                Err(s) => return s,
            }
        };
        let mut config = match RunConfig::load(&PathBuf::from(path)) {
            Ok(c) => c,
            Err(e) => return fail(status_of(&e), e.to_string()),
        };
        if let Some(o) = out {
            config.paths.output_dir = PathBuf::from(o);
        }
        let run = match Run::new(config) {
            Ok(r) => r,
            Err(e) => return fail(status_of(&e), e.to_string()),
        };
        match run.pipeline() {
            Ok(()) => LeaningStatus::Ok,
            Err(e) => fail(
                status_of(&e.error),
                format!("stage {} failed: {}", e.stage.name(), e.error),
            ),
        }
    })
}
