//! C interface to medlang.
//!
//! Handles are opaque and owned by the caller once returned; release them
//! with the matching `_free` function. Every fallible call returns a
//! [`MedlangStatus`]; on failure `medlang_last_error` describes the cause
//! for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::fs::File;
use std::io::BufReader;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use medlang::glm::Dataset;
use medlang::measure::{read_records, RecordSchema};
use medlang::mediation::{bootstrap_effects, EstimationConfig};
use medlang::scm::{exact_effects, generate, ScmSpec};
use medlang::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MedlangStatus {
    Ok = 0,
    Config = 2,
    Data = 3,
    Numerical = 4,
    NullPointer = 5,
    InvalidUtf8 = 6,
    Panic = 7,
}

/// Encoded causal records ready for estimation.
pub struct MedlangDataset {
    inner: Dataset,
}

/// A validated structural causal model.
pub struct MedlangScm {
    spec: ScmSpec,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MedlangEffect {
    pub nde: f64,
    pub nie: f64,
    pub nie_reversed: f64,
    pub total_effect: f64,
    /// Interval bounds; NaN when no bootstrap was requested.
    pub nde_lower: f64,
    pub nde_upper: f64,
    pub nie_lower: f64,
    pub nie_upper: f64,
    pub n_units: usize,
    pub n_bootstrap: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MedlangOracle {
    pub nde: f64,
    pub nie: f64,
    pub te: f64,
    pub nie_reversed: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: MedlangStatus, msg: String) -> MedlangStatus {
    set_error(msg);
    status
}

fn from_error(err: Error) -> MedlangStatus {
    let status = match err.exit_code() {
        2 => MedlangStatus::Config,
        4 => MedlangStatus::Numerical,
        _ => MedlangStatus::Data,
    };
    fail(status, err.to_string())
}

fn guard(f: impl FnOnce() -> MedlangStatus) -> MedlangStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(MedlangStatus::Panic, "internal panic".into()),
    }
}

/// # Safety
/// `s` must be null or a valid nul-terminated string.
unsafe fn arg_str<'a>(s: *const c_char, name: &str) -> Result<&'a str, MedlangStatus> {
    if s.is_null() {
        return Err(fail(MedlangStatus::NullPointer, format!("`{name}` is null")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(MedlangStatus::InvalidUtf8, format!("`{name}` is not UTF-8")))
}

fn load_dataset(records: &str, schema: &str) -> medlang::Result<Dataset> {
    let recs = read_records(BufReader::new(File::open(records)?))?;
    let schema: RecordSchema = serde_json::from_reader(BufReader::new(File::open(schema)?))?;
    Dataset::from_records(&recs, &schema)
}

/// Loads records (newline-delimited JSON) and their schema file.
///
/// # Safety
/// The path arguments must be valid C strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn medlang_dataset_load(
    records_path: *const c_char,
    schema_path: *const c_char,
    out: *mut *mut MedlangDataset,
) -> MedlangStatus {
    guard(|| {
        if out.is_null() {
            return fail(MedlangStatus::NullPointer, "`out` is null".into());
        }
        let (records, schema) = match (arg_str(records_path, "records_path"), arg_str(schema_path, "schema_path")) {
            (Ok(r), Ok(s)) => (r, s),
            (Err(e), _) | (_, Err(e)) => return e,
        };
        match load_dataset(records, schema) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(MedlangDataset { inner }));
                MedlangStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `dataset` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn medlang_dataset_free(dataset: *mut MedlangDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Number of records; 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn medlang_dataset_len(dataset: *const MedlangDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.len())
}

/// Estimates effects for one mediator. `n_bootstrap` is 0 (no intervals) or at least 100.
///
/// # Safety
/// `dataset` must be a live handle, `mediator` a valid C string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn medlang_estimate(
    dataset: *const MedlangDataset,
    mediator: *const c_char,
    n_bootstrap: usize,
    seed: u64,
    ci_level: f64,
    out: *mut MedlangEffect,
) -> MedlangStatus {
    guard(|| {
        let Some(data) = dataset.as_ref() else {
            return fail(MedlangStatus::NullPointer, "`dataset` is null".into());
        };
        if out.is_null() {
            return fail(MedlangStatus::NullPointer, "`out` is null".into());
        }
        let name = match arg_str(mediator, "mediator") {
            Ok(s) => s,
            Err(e) => return e,
        };
        let config = EstimationConfig {
            n_bootstrap,
            seed,
            ci_level,
            ..EstimationConfig::default()
        };
        match bootstrap_effects(&data.inner, name, &config) {
            Ok(e) => {
                let (nl, nu) = e.nde_ci.map_or((f64::NAN, f64::NAN), |c| (c.lower, c.upper));
                let (il, iu) = e.nie_ci.map_or((f64::NAN, f64::NAN), |c| (c.lower, c.upper));
                *out = MedlangEffect {
                    nde: e.nde,
                    nie: e.nie,
                    nie_reversed: e.nie_reversed,
                    total_effect: e.total_effect,
                    nde_lower: nl,
                    nde_upper: nu,
                    nie_lower: il,
                    nie_upper: iu,
                    n_units: e.n_units,
                    n_bootstrap: e.n_bootstrap,
                };
                MedlangStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Loads and validates a structural model spec file.
///
/// # Safety
/// `spec_path` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn medlang_scm_load(spec_path: *const c_char, out: *mut *mut MedlangScm) -> MedlangStatus {
    guard(|| {
        if out.is_null() {
            return fail(MedlangStatus::NullPointer, "`out` is null".into());
        }
        let path = match arg_str(spec_path, "spec_path") {
            Ok(s) => s,
            Err(e) => return e,
        };
        match ScmSpec::load(Path::new(path)) {
            Ok(spec) => {
                *out = Box::into_raw(Box::new(MedlangScm { spec }));
                MedlangStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `scm` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn medlang_scm_free(scm: *mut MedlangScm) {
    if !scm.is_null() {
        drop(Box::from_raw(scm));
    }
}

/// Number of mediators in the model; 0 for a null handle.
///
/// # Safety
/// `scm` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn medlang_scm_mediator_count(scm: *const MedlangScm) -> usize {
    scm.as_ref().map_or(0, |s| s.spec.mediators.len())
}

/// Exact effects for the mediator at `mediator_index`.
///
/// # Safety
/// `scm` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn medlang_scm_exact(
    scm: *const MedlangScm,
    mediator_index: usize,
    out: *mut MedlangOracle,
) -> MedlangStatus {
    guard(|| {
        let Some(scm) = scm.as_ref() else {
            return fail(MedlangStatus::NullPointer, "`scm` is null".into());
        };
        if out.is_null() {
            return fail(MedlangStatus::NullPointer, "`out` is null".into());
        }
        match exact_effects(&scm.spec) {
            Ok(results) => match results.get(mediator_index) {
                Some(r) => {
                    *out = MedlangOracle {
                        nde: r.nde,
                        nie: r.nie,
                        te: r.te,
                        nie_reversed: r.nie_reversed,
                    };
                    MedlangStatus::Ok
                }
                None => fail(MedlangStatus::Config, format!("no mediator at index {mediator_index}")),
            },
            Err(e) => from_error(e),
        }
    })
}

/// Samples `n` units with the given seed into a new dataset handle.
///
/// # Safety
/// `scm` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn medlang_scm_generate(
    scm: *const MedlangScm,
    n: usize,
    seed: u64,
    out: *mut *mut MedlangDataset,
) -> MedlangStatus {
    guard(|| {
        let Some(scm) = scm.as_ref() else {
            return fail(MedlangStatus::NullPointer, "`scm` is null".into());
        };
        if out.is_null() {
            return fail(MedlangStatus::NullPointer, "`out` is null".into());
        }
        let spec = ScmSpec {
            seed,
            ..scm.spec.clone()
        };
        match generate(&spec, n).and_then(|sim| Dataset::from_records(&sim.records, &sim.schema)) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(MedlangDataset { inner }));
                MedlangStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Binary hedging and disfluency labels for one utterance, with the bundled lexicon.
///
/// # Safety
/// `text` must be a valid C string; both outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn medlang_measure_text(
    text: *const c_char,
    hedging: *mut c_int,
    disfluency: *mut c_int,
) -> MedlangStatus {
    guard(|| {
        if hedging.is_null() || disfluency.is_null() {
            return fail(MedlangStatus::NullPointer, "output pointer is null".into());
        }
        let text = match arg_str(text, "text") {
            Ok(s) => s,
            Err(e) => return e,
        };
        *hedging = c_int::from(medlang::measure::measure_hedging(text));
        *disfluency = c_int::from(medlang::measure::measure_disfluency(text));
        MedlangStatus::Ok
    })
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn medlang_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}
