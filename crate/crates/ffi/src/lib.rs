//! C ABI for exposure-lens.
//!
//! Every fallible function returns an [`ElStatus`]. On failure a message is
//! kept per thread and can be read with [`el_last_error_message`]. Objects are
//! opaque handles created by `*_load`/`*_new`/compute functions and released
//! with the matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use exposure_lens::exposure::{self, ExposureVector};
use exposure_lens::ident;
use exposure_lens::ingest::{LoadOptions, ShareTable, TaskMatrix};
use exposure_lens::selection::{self, SelectionProfile};
use exposure_lens::{Error, OccId};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Validation = 5,
    Numerical = 6,
    NotFound = 7,
    Panic = 99,
}

/// Occupation share table.
pub struct ElShareTable(ShareTable);

/// Occupation by task matrix.
pub struct ElTaskMatrix(TaskMatrix);

/// Selection ratios and task tilts.
pub struct ElSelectionProfile(SelectionProfile);

/// Occupation-level exposure scores.
pub struct ElExposureVector(ExposureVector);

/// Interval between a baseline and a reweighted coefficient.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct ElIdentifiedSet {
    pub low: f64,
    pub high: f64,
    pub width: f64,
    pub attenuation_share: f64,
    pub same_sign: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> ElStatus {
    match e {
        Error::Stage { source, .. } => status_of(source),
        Error::Io { .. } => ElStatus::Io,
        Error::Csv(_) | Error::Json(_) | Error::Schema { .. } | Error::InvalidCode { .. } => ElStatus::Parse,
        Error::InvalidArgument(_) => ElStatus::InvalidArgument,
        Error::NotConverged { .. } | Error::Collinear(_) | Error::Numerical(_) => ElStatus::Numerical,
        Error::Missing { .. } => ElStatus::NotFound,
        _ => ElStatus::Validation,
    }
}

enum Fail {
    Null(&'static str),
    Arg(String),
    NotFound(String),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

/// Run `f`, converting errors and panics into a status plus last-error message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ElStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ElStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer passed for `{what}`"));
            ElStatus::NullPointer
        }
        Ok(Err(Fail::Arg(m))) => {
            set_error(m);
            ElStatus::InvalidArgument
        }
        Ok(Err(Fail::NotFound(m))) => {
            set_error(m);
            ElStatus::NotFound
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            ElStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Arg(format!("`{what}` is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put_value<T>(out: *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("out"));
    }
    *out = value;
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn el_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn el_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---------------------------------------------------------------------------
// Share tables

/// Load an `occ_code,share` CSV.
///
/// # Safety
/// `path` and `label` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn el_share_table_load(
    path: *const c_char,
    label: *const c_char,
    percent: bool,
    normalize: bool,
    out: *mut *mut ElShareTable,
) -> ElStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        let label = str_arg(label, "label")?;
        let t = ShareTable::load(path, label, LoadOptions { percent, normalize })?;
        put(out, ElShareTable(t))
    })
}

/// Build a share table from `n` codes and shares.
///
/// # Safety
/// `codes` and `shares` must point to `n` elements; each code is NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn el_share_table_new(
    label: *const c_char,
    codes: *const *const c_char,
    shares: *const f64,
    n: usize,
    normalize: bool,
    out: *mut *mut ElShareTable,
) -> ElStatus {
    guard(|| {
        let label = str_arg(label, "label")?;
        if n > 0 && (codes.is_null() || shares.is_null()) {
            return Err(Fail::Null("codes/shares"));
        }
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let code = OccId::parse(str_arg(*codes.add(i), "code")?)?;
            rows.push((code, *shares.add(i)));
        }
        let t = ShareTable::from_entries(label, rows, LoadOptions { percent: false, normalize })?;
        put(out, ElShareTable(t))
    })
}

/// # Safety
/// `t` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn el_share_table_len(t: *const ElShareTable) -> usize {
    t.as_ref().map_or(0, |t| t.0.len())
}

/// # Safety
/// `t` must be a live handle or NULL, and `code` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn el_share_table_get(t: *const ElShareTable, code: *const c_char, out: *mut f64) -> ElStatus {
    guard(|| {
        let t = handle(t, "table")?;
        let occ = OccId::parse(str_arg(code, "code")?)?;
        let v = t.0.get(&occ).ok_or_else(|| Fail::NotFound(format!("no share for `{occ}`")))?;
        put_value(out, v)
    })
}

/// # Safety
/// `t` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn el_share_table_free(t: *mut ElShareTable) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

// ---------------------------------------------------------------------------
// Task matrices

/// Load an `occ_code,task_id,q,q_p,tau` CSV.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn el_task_matrix_load(path: *const c_char, normalize: bool, out: *mut *mut ElTaskMatrix) -> ElStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        let m = TaskMatrix::load(path, LoadOptions { percent: false, normalize })?;
        put(out, ElTaskMatrix(m))
    })
}

/// # Safety
/// `m` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn el_task_matrix_len(m: *const ElTaskMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.len())
}

/// # Safety
/// `m` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn el_task_matrix_free(m: *mut ElTaskMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

// ---------------------------------------------------------------------------
// Selection

/// ψ = platform / workforce share. Pass a task matrix to also fill θ and η, or NULL.
///
/// # Safety
/// Handles must be live (`tasks` may be NULL); `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn el_selection_compute(
    platform: *const ElShareTable,
    workforce: *const ElShareTable,
    tasks: *const ElTaskMatrix,
    out: *mut *mut ElSelectionProfile,
) -> ElStatus {
    guard(|| {
        let p = handle(platform, "platform")?;
        let w = handle(workforce, "workforce")?;
        let profile = match tasks.as_ref() {
            Some(t) => exposure::selection_for(&t.0, &p.0, &w.0)?,
            None => selection::compute_psi(&p.0, &w.0)?,
        };
        put(out, ElSelectionProfile(profile))
    })
}

/// Number of occupations with a defined ψ.
///
/// # Safety
/// `s` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn el_selection_len(s: *const ElSelectionProfile) -> usize {
    s.as_ref().map_or(0, |s| s.0.psi.len())
}

/// # Safety
/// `s` must be a live handle, `code` NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn el_selection_psi(s: *const ElSelectionProfile, code: *const c_char, out: *mut f64) -> ElStatus {
    guard(|| {
        let s = handle(s, "profile")?;
        let occ = OccId::parse(str_arg(code, "code")?)?;
        let v = s.0.psi(&occ).ok_or_else(|| Fail::NotFound(format!("psi undefined for `{occ}`")))?;
        put_value(out, v)
    })
}

/// Load an `occ_code,psi,flag` CSV.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn el_selection_load(path: *const c_char, out: *mut *mut ElSelectionProfile) -> ElStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        put(out, ElSelectionProfile(SelectionProfile::load_psi(path)?))
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn el_selection_free(s: *mut ElSelectionProfile) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

// ---------------------------------------------------------------------------
// Exposure vectors

/// Load an `occ_code,value,role` CSV.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn el_exposure_load(path: *const c_char, out: *mut *mut ElExposureVector) -> ElStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        put(out, ElExposureVector(ExposureVector::load(&path, &label)?))
    })
}

/// True exposure Σ q τ per occupation.
///
/// # Safety
/// `tasks` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn el_exposure_true(tasks: *const ElTaskMatrix, out: *mut *mut ElExposureVector) -> ElStatus {
    guard(|| {
        let t = handle(tasks, "tasks")?;
        put(out, ElExposureVector(exposure::true_exposure(&t.0)?))
    })
}

/// Platform proxy ψ Σ θ q τ + u with u ~ N(0, noise_sd²) drawn from `seed`.
/// The profile needs θ, so build it with a task matrix.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn el_exposure_proxy(
    tasks: *const ElTaskMatrix,
    profile: *const ElSelectionProfile,
    noise_sd: f64,
    seed: u64,
    out: *mut *mut ElExposureVector,
) -> ElStatus {
    guard(|| {
        let t = handle(tasks, "tasks")?;
        let p = handle(profile, "profile")?;
        put(out, ElExposureVector(exposure::platform_proxy(&t.0, &p.0, noise_sd, seed)?))
    })
}

/// Proxy divided by ψ.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn el_exposure_reweight(
    proxy: *const ElExposureVector,
    profile: *const ElSelectionProfile,
    out: *mut *mut ElExposureVector,
) -> ElStatus {
    guard(|| {
        let v = handle(proxy, "proxy")?;
        let p = handle(profile, "profile")?;
        put(out, ElExposureVector(exposure::reweight(&v.0, &p.0)?))
    })
}

/// Weighted z-score using a share table as weights.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn el_exposure_standardize(
    v: *const ElExposureVector,
    weights: *const ElShareTable,
    out: *mut *mut ElExposureVector,
) -> ElStatus {
    guard(|| {
        let v = handle(v, "exposure")?;
        let w = handle(weights, "weights")?;
        put(out, ElExposureVector(exposure::standardize_with(&v.0, w.0.entries())?))
    })
}

/// # Safety
/// `v` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn el_exposure_len(v: *const ElExposureVector) -> usize {
    v.as_ref().map_or(0, |v| v.0.len())
}

/// # Safety
/// `v` must be live, `code` NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn el_exposure_get(v: *const ElExposureVector, code: *const c_char, out: *mut f64) -> ElStatus {
    guard(|| {
        let v = handle(v, "exposure")?;
        let occ = OccId::parse(str_arg(code, "code")?)?;
        let x = v.0.get(&occ).ok_or_else(|| Fail::NotFound(format!("no value for `{occ}`")))?;
        put_value(out, x)
    })
}

/// Write the vector as `occ_code,value,role`.
///
/// # Safety
/// `v` must be live and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn el_exposure_write(v: *const ElExposureVector, path: *const c_char) -> ElStatus {
    guard(|| {
        let v = handle(v, "exposure")?;
        let path = PathBuf::from(str_arg(path, "path")?);
        Ok(v.0.write(path)?)
    })
}

/// # Safety
/// `v` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn el_exposure_free(v: *mut ElExposureVector) {
    if !v.is_null() {
        drop(Box::from_raw(v));
    }
}

// ---------------------------------------------------------------------------
// Identification

/// Probability limit βλκ/(λ²κ + 1); pass INFINITY for κ to get β/λ.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn el_plim(beta: f64, lambda: f64, kappa: f64, out: *mut f64) -> ElStatus {
    guard(|| {
        let s = ident::ProjectionStats::from_lambda_kappa(lambda, kappa)?;
        put_value(out, ident::plim(beta, &s)?)
    })
}

/// Magnitude interval between baseline and reweighted coefficients.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn el_bounds(baseline: f64, reweighted: f64, out: *mut ElIdentifiedSet) -> ElStatus {
    guard(|| {
        let s = ident::bounds_from_coefs(baseline, reweighted)?;
        put_value(
            out,
            ElIdentifiedSet {
                low: s.low,
                high: s.high,
                width: s.width,
                attenuation_share: s.attenuation_share,
                same_sign: s.same_sign,
            },
        )
    })
}
