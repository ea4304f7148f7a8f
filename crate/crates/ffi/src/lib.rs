//! C ABI over the `horen` codebook.
//!
//! Every fallible call returns a [`HorenStatus`]; on anything but
//! `HOREN_STATUS_OK` a description is available from
//! [`horen_last_error_message`] until the next failing call on the same
//! thread. Codebooks are opaque handles owned by the caller and released
//! with [`horen_codebook_free`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use horen::{AdaptorConfig, Codebook, EditOutcome, EditTarget, EntryLabel, Error, HopfieldParams, Vector};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HorenStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ZeroNorm = 3,
    DimensionMismatch = 4,
    EmptyCodebook = 5,
    NonFinite = 6,
    InvalidParams = 7,
    Format = 8,
    Io = 9,
    IndexOutOfRange = 10,
    Panic = 11,
    Other = 12,
}

/// Refinement and matching settings.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct HorenParams {
    pub beta: f64,
    pub gamma: f64,
    pub max_steps: u32,
    pub epsilon: f64,
    pub threshold: f64,
}

/// Payload training settings.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct HorenAdaptorParams {
    pub learning_rate: f64,
    pub max_steps: u32,
    pub loss_threshold: f64,
    pub patience: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct HorenRoute {
    /// 1 when the best score exceeds the threshold.
    pub matched: i32,
    /// -1 for an empty codebook.
    pub best_index: i64,
    pub best_score: f64,
    pub steps_taken: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HorenOutcome {
    Inserted = 0,
    Refined = 1,
    ConflictInserted = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct HorenEditResult {
    pub outcome: HorenOutcome,
    /// Entry that was written.
    pub index: u64,
    /// Entry whose basin was contested; -1 unless the outcome is a conflict.
    pub contested: i64,
    pub payload_trained: i32,
    pub adaptor_failed: i32,
}

/// Opaque codebook handle.
pub struct HorenCodebook {
    inner: Codebook,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> HorenStatus {
    match e {
        Error::ZeroNorm { .. } => HorenStatus::ZeroNorm,
        Error::DimensionMismatch { .. } => HorenStatus::DimensionMismatch,
        Error::EmptyCodebook => HorenStatus::EmptyCodebook,
        Error::NonFinite { .. } | Error::NonFiniteLoss { .. } => HorenStatus::NonFinite,
        Error::InvalidParams(_) | Error::InvalidConfig(_) => HorenStatus::InvalidParams,
        Error::EmptyInput => HorenStatus::InvalidArgument,
        Error::Format(_) => HorenStatus::Format,
        Error::Io { .. } => HorenStatus::Io,
        _ => HorenStatus::Other,
    }
}

fn fail(status: HorenStatus, msg: impl Into<String>) -> HorenStatus {
    set_error(msg.into());
    status
}

fn guard(f: impl FnOnce() -> Result<(), HorenStatus>) -> HorenStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HorenStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(HorenStatus::Panic, "internal panic"),
    }
}

fn lift<T>(r: horen::Result<T>) -> Result<T, HorenStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn slice<'a>(p: *const f64, len: usize) -> Result<&'a [f64], HorenStatus> {
    if p.is_null() {
        return Err(fail(HorenStatus::NullPointer, "null vector pointer"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, HorenStatus> {
    if p.is_null() {
        return Err(fail(HorenStatus::NullPointer, "null string pointer"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(HorenStatus::InvalidArgument, "string is not valid UTF-8"))
}

unsafe fn book<'a>(cb: *const HorenCodebook) -> Result<&'a Codebook, HorenStatus> {
    cb.as_ref()
        .map(|h| &h.inner)
        .ok_or_else(|| fail(HorenStatus::NullPointer, "null codebook handle"))
}

fn params_of(p: *const HorenParams) -> HopfieldParams {
    match unsafe { p.as_ref() } {
        Some(p) => HopfieldParams {
            beta: p.beta,
            gamma: p.gamma,
            max_steps: p.max_steps as usize,
            epsilon: p.epsilon,
            threshold: p.threshold,
        },
        None => HopfieldParams::default(),
    }
}

fn adaptor_of(p: *const HorenAdaptorParams) -> AdaptorConfig {
    match unsafe { p.as_ref() } {
        Some(p) => AdaptorConfig {
            learning_rate: p.learning_rate,
            max_steps: p.max_steps as usize,
            loss_threshold: p.loss_threshold,
            patience: p.patience as usize,
        },
        None => AdaptorConfig::default(),
    }
}

/// Message of the last failing call on this thread, or NULL. Owned by the
/// library; valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn horen_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn horen_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn horen_params_default() -> HorenParams {
    let p = HopfieldParams::default();
    HorenParams {
        beta: p.beta,
        gamma: p.gamma,
        max_steps: p.max_steps as u32,
        epsilon: p.epsilon,
        threshold: p.threshold,
    }
}

#[no_mangle]
pub extern "C" fn horen_adaptor_params_default() -> HorenAdaptorParams {
    let a = AdaptorConfig::default();
    HorenAdaptorParams {
        learning_rate: a.learning_rate,
        max_steps: a.max_steps as u32,
        loss_threshold: a.loss_threshold,
        patience: a.patience as u32,
    }
}

/// New empty codebook of dimension `dim`; NULL when `dim` is 0.
#[no_mangle]
pub extern "C" fn horen_codebook_new(dim: usize) -> *mut HorenCodebook {
    if dim == 0 {
        set_error("dimension must be positive".into());
        return ptr::null_mut();
    }
    Box::into_raw(Box::new(HorenCodebook {
        inner: Codebook::new(dim),
    }))
}

/// # Safety
/// `cb` must be NULL or a handle from this library that was not yet freed.
#[no_mangle]
pub unsafe extern "C" fn horen_codebook_free(cb: *mut HorenCodebook) {
    if !cb.is_null() {
        drop(Box::from_raw(cb));
    }
}

/// Entry count; 0 for NULL.
///
/// # Safety
/// `cb` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn horen_codebook_len(cb: *const HorenCodebook) -> usize {
    cb.as_ref().map_or(0, |h| h.inner.len())
}

/// Key dimension; 0 for NULL.
///
/// # Safety
/// `cb` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn horen_codebook_dim(cb: *const HorenCodebook) -> usize {
    cb.as_ref().map_or(0, |h| h.inner.dim())
}

/// Applies one edit. `params` and `adaptor` may be NULL for defaults.
///
/// # Safety
/// `query` and `target` must point to `len` readable doubles, `label` to a
/// NUL-terminated UTF-8 string, `out` to a writable result (or be NULL).
#[no_mangle]
pub unsafe extern "C" fn horen_codebook_apply_edit(
    cb: *mut HorenCodebook,
    query: *const f64,
    target: *const f64,
    len: usize,
    label: *const c_char,
    params: *const HorenParams,
    adaptor: *const HorenAdaptorParams,
    out: *mut HorenEditResult,
) -> HorenStatus {
    guard(|| {
        let h = cb
            .as_mut()
            .ok_or_else(|| fail(HorenStatus::NullPointer, "null codebook handle"))?;
        let q = slice(query, len)?;
        let t = slice(target, len)?;
        let label = text(label)?;
        let target = EditTarget {
            label: EntryLabel::new(label),
            target_vector: lift(Vector::new(t.to_vec()))?,
        };
        let report = lift(h.inner.apply_edit(q, &target, &params_of(params), &adaptor_of(adaptor)))?;
        if let Some(out) = out.as_mut() {
            let (outcome, contested) = match report.outcome {
                EditOutcome::Inserted { .. } => (HorenOutcome::Inserted, -1),
                EditOutcome::Refined { .. } => (HorenOutcome::Refined, -1),
                EditOutcome::ConflictInserted { contested, .. } => (HorenOutcome::ConflictInserted, contested as i64),
            };
            *out = HorenEditResult {
                outcome,
                index: report.outcome.index() as u64,
                contested,
                payload_trained: report.payload_trained.into(),
                adaptor_failed: report.adaptor_failed.into(),
            };
        }
        Ok(())
    })
}

/// Refines and matches a raw query. `params` may be NULL for defaults.
///
/// # Safety
/// `query` must point to `len` readable doubles and `out` to a writable
/// [`HorenRoute`].
#[no_mangle]
pub unsafe extern "C" fn horen_codebook_route(
    cb: *const HorenCodebook,
    query: *const f64,
    len: usize,
    params: *const HorenParams,
    out: *mut HorenRoute,
) -> HorenStatus {
    guard(|| {
        let b = book(cb)?;
        let q = slice(query, len)?;
        let out = out
            .as_mut()
            .ok_or_else(|| fail(HorenStatus::NullPointer, "null output pointer"))?;
        let d = lift(b.route(q, &params_of(params)))?;
        *out = HorenRoute {
            matched: d.matched.into(),
            best_index: d.best_index.map_or(-1, |i| i as i64),
            best_score: d.best_score,
            steps_taken: d.hopfield_steps_taken as u32,
        };
        Ok(())
    })
}

/// Copies entry `index`'s payload into `out` (`len` must equal the
/// dimension).
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn horen_codebook_payload(
    cb: *const HorenCodebook,
    index: usize,
    out: *mut f64,
    len: usize,
) -> HorenStatus {
    guard(|| {
        let b = book(cb)?;
        if out.is_null() {
            return Err(fail(HorenStatus::NullPointer, "null output pointer"));
        }
        if index >= b.len() {
            return Err(fail(
                HorenStatus::IndexOutOfRange,
                format!("index {index} out of range for {} entries", b.len()),
            ));
        }
        if len != b.dim() {
            return Err(fail(
                HorenStatus::DimensionMismatch,
                format!("buffer holds {len} values, dimension is {}", b.dim()),
            ));
        }
        let src = b.entry(index).payload.value.as_slice();
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(src);
        Ok(())
    })
}

/// Copies entry `index`'s label, NUL-terminated, into `buf` of `cap` bytes.
/// Writes the full label length (excluding NUL) to `needed` when non-NULL;
/// fails with `HOREN_STATUS_INVALID_ARGUMENT` if it does not fit.
///
/// # Safety
/// `buf` must point to `cap` writable bytes; `needed` must be NULL or
/// writable.
#[no_mangle]
pub unsafe extern "C" fn horen_codebook_label(
    cb: *const HorenCodebook,
    index: usize,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> HorenStatus {
    guard(|| {
        let b = book(cb)?;
        if index >= b.len() {
            return Err(fail(
                HorenStatus::IndexOutOfRange,
                format!("index {index} out of range for {} entries", b.len()),
            ));
        }
        let label = b.entry(index).label.as_str().as_bytes();
        if let Some(n) = needed.as_mut() {
            *n = label.len();
        }
        if buf.is_null() || cap < label.len() + 1 {
            return Err(fail(HorenStatus::InvalidArgument, "label buffer too small"));
        }
        ptr::copy_nonoverlapping(label.as_ptr(), buf.cast::<u8>(), label.len());
        *buf.add(label.len()) = 0;
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn horen_codebook_save(cb: *const HorenCodebook, path: *const c_char) -> HorenStatus {
    guard(|| {
        let b = book(cb)?;
        lift(b.save(text(path)?))
    })
}

/// Loads a codebook file into a new handle written to `out`.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn horen_codebook_load(path: *const c_char, out: *mut *mut HorenCodebook) -> HorenStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(HorenStatus::NullPointer, "null output pointer"));
        }
        *out = ptr::null_mut();
        let inner = lift(Codebook::load(text(path)?))?;
        *out = Box::into_raw(Box::new(HorenCodebook { inner }));
        Ok(())
    })
}
