//! C ABI for omix.
//!
//! Models and fitters are opaque heap handles released with their `_free`
//! function. Every fallible call returns an [`OmixStatus`]; on failure a
//! message for the calling thread is available from
//! [`omix_last_error_message`]. Panics are caught at the boundary and
//! reported as `OMIX_STATUS_PANIC`.
//!
//! # Safety
//!
//! Pointer arguments must be valid for the documented number of elements,
//! strings must be NUL-terminated UTF-8, and handles must come from this
//! library and not be used after being freed.
#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use omix::error::Error;
use omix::mixture::{Dataset, Family, MixtureModel};
use omix::model_io;
use omix::online::{init_state, EmConfig, EmState, LearningRateSchedule};
use omix::scoring::{calibrate_threshold, proximity, CalibrationSource};

#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OmixStatus {
    Ok = 0,
    /// A required pointer argument was null.
    Null = 1,
    /// Invalid arguments or data.
    Usage = 2,
    /// A model text or file failed to parse.
    Format = 3,
    /// Numerical failure or aborted estimation.
    Numeric = 4,
    Io = 5,
    /// A Rust panic was caught at the boundary.
    Panic = 6,
}

#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OmixFamily {
    Gaussian = 0,
    Mst = 1,
}

/// Opaque fitted mixture.
pub struct OmixModel {
    inner: MixtureModel,
}

/// Opaque online estimator.
pub struct OmixFitter {
    state: EmState,
    dim: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> OmixStatus {
    match e {
        Error::Format(_) => OmixStatus::Format,
        Error::Io(_) => OmixStatus::Io,
        Error::Numeric(_) | Error::Init(_) | Error::Starved { .. } | Error::Aborted(_) => OmixStatus::Numeric,
        _ => OmixStatus::Usage,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> OmixStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            OmixStatus::Ok
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(&format!("null pointer: {what}"));
            OmixStatus::Null
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {msg}"));
            OmixStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    unsafe { p.as_ref() }.ok_or(Fail::Null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

unsafe fn string<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Fail::Lib(Error::Usage(format!("{what} is not valid UTF-8"))))
}

unsafe fn rows(p: *const f64, n: usize, m: usize, what: &'static str) -> Result<Dataset, Fail> {
    let len = n.checked_mul(m).ok_or(Fail::Lib(Error::Usage("row count overflows".into())))?;
    let values = unsafe { slice(p, len, what) }?;
    Ok(Dataset::new(m, values.to_vec())?)
}

fn out_ptr<T>(p: *mut T, what: &'static str) -> Result<(), Fail> {
    if p.is_null() {
        Err(Fail::Null(what))
    } else {
        Ok(())
    }
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call into this library on the same
/// thread.
#[no_mangle]
pub extern "C" fn omix_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parses a model from its text form.
#[no_mangle]
pub unsafe extern "C" fn omix_model_from_text(text: *const c_char, out: *mut *mut OmixModel) -> OmixStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let model = model_io::deserialize(unsafe { string(text, "text") }?)?;
        unsafe { *out = Box::into_raw(Box::new(OmixModel { inner: model })) };
        Ok(())
    })
}

/// Loads a model file.
#[no_mangle]
pub unsafe extern "C" fn omix_model_load(path: *const c_char, out: *mut *mut OmixModel) -> OmixStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let model = model_io::load(unsafe { string(path, "path") }?)?;
        unsafe { *out = Box::into_raw(Box::new(OmixModel { inner: model })) };
        Ok(())
    })
}

/// Releases a model. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn omix_model_free(model: *mut OmixModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Family, component count and feature dimension.
#[no_mangle]
pub unsafe extern "C" fn omix_model_dims(
    model: *const OmixModel,
    family: *mut OmixFamily,
    k: *mut usize,
    m: *mut usize,
) -> OmixStatus {
    guard(|| {
        let model = &unsafe { deref(model, "model") }?.inner;
        out_ptr(family, "family")?;
        out_ptr(k, "k")?;
        out_ptr(m, "m")?;
        unsafe {
            *family = match model.family() {
                Family::Gaussian => OmixFamily::Gaussian,
                Family::Mst => OmixFamily::Mst,
            };
            *k = model.k();
            *m = model.dim();
        }
        Ok(())
    })
}

/// Number of free parameters.
#[no_mangle]
pub unsafe extern "C" fn omix_model_param_count(model: *const OmixModel, out: *mut usize) -> OmixStatus {
    guard(|| {
        let model = &unsafe { deref(model, "model") }?.inner;
        out_ptr(out, "out")?;
        unsafe { *out = model.param_count() };
        Ok(())
    })
}

/// Log-density of one sample of length `m`.
#[no_mangle]
pub unsafe extern "C" fn omix_model_logpdf(
    model: *const OmixModel,
    y: *const f64,
    m: usize,
    out: *mut f64,
) -> OmixStatus {
    guard(|| {
        let model = &unsafe { deref(model, "model") }?.inner;
        out_ptr(out, "out")?;
        let v = model.logpdf(unsafe { slice(y, m, "y") }?)?;
        unsafe { *out = v };
        Ok(())
    })
}

/// Proximity score of one sample (low means anomalous).
#[no_mangle]
pub unsafe extern "C" fn omix_model_proximity(
    model: *const OmixModel,
    y: *const f64,
    m: usize,
    out: *mut f64,
) -> OmixStatus {
    guard(|| {
        let model = &unsafe { deref(model, "model") }?.inner;
        out_ptr(out, "out")?;
        let v = proximity(unsafe { slice(y, m, "y") }?, model)?;
        unsafe { *out = v };
        Ok(())
    })
}

/// Text form of a model; release it with [`omix_string_free`].
#[no_mangle]
pub unsafe extern "C" fn omix_model_to_text(model: *const OmixModel, out: *mut *mut c_char) -> OmixStatus {
    guard(|| {
        let model = &unsafe { deref(model, "model") }?.inner;
        out_ptr(out, "out")?;
        let text = CString::new(model_io::serialize(model)).map_err(|e| Error::Format(e.to_string()))?;
        unsafe { *out = text.into_raw() };
        Ok(())
    })
}

/// Releases a string returned by this library. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn omix_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Threshold `tau` such that a fraction `alpha` of the `n` held-out normal
/// rows (row-major, `m` columns) score below it.
#[no_mangle]
pub unsafe extern "C" fn omix_calibrate_threshold(
    model: *const OmixModel,
    data: *const f64,
    n: usize,
    m: usize,
    alpha: f64,
    tau: *mut f64,
) -> OmixStatus {
    guard(|| {
        let model = &unsafe { deref(model, "model") }?.inner;
        out_ptr(tau, "tau")?;
        let data = unsafe { rows(data, n, m, "data") }?;
        if data.dim() != model.dim() {
            return Err(Error::Usage("data and model dimensions differ".into()).into());
        }
        let t = calibrate_threshold(model, alpha, CalibrationSource::Data(&data))?;
        unsafe { *tau = t.tau };
        Ok(())
    })
}

/// Starts an online estimator from `n` buffered rows, which are also
/// absorbed as the first mini-batches of size `batch`. `family` takes an
/// [`OmixFamily`] value.
#[no_mangle]
pub unsafe extern "C" fn omix_fitter_new(
    family: i32,
    k: usize,
    buffer: *const f64,
    n: usize,
    m: usize,
    batch: usize,
    rho: f64,
    seed: u64,
    out: *mut *mut OmixFitter,
) -> OmixStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let family = match family {
            f if f == OmixFamily::Gaussian as i32 => Family::Gaussian,
            f if f == OmixFamily::Mst as i32 => Family::Mst,
            other => return Err(Error::Usage(format!("unknown family code {other}")).into()),
        };
        let data = unsafe { rows(buffer, n, m, "buffer") }?;
        let config = EmConfig {
            batch_size: batch,
            buffer_size: n,
            schedule: LearningRateSchedule::new(rho, 1.0)?,
            seed,
            ..EmConfig::new(family, k)
        };
        config.validate()?;
        let mut state = init_state(&data, &config)?;
        for chunk in data.as_slice().chunks(batch * m) {
            state.step(chunk)?;
        }
        unsafe { *out = Box::into_raw(Box::new(OmixFitter { state, dim: m })) };
        Ok(())
    })
}

/// One online EM step on `n` rows. `batch_loglik` (optional) receives the
/// mean log-likelihood of the batch under the model before the update.
#[no_mangle]
pub unsafe extern "C" fn omix_fitter_step(
    fitter: *mut OmixFitter,
    data: *const f64,
    n: usize,
    m: usize,
    batch_loglik: *mut f64,
) -> OmixStatus {
    guard(|| {
        let fitter = unsafe { fitter.as_mut() }.ok_or(Fail::Null("fitter"))?;
        if m != fitter.dim {
            return Err(Error::Usage(format!("fitter expects {} columns, got {m}", fitter.dim)).into());
        }
        let len = n.checked_mul(m).ok_or(Fail::Lib(Error::Usage("row count overflows".into())))?;
        let out = fitter.state.step(unsafe { slice(data, len, "data") }?)?;
        if !batch_loglik.is_null() {
            unsafe { *batch_loglik = out.batch_loglik };
        }
        Ok(())
    })
}

/// Copy of the fitter's current model.
#[no_mangle]
pub unsafe extern "C" fn omix_fitter_model(fitter: *const OmixFitter, out: *mut *mut OmixModel) -> OmixStatus {
    guard(|| {
        let fitter = unsafe { deref(fitter, "fitter") }?;
        out_ptr(out, "out")?;
        let inner = fitter.state.model().clone();
        unsafe { *out = Box::into_raw(Box::new(OmixModel { inner })) };
        Ok(())
    })
}

/// Releases a fitter. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn omix_fitter_free(fitter: *mut OmixFitter) {
    if !fitter.is_null() {
        drop(unsafe { Box::from_raw(fitter) });
    }
}
