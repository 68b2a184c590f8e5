//! C ABI over the gpbandit library.
//!
//! Every entry point returns a [`GpbStatus`]; outputs go through caller
//! pointers. On failure the message is kept per thread and can be read with
//! [`gpb_last_error_message`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::slice;

use gpbandit::kernels::KernelSpec;
use gpbandit::metrics::{phi, LenientKind};
use gpbandit::posterior::PosteriorState;
use gpbandit::runner::{run_suite, ExperimentConfig};
use gpbandit::theory::{beta_halfwidth, constants_c1_c2, BetaScheduleSpec};
use gpbandit::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GpbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Config = 3,
    Numerical = 4,
    Unsupported = 5,
    DomainExhausted = 6,
    Objective = 7,
    Io = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GpbKernelFamily {
    SquaredExponential = 0,
    Matern = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GpbLenientKind {
    Indicator = 0,
    Gap = 1,
    Hinge = 2,
}

/// Opaque GP posterior with a fixed input dimension.
pub struct GpbPosterior {
    state: PosteriorState,
    dim: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn status_of(e: &Error) -> GpbStatus {
    match e {
        Error::Input(_) => GpbStatus::InvalidInput,
        Error::Config { .. } | Error::Json(_) => GpbStatus::Config,
        Error::Numerical(_) => GpbStatus::Numerical,
        Error::Unsupported(_) => GpbStatus::Unsupported,
        Error::DomainExhausted => GpbStatus::DomainExhausted,
        Error::Objective(_) => GpbStatus::Objective,
        Error::Io(_) | Error::Csv(_) => GpbStatus::Io,
    }
}

fn fail(status: GpbStatus, message: impl Into<String>) -> GpbStatus {
    let message = message.into();
    LAST_ERROR.with(|m| *m.borrow_mut() = message);
    status
}

/// Runs `f`, recording errors and converting panics.
fn guard(f: impl FnOnce() -> Result<(), GpbStatus>) -> GpbStatus {
    LAST_ERROR.with(|m| m.borrow_mut().clear());
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GpbStatus::Ok,
        Ok(Err(s)) => s,
        Err(payload) => {
            let text = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(GpbStatus::Panic, format!("panic: {text}"))
        }
    }
}

fn lib<T>(r: gpbandit::Result<T>) -> Result<T, GpbStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), GpbStatus> {
    if p.is_null() {
        Err(fail(GpbStatus::NullPointer, format!("`{name}` is null")))
    } else {
        Ok(())
    }
}

/// # Safety
/// `p` must be null-checked and point at `len` readable values.
unsafe fn point<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], GpbStatus> {
    non_null(p, name)?;
    Ok(slice::from_raw_parts(p, len))
}

fn kernel(family: GpbKernelFamily, lengthscale: f64, scale: f64, nu: f64) -> Result<KernelSpec, GpbStatus> {
    let k = match family {
        GpbKernelFamily::SquaredExponential => KernelSpec::squared_exponential(lengthscale, scale),
        GpbKernelFamily::Matern => KernelSpec::matern(nu, lengthscale, scale),
    };
    lib(k.validate())?;
    Ok(k)
}

unsafe fn c_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, GpbStatus> {
    non_null(p, name)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(GpbStatus::InvalidInput, format!("`{name}` is not UTF-8")))
}

/// Copies the calling thread's last error message (NUL terminated) into
/// `buf`. `needed` receives the full length including the terminator.
/// Passing a null `buf` only reports the length.
///
/// # Safety
/// `buf` must be null or writable for `len` bytes; `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn gpb_last_error_message(buf: *mut c_char, len: usize, needed: *mut usize) -> GpbStatus {
    let message = LAST_ERROR.with(|m| m.borrow().clone());
    let bytes = message.as_bytes();
    if !needed.is_null() {
        *needed = bytes.len() + 1;
    }
    if buf.is_null() {
        return GpbStatus::Ok;
    }
    if len < bytes.len() + 1 {
        return GpbStatus::BufferTooSmall;
    }
    ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), bytes.len());
    *buf.add(bytes.len()) = 0;
    GpbStatus::Ok
}

/// `k(x, y)` for two points of dimension `dim`. `nu` is ignored for the
/// squared exponential.
///
/// # Safety
/// `x` and `y` must point at `dim` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gpb_kernel_eval(
    family: GpbKernelFamily,
    lengthscale: f64,
    scale: f64,
    nu: f64,
    x: *const f64,
    y: *const f64,
    dim: usize,
    out: *mut f64,
) -> GpbStatus {
    guard(|| {
        non_null(out, "out")?;
        let k = kernel(family, lengthscale, scale, nu)?;
        let (x, y) = (point(x, dim, "x")?, point(y, dim, "y")?);
        *out = lib(k.eval(x, y))?;
        Ok(())
    })
}

/// Creates an empty posterior. Free it with [`gpb_posterior_free`].
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gpb_posterior_new(
    family: GpbKernelFamily,
    lengthscale: f64,
    scale: f64,
    nu: f64,
    lambda: f64,
    dim: usize,
    out: *mut *mut GpbPosterior,
) -> GpbStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        if dim == 0 {
            return Err(fail(GpbStatus::InvalidInput, "dimension must be positive"));
        }
        let state = lib(PosteriorState::new(kernel(family, lengthscale, scale, nu)?, lambda))?;
        *out = Box::into_raw(Box::new(GpbPosterior { state, dim }));
        Ok(())
    })
}

/// # Safety
/// `handle` must be null or come from [`gpb_posterior_new`], and must not
/// be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gpb_posterior_free(handle: *mut GpbPosterior) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Appends one observation `(x, y)`.
///
/// # Safety
/// `handle` must be live; `x` must point at `dim` values.
#[no_mangle]
pub unsafe extern "C" fn gpb_posterior_append(handle: *mut GpbPosterior, x: *const f64, y: f64) -> GpbStatus {
    guard(|| {
        non_null(handle, "handle")?;
        let h = &mut *handle;
        let x = point(x, h.dim, "x")?;
        lib(h.state.append_observation(x, y))
    })
}

/// Posterior mean and variance at `x`.
///
/// # Safety
/// `handle` must be live; `x` must point at `dim` values; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn gpb_posterior_predict(
    handle: *const GpbPosterior,
    x: *const f64,
    mean: *mut f64,
    variance: *mut f64,
) -> GpbStatus {
    guard(|| {
        non_null(handle, "handle")?;
        non_null(mean, "mean")?;
        non_null(variance, "variance")?;
        let h = &*handle;
        let (m, v) = lib(h.state.posterior_at(point(x, h.dim, "x")?))?;
        *mean = m;
        *variance = v;
        Ok(())
    })
}

/// Number of observations and `½ ln det(I + K/λ)` of the observed inputs.
///
/// # Safety
/// `handle` must be live; outputs must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn gpb_posterior_summary(
    handle: *const GpbPosterior,
    count: *mut usize,
    information_gain: *mut f64,
) -> GpbStatus {
    guard(|| {
        non_null(handle, "handle")?;
        let h = &*handle;
        if !count.is_null() {
            *count = h.state.len();
        }
        if !information_gain.is_null() {
            *information_gain = h.state.information_gain();
        }
        Ok(())
    })
}

/// Per-round lenient regret contribution of instantaneous regret `r`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gpb_lenient_regret(kind: GpbLenientKind, r: f64, gap: f64, out: *mut f64) -> GpbStatus {
    guard(|| {
        non_null(out, "out")?;
        if !(gap > 0.0) || r.is_nan() {
            return Err(fail(GpbStatus::InvalidInput, "need r not NaN and a positive gap"));
        }
        let kind = match kind {
            GpbLenientKind::Indicator => LenientKind::Indicator,
            GpbLenientKind::Gap => LenientKind::Gap,
            GpbLenientKind::Hinge => LenientKind::Hinge,
        };
        *out = phi(kind, r, gap);
        Ok(())
    })
}

/// The bad-round constants for regularizer `lambda`.
///
/// # Safety
/// Outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn gpb_constants(lambda: f64, c1: *mut f64, c2: *mut f64) -> GpbStatus {
    guard(|| {
        non_null(c1, "c1")?;
        non_null(c2, "c2")?;
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(fail(GpbStatus::InvalidInput, "lambda must be positive and finite"));
        }
        (*c1, *c2) = constants_c1_c2(lambda);
        Ok(())
    })
}

/// RKHS confidence half-width for round `t ≥ 1`, given the information
/// gain of the first `t − 1` observations.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gpb_beta_rkhs(
    norm_bound: f64,
    noise_std: f64,
    lambda: f64,
    delta: f64,
    t: usize,
    gain: f64,
    out: *mut f64,
) -> GpbStatus {
    guard(|| {
        non_null(out, "out")?;
        let spec = BetaScheduleSpec::Rkhs {
            norm_bound,
            noise_std,
            lambda,
            delta,
        };
        lib(spec.validate())?;
        *out = lib(beta_halfwidth(&spec, t, gain))?;
        Ok(())
    })
}

/// Runs a suite from a JSON config and writes its files to `out_dir`
/// (overriding the config's output). Returns `Objective` when every
/// episode failed.
///
/// # Safety
/// Both arguments must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn gpb_run_suite_json(config_json: *const c_char, out_dir: *const c_char) -> GpbStatus {
    guard(|| {
        let text = c_str(config_json, "config_json")?;
        let dir = PathBuf::from(c_str(out_dir, "out_dir")?);
        let mut config = lib(ExperimentConfig::from_json_str(text))?;
        config.output = dir.clone();
        let suite = lib(run_suite(&config, Some(1)))?;
        lib(suite.write(&dir))?;
        if suite.all_failed() {
            return Err(fail(GpbStatus::Objective, "every episode failed"));
        }
        Ok(())
    })
}
