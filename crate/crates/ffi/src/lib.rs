//! C ABI over `coupled-doa`.
//!
//! Objects cross the boundary as opaque handles owned by the caller and
//! released with the matching `*_free`. Every fallible call returns a
//! [`CdoaStatus`]; on failure a message is available from
//! [`cdoa_last_error_message`] until the next failing call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use coupled_doa::bench::{estimate_snapshots, ExperimentConfig, Method};
use coupled_doa::estimators::{error_metric, EstimateResult};
use coupled_doa::scene::{simulate, Snapshots};
use coupled_doa::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CdoaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    Io = 4,
    Parse = 5,
    Numerical = 6,
    InfeasibleScene = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

pub const CDOA_METHOD_SBLMC: u32 = 0;
pub const CDOA_METHOD_OGSBI: u32 = 1;
pub const CDOA_METHOD_BCS: u32 = 2;
pub const CDOA_METHOD_MUSIC: u32 = 3;

/// Simulated or loaded pulse data together with its ground truth.
pub struct CdoaSnapshots(Snapshots);

/// Output of one estimator run.
pub struct CdoaResult(EstimateResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> CdoaStatus {
    match e {
        Error::InvalidConfig(_) => CdoaStatus::InvalidConfig,
        Error::Io { .. } => CdoaStatus::Io,
        Error::Parse { .. } => CdoaStatus::Parse,
        Error::InfeasibleScene { .. } => CdoaStatus::InfeasibleScene,
        Error::LengthMismatch { .. } | Error::Dimension(_) => CdoaStatus::InvalidArgument,
        Error::SingularMatrix { .. }
        | Error::RankDeficient { .. }
        | Error::InvalidCoupling(_)
        | Error::OffsetOutOfRange { .. } => CdoaStatus::Numerical,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (CdoaStatus, String)>) -> CdoaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CdoaStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CdoaStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (CdoaStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (CdoaStatus, String) {
    (CdoaStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (CdoaStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (CdoaStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

fn method_of(code: u32) -> Result<Method, (CdoaStatus, String)> {
    match code {
        CDOA_METHOD_SBLMC => Ok(Method::Sblmc),
        CDOA_METHOD_OGSBI => Ok(Method::Ogsbi),
        CDOA_METHOD_BCS => Ok(Method::Bcs),
        CDOA_METHOD_MUSIC => Ok(Method::Music),
        other => Err((CdoaStatus::InvalidArgument, format!("unknown method code {other}"))),
    }
}

unsafe fn copy_out(src: &[f64], dst: *mut f64, len: usize) -> Result<(), (CdoaStatus, String)> {
    if dst.is_null() {
        return Err(null("output buffer"));
    }
    if len < src.len() {
        return Err((CdoaStatus::BufferTooSmall, format!("buffer holds {len} values, need {}", src.len())));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    Ok(())
}

/// Message for the most recent failure on this thread, or null. Valid until the next failing call.
#[no_mangle]
pub extern "C" fn cdoa_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Simulate a scene. `config_toml` is the text of an experiment config, or null for the defaults.
///
/// # Safety
/// `config_toml` must be null or a valid C string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cdoa_simulate(
    config_toml: *const c_char,
    seed: u64,
    out: *mut *mut CdoaSnapshots,
) -> CdoaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = if config_toml.is_null() {
            ExperimentConfig::default()
        } else {
            ExperimentConfig::from_toml_str(str_arg(config_toml, "config_toml")?).map_err(lib_err)?
        };
        let snaps = simulate(&cfg.scene, seed).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(CdoaSnapshots(snaps)));
        Ok(())
    })
}

/// # Safety
/// `path` must be a valid C string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cdoa_snapshots_load(path: *const c_char, out: *mut *mut CdoaSnapshots) -> CdoaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let snaps = Snapshots::load_json(str_arg(path, "path")?).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(CdoaSnapshots(snaps)));
        Ok(())
    })
}

/// # Safety
/// `snaps` must come from this library; `path` must be a valid C string.
#[no_mangle]
pub unsafe extern "C" fn cdoa_snapshots_save(snaps: *const CdoaSnapshots, path: *const c_char) -> CdoaStatus {
    guard(|| {
        let snaps = snaps.as_ref().ok_or_else(|| null("snaps"))?;
        snaps.0.save_json(str_arg(path, "path")?).map_err(lib_err)
    })
}

/// Number of true targets, 0 for a null handle.
///
/// # Safety
/// `snaps` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn cdoa_snapshots_num_targets(snaps: *const CdoaSnapshots) -> usize {
    snaps.as_ref().map_or(0, |s| s.0.scene.thetas_deg.len())
}

/// Copy the true DOAs (degrees, ascending) into `out[0..len]`.
///
/// # Safety
/// `snaps` must come from this library; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cdoa_snapshots_true_doas(snaps: *const CdoaSnapshots, out: *mut f64, len: usize) -> CdoaStatus {
    guard(|| {
        let snaps = snaps.as_ref().ok_or_else(|| null("snaps"))?;
        copy_out(&snaps.0.scene.thetas_deg, out, len)
    })
}

/// # Safety
/// `snaps` must be null or come from this library, and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cdoa_snapshots_free(snaps: *mut CdoaSnapshots) {
    if !snaps.is_null() {
        drop(Box::from_raw(snaps));
    }
}

/// Run `method` (a `CDOA_METHOD_*` code) for `k` targets; `k = 0` uses the scene's target count.
/// `config_toml` may be null for default hyperparameters.
///
/// # Safety
/// `snaps` must come from this library; `config_toml` must be null or a valid C string;
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cdoa_estimate(
    snaps: *const CdoaSnapshots,
    method: u32,
    k: usize,
    config_toml: *const c_char,
    out: *mut *mut CdoaResult,
) -> CdoaStatus {
    guard(|| {
        let snaps = snaps.as_ref().ok_or_else(|| null("snaps"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let method = method_of(method)?;
        let cfg = if config_toml.is_null() {
            ExperimentConfig::default()
        } else {
            ExperimentConfig::from_toml_str(str_arg(config_toml, "config_toml")?).map_err(lib_err)?
        };
        let k = (k > 0).then_some(k);
        let res = estimate_snapshots(&cfg, method, &snaps.0, k).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(CdoaResult(res)));
        Ok(())
    })
}

/// # Safety
/// `res` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn cdoa_result_num_doas(res: *const CdoaResult) -> usize {
    res.as_ref().map_or(0, |r| r.0.doas_deg.len())
}

/// # Safety
/// `res` must come from this library; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cdoa_result_doas(res: *const CdoaResult, out: *mut f64, len: usize) -> CdoaStatus {
    guard(|| {
        let res = res.as_ref().ok_or_else(|| null("res"))?;
        copy_out(&res.0.doas_deg, out, len)
    })
}

/// # Safety
/// `res` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn cdoa_result_spectrum_len(res: *const CdoaResult) -> usize {
    res.as_ref().map_or(0, |r| r.0.spectrum.len())
}

/// Copy spectrum angles (degrees) and powers, each of length `cdoa_result_spectrum_len`.
///
/// # Safety
/// `res` must come from this library; `angles` and `power` must each point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cdoa_result_spectrum(
    res: *const CdoaResult,
    angles: *mut f64,
    power: *mut f64,
    len: usize,
) -> CdoaStatus {
    guard(|| {
        let res = res.as_ref().ok_or_else(|| null("res"))?;
        copy_out(&res.0.angles_deg, angles, len)?;
        copy_out(&res.0.spectrum, power, len)
    })
}

/// 1 if the estimator met its stopping threshold, 0 otherwise or for a null handle.
///
/// # Safety
/// `res` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn cdoa_result_converged(res: *const CdoaResult) -> i32 {
    res.as_ref().map_or(0, |r| r.0.converged as i32)
}

/// # Safety
/// `res` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn cdoa_result_iterations(res: *const CdoaResult) -> usize {
    res.as_ref().map_or(0, |r| r.0.iters)
}

/// # Safety
/// `res` must come from this library; `path` must be a valid C string.
#[no_mangle]
pub unsafe extern "C" fn cdoa_result_save(res: *const CdoaResult, path: *const c_char) -> CdoaStatus {
    guard(|| {
        let res = res.as_ref().ok_or_else(|| null("res"))?;
        res.0.save_json(str_arg(path, "path")?).map_err(lib_err)
    })
}

/// # Safety
/// `res` must be null or come from this library, and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cdoa_result_free(res: *mut CdoaResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// Squared angle error in dB; writes `-INFINITY` on exact recovery.
///
/// # Safety
/// `est` and `truth` must point to `n_est` and `n_truth` readable doubles; `out_db` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cdoa_error_metric(
    est: *const f64,
    n_est: usize,
    truth: *const f64,
    n_truth: usize,
    out_db: *mut f64,
) -> CdoaStatus {
    guard(|| {
        if est.is_null() || truth.is_null() || out_db.is_null() {
            return Err(null("argument"));
        }
        let est = std::slice::from_raw_parts(est, n_est);
        let truth = std::slice::from_raw_parts(truth, n_truth);
        *out_db = error_metric(est, truth).map_err(lib_err)?;
        Ok(())
    })
}
