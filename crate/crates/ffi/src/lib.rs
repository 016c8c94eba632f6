//! C ABI over `hawkes-ddp`.
//!
//! Objects are opaque handles created by `hd_*_new`/`hd_*_read`/`hd_*_run`
//! and released with the matching `hd_*_free`. Every fallible function
//! returns an [`HdStatus`]; on failure `hd_last_error_message` describes the
//! error for the calling thread. Dimension indices are 0-based. Panics never
//! cross the boundary; they are reported as `HD_STATUS_PANIC`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use hawkes_ddp::mcmc::{self, McmcConfig, PosteriorSamples};
use hawkes_ddp::simulator::{simulate_branching, SimScenario, Truth};
use hawkes_ddp::svi::{self, SviConfig, SviResult};
use hawkes_ddp::{io, Compensator, Error, EventSequence, HawkesParams};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Domain = 4,
    Config = 5,
    Malformed = 6,
    Panic = 7,
}

pub struct HdSequence(EventSequence);
pub struct HdParams(HawkesParams);
pub struct HdMcmcResult(PosteriorSamples);
pub struct HdSviResult(SviResult);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> HdStatus {
    match e {
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => HdStatus::Io,
        Error::Config(_) => HdStatus::Config,
        Error::Malformed { .. } => HdStatus::Malformed,
        Error::Domain(_) | Error::NonFiniteLikelihood { .. } | Error::NonStationary(_) => HdStatus::Domain,
        _ => HdStatus::InvalidArgument,
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

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> HdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            HdStatus::Ok
        }
        Ok(Err(Fail::Null(name))) => {
            set_error(&format!("{name} is null"));
            HdStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {msg}"));
            HdStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(name))
}

unsafe fn path_arg(p: *const c_char, name: &'static str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(Fail::Null(name));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|e| Error::Config(format!("{name} is not UTF-8: {e}")))?;
    Ok(PathBuf::from(s))
}

/// Parses an optional JSON config; null gives the defaults.
unsafe fn json_arg<T: serde::de::DeserializeOwned + Default>(p: *const c_char) -> Result<T, Fail> {
    if p.is_null() {
        return Ok(T::default());
    }
    let s = CStr::from_ptr(p).to_str().map_err(|e| Error::Config(format!("config is not UTF-8: {e}")))?;
    Ok(serde_json::from_str(s).map_err(|e| Error::Config(format!("config: {e}")))?)
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn write<T>(out: *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("out"));
    }
    *out = value;
    Ok(())
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn hd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a sequence from `n` strictly increasing times and 0-based dims.
#[no_mangle]
pub unsafe extern "C" fn hd_sequence_new(
    times: *const f64,
    dims: *const usize,
    n: usize,
    horizon: f64,
    num_dims: usize,
    out: *mut *mut HdSequence,
) -> HdStatus {
    guard(|| {
        let (t, d) = if n == 0 {
            (Vec::new(), Vec::new())
        } else {
            if times.is_null() {
                return Err(Fail::Null("times"));
            }
            if dims.is_null() {
                return Err(Fail::Null("dims"));
            }
            (std::slice::from_raw_parts(times, n).to_vec(), std::slice::from_raw_parts(dims, n).to_vec())
        };
        put(out, HdSequence(EventSequence::new(t, d, horizon, num_dims)?))
    })
}

/// Reads an event CSV (`t,d`, 1-based marks) and its JSON sidecar.
#[no_mangle]
pub unsafe extern "C" fn hd_sequence_read(path: *const c_char, out: *mut *mut HdSequence) -> HdStatus {
    guard(|| put(out, HdSequence(io::read_sequence(&path_arg(path, "path")?)?)))
}

#[no_mangle]
pub unsafe extern "C" fn hd_sequence_write(seq: *const HdSequence, path: *const c_char) -> HdStatus {
    guard(|| Ok(io::write_sequence(&as_ref(seq, "seq")?.0, &path_arg(path, "path")?)?))
}

#[no_mangle]
pub unsafe extern "C" fn hd_sequence_len(seq: *const HdSequence, out: *mut usize) -> HdStatus {
    guard(|| write(out, as_ref(seq, "seq")?.0.len()))
}

/// Copies up to `cap` times and 0-based dims into caller buffers.
#[no_mangle]
pub unsafe extern "C" fn hd_sequence_events(
    seq: *const HdSequence,
    times: *mut f64,
    dims: *mut usize,
    cap: usize,
    written: *mut usize,
) -> HdStatus {
    guard(|| {
        let s = &as_ref(seq, "seq")?.0;
        let m = s.len().min(cap);
        if m > 0 {
            if times.is_null() {
                return Err(Fail::Null("times"));
            }
            if dims.is_null() {
                return Err(Fail::Null("dims"));
            }
            ptr::copy_nonoverlapping(s.times().as_ptr(), times, m);
            ptr::copy_nonoverlapping(s.dims().as_ptr(), dims, m);
        }
        write(written, m)
    })
}

#[no_mangle]
pub unsafe extern "C" fn hd_sequence_free(seq: *mut HdSequence) {
    if !seq.is_null() {
        drop(Box::from_raw(seq));
    }
}

/// The two-dimensional Beta-mixture truth of the simulation study.
#[no_mangle]
pub unsafe extern "C" fn hd_params_paper_beta(eps: f64, out: *mut *mut HdParams) -> HdStatus {
    guard(|| match Truth::paper_beta(eps)? {
        Truth::Params { params } => put(out, HdParams(params)),
        Truth::Exponential(_) => unreachable!(),
    })
}

/// Reads parameters from JSON (`mu`, `alpha`, `excitation`).
#[no_mangle]
pub unsafe extern "C" fn hd_params_read_json(path: *const c_char, out: *mut *mut HdParams) -> HdStatus {
    guard(|| put(out, HdParams(io::read_params(&path_arg(path, "path")?)?)))
}

#[no_mangle]
pub unsafe extern "C" fn hd_params_write_json(params: *const HdParams, path: *const c_char) -> HdStatus {
    guard(|| Ok(io::write_params(&as_ref(params, "params")?.0, &path_arg(path, "path")?)?))
}

/// Excitation density φ_{parent,child}(t).
#[no_mangle]
pub unsafe extern "C" fn hd_params_excitation(
    params: *const HdParams,
    parent: usize,
    child: usize,
    t: f64,
    out: *mut f64,
) -> HdStatus {
    guard(|| write(out, as_ref(params, "params")?.0.excitation().eval(parent, child, t)?))
}

/// Spectral radius of the α matrix.
#[no_mangle]
pub unsafe extern "C" fn hd_params_spectral_radius(params: *const HdParams, out: *mut f64) -> HdStatus {
    guard(|| {
        let p = &as_ref(params, "params")?.0;
        write(out, hawkes_ddp::spectral_radius(p.alpha_flat(), p.num_dims())?)
    })
}

#[no_mangle]
pub unsafe extern "C" fn hd_params_free(params: *mut HdParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

/// Observed-data log-likelihood; `exact_compensator` selects the exact
/// compensator instead of the default approximation.
#[no_mangle]
pub unsafe extern "C" fn hd_log_likelihood(
    params: *const HdParams,
    seq: *const HdSequence,
    exact_compensator: bool,
    out: *mut f64,
) -> HdStatus {
    guard(|| {
        let mode = if exact_compensator { Compensator::Exact } else { Compensator::Approx };
        write(out, hawkes_ddp::log_likelihood(&as_ref(params, "params")?.0, &as_ref(seq, "seq")?.0, mode)?)
    })
}

/// Simulates on `[0, horizon]` by the cluster representation.
#[no_mangle]
pub unsafe extern "C" fn hd_simulate(
    params: *const HdParams,
    horizon: f64,
    seed: u64,
    out: *mut *mut HdSequence,
) -> HdStatus {
    guard(|| {
        let truth = Truth::Params { params: as_ref(params, "params")?.0.clone() };
        let sim = simulate_branching(&SimScenario { truth, horizon, seed })?;
        put(out, HdSequence(sim.sequence))
    })
}

/// Runs one MCMC chain. `config_json` is an MCMC config object or null for
/// the defaults.
#[no_mangle]
pub unsafe extern "C" fn hd_mcmc_run(
    seq: *const HdSequence,
    config_json: *const c_char,
    support: f64,
    out: *mut *mut HdMcmcResult,
) -> HdStatus {
    guard(|| {
        let cfg: McmcConfig = json_arg(config_json)?;
        put(out, HdMcmcResult(mcmc::run_chain(&cfg, &as_ref(seq, "seq")?.0, support)?))
    })
}

#[no_mangle]
pub unsafe extern "C" fn hd_mcmc_num_draws(res: *const HdMcmcResult, out: *mut usize) -> HdStatus {
    guard(|| write(out, as_ref(res, "res")?.0.draws.len()))
}

/// Mean observed-data log-likelihood over retained draws.
#[no_mangle]
pub unsafe extern "C" fn hd_mcmc_mean_log_lik(res: *const HdMcmcResult, out: *mut f64) -> HdStatus {
    guard(|| write(out, as_ref(res, "res")?.0.mean_log_lik()))
}

/// Posterior draw `index` as parameters.
#[no_mangle]
pub unsafe extern "C" fn hd_mcmc_draw(res: *const HdMcmcResult, index: usize, out: *mut *mut HdParams) -> HdStatus {
    guard(|| {
        let r = &as_ref(res, "res")?.0;
        let d = r.draws.get(index).ok_or(Error::Index { index, dims: r.draws.len() })?;
        put(out, HdParams(d.params(r.support)?))
    })
}

#[no_mangle]
pub unsafe extern "C" fn hd_mcmc_write_csv(res: *const HdMcmcResult, path: *const c_char) -> HdStatus {
    guard(|| Ok(as_ref(res, "res")?.0.write_csv(&path_arg(path, "path")?)?))
}

#[no_mangle]
pub unsafe extern "C" fn hd_mcmc_free(res: *mut HdMcmcResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// Runs stochastic variational inference. `config_json` is an SVI config
/// object or null for the defaults.
#[no_mangle]
pub unsafe extern "C" fn hd_svi_run(
    seq: *const HdSequence,
    config_json: *const c_char,
    support: f64,
    out: *mut *mut HdSviResult,
) -> HdStatus {
    guard(|| {
        let cfg: SviConfig = json_arg(config_json)?;
        put(out, HdSviResult(svi::run_svi(&cfg, &as_ref(seq, "seq")?.0, support)?))
    })
}

#[no_mangle]
pub unsafe extern "C" fn hd_svi_final_elbo(res: *const HdSviResult, out: *mut f64) -> HdStatus {
    guard(|| write(out, as_ref(res, "res")?.0.final_elbo()))
}

/// Parameters at the variational means.
#[no_mangle]
pub unsafe extern "C" fn hd_svi_mean_params(res: *const HdSviResult, out: *mut *mut HdParams) -> HdStatus {
    guard(|| put(out, HdParams(as_ref(res, "res")?.0.state.mean_params()?)))
}

/// Writes the variational state as JSON.
#[no_mangle]
pub unsafe extern "C" fn hd_svi_write_state(res: *const HdSviResult, path: *const c_char) -> HdStatus {
    guard(|| Ok(as_ref(res, "res")?.0.state.write_json(&path_arg(path, "path")?)?))
}

#[no_mangle]
pub unsafe extern "C" fn hd_svi_free(res: *mut HdSviResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}
