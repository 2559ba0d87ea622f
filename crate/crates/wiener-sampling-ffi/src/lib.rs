//! C ABI over the sampling-policy library: parse a delay model once, then
//! solve for the optimal policy or run seeded simulation summaries against
//! it from any language that can call C.
//!
//! Conventions:
//! - Every fallible call returns a [`WsStatus`]; `WS_STATUS_OK` is zero.
//! - Results are written through non-null out pointers, touched only on
//!   success.
//! - String arguments are NUL-terminated UTF-8.
//! - On failure, [`ws_last_error`] retrieves a human-readable message for
//!   the most recent error on the calling thread.
//! - [`WsModel`] handles come from [`ws_model_parse`] and must be released
//!   with [`ws_model_free`]; they are plain immutable data and safe to use
//!   from several threads at once.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use wiener_sampling::analytic::AnalyticContext;
use wiener_sampling::delay::DelayModel;
use wiener_sampling::policy::{OnlineConfig, PolicyKind, PolicySpec};
use wiener_sampling::sim::run_replications;
use wiener_sampling::solver::{solve_constrained, solve_unconstrained};
use wiener_sampling::Error;

/// Opaque handle to a parsed delay model.
pub struct WsModel(DelayModel);

/// Status code returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WsStatus {
    /// Success.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// A model or policy specification did not parse, or an argument was
    /// out of range.
    ParseError = 3,
    /// The optimization failed to converge or the integrand was not
    /// representable.
    SolverError = 4,
    /// The simulation aborted, for example on a non-finite state.
    SimulationError = 5,
}

/// Optimal sampling policy for one delay model.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WsSolution {
    /// Optimal renewal-reward ratio.
    pub gamma_star: f64,
    /// Dual level of the sampling-frequency constraint; 0 when slack.
    pub nu_star: f64,
    /// Sampling threshold `sqrt(3 (gamma_star + nu_star))`.
    pub tau_star: f64,
    /// Mean frame length under the optimal threshold.
    pub frame_length_star: f64,
    /// Long-run time-average mean squared estimation error.
    pub mse_opt: f64,
    /// Absolute root residual of the solved optimality condition.
    pub residual: f64,
}

/// Aggregate results of a batch of simulated replications.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WsSummary {
    /// Frames simulated per replication.
    pub frames: u64,
    /// Number of replications.
    pub replications: u64,
    /// Mean over replications of the final time-average MSE.
    pub final_timeavg_mse_mean: f64,
    /// Standard error of that mean across replications.
    pub final_timeavg_mse_se: f64,
    /// Mean frame length over all replications.
    pub final_mean_length: f64,
    /// Frames whose integration step tripped the resolution warning.
    pub warning_frames: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn fail(status: WsStatus, message: &str) -> WsStatus {
    set_last_error(message);
    status
}

fn status_for(err: &Error) -> WsStatus {
    match err {
        Error::InvalidArgument(_) | Error::Parse(_) => WsStatus::ParseError,
        Error::Solver(_) | Error::Integration(_) => WsStatus::SolverError,
        Error::NonFinite(_) | Error::MismatchedModels(_) | Error::Io(_) => {
            WsStatus::SimulationError
        }
    }
}

fn fail_with(err: &Error) -> WsStatus {
    fail(status_for(err), &err.to_string())
}

/// Runs `body` with panics converted into `SimulationError` so unwinding
/// never crosses the C boundary.
fn guarded<T>(body: impl FnOnce() -> Result<T, WsStatus>) -> Result<T, WsStatus> {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(result) => result,
        Err(_) => Err(fail(WsStatus::SimulationError, "internal panic")),
    }
}

unsafe fn str_arg<'a>(ptr: *const c_char) -> Result<&'a str, WsStatus> {
    if ptr.is_null() {
        return Err(fail(WsStatus::NullArgument, "string argument is null"));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail(WsStatus::InvalidUtf8, "string argument is not valid UTF-8"))
}

fn effective_f_max(f_max: f64) -> f64 {
    if f_max > 0.0 {
        f_max
    } else {
        f64::INFINITY
    }
}

/// Parses a delay model specification such as `"det:1"`, `"uniform:0,1"`,
/// or `"lognormal:0.8,1.2"` into a new handle written to `out`.
///
/// # Safety
/// `spec` must point to a NUL-terminated string and `out` to a writable
/// `WsModel*` slot. The returned handle must be released with
/// [`ws_model_free`].
#[no_mangle]
pub unsafe extern "C" fn ws_model_parse(spec: *const c_char, out: *mut *mut WsModel) -> WsStatus {
    if out.is_null() {
        return fail(WsStatus::NullArgument, "out pointer is null");
    }
    let result = guarded(|| {
        let text = str_arg(spec)?;
        DelayModel::parse(text).map_err(|e| fail_with(&e))
    });
    match result {
        Ok(model) => {
            out.write(Box::into_raw(Box::new(WsModel(model))));
            WsStatus::Ok
        }
        Err(status) => status,
    }
}

/// Releases a handle returned by [`ws_model_parse`]. Passing null is a
/// no-op.
///
/// # Safety
/// `model` must be null or a pointer previously returned by
/// [`ws_model_parse`] that has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn ws_model_free(model: *mut WsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Solves for the optimal sampling policy under a mean sampling-frequency
/// budget of `f_max` samples per unit time; pass `INFINITY` or any value
/// `<= 0` for the unconstrained problem.
///
/// # Safety
/// `model` must be a live handle from [`ws_model_parse`] and `out` must
/// point to writable memory for one [`WsSolution`].
#[no_mangle]
pub unsafe extern "C" fn ws_solve(
    model: *const WsModel,
    f_max: f64,
    out: *mut WsSolution,
) -> WsStatus {
    if model.is_null() || out.is_null() {
        return fail(WsStatus::NullArgument, "model and out must be non-null");
    }
    let model = &(*model).0;
    let result = guarded(|| {
        let ctx = AnalyticContext::new(model.clone()).map_err(|e| fail_with(&e))?;
        let f_max = effective_f_max(f_max);
        let sol = if f_max.is_finite() {
            solve_constrained(&ctx, f_max)
        } else {
            solve_unconstrained(&ctx)
        };
        sol.map_err(|e| fail_with(&e))
    });
    match result {
        Ok(sol) => {
            out.write(WsSolution {
                gamma_star: sol.gamma_star,
                nu_star: sol.nu_star,
                tau_star: sol.tau_star(),
                frame_length_star: sol.frame_length_star,
                mse_opt: sol.mse_opt,
                residual: sol.residual,
            });
            WsStatus::Ok
        }
        Err(status) => status,
    }
}

/// Simulates `replications` independent traces of `frames` frames under a
/// policy specification (`"online"`, `"optimal"`, `"zerowait"`, or
/// `"const:W"`) and writes the aggregate summary to `out`.
///
/// The online policy runs with step-size exponent 1, queue scaling `v`,
/// and the frequency budget `f_max` (`INFINITY` or `<= 0` for none);
/// the other policies ignore `v`. Identical arguments always produce
/// identical results.
///
/// # Safety
/// `model` must be a live handle from [`ws_model_parse`], `policy` a
/// NUL-terminated string, and `out` writable memory for one [`WsSummary`].
#[no_mangle]
pub unsafe extern "C" fn ws_simulate_summary(
    model: *const WsModel,
    policy: *const c_char,
    frames: u64,
    replications: u64,
    seed: u64,
    f_max: f64,
    v: f64,
    out: *mut WsSummary,
) -> WsStatus {
    if model.is_null() || out.is_null() {
        return fail(WsStatus::NullArgument, "model and out must be non-null");
    }
    let model = &(*model).0;
    let policy = match str_arg(policy) {
        Ok(text) => text,
        Err(status) => return status,
    };
    let result = guarded(|| {
        let f_max = effective_f_max(f_max);
        let spec = PolicySpec::parse(policy).map_err(|e| fail_with(&e))?;
        let kind = match spec {
            PolicySpec::Online => {
                let config =
                    OnlineConfig::for_model(model, 1.0, f_max, v).map_err(|e| fail_with(&e))?;
                PolicyKind::Online(config)
            }
            PolicySpec::Optimal => {
                let ctx = AnalyticContext::new(model.clone()).map_err(|e| fail_with(&e))?;
                let sol = if f_max.is_finite() {
                    solve_constrained(&ctx, f_max)
                } else {
                    solve_unconstrained(&ctx)
                };
                PolicyKind::OptimalThreshold(sol.map_err(|e| fail_with(&e))?)
            }
            PolicySpec::ConstantWait(w) => PolicyKind::ConstantWait(w),
            PolicySpec::ZeroWait => PolicyKind::ZeroWait,
        };
        run_replications(model, &kind, frames, replications, seed, None)
            .map_err(|e| fail_with(&e))
    });
    match result {
        Ok(traces) => {
            let n = traces.len() as f64;
            let finals: Vec<f64> = traces.iter().map(|t| t.final_time_average_mse()).collect();
            let mean = finals.iter().sum::<f64>() / n;
            let se = if traces.len() > 1 {
                let var =
                    finals.iter().map(|f| (f - mean) * (f - mean)).sum::<f64>() / (n - 1.0);
                (var / n).sqrt()
            } else {
                0.0
            };
            let mean_length =
                traces.iter().map(|t| t.final_mean_length()).sum::<f64>() / n;
            let warning_frames = traces.iter().map(|t| t.aggregates.warning_frames).sum();
            out.write(WsSummary {
                frames,
                replications,
                final_timeavg_mse_mean: mean,
                final_timeavg_mse_se: se,
                final_mean_length: mean_length,
                warning_frames,
            });
            WsStatus::Ok
        }
        Err(status) => status,
    }
}

/// Copies the calling thread's most recent error message (NUL-terminated,
/// possibly truncated) into `buffer` and returns the full length in bytes
/// including the terminator. A null or zero-capacity buffer just reports
/// the required length; no error so far reports an empty string.
///
/// # Safety
/// `buffer` must be null or point to at least `capacity` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ws_last_error(buffer: *mut c_char, capacity: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let message = slot.borrow();
        let bytes = message.as_bytes_with_nul();
        if !buffer.is_null() && capacity > 0 {
            let copy_len = bytes.len().min(capacity);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buffer.cast(), copy_len);
            // Keep the copy terminated even when truncated.
            *buffer.add(copy_len - 1) = 0;
        }
        bytes.len()
    })
}

/// Returns the library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ws_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
