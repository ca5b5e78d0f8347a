//! C interface to the `ctdelay` solvers and simulator.
//!
//! Objects cross the boundary as opaque pointers created by `*_new` or by a
//! computation and released with the matching `*_free`. Every fallible
//! function returns a [`CtStatus`]; on failure a description is available
//! from [`ct_last_error`] on the same thread until the next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ctdelay::curve::curve_for_generation;
use ctdelay::kappa::{self, SolverSettings};
use ctdelay::mc::{self, Caps};
use ctdelay::{approx, endemic, AgeProfile, DelayKernel, Direction, Error, Grid, KappaCurve, Mode, Rates, TraceConfig};

/// Result of a call. Values 1 to 4 match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CtStatus {
    Ok = 0,
    Io = 1,
    InvalidArgument = 2,
    SolverFailure = 3,
    InsufficientSample = 4,
    NullPointer = 5,
    Panic = 6,
}

/// Tracing direction codes accepted as `uint32_t`.
#[repr(C)]
pub enum CtDirection {
    Backward = 0,
    Forward = 1,
    Full = 2,
}

/// Tracing mode codes accepted as `uint32_t`.
#[repr(C)]
pub enum CtMode {
    OneStep = 0,
    Recursive = 1,
}

/// Delay kernel codes accepted as `uint32_t`; the parameter is the delay or
/// the mean delay.
#[repr(C)]
pub enum CtDelayKind {
    Fixed = 0,
    Exponential = 1,
}

/// First-order reproduction number with tracing and its two terms.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CtRct {
    pub r0: f64,
    pub p: f64,
    pub backward_term: f64,
    pub forward_term: f64,
    pub rct: f64,
}

/// Rates, delay and optional latency of a scenario.
pub struct CtModel {
    profile: AgeProfile,
    kernel: DelayKernel,
}

/// A survival curve on a uniform age grid.
pub struct CtCurve {
    curve: KappaCurve,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> CtStatus {
    match err.exit_code() {
        2 => CtStatus::InvalidArgument,
        3 => CtStatus::SolverFailure,
        4 => CtStatus::InsufficientSample,
        _ => CtStatus::Io,
    }
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), (CtStatus, String)>) -> CtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CtStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            CtStatus::Panic
        }
    }
}

fn lift(err: Error) -> (CtStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(name: &str) -> (CtStatus, String) {
    (CtStatus::NullPointer, format!("{name} is null"))
}

fn bad(msg: &str) -> (CtStatus, String) {
    (CtStatus::InvalidArgument, msg.to_owned())
}

fn direction(code: u32) -> Result<Direction, (CtStatus, String)> {
    match code {
        0 => Ok(Direction::Backward),
        1 => Ok(Direction::Forward),
        2 => Ok(Direction::Full),
        _ => Err(bad("unknown direction code")),
    }
}

fn mode(code: u32) -> Result<Mode, (CtStatus, String)> {
    match code {
        0 => Ok(Mode::OneStep),
        1 => Ok(Mode::Recursive),
        _ => Err(bad("unknown mode code")),
    }
}

unsafe fn model_ref<'a>(model: *const CtModel) -> Result<&'a CtModel, (CtStatus, String)> {
    model.as_ref().ok_or_else(|| null("model"))
}

unsafe fn curve_ref<'a>(curve: *const CtCurve) -> Result<&'a CtCurve, (CtStatus, String)> {
    curve.as_ref().ok_or_else(|| null("curve"))
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ct_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn ct_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a model. `latency <= 0` means no latency period.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn ct_model_new(
    beta: f64,
    alpha: f64,
    sigma: f64,
    p: f64,
    delay_kind: u32,
    delay: f64,
    latency: f64,
    out: *mut *mut CtModel,
) -> CtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let rates = Rates::new(beta, alpha, sigma, p).map_err(lift)?;
        let kernel = match delay_kind {
            0 => DelayKernel::dirac(delay),
            1 => DelayKernel::exponential(delay),
            _ => return Err(bad("unknown delay kind")),
        }
        .map_err(lift)?;
        let profile = if latency > 0.0 {
            AgeProfile::fixed_latency(rates, latency).map_err(lift)?
        } else {
            AgeProfile::Constant(rates)
        };
        *out = Box::into_raw(Box::new(CtModel { profile, kernel }));
        Ok(())
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` must come from [`ct_model_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ct_model_free(model: *mut CtModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

fn default_grid(model: &CtModel) -> Result<Grid, (CtStatus, String)> {
    Grid::for_profile(&model.profile, &model.kernel).map_err(lift)
}

/// Solves for the survival curve of `generation` (the index case for
/// backward tracing) on the default grid.
///
/// # Safety
/// `model` must be a live model and `out` valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn ct_solve(
    model: *const CtModel,
    direction_code: u32,
    mode_code: u32,
    generation: u32,
    out: *mut *mut CtCurve,
) -> CtStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let dir = direction(direction_code)?;
        let config = TraceConfig::new(dir, mode(mode_code)?, generation.max(1) as usize).map_err(lift)?;
        let settings = SolverSettings::new(default_grid(m)?);
        let curves = kappa::solve(&m.profile, &m.kernel, &config, &settings).map_err(lift)?;
        let g = if dir == Direction::Backward { 0 } else { generation as usize };
        let curve = curve_for_generation(&curves, g)
            .cloned()
            .ok_or_else(|| bad("generation not available"))?;
        *out = Box::into_raw(Box::new(CtCurve { curve }));
        Ok(())
    })
}

/// Estimates the survival curve of `generation` from `replicas`
/// simulated outbreaks on the default grid.
///
/// # Safety
/// `model` must be a live model, `out` valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn ct_simulate(
    model: *const CtModel,
    direction_code: u32,
    mode_code: u32,
    generation: u32,
    replicas: u64,
    seed: u64,
    out: *mut *mut CtCurve,
) -> CtStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out.is_null() {
            return Err(null("out"));
        }
        if replicas == 0 {
            return Err(bad("replicas must be positive"));
        }
        let config = TraceConfig::new(direction(direction_code)?, mode(mode_code)?, generation.max(1) as usize)
            .map_err(lift)?;
        let grid = default_grid(m)?;
        let caps = Caps::for_generation(&config, generation);
        let ensemble = mc::run_ensemble(&m.profile, &m.kernel, &config, &caps, replicas, seed, &grid);
        let emp = mc::estimate_kappa(&ensemble, generation, &grid, &config).map_err(lift)?;
        *out = Box::into_raw(Box::new(CtCurve { curve: emp.curve }));
        Ok(())
    })
}

/// Releases a curve; null is ignored.
///
/// # Safety
/// `curve` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ct_curve_free(curve: *mut CtCurve) {
    if !curve.is_null() {
        drop(Box::from_raw(curve));
    }
}

/// Number of grid nodes, or 0 for null.
///
/// # Safety
/// `curve` must be null or a live curve.
#[no_mangle]
pub unsafe extern "C" fn ct_curve_len(curve: *const CtCurve) -> usize {
    curve.as_ref().map_or(0, |c| c.curve.grid().len())
}

/// Age step of the grid, or NaN for null.
///
/// # Safety
/// `curve` must be null or a live curve.
#[no_mangle]
pub unsafe extern "C" fn ct_curve_step(curve: *const CtCurve) -> f64 {
    curve.as_ref().map_or(f64::NAN, |c| c.curve.grid().h())
}

/// Copies the values into `buf`, which holds `len` doubles; `len` must be
/// at least [`ct_curve_len`].
///
/// # Safety
/// `buf` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn ct_curve_values(curve: *const CtCurve, buf: *mut f64, len: usize) -> CtStatus {
    guard(|| {
        let c = curve_ref(curve)?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let values = c.curve.values();
        if len < values.len() {
            return Err(bad("buffer too short"));
        }
        ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
        Ok(())
    })
}

/// Value at age `a`, interpolated linearly.
///
/// # Safety
/// `curve` must be a live curve and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ct_curve_at(curve: *const CtCurve, a: f64, out: *mut f64) -> CtStatus {
    guard(|| {
        let c = curve_ref(curve)?;
        if out.is_null() {
            return Err(null("out"));
        }
        if !(a >= 0.0) {
            return Err(bad("age must be nonnegative"));
        }
        *out = c.curve.at(a);
        Ok(())
    })
}

/// Integral of the contact rate against the curve.
///
/// # Safety
/// Both handles must be live and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ct_reproduction_number(
    model: *const CtModel,
    curve: *const CtCurve,
    out: *mut f64,
) -> CtStatus {
    guard(|| {
        let m = model_ref(model)?;
        let c = curve_ref(curve)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = approx::reproduction_number(&c.curve, &m.profile);
        Ok(())
    })
}

/// First-order reproduction number under full tracing with a fixed
/// (`delay_kind` 0) or exponential (1) delay of mean `t`.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ct_rct(
    r0: f64,
    p: f64,
    p_obs: f64,
    gamma: f64,
    delay_kind: u32,
    t: f64,
    out: *mut CtRct,
) -> CtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let b = match delay_kind {
            0 => approx::rct_fixed(r0, p, p_obs, gamma, t),
            1 => approx::rct_exponential(r0, p, p_obs, gamma, t),
            _ => return Err(bad("unknown delay kind")),
        }
        .map_err(lift)?;
        *out = CtRct {
            r0: b.r0,
            p: b.p,
            backward_term: b.backward_term,
            forward_term: b.forward_term,
            rct: b.rct,
        };
        Ok(())
    })
}

/// Effective removal rate of the endemic model at susceptible fraction `u`.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ct_gamma_eff(
    u: f64,
    beta: f64,
    alpha: f64,
    sigma: f64,
    p: f64,
    t: f64,
    out: *mut f64,
) -> CtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let rates = Rates::new(beta, alpha, sigma, p).map_err(lift)?;
        *out = endemic::gamma_eff(u, &rates, p, t).map_err(lift)?;
        Ok(())
    })
}
