//! C interface to `vanish_damp`.
//!
//! Every function returns a `VdStatus`; results go through out-pointers.
//! On failure the message is available from `vd_last_error` on the same
//! thread until the next failing call. Handles are opaque and released with
//! the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use vanish_damp::integrate::{integrate, SystemSpec, Trajectory};
use vanish_damp::oracle;
use vanish_damp::potential::Potential;
use vanish_damp::schedule::DampingSchedule;

/// Status codes returned by every function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VdStatus {
    VdOk = 0,
    VdNullPointer = 1,
    VdInvalidArgument = 2,
    VdDomain = 3,
    VdSolver = 4,
    VdPanic = 5,
}

/// Damping schedule `a(t)`.
pub struct VdSchedule(DampingSchedule);

/// Potential `G`.
pub struct VdPotential(Potential);

/// Solved trajectory with dense output.
pub struct VdTrajectory(Trajectory);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

type Outcome = Result<(), (VdStatus, String)>;

fn guard(f: impl FnOnce() -> Outcome) -> VdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VdStatus::VdOk,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            VdStatus::VdPanic
        }
    }
}

fn null(what: &str) -> (VdStatus, String) {
    (VdStatus::VdNullPointer, format!("{what} is null"))
}

fn invalid(e: impl ToString) -> (VdStatus, String) {
    (VdStatus::VdInvalidArgument, e.to_string())
}

fn domain(e: impl ToString) -> (VdStatus, String) {
    (VdStatus::VdDomain, e.to_string())
}

unsafe fn put<T>(out: *mut T, v: T, what: &str) -> Outcome {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, (VdStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn input<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], (VdStatus, String)> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, n))
}

unsafe fn output<'a>(p: *mut f64, n: usize, what: &str) -> Result<&'a mut [f64], (VdStatus, String)> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, n))
}

unsafe fn new_handle<T>(out: *mut *mut T, v: T) -> Outcome {
    if out.is_null() {
        return Err(null("out"));
    }
    out.write(Box::into_raw(Box::new(v)));
    Ok(())
}

/// Message of the last failure on this thread; empty if none. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn vd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// `a(t) = level`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vd_schedule_constant(level: f64, out: *mut *mut VdSchedule) -> VdStatus {
    guard(|| new_handle(out, VdSchedule(DampingSchedule::constant(level).map_err(invalid)?)))
}

/// `a(t) = c / (t + offset)^gamma`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vd_schedule_power_law(c: f64, gamma: f64, offset: f64, out: *mut *mut VdSchedule) -> VdStatus {
    guard(|| new_handle(out, VdSchedule(DampingSchedule::power_law(c, gamma, offset).map_err(invalid)?)))
}

/// Evaluates `a(t)`.
///
/// # Safety
/// `s` must come from a `vd_schedule_*` constructor; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vd_schedule_rate(s: *const VdSchedule, t: f64, out: *mut f64) -> VdStatus {
    guard(|| {
        let s = handle(s, "schedule")?;
        put(out, s.0.a_at(t).map_err(domain)?, "out")
    })
}

/// `∫ a` over `[t0, t1]`; may be `+inf` for a singular start.
///
/// # Safety
/// As for `vd_schedule_rate`.
#[no_mangle]
pub unsafe extern "C" fn vd_schedule_integral(s: *const VdSchedule, t0: f64, t1: f64, out: *mut f64) -> VdStatus {
    guard(|| {
        let s = handle(s, "schedule")?;
        put(out, s.0.integral_a(t0, t1).map_err(domain)?, "out")
    })
}

/// # Safety
/// `s` must be null or a live schedule handle, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn vd_schedule_free(s: *mut VdSchedule) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

fn potential_out(out: *mut *mut VdPotential, p: Result<Potential, impl ToString>) -> VdStatus {
    guard(|| unsafe { new_handle(out, VdPotential(p.map_err(invalid)?)) })
}

/// `|x|²/2` in `dim` dimensions.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vd_potential_quadratic(dim: usize, out: *mut *mut VdPotential) -> VdStatus {
    potential_out(out, Potential::quadratic(dim))
}

/// `|x|^p / p`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vd_potential_p_power(dim: usize, p: f64, out: *mut *mut VdPotential) -> VdStatus {
    potential_out(out, Potential::p_power(dim, p))
}

/// 1D potential with gradient `sign(x)|x|^(1+2/beta)`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vd_potential_signed_power(beta: f64, out: *mut *mut VdPotential) -> VdStatus {
    potential_out(out, Potential::signed_power(beta))
}

/// `(x² − 1)²/4`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vd_potential_double_well(out: *mut *mut VdPotential) -> VdStatus {
    potential_out(out, Ok::<_, String>(Potential::double_well()))
}

/// `((|x| − 1)₊)²`, zero on the closed unit ball.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vd_potential_flat_bottom(dim: usize, out: *mut *mut VdPotential) -> VdStatus {
    potential_out(out, Potential::flat_bottom(dim))
}

/// 1D polynomial with `len` coefficients in ascending order.
///
/// # Safety
/// `coeffs` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vd_potential_polynomial(coeffs: *const f64, len: usize, out: *mut *mut VdPotential) -> VdStatus {
    guard(|| {
        let c = input(coeffs, len, "coeffs")?;
        new_handle(out, VdPotential(Potential::polynomial(c.to_vec()).map_err(invalid)?))
    })
}

/// `G ≡ 0`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vd_potential_zero(dim: usize, out: *mut *mut VdPotential) -> VdStatus {
    potential_out(out, Potential::zero(dim))
}

/// # Safety
/// `p` must be a live potential handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vd_potential_dim(p: *const VdPotential, out: *mut usize) -> VdStatus {
    guard(|| put(out, handle(p, "potential")?.0.dim(), "out"))
}

/// `G(x)` with `x` of length `n`.
///
/// # Safety
/// `x` must point to `n` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn vd_potential_eval(p: *const VdPotential, x: *const f64, n: usize, out: *mut f64) -> VdStatus {
    guard(|| {
        let p = handle(p, "potential")?;
        let x = input(x, n, "x")?;
        put(out, p.0.eval(x).map_err(invalid)?, "out")
    })
}

/// `∇G(x)` written to `grad`, both of length `n`.
///
/// # Safety
/// `x` and `grad` must point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn vd_potential_grad(p: *const VdPotential, x: *const f64, n: usize, grad: *mut f64) -> VdStatus {
    guard(|| {
        let p = handle(p, "potential")?;
        let x = input(x, n, "x")?;
        let g = p.0.grad(x).map_err(invalid)?;
        output(grad, n, "grad")?.copy_from_slice(&g);
        Ok(())
    })
}

/// # Safety
/// `p` must be null or a live potential handle, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn vd_potential_free(p: *mut VdPotential) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Solves `x'' + a(t) x' + ∇G(x) = 0` on `[t0, t_end]` from `(x0, v0)`.
/// Non-positive tolerances select the defaults.
///
/// # Safety
/// `x0` and `v0` must point to `dim` doubles; handles must be live;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vd_integrate(
    schedule: *const VdSchedule,
    potential: *const VdPotential,
    x0: *const f64,
    v0: *const f64,
    dim: usize,
    t0: f64,
    t_end: f64,
    rel_tol: f64,
    abs_tol: f64,
    out: *mut *mut VdTrajectory,
) -> VdStatus {
    guard(|| {
        let s = handle(schedule, "schedule")?;
        let p = handle(potential, "potential")?;
        let x0 = input(x0, dim, "x0")?.to_vec();
        let v0 = input(v0, dim, "v0")?.to_vec();
        let mut spec = SystemSpec::new(s.0.clone(), p.0.clone(), x0, v0, t_end).with_t0(t0);
        if rel_tol > 0.0 && abs_tol > 0.0 {
            spec = spec.with_tolerances(rel_tol, abs_tol);
        }
        let traj = integrate(&spec).map_err(|e| {
            let status = match e.kind() {
                "invalid_spec" | "potential" => VdStatus::VdInvalidArgument,
                "schedule" | "out_of_range" => VdStatus::VdDomain,
                _ => VdStatus::VdSolver,
            };
            (status, format!("{}: {e}", e.kind()))
        })?;
        new_handle(out, VdTrajectory(traj))
    })
}

/// Number of stored samples.
///
/// # Safety
/// `tr` must be a live trajectory handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vd_trajectory_len(tr: *const VdTrajectory, out: *mut usize) -> VdStatus {
    guard(|| put(out, handle(tr, "trajectory")?.0.len(), "out"))
}

/// # Safety
/// As for `vd_trajectory_len`.
#[no_mangle]
pub unsafe extern "C" fn vd_trajectory_dim(tr: *const VdTrajectory, out: *mut usize) -> VdStatus {
    guard(|| put(out, handle(tr, "trajectory")?.0.dim(), "out"))
}

/// Sample `i`: time, position and velocity (`x` and `v` hold `dim` doubles).
///
/// # Safety
/// `t` must be writable; `x` and `v` must point to `dim` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn vd_trajectory_sample(tr: *const VdTrajectory, i: usize, t: *mut f64, x: *mut f64, v: *mut f64) -> VdStatus {
    guard(|| {
        let tr = &handle(tr, "trajectory")?.0;
        if i >= tr.len() {
            return Err(invalid(format!("sample {i} out of range (len {})", tr.len())));
        }
        let d = tr.dim();
        output(x, d, "x")?.copy_from_slice(tr.x_at(i));
        output(v, d, "v")?.copy_from_slice(tr.v_at(i));
        put(t, tr.times()[i], "t")
    })
}

/// Dense-output state at time `t`.
///
/// # Safety
/// `x` and `v` must point to `dim` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn vd_trajectory_eval(tr: *const VdTrajectory, t: f64, x: *mut f64, v: *mut f64) -> VdStatus {
    guard(|| {
        let tr = &handle(tr, "trajectory")?.0;
        let s = tr.dense_eval(t).map_err(domain)?;
        output(x, s.x.len(), "x")?.copy_from_slice(&s.x);
        output(v, s.v.len(), "v")?.copy_from_slice(&s.v);
        Ok(())
    })
}

/// Number of velocity sign changes found.
///
/// # Safety
/// As for `vd_trajectory_len`.
#[no_mangle]
pub unsafe extern "C" fn vd_trajectory_event_count(tr: *const VdTrajectory, out: *mut usize) -> VdStatus {
    guard(|| put(out, handle(tr, "trajectory")?.0.events.len(), "out"))
}

/// Time of event `i`.
///
/// # Safety
/// As for `vd_trajectory_len`.
#[no_mangle]
pub unsafe extern "C" fn vd_trajectory_event_time(tr: *const VdTrajectory, i: usize, out: *mut f64) -> VdStatus {
    guard(|| {
        let ev = &handle(tr, "trajectory")?.0.events;
        let e = ev
            .get(i)
            .ok_or_else(|| invalid(format!("event {i} out of range (count {})", ev.len())))?;
        put(out, e.t, "out")
    })
}

/// # Safety
/// `tr` must be null or a live trajectory handle, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn vd_trajectory_free(tr: *mut VdTrajectory) {
    if !tr.is_null() {
        drop(Box::from_raw(tr));
    }
}

/// Bessel function `J_nu(t)` for `0 <= nu <= 3`, `t >= 0`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vd_bessel_j(nu: f64, t: f64, out: *mut f64) -> VdStatus {
    guard(|| put(out, oracle::bessel_j(nu, t).map_err(domain)?, "out"))
}
